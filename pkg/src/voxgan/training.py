"""Training orchestration for the two regimes.

Plain regime: the critic takes an Adam step on every batch; the generator
steps only every `gen_interval`-th batch. Conditioned regime: critic and
encoder step on every batch (they must learn in lockstep or the system
drifts apart) and the generator again every `gen_interval`-th batch. All
randomness flows from one seeded stream carried in the state, and
checkpoints capture parameters, optimizer moments, batch permutation and
stream state, so a resumed run continues bit-identically.
"""

import copy
import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses
from .container import read_container, write_container
from .errors import ContainerError, DataError, NonFiniteError
from .models import ModelSpec, build_discriminator, build_encoder, build_generator
from .optim import Adam
from .rng import Rng, sample_normal
from .tensor import Tensor, grad, no_grad
from .voxel import VoxelGrid, stack_grids, to_signed

MODES = ("iwgan", "vae-iwgan", "vanilla-gan-baseline")

TELEMETRY_FIELDS = ("step", "epoch", "d_loss", "g_loss", "gp_term", "grad_norm_mean", "e_loss")


@dataclass
class TrainConfig:
    mode: str = "iwgan"
    batch_size: int = 16
    epochs: int = 100
    gen_interval: int = 5
    lam: float = 10.0
    delta: float = 100.0
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    lr_e: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only
    adversarial_on: str = "prior"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.gen_interval < 1:
            raise ValueError("gen_interval must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (generator batch norm)")


@dataclass
class TrainState:
    config: TrainConfig
    specs: dict
    nets: dict
    opts: dict
    rng: Rng
    step: int = 0
    epoch: int = 0
    gen_steps: int = 0
    enc_steps: int = 0
    batch_idx: int = 0
    perm: np.ndarray = None
    history: list = field(default_factory=list)


def make_specs(mode, resolution, latent_dim=200, encoder_base="voxel-encoder",
               gen_channels=None, disc_channels=None, enc_channels=None):
    specs = {
        "g": ModelSpec("generator", resolution, latent_dim, gen_channels),
        "d": ModelSpec("discriminator", resolution, latent_dim, disc_channels),
    }
    if mode == "vae-iwgan":
        specs["e"] = ModelSpec(encoder_base, resolution, latent_dim, enc_channels)
    return specs


def init_state(config, specs):
    rng = Rng(config.seed)
    nets = {"g": build_generator(specs["g"], rng), "d": build_discriminator(specs["d"], rng)}
    opts = {
        "g": Adam(nets["g"].parameters(), config.lr_g, config.beta1, config.beta2, config.adam_eps),
        "d": Adam(nets["d"].parameters(), config.lr_d, config.beta1, config.beta2, config.adam_eps),
    }
    if "e" in specs:
        nets["e"] = build_encoder(specs["e"], rng)
        opts["e"] = Adam(nets["e"].parameters(), config.lr_e, config.beta1, config.beta2,
                         config.adam_eps)
    return TrainState(config=config, specs=dict(specs), nets=nets, opts=opts, rng=rng)


# -- data preparation --------------------------------------------------------------


def prepare_dataset(dataset):
    """Signed [N,1,D,D,D] batch array from grids or a raw occupancy array."""
    if isinstance(dataset, np.ndarray):
        if dataset.ndim == 4:
            return to_signed(dataset)[:, None]
        if dataset.ndim == 5:
            return np.asarray(dataset, dtype=np.float64)
        raise DataError(f"expected [N,D,D,D] or [N,1,D,D,D] array, got {dataset.shape}")
    if len(dataset) == 0:
        raise DataError("empty dataset")
    return stack_grids(dataset)


def prepare_pairs(pairs):
    """(conditions, targets) signed arrays from (condition, target) pairs.

    Conditions may be voxel grids or [H,W] images in [0,1]; either way they
    are mapped into the [-1,1] network input range.
    """
    if len(pairs) == 0:
        raise DataError("empty paired dataset")
    conds, targets = [], []
    for cond, target in pairs:
        targets.append(to_signed(target.binarize().occupancy.astype(np.float64))[None])
        if isinstance(cond, VoxelGrid):
            conds.append(to_signed(cond.binarize().occupancy.astype(np.float64))[None])
        else:
            img = np.asarray(cond, dtype=np.float64)
            if img.ndim != 2:
                raise DataError(f"image condition must be [H,W], got {img.shape}")
            conds.append(to_signed(img)[None])
    return np.stack(conds), np.stack(targets)


def _next_indices(state, n):
    b = state.config.batch_size
    nb = n // b
    if nb < 1:
        raise DataError(f"dataset of {n} samples is smaller than one batch of {b}")
    if state.perm is None:
        state.perm = state.rng.permutation(n)
        state.batch_idx = 0
    lo = state.batch_idx * b
    idx = state.perm[lo : lo + b]
    state.batch_idx += 1
    if state.batch_idx >= nb:
        state.perm = None  # incomplete tail dropped; next call opens an epoch
        return idx, True
    return idx, False


def _guard(value, name, step):
    if not np.isfinite(value):
        raise NonFiniteError(name, step)
    return value


def _step_net(state, key, loss):
    net, opt = state.nets[key], state.opts[key]
    grads = grad(loss, [p for _, p in net.parameters()])
    named = {p: grads[p] for _, p in net.parameters()}
    opt.step(named)


# -- one batch per regime -----------------------------------------------------------


def _batch_iwgan(state, data):
    cfg = state.config
    idx, epoch_done = _next_indices(state, data.shape[0])
    real = Tensor(data[idx])
    latent = state.specs["g"].latent_dim
    z = sample_normal(state.rng, (len(idx), latent))
    with no_grad():
        fake = state.nets["g"](z, train=True)
    loss_d, diag = losses.wgan_gp_disc_loss(state.nets["d"], real, fake, state.rng,
                                            lam=cfg.lam, train=True)
    d_val = _guard(loss_d.item(), "d_loss", state.step + 1)
    _step_net(state, "d", loss_d)
    state.step += 1

    g_val = None
    if state.step % cfg.gen_interval == 0:
        z2 = sample_normal(state.rng, (len(idx), latent))
        fake2 = state.nets["g"](z2, train=True)
        loss_g = losses.wgan_gen_loss(state.nets["d"], fake2, train=True)
        g_val = _guard(loss_g.item(), "g_loss", state.step)
        _step_net(state, "g", loss_g)
        state.gen_steps += 1

    state.history.append({
        "step": state.step,
        "epoch": state.epoch,
        "d_loss": d_val,
        "g_loss": g_val,
        "gp_term": diag["penalty"],
        "grad_norm_mean": diag["grad_norm_mean"],
        "e_loss": None,
    })
    if epoch_done:
        state.epoch += 1


def _batch_vanilla(state, data):
    cfg = state.config
    idx, epoch_done = _next_indices(state, data.shape[0])
    real = Tensor(data[idx])
    latent = state.specs["g"].latent_dim
    z = sample_normal(state.rng, (len(idx), latent))
    loss_d, _ = losses.vanilla_gan_losses(state.nets["d"], state.nets["g"], real, z, train=True)
    d_val = _guard(loss_d.item(), "d_loss", state.step + 1)
    _step_net(state, "d", loss_d)
    state.step += 1

    g_val = None
    if state.step % cfg.gen_interval == 0:
        z2 = sample_normal(state.rng, (len(idx), latent))
        _, loss_g = losses.vanilla_gan_losses(state.nets["d"], state.nets["g"], real, z2,
                                              train=True)
        g_val = _guard(loss_g.item(), "g_loss", state.step)
        _step_net(state, "g", loss_g)
        state.gen_steps += 1

    state.history.append({
        "step": state.step,
        "epoch": state.epoch,
        "d_loss": d_val,
        "g_loss": g_val,
        "gp_term": None,
        "grad_norm_mean": None,
        "e_loss": None,
    })
    if epoch_done:
        state.epoch += 1


def _batch_vae(state, conds, targets):
    cfg = state.config
    idx, epoch_done = _next_indices(state, conds.shape[0])
    cond = Tensor(conds[idx])
    target = Tensor(targets[idx])
    e, g, d = state.nets["e"], state.nets["g"], state.nets["d"]

    # critic step on reconstructions decoded from encoded conditions
    with no_grad():
        code = e.encode(cond, state.rng, train=True)
        x_hat = g(code.sample, train=True)
    loss_d, diag = losses.wgan_gp_disc_loss(d, target, x_hat, state.rng, lam=cfg.lam, train=True)
    d_val = _guard(loss_d.item(), "d_loss", state.step + 1)
    _step_net(state, "d", loss_d)
    state.step += 1

    # encoder step: reconstruction + KL
    code = e.encode(cond, state.rng, train=True)
    x_hat = g(code.sample, train=True)
    enc_loss = losses.reconstruction_error(x_hat, target) + losses.kl_to_standard_normal(
        code.mu, code.log_var)
    e_val = _guard(enc_loss.item(), "e_loss", state.step)
    _step_net(state, "e", enc_loss)
    state.enc_steps += 1

    # generator step on the synchronized cadence
    g_val = None
    if state.step % cfg.gen_interval == 0:
        with no_grad():
            code = e.encode(cond, state.rng, train=True)
        x_hat = g(code.sample.detach(), train=True)
        recon = losses.reconstruction_error(x_hat, target)
        if cfg.adversarial_on == "prior":
            z = sample_normal(state.rng, (len(idx), state.specs["g"].latent_dim))
            scored = g(z, train=True)
        else:
            scored = x_hat
        loss_g = losses.critic_scores(d, scored, train=True).mean() + cfg.delta * recon
        g_val = _guard(loss_g.item(), "g_loss", state.step)
        _step_net(state, "g", loss_g)
        state.gen_steps += 1

    state.history.append({
        "step": state.step,
        "epoch": state.epoch,
        "d_loss": d_val,
        "g_loss": g_val,
        "gp_term": diag["penalty"],
        "grad_norm_mean": diag["grad_norm_mean"],
        "e_loss": e_val,
    })
    if epoch_done:
        state.epoch += 1


# -- public entry points ---------------------------------------------------------------


def train_steps(state, prepared, n_steps):
    """Advance exactly n_steps critic steps on prepared data (array or pair)."""
    for _ in range(n_steps):
        if state.config.mode == "iwgan":
            _batch_iwgan(state, prepared)
        elif state.config.mode == "vanilla-gan-baseline":
            _batch_vanilla(state, prepared)
        else:
            _batch_vae(state, prepared[0], prepared[1])
    return state


def train_iwgan(config, dataset, state=None, specs=None, on_epoch=None):
    """Train the plain regime for config.epochs full passes."""
    if config.mode not in ("iwgan", "vanilla-gan-baseline"):
        raise ValueError(f"train_iwgan drives iwgan/vanilla modes, got {config.mode!r}")
    data = prepare_dataset(dataset)
    if state is None:
        state = init_state(config, specs or make_specs(config.mode, data.shape[-1]))
    batch_fn = _batch_iwgan if config.mode == "iwgan" else _batch_vanilla
    while state.epoch < config.epochs:
        before = state.epoch
        batch_fn(state, data)
        if on_epoch is not None and state.epoch != before:
            on_epoch(state)
    return state


def train_vae_iwgan(config, pairs, state=None, specs=None, on_epoch=None):
    """Train the conditioned regime for config.epochs full passes."""
    if config.mode != "vae-iwgan":
        raise ValueError(f"train_vae_iwgan requires mode vae-iwgan, got {config.mode!r}")
    conds, targets = prepare_pairs(pairs)
    if state is None:
        base = "voxel-encoder" if conds.ndim == 5 else "image-encoder"
        state = init_state(config, specs or make_specs(config.mode, targets.shape[-1],
                                                       encoder_base=base))
    if state.specs["e"].base == "voxel-encoder" and conds.ndim != 5:
        raise DataError("voxel encoder expects voxel-grid conditions")
    if state.specs["e"].base == "image-encoder" and conds.ndim != 4:
        raise DataError("image encoder expects image conditions")
    while state.epoch < config.epochs:
        before = state.epoch
        _batch_vae(state, conds, targets)
        if on_epoch is not None and state.epoch != before:
            on_epoch(state)
    return state


# -- telemetry -------------------------------------------------------------------------


def write_telemetry(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TELEMETRY_FIELDS)
        for row in history:
            w.writerow(["" if row[k] is None else repr(row[k]) if isinstance(row[k], float)
                        else row[k] for k in TELEMETRY_FIELDS])


def epoch_mean_abs_d_loss(history):
    """Convergence signal: per-epoch mean of |critic loss|."""
    by_epoch = {}
    for row in history:
        by_epoch.setdefault(row["epoch"], []).append(abs(row["d_loss"]))
    return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


# -- checkpointing -----------------------------------------------------------------------


def checkpoint_save(state, path):
    tensors = {}
    for key, net in state.nets.items():
        for name, p in net.parameters():
            tensors[f"param.{key}.{name}"] = p.data
        for name, b in net.buffers():
            tensors[f"buf.{key}.{name}"] = b
        opt = state.opts[key]
        for name, _ in net.parameters():
            tensors[f"adam.{key}.m.{name}"] = opt.m[name]
            tensors[f"adam.{key}.v.{name}"] = opt.v[name]
    meta = {
        "kind": "checkpoint",
        "config": asdict(state.config),
        "specs": {k: s.to_config() for k, s in state.specs.items()},
        "step": state.step,
        "epoch": state.epoch,
        "gen_steps": state.gen_steps,
        "enc_steps": state.enc_steps,
        "batch_idx": state.batch_idx,
        "perm": None if state.perm is None else [int(i) for i in state.perm],
        "rng": state.rng.state(),
        "adam": {k: o.state() for k, o in state.opts.items()},
        "history": state.history,
    }
    write_container(path, meta, tensors)


def checkpoint_load(path):
    meta, tensors = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ContainerError(f"{path}: container holds {meta.get('kind')!r}, not a checkpoint")
    config = TrainConfig(**meta["config"])
    specs = {k: ModelSpec.from_config(v) for k, v in meta["specs"].items()}
    state = init_state(config, specs)
    for key, net in state.nets.items():
        for name, p in net.parameters():
            p.assign_(tensors[f"param.{key}.{name}"])
        for name, _ in net.buffers():
            net.set_buffer(name, tensors[f"buf.{key}.{name}"])
        moments_m = {name: tensors[f"adam.{key}.m.{name}"] for name, _ in net.parameters()}
        moments_v = {name: tensors[f"adam.{key}.v.{name}"] for name, _ in net.parameters()}
        state.opts[key].load_state(meta["adam"][key], moments_m, moments_v)
    state.rng.set_state(meta["rng"])
    state.step = int(meta["step"])
    state.epoch = int(meta["epoch"])
    state.gen_steps = int(meta["gen_steps"])
    state.enc_steps = int(meta["enc_steps"])
    state.batch_idx = int(meta["batch_idx"])
    state.perm = None if meta["perm"] is None else np.asarray(meta["perm"], dtype=np.int64)
    state.history = copy.deepcopy(meta["history"])
    return state
