"""Training objectives.

The improved-Wasserstein critic loss penalizes the critic's input-gradient
norm away from 1 on straight-line interpolates between real and generated
samples (mixing coefficient uniform per sample); differentiating it w.r.t.
critic weights therefore requires double backward. The variational losses
pair a squared-distance reconstruction term (summed per sample, averaged
over the batch) with the analytic Gaussian KL term.
"""

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .layers import BatchNorm
from .rng import sample_normal, sample_uniform
from .tensor import Tensor, grad, no_grad


def critic_scores(disc, x, train=False):
    """Run the critic and flatten its per-sample score to shape [B]."""
    try:
        y = disc(x, train=train)
    except TypeError:
        y = disc(x)
    if y.size != x.shape[0]:
        raise ShapeError("critic_scores", y.shape, (x.shape[0],), "one score per sample")
    return T.reshape(y, (x.shape[0],))


def _check_no_batchnorm(disc):
    modules = getattr(disc, "modules", None)
    if callable(modules) and any(isinstance(m, BatchNorm) for m in modules()):
        raise ValueError("gradient penalty requires a critic without batch norm")


def wgan_gp_disc_loss(disc, real, fake, rng, lam=10.0, train=False, eps=None):
    """Critic loss: mean D(fake) - mean D(real) + lam * mean (|grad D| - 1)^2.

    Interpolates are eps*real + (1-eps)*fake with per-sample eps ~ U[0,1)
    drawn from rng (pass eps explicitly to pin the mixing points). Returns
    (loss, diagnostics); diagnostics carries the three loss terms and the
    mean interpolate gradient norm as plain floats.
    """
    if real.shape != fake.shape:
        raise ShapeError("wgan_gp_disc_loss", real.shape, fake.shape)
    _check_no_batchnorm(disc)
    batch = real.shape[0]
    if eps is None:
        eps = sample_uniform(rng, (batch,) + (1,) * (real.ndim - 1))
    else:
        eps = Tensor(np.asarray(eps, dtype=np.float64).reshape((batch,) + (1,) * (real.ndim - 1)))
    with no_grad():
        mix = eps * real + (1.0 - eps) * fake
    x_hat = Tensor(mix.data, requires_grad=True)

    d_hat_sum = critic_scores(disc, x_hat, train).sum()
    g = grad(d_hat_sum, [x_hat], create_graph=True)[x_hat]
    grad_norm = T.sqrt((g * g).sum(axis=tuple(range(1, g.ndim))))
    penalty = ((grad_norm - 1.0) ** 2).mean()

    fake_term = critic_scores(disc, fake, train).mean()
    real_term = critic_scores(disc, real, train).mean()
    loss = fake_term - real_term + lam * penalty
    diag = {
        "fake_term": fake_term.item(),
        "real_term": real_term.item(),
        "penalty": penalty.item(),
        "grad_norm_mean": grad_norm.mean().item(),
    }
    return loss, diag


def wgan_gen_loss(disc, fake, train=False):
    """Generator objective: maximize the critic score on generated samples."""
    return -critic_scores(disc, fake, train).mean()


def vanilla_gan_losses(disc, gen, real, z, train=True):
    """Original minimax GAN losses, kept as a stability baseline.

    The critic's raw score is squashed through a sigmoid; probabilities are
    clamped at 1e-7 before the logs.
    """
    fake = gen(z, train=train)
    p_real = T.clip(T.sigmoid(critic_scores(disc, real, train)), 1e-7, 1.0 - 1e-7)
    p_fake = T.clip(T.sigmoid(critic_scores(disc, fake, train)), 1e-7, 1.0 - 1e-7)
    disc_loss = -(T.log(p_real)).mean() - (T.log(1.0 - p_fake)).mean()
    gen_loss = (T.log(1.0 - p_fake)).mean()
    return disc_loss, gen_loss


def kl_to_standard_normal(mu, log_var):
    """KL[N(mu, diag exp(log_var)) || N(0, I)], summed per sample, batch mean."""
    per_sample = 0.5 * (T.exp(log_var) + mu * mu - 1.0 - log_var).sum(axis=1)
    return per_sample.mean()


def reconstruction_error(x_hat, x):
    """Squared Euclidean distance over the grid, mean-reduced over the batch."""
    if x_hat.shape != x.shape:
        raise ShapeError("reconstruction_error", x_hat.shape, x.shape)
    diff = x_hat - x
    return (diff * diff).sum(axis=tuple(range(1, diff.ndim))).mean()


def vae_losses(encoder, gen, disc, condition, target, rng, delta=100.0,
               adversarial_on="prior", train=True):
    """Encoder and generator objectives for the conditioned variant.

    encoder loss: reconstruction + KL. generator loss: critic score plus
    delta-weighted reconstruction; the critic sees a decode of a fresh
    normal latent by default ("prior"), or the reconstruction itself when
    adversarial_on="reconstruction".
    """
    code = encoder.encode(condition, rng, train=train)
    x_hat = gen(code.sample, train=train)
    recon = reconstruction_error(x_hat, target)
    kl = kl_to_standard_normal(code.mu, code.log_var)
    encoder_loss = recon + kl

    if adversarial_on == "prior":
        z = sample_normal(rng, (condition.shape[0], code.mu.shape[1]))
        scored = gen(z, train=train)
    elif adversarial_on == "reconstruction":
        scored = x_hat
    else:
        raise ValueError(f"adversarial_on must be 'prior' or 'reconstruction', got {adversarial_on!r}")
    generator_loss = critic_scores(disc, scored, train).mean() + delta * recon
    return encoder_loss, generator_loss
