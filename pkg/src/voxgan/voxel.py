"""Voxel grids and everything that feeds them: binvox and .vxg file I/O,
orthographic depth scanning, single-view occlusion shells, silhouette
rendering, exact lattice rotations and procedural toy shape corpora.

Conventions: grids are cubic, indexed occupancy[x, y, z] row-major; the z
axis is "up", so orientation augmentation rotates about axis 2. Depth
scans are orthographic along one signed axis; depth counts voxels from the
entry face and -1 marks rays that hit nothing.
"""

from dataclasses import dataclass, replace

import numpy as np

from .container import read_container, write_container
from .errors import DataError, ShapeError

SENTINEL = -1.0

VIEWS = ("+x", "-x", "+y", "-y", "+z", "-z")

_AXIS = {"x": 0, "y": 1, "z": 2}


@dataclass
class VoxelGrid:
    """Cubic occupancy lattice; binary {0,1} or soft [0,1] cells."""

    occupancy: np.ndarray
    class_tag: str = None
    orientation: int = None
    translate: tuple = None  # binvox header carry-through
    scale: float = None

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise DataError(f"voxel grid must be cubic, got shape {occ.shape}")
        if occ.dtype.kind in "biu":
            occ = occ.astype(np.uint8)
            if not np.isin(occ, (0, 1)).all():
                raise DataError("binary grid may contain only 0 and 1")
        else:
            occ = np.clip(occ.astype(np.float64), 0.0, 1.0)
        self.occupancy = occ
        if self.orientation is not None and not 0 <= self.orientation <= 11:
            raise DataError(f"orientation index {self.orientation} outside 0..11")

    @property
    def extent(self):
        return self.occupancy.shape[0]

    @property
    def is_binary(self):
        return self.occupancy.dtype == np.uint8

    def binarize(self, threshold=0.5):
        if self.is_binary:
            return self
        return replace(self, occupancy=(self.occupancy >= threshold).astype(np.uint8))

    def count(self):
        return int(self.binarize().occupancy.sum())


@dataclass
class DepthMap:
    """Per-pixel first-hit distance along one axis view; -1 where no hit."""

    depth: np.ndarray  # [height, width] float
    view: str
    extent: int

    def __post_init__(self):
        if self.view not in VIEWS:
            raise DataError(f"unknown view {self.view!r}; expected one of {VIEWS}")
        d = np.asarray(self.depth, dtype=np.float64)
        valid = (d == SENTINEL) | ((d >= 0) & (d <= self.extent))
        if not valid.all():
            raise DataError("depth values must lie in [0, extent] or be the sentinel")
        self.depth = d

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]


def to_signed(occupancy):
    """Map occupancy in [0,1] to the generator's tanh range [-1,1]."""
    return np.asarray(occupancy, dtype=np.float64) * 2.0 - 1.0


def from_signed(values):
    """Inverse of to_signed; clamps into [0,1]."""
    return np.clip((np.asarray(values, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


# -- binvox ----------------------------------------------------------------------
#
# Flat binvox data runs y fastest, then z, then x; reshaping to (N,N,N)
# yields axes (x,z,y), so a (0,2,1) transpose converts to this module's
# x,y,z order. Data is run-length encoded as (value, count) byte pairs
# with counts 1..255.


def _fmt_num(v):
    return str(int(v)) if float(v) == int(v) else repr(float(v))


def read_binvox(path):
    with open(path, "rb") as fh:
        line = fh.readline().strip()
        if line != b"#binvox 1":
            raise DataError(f"{path}: bad magic {line!r}")
        dims = translate = scale = None
        while True:
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: truncated header")
            parts = line.split()
            if parts[0] == b"data":
                break
            if parts[0] == b"dim":
                dims = [int(p) for p in parts[1:]]
            elif parts[0] == b"translate":
                translate = tuple(float(p) for p in parts[1:])
            elif parts[0] == b"scale":
                scale = float(parts[1])
        if dims is None or len(dims) != 3:
            raise DataError(f"{path}: missing dim line")
        if len(set(dims)) != 1:
            raise DataError(f"{path}: non-cubic dims {dims}")
        n = dims[0]
        raw = np.frombuffer(fh.read(), dtype=np.uint8)
    if raw.size % 2 != 0:
        raise DataError(f"{path}: odd RLE byte count")
    values, counts = raw[::2], raw[1::2]
    total = int(counts.sum(dtype=np.int64))
    if total > n**3:
        raise DataError(f"{path}: RLE overrun ({total} voxels for dim {n})")
    if total < n**3:
        raise DataError(f"{path}: RLE underrun ({total} voxels for dim {n})")
    flat = np.repeat(values, counts)
    occ = flat.reshape((n, n, n)).transpose(0, 2, 1)
    return VoxelGrid(
        np.ascontiguousarray(occ), translate=translate, scale=scale
    )


def write_binvox(grid, path):
    if not grid.is_binary:
        raise DataError("binvox files hold binary grids; binarize first")
    n = grid.extent
    flat = np.ascontiguousarray(grid.occupancy.transpose(0, 2, 1)).reshape(-1)
    translate = grid.translate if grid.translate is not None else (0, 0, 0)
    scale = grid.scale if grid.scale is not None else 1
    # maximal runs, chunked at the 255 count limit
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [flat.size]))
    pairs = bytearray()
    for s, e in zip(starts, ends):
        val = int(flat[s])
        run = int(e - s)
        while run > 0:
            c = min(run, 255)
            pairs.append(val)
            pairs.append(c)
            run -= c
    with open(path, "wb") as fh:
        fh.write(b"#binvox 1\n")
        fh.write(f"dim {n} {n} {n}\n".encode())
        fh.write(("translate " + " ".join(_fmt_num(t) for t in translate) + "\n").encode())
        fh.write(f"scale {_fmt_num(scale)}\n".encode())
        fh.write(b"data\n")
        fh.write(bytes(pairs))


# -- .vxg container --------------------------------------------------------------


def write_vxg(grid, path):
    meta = {
        "kind": "voxelgrid",
        "extent": grid.extent,
        "binary": bool(grid.is_binary),
        "class_tag": grid.class_tag,
        "orientation": grid.orientation,
    }
    write_container(path, meta, {"occupancy": grid.occupancy})


def read_vxg(path):
    meta, tensors = read_container(path)
    if meta.get("kind") != "voxelgrid":
        raise DataError(f"{path}: container holds {meta.get('kind')!r}, not a voxel grid")
    occ = tensors["occupancy"]
    return VoxelGrid(occ, class_tag=meta.get("class_tag"), orientation=meta.get("orientation"))


def read_grid(path):
    """Dispatch on extension: .binvox or .vxg."""
    p = str(path)
    if p.endswith(".binvox"):
        return read_binvox(p)
    if p.endswith(".vxg"):
        return read_vxg(p)
    raise DataError(f"{path}: unknown grid format (expected .binvox or .vxg)")


# -- scanning and occlusion -------------------------------------------------------


def _oriented_volume(grid, view):
    """Boolean volume with the scan axis first, flipped for negative views."""
    occ = grid.binarize().occupancy.astype(bool)
    axis = _AXIS[view[1]]
    vol = np.moveaxis(occ, axis, 0)
    if view[0] == "-":
        vol = vol[::-1]
    return vol, axis


def depth_scan(grid, view):
    """Orthographic first-hit depth along an axis view."""
    vol, _ = _oriented_volume(grid, view)
    hit = vol.any(axis=0)
    first = vol.argmax(axis=0)
    depth = np.where(hit, first.astype(np.float64), SENTINEL)
    return DepthMap(depth=depth, view=view, extent=grid.extent)


def occlude_to_grid(depthmap, extent):
    """Visible-shell grid: exactly the first-hit voxels of a depth map.

    Everything behind the shell is unknown and stays empty.
    """
    d = depthmap.depth
    if d.shape != (extent, extent):
        raise ShapeError("occlude_to_grid", d.shape, (extent, extent))
    hit = d != SENTINEL
    if hit.any() and d[hit].max() >= extent:
        raise DataError("depth out of range for requested extent")
    vol = np.zeros((extent, extent, extent), dtype=np.uint8)
    uu, vv = np.nonzero(hit)
    vol[d[hit].astype(np.int64), uu, vv] = 1
    if depthmap.view[0] == "-":
        vol = vol[::-1]
    axis = _AXIS[depthmap.view[1]]
    return VoxelGrid(np.ascontiguousarray(np.moveaxis(vol, 0, axis)))


def render_silhouette(grid, view):
    """Depth-shaded 2D image: (extent - depth) / extent on hits, 0 background."""
    dm = depth_scan(grid, view)
    hit = dm.depth != SENTINEL
    img = np.zeros_like(dm.depth)
    img[hit] = (grid.extent - dm.depth[hit]) / grid.extent
    return img


def write_pgm(depthmap, path):
    """P5 export, maxval 255; nearer is brighter, sentinel maps to 0."""
    n = depthmap.extent
    d = depthmap.depth
    img = np.zeros(d.shape, dtype=np.uint8)
    hit = d != SENTINEL
    img[hit] = np.clip(np.round(255.0 * (n - d[hit]) / n), 1, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


# -- lattice rotation --------------------------------------------------------------


def rotate90(grid, axis, turns):
    """Exact quarter-turn rotation about one lattice axis."""
    if turns not in (0, 1, 2, 3):
        raise ValueError(f"turns must be in 0..3, got {turns}")
    plane = tuple(a for a in range(3) if a != axis)
    occ = np.ascontiguousarray(np.rot90(grid.occupancy, k=turns, axes=plane))
    return replace(grid, occupancy=occ)


# -- procedural toy shapes ----------------------------------------------------------

TOY_KINDS = ("boxes", "spheres", "ells", "mixed")

_FAMILY = {"boxes": "box", "spheres": "sphere", "ells": "ell"}


def _box_occ(n, rng):
    cap = max(2, int(n * 0.6))
    while True:
        ext = rng.integers(2, cap + 1, (3,))
        if int(np.prod(ext)) * 2 <= n**3:
            break
    pos = [int(rng.integers(0, n - e + 1)) for e in ext]
    occ = np.zeros((n, n, n), dtype=np.uint8)
    occ[pos[0] : pos[0] + ext[0], pos[1] : pos[1] + ext[1], pos[2] : pos[2] + ext[2]] = 1
    return occ


def _sphere_occ(n, rng):
    r = 1.5 + rng.uniform() * (0.45 * n - 1.5)
    c = np.array([r + rng.uniform() * (n - 1 - 2 * r) for _ in range(3)])
    idx = np.indices((n, n, n)).astype(np.float64)
    dist2 = sum((idx[a] - c[a]) ** 2 for a in range(3))
    return (dist2 <= r * r).astype(np.uint8)


def _ell_occ(n, rng):
    while True:
        t = int(rng.integers(1, 3))
        la = int(rng.integers(t + 2, n))
        lb = int(rng.integers(t + 2, n))
        h = int(rng.integers(2, n))
        occ = np.zeros((n, n, n), dtype=np.uint8)
        ox = int(rng.integers(0, n - la + 1))
        oy = int(rng.integers(0, n - lb + 1))
        oz = int(rng.integers(0, n - h + 1))
        occ[ox : ox + la, oy : oy + t, oz : oz + h] = 1
        occ[ox : ox + t, oy : oy + lb, oz : oz + h] = 1
        if int(occ.sum()) * 2 <= n**3:
            return occ


_MAKERS = {"box": _box_occ, "sphere": _sphere_occ, "ell": _ell_occ}


def toy_dataset(kind, n, count, orientations, rng):
    """Procedural solid shapes in quarter-turn orientations about the z axis.

    Emits count base shapes, each in `orientations` consecutive quarter
    turns, so the result holds count * orientations grids. Pure function of
    (parameters, rng state).
    """
    if kind not in TOY_KINDS:
        raise ValueError(f"unknown toy kind {kind!r}; expected one of {TOY_KINDS}")
    if n < 8:
        raise ValueError(f"toy grids need extent >= 8, got {n}")
    if not 1 <= orientations <= 4:
        raise ValueError("orientations must be in 1..4")
    out = []
    for _ in range(count):
        if kind == "mixed":
            family = ("box", "sphere", "ell")[int(rng.integers(0, 3))]
        else:
            family = _FAMILY[kind]
        base = VoxelGrid(_MAKERS[family](n, rng), class_tag=family, orientation=0)
        for o in range(orientations):
            g = rotate90(base, axis=2, turns=o)
            out.append(replace(g, orientation=o))
    return out


def stack_grids(grids):
    """[N,1,D,D,D] signed-encoding batch array from a list of grids."""
    occ = np.stack([g.binarize().occupancy for g in grids]).astype(np.float64)
    return to_signed(occ)[:, None, :, :, :]
