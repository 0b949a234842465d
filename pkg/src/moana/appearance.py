"""Per-cell sample-set appearance model with adaptive stochastic updates.

Each grid cell stores up to ``n_max`` feature vectors.  New observations are
absorbed at a rate that follows a logistic curve in the distance to the
closest stored sample: near-duplicates are absorbed almost surely, distant
vectors almost never, and a vector exactly at the match threshold has a 50%
chance.  Cells far from the visible center of mass can additionally be
damped by a Gaussian spatial factor, which keeps loosely-framed borders from
polluting the model.  Matching a query against the model counts, per cell,
how many stored samples agree with the query in every channel group.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyCell, IoError, ParseError
from .features import FeatureGrid, FeatureLayout, VisibilityMask

_MAGIC = b"MOANAAPM"
_VERSION = 1


class AppearanceModel:
    """Sample sets for every cell of a feature grid.

    samples has shape (cells, n_max, channels); counts[u] says how many
    leading slots of cell u are in use.  Cell u maps to grid coordinates
    (x, y) = (u % width, u // width).
    """

    def __init__(self, width: int, height: int, n_max: int, layout: FeatureLayout):
        if n_max < 1:
            raise ValueError(f"n_max must be at least 1, got {n_max}")
        self.width = int(width)
        self.height = int(height)
        self.n_max = int(n_max)
        self.layout = layout
        self.samples = np.zeros((self.cells, self.n_max, layout.channels), dtype=np.float32)
        self.counts = np.zeros(self.cells, dtype=np.int64)

    @property
    def cells(self) -> int:
        return self.width * self.height

    @property
    def channels(self) -> int:
        return self.layout.channels

    def check_compatible(self, grid: FeatureGrid, mask: VisibilityMask) -> None:
        if (grid.width, grid.height, grid.channels) != (self.width, self.height, self.channels):
            raise DimensionMismatch(
                f"grid {grid.width}x{grid.height}x{grid.channels} does not fit "
                f"model {self.width}x{self.height}x{self.channels}"
            )
        if (mask.width, mask.height) != (self.width, self.height):
            raise DimensionMismatch(
                f"mask {mask.width}x{mask.height} does not fit model {self.width}x{self.height}"
            )


def _sigmoid(x: np.ndarray | float):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def learning_rate(sample_set: np.ndarray, observed: np.ndarray, tau_f: float) -> float:
    """Absorption probability for one cell from its closest stored sample.

    Returns 1 / (1 + exp(min_k ||observed - sample_k|| - tau_f)), treating
    all channels as one group.  Exactly 0.5 when the closest sample sits at
    the threshold.
    """
    sample_set = np.asarray(sample_set, dtype=np.float64)
    if sample_set.ndim != 2 or sample_set.shape[0] == 0:
        raise EmptyCell("learning rate needs at least one stored sample")
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape != (sample_set.shape[1],):
        raise DimensionMismatch(
            f"observed vector has {observed.shape} channels, samples have {sample_set.shape[1]}"
        )
    dmin = float(np.min(np.linalg.norm(sample_set - observed[None, :], axis=1)))
    return float(_sigmoid(tau_f - dmin))


def spatial_learning_rate(
    sample_set: np.ndarray,
    observed: np.ndarray,
    tau_f: float,
    u: tuple[float, float],
    u_c: tuple[float, float],
    width: int,
    height: int,
) -> float:
    """Learning rate damped by a Gaussian in the cell's distance from u_c.

    The base rate is multiplied by exp(-||u - u_c||^2 / (2 (w^2 + h^2))),
    with cell coordinates in cell units.
    """
    base = learning_rate(sample_set, observed, tau_f)
    d2 = (u[0] - u_c[0]) ** 2 + (u[1] - u_c[1]) ** 2
    return base * math.exp(-d2 / (2.0 * (width**2 + height**2)))


def _group_margins(model: AppearanceModel, flat: np.ndarray, cell_idx: np.ndarray) -> np.ndarray:
    """Best-sample margin per cell: min over samples of the worst group margin.

    For stored sample k in cell u the margin is
    max over groups g of (||f(u) - m_k(u)||_g - tau_f_g); the cell margin is
    the minimum over its stored samples.  A margin of 0 means the best
    stored sample sits exactly at its worst group's threshold.
    """
    samples = model.samples[cell_idx].astype(np.float64)  # (m, n_max, C)
    diff = samples - flat[cell_idx, None, :].astype(np.float64)
    margins = np.full(diff.shape[:2], -np.inf)
    for group in model.layout.groups:
        dist = np.sqrt(np.sum(diff[:, :, group.channels] ** 2, axis=2))
        margins = np.maximum(margins, dist - group.tau_f)
    slot = np.arange(model.n_max)[None, :]
    margins[slot >= model.counts[cell_idx][:, None]] = np.inf
    return margins.min(axis=1)


def update_model(
    model: AppearanceModel,
    grid: FeatureGrid,
    mask: VisibilityMask,
    rng: np.random.Generator,
    spatial: bool = True,
) -> None:
    """Absorb one observation into the model, cell by cell.

    Visible empty cells take the vector unconditionally.  Visible non-empty
    cells accept it with probability equal to the (optionally spatially
    damped) learning rate; partially-filled cells append, full cells replace
    a uniformly random slot.  Randomness is consumed in ascending cell order
    so results are reproducible for a fixed generator state.
    """
    model.check_compatible(grid, mask)
    flat = grid.values.reshape(model.cells, model.channels)
    visible = mask.bits.reshape(model.cells)
    visible_idx = np.flatnonzero(visible)
    if visible_idx.size == 0:
        return

    empty = visible_idx[model.counts[visible_idx] == 0]
    occupied = visible_idx[model.counts[visible_idx] > 0]

    # Unconditional insertion into empty cells consumes no randomness.
    if empty.size:
        model.samples[empty, 0] = flat[empty]
        model.counts[empty] = 1

    if occupied.size == 0:
        return

    alpha = _sigmoid(-_group_margins(model, flat, occupied))
    if spatial:
        xs = visible_idx % model.width
        ys = visible_idx // model.width
        cx, cy = float(xs.mean()), float(ys.mean())
        ox = occupied % model.width
        oy = occupied // model.width
        d2 = (ox - cx) ** 2 + (oy - cy) ** 2
        alpha = alpha * np.exp(-d2 / (2.0 * (model.width**2 + model.height**2)))

    accepted = occupied[rng.random(occupied.size) < alpha]
    if accepted.size == 0:
        return

    full = accepted[model.counts[accepted] == model.n_max]
    partial = accepted[model.counts[accepted] < model.n_max]
    if partial.size:
        model.samples[partial, model.counts[partial]] = flat[partial]
        model.counts[partial] += 1
    if full.size:
        slots = rng.integers(0, model.n_max, size=full.size)
        model.samples[full, slots] = flat[full]


def similarity(model: AppearanceModel, grid: FeatureGrid, mask: VisibilityMask) -> float:
    """Fraction of stored samples matching the query, over visible cells.

    A stored sample matches when every channel group's Euclidean distance is
    strictly below that group's threshold.  The match count is normalized by
    (visible non-empty cells) * n_max; with no such cells the score is 0.
    """
    model.check_compatible(grid, mask)
    flat = grid.values.reshape(model.cells, model.channels)
    visible = mask.bits.reshape(model.cells) & (model.counts > 0)
    cell_idx = np.flatnonzero(visible)
    d_eff = cell_idx.size
    if d_eff == 0:
        return 0.0

    diff = model.samples[cell_idx] - flat[cell_idx, None, :]  # float32 (m, n_max, C)
    ok = np.ones(diff.shape[:2], dtype=bool)
    for group in model.layout.groups:
        sq = np.sum(diff[:, :, group.channels].astype(np.float64) ** 2, axis=2)
        ok &= sq < group.tau_f * group.tau_f
    slot = np.arange(model.n_max)[None, :]
    ok &= slot < model.counts[cell_idx][:, None]
    return float(ok.sum()) / float(d_eff * model.n_max)


def averaged_model(model: AppearanceModel) -> np.ndarray:
    """Mean stored vector per cell as an (height, width, channels) image.

    Empty cells come out as zeros; useful for eyeballing what the model has
    absorbed.
    """
    sums = model.samples.sum(axis=1, dtype=np.float64)
    denom = np.maximum(model.counts, 1).astype(np.float64)[:, None]
    mean = sums / denom
    mean[model.counts == 0] = 0.0
    return mean.reshape(model.height, model.width, model.channels).astype(np.float32)


_FEATURE_BITS = {"rgb": 1, "lbp": 2, "grad": 4}


def save_model(model: AppearanceModel, path: str | Path) -> None:
    """Dump a model to a plain binary file.

    Layout: magic, version, then little-endian u32 header
    (cells, n_max, channels, width, height, feature flags) followed by the
    per-group thresholds (float64), per-cell counts (u16) and the stored
    vectors (float32, count * channels per cell).
    """
    flags = 0
    for name in model.layout.features:
        flags |= _FEATURE_BITS[name]
    taus = {g.name: g.tau_f for g in model.layout.groups}
    header = struct.pack(
        "<8sB6I3d",
        _MAGIC,
        _VERSION,
        model.cells,
        model.n_max,
        model.channels,
        model.width,
        model.height,
        flags,
        taus.get("color", 0.0),
        taus.get("texture", 0.0),
        taus.get("edge", 0.0),
    )
    chunks = [header, model.counts.astype("<u2").tobytes()]
    for u in range(model.cells):
        c = int(model.counts[u])
        if c:
            chunks.append(model.samples[u, :c].astype("<f4").tobytes())
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"could not write model dump {path}: {exc}") from exc


def load_model(path: str | Path) -> AppearanceModel:
    """Read a model dump written by :func:`save_model`."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"could not read model dump {path}: {exc}") from exc

    head_size = struct.calcsize("<8sB6I3d")
    if len(blob) < head_size:
        raise ParseError(f"model dump {path} is truncated")
    magic, version, cells, n_max, channels, width, height, flags, tau_c, tau_t, tau_e = struct.unpack(
        "<8sB6I3d", blob[:head_size]
    )
    if magic != _MAGIC or version != _VERSION:
        raise ParseError(f"{path} is not a model dump this version understands")
    features = tuple(name for name, bit in _FEATURE_BITS.items() if flags & bit)
    layout = FeatureLayout.build(features, {"color": tau_c, "texture": tau_t, "edge": tau_e})
    if layout.channels != channels or cells != width * height:
        raise ParseError(f"model dump {path} header is inconsistent")

    model = AppearanceModel(width, height, n_max, layout)
    offset = head_size
    counts = np.frombuffer(blob, dtype="<u2", count=cells, offset=offset).astype(np.int64)
    offset += 2 * cells
    for u in range(cells):
        c = int(counts[u])
        if c:
            vecs = np.frombuffer(blob, dtype="<f4", count=c * channels, offset=offset)
            model.samples[u, :c] = vecs.reshape(c, channels)
            offset += 4 * c * channels
    model.counts = counts
    return model
