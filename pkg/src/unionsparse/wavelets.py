"""Orthonormal Haar transforms and parent-child grouping for tree sparsity.

The 1-d pyramid stores ``[approx | d_L | d_{L-1} | ... | d_1]``.  Under a
full decomposition the detail coefficients form a binary heap: the children
of flat index ``f`` (``1 <= f < p/2``) are ``2f`` and ``2f + 1``, and index
0 holds the scaling coefficient.  The 2-d transform is separable with the
usual quadrant layout and a quadtree per detail subband.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .solver import MeasurementEnsemble, RecoveryResult, SolverConfig, recover
from .subspaces import GroupStructure, from_groups

__all__ = [
    "WaveletLayout",
    "haar_analyze",
    "haar_synthesize",
    "haar_analyze_2d",
    "haar_synthesize_2d",
    "parent_child_groups_1d",
    "parent_child_groups_2d",
    "measure_group_sparsity",
    "blocks_signal",
    "piecewise_constant_signal",
    "tree_recovery_structure",
    "recover_in_wavelet_domain",
]

_SQRT2 = math.sqrt(2.0)

# Jump locations (as fractions of the length) and heights of the classic
# piecewise-constant "blocks" test signal.
_BLOCKS_POSITIONS = (0.10, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81)
_BLOCKS_HEIGHTS = (4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2)


def _check_pow2(n: int, what: str) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return int(math.log2(n))


@dataclass(frozen=True)
class WaveletLayout:
    """Coefficient geometry of a (full or partial) Haar decomposition."""

    shape: tuple[int, ...]
    levels: int

    def __post_init__(self):
        if len(self.shape) not in (1, 2):
            raise ValueError("layout supports 1-d or 2-d signals")
        maxlev = min(_check_pow2(n, "signal extent") for n in self.shape)
        if not 1 <= self.levels <= maxlev:
            raise ValueError(f"levels must lie in 1..{maxlev}")

    @property
    def p(self) -> int:
        return int(np.prod(self.shape))

    @property
    def is_full(self) -> bool:
        return self.levels == min(int(math.log2(n)) for n in self.shape)

    def scaling_indices(self) -> np.ndarray:
        """Flat indices of the approximation coefficients."""
        if len(self.shape) == 1:
            return np.arange(self.shape[0] >> self.levels)
        rows, cols = self.shape
        r, c = rows >> self.levels, cols >> self.levels
        grid = np.arange(r)[:, None] * cols + np.arange(c)[None, :]
        return grid.ravel()


def haar_analyze(signal, levels: int | None = None) -> np.ndarray:
    """Multilevel orthonormal Haar pyramid of a 1-d signal."""
    signal = np.asarray(signal, dtype=float)
    maxlev = _check_pow2(signal.shape[0], "signal length")
    levels = maxlev if levels is None else levels
    if not 0 <= levels <= maxlev:
        raise ValueError(f"levels must lie in 0..{maxlev}")
    a = signal.copy()
    details = []
    for _ in range(levels):
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / _SQRT2)
        a = (even + odd) / _SQRT2
    return np.concatenate([a] + details[::-1]) if details else a


def haar_synthesize(coeffs, levels: int | None = None) -> np.ndarray:
    """Inverse of :func:`haar_analyze`."""
    coeffs = np.asarray(coeffs, dtype=float)
    maxlev = _check_pow2(coeffs.shape[0], "coefficient length")
    levels = maxlev if levels is None else levels
    if not 0 <= levels <= maxlev:
        raise ValueError(f"levels must lie in 0..{maxlev}")
    p = coeffs.shape[0]
    a = coeffs[: p >> levels].copy()
    for lev in range(levels, 0, -1):
        d = coeffs[p >> lev: p >> (lev - 1)]
        out = np.empty(2 * a.shape[0])
        out[0::2] = (a + d) / _SQRT2
        out[1::2] = (a - d) / _SQRT2
        a = out
    return a


def haar_analyze_2d(image, levels: int | None = None) -> np.ndarray:
    """Separable 2-d Haar transform with quadrant layout, orthonormal."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("expected a 2-d array")
    maxlev = min(_check_pow2(n, "image extent") for n in image.shape)
    levels = maxlev if levels is None else levels
    if not 0 <= levels <= maxlev:
        raise ValueError(f"levels must lie in 0..{maxlev}")
    out = image.copy()
    r, c = image.shape
    for _ in range(levels):
        block = out[:r, :c]
        lo = (block[:, 0::2] + block[:, 1::2]) / _SQRT2
        hi = (block[:, 0::2] - block[:, 1::2]) / _SQRT2
        cols = np.hstack([lo, hi])
        lo = (cols[0::2, :] + cols[1::2, :]) / _SQRT2
        hi = (cols[0::2, :] - cols[1::2, :]) / _SQRT2
        out[:r, :c] = np.vstack([lo, hi])
        r, c = r // 2, c // 2
    return out


def haar_synthesize_2d(coeffs, levels: int | None = None) -> np.ndarray:
    """Inverse of :func:`haar_analyze_2d`."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 2:
        raise ValueError("expected a 2-d array")
    maxlev = min(_check_pow2(n, "image extent") for n in coeffs.shape)
    levels = maxlev if levels is None else levels
    if not 0 <= levels <= maxlev:
        raise ValueError(f"levels must lie in 0..{maxlev}")
    out = coeffs.copy()
    R, C = coeffs.shape
    sizes = [(R >> lev, C >> lev) for lev in range(levels, 0, -1)]
    for r, c in sizes:
        block = out[: 2 * r, : 2 * c].copy()
        lo, hi = block[:r, :], block[r:, :]
        rows = np.empty_like(block)
        rows[0::2, :] = (lo + hi) / _SQRT2
        rows[1::2, :] = (lo - hi) / _SQRT2
        lo, hi = rows[:, :c], rows[:, c:]
        cols = np.empty_like(block)
        cols[:, 0::2] = (lo + hi) / _SQRT2
        cols[:, 1::2] = (lo - hi) / _SQRT2
        out[: 2 * r, : 2 * c] = cols
    return out


def parent_child_groups_1d(p: int, levels: int | None = None) -> GroupStructure:
    """One group per parent-child edge among the detail coefficients.

    Requires a full decomposition (the edge-count formula assumes the
    complete binary detail tree); yields ``M = p - 2`` groups of size 2.
    A parent appears in one group per child, so the structure overlaps.
    The degenerate ``p = 2`` tree has no edges and falls back to the lone
    coarsest-detail singleton.
    """
    maxlev = _check_pow2(p, "signal length")
    levels = maxlev if levels is None else levels
    if levels != maxlev:
        raise ValueError("parent-child grouping needs the full decomposition")
    if p == 1:
        raise ValueError("signal length 1 has no detail coefficients")
    if p == 2:
        return GroupStructure(p=p, groups=((1,),))
    groups = []
    for f in range(1, p // 2):
        groups.append((f, 2 * f))
        groups.append((f, 2 * f + 1))
    return GroupStructure(p=p, groups=tuple(groups))


def _subband_origins(rows: int, cols: int, level: int):
    r, c = rows >> level, cols >> level
    return {"h": (0, c), "v": (r, 0), "d": (r, c)}


def parent_child_groups_2d(rows: int, cols: int, levels: int | None = None) -> GroupStructure:
    """Quadtree parent-child pairs of the 2-d detail subbands.

    Each parent coefficient pairs with each of its four children, giving
    four groups of size 2 per internal node per subband (h, v, d).  With a
    single level there are no edges; the three detail singletons are
    returned instead.
    """
    maxlev = min(_check_pow2(rows, "rows"), _check_pow2(cols, "cols"))
    levels = maxlev if levels is None else levels
    if levels != maxlev:
        raise ValueError("parent-child grouping needs the full decomposition")
    groups = []
    if levels == 1:
        for orow, ocol in _subband_origins(rows, cols, 1).values():
            groups.append((orow * cols + ocol,))
        return GroupStructure(p=rows * cols, groups=tuple(groups))
    for band in ("h", "v", "d"):
        for lev in range(levels, 1, -1):
            por, poc = _subband_origins(rows, cols, lev)[band]
            cor, coc = _subband_origins(rows, cols, lev - 1)[band]
            for r in range(rows >> lev):
                for c in range(cols >> lev):
                    parent = (por + r) * cols + (poc + c)
                    for dr in (0, 1):
                        for dc in (0, 1):
                            child = (cor + 2 * r + dr) * cols + (coc + 2 * c + dc)
                            groups.append((parent, child))
    return GroupStructure(p=rows * cols, groups=tuple(groups))


def measure_group_sparsity(coeffs, tol_factor: float = 1e-9) -> int:
    """Smallest number of parent-child pairs covering the nonzero details.

    Greedy deepest-first edge cover on the detail heap; exact on trees.
    The scaling coefficient is excluded (it is never penalized).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    p = coeffs.shape[0]
    _check_pow2(p, "coefficient length")
    details = np.abs(coeffs[1:])
    if details.size == 0 or details.max() == 0.0:
        return 0
    tol = tol_factor * details.max()
    support = {f for f in range(1, p) if abs(coeffs[f]) > tol}
    covered = set()
    k = 0
    for f in sorted(support, reverse=True):
        if f in covered or f == 1:
            continue
        covered.add(f)
        covered.add(f // 2)
        k += 1
    if 1 in support and 1 not in covered:
        k += 1  # root pairs with one of its children
    return k


def blocks_signal(p: int) -> np.ndarray:
    """The classic piecewise-constant blocks test signal, sampled at p points."""
    _check_pow2(p, "signal length")
    t = np.arange(p) / p
    x = np.zeros(p)
    for pos, h in zip(_BLOCKS_POSITIONS, _BLOCKS_HEIGHTS):
        x += h * (t >= pos)
    return x


def piecewise_constant_signal(p: int, n_jumps: int, rng: np.random.Generator) -> np.ndarray:
    """Random piecewise-constant signal with the given number of jumps.

    Jump locations are uniform without replacement and each piece amplitude
    is uniform on [-1, 1].
    """
    _check_pow2(p, "signal length")
    if not 0 <= n_jumps < p:
        raise ValueError("need 0 <= n_jumps < p")
    jumps = np.sort(rng.choice(np.arange(1, p), size=n_jumps, replace=False))
    amps = rng.uniform(-1.0, 1.0, size=n_jumps + 1)
    x = np.empty(p)
    edges = np.concatenate([[0], jumps, [p]])
    for i in range(n_jumps + 1):
        x[edges[i]:edges[i + 1]] = amps[i]
    return x


def tree_recovery_structure(shape):
    """Pairs plus unpenalized scaling singletons, ready for the solver.

    Returns ``(structure, weights, pairs)`` where ``structure`` covers every
    coordinate (parent-child pairs followed by scaling singletons),
    ``weights`` carries penalty weight 1 for pairs and 0 for scaling
    singletons, and ``pairs`` is the bare pair structure.
    """
    if len(shape) == 1:
        pairs = parent_child_groups_1d(shape[0])
    else:
        pairs = parent_child_groups_2d(shape[0], shape[1])
    layout = WaveletLayout(shape=tuple(shape), levels=min(int(math.log2(n)) for n in shape))
    scaling = [(int(i),) for i in layout.scaling_indices()]
    groups = pairs.groups + tuple(scaling)
    weights = np.concatenate([np.ones(pairs.M), np.zeros(len(scaling))])
    return GroupStructure(p=layout.p, groups=groups), weights, pairs


def recover_in_wavelet_domain(signal, phi, mode: str = "exact", delta: float | None = None,
                              cfg: SolverConfig | None = None) -> RecoveryResult:
    """Measure the Haar coefficients of a signal and recover it by group lasso.

    The coefficient vector is measured through ``phi``, recovered with the
    parent-child grouping (scaling coefficients left unpenalized), and
    synthesized back.  The returned ``x_hat`` and ``rel_err`` live in the
    signal domain.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.ndim not in (1, 2):
        raise ValueError("expected a 1-d signal or 2-d image")
    coeffs = haar_analyze(signal) if signal.ndim == 1 else haar_analyze_2d(signal)
    flat = coeffs.ravel()
    structure, weights, _ = tree_recovery_structure(signal.shape)
    model = from_groups(structure)
    design = phi.matrix if isinstance(phi, MeasurementEnsemble) else np.asarray(phi, dtype=float)
    y = design @ flat
    result = recover(y, design, model, mode=mode, delta=delta, cfg=cfg,
                     x_true=flat, penalty_weights=weights)
    if signal.ndim == 1:
        x_hat = haar_synthesize(result.x_hat)
    else:
        x_hat = haar_synthesize_2d(result.x_hat.reshape(signal.shape))
    signorm = float(np.linalg.norm(signal))
    err = float(np.linalg.norm(x_hat - signal))
    rel_err = err / signorm if signorm > 0 else err
    return replace(result, x_hat=x_hat, rel_err=rel_err,
                   success=result.success and rel_err < 1e-3)
