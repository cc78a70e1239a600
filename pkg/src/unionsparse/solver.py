"""Latent group lasso solvers.

Recovery programs over a union of subspaces reduce, by replication of the
coefficients, to a non-overlapping group lasso on a latent design whose
column block ``i`` is ``design @ K_i``.  The penalized problems

    0.5 ||y - A v||^2 + lam * sum_G w_G ||v_G||

are solved with an accelerated proximal gradient method (fixed step 1/L,
momentum restart on objective increase).  Equality- and noise-constrained
recovery runs a descending-lambda continuation with warm starts, selecting
the first lambda whose (debiased) residual meets the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .subspaces import SubspaceModel

__all__ = [
    "MeasurementEnsemble",
    "SolverConfig",
    "PenalizedSolution",
    "RecoveryResult",
    "replicate",
    "group_prox",
    "lambda_max",
    "solve_penalized",
    "recover",
    "solve_lasso",
]

SUCCESS_REL_ERR = 1e-3
EXACT_RESIDUAL_FACTOR = 1e-6
DEBIAS_NORM_FACTOR = 1e-8
CERTIFICATE_TOL = 1e-6

# cheap partial solves warm the walk; the full budget is spent only where a
# lambda is about to be selected
_PATH_MAX_ITERS = 150
_PATH_TOL = 1e-7


@dataclass(frozen=True)
class MeasurementEnsemble:
    """An ``n x p`` measurement matrix, by default i.i.d. Gaussian.

    Gaussian ensembles are regenerated deterministically from
    ``(seed, n, p)`` using a counter-based Philox stream, so trials are
    reproducible across platforms.  Entries have mean 0 and variance 1/n.
    """

    n: int
    p: int
    matrix: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (self.n, self.p):
            raise ValueError(f"matrix must have shape ({self.n}, {self.p})")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def gaussian(cls, n: int, p: int, seed: int) -> "MeasurementEnsemble":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, p])))
        matrix = rng.standard_normal((n, p)) / math.sqrt(n)
        return cls(n=n, p=p, matrix=matrix, seed=seed)

    @classmethod
    def from_matrix(cls, matrix) -> "MeasurementEnsemble":
        matrix = np.asarray(matrix, dtype=float)
        return cls(n=matrix.shape[0], p=matrix.shape[1], matrix=matrix)


@dataclass(frozen=True)
class SolverConfig:
    """Continuation and proximal-gradient settings.

    ``lambda_grid`` may be given explicitly (strictly descending positive
    reals); by default a grid of ``grid_points`` values is log-spaced from
    the null-solution threshold ``lambda_max`` down to
    ``grid_floor * lambda_max``.  The step size is fixed at ``1 / L`` with
    ``L = sigma_max(design)^2``, computed once per problem.
    """

    lambda_grid: tuple[float, ...] | None = None
    grid_points: int = 30
    grid_floor: float = 1e-8
    max_iters: int = 500
    tol: float = 1e-9
    debias: bool = True

    def __post_init__(self):
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if not grid:
                raise ValueError("lambda grid must be nonempty")
            if any(v <= 0 for v in grid):
                raise ValueError("lambda grid values must be positive")
            if any(a <= b for a, b in zip(grid[1:], grid)):
                raise ValueError("lambda grid must be strictly descending")
            object.__setattr__(self, "lambda_grid", grid)
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.grid_floor < 1:
            raise ValueError("grid_floor must lie in (0, 1)")


@dataclass(frozen=True)
class PenalizedSolution:
    """Latent minimizer of one penalized problem plus convergence metadata."""

    latent: np.ndarray
    objective: float
    iterations: int
    converged: bool
    certificate: float


@dataclass(frozen=True)
class RecoveryResult:
    """Outcome of a continuation recovery run.

    ``success`` requires the residual target to have been met and, when the
    truth is supplied, a relative error below ``1e-3``.  ``grid_exhausted``
    flags runs where no lambda on the grid met the residual target; the best
    (lowest-residual) point is then returned.
    """

    x_hat: np.ndarray
    latent: tuple[np.ndarray, ...]
    rel_err: float | None
    residual: float
    lambda_selected: float
    iterations: int
    success: bool
    grid_exhausted: bool
    certificate: float

    def as_dict(self) -> dict:
        return {
            "x_hat": self.x_hat.tolist(),
            "latent": [v.tolist() for v in self.latent],
            "rel_err": self.rel_err,
            "residual": self.residual,
            "lambda_selected": self.lambda_selected,
            "iterations": self.iterations,
            "success": self.success,
            "grid_exhausted": self.grid_exhausted,
            "certificate": self.certificate,
        }


def _design_of(phi) -> np.ndarray:
    if isinstance(phi, MeasurementEnsemble):
        return phi.matrix
    return np.asarray(phi, dtype=float)


def replicate(design, model: SubspaceModel):
    """Latent design and latent group partition for the replication reduction.

    Column block ``i`` of the latent design is ``design @ K_i``; the latent
    groups are the consecutive blocks of sizes ``d_1 .. d_M``.  Solving the
    non-overlapping group lasso on the latents and mapping back through the
    bases solves the original overlapping/subspace problem.
    """
    design = np.asarray(design, dtype=float)
    if design.shape[1] != model.p:
        raise ValueError(f"design has {design.shape[1]} columns, expected {model.p}")
    if model.groups is not None:
        flat = np.concatenate([np.asarray(g, dtype=int) for g in model.groups.groups])
        latent_design = np.ascontiguousarray(design[:, flat])
    else:
        latent_design = np.hstack([design @ b for b in model.bases])
    sizes = np.asarray(model.dims, dtype=int)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    latent_groups = [np.arange(offsets[i], offsets[i + 1]) for i in range(model.M)]
    return latent_design, latent_groups


def _as_blocks(groups, dim: int):
    """Validate a disjoint partition and reduce it to contiguous blocks.

    Returns ``(perm, sizes, offsets, contiguous)`` where ``perm`` reorders
    latent coordinates group by group; ``contiguous`` is True when the
    partition already lists consecutive ascending blocks so the permutation
    can be skipped.
    """
    idx = [np.asarray(g, dtype=int) for g in groups]
    sizes = np.array([g.size for g in idx], dtype=int)
    if any(s == 0 for s in sizes):
        raise ValueError("groups must be nonempty")
    perm = np.concatenate(idx)
    if (perm.size != dim or perm.min() < 0 or perm.max() >= dim
            or np.bincount(perm, minlength=dim).max(initial=0) > 1):
        raise ValueError("groups must form a disjoint partition of the latent coordinates")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    contiguous = bool(np.array_equal(perm, np.arange(dim)))
    return perm, sizes, offsets, contiguous


def _block_norms(v: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    sums = np.add.reduceat(v * v, offsets[:-1])
    return np.sqrt(sums)


def _block_prox(v: np.ndarray, thresholds: np.ndarray, sizes: np.ndarray,
                offsets: np.ndarray) -> np.ndarray:
    norms = _block_norms(v, offsets)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > thresholds, 1.0 - thresholds / np.where(norms > 0, norms, 1.0), 0.0)
    return v * np.repeat(scale, sizes)


def group_prox(v, threshold: float, groups) -> np.ndarray:
    """Proximal operator of ``threshold * sum_G ||v_G||`` for disjoint groups.

    Each block is shrunk by the factor ``max(0, 1 - threshold / ||v_G||)``;
    blocks at or below the threshold are zeroed.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    perm, sizes, offsets, contiguous = _as_blocks(groups, v.size)
    if contiguous:
        return _block_prox(v, np.full(sizes.size, float(threshold)), sizes, offsets)
    out = np.empty_like(v)
    out[perm] = _block_prox(v[perm], np.full(sizes.size, float(threshold)), sizes, offsets)
    return out


def lambda_max(y, design, groups, weights=None) -> float:
    """Smallest penalty at which the all-zero latent solves the penalized problem.

    Equals ``max_G ||(design^T y)_G|| / w_G`` over the penalized groups.
    Unpenalized groups (weight 0) are first fit by least squares and their
    contribution removed from ``y``.
    """
    design = _design_of(design)
    y = np.asarray(y, dtype=float)
    perm, sizes, offsets, contiguous = _as_blocks(groups, design.shape[1])
    A = design if contiguous else design[:, perm]
    w = np.ones(sizes.size) if weights is None else np.asarray(weights, dtype=float)
    r = y
    free = w <= 0
    if free.any():
        cols = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in np.where(free)[0]])
        coef, *_ = np.linalg.lstsq(A[:, cols], y, rcond=None)
        r = y - A[:, cols] @ coef
    corr = _block_norms(A.T @ r, offsets)
    pen = ~free
    if not pen.any():
        return 0.0
    return float((corr[pen] / w[pen]).max())


def _fista(A, y, sizes, offsets, lam, weights, L, x0, max_iters, tol, trace=None):
    """Monotone FISTA on contiguous blocks.

    Returns ``(x, objective, iters, converged, residual)``.  Convergence is
    declared when the relative objective change falls below ``tol`` and the
    prox-gradient fixed-point certificate is within ``CERTIFICATE_TOL``; a
    small objective change alone on a flat stretch does not qualify.
    ``trace``, when given, collects the objective of every accepted iterate.
    """
    thresholds = lam * weights / L
    x = np.array(x0, dtype=float)
    Ax = A @ x

    def objective(xv, Axv):
        r = Axv - y
        rsq = float(r @ r)
        return 0.5 * rsq + lam * float(weights @ _block_norms(xv, offsets)), math.sqrt(rsq)

    obj, resid = objective(x, Ax)
    if trace is not None:
        trace.append(obj)
    x_prev, Ax_prev = x, Ax
    t_prev = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        t = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev * t_prev))
        beta = (t_prev - 1.0) / t
        yv = x + beta * (x - x_prev)
        Ay = Ax + beta * (Ax - Ax_prev)
        grad = A.T @ (Ay - y)
        cand = _block_prox(yv - grad / L, thresholds, sizes, offsets)
        Acand = A @ cand
        obj_cand, resid_cand = objective(cand, Acand)
        if obj_cand > obj:
            # momentum took the objective up: restart from the last iterate
            t = 1.0
            grad = A.T @ (Ax - y)
            cand = _block_prox(x - grad / L, thresholds, sizes, offsets)
            Acand = A @ cand
            obj_cand, resid_cand = objective(cand, Acand)
        if not np.isfinite(obj_cand):
            raise RuntimeError("objective diverged (step size misconfiguration)")
        x_prev, Ax_prev = x, Ax
        x, Ax = cand, Acand
        t_prev = t
        drop = obj - obj_cand
        obj, resid = obj_cand, resid_cand
        if trace is not None:
            trace.append(obj)
        if abs(drop) <= tol * max(obj, 1e-30):
            if _certificate(A, y, x, sizes, offsets, lam, weights, L) <= CERTIFICATE_TOL:
                converged = True
                break
    return x, obj, it, converged, resid


def _certificate(A, y, x, sizes, offsets, lam, weights, L):
    grad = A.T @ (A @ x - y)
    step = _block_prox(x - grad / L, lam * weights / L, sizes, offsets)
    return float(np.linalg.norm(step - x) / max(1.0, np.linalg.norm(x)))


def solve_penalized(y, design, latent_groups, lam: float, cfg: SolverConfig | None = None,
                    weights=None, x0=None, L: float | None = None,
                    trace=None) -> PenalizedSolution:
    """Minimize ``0.5 ||y - A v||^2 + lam sum_G w_G ||v_G||`` over the latents.

    Runs accelerated proximal gradient with momentum restart on objective
    increase until the relative objective change drops below ``cfg.tol`` or
    ``cfg.max_iters`` is reached.  The returned certificate is the relative
    displacement of one extra prox-gradient step at the solution; ``trace``
    collects the objective of every accepted iterate when given.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    cfg = cfg or SolverConfig()
    A = _design_of(design)
    y = np.asarray(y, dtype=float)
    perm, sizes, offsets, contiguous = _as_blocks(latent_groups, A.shape[1])
    if not contiguous:
        A = A[:, perm]
    w = np.ones(sizes.size) if weights is None else np.asarray(weights, dtype=float)
    if L is None:
        L = float(np.linalg.norm(A, 2) ** 2)
    L = max(L, 1e-30)
    start = np.zeros(A.shape[1]) if x0 is None else np.asarray(x0, dtype=float)
    if not contiguous:
        start = start[perm]
    x, obj, iters, converged, _ = _fista(A, y, sizes, offsets, lam, w, L, start,
                                         cfg.max_iters, cfg.tol, trace=trace)
    cert = _certificate(A, y, x, sizes, offsets, lam, w, L)
    if not contiguous:
        out = np.empty_like(x)
        out[perm] = x
        x = out
    return PenalizedSolution(latent=x, objective=obj, iterations=iters,
                             converged=converged, certificate=cert)


def _debias(A, y, latent, sizes, offsets, weights):
    """Least-squares refit on the active latent blocks (shrinkage removal).

    Active blocks are those with norm above ``1e-8`` of the largest block
    norm; unpenalized blocks are always admitted.
    """
    norms = _block_norms(latent, offsets)
    top = norms.max(initial=0.0)
    active = norms > DEBIAS_NORM_FACTOR * top
    active |= weights <= 0
    if not active.any():
        return np.zeros_like(latent)
    cols = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in np.where(active)[0]])
    coef, *_ = np.linalg.lstsq(A[:, cols], y, rcond=None)
    out = np.zeros_like(latent)
    out[cols] = coef
    return out


def _continuation(y, A, sizes, offsets, weights, cfg, target):
    """Walk a descending lambda grid with warm starts.

    Selects the first (hence smallest solved) lambda whose penalized
    solution has data residual at or below ``target``; the debiasing refit,
    when enabled, is applied to the selected point afterwards.  When no grid
    point meets the target the lowest-residual point seen is used instead
    and ``grid_exhausted`` is set.
    """
    ynorm = float(np.linalg.norm(y))
    m = sizes.size
    if ynorm == 0.0:
        zero = np.zeros(A.shape[1])
        return zero, 0.0, 0.0, 0, False, 0.0
    L = float(np.linalg.norm(A, 2) ** 2)
    groups_contig = [np.arange(offsets[i], offsets[i + 1]) for i in range(m)]
    lam_top = lambda_max(y, A, groups_contig, weights)
    if lam_top <= 0:
        # y is orthogonal to every penalized column block
        latent = _debias(A, y, np.zeros(A.shape[1]), sizes, offsets, weights) \
            if (weights <= 0).any() else np.zeros(A.shape[1])
        resid = float(np.linalg.norm(y - A @ latent))
        return latent, resid, 0.0, 0, resid > target, 0.0
    if cfg.lambda_grid is not None:
        grid = np.asarray(cfg.lambda_grid, dtype=float)
    else:
        grid = np.geomspace(lam_top, lam_top * cfg.grid_floor, cfg.grid_points)
    warm = np.zeros(A.shape[1])
    if (weights <= 0).any():
        warm = _debias(A, y, warm, sizes, offsets, weights)
    best = (np.inf, warm, float(grid[0]))
    iters_total = 0
    selected = None
    path_iters = min(cfg.max_iters, _PATH_MAX_ITERS)
    path_tol = max(cfg.tol, _PATH_TOL)
    trigger = max(10.0 * target, 1e-12 * ynorm)
    for lam in grid:
        x, _, iters, converged, resid = _fista(
            A, y, sizes, offsets, lam, weights, L, warm, path_iters, path_tol
        )
        iters_total += iters
        if resid <= trigger and not (converged and cfg.tol >= path_tol):
            x, _, iters, converged, resid = _fista(
                A, y, sizes, offsets, lam, weights, L, x, cfg.max_iters, cfg.tol
            )
            iters_total += iters
        warm = x
        if resid < best[0]:
            best = (resid, x, float(lam))
        if converged and resid <= target:
            selected = (x, float(lam))
            break
    exhausted = selected is None
    if exhausted:
        _, x, lam = best
    else:
        x, lam = selected
    cert = _certificate(A, y, x, sizes, offsets, lam, weights, L)
    cand = _debias(A, y, x, sizes, offsets, weights) if cfg.debias else x
    resid = float(np.linalg.norm(y - A @ cand))
    return cand, resid, lam, iters_total, exhausted, cert


def _finish(latent, sizes, offsets, synthesize, residual, lam, iters, exhausted,
            cert, x_true):
    x_hat = synthesize(latent)
    blocks = tuple(latent[offsets[i]:offsets[i + 1]].copy() for i in range(sizes.size))
    rel_err = None
    success = not exhausted
    if x_true is not None:
        x_true = np.asarray(x_true, dtype=float)
        tnorm = float(np.linalg.norm(x_true))
        err = float(np.linalg.norm(x_hat - x_true))
        rel_err = err / tnorm if tnorm > 0 else err
        success = success and rel_err < SUCCESS_REL_ERR
    return RecoveryResult(
        x_hat=x_hat,
        latent=blocks,
        rel_err=rel_err,
        residual=residual,
        lambda_selected=lam,
        iterations=iters,
        success=success,
        grid_exhausted=exhausted,
        certificate=cert,
    )


def _residual_target(mode: str, delta, ynorm: float) -> float:
    if mode == "exact":
        return EXACT_RESIDUAL_FACTOR * ynorm
    if mode == "noisy":
        if delta is None or delta < 0:
            raise ValueError("noisy mode needs a nonnegative delta")
        return float(delta)
    raise ValueError(f"unknown mode {mode!r}")


def recover(y, phi, model: SubspaceModel, mode: str = "exact", delta: float | None = None,
            cfg: SolverConfig | None = None, x_true=None, penalty_weights=None) -> RecoveryResult:
    """Recover a subspace-sparse signal from compressive measurements.

    Parameters
    ----------
    y : array, length n
        Observed measurements.
    phi : MeasurementEnsemble or array
        Measurement operator with ``model.p`` columns.
    model : SubspaceModel
        Known union of subspaces (or group structure).
    mode : ``"exact"`` or ``"noisy"``
        Exact mode targets a residual of ``1e-6 ||y||``; noisy mode targets
        ``delta``.
    x_true : array, optional
        Ground truth; fills in ``rel_err`` and the success flag.
    penalty_weights : array of length M, optional
        Per-group penalty weights; weight 0 leaves a block unpenalized.
    """
    cfg = cfg or SolverConfig()
    design = _design_of(phi)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.shape[0]:
        raise ValueError("y length does not match the number of measurement rows")
    A, latent_groups = replicate(design, model)
    sizes = np.asarray(model.dims, dtype=int)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    w = np.ones(model.M) if penalty_weights is None else np.asarray(penalty_weights, dtype=float)
    if w.shape != (model.M,):
        raise ValueError("penalty_weights must have one entry per group")
    target = _residual_target(mode, delta, float(np.linalg.norm(y)))

    if model.groups is not None:
        flat = np.concatenate([np.asarray(g, dtype=int) for g in model.groups.groups])

        def synthesize(latent):
            x = np.zeros(model.p)
            np.add.at(x, flat, latent)
            return x
    else:
        def synthesize(latent):
            x = np.zeros(model.p)
            for i, b in enumerate(model.bases):
                x += b @ latent[offsets[i]:offsets[i + 1]]
            return x

    latent, resid, lam, iters, exhausted, cert = _continuation(
        y, A, sizes, offsets, w, cfg, target
    )
    return _finish(latent, sizes, offsets, synthesize, resid, lam, iters,
                   exhausted, cert, x_true)


def solve_lasso(y, phi, mode: str = "exact", delta: float | None = None,
                cfg: SolverConfig | None = None, x_true=None) -> RecoveryResult:
    """Baseline lasso recovery (singleton groups on the raw coordinates)."""
    cfg = cfg or SolverConfig()
    design = _design_of(phi)
    y = np.asarray(y, dtype=float)
    p = design.shape[1]
    sizes = np.ones(p, dtype=int)
    offsets = np.arange(p + 1)
    target = _residual_target(mode, delta, float(np.linalg.norm(y)))
    latent, resid, lam, iters, exhausted, cert = _continuation(
        y, design, sizes, offsets, np.ones(p), cfg, target
    )
    return _finish(latent, sizes, offsets, lambda v: v.copy(), resid, lam, iters,
                   exhausted, cert, x_true)
