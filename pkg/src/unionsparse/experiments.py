"""Monte-Carlo harnesses: scenario generators, phase sweeps, width and lemma oracles.

Everything here is seed-deterministic: trials derive their streams from
``seed XOR trial`` (or a seed sequence keyed on the trial index), and
aggregation runs in trial order regardless of worker scheduling.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .atoms import _cone_distance_sq, dual_norm, minimize_gamma
from .bounds import theorem2_bound
from .solver import MeasurementEnsemble, SolverConfig, recover, solve_lasso
from .subspaces import (
    GroupStructure,
    SparseSignal,
    SubspaceModel,
    SupportSet,
    from_groups,
    sigma_min,
)
from .wavelets import haar_analyze, haar_synthesize, piecewise_constant_signal, tree_recovery_structure

__all__ = [
    "ScenarioSpec",
    "generate_signal",
    "PhaseRow",
    "PhaseDiagram",
    "run_phase",
    "WidthEstimate",
    "estimate_width_ub",
    "ChisqMaxCheck",
    "verify_chisq_max",
    "BallBoundCheck",
    "verify_ball_bound",
    "ProjectionEnergyCheck",
    "verify_projection_energy",
    "NoiseSweepRow",
    "NoiseSweepResult",
    "run_noise_sweep",
]

SCENARIO_KINDS = ("no_overlap", "partial_overlap", "random_overlap", "custom")
VALUE_DISTS = ("uniform01", "uniform_pm1")


def _rng(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def _parallel_map(fn, jobs, threads: int):
    if threads <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one signal-generation scenario.

    ``no_overlap`` lays M disjoint blocks of size B (p = M B).
    ``partial_overlap`` shares ``overlap`` coordinates between neighbours
    (p = (M-1)(B-overlap) + B).  ``random_overlap`` keeps the first M/2
    groups disjoint and draws the rest uniformly from the same index range.
    ``custom`` takes an explicit group structure.
    """

    kind: str
    M: int = 0
    B: int = 0
    k: int = 1
    overlap: int = 0
    value_dist: str = "uniform01"
    seed: int = 0
    groups: GroupStructure | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.value_dist not in VALUE_DISTS:
            raise ValueError(f"unknown value distribution {self.value_dist!r}")
        if self.kind == "custom":
            if self.groups is None:
                raise ValueError("custom scenario needs an explicit group structure")
            if self.k > self.groups.M:
                raise ValueError("k cannot exceed the number of groups")
            return
        if self.M < 1 or self.B < 1:
            raise ValueError("M and B must be positive")
        if self.k > self.M:
            raise ValueError("k cannot exceed M")
        if not 0 <= self.overlap < self.B:
            raise ValueError("overlap must satisfy 0 <= overlap < B")
        if self.kind == "random_overlap" and self.M % 2:
            raise ValueError("random_overlap needs an even number of groups")

    @property
    def p(self) -> int:
        if self.kind == "custom":
            return self.groups.p
        if self.kind == "no_overlap":
            return self.M * self.B
        if self.kind == "partial_overlap":
            return (self.M - 1) * (self.B - self.overlap) + self.B
        return (self.M // 2) * self.B

    def label(self) -> str:
        if self.kind == "custom":
            return f"custom(M={self.groups.M},p={self.groups.p},k={self.k})"
        return f"{self.kind}(M={self.M},B={self.B},k={self.k},o={self.overlap})"


def _scenario_groups(spec: ScenarioSpec, rng: np.random.Generator) -> GroupStructure:
    if spec.kind == "custom":
        return spec.groups
    if spec.kind == "no_overlap":
        groups = tuple(tuple(range(i * spec.B, (i + 1) * spec.B)) for i in range(spec.M))
        return GroupStructure(p=spec.p, groups=groups)
    if spec.kind == "partial_overlap":
        stride = spec.B - spec.overlap
        groups = tuple(tuple(range(i * stride, i * stride + spec.B)) for i in range(spec.M))
        return GroupStructure(p=spec.p, groups=groups)
    half = spec.M // 2
    groups = [tuple(range(i * spec.B, (i + 1) * spec.B)) for i in range(half)]
    for _ in range(half, spec.M):
        idx = np.sort(rng.choice(spec.p, size=spec.B, replace=False))
        groups.append(tuple(int(i) for i in idx))
    return GroupStructure(p=spec.p, groups=tuple(groups))


def generate_signal(spec: ScenarioSpec):
    """Draw the group structure and a k-group-sparse signal for a scenario.

    Active groups are chosen uniformly at random and their latent values
    drawn from the scenario's distribution; overlapping active groups add
    up on shared coordinates.  Returns ``(SparseSignal, GroupStructure)``.
    """
    rng = _rng(spec.seed)
    structure = _scenario_groups(spec, rng)
    M = structure.M
    active = np.sort(rng.choice(M, size=spec.k, replace=False))
    x = np.zeros(structure.p)
    latents = []
    for j in active:
        idx = np.asarray(structure.groups[j], dtype=int)
        if spec.value_dist == "uniform01":
            vals = rng.uniform(0.0, 1.0, size=idx.size)
        else:
            vals = rng.uniform(-1.0, 1.0, size=idx.size)
        latents.append(vals)
        x[idx] += vals
    signal = SparseSignal(x=x, active=tuple(int(j) for j in active), latents=tuple(latents))
    return signal, structure


@dataclass(frozen=True)
class PhaseRow:
    trial: int
    seed: int
    n: int
    method: str
    scenario: str
    rel_err: float
    success: bool
    iters: int
    runtime_ms: float


@dataclass(frozen=True)
class CellStats:
    n: int
    trials: int
    success_rate: float
    mean_rel_err: float
    mean_runtime_ms: float


@dataclass(frozen=True)
class PhaseDiagram:
    """Per-trial phase-sweep records plus per-measurement-count aggregates."""

    scenario: str
    method: str
    rows: tuple[PhaseRow, ...]

    def cells(self) -> dict[int, CellStats]:
        by_n: dict[int, list[PhaseRow]] = {}
        for row in self.rows:
            by_n.setdefault(row.n, []).append(row)
        out = {}
        for n, rows in sorted(by_n.items()):
            errs = np.array([r.rel_err for r in rows])
            out[n] = CellStats(
                n=n,
                trials=len(rows),
                success_rate=float(np.mean([r.success for r in rows])),
                mean_rel_err=float(np.mean(np.where(np.isfinite(errs), errs, np.nan))),
                mean_runtime_ms=float(np.mean([r.runtime_ms for r in rows])),
            )
        return out

    def success_rate(self, n: int) -> float:
        return self.cells()[n].success_rate

    def n_star(self, level: float = 0.9) -> int | None:
        """Smallest measurement count on the grid reaching the success level."""
        for n, cell in self.cells().items():
            if cell.success_rate >= level:
                return n
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "seed", "n", "method", "scenario",
                             "rel_err", "success", "iters", "runtime_ms"])
            for r in self.rows:
                writer.writerow([r.trial, r.seed, r.n, r.method, r.scenario,
                                 f"{r.rel_err:.12g}", int(r.success), r.iters,
                                 f"{r.runtime_ms:.3f}"])


def _phase_trial(spec: ScenarioSpec, n: int, trial: int, seed: int, method: str,
                 cfg: SolverConfig | None) -> PhaseRow:
    tseed = seed ^ trial
    signal, structure = generate_signal(replace(spec, seed=tseed))
    phi = MeasurementEnsemble.gaussian(n, structure.p, tseed)
    y = phi.matrix @ signal.x
    start = time.perf_counter()
    try:
        if method == "glasso":
            res = recover(y, phi, from_groups(structure), mode="exact", cfg=cfg,
                          x_true=signal.x)
        elif method == "lasso":
            res = solve_lasso(y, phi, mode="exact", cfg=cfg, x_true=signal.x)
        else:
            raise ValueError(f"unknown method {method!r}")
        rel_err, success, iters = res.rel_err, res.success, res.iterations
    except RuntimeError:
        # solver divergence is recorded, not fatal
        rel_err, success, iters = float("inf"), False, 0
    runtime_ms = 1000.0 * (time.perf_counter() - start)
    return PhaseRow(trial=trial, seed=tseed, n=n, method=method,
                    scenario=spec.label(), rel_err=rel_err, success=success,
                    iters=iters, runtime_ms=runtime_ms)


def run_phase(spec: ScenarioSpec, n_values, trials: int, method: str = "glasso",
              seed: int = 0, cfg: SolverConfig | None = None,
              threads: int = 1) -> PhaseDiagram:
    """Monte-Carlo success-probability sweep over measurement counts.

    Every (n, trial) cell draws an independent signal and ensemble from the
    trial-derived seed, so two runs with the same seed produce identical
    rows regardless of the thread count.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    jobs = [(int(n), t) for n in n_values for t in range(trials)]
    rows = _parallel_map(lambda job: _phase_trial(spec, job[0], job[1], seed, method, cfg),
                         jobs, threads)
    return PhaseDiagram(scenario=spec.label(), method=method, rows=tuple(rows))


@dataclass(frozen=True)
class WidthEstimate:
    """Monte-Carlo width-squared estimates for a group-sparse descent cone.

    ``mean_dist_sq`` averages the exact squared distance from a standard
    Gaussian draw to the normal cone; ``construction_mean`` averages the
    squared distance to the particular cone point built from the inactive
    maximum and the unit dual certificate, which upper-bounds the exact
    distance draw by draw.
    """

    mean_dist_sq: float
    stderr: float
    construction_mean: float
    construction_stderr: float
    trials: int


def estimate_width_ub(x_star: SparseSignal, structure: GroupStructure, trials: int,
                      seed: int = 0, chunk: int = 2000) -> WidthEstimate:
    """Estimate the Gaussian width bound of the exact-recovery cone by Monte Carlo."""
    if not structure.is_disjoint():
        raise ValueError("width estimation requires disjoint groups (unsupported structure)")
    active = sorted(set(x_star.active))
    inactive = [j for j in range(structure.M) if j not in set(active)]
    act_idx = [np.asarray(structure.groups[j], dtype=int) for j in active]
    inact_idx = [np.asarray(structure.groups[j], dtype=int) for j in inactive]
    x = np.asarray(x_star.x, dtype=float)
    dirs = []
    for j, idx in zip(active, act_idx):
        nrm = np.linalg.norm(x[idx])
        if nrm == 0:
            raise ValueError(f"active group {j} has a zero block in x_star")
        dirs.append(x[idx] / nrm)
    k = len(active)
    rng = _rng(seed)
    exact_parts, constr_parts = [], []
    remaining = trials
    while remaining > 0:
        m = min(chunk, remaining)
        W = rng.standard_normal((m, structure.p))
        inner = np.empty((m, k))
        sa = np.zeros(m)
        for col, (idx, u) in enumerate(zip(act_idx, dirs)):
            block = W[:, idx]
            inner[:, col] = block @ u
            sa += np.einsum("ij,ij->i", block, block)
        m_in = np.empty((m, len(inact_idx)))
        for col, idx in enumerate(inact_idx):
            m_in[:, col] = np.linalg.norm(W[:, idx], axis=1)
        gamma = minimize_gamma(inner, m_in)
        exact_parts.append(_cone_distance_sq(gamma, inner, sa, m_in))
        t = m_in.max(axis=1, initial=0.0)
        constr_parts.append(t * t * k - 2.0 * t * inner.sum(axis=1) + sa)
        remaining -= m
    exact = np.concatenate(exact_parts)
    constr = np.concatenate(constr_parts)
    return WidthEstimate(
        mean_dist_sq=float(exact.mean()),
        stderr=float(exact.std(ddof=1) / math.sqrt(trials)),
        construction_mean=float(constr.mean()),
        construction_stderr=float(constr.std(ddof=1) / math.sqrt(trials)),
        trials=trials,
    )


@dataclass(frozen=True)
class ChisqMaxCheck:
    L: int
    d: int
    trials: int
    empirical_mean: float
    stderr: float
    bound: float
    passed: bool


def verify_chisq_max(L: int, d: int, trials: int, seed: int = 0) -> ChisqMaxCheck:
    """Check the expected maximum of L chi-squared(d) draws against its bound.

    The bound is ``(sqrt(2 log L) + sqrt(d))^2``; the check passes when the
    empirical mean stays below it by more than -3 standard errors.
    """
    if L < 1 or d < 1 or trials < 2:
        raise ValueError("need L >= 1, d >= 1, trials >= 2")
    rng = _rng(seed)
    maxima = np.empty(trials)
    done = 0
    step = max(1, min(trials, 200_000 // L))
    while done < trials:
        m = min(step, trials - done)
        maxima[done:done + m] = rng.chisquare(d, size=(m, L)).max(axis=1)
        done += m
    mean = float(maxima.mean())
    stderr = float(maxima.std(ddof=1) / math.sqrt(trials))
    bound = (math.sqrt(2.0 * math.log(L)) + math.sqrt(d)) ** 2
    return ChisqMaxCheck(L=L, d=d, trials=trials, empirical_mean=mean,
                         stderr=stderr, bound=bound, passed=mean <= bound + 3 * stderr)


@dataclass(frozen=True)
class BallBoundCheck:
    k: int
    sigma_star: float
    bound: float
    max_ratio: float
    trials: int
    passed: bool


def verify_ball_bound(model: SubspaceModel, support: SupportSet, trials: int,
                      seed: int = 0) -> BallBoundCheck:
    """Check ``||v|| <= sqrt(k) sigma(K*) ||v||_dual`` on randomly supported vectors.

    Draws latent Gaussian coefficients on the supported subspaces and
    reports the largest observed ratio ``||v|| / ||v||_dual`` against the
    bound (as stated, with the restricted smallest singular value as a
    multiplier; exercised on perpendicular models where it equals 1).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = _rng(seed)
    sigma_star = sigma_min(model, support)
    k = support.k
    bound = math.sqrt(k) * sigma_star
    max_ratio = 0.0
    for _ in range(trials):
        v = np.zeros(model.p)
        for j in support.active:
            v += model.bases[j] @ rng.standard_normal(model.dims[j])
        dn = dual_norm(v, model)
        if dn == 0:
            continue
        max_ratio = max(max_ratio, float(np.linalg.norm(v)) / dn)
    return BallBoundCheck(k=k, sigma_star=sigma_star, bound=bound,
                          max_ratio=max_ratio, trials=trials,
                          passed=max_ratio <= bound * (1.0 + 1e-9))


@dataclass(frozen=True)
class ProjectionEnergyCheck:
    size_S: int
    mc_mean: float
    stderr: float
    exact: float
    upper: float
    trials: int
    passed: bool


def verify_projection_energy(model: SubspaceModel, S, trials: int,
                             seed: int = 0) -> ProjectionEnergyCheck:
    """Check the restricted latent-energy identity and its conditioning bound.

    For a standard Gaussian ``w`` and minimum-norm latents
    ``w_bar = K^T (K K^T)^{-1} w``, the expected energy of the restricted
    reconstruction ``K_S w_bar_S`` equals the Frobenius norm squared of
    ``(K K^T)^{-1} K P_S K^T`` and is at most ``kappa(K)^2 |S|``.
    """
    S = np.asarray(S, dtype=int)
    if trials < 2:
        raise ValueError("need at least two trials")
    K = model.concatenation
    total = K.shape[1]
    if S.size and (S.min() < 0 or S.max() >= total):
        raise ValueError("S indexes latent coordinates outside the model")
    G = K @ K.T
    kappa = float(model.singular_values[0] / model.singular_values[-1])
    upper = kappa**2 * S.size
    if S.size == 0:
        return ProjectionEnergyCheck(size_S=0, mc_mean=0.0, stderr=0.0,
                                     exact=0.0, upper=0.0, trials=trials, passed=True)
    K_S = K[:, S]
    exact = float(np.linalg.norm(np.linalg.solve(G, K_S @ K_S.T), "fro") ** 2)
    rng = _rng(seed)
    W = rng.standard_normal((trials, model.p))
    Z = np.linalg.solve(G, W.T)
    latent_S = K_S.T @ Z
    E = K_S @ latent_S
    energies = np.einsum("ij,ij->j", E, E)
    mc_mean = float(energies.mean())
    stderr = float(energies.std(ddof=1) / math.sqrt(trials))
    passed = abs(mc_mean - exact) <= 3 * stderr and exact <= upper * (1.0 + 1e-9)
    return ProjectionEnergyCheck(size_S=int(S.size), mc_mean=mc_mean, stderr=stderr,
                                 exact=exact, upper=upper, trials=trials, passed=passed)


@dataclass(frozen=True)
class NoiseSweepRow:
    sigma: float
    method: str
    mean_rel_err: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class NoiseSweepResult:
    rows: tuple[NoiseSweepRow, ...]
    ordering_ok: tuple[bool, ...]
    sigmas: tuple[float, ...]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sigma", "method", "mean_rel_err", "stderr", "trials"])
            for r in self.rows:
                writer.writerow([f"{r.sigma:.12g}", r.method,
                                 f"{r.mean_rel_err:.12g}", f"{r.stderr:.12g}", r.trials])


def _noise_trial(job, p, n, jumps, seed, cfg):
    sigma, trial = job
    tseed = seed ^ trial
    rng = _rng(tseed, 1)
    signal = piecewise_constant_signal(p, jumps, rng)
    coeffs = haar_analyze(signal)
    phi = MeasurementEnsemble.gaussian(n, p, tseed)
    theta = sigma * _rng(tseed, 2, int(1e6 * sigma)).standard_normal(n)
    y = phi.matrix @ coeffs + theta
    delta = float(np.linalg.norm(theta))
    mode = "exact" if sigma == 0.0 else "noisy"
    structure, weights, _ = tree_recovery_structure((p,))
    res_g = recover(y, phi, from_groups(structure), mode=mode, delta=delta,
                    cfg=cfg, penalty_weights=weights)
    res_l = solve_lasso(y, phi, mode=mode, delta=delta, cfg=cfg)
    signorm = float(np.linalg.norm(signal))
    err_g = float(np.linalg.norm(haar_synthesize(res_g.x_hat) - signal)) / signorm
    err_l = float(np.linalg.norm(haar_synthesize(res_l.x_hat) - signal)) / signorm
    return err_g, err_l


# The sweep compares the penalized estimates themselves: a least-squares
# refit would fit noise on the zero-truth partner of every active pair and
# blur the comparison.
_SWEEP_CFG = SolverConfig(debias=False)


def run_noise_sweep(sigmas, trials: int, p: int = 1024, n: int = 256, jumps: int = 5,
                    seed: int = 0, cfg: SolverConfig | None = None, threads: int = 1,
                    require_ordering: bool = True) -> NoiseSweepResult:
    """Compare lasso to the parent-child group lasso across noise levels.

    Piecewise-constant signals are measured in the Haar domain with additive
    Gaussian noise of the given standard deviations.  The group-lasso error
    curve is expected to stay at or below the lasso curve at every noise
    level; with ``require_ordering`` a violation beyond two combined
    standard errors raises.
    """
    sigmas = tuple(float(s) for s in sigmas)
    cfg = cfg or _SWEEP_CFG
    jobs = [(sigma, t) for sigma in sigmas for t in range(trials)]
    results = _parallel_map(lambda job: _noise_trial(job, p, n, jumps, seed, cfg),
                            jobs, threads)
    rows = []
    ordering = []
    for i, sigma in enumerate(sigmas):
        block = results[i * trials:(i + 1) * trials]
        g = np.array([b[0] for b in block])
        l = np.array([b[1] for b in block])
        se_g = float(g.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        se_l = float(l.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        rows.append(NoiseSweepRow(sigma=sigma, method="glasso",
                                  mean_rel_err=float(g.mean()), stderr=se_g, trials=trials))
        rows.append(NoiseSweepRow(sigma=sigma, method="lasso",
                                  mean_rel_err=float(l.mean()), stderr=se_l, trials=trials))
        ordering.append(bool(g.mean() <= l.mean() + 2.0 * math.hypot(se_g, se_l)))
    result = NoiseSweepResult(rows=tuple(rows), ordering_ok=tuple(ordering), sigmas=sigmas)
    if require_ordering and not all(ordering):
        bad = [s for s, ok in zip(sigmas, ordering) if not ok]
        raise RuntimeError(f"group lasso error exceeded the lasso at sigma = {bad}")
    return result
