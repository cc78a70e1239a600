"""Closed-form sample-complexity bounds for union-of-subspaces recovery.

All logarithms are natural.  Bounds are returned as real numbers; callers
round up to an integer measurement count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "theorem1_bound",
    "perpendicular_bound",
    "theorem2_bound",
    "theorem2_upper",
    "lasso_bound",
    "noisy_bound",
    "BoundReport",
    "bound_report",
]


def _check_mkb(M: int, k: int, B: int) -> None:
    if k < 0:
        raise ValueError("k must be nonnegative")
    if B < 1:
        raise ValueError("B must be at least 1")
    if k > 0 and M <= k:
        raise ValueError(f"need M > k, got M = {M}, k = {k}")


def _core(M: int, k: int, B: int) -> float:
    return (math.sqrt(2.0 * math.log(M - k)) + math.sqrt(B)) ** 2


def theorem1_bound(
    M: int,
    k: int,
    B: int,
    sigma_star: float = 1.0,
    sigma_full: float = 1.0,
    kappa: float = 1.0,
) -> float:
    """Sufficient Gaussian measurements for a k-of-M subspace-sparse signal.

    Evaluates ``2 (sigma_star/sigma_full)^2 (sqrt(2 log(M-k)) + sqrt(B))^2 k
    + 2 k B kappa^2``.  ``sigma_star`` and ``sigma_full`` are the smallest
    singular values of the restricted and full basis concatenations and
    ``kappa`` the condition number of the full concatenation; they are taken
    as explicit inputs so the formula is testable independently of any SVD.
    """
    _check_mkb(M, k, B)
    if sigma_full <= 0:
        raise ValueError("sigma_full must be positive")
    if k == 0:
        return 0.0
    ratio = (sigma_star / sigma_full) ** 2
    return 2.0 * ratio * _core(M, k, B) * k + 2.0 * k * B * kappa**2


def perpendicular_bound(M: int, k: int, B: int) -> float:
    """Tighter bound for mutually perpendicular subspaces:
    ``k (sqrt(2 log(M-k)) + sqrt(B))^2 + k B``."""
    _check_mkb(M, k, B)
    if k == 0:
        return 0.0
    return _core(M, k, B) * k + k * B


def theorem2_bound(M: int, k: int, B: int) -> float:
    """Group-lasso bound for a k-group-sparse signal in M groups.

    Identical to :func:`perpendicular_bound`; the group case is the
    perpendicular specialization.
    """
    return perpendicular_bound(M, k, B)


def theorem2_upper(M: int, k: int, B: int) -> float:
    """Looser closed form ``2 k max(2 log M, B) + k B`` used for lasso comparison."""
    _check_mkb(M, k, B)
    if k == 0:
        return 0.0
    return 2.0 * k * max(2.0 * math.log(M), float(B)) + k * B


def lasso_bound(s: int, p: int) -> float:
    """Standard lasso baseline ``(2 s + 1) log(p - s)`` for an s-sparse signal."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if p <= s:
        raise ValueError(f"need p > s, got p = {p}, s = {s}")
    return (2.0 * s + 1.0) * math.log(p - s)


def noisy_bound(base_bound: float, epsilon: float) -> float:
    """Inflated measurement count ``base / (1 - epsilon)^2`` for noisy recovery.

    With this many measurements the estimate from the noise-relaxed program
    satisfies ``||x_hat - x*|| <= 2 delta / epsilon`` for noise of norm at
    most ``delta``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return base_bound / (1.0 - epsilon) ** 2


@dataclass(frozen=True)
class BoundReport:
    """All bound values for one parameter set, with the inputs echoed."""

    theorem1: float
    perpendicular: float
    theorem2: float
    theorem2_upper: float
    lasso_baseline: float | None
    noisy_inflated: float | None
    M: int
    k: int
    B: int
    s: int | None
    p: int | None
    sigma_star: float
    sigma_full: float
    kappa: float
    epsilon: float | None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    def as_text(self) -> str:
        rows = [
            ("theorem1 (general subspaces)", self.theorem1),
            ("perpendicular / theorem2", self.theorem2),
            ("theorem2 upper (max form)", self.theorem2_upper),
        ]
        if self.lasso_baseline is not None:
            rows.append(("lasso baseline", self.lasso_baseline))
        if self.noisy_inflated is not None:
            rows.append((f"noisy, epsilon={self.epsilon}", self.noisy_inflated))
        width = max(len(name) for name, _ in rows)
        lines = [
            f"M={self.M} k={self.k} B={self.B}"
            + (f" s={self.s} p={self.p}" if self.s is not None else "")
            + f" sigma*={self.sigma_star:g} sigma={self.sigma_full:g} kappa={self.kappa:g}"
        ]
        lines += [f"{name.ljust(width)}  {value:10.1f}" for name, value in rows]
        return "\n".join(lines)


def bound_report(
    M: int,
    k: int,
    B: int,
    sigma_star: float = 1.0,
    sigma_full: float = 1.0,
    kappa: float = 1.0,
    s: int | None = None,
    p: int | None = None,
    epsilon: float | None = None,
) -> BoundReport:
    """Evaluate every bound for one parameter set.

    The lasso baseline needs the sparsity ``s`` and ambient dimension ``p``;
    when only ``p`` is given, ``s`` defaults to ``k * B`` (disjoint groups).
    ``noisy_inflated`` inflates the bound that applies: theorem1 when any
    spectral input differs from 1, theorem2 otherwise.
    """
    t1 = theorem1_bound(M, k, B, sigma_star, sigma_full, kappa)
    t2 = theorem2_bound(M, k, B)
    if p is not None and s is None:
        s = k * B
    lasso = lasso_bound(s, p) if (s is not None and p is not None) else None
    noisy = None
    if epsilon is not None:
        base = t2 if (sigma_star == sigma_full == kappa == 1.0) else t1
        noisy = noisy_bound(base, epsilon)
    return BoundReport(
        theorem1=t1,
        perpendicular=t2,
        theorem2=t2,
        theorem2_upper=theorem2_upper(M, k, B),
        lasso_baseline=lasso,
        noisy_inflated=noisy,
        M=M,
        k=k,
        B=B,
        s=s,
        p=p,
        sigma_star=sigma_star,
        sigma_full=sigma_full,
        kappa=kappa,
        epsilon=epsilon,
    )
