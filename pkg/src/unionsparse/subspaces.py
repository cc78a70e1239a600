"""Union-of-subspaces signal models and their spectral quantities.

A model is a list of bases ``K_1 .. K_M`` in ``R^p``, each with orthonormal
columns, whose horizontal concatenation ``K = [K_1 ... K_M]`` spans the
ambient space.  Group-sparsity structures are the special case where every
basis consists of canonical unit vectors; those models carry their index
groups and get closed-form spectral quantities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "GroupStructure",
    "SupportSet",
    "SparseSignal",
    "SubspaceModel",
    "orthonormalize",
    "from_groups",
    "sigma_min",
    "condition_number",
    "is_perpendicular",
    "two_line_model",
    "random_perpendicular_model",
    "save_model",
    "load_model",
]

ORTHONORMALITY_TOL = 1e-10
RANK_TOL = 1e-10
NEAR_SINGULAR_TOL = 1e-14


@dataclass(frozen=True)
class GroupStructure:
    """Index groups ``G_1 .. G_M`` over coordinates ``{0 .. p-1}``.

    Groups may overlap.  Indices are 0-based in memory; serialized files
    use 1-based indices.  Structures that back a spanning recovery model
    must cover every coordinate (checked by :func:`from_groups`).
    """

    p: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("ambient dimension p must be positive")
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ValueError("need at least one group")
        for m, g in enumerate(groups):
            if not g:
                raise ValueError(f"group {m} is empty")
            if len(set(g)) != len(g):
                raise ValueError(f"group {m} has repeated indices")
            if min(g) < 0 or max(g) >= self.p:
                raise ValueError(f"group {m} has indices outside 0..{self.p - 1}")

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def B(self) -> int:
        return max(len(g) for g in self.groups)

    def coverage_counts(self) -> np.ndarray:
        """Number of groups covering each coordinate."""
        flat = np.concatenate([np.asarray(g, dtype=int) for g in self.groups])
        return np.bincount(flat, minlength=self.p)

    def covers_ambient(self) -> bool:
        return bool(np.all(self.coverage_counts() > 0))

    def is_disjoint(self) -> bool:
        return bool(np.all(self.coverage_counts() <= 1))


@dataclass(frozen=True)
class SupportSet:
    """Indices of the active subspaces (or groups)."""

    active: tuple[int, ...]

    def __post_init__(self):
        active = tuple(int(i) for i in self.active)
        object.__setattr__(self, "active", active)
        if len(set(active)) != len(active):
            raise ValueError("support indices must be distinct")

    @property
    def k(self) -> int:
        return len(self.active)


@dataclass(frozen=True)
class SparseSignal:
    """Ground-truth signal with its active groups and latent coefficients.

    ``latents[i]`` is the coefficient vector of active group ``active[i]``;
    the signal is the (overlapping) sum of the embedded latents.  ``s`` is
    the realized number of nonzero coordinates.
    """

    x: np.ndarray
    active: tuple[int, ...]
    latents: tuple[np.ndarray, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "active", tuple(int(i) for i in self.active))
        lat = tuple(np.asarray(v, dtype=float) for v in self.latents)
        for v in lat:
            v.setflags(write=False)
        object.__setattr__(self, "latents", lat)

    @property
    def p(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return len(self.active)

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.x))

    def support(self) -> SupportSet:
        return SupportSet(self.active)


@dataclass(frozen=True)
class SubspaceModel:
    """Immutable union-of-subspaces model.

    Parameters
    ----------
    p : int
        Ambient dimension.
    bases : tuple of ndarray
        Basis ``i`` has shape ``(p, d_i)`` with orthonormal columns.
    groups : GroupStructure, optional
        Set when the bases are canonical-column gathers of an index group
        structure; enables closed-form spectral quantities and fast solver
        paths.  Orthonormality and span then hold by construction and are
        checked structurally instead of numerically.
    """

    p: int
    bases: tuple[np.ndarray, ...]
    groups: GroupStructure | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("ambient dimension p must be positive")
        bases = tuple(np.asarray(b, dtype=float) for b in self.bases)
        if not bases:
            raise ValueError("need at least one basis")
        for m, b in enumerate(bases):
            if b.ndim != 2 or b.shape[0] != self.p:
                raise ValueError(f"basis {m} must be a {self.p}-row matrix")
            if not 1 <= b.shape[1] <= self.p:
                raise ValueError(f"basis {m} must have between 1 and {self.p} columns")
            b.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        if self.groups is not None:
            if self.groups.p != self.p or self.groups.M != len(bases):
                raise ValueError("group structure does not match the bases")
            if not self.groups.covers_ambient():
                raise ValueError("groups do not cover every coordinate (span violation)")
        else:
            for m, b in enumerate(bases):
                gram = b.T @ b
                if not np.allclose(gram, np.eye(b.shape[1]), atol=ORTHONORMALITY_TOL):
                    raise ValueError(f"basis {m} does not have orthonormal columns")
            if self.total_dim < self.p:
                raise ValueError(
                    f"concatenated bases have {self.total_dim} < p = {self.p} columns "
                    "(span violation)"
                )
            s = self.singular_values
            if s[-1] <= RANK_TOL * s[0]:
                raise ValueError("concatenated bases do not span R^p (span violation)")

    @property
    def M(self) -> int:
        return len(self.bases)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[1] for b in self.bases)

    @property
    def B(self) -> int:
        return max(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    @cached_property
    def concatenation(self) -> np.ndarray:
        """The ``p x sum(d_i)`` matrix ``[K_1 ... K_M]``."""
        K = np.hstack(self.bases)
        K.setflags(write=False)
        return K

    @cached_property
    def singular_values(self) -> np.ndarray:
        """Singular values of the concatenation, descending, length ``min(p, sum d_i)``.

        For group models these are the square roots of the coordinate
        coverage counts (each canonical column contributes its coordinate).
        """
        if self.groups is not None:
            counts = np.sort(self.groups.coverage_counts())[::-1]
            return np.sqrt(counts.astype(float))
        return np.linalg.svd(self.concatenation, compute_uv=False)


def orthonormalize(raw_bases) -> SubspaceModel:
    """Build a model from raw (possibly non-orthonormal) bases.

    Each basis is orthonormalized on its own via a QR factorization; bases
    are never mixed, so the spanned subspaces are unchanged.  Bases that
    already have orthonormal columns are returned bit-for-bit up to column
    sign conventions (signs are fixed so that the input is preserved).

    Raises
    ------
    ValueError
        If a basis is rank deficient (named by index) or the concatenation
        does not span the ambient space.
    """
    bases = [np.atleast_2d(np.asarray(b, dtype=float)) for b in raw_bases]
    if not bases:
        raise ValueError("need at least one basis")
    p = bases[0].shape[0]
    out = []
    for m, b in enumerate(bases):
        if b.shape[0] != p:
            raise ValueError(f"basis {m} has {b.shape[0]} rows, expected {p}")
        s = np.linalg.svd(b, compute_uv=False)
        if b.shape[1] > b.shape[0] or s[-1] <= RANK_TOL * s[0]:
            raise ValueError(f"basis {m} is rank deficient")
        q, r = np.linalg.qr(b)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        out.append(q * signs)
    return SubspaceModel(p=p, bases=tuple(out))


def from_groups(structure: GroupStructure) -> SubspaceModel:
    """Model whose basis ``i`` consists of the canonical unit vectors of ``G_i``."""
    bases = []
    for g in structure.groups:
        b = np.zeros((structure.p, len(g)))
        b[np.asarray(g, dtype=int), np.arange(len(g))] = 1.0
        bases.append(b)
    return SubspaceModel(p=structure.p, bases=tuple(bases), groups=structure)


def _restricted_counts_sigma(structure: GroupStructure, active: tuple[int, ...]) -> float:
    counts = np.zeros(structure.p, dtype=int)
    total = 0
    for j in active:
        g = np.asarray(structure.groups[j], dtype=int)
        counts[g] += 1
        total += g.size
    covered = int(np.count_nonzero(counts))
    nsing = min(structure.p, total)
    if covered < nsing:
        return 0.0
    return float(np.sqrt(counts[counts > 0].min()))


def sigma_min(model: SubspaceModel, restriction: SupportSet | None = None) -> float:
    """Smallest singular value of the (optionally restricted) concatenation.

    Without a restriction this is the p-th singular value of ``K``; with a
    restriction it is the smallest singular value of ``K* = [K_j]_{j in J}``.
    """
    if restriction is None:
        return float(model.singular_values[-1])
    if restriction.k == 0:
        raise ValueError("restriction must select at least one subspace")
    if any(j < 0 or j >= model.M for j in restriction.active):
        raise ValueError("restriction indexes a subspace outside the model")
    if model.groups is not None:
        return _restricted_counts_sigma(model.groups, restriction.active)
    K_star = np.hstack([model.bases[j] for j in restriction.active])
    s = np.linalg.svd(K_star, compute_uv=False)
    return float(s[-1])


def condition_number(model: SubspaceModel) -> float:
    """Ratio of the largest to the smallest singular value of ``K``.

    Raises
    ------
    ValueError
        If the smallest singular value falls below the near-singular
        tolerance (subspaces nearly aligned).
    """
    s = model.singular_values
    if s[-1] < NEAR_SINGULAR_TOL:
        raise ValueError("model is near singular: subspaces are nearly aligned")
    return float(s[0] / s[-1])


def is_perpendicular(model: SubspaceModel, tol: float = 1e-10) -> bool:
    """Whether every pair of subspaces is perpendicular off their intersection.

    Pairwise test: the principal-angle cosines between two subspaces are the
    singular values of ``K_i^T K_j``; the pair is perpendicular exactly when
    every cosine is 1 (shared directions) or 0 (orthogonal remainder).
    """
    if model.groups is not None:
        return True  # canonical columns meet only along shared coordinates
    for i in range(model.M):
        for j in range(i + 1, model.M):
            cos = np.linalg.svd(model.bases[i].T @ model.bases[j], compute_uv=False)
            interior = (cos > tol) & (cos < 1.0 - tol)
            if np.any(interior):
                return False
    return True


def two_line_model(theta: float) -> SubspaceModel:
    """Two one-dimensional subspaces of the plane separated by angle ``theta`` (radians)."""
    u = np.array([[1.0], [0.0]])
    v = np.array([[np.cos(theta)], [np.sin(theta)]])
    return SubspaceModel(p=2, bases=(u, v))


def random_perpendicular_model(dims, seed: int = 0) -> SubspaceModel:
    """Mutually orthogonal random subspaces with the given dimensions.

    The dimensions must sum to the ambient dimension; columns of a random
    orthogonal matrix are partitioned into consecutive bases.
    """
    dims = [int(d) for d in dims]
    p = sum(dims)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    q = q * np.sign(np.diag(r))
    bases = []
    start = 0
    for d in dims:
        bases.append(q[:, start:start + d])
        start += d
    return SubspaceModel(p=p, bases=tuple(bases))


def save_model(obj, path) -> None:
    """Serialize a model or group structure to JSON (1-based group indices)."""
    if isinstance(obj, SubspaceModel):
        if obj.groups is not None:
            doc = {"p": obj.p, "groups": [[i + 1 for i in g] for g in obj.groups.groups]}
        else:
            doc = {"p": obj.p, "bases": [[col.tolist() for col in b.T] for b in obj.bases]}
    elif isinstance(obj, GroupStructure):
        doc = {"p": obj.p, "groups": [[i + 1 for i in g] for g in obj.groups]}
    else:
        raise TypeError("expected SubspaceModel or GroupStructure")
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path) -> SubspaceModel:
    """Load a model from a JSON document with either ``groups`` or ``bases``."""
    with open(path) as fh:
        doc = json.load(fh)
    if "p" not in doc:
        raise ValueError("model file is missing the ambient dimension 'p'")
    has_groups = "groups" in doc
    has_bases = "bases" in doc
    if has_groups == has_bases:
        raise ValueError("model file must contain exactly one of 'groups' or 'bases'")
    p = int(doc["p"])
    if has_groups:
        structure = GroupStructure(
            p=p, groups=tuple(tuple(int(i) - 1 for i in g) for g in doc["groups"])
        )
        return from_groups(structure)
    bases = tuple(np.array(b, dtype=float).T for b in doc["bases"])
    return SubspaceModel(p=p, bases=bases)
