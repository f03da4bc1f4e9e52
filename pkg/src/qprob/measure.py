"""
Finite sample spaces, partitions and positive-operator-valued measures.

A measure on a finite space is stored atomwise: ``atoms[i]`` is the PSD
matrix assigned to the singleton ``{labels[i]}``.  A sub-sigma-algebra of the
power set is represented by the partition into its atoms (blocks).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import herm
from .errors import DimensionError, NotPSDError, PreconditionError
from .herm import DEFAULT_TOL, Tolerances

__all__ = [
    "SampleSpace",
    "Partition",
    "QuantumMeasure",
    "ClassicalMeasure",
    "ValidationReport",
    "validate",
    "induced_mu",
    "dnu_dmu",
    "restrict",
    "is_abs_continuous",
    "random_povm",
    "random_partition",
    "rng_for",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def rng_for(seed, *stream) -> np.random.Generator:
    """Generator keyed on ``(seed, *stream)``; independent streams for distinct keys."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


@dataclass(frozen=True)
class SampleSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise DimensionError("sample space must have at least one point")
        if len(set(labels)) != len(labels):
            raise DimensionError(f"sample point labels are not unique: {labels}")

    @classmethod
    def of_size(cls, n: int, prefix: str = "x") -> "SampleSpace":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown sample point {label!r}") from None

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class Partition:
    """Partition of ``{0, ..., n-1}`` into nonempty disjoint blocks.

    Blocks are normalized to sorted tuples ordered by their smallest element,
    so equal partitions compare equal.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = [tuple(sorted(int(i) for i in b)) for b in self.blocks]
        if any(len(b) == 0 for b in blocks):
            raise DimensionError("partition blocks must be nonempty")
        flat = [i for b in blocks for i in b]
        n = len(flat)
        if sorted(flat) != list(range(n)):
            raise DimensionError(
                f"blocks must be disjoint and cover 0..{n - 1}; got {sorted(flat)}"
            )
        object.__setattr__(self, "blocks", tuple(sorted(blocks, key=lambda b: b[0])))

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls((tuple(range(n)),))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(tuple((i,) for i in range(n)))

    @classmethod
    def from_labels(cls, space: SampleSpace, groups: Iterable[Iterable[str]]) -> "Partition":
        return cls(tuple(tuple(space.index(x) for x in g) for g in groups))

    def block_ids(self) -> np.ndarray:
        """Array mapping each point index to the index of its block."""
        out = np.empty(self.n, dtype=int)
        for k, b in enumerate(self.blocks):
            out[list(b)] = k
        return out

    def labels(self, space: SampleSpace) -> list[list[str]]:
        return [[space.labels[i] for i in b] for b in self.blocks]

    def quotient_space(self, space: SampleSpace) -> SampleSpace:
        """Sample space whose points are the blocks, labelled ``{a,b,...}``."""
        return SampleSpace(tuple("{" + ",".join(g) + "}" for g in self.labels(space)))


@dataclass(frozen=True)
class QuantumMeasure:
    """Finite POVM: one PSD atom per sample point.

    Construction checks positivity of each atom (slack-level negative
    eigenvalues are clamped), that the total mass is nonzero, and, when
    ``is_probability`` is set, that the atoms sum to the identity.
    """

    space: SampleSpace
    atoms: np.ndarray
    is_probability: bool = True
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=complex)
        if atoms.ndim != 3 or atoms.shape[1] != atoms.shape[2]:
            raise DimensionError(f"atoms must have shape (n, d, d), got {atoms.shape}")
        if atoms.shape[0] != self.space.n:
            raise DimensionError(f"{atoms.shape[0]} atoms for {self.space.n} sample points")
        clean = []
        for label, h in zip(self.space.labels, atoms):
            try:
                clean.append(herm.psd_clamp(h, self.tol))
            except NotPSDError as exc:
                raise NotPSDError(f"atom at {label!r}: {exc}") from None
        atoms = np.array(clean)
        total = atoms.sum(axis=0)
        if np.linalg.norm(total) == 0.0:
            raise PreconditionError("quantum measure has zero total mass")
        if self.is_probability:
            dev = np.linalg.norm(total - np.eye(atoms.shape[1]))
            if dev > self.tol.residual:
                raise PreconditionError(
                    f"atoms sum to identity only within {dev:.3e} (> {self.tol.residual:.1e})"
                )
        object.__setattr__(self, "atoms", _frozen(atoms))

    @classmethod
    def from_atoms(cls, atoms, labels: Sequence[str] | None = None, **kw) -> "QuantumMeasure":
        atoms = np.asarray(atoms, dtype=complex)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1, 1)
        space = SampleSpace(tuple(labels)) if labels is not None else SampleSpace.of_size(len(atoms))
        return cls(space, atoms, **kw)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def n(self) -> int:
        return self.space.n

    def atom(self, label: str) -> np.ndarray:
        return self.atoms[self.space.index(label)]

    def of(self, indices: Iterable[int]) -> np.ndarray:
        """``nu(E)`` for the index set ``E``."""
        idx = list(indices)
        if not idx:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return self.atoms[idx].sum(axis=0)

    @property
    def total(self) -> np.ndarray:
        return self.atoms.sum(axis=0)


@dataclass(frozen=True)
class ClassicalMeasure:
    space: SampleSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.shape != (self.space.n,):
            raise DimensionError(f"weights shape {w.shape} does not match {self.space.n} points")
        if np.any(w < 0):
            raise PreconditionError("classical weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def weight(self, label: str) -> float:
        return float(self.weights[self.space.index(label)])

    def of(self, indices: Iterable[int]) -> float:
        return float(self.weights[list(indices)].sum())


@dataclass(frozen=True)
class ValidationReport:
    atom_min_eigenvalues: tuple[float, ...]
    atoms_psd: bool
    zero_atoms: tuple[str, ...]
    total_nonzero: bool
    identity_deviation: float
    additivity_max_error: float
    is_povm: bool
    is_probability: bool


def validate(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL, samples: int = 32, seed: int = 0) -> ValidationReport:
    """Check the POVM axioms on a finite measure and report diagnostics.

    Countable additivity reduces to finite additivity here; it is probed on
    ``samples`` random pairs of disjoint subsets.
    """
    mins = tuple(herm.min_eigenvalue(h) for h in nu.atoms)
    scale = max(float(np.linalg.norm(nu.total, 2)), 1.0)
    psd = all(m >= -tol.rank_rel * scale for m in mins)
    zero = tuple(
        lab for lab, h in zip(nu.space.labels, nu.atoms)
        if np.linalg.norm(h, 2) <= tol.rank_rel * scale
    )
    total_nonzero = bool(np.linalg.norm(nu.total) > 0)
    dev = float(np.linalg.norm(nu.total - np.eye(nu.dim)))
    rng = np.random.default_rng(seed)
    add_err = 0.0
    for _ in range(samples):
        tags = rng.integers(0, 3, size=nu.n)  # 0: E, 1: F, 2: neither
        E = np.flatnonzero(tags == 0)
        F = np.flatnonzero(tags == 1)
        EF = np.flatnonzero(tags < 2)
        add_err = max(add_err, float(np.linalg.norm(nu.of(EF) - nu.of(E) - nu.of(F))))
    is_povm = psd and total_nonzero
    return ValidationReport(
        atom_min_eigenvalues=mins,
        atoms_psd=psd,
        zero_atoms=zero,
        total_nonzero=total_nonzero,
        identity_deviation=dev,
        additivity_max_error=add_err,
        is_povm=is_povm,
        is_probability=is_povm and dev <= tol.residual,
    )


def induced_mu(nu: QuantumMeasure) -> ClassicalMeasure:
    """Trace measure ``mu = tr(nu) / d``."""
    w = np.real(np.trace(nu.atoms, axis1=1, axis2=2)) / nu.dim
    return ClassicalMeasure(nu.space, np.clip(w, 0.0, None))


def dnu_dmu(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL):
    """Density of ``nu`` with respect to its trace measure.

    Value ``d * h / tr(h)`` at points of positive trace, zero elsewhere.
    """
    from .qrv import QuantumRandomVariable

    tr = np.real(np.trace(nu.atoms, axis1=1, axis2=2))
    vals = np.zeros_like(nu.atoms)
    pos = tr > 0
    vals[pos] = nu.dim * nu.atoms[pos] / tr[pos, None, None]
    return QuantumRandomVariable(nu.space, vals)


def restrict(nu: QuantumMeasure, F: Partition) -> QuantumMeasure:
    """Restriction of ``nu`` to the sigma-algebra generated by ``F``.

    The result lives on the quotient space of blocks; each block's atom is
    the sum of the atoms it contains.
    """
    if F.n != nu.n:
        raise DimensionError(f"partition of {F.n} points applied to a space of {nu.n}")
    atoms = np.array([nu.of(b) for b in F.blocks])
    return QuantumMeasure(F.quotient_space(nu.space), atoms, nu.is_probability, nu.tol)


def is_abs_continuous(
    nu2: QuantumMeasure,
    nu1: QuantumMeasure,
    mode: str = "weak",
    tol: Tolerances = DEFAULT_TOL,
) -> bool:
    """Whether ``nu2 << nu1``.

    ``weak``: every null atom of ``nu1`` is a null atom of ``nu2``.
    ``strong``: additionally the support of each ``nu2`` atom lies inside the
    support of the matching ``nu1`` atom.
    """
    if nu1.space != nu2.space or nu1.dim != nu2.dim:
        raise DimensionError("absolute continuity needs measures on the same space and dimension")
    if mode not in ("weak", "strong"):
        raise ValueError(f"mode must be 'weak' or 'strong', not {mode!r}")
    scale = max(np.linalg.norm(nu1.total, 2), np.linalg.norm(nu2.total, 2))
    cutoff = tol.rank_rel * scale
    for h1, h2 in zip(nu1.atoms, nu2.atoms):
        null1 = np.linalg.norm(h1, 2) <= cutoff
        null2 = np.linalg.norm(h2, 2) <= cutoff
        if null1 and not null2:
            return False
        if mode == "strong" and not null2:
            q1 = herm.support_projection(h1, tol)
            q2 = herm.support_projection(h2, tol)
            if np.linalg.norm(q1 @ q2 @ q1 - q2) > tol.residual:
                return False
    return True


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_povm(space, d: int, seed, ridge: float = 1e-3, tol: Tolerances = DEFAULT_TOL) -> QuantumMeasure:
    """Seeded random quantum probability measure.

    ``G_j = A_j A_j^H + ridge * 1`` with complex Gaussian ``A_j``, normalized
    as ``h_j = S^{-1/2} G_j S^{-1/2}`` where ``S = sum_j G_j``.  ``space`` may
    be a :class:`SampleSpace` or a number of points.  ``seed`` is an int or a
    tuple of ints.
    """
    if not isinstance(space, SampleSpace):
        space = SampleSpace.of_size(int(space))
    if d < 1:
        raise DimensionError("dimension must be at least 1")
    rng = rng_for(*seed) if isinstance(seed, tuple) else rng_for(seed)
    A = _complex_gaussian(rng, (space.n, d, d))
    G = A @ np.conj(np.swapaxes(A, 1, 2)) + ridge * np.eye(d)
    S_isqrt = herm.generalized_inverse_sqrt(G.sum(axis=0), tol)
    atoms = herm.stack_hermitize(S_isqrt @ G @ S_isqrt)
    return QuantumMeasure(space, atoms, True, tol)


def random_partition(space, seed, num_blocks: int) -> Partition:
    """Seeded random partition into exactly ``num_blocks`` nonempty blocks."""
    n = space.n if isinstance(space, SampleSpace) else int(space)
    if not 1 <= num_blocks <= n:
        raise PreconditionError(f"num_blocks must be in [1, {n}], got {num_blocks}")
    rng = rng_for(*seed) if isinstance(seed, tuple) else rng_for(seed)
    perm = rng.permutation(n)
    ids = np.empty(n, dtype=int)
    ids[perm[:num_blocks]] = np.arange(num_blocks)
    ids[perm[num_blocks:]] = rng.integers(0, num_blocks, size=n - num_blocks)
    return Partition(tuple(tuple(np.flatnonzero(ids == k)) for k in range(num_blocks)))


def all_partitions(n: int):
    """Every partition of ``{0..n-1}`` (Bell-number many); for small ``n`` only."""
    def rec(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for sub in rec(rest):
            for k in range(len(sub)):
                yield sub[:k] + [[first] + sub[k]] + sub[k + 1:]
            yield [[first]] + sub
    for p in rec(list(range(n))):
        yield Partition(tuple(tuple(b) for b in p))

