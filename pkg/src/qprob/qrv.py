"""
Quantum random variables and quantum expectation.

The expectation of ``psi`` against a finite POVM with atoms ``h_j`` is the
symmetrized sum ``sum_j h_j^{1/2} psi(x_j) h_j^{1/2}``.  On constants this
is a unital quantum channel; its supermap, Choi matrix, fixed-point algebra
and Cesaro ergodic projection are computed here as well.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import herm
from .errors import ConvergenceError, DimensionError, DomainError, PreconditionError
from .herm import DEFAULT_TOL, Tolerances
from .measure import QuantumMeasure, SampleSpace, Partition, dnu_dmu, induced_mu

__all__ = [
    "QuantumRandomVariable",
    "DensityMatrix",
    "Law",
    "LinearSuperMap",
    "CONVEX_CATALOG",
    "sqrt_atoms",
    "expectation",
    "integral_over",
    "pairing_oracle",
    "is_measurable",
    "law",
    "expectation_via_law",
    "channel_apply",
    "channel_as_supermap",
    "choi_matrix",
    "fixed_points",
    "cesaro_projection",
    "jensen_gap",
    "random_qrv",
    "random_density_matrix",
]


@dataclass(frozen=True)
class QuantumRandomVariable:
    """Operator-valued function on a finite sample space.

    Values are hermitized on construction unless ``hermitian=False`` is
    passed, which admits general (non-selfadjoint) operator values such as
    ``c @ psi`` for an operator coefficient ``c``.
    """

    space: SampleSpace
    values: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=complex, copy=True)
        if v.ndim == 1:
            v = v.reshape(-1, 1, 1)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise DimensionError(f"values must have shape (n, d, d), got {v.shape}")
        if v.shape[0] != self.space.n:
            raise DimensionError(f"{v.shape[0]} values for {self.space.n} sample points")
        if not np.all(np.isfinite(v)):
            raise DomainError("random variable has non-finite values")
        if self.hermitian:
            v = herm.stack_hermitize(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values, labels=None, **kw) -> "QuantumRandomVariable":
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values.reshape(-1, 1, 1)
        space = SampleSpace(tuple(labels)) if labels is not None else SampleSpace.of_size(len(values))
        return cls(space, values, **kw)

    @classmethod
    def constant(cls, space: SampleSpace, z) -> "QuantumRandomVariable":
        z = np.asarray(z, dtype=complex)
        return cls(space, np.broadcast_to(z, (space.n,) + z.shape), hermitian=bool(np.array_equal(z, z.conj().T)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.space.n

    def value(self, label: str) -> np.ndarray:
        return self.values[self.space.index(label)]

    def is_psd(self, tol: Tolerances = DEFAULT_TOL) -> bool:
        return self.hermitian and all(herm.is_psd(v, tol) for v in self.values)

    def map(self, f: Callable[[np.ndarray], np.ndarray]) -> "QuantumRandomVariable":
        return QuantumRandomVariable(self.space, np.array([f(v) for v in self.values]), self.hermitian)

    def _combine(self, other, op):
        if isinstance(other, QuantumRandomVariable):
            if other.space != self.space:
                raise DimensionError("random variables live on different sample spaces")
            return QuantumRandomVariable(self.space, op(self.values, other.values), self.hermitian and other.hermitian)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        """Scalar multiple; real scalars keep selfadjointness."""
        if np.ndim(c) != 0:
            return NotImplemented
        return QuantumRandomVariable(self.space, c * self.values, self.hermitian and np.isreal(c))

    __rmul__ = __mul__

    def left_multiply(self, c) -> "QuantumRandomVariable":
        """Pointwise ``c @ psi(x)`` for an operator coefficient ``c``."""
        return QuantumRandomVariable(self.space, np.asarray(c) @ self.values, hermitian=False)


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = herm.psd_clamp(self.matrix)
        t = np.trace(m).real
        if abs(t - 1.0) > DEFAULT_TOL.residual:
            raise PreconditionError(f"density matrix has trace {t:.12g}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class Law:
    """Law of a random variable: distinct values with their POVM masses."""

    support: np.ndarray
    masses: np.ndarray
    groups: tuple[tuple[int, ...], ...]
    grouping_tol: float

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def ell(self) -> np.ndarray:
        """Induced classical law ``tr(m_i) / d``."""
        return np.real(np.trace(self.masses, axis1=1, axis2=2)) / self.dim

    @property
    def total(self) -> np.ndarray:
        return self.masses.sum(axis=0)


@dataclass(frozen=True)
class LinearSuperMap:
    """Linear map on ``d x d`` matrices as a ``d^2 x d^2`` matrix.

    Matrices are vectorized row-major, so ``vec(a z b) = (a kron b^T) vec(z)``.
    """

    dim: int
    action: np.ndarray

    def apply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return (self.action @ z.reshape(-1)).reshape(self.dim, self.dim)

    def __matmul__(self, other: "LinearSuperMap") -> "LinearSuperMap":
        return LinearSuperMap(self.dim, self.action @ other.action)

    @classmethod
    def identity(cls, dim: int) -> "LinearSuperMap":
        return cls(dim, np.eye(dim * dim, dtype=complex))


# ---------------------------------------------------------------------------
# expectation


def sqrt_atoms(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    return np.array([herm.psd_sqrt(h, tol) for h in nu.atoms])


def _check_pair(psi: QuantumRandomVariable, nu: QuantumMeasure):
    if psi.space != nu.space:
        raise DimensionError("random variable and measure live on different sample spaces")
    if psi.dim != nu.dim:
        raise DimensionError(f"dimension mismatch: psi is {psi.dim}, nu is {nu.dim}")


def _sandwich_sum(roots: np.ndarray, values: np.ndarray, hermitian: bool) -> np.ndarray:
    out = np.einsum("nij,njk,nkl->il", roots, values, roots)
    return herm.hermitize(out) if hermitian else out


def integral_over(psi: QuantumRandomVariable, nu: QuantumMeasure, E: Iterable[int], tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``int_E psi dnu`` for the index set ``E``."""
    _check_pair(psi, nu)
    idx = sorted(set(int(i) for i in E))
    if any(i < 0 or i >= nu.n for i in idx):
        raise DimensionError(f"indices {idx} out of range for {nu.n} points")
    if not idx:
        return np.zeros((nu.dim, nu.dim), dtype=complex)
    roots = sqrt_atoms(nu, tol)[idx]
    return _sandwich_sum(roots, psi.values[idx], psi.hermitian)


def expectation(psi: QuantumRandomVariable, nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Quantum expectation ``sum_j h_j^{1/2} psi(x_j) h_j^{1/2}``."""
    _check_pair(psi, nu)
    return _sandwich_sum(sqrt_atoms(nu, tol), psi.values, psi.hermitian)


def pairing_oracle(psi: QuantumRandomVariable, nu: QuantumMeasure, rho, tol: Tolerances = DEFAULT_TOL):
    """``tr(rho E[psi])`` evaluated scalar-side through the trace measure.

    Computes ``sum_x mu(x) tr(rho D(x)^{1/2} psi(x) D(x)^{1/2})`` with
    ``D = dnu/dmu``.  ``rho`` is a :class:`DensityMatrix`, a single matrix, or
    a stack ``(k, d, d)`` of states, in which case an array of ``k`` values
    is returned.
    """
    _check_pair(psi, nu)
    if isinstance(rho, DensityMatrix):
        rho = rho.matrix
    rho = np.asarray(rho, dtype=complex)
    mu = induced_mu(nu).weights
    D = dnu_dmu(nu, tol).values
    integrand = np.zeros((nu.dim, nu.dim), dtype=complex)
    for w, Dx, px in zip(mu, D, psi.values):
        r = herm.psd_sqrt(Dx, tol)
        integrand += w * (r @ px @ r)
    vals = np.einsum("...ij,ji->...", rho, integrand)
    return vals.real if psi.hermitian else vals


def is_measurable(psi: QuantumRandomVariable, F: Partition, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Block-constancy of ``psi`` on ``F`` (Frobenius distance <= residual)."""
    if F.n != psi.n:
        raise DimensionError(f"partition of {F.n} points applied to a space of {psi.n}")
    for b in F.blocks:
        ref = psi.values[b[0]]
        if any(np.linalg.norm(psi.values[i] - ref) > tol.residual for i in b[1:]):
            return False
    return True


# ---------------------------------------------------------------------------
# law


def law(psi: QuantumRandomVariable, nu: QuantumMeasure, grouping_tol: float = 1e-9) -> Law:
    """Group sample points by value and push the atoms forward.

    A point joins the first existing group whose representative value lies
    within ``grouping_tol`` (Frobenius norm); the representative is the value
    at the group's first point.
    """
    _check_pair(psi, nu)
    groups: list[list[int]] = []
    for i, v in enumerate(psi.values):
        for g in groups:
            if np.linalg.norm(v - psi.values[g[0]]) <= grouping_tol:
                g.append(i)
                break
        else:
            groups.append([i])
    support = np.array([psi.values[g[0]] for g in groups])
    masses = np.array([nu.of(g) for g in groups])
    return Law(support, masses, tuple(tuple(g) for g in groups), grouping_tol)


def expectation_via_law(m: Law, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``int a dm(a) = sum_i m_i^{1/2} a_i m_i^{1/2}``."""
    roots = np.array([herm.psd_sqrt(x, tol) for x in m.masses])
    return _sandwich_sum(roots, m.support, True)


# ---------------------------------------------------------------------------
# channel structure


def _require_probability(nu: QuantumMeasure):
    if not nu.is_probability:
        raise PreconditionError("operation requires a quantum probability measure")


def channel_apply(nu: QuantumMeasure, z, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Expectation of the constant random variable ``z``."""
    _require_probability(nu)
    z = np.asarray(z, dtype=complex)
    if z.shape != (nu.dim, nu.dim):
        raise DimensionError(f"expected a {nu.dim}x{nu.dim} matrix, got {z.shape}")
    roots = sqrt_atoms(nu, tol)
    out = np.einsum("nij,jk,nkl->il", roots, z, roots)
    return herm.hermitize(out) if np.array_equal(z, z.conj().T) else out


def channel_as_supermap(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> LinearSuperMap:
    _require_probability(nu)
    roots = sqrt_atoms(nu, tol)
    S = sum(np.kron(r, r.T) for r in roots)
    return LinearSuperMap(nu.dim, 0.5 * (S + S.conj().T))


def choi_matrix(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``sum_{ij} e_ij kron E(e_ij)``; PSD iff the channel is completely positive."""
    _require_probability(nu)
    d = nu.dim
    C = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            C += np.kron(e, channel_apply(nu, e, tol))
    return herm.hermitize(C)


def hermitian_basis(d: int) -> np.ndarray:
    """Hilbert-Schmidt orthonormal basis of the real space of ``d x d`` Hermitian matrices."""
    out = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        out.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[i, j] = s[j, i] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[i, j], a[j, i] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out += [s, a]
    return np.array(out)


def fixed_points(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> list[np.ndarray]:
    """Hermitian, Hilbert-Schmidt orthonormal basis of ``{z : E(z) = z}``.

    The channel preserves selfadjointness, so the fixed space is spanned by
    its Hermitian elements; these are found as the null space of
    ``E - id`` restricted to Hermitian matrices, with singular values below
    ``rank_rel * max(1, sigma_max)`` treated as zero.
    """
    _require_probability(nu)
    d = nu.dim
    basis = hermitian_basis(d)
    images = np.array([channel_apply(nu, b, tol) for b in basis])
    M = np.real(np.einsum("kij,lij->kl", basis.conj(), images)) - np.eye(d * d)
    _, sv, Vt = np.linalg.svd(M)
    cutoff = tol.rank_rel * max(1.0, sv[0] if sv.size else 0.0)
    null = Vt[sv <= cutoff]
    return [herm.hermitize(np.tensordot(c, basis, axes=1)) for c in null]


def cesaro_projection(nu: QuantumMeasure, max_N: int = 2 ** 50, tol: Tolerances = DEFAULT_TOL) -> LinearSuperMap:
    """Limit of the Cesaro averages ``(1/N) sum_{j<N} E^j``.

    The supermap of ``E`` is Hermitian and positive semidefinite in the
    Hilbert-Schmidt inner product (its Kraus operators ``h^{1/2}`` are
    selfadjoint), so every average is diagonal in its eigenbasis with
    weights ``(1 - l^N) / (N (1 - l))``.  Eigenvalues within ``rank_rel``
    of one count as fixed.  ``N`` is doubled until ``||A_N - A_2N||_F`` drops
    below ``residual / 64``; the distance of ``A_2N`` to the limit is about
    the last gap, so this leaves headroom below ``residual``.
    """
    S = channel_as_supermap(nu, tol)
    dec = herm.spectral_decompose(S.action)
    lam = np.clip(dec.eigenvalues, 0.0, 1.0)
    # fixed directions: same cutoff as fixed_points uses
    lam[1.0 - lam <= tol.rank_rel] = 1.0
    gap_from_one = 1.0 - lam
    with np.errstate(divide="ignore"):  # eigenvalue 0 gives log 0 = -inf, weight 1/N
        log_lam = np.log1p(-gap_from_one)

    def average(N: int) -> np.ndarray:
        w = np.ones_like(lam)
        moving = gap_from_one > 0
        w[moving] = -np.expm1(N * log_lam[moving]) / (N * gap_from_one[moving])
        return dec.reconstruct(w)

    N = 1
    A = average(N)
    while True:
        A2 = average(2 * N)
        gap = float(np.linalg.norm(A2 - A))
        if gap <= tol.residual / 64:
            return LinearSuperMap(nu.dim, A2)
        N *= 2
        if N > max_N:
            raise ConvergenceError(f"Cesaro averages did not settle by N={max_N}: last gap {gap:.3e}", gap=gap)
        A = A2


# ---------------------------------------------------------------------------
# Jensen


@dataclass(frozen=True)
class ConvexFunction:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float]
    open_domain: bool


CONVEX_CATALOG: dict[str, ConvexFunction] = {
    "square": ConvexFunction("square", np.square, (-np.inf, np.inf), False),
    "inverse": ConvexFunction("inverse", np.reciprocal, (0.0, np.inf), True),
    "neglog": ConvexFunction("neglog", lambda t: -np.log(t), (0.0, np.inf), True),
    "xlogx": ConvexFunction("xlogx", lambda t: t * np.log(t), (0.0, np.inf), True),
    "identity": ConvexFunction("identity", lambda t: t, (-np.inf, np.inf), False),
}


def _convex(theta) -> ConvexFunction:
    if isinstance(theta, ConvexFunction):
        return theta
    try:
        return CONVEX_CATALOG[theta]
    except KeyError:
        raise KeyError(f"unknown convex function {theta!r}; choose from {sorted(CONVEX_CATALOG)}") from None


def _check_interval(theta: ConvexFunction, interval: tuple[float, float]):
    a, b = interval
    lo, hi = theta.domain
    inside = (lo < a and b < hi) if theta.open_domain else (lo <= a and b <= hi)
    if not a <= b or not inside:
        raise DomainError(f"interval [{a}, {b}] is not inside the domain of {theta.name}")


def apply_convex(theta, A, interval: tuple[float, float], tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    theta = _convex(theta)
    return herm.apply_spectral_function(A, theta.f, interval, tol)


def _check_spectra(psi: QuantumRandomVariable, interval, tol: Tolerances):
    if not psi.hermitian:
        raise DomainError("Jensen gaps need a selfadjoint random variable")
    a, b = interval
    for label, v in zip(psi.space.labels, psi.values):
        lam = np.linalg.eigvalsh(v)
        slack = tol.rank_rel * max(1.0, float(np.max(np.abs(lam))))
        if lam[0] < a - slack or lam[-1] > b + slack:
            raise DomainError(
                f"spectrum of psi({label}) = [{lam[0]:.6g}, {lam[-1]:.6g}] leaves [{a}, {b}]"
            )


def jensen_gap(psi: QuantumRandomVariable, nu: QuantumMeasure, theta, interval: tuple[float, float], tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``E[theta(psi)] - theta(E[psi])``; PSD for operator convex ``theta``."""
    _require_probability(nu)
    theta = _convex(theta)
    _check_interval(theta, interval)
    _check_spectra(psi, interval, tol)
    lhs = expectation(psi.map(lambda v: apply_convex(theta, v, interval, tol)), nu, tol)
    rhs = apply_convex(theta, expectation(psi, nu, tol), interval, tol)
    return herm.hermitize(lhs - rhs)


# ---------------------------------------------------------------------------
# generators


def random_qrv(space, d: int, seed, spectrum: tuple[float, float] = (0.0, 1.0)) -> QuantumRandomVariable:
    """Seeded random Hermitian values with eigenvalues uniform in ``spectrum``."""
    from .measure import rng_for, _complex_gaussian

    if not isinstance(space, SampleSpace):
        space = SampleSpace.of_size(int(space))
    rng = rng_for(*seed) if isinstance(seed, tuple) else rng_for(seed)
    lo, hi = spectrum
    vals = []
    for _ in range(space.n):
        Q, R = np.linalg.qr(_complex_gaussian(rng, (d, d)))
        Q = Q * (np.diag(R) / np.abs(np.diag(R)))
        lam = rng.uniform(lo, hi, size=d)
        vals.append((Q * lam) @ Q.conj().T)
    return QuantumRandomVariable(space, np.array(vals))


def random_density_matrix(d: int, seed, k: int | None = None) -> np.ndarray:
    """Seeded random state(s) ``G G^H / tr(G G^H)``; a stack when ``k`` is given."""
    from .measure import rng_for, _complex_gaussian

    rng = rng_for(*seed) if isinstance(seed, tuple) else rng_for(seed)
    shape = (1 if k is None else k, d, d)
    G = _complex_gaussian(rng, shape)
    R = G @ np.conj(np.swapaxes(G, 1, 2))
    R /= np.real(np.trace(R, axis1=1, axis2=2))[:, None, None]
    R = herm.stack_hermitize(R)
    return R[0] if k is None else R
