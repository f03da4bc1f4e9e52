"""
Quantum conditional expectation with respect to a partition.

For a block ``B`` with mass ``H = nu(B)`` and ``S = sum_{x in B} h_x^{1/2} psi(x) h_x^{1/2}``
the conditional expectation is constant on ``B`` with value
``H^{-1/2} S H^{-1/2}`` (generalized inverse square root).  This is the
derivative of ``E -> int_E psi dnu`` with respect to the restriction of
``nu`` to the blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import herm
from .calculus import RNContext, boxtimes, require_invertible_atoms, rn_derivative
from .errors import DimensionError, PreconditionError
from .herm import DEFAULT_TOL, Tolerances
from .measure import Partition, QuantumMeasure, restrict
from .qrv import (
    QuantumRandomVariable,
    _check_pair,
    _check_interval,
    _check_spectra,
    _convex,
    _require_probability,
    apply_convex,
    expectation,
    integral_over,
    sqrt_atoms,
)

__all__ = [
    "ConditionalResult",
    "DefiningPropertyReport",
    "cond_expectation",
    "block_average",
    "verify_defining_property",
    "tower_residual",
    "linearity_residual",
    "bayes_residual",
    "cond_jensen_gap",
    "constant_idempotence_gap",
]


@dataclass(frozen=True)
class ConditionalResult:
    """Block-constant conditional expectation plus the measures it came from.

    ``block_values[k]`` is the value on block ``k``; ``phi`` spreads these
    over the original points.  ``nu_tilde`` holds ``int_B psi dnu`` per block
    and ``nu_restricted`` holds ``nu(B)``, both on the quotient space.
    """

    phi: QuantumRandomVariable
    block_values: np.ndarray
    partition: Partition
    nu_restricted: QuantumMeasure
    nu_tilde: np.ndarray
    zero_mass_blocks: tuple[int, ...] = ()

    @property
    def on_blocks(self) -> QuantumRandomVariable:
        """The conditional expectation as a random variable on the block space."""
        return QuantumRandomVariable(self.nu_restricted.space, self.block_values, self.phi.hermitian)


def _check_partition(F: Partition, nu: QuantumMeasure):
    if F.n != nu.n:
        raise DimensionError(f"partition of {F.n} points applied to a space of {nu.n}")


def block_average(psi: QuantumRandomVariable, nu: QuantumMeasure, F: Partition, tol: Tolerances = DEFAULT_TOL) -> ConditionalResult:
    """Block formula without the positivity and nonzero-expectation checks.

    Accepts any (even non-selfadjoint) ``psi``; the map is linear in ``psi``.
    Blocks of zero mass get the value 0 and are listed in ``zero_mass_blocks``.
    """
    _check_pair(psi, nu)
    _check_partition(F, nu)
    roots = sqrt_atoms(nu, tol)
    nu_r = restrict(nu, F)
    scale = max(1.0, float(np.linalg.norm(nu.total, 2)))
    d = nu.dim
    vals, tilde, zero = [], [], []
    for k, (b, H) in enumerate(zip(F.blocks, nu_r.atoms)):
        idx = list(b)
        S = np.einsum("nij,njk,nkl->il", roots[idx], psi.values[idx], roots[idx])
        if psi.hermitian:
            S = herm.hermitize(S)
        tilde.append(S)
        if np.linalg.norm(H, 2) <= tol.rank_rel * scale:
            zero.append(k)
            vals.append(np.zeros((d, d), dtype=complex))
            continue
        r = herm.generalized_inverse_sqrt(H, tol)
        vals.append(r @ S @ r)
    vals = np.array(vals)
    phi = QuantumRandomVariable(nu.space, vals[F.block_ids()], psi.hermitian)
    return ConditionalResult(phi, phi.values[[b[0] for b in F.blocks]], F, nu_r, np.array(tilde), tuple(zero))


def cond_expectation(psi: QuantumRandomVariable, nu: QuantumMeasure, F: Partition, tol: Tolerances = DEFAULT_TOL) -> ConditionalResult:
    """Conditional expectation of a PSD-valued ``psi`` given the blocks of ``F``."""
    _check_pair(psi, nu)
    _require_probability(nu)
    if not psi.is_psd(tol):
        raise PreconditionError("conditional expectation needs a PSD-valued random variable")
    E = expectation(psi, nu, tol)
    size = max(float(np.linalg.norm(v, 2)) for v in psi.values)
    if size == 0.0 or np.linalg.norm(E, 2) <= tol.rank_rel * size:
        raise PreconditionError("conditional expectation needs a nonzero expectation")
    return block_average(psi, nu, F, tol)


@dataclass(frozen=True)
class DefiningPropertyReport:
    mode: str
    block_residuals: tuple[float, ...]

    @property
    def residual(self) -> float:
        return max(self.block_residuals)


def verify_defining_property(
    result: ConditionalResult,
    psi: QuantumRandomVariable,
    nu: QuantumMeasure,
    mode: str = "restricted",
    tol: Tolerances = DEFAULT_TOL,
) -> DefiningPropertyReport:
    """Per-block distance between ``int_B phi`` and ``int_B psi dnu``.

    ``restricted`` integrates ``phi`` against the block masses ``nu(B)``;
    ``full`` integrates it against the original atoms of ``nu``.
    """
    if mode not in ("restricted", "full"):
        raise ValueError(f"mode must be 'restricted' or 'full', not {mode!r}")
    res = []
    for k, b in enumerate(result.partition.blocks):
        target = integral_over(psi, nu, b, tol)
        if mode == "restricted":
            r = herm.psd_sqrt(result.nu_restricted.atoms[k], tol)
            got = r @ result.block_values[k] @ r
        else:
            got = integral_over(result.phi, nu, b, tol)
        res.append(float(np.linalg.norm(got - target)))
    return DefiningPropertyReport(mode, tuple(res))


def tower_residual(result: ConditionalResult, psi: QuantumRandomVariable, nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> float:
    """``||E[psi] - sum_B nu(B)^{1/2} phi_B nu(B)^{1/2}||_F``."""
    roots = sqrt_atoms(result.nu_restricted, tol)
    total = np.einsum("nij,njk,nkl->il", roots, result.block_values, roots)
    return float(np.linalg.norm(expectation(psi, nu, tol) - total))


def linearity_residual(psi1, psi2, c1, c2, nu: QuantumMeasure, F: Partition, tol: Tolerances = DEFAULT_TOL) -> float:
    """Max pointwise defect of linearity of the block formula.

    ``c1, c2`` are scalars or matrices; matrices are applied on the left and
    are expected to commute with the densities ``dnu/dmu``.
    """

    def scale(c, q):
        return c * q if np.ndim(c) == 0 else q.left_multiply(c)

    combo = scale(c1, psi1) + scale(c2, psi2)
    lhs = block_average(combo, nu, F, tol).phi
    rhs = scale(c1, block_average(psi1, nu, F, tol).phi) + scale(c2, block_average(psi2, nu, F, tol).phi)
    return float(np.max(np.linalg.norm(lhs.values - rhs.values, axis=(1, 2))))


def bayes_residual(psi: QuantumRandomVariable, nu1: QuantumMeasure, nu2: QuantumMeasure, F: Partition, tol: Tolerances = DEFAULT_TOL) -> float:
    """Max block distance between the two sides of the quantum Bayes rule.

    Left: ``QCE_nu2[psi|F] boxtimes dnu2'/dnu1'`` on the block space with the
    restricted ``nu1'`` as context.  Right: the derivative of
    ``B -> int_B psi boxtimes dnu2/dnu1 dnu1`` with respect to ``nu1'``.
    """
    require_invertible_atoms(nu1, tol, "nu1")
    require_invertible_atoms(nu2, tol, "nu2")
    _check_partition(F, nu1)
    n1r, n2r = restrict(nu1, F), restrict(nu2, F)
    qce = cond_expectation(psi, nu2, F, tol).on_blocks
    lhs = boxtimes(qce, rn_derivative(n2r, n1r, tol), RNContext(n1r, tol)).values

    weighted = boxtimes(psi, rn_derivative(nu2, nu1, tol), RNContext(nu1, tol))
    rhs = []
    for b, H in zip(F.blocks, n1r.atoms):
        r = herm.generalized_inverse_sqrt(H, tol)
        rhs.append(r @ integral_over(weighted, nu1, b, tol) @ r)
    return float(np.max(np.linalg.norm(lhs - np.array(rhs), axis=(1, 2))))


def cond_jensen_gap(psi: QuantumRandomVariable, nu: QuantumMeasure, F: Partition, theta, interval, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Per-block ``QCE[theta(psi)] - theta(QCE[psi])``; shape ``(blocks, d, d)``.

    Blocks of zero mass contribute a zero gap.
    """
    _require_probability(nu)
    theta = _convex(theta)
    _check_interval(theta, interval)
    _check_spectra(psi, interval, tol)
    f_psi = psi.map(lambda v: apply_convex(theta, v, interval, tol))
    lhs = block_average(f_psi, nu, F, tol)
    mean = block_average(psi, nu, F, tol)
    gaps = []
    for k in range(F.num_blocks):
        if k in mean.zero_mass_blocks:
            gaps.append(np.zeros((nu.dim, nu.dim), dtype=complex))
            continue
        gaps.append(herm.hermitize(lhs.block_values[k] - apply_convex(theta, mean.block_values[k], interval, tol)))
    return np.array(gaps)


def constant_idempotence_gap(z, nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> float:
    """``||E[E[z]] - E[z]||_F`` for the constant random variable ``z``.

    Nonzero in general: the expectation of a constant is not that constant.
    """
    _require_probability(nu)
    first = expectation(QuantumRandomVariable.constant(nu.space, z), nu, tol)
    second = expectation(QuantumRandomVariable.constant(nu.space, first), nu, tol)
    return float(np.linalg.norm(second - first))
