"""
Radon-Nikodym derivatives between quantum measures and the boxtimes product.

On a finite space the derivative ``dnu2/dnu1`` is computed atomwise as
``h1^{-1/2} h2 h1^{-1/2}`` (generalized inverses).  This equals the
three-factor expression built from the trace measures, which is kept as
:func:`rn_derivative_assembled` for cross-checking.

The theorem checks (change of measure, chain rule, inverse, change of
variables) return Frobenius-norm residuals so campaigns can aggregate them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import herm
from .errors import DimensionError, PreconditionError
from .herm import DEFAULT_TOL, Tolerances
from .measure import QuantumMeasure, dnu_dmu, induced_mu, is_abs_continuous
from .qrv import QuantumRandomVariable, expectation, expectation_via_law, law

__all__ = [
    "RNContext",
    "RNReport",
    "CoVReport",
    "rn_derivative",
    "rn_derivative_assembled",
    "verify_rn",
    "boxtimes",
    "change_of_measure_residual",
    "chain_rule_residual",
    "inverse_residual",
    "change_of_variables_residual",
    "require_invertible_atoms",
]


@dataclass(frozen=True)
class RNContext:
    """The base measure whose ``dnu/dmu`` the boxtimes product sandwiches with."""

    base_measure: QuantumMeasure
    tol: Tolerances = DEFAULT_TOL
    dnu1_dmu1: QuantumRandomVariable = field(init=False, repr=False, compare=False)
    _spectra: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        D = dnu_dmu(self.base_measure, self.tol)
        object.__setattr__(self, "dnu1_dmu1", D)
        spectra = []
        for v in D.values:
            w, U = np.linalg.eigh(v)
            invertible = w[0] > self.tol.rank_rel * max(w[-1], 0.0)
            spectra.append((np.clip(w, 0.0, None), U, invertible))
        object.__setattr__(self, "_spectra", tuple(spectra))


def _same_shape(nu2: QuantumMeasure, nu1: QuantumMeasure):
    if nu1.space != nu2.space or nu1.dim != nu2.dim:
        raise DimensionError("measures live on different spaces or dimensions")


def require_invertible_atoms(nu: QuantumMeasure, tol: Tolerances = DEFAULT_TOL, what: str = "measure"):
    bad = [lab for lab, h in zip(nu.space.labels, nu.atoms) if not herm.is_invertible(h, tol)]
    if bad:
        raise PreconditionError(f"{what} has non-invertible atoms at {bad}")


def _rn_atomwise(nu2: QuantumMeasure, nu1: QuantumMeasure, tol: Tolerances) -> np.ndarray:
    vals = []
    for h1, h2 in zip(nu1.atoms, nu2.atoms):
        r = herm.generalized_inverse_sqrt(h1, tol)
        vals.append(herm.hermitize(r @ h2 @ r))
    return np.array(vals)


def rn_derivative(nu2: QuantumMeasure, nu1: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> QuantumRandomVariable:
    """``dnu2/dnu1`` at each point: ``h1^{-1/2} h2 h1^{-1/2}``, zero where ``h1 = 0``.

    Requires strong absolute continuity (support of each ``h2`` inside the
    support of ``h1``); otherwise the derivative does not reproduce ``nu2``.
    """
    _same_shape(nu2, nu1)
    if not is_abs_continuous(nu2, nu1, "strong", tol):
        bad = _strong_failures(nu2, nu1, tol)
        raise PreconditionError(f"nu2 is not strongly absolutely continuous w.r.t. nu1 at {bad}")
    return QuantumRandomVariable(nu1.space, _rn_atomwise(nu2, nu1, tol))


def _strong_failures(nu2: QuantumMeasure, nu1: QuantumMeasure, tol: Tolerances) -> list[str]:
    bad = []
    for lab, h1, h2 in zip(nu1.space.labels, nu1.atoms, nu2.atoms):
        q1 = herm.support_projection(h1, tol)
        q2 = herm.support_projection(h2, tol)
        if np.linalg.norm(q1 @ q2 @ q1 - q2) > tol.residual:
            bad.append(lab)
    return bad


def rn_derivative_assembled(nu2: QuantumMeasure, nu1: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> QuantumRandomVariable:
    """Derivative assembled from trace-measure densities.

    ``(dmu2/dmu1) * D1^{-1/2} D2 D1^{-1/2}`` with ``Di = dnui/dmui``.  Works for
    measures that are not normalized.
    """
    _same_shape(nu2, nu1)
    mu1 = induced_mu(nu1).weights
    mu2 = induced_mu(nu2).weights
    D1 = dnu_dmu(nu1, tol).values
    D2 = dnu_dmu(nu2, tol).values
    vals = []
    for m1, m2, a, b in zip(mu1, mu2, D1, D2):
        if m1 <= 0:
            vals.append(np.zeros_like(a))
            continue
        r = herm.generalized_inverse_sqrt(a, tol)
        vals.append((m2 / m1) * herm.hermitize(r @ b @ r))
    return QuantumRandomVariable(nu1.space, np.array(vals))


@dataclass(frozen=True)
class RNReport:
    residual: float
    atom_residuals: tuple[float, ...]
    weak: bool
    strong: bool
    flagged: bool

    @property
    def passed(self) -> bool:
        return self.strong and not self.flagged


def verify_rn(nu2: QuantumMeasure, nu1: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> RNReport:
    """Atomwise reproduction residual ``max_x ||h1^{1/2} phi h1^{1/2} - h2||_F``.

    The derivative is formed whenever weak continuity holds; a pair that is
    weakly but not strongly continuous and fails to reproduce is flagged.
    """
    _same_shape(nu2, nu1)
    weak = is_abs_continuous(nu2, nu1, "weak", tol)
    strong = weak and is_abs_continuous(nu2, nu1, "strong", tol)
    phi = _rn_atomwise(nu2, nu1, tol)
    res = []
    for h1, h2, p in zip(nu1.atoms, nu2.atoms, phi):
        r = herm.psd_sqrt(h1, tol)
        res.append(float(np.linalg.norm(r @ p @ r - h2)))
    worst = max(res)
    return RNReport(worst, tuple(res), weak, strong, flagged=worst > tol.residual)


def boxtimes(psi: QuantumRandomVariable, phi: QuantumRandomVariable, ctx: RNContext) -> QuantumRandomVariable:
    """Pointwise ``G D^{1/2} psi D^{1/2} G`` with ``G = D^{-1} # phi``.

    ``D`` is ``dnu1/dmu1`` of ``ctx.base_measure``; ``phi`` is meant to be a
    derivative ``dnu2/dnu1`` against that same base measure.
    """
    base = ctx.base_measure
    for name, q in (("psi", psi), ("phi", phi)):
        if q.space != base.space or q.dim != base.dim:
            raise DimensionError(f"{name} does not match the context measure's space/dimension")
    out = []
    for (w, U, invertible), p, v in zip(ctx._spectra, phi.values, psi.values):
        r = np.sqrt(w)
        if invertible:
            # G D^{1/2} = D^{-1/2} M with M = (D^{1/2} phi D^{1/2})^{1/2}
            M = herm.psd_sqrt(herm.hermitize((U.conj().T @ p @ U) * np.outer(r, r)), ctx.tol)
            core = M @ (U.conj().T @ v @ U) @ M / np.outer(r, r)
            out.append(U @ core @ U.conj().T)
            continue
        keep = w > ctx.tol.rank_rel * max(w[-1], 0.0)
        inv = np.zeros_like(w)
        inv[keep] = 1.0 / w[keep]
        G = herm.geometric_mean((U * inv) @ U.conj().T, p, ctx.tol)
        root = (U * r) @ U.conj().T
        out.append(G @ root @ v @ root @ G)
    return QuantumRandomVariable(base.space, np.array(out), psi.hermitian)


def change_of_measure_residual(psi: QuantumRandomVariable, nu2: QuantumMeasure, nu1: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> float:
    """``||E_nu2[psi] - E_nu1[psi boxtimes dnu2/dnu1]||_F``."""
    require_invertible_atoms(nu1, tol, "nu1")
    phi = rn_derivative(nu2, nu1, tol)
    rhs = expectation(boxtimes(psi, phi, RNContext(nu1, tol)), nu1, tol)
    return float(np.linalg.norm(expectation(psi, nu2, tol) - rhs))


def chain_rule_residual(nu1: QuantumMeasure, nu2: QuantumMeasure, nu3: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> float:
    """``max_x ||(dnu1/dnu2 boxtimes dnu2/dnu3)(x) - dnu1/dnu3(x)||_F``."""
    require_invertible_atoms(nu2, tol, "nu2")
    require_invertible_atoms(nu3, tol, "nu3")
    lhs = boxtimes(rn_derivative(nu1, nu2, tol), rn_derivative(nu2, nu3, tol), RNContext(nu3, tol))
    rhs = rn_derivative(nu1, nu3, tol)
    return float(np.max(np.linalg.norm(lhs.values - rhs.values, axis=(1, 2))))


def inverse_residual(nu1: QuantumMeasure, nu2: QuantumMeasure, tol: Tolerances = DEFAULT_TOL) -> float:
    """Distance of ``dnu1/dnu2 boxtimes dnu2/dnu1`` (and the swap) from the identity."""
    require_invertible_atoms(nu1, tol, "nu1")
    require_invertible_atoms(nu2, tol, "nu2")
    d12 = rn_derivative(nu1, nu2, tol)
    d21 = rn_derivative(nu2, nu1, tol)
    I = np.eye(nu1.dim)
    a = boxtimes(d12, d21, RNContext(nu1, tol)).values - I
    b = boxtimes(d21, d12, RNContext(nu2, tol)).values - I
    return float(max(np.linalg.norm(a, axis=(1, 2)).max(), np.linalg.norm(b, axis=(1, 2)).max()))


@dataclass(frozen=True)
class CoVReport:
    injective: bool
    residual: float
    num_groups: int


def change_of_variables_residual(psi: QuantumRandomVariable, nu: QuantumMeasure, grouping_tol: float = 1e-9, tol: Tolerances = DEFAULT_TOL) -> CoVReport:
    """Compare ``E_nu[psi]`` with the integral of the identity against the law of ``psi``."""
    m = law(psi, nu, grouping_tol)
    res = float(np.linalg.norm(expectation(psi, nu, tol) - expectation_via_law(m, tol)))
    return CoVReport(injective=len(m.groups) == psi.n, residual=res, num_groups=len(m.groups))
