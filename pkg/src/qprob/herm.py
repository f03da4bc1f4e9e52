"""
Numerical kernel for complex Hermitian and positive semidefinite matrices.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Every function
returning a Hermitian matrix symmetrizes its output with :func:`hermitize`, so
``out == out.conj().T`` holds exactly.

Rank decisions are relative: an eigenvalue counts as zero when it is at most
``rank_rel * max|eigenvalue|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, NotPSDError, NumericalError

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "SpectralDecomposition",
    "hermitize",
    "spectral_decompose",
    "jacobi_eigh",
    "apply_spectral_function",
    "psd_sqrt",
    "psd_clamp",
    "generalized_inverse",
    "generalized_inverse_sqrt",
    "support_projection",
    "geometric_mean",
    "regularized_geometric_mean",
    "geometric_mean_ladder",
    "loewner_leq",
    "min_eigenvalue",
    "is_psd",
    "is_invertible",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used across the package.

    rank_rel
        Relative eigenvalue cutoff for rank and PSD-slack decisions.
    residual
        Bound used when verifying identities.
    gm_eps_ladder
        Relative regularizations for :func:`geometric_mean_ladder`.
    """

    rank_rel: float = 1e-10
    residual: float = 1e-8
    gm_eps_ladder: tuple[float, ...] = (1e-4, 1e-6, 1e-8, 1e-10, 1e-12)

    def __post_init__(self):
        ladder = tuple(float(e) for e in self.gm_eps_ladder)
        object.__setattr__(self, "gm_eps_ladder", ladder)
        if self.rank_rel <= 0 or self.residual <= 0:
            raise ValueError("tolerances must be strictly positive")
        if not ladder or any(e <= 0 for e in ladder):
            raise ValueError("gm_eps_ladder must be a nonempty sequence of positive reals")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("gm_eps_ladder must be strictly decreasing")

    def with_residual(self, residual: float) -> "Tolerances":
        return Tolerances(self.rank_rel, residual, self.gm_eps_ladder)


DEFAULT_TOL = Tolerances()


def _as_square(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionError(f"expected a nonempty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    return A


def hermitize(M) -> np.ndarray:
    """Return ``(M + M^H) / 2``."""
    A = _as_square(M)
    return 0.5 * (A + A.conj().T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (descending) and unitary eigenvector columns of a Hermitian matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def source_dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self, values=None) -> np.ndarray:
        """``U diag(values) U^H``; ``values`` defaults to the eigenvalues."""
        lam = self.eigenvalues if values is None else np.asarray(values)
        U = self.eigenvectors
        return hermitize((U * lam) @ U.conj().T)

    def projections(self, tol: Tolerances = DEFAULT_TOL) -> list[tuple[float, np.ndarray]]:
        """Group eigenvectors by (numerically) equal eigenvalue.

        Returns ``(eigenvalue, spectral projection)`` pairs; the projections
        are pairwise orthogonal and sum to the identity.
        """
        lam = self.eigenvalues
        scale = max(float(np.max(np.abs(lam))), 1.0)
        groups: list[list[int]] = []
        for i in range(lam.shape[0]):
            if groups and abs(lam[groups[-1][0]] - lam[i]) <= tol.rank_rel * scale:
                groups[-1].append(i)
            else:
                groups.append([i])
        out = []
        for g in groups:
            V = self.eigenvectors[:, g]
            out.append((float(np.mean(lam[g])), hermitize(V @ V.conj().T)))
        return out


def _offdiag_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def jacobi_eigh(A, max_sweeps: int = 100, rel_tol: float = 1e-14):
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot ``a_pq`` and then
    applies a real Givens rotation.  Stops when the off-diagonal Frobenius
    norm is at most ``rel_tol * ||A||_F``.

    Returns ``(eigenvalues, eigenvectors)`` in descending order.
    """
    a = hermitize(A).copy()
    d = a.shape[0]
    V = np.eye(d, dtype=complex)
    target = rel_tol * max(np.linalg.norm(a), np.finfo(float).tiny)
    off = _offdiag_norm(a)
    sweeps = 0
    while off > target:
        if sweeps >= max_sweeps:
            raise NumericalError(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off:.3e}, target {target:.3e})"
            )
        sweeps += 1
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                r = abs(apq)
                if r == 0.0:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2.0 * r)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # U = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                U = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ U
                a[idx, :] = U.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                V[:, idx] = V[:, idx] @ U
        off = _offdiag_norm(a)
    lam = np.diag(a).real.copy()
    order = np.argsort(-lam, kind="stable")
    return lam[order], V[:, order]


def spectral_decompose(A, method: str = "lapack") -> SpectralDecomposition:
    """Spectral decomposition with eigenvalues sorted in descending order.

    ``method`` is ``"lapack"`` (``numpy.linalg.eigh``) or ``"jacobi"``
    (:func:`jacobi_eigh`).
    """
    H = hermitize(A)
    if method == "lapack":
        try:
            lam, U = np.linalg.eigh(H)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigh failed: {exc}") from exc
        lam, U = lam[::-1].copy(), U[:, ::-1].copy()
    elif method == "jacobi":
        lam, U = jacobi_eigh(H)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return SpectralDecomposition(lam, U)


def _scale(lam: np.ndarray) -> float:
    return float(np.max(np.abs(lam))) if lam.size else 0.0


def min_eigenvalue(A) -> float:
    return float(np.linalg.eigvalsh(hermitize(A))[0])


def is_psd(A, tol: Tolerances = DEFAULT_TOL) -> bool:
    lam = np.linalg.eigvalsh(hermitize(A))
    return bool(lam[0] >= -tol.rank_rel * _scale(lam))


def is_invertible(A, tol: Tolerances = DEFAULT_TOL, scale: float | None = None) -> bool:
    """True when every eigenvalue of the PSD matrix ``A`` exceeds the rank cutoff.

    The cutoff is ``rank_rel * scale``; ``scale`` defaults to ``max|eigenvalue|``.
    """
    lam = np.linalg.eigvalsh(hermitize(A))
    s = _scale(lam) if scale is None else scale
    return bool(s > 0 and lam[0] > tol.rank_rel * s)


def _psd_spectrum(A, tol: Tolerances):
    dec = spectral_decompose(A)
    lam = dec.eigenvalues
    scale = _scale(lam)
    if lam.size and lam[-1] < -tol.rank_rel * scale:
        raise NotPSDError(
            f"matrix is not positive semidefinite: eigenvalue {lam[-1]:.6e} "
            f"below slack {-tol.rank_rel * scale:.3e}"
        )
    return dec, np.clip(lam, 0.0, None), scale


def apply_spectral_function(
    A,
    f: Callable[[np.ndarray], np.ndarray],
    domain: tuple[float, float] = (-np.inf, np.inf),
    tol: Tolerances = DEFAULT_TOL,
    closed: bool = True,
) -> np.ndarray:
    """Evaluate ``f(A) = U diag(f(lambda)) U^H``.

    Eigenvalues must lie in ``domain`` up to ``rank_rel`` slack; with
    ``closed=False`` the domain is treated as open (endpoints excluded).
    Eigenvalues inside the slack band are clipped to the endpoint before
    ``f`` is applied.
    """
    dec = spectral_decompose(A)
    lam = dec.eigenvalues
    lo, hi = domain
    slack = tol.rank_rel * max(_scale(lam), 1.0)
    for x in lam:
        if closed:
            ok = lo - slack <= x <= hi + slack
        else:
            ok = lo < x < hi
        if not ok:
            bracket = "[]" if closed else "()"
            raise DomainError(
                f"eigenvalue {x:.12g} outside domain {bracket[0]}{lo}, {hi}{bracket[1]}"
            )
    if closed:
        lam = np.clip(lam, lo, hi)
    return dec.reconstruct(np.asarray(f(lam), dtype=float))


def psd_clamp(A, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Zero out slack-level negative eigenvalues; raise if genuinely indefinite.

    A matrix that is already PSD comes back hermitized but otherwise untouched.
    """
    dec, lam, _ = _psd_spectrum(A, tol)
    if dec.eigenvalues[-1] >= 0.0:
        return hermitize(A)
    return dec.reconstruct(lam)


def psd_sqrt(A, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Unique positive square root of a PSD matrix."""
    dec, lam, _ = _psd_spectrum(A, tol)
    return dec.reconstruct(np.sqrt(lam))


def _support_mask(lam: np.ndarray, scale: float, tol: Tolerances) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(lam.shape, dtype=bool)
    return lam > tol.rank_rel * scale


def generalized_inverse(A, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Spectral inverse on the support of ``A``, zero on its kernel."""
    dec, lam, scale = _psd_spectrum(A, tol)
    keep = _support_mask(lam, scale, tol)
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    return dec.reconstruct(inv)


def generalized_inverse_sqrt(A, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``(A^{-1})^{1/2}`` with the generalized inverse."""
    dec, lam, scale = _psd_spectrum(A, tol)
    keep = _support_mask(lam, scale, tol)
    out = np.zeros_like(lam)
    out[keep] = 1.0 / np.sqrt(lam[keep])
    return dec.reconstruct(out)


def support_projection(A, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthogonal projection onto the range of the PSD matrix ``A``."""
    dec, lam, scale = _psd_spectrum(A, tol)
    return dec.reconstruct(_support_mask(lam, scale, tol).astype(float))


def _gm_invertible_base(A, B, tol: Tolerances) -> np.ndarray:
    # A invertible, B PSD (possibly singular): A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}
    dec, lam, _ = _psd_spectrum(A, tol)
    U = dec.eigenvectors
    r = np.sqrt(lam)
    inner = (U.conj().T @ B @ U) / np.outer(r, r)
    s = psd_sqrt(hermitize(inner), tol)
    return psd_clamp(hermitize(U @ (np.outer(r, r) * s) @ U.conj().T), tol)


def _gm_singular(A, B, tol: Tolerances, scale: float) -> np.ndarray:
    """Exact a#b for singular a via the shorted operator of b onto ran(a).

    With H = R (+) K, R = ran(a), the mean is supported on R and equals
    a_R # (b_RR - b_RK b_KK^{-1} b_KR), the largest X with [[a, X], [X, b]] >= 0.
    """
    dec, lam, _ = _psd_spectrum(A, tol)
    keep = lam > tol.rank_rel * scale
    if not np.any(keep):
        return np.zeros_like(hermitize(A))
    R = dec.eigenvectors[:, keep]
    K = dec.eigenvectors[:, ~keep]
    bRR = R.conj().T @ B @ R
    if K.shape[1]:
        bRK = R.conj().T @ B @ K
        # b restricted to ker(a) can be roundoff-sized; judge it against the pair's scale
        wk, Vk = np.linalg.eigh(hermitize(K.conj().T @ B @ K))
        if wk[0] < -1e2 * tol.rank_rel * scale:
            raise NotPSDError(f"second argument has eigenvalue {wk[0]:.3e} on the kernel of the first")
        inv = np.zeros_like(wk)
        kk = wk > tol.rank_rel * scale
        inv[kk] = 1.0 / wk[kk]
        short = hermitize(bRR - bRK @ ((Vk * inv) @ Vk.conj().T) @ bRK.conj().T)
    else:
        short = hermitize(bRR)
    # slack measured against the pair's scale: the Schur complement cancels,
    # and leftover roundoff would be amplified by the square root below
    w, V = np.linalg.eigh(short)
    if w[0] < -1e2 * tol.rank_rel * scale:
        raise NotPSDError(f"shorted operator has eigenvalue {w[0]:.3e}")
    w = np.where(w > tol.rank_rel * scale, w, 0.0)
    short = hermitize((V * w) @ V.conj().T)
    a0 = np.diag(lam[keep]).astype(complex)
    if np.all(w > 0):
        g0 = _gm_invertible_base(a0, short, tol)
    else:
        # singular shorted operator: swap roles so every square root taken is of an invertible matrix
        g0 = _gm_singular(short, a0, tol, scale)
    return psd_clamp(R @ g0 @ R.conj().T, tol)


def geometric_mean(A, B, tol: Tolerances = DEFAULT_TOL, method: str = "auto") -> np.ndarray:
    """Operator geometric mean ``A # B`` of two PSD matrices.

    ``method="auto"`` uses the closed form ``A^{1/2}(A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}``
    whenever one argument is invertible (swapping if needed, since the mean
    is symmetric); if both are singular it uses the exact shorted-operator
    formula, which equals the limit of ``(A + e) # (B + e)`` as ``e -> 0``.
    ``method="ladder"`` evaluates that limit along ``tol.gm_eps_ladder``
    instead (see :func:`geometric_mean_ladder`).
    """
    A = hermitize(A)
    B = hermitize(B)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    if method == "ladder":
        return geometric_mean_ladder(A, B, tol)[0]
    if method != "auto":
        raise ValueError(f"unknown geometric-mean method {method!r}")
    la = np.linalg.eigvalsh(A)
    lb = np.linalg.eigvalsh(B)
    scale = max(_scale(la), _scale(lb))
    if scale == 0.0:
        return np.zeros_like(A)
    for lam, M in ((la, A), (lb, B)):
        if lam[0] < -tol.rank_rel * _scale(lam):
            raise NotPSDError(f"geometric mean argument has eigenvalue {lam[0]:.6e}")
    cut = tol.rank_rel * scale
    a_inv, b_inv = la[0] > cut, lb[0] > cut
    if a_inv and (not b_inv or la[0] / la[-1] >= lb[0] / lb[-1]):
        return _gm_invertible_base(A, B, tol)
    if b_inv:
        return _gm_invertible_base(B, A, tol)
    return _gm_singular(A, B, tol, scale)


def regularized_geometric_mean(A, B, eps: float, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``(A + eps*1) # (B + eps*1)`` by the closed form (``eps`` absolute)."""
    A = hermitize(A)
    I = np.eye(A.shape[0])
    return _gm_invertible_base(A + eps * I, hermitize(B) + eps * I, tol)


def geometric_mean_ladder(A, B, tol: Tolerances = DEFAULT_TOL):
    """Evaluate ``lim_{e->0} (A + e) # (B + e)`` along a regularization ladder.

    Regularizations are ``e_k * scale`` with ``e_k`` from ``tol.gm_eps_ladder``
    and ``scale = max(||A||, ||B||)``.  The last iterate is returned once the
    last gap ``||G_{k} - G_{k+1}||_F`` is at most ``10 * residual * max(scale, 1)``.

    Returns ``(G, gaps)``.  The regularized closed form loses accuracy for
    singular pairs whose supports meet transversally (the limit is then
    approached at rate ``sqrt(e)``), in which case the ladder does not
    stabilize and :class:`ConvergenceError` is raised.
    """
    A = hermitize(A)
    B = hermitize(B)
    scale = max(_scale(np.linalg.eigvalsh(A)), _scale(np.linalg.eigvalsh(B)))
    if scale == 0.0:
        return np.zeros_like(A), []
    iterates = [regularized_geometric_mean(A, B, e * scale, tol) for e in tol.gm_eps_ladder]
    gaps = [float(np.linalg.norm(g1 - g0)) for g0, g1 in zip(iterates, iterates[1:])]
    bound = 10 * tol.residual * max(scale, 1.0)
    if gaps and gaps[-1] > bound:
        raise ConvergenceError(
            f"geometric-mean ladder did not stabilize: last gap {gaps[-1]:.3e} > {bound:.3e}",
            gap=gaps[-1],
        )
    return iterates[-1], gaps


def loewner_leq(A, B, slack: float = 0.0) -> bool:
    """``A <= B`` in Loewner order, i.e. ``min eig(B - A) >= -slack``."""
    A = _as_square(A)
    B = _as_square(B)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return min_eigenvalue(B - A) >= -slack


def stack_hermitize(Ms: Sequence) -> np.ndarray:
    """Hermitize a stack of square matrices of shape ``(n, d, d)``."""
    M = np.asarray(Ms, dtype=complex)
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
