"""Random matrices and high-precision oracles shared by the tests."""
import mpmath as mp
import numpy as np


def rng(seed):
    return np.random.default_rng(seed)


def random_hermitian(r, d, scale=1.0):
    G = r.standard_normal((d, d)) + 1j * r.standard_normal((d, d))
    return scale * (G + G.conj().T) / 2


def random_psd(r, d, rank=None, ridge=0.0):
    rank = d if rank is None else rank
    G = r.standard_normal((d, rank)) + 1j * r.standard_normal((d, rank))
    return G @ G.conj().T + ridge * np.eye(d)


def random_unitary(r, d):
    Q, R = np.linalg.qr(r.standard_normal((d, d)) + 1j * r.standard_normal((d, d)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def to_mp(A):
    return mp.matrix(np.asarray(A, dtype=complex).tolist())


def from_mp(M):
    return np.array(M.tolist(), dtype=complex)


def mp_sqrtm(M):
    E, Q = mp.eighe(M)
    return Q * mp.diag([mp.sqrt(max(e, 0)) for e in E]) * Q.H


def mp_geometric_mean_regularized(A, B, eps, dps=60, factors=False):
    """(A + eps) # (B + eps) evaluated with ``dps`` significant digits.

    With ``factors=True`` the arguments are ``d x r`` factors ``F`` and the
    matrices ``F F^H`` are formed in high precision, so singular inputs
    stay exactly singular.
    """
    with mp.workdps(dps):
        if factors:
            fa, fb = to_mp(A), to_mp(B)
            a, b = fa * fa.H, fb * fb.H
        else:
            a, b = to_mp(A), to_mp(B)
        n = a.rows
        a = a + eps * mp.eye(n)
        b = b + eps * mp.eye(n)
        ra = mp_sqrtm(a)
        ira = mp.inverse(ra)
        return from_mp(ra * mp_sqrtm(ira * b * ira) * ra)
