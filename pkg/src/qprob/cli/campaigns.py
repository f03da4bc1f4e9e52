"""
Seeded verification campaigns.

A campaign runs a trial function over ``trials`` random instances.  Trial
``t`` draws everything from ``rng_for(seed, t, stream)``, so results do not
depend on execution order and serial and parallel runs agree.  Each trial
returns a nonnegative residual; the campaign passes when no trial raised and
the largest residual is within the tolerance.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import __version__, calculus, conditional, herm, qrv
from ..errors import QProbError
from ..herm import Tolerances
from ..measure import (
    QuantumMeasure,
    SampleSpace,
    _complex_gaussian,
    random_partition,
    random_povm,
    rng_for,
)

SCHEMA_VERSION = "1.0"

# theta -> interval its random variables are drawn from
JENSEN_INTERVALS = {
    "square": (-1.0, 1.0),
    "identity": (-1.0, 1.0),
    "inverse": (0.05, 1.0),
    "neglog": (0.05, 1.0),
    "xlogx": (0.05, 1.0),
}


@dataclass(frozen=True)
class SizeRange:
    lo: int
    hi: int

    @classmethod
    def parse(cls, text) -> "SizeRange":
        """``"4"`` or ``"2..6"`` (inclusive)."""
        text = str(text)
        lo, _, hi = text.partition("..")
        r = cls(int(lo), int(hi or lo))
        if r.lo < 1 or r.hi < r.lo:
            raise ValueError(f"bad size range {text!r}")
        return r

    def draw(self, rng: np.random.Generator) -> int:
        return self.lo if self.lo == self.hi else int(rng.integers(self.lo, self.hi + 1))

    def __str__(self):
        return str(self.lo) if self.lo == self.hi else f"{self.lo}..{self.hi}"


@dataclass(frozen=True)
class Trial:
    index: int
    seed: int
    d: int
    n: int
    tol: Tolerances

    def stream(self, k: int) -> tuple[int, int, int]:
        return (self.seed, self.index, k)


def _block_count(trial: Trial) -> int:
    rng = rng_for(*trial.stream(90))
    if trial.n >= 3:
        return int(rng.integers(2, trial.n))
    return int(rng.integers(1, trial.n + 1))


def random_psd_qrv(trial: Trial, k: int, spectrum=(0.05, 1.0)):
    return qrv.random_qrv(trial.n, trial.d, trial.stream(k), spectrum)


def random_strong_pair(n: int, d: int, seed, rank: int | None = None) -> tuple[QuantumMeasure, QuantumMeasure]:
    """Probability ``nu1`` with rank-deficient atoms and an unnormalized ``nu2``
    whose atoms live inside the matching ``nu1`` supports."""
    rng = rng_for(*seed)
    if rank is None:
        rank = d - 1 if n * (d - 1) >= d and d > 1 else d
    A = _complex_gaussian(rng, (n, d, rank))
    G = A @ np.conj(np.swapaxes(A, 1, 2))
    S_isqrt = herm.generalized_inverse_sqrt(G.sum(axis=0))
    h1 = herm.stack_hermitize(S_isqrt @ G @ S_isqrt)
    space = SampleSpace.of_size(n)
    nu1 = QuantumMeasure(space, h1)
    atoms2 = []
    for h in h1:
        w, V = np.linalg.eigh(h)
        R = V[:, w > 1e-9 * w.max()]
        C = _complex_gaussian(rng, (R.shape[1], R.shape[1]))
        atoms2.append(R @ (C @ C.conj().T) @ R.conj().T / d)
    return nu1, QuantumMeasure(space, np.array(atoms2), is_probability=False)


def proportional_fiber_instance(trial: Trial):
    """A measure and a non-injective random variable whose fibers carry
    proportional atoms, so the law reproduces the expectation exactly."""
    k = max(1, trial.n // 2)
    base = random_povm(k, trial.d, trial.stream(1), tol=trial.tol)
    groups = random_partition(trial.n, trial.stream(2), k)
    rng = rng_for(*trial.stream(3))
    atoms = np.empty((trial.n, trial.d, trial.d), dtype=complex)
    for g, block in enumerate(groups.blocks):
        w = rng.uniform(0.2, 1.0, size=len(block))
        w /= w.sum()
        for i, wi in zip(block, w):
            atoms[i] = wi * base.atoms[g]
    space = SampleSpace.of_size(trial.n)
    nu = QuantumMeasure(space, atoms, tol=trial.tol)
    vals = qrv.random_qrv(k, trial.d, trial.stream(4)).values
    psi = qrv.QuantumRandomVariable(space, vals[groups.block_ids()])
    return psi, nu


# ---------------------------------------------------------------------------
# trial functions: Trial -> nonnegative residual


def _measures(trial: Trial, count: int):
    return [random_povm(trial.n, trial.d, trial.stream(10 + k), tol=trial.tol) for k in range(count)]


def trial_change_of_measure(t: Trial) -> float:
    nu1, nu2 = _measures(t, 2)
    return calculus.change_of_measure_residual(qrv.random_qrv(t.n, t.d, t.stream(1), (-1.0, 1.0)), nu2, nu1, t.tol)


def trial_chain_rule(t: Trial) -> float:
    return calculus.chain_rule_residual(*_measures(t, 3), t.tol)


def trial_inverse(t: Trial) -> float:
    return calculus.inverse_residual(*_measures(t, 2), t.tol)


def trial_change_of_variables(t: Trial) -> float:
    psi, nu = proportional_fiber_instance(t)
    return calculus.change_of_variables_residual(psi, nu, tol=t.tol).residual


def trial_bayes(t: Trial) -> float:
    nu1, nu2 = _measures(t, 2)
    F = random_partition(t.n, t.stream(2), _block_count(t))
    return conditional.bayes_residual(random_psd_qrv(t, 1), nu1, nu2, F, t.tol)


def _neg_part(gaps) -> float:
    worst = min(float(np.linalg.eigvalsh(g)[0]) for g in np.reshape(gaps, (-1,) + np.shape(gaps)[-2:]))
    return max(0.0, -worst)


def trial_jensen(t: Trial) -> float:
    (nu,) = _measures(t, 1)
    out = 0.0
    for k, (name, iv) in enumerate(JENSEN_INTERVALS.items()):
        psi = qrv.random_qrv(t.n, t.d, t.stream(20 + k), iv)
        out = max(out, _neg_part(qrv.jensen_gap(psi, nu, name, iv, t.tol)))
    return out


def trial_cond_jensen(t: Trial) -> float:
    (nu,) = _measures(t, 1)
    F = random_partition(t.n, t.stream(2), _block_count(t))
    out = 0.0
    for k, (name, iv) in enumerate(JENSEN_INTERVALS.items()):
        psi = qrv.random_qrv(t.n, t.d, t.stream(20 + k), iv)
        out = max(out, _neg_part(conditional.cond_jensen_gap(psi, nu, F, name, iv, t.tol)))
    return out


def channel_defects(nu: QuantumMeasure, seed, num_z: int = 100, tol: Tolerances | None = None) -> tuple[float, float]:
    """(negative part of the Choi spectrum, worst trace defect over random ``z``)."""
    tol = tol or nu.tol
    choi_neg = max(0.0, -float(np.linalg.eigvalsh(qrv.choi_matrix(nu, tol))[0]))
    Z = _complex_gaussian(rng_for(*seed), (num_z, nu.dim, nu.dim))
    trace_def = max(abs(np.trace(qrv.channel_apply(nu, z, tol)) - np.trace(z)) for z in Z)
    return choi_neg, float(trace_def)


def trial_channel(t: Trial) -> float:
    (nu,) = _measures(t, 1)
    return max(channel_defects(nu, t.stream(1), tol=t.tol))


def cesaro_defects(nu: QuantumMeasure, tol: Tolerances) -> tuple[float, float]:
    """(idempotence defect, distance between the range and the fixed-point space)."""
    P = qrv.cesaro_projection(nu, tol=tol).action
    S = qrv.channel_as_supermap(nu, tol).action
    idem = float(np.linalg.norm(P @ P - P))
    fixed = qrv.fixed_points(nu, tol)
    keeps = max((float(np.linalg.norm(P @ f.reshape(-1) - f.reshape(-1))) for f in fixed), default=0.0)
    lands = float(np.linalg.norm(S @ P - P))
    return idem, max(keeps, lands)


def trial_cesaro(t: Trial) -> float:
    (nu,) = _measures(t, 1)
    return max(cesaro_defects(nu, t.tol))


def trial_rn(t: Trial) -> float:
    nu1, nu2 = random_strong_pair(t.n, t.d, t.stream(1))
    return calculus.verify_rn(nu2, nu1, t.tol).residual


CAMPAIGNS: dict[str, Callable[[Trial], float]] = {
    "change-of-measure": trial_change_of_measure,
    "chain-rule": trial_chain_rule,
    "inverse": trial_inverse,
    "change-of-variables": trial_change_of_variables,
    "bayes": trial_bayes,
    "jensen": trial_jensen,
    "cond-jensen": trial_cond_jensen,
    "channel": trial_channel,
    "rn": trial_rn,
    "cesaro": trial_cesaro,
}


def _run_one(args):
    name, trial = args
    try:
        return float(CAMPAIGNS[name](trial)), None
    except (QProbError, ArithmeticError, ValueError) as exc:
        return None, {"trial": trial.index, "error": type(exc).__name__, "message": str(exc)}


def make_trials(seed: int, trials: int, dim: SizeRange, points: SizeRange, tol: Tolerances) -> list[Trial]:
    out = []
    for t in range(trials):
        rng = rng_for(seed, t, 0)
        out.append(Trial(t, seed, dim.draw(rng), points.draw(rng), tol))
    return out


def run_campaign(
    name: str,
    trials: int,
    seed: int,
    dim="3",
    points="4",
    tolerance: float = 1e-8,
    jobs: int = 1,
) -> dict:
    """Run a campaign and return its JSON-ready report."""
    if name not in CAMPAIGNS:
        raise KeyError(f"unknown theorem {name!r} (choose from {sorted(CAMPAIGNS)})")
    dim, points = SizeRange.parse(dim), SizeRange.parse(points)
    tol = Tolerances(residual=tolerance)
    start = time.perf_counter()
    work = [(name, t) for t in make_trials(seed, trials, dim, points, tol)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [_run_one(w) for w in work]
    residuals = [r for r, _ in results]
    failures = [f for _, f in results if f is not None]
    done = [r for r in residuals if r is not None]
    worst = max(done) if done else None
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "qprob",
        "tool_version": __version__,
        "campaign": name,
        "seed": seed,
        "trials": trials,
        "dim": str(dim),
        "points": str(points),
        "tolerance": tolerance,
        "rank_rel": tol.rank_rel,
        "residuals": residuals,
        "failures": failures,
        "max_residual": worst,
        "mean_residual": float(np.mean(done)) if done else None,
        "pass": bool(done) and not failures and worst <= tolerance,
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
