import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from qprob import calculus as C
from qprob.cli.campaigns import Trial, proportional_fiber_instance, random_strong_pair
from qprob.errors import DimensionError, PreconditionError
from qprob.herm import DEFAULT_TOL
from qprob.measure import QuantumMeasure, SampleSpace, random_povm
from qprob.qrv import QuantumRandomVariable as QRV, channel_apply, expectation, random_qrv

from helpers import random_unitary, rng

seeds = st.integers(0, 2**32 - 1)


def isqrt(h):
    return np.linalg.inv(sla.sqrtm(h))


def weak_not_strong_pair():
    nu1 = QuantumMeasure.from_atoms([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    nu2 = QuantumMeasure.from_atoms([np.eye(2) / 2, np.eye(2) / 2])
    return nu1, nu2


def test_rn_derivative_examples():
    nu1 = QuantumMeasure.from_atoms([np.eye(2) / 2] * 2)
    nu2 = QuantumMeasure.from_atoms([np.diag([0.25, 0.75]), np.diag([0.75, 0.25])])
    phi = C.rn_derivative(nu2, nu1)
    np.testing.assert_allclose(phi.values[0], np.diag([0.5, 1.5]), atol=1e-15)
    r = sla.sqrtm(nu1.atoms[0])
    np.testing.assert_allclose(r @ phi.values[0] @ r, nu2.atoms[0], atol=1e-15)

    nu = random_povm(4, 3, 1)
    for v in C.rn_derivative(nu, nu).values:
        np.testing.assert_allclose(v, np.eye(3), atol=1e-12)
    singular = QuantumMeasure.from_atoms([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    np.testing.assert_allclose(C.rn_derivative(singular, singular).values, singular.atoms, atol=1e-15)

    p, q = np.array([0.2, 0.3, 0.5]), np.array([0.5, 0.1, 0.4])
    phi = C.rn_derivative(QuantumMeasure.from_atoms(q), QuantumMeasure.from_atoms(p))
    np.testing.assert_allclose(phi.values.ravel(), q / p, rtol=1e-15)


def test_rn_derivative_requires_strong_continuity():
    nu1, nu2 = weak_not_strong_pair()
    with pytest.raises(PreconditionError, match="x1"):
        C.rn_derivative(nu2, nu1)
    with pytest.raises(DimensionError):
        C.rn_derivative(random_povm(2, 2, 0), random_povm(3, 2, 0))


def test_rn_derivative_zero_on_null_atoms():
    nu1 = QuantumMeasure.from_atoms([np.eye(2), np.zeros((2, 2))])
    nu2 = QuantumMeasure.from_atoms([np.eye(2), np.zeros((2, 2))])
    np.testing.assert_array_equal(C.rn_derivative(nu2, nu1).values[1], np.zeros((2, 2)))


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_rn_matches_assembled_formula(seed, n, d):
    nu1 = random_povm(n, d, (seed, 1))
    nu2 = random_povm(n, d, (seed, 2))
    a = C.rn_derivative(nu2, nu1).values
    b = C.rn_derivative_assembled(nu2, nu1).values
    np.testing.assert_allclose(a, b, atol=1e-9 * max(1, np.abs(a).max()))


def test_assembled_formula_on_unnormalized_measures():
    nu1, nu2 = random_strong_pair(4, 3, (5, 1))
    a = C.rn_derivative(nu2, nu1).values
    np.testing.assert_allclose(C.rn_derivative_assembled(nu2, nu1).values, a, atol=1e-9)


def test_verify_rn():
    for seed in range(10):
        nu1, nu2 = random_strong_pair(5, 3, (seed, 0))
        rep = C.verify_rn(nu2, nu1)
        assert rep.strong and rep.weak and not rep.flagged and rep.passed
        assert rep.residual <= 1e-8
    nu = random_povm(4, 3, 3)
    assert C.verify_rn(nu, nu).residual <= 1e-14
    nu1, nu2 = weak_not_strong_pair()
    rep = C.verify_rn(nu2, nu1)
    assert rep.weak and not rep.strong and rep.flagged
    assert rep.residual == pytest.approx(0.5)


def test_boxtimes_examples():
    r = rng(0)
    U = random_unitary(r, 3)

    def diag_in_U(x):
        return U @ np.diag(x) @ U.conj().T

    w = r.uniform(0.1, 1, size=(4, 3))
    nu1 = QuantumMeasure.from_atoms([diag_in_U(x) for x in w / w.sum(axis=0)])
    psi_e = r.uniform(-1, 1, size=(4, 3))
    phi_e = r.uniform(0.2, 3, size=(4, 3))
    psi = QRV(nu1.space, [diag_in_U(x) for x in psi_e])
    phi = QRV(nu1.space, [diag_in_U(x) for x in phi_e])
    ctx = C.RNContext(nu1)
    out = C.boxtimes(psi, phi, ctx)
    np.testing.assert_allclose(out.values, [diag_in_U(x) for x in psi_e * phi_e], atol=1e-12)

    nu = random_povm(4, 3, 2)
    psi = random_qrv(4, 3, 3)
    one = QRV.constant(nu.space, np.eye(3))
    np.testing.assert_allclose(C.boxtimes(psi, one, C.RNContext(nu)).values, psi.values, atol=1e-12)

    c = QuantumMeasure.from_atoms([0.3, 0.7])
    out = C.boxtimes(QRV.from_values([2.0, -1.0]), QRV.from_values([0.5, 4.0]), C.RNContext(c))
    np.testing.assert_allclose(out.values.ravel(), [1.0, -4.0], atol=1e-15)


def test_boxtimes_with_singular_density():
    nu = QuantumMeasure.from_atoms([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    psi = QRV(nu.space, [np.diag([3.0, 5.0]), np.diag([7.0, 11.0])])
    phi = QRV(nu.space, [np.diag([2.0, 9.0]), np.diag([4.0, 6.0])])
    out = C.boxtimes(psi, phi, C.RNContext(nu))
    np.testing.assert_allclose(out.values, [np.diag([6.0, 0.0]), np.diag([0.0, 66.0])], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 5), st.integers(1, 4))
def test_boxtimes_against_closed_form(seed, n, d):
    # psi boxtimes dnu2/dnu1 = h1^{-1/2} h2^{1/2} psi h2^{1/2} h1^{-1/2} for invertible h1
    nu1 = random_povm(n, d, (seed, 1), ridge=0.05)
    nu2 = random_povm(n, d, (seed, 2), ridge=0.05)
    psi = random_qrv(n, d, (seed, 3), (-1, 1))
    out = C.boxtimes(psi, C.rn_derivative(nu2, nu1), C.RNContext(nu1)).values
    for h1, h2, v, got in zip(nu1.atoms, nu2.atoms, psi.values, out):
        a, b = isqrt(h1), sla.sqrtm(h2)
        np.testing.assert_allclose(got, a @ b @ v @ b @ a, atol=1e-9)


def test_boxtimes_dimension_check():
    nu = random_povm(3, 2, 0)
    with pytest.raises(DimensionError):
        C.boxtimes(random_qrv(3, 3, 0), random_qrv(3, 2, 0), C.RNContext(nu))


def test_change_of_measure_examples():
    nu = random_povm(5, 3, 4)
    psi = random_qrv(5, 3, 5, (-1, 1))
    assert C.change_of_measure_residual(psi, nu, nu) <= 1e-8
    p, q = QuantumMeasure.from_atoms([0.1, 0.6, 0.3]), QuantumMeasure.from_atoms([0.5, 0.2, 0.3])
    assert C.change_of_measure_residual(QRV.from_values([2.0, -1.0, 0.5]), q, p) <= 1e-15
    singular = QuantumMeasure.from_atoms([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    with pytest.raises(PreconditionError):
        C.change_of_measure_residual(random_qrv(2, 2, 0), singular, singular)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(1, 6))
def test_change_of_measure_random(seed, n, d):
    nu1 = random_povm(n, d, (seed, 1))
    nu2 = random_povm(n, d, (seed, 2))
    psi = random_qrv(n, d, (seed, 3), (-1, 1))
    assert C.change_of_measure_residual(psi, nu2, nu1) <= 1e-8


def test_chain_rule_and_inverse_examples():
    nu = random_povm(4, 3, 6)
    assert C.chain_rule_residual(nu, nu, nu) <= 1e-10
    assert C.inverse_residual(nu, nu) <= 1e-10
    ps = [QuantumMeasure.from_atoms(x) for x in ([0.2, 0.8], [0.6, 0.4], [0.5, 0.5])]
    assert C.chain_rule_residual(*ps) <= 1e-15
    assert C.inverse_residual(ps[0], ps[1]) <= 1e-15


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_chain_rule_and_inverse_random(seed, n, d):
    nus = [random_povm(n, d, (seed, k)) for k in range(3)]
    assert C.chain_rule_residual(*nus) <= 1e-8
    assert C.inverse_residual(nus[0], nus[1]) <= 1e-8


def test_chain_rule_closed_form():
    nus = [random_povm(3, 3, (9, k), ridge=0.05) for k in range(3)]
    lhs = C.boxtimes(C.rn_derivative(nus[0], nus[1]), C.rn_derivative(nus[1], nus[2]), C.RNContext(nus[2]))
    for h1, h3, got in zip(nus[0].atoms, nus[2].atoms, lhs.values):
        a = isqrt(h3)
        np.testing.assert_allclose(got, a @ h1 @ a, atol=1e-10)


def test_residuals_are_permutation_invariant():
    nu1 = random_povm(5, 3, 1)
    nu2 = random_povm(5, 3, 2)
    psi = random_qrv(5, 3, 3, (-1, 1))
    perm = rng(4).permutation(5)
    space = SampleSpace(tuple(nu1.space.labels[i] for i in perm))

    def permuted(nu):
        return QuantumMeasure(space, nu.atoms[perm])

    p_psi = QRV(space, psi.values[perm])
    a = C.change_of_measure_residual(psi, nu2, nu1)
    b = C.change_of_measure_residual(p_psi, permuted(nu2), permuted(nu1))
    assert abs(a - b) <= 1e-14
    np.testing.assert_allclose(C.rn_derivative(permuted(nu2), permuted(nu1)).values, C.rn_derivative(nu2, nu1).values[perm])


def test_change_of_variables():
    nu = random_povm(4, 2, 8)
    rep = C.change_of_variables_residual(random_qrv(4, 2, 9), nu)
    assert rep.injective and rep.num_groups == 4 and rep.residual <= 1e-14
    rep = C.change_of_variables_residual(QRV.constant(nu.space, 3 * np.eye(2)), nu)
    assert not rep.injective and rep.residual <= 1e-12
    # a non-scalar constant a: the law side gives a, the expectation does not
    a = np.diag([1.0, 3.0])
    rep = C.change_of_variables_residual(QRV.constant(nu.space, a), nu)
    assert rep.residual == pytest.approx(np.linalg.norm(channel_apply(nu, a) - a), abs=1e-12)
    # fiber {x1, x2} with non-proportional atoms: reported, generally nonzero
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    psi = QRV(nu.space, [b, b, np.eye(2), 2 * np.eye(2)])
    rep = C.change_of_variables_residual(psi, nu)
    assert not rep.injective and rep.num_groups == 3
    assert rep.residual > 1e-6


def test_change_of_variables_proportional_fibers():
    for seed in range(10):
        psi, nu = proportional_fiber_instance(Trial(0, seed, 3, 6, DEFAULT_TOL))
        rep = C.change_of_variables_residual(psi, nu)
        assert not rep.injective and rep.residual <= 1e-12
        assert np.linalg.norm(expectation(psi, nu)) > 0
