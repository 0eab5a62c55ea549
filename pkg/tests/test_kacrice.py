from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torus_nodal import kacrice
from torus_nodal.ensemble import two_point_jet, u_moment_exact
from torus_nodal.errors import DegenerateSeparationError, NonPositiveDefiniteOmegaError
from torus_nodal.kacrice import (
    blocks_from_two_point,
    classify_points,
    classify_singular,
    covariance_blocks,
    expected_volume,
    gradient_variance,
    kernel_K,
    min_eig_sigma,
    nodal_constant,
    one_minus_u_squared,
    second_moment,
    sigma_matrix,
    singular_set_measure,
)
from torus_nodal.lattice import enumerate_frequencies

FS25 = enumerate_frequencies(2, 25)
FS6 = enumerate_frequencies(3, 6)
points2 = st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99))


def test_block_structure():
    rs = np.random.default_rng(0)
    for fs in (FS25, FS6):
        d, E = fs.dim, fs.energy
        s = gradient_variance(d, E)
        for z in rs.random((200, d)):
            b = covariance_blocks(fs, z)
            jet = two_point_jet(fs, z)
            assert np.array_equal(b.A, [[1, jet.u], [jet.u, 1]])
            assert np.allclose(b.B[0, :d], 0) and np.allclose(b.B[1, d:], 0)
            assert np.allclose(b.B[0, d:], -jet.grad_u) and np.allclose(b.B[1, :d], jet.grad_u)
            assert np.allclose(b.C[:d, :d], s * np.eye(d), rtol=1e-12, atol=0)
            assert np.allclose(b.C[:d, d:], -jet.hess_u)
            assert np.allclose(b.Sigma, b.Sigma.T)
            assert b.Sigma.shape == (2 * d + 2, 2 * d + 2)


def test_determinant_factorization():
    rs = np.random.default_rng(1)
    for fs in (FS25, FS6):
        for z in rs.random((300, fs.dim)):
            b = covariance_blocks(fs, z)
            lhs = np.linalg.det(b.Sigma)
            assert abs(lhs - (1 - b.u**2) * np.linalg.det(b.Omega)) <= 1e-8 * abs(lhs)


def test_omega_from_s_and_schur_complement():
    rs = np.random.default_rng(2)
    for fs in (FS25, FS6):
        s = gradient_variance(fs.dim, fs.energy)
        for z in rs.random((200, fs.dim)):
            b = covariance_blocks(fs, z)
            schur = b.C - b.B.T @ np.linalg.solve(b.A, b.B)
            scale = np.abs(schur).max()
            assert np.abs(s * (np.eye(2 * fs.dim) - b.S) - schur).max() <= 1e-9 * scale
            assert np.abs(b.Omega - schur).max() <= 1e-9 * scale
            eig = np.linalg.eigvalsh(b.S)
            assert b.sigma_norm == pytest.approx(np.abs(eig).max())
            assert b.sigma_norm <= math.sqrt(np.trace(b.S @ b.S)) + 1e-12


def test_sigma_matrix_is_covariance_of_the_jets():
    # Sigma equals the Gram matrix of (f(x), f(y), grad f(x), grad f(y)) in coefficient space
    lam = FS25.half_array.astype(float)
    x, y = np.array([0.3, 0.8]), np.array([0.05, 0.2])
    rows = []
    for p in (x, y):
        ph = 2 * np.pi * lam @ p
        rows.append(np.concatenate([np.cos(ph), -np.sin(ph)]))
    for p in (x, y):
        ph = 2 * np.pi * lam @ p
        rows.extend(2 * np.pi * np.concatenate([-np.sin(ph) * lam[:, j], -np.cos(ph) * lam[:, j]]) for j in range(2))
    G = np.array(rows) * math.sqrt(2 / FS25.N)
    assert np.allclose(G @ G.T, sigma_matrix(FS25, x - y), atol=1e-9)


def test_synthetic_identity_blocks():
    b = blocks_from_two_point(0.0, np.zeros(2), np.zeros((2, 2)), 2, 25)
    assert np.allclose(b.Omega, gradient_variance(2, 25) * np.eye(4))
    assert np.allclose(b.S, 0) and b.sigma_norm == 0


def test_degenerate_separation():
    with pytest.raises(DegenerateSeparationError):
        covariance_blocks(FS25, [0.0, 0.0])
    with pytest.raises(DegenerateSeparationError):
        covariance_blocks(enumerate_frequencies(2, 1), [0.5, 0.5])


def test_one_minus_u_squared_is_accurate_near_diagonal():
    z = np.array([1e-6, 2e-6])
    s = gradient_variance(2, 25)
    assert one_minus_u_squared(FS25, z) == pytest.approx(s * (z @ z), rel=1e-6)


def test_kernel_identity_point():
    b = blocks_from_two_point(0.0, np.zeros(2), np.zeros((2, 2)), 2, 25)
    est = kernel_K(b, 200_000, 3)
    assert abs(est.value - nodal_constant(2) ** 2 * 25) <= 3 * est.std_error
    assert est.mc_samples == 200_000 and est.seed == 3


@pytest.mark.parametrize("u", [0.3, -0.6, 0.9])
def test_kernel_closed_form_with_correlated_values(u):
    b = blocks_from_two_point(u, np.zeros(2), np.zeros((2, 2)), 2, 25)
    est = kernel_K(b, 200_000, 4)
    target = nodal_constant(2) ** 2 * 25 / math.sqrt(1 - u * u)
    assert abs(est.value - target) <= 3 * est.std_error


def test_kernel_prefactor_canary(monkeypatch):
    b = blocks_from_two_point(0.6, np.zeros(2), np.zeros((2, 2)), 2, 25)
    target = nodal_constant(2) ** 2 * 25 / 0.8
    monkeypatch.setattr(kacrice, "_value_density_at_zero", lambda one_minus: 1 / (2 * math.pi))
    est = kernel_K(b, 200_000, 4)
    assert abs(est.value - target) > 10 * est.std_error


def test_kernel_deterministic_and_nonnegative():
    b = covariance_blocks(FS25, [0.21, 0.47])
    a, c = kernel_K(b, 5000, 9), kernel_K(b, 5000, 9)
    assert a == c
    assert a.value >= 0 and a.std_error >= 0


def test_kernel_rejects_singular_omega():
    b = blocks_from_two_point(0.0, np.zeros(2), np.zeros((2, 2)), 2, 25)
    bad = blocks_from_two_point(0.0, np.zeros(2), np.zeros((2, 2)), 2, 25, omega=np.zeros((4, 4)))
    kernel_K(b, 10, 0)
    with pytest.raises(NonPositiveDefiniteOmegaError):
        kernel_K(bad, 10, 0)


def test_kernel_bound():
    rs = np.random.default_rng(4)
    C = kacrice.calibration.KERNEL_BOUND_CONSTANT
    for z in rs.random((40, 2)):
        b = covariance_blocks(FS25, z)
        est = kernel_K(b, 20_000, 5)
        assert est.value <= C * 25 / math.sqrt(1 - b.u**2)


def test_expected_volume_constants():
    assert nodal_constant(1) == pytest.approx(2.0, rel=1e-15)
    assert nodal_constant(2) == pytest.approx(math.pi / math.sqrt(2), rel=1e-15)
    assert nodal_constant(3) == pytest.approx(4 / math.sqrt(3), rel=1e-15)
    assert expected_volume(2, 25) == pytest.approx(5 * math.pi / math.sqrt(2))


def test_second_moment_small():
    fs = enumerate_frequencies(2, 5)
    res = second_moment(fs, 32, 4000, 1)
    assert res.value >= expected_volume(2, 5) ** 2 - 3 * res.error
    assert res.value == pytest.approx(expected_volume(2, 5) ** 2, rel=0.01)
    assert res.kernel_evaluations > 32 * 32  # refined near the diagonal
    again = second_moment(fs, 32, 4000, 1)
    assert again.value == res.value


def test_classify_examples():
    assert classify_singular(FS25, [0, 0]).kind == "positive"
    assert classify_singular(FS25, [0, 0]).density_witness == 1.0
    assert classify_singular(enumerate_frequencies(2, 5), [0.237, 0.611]).kind == "nonsingular"
    neg = classify_singular(enumerate_frequencies(2, 1), [0.5, 0.5])
    assert neg.kind == "negative" and neg.density_witness == 1.0


@given(points2)
@settings(max_examples=200, deadline=None)
def test_classification_invariants(x):
    x = np.array(x)
    c = classify_singular(FS25, x)
    cos = np.cos(2 * np.pi * FS25.array @ x)
    thr = 1 - 1 / 8
    assert (c.kind == "positive") == (np.mean(cos > 0.75) > thr)
    assert (c.kind == "negative") == (np.mean(cos < -0.75) > thr)
    assert 0 <= c.density_witness <= 1
    if c.kind == "nonsingular":
        assert abs(two_point_jet(FS25, x).u) < 1 - 1 / 32


def test_vectorized_classifier_agrees():
    pts = np.random.default_rng(5).random((200, 2)) * 0.1
    kinds = classify_points(FS25, pts)
    names = {1: "positive", -1: "negative", 0: "nonsingular"}
    assert [names[k] for k in kinds] == [classify_singular(FS25, p).kind for p in pts]


@pytest.mark.parametrize("M", [1, 3, 5, 8])
def test_singular_measure_lower_bound(M):
    assert singular_set_measure(FS25, M) >= 1 / M**2


def test_singular_measure_trend_and_bound():
    small = singular_set_measure(FS25, 5)
    big = singular_set_measure(enumerate_frequencies(2, 325), 18)
    assert big < small
    C = kacrice.calibration.SINGULAR_MEASURE_CONSTANT
    assert small <= C * float(u_moment_exact(FS25, 4))
    assert singular_set_measure(FS25, 5, seed=0) == small


def test_min_eig():
    assert abs(min_eig_sigma(FS25, [0.3, 0.4], [0.3, 0.4])) <= 1e-10
    rs = np.random.default_rng(6)
    vals = [min_eig_sigma(FS25, p[:2], p[2:]) for p in rs.random((500, 4))]
    assert min(vals) > 0
    # translating by a lattice period: all cosines equal one, Sigma is degenerate again
    assert abs(min_eig_sigma(FS25, [0.3, 0.4], [1.3, 0.4])) <= 1e-9


def test_sigma_statistics_band():
    vals = []
    for E in (5, 25, 65, 325, 1105):
        fs = enumerate_frequencies(2, E)
        st_ = kacrice.sigma_statistics(fs, 32)
        assert st_.nonsingular_points <= st_.total_points
        vals.append(st_.mean_sigma * math.sqrt(fs.N))
    assert max(vals) / min(vals) <= kacrice.calibration.SIGMA_BAND_FACTOR
