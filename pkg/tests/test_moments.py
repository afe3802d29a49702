"""Covariance, fourth-order cumulant tensors, and density expansions."""

import itertools

import numpy as np
import pytest

from bsskit import (
    Cumulant4Tensor,
    DegenerateChannel,
    LagTooLarge,
    SourceSpec,
    edgeworth_pdf,
    estimate_cum4,
    generate_sources,
    hermite,
    kurtosis,
    psi4_contrast,
    sample_covariance,
    tensor_norm,
    tucker_transform,
    unfold,
)


def exact_tensor(c4s):
    """Analytic cumulant tensor of independent unit-variance sources."""
    n = len(c4s)
    t = np.zeros((n, n, n, n))
    for i, c in enumerate(c4s):
        t[i, i, i, i] = c
    return Cumulant4Tensor(t)


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_covariance_zero_channel():
    X = np.vstack([np.zeros(100), np.random.default_rng(0).standard_normal(100)])
    R = sample_covariance(X).matrix
    assert np.all(R[0, :] == 0.0) and np.all(R[:, 0] == 0.0)


def test_covariance_bpsk_unit_variance():
    A = generate_sources([SourceSpec("bpsk", seed=2)], 100_000)
    R = sample_covariance(A)
    assert R.lag == 0
    assert abs(R.matrix[0, 0] - 1.0) < 0.03


def test_covariance_ar1_lag_one():
    A = generate_sources([SourceSpec("ar1", ar_coefficient=0.9, seed=3)], 100_000)
    R1 = sample_covariance(A, lag=1)
    assert abs(R1.matrix[0, 0] - 0.9) < 0.02


def test_covariance_lag_zero_symmetric_and_lag_guard():
    A = generate_sources([SourceSpec("uniform", seed=1), SourceSpec("laplace", seed=2)], 500)
    R = sample_covariance(A).matrix
    assert np.array_equal(R, R.T)
    with pytest.raises(LagTooLarge):
        sample_covariance(A, lag=500)


def test_cum4_gaussian_near_zero():
    A = generate_sources([SourceSpec("gaussian", seed=4)], 100_000)
    C = estimate_cum4(A)
    assert abs(C.values[0, 0, 0, 0]) < 0.1


def test_cum4_bpsk_autocumulant():
    A = generate_sources([SourceSpec("bpsk", seed=5)], 100_000)
    C = estimate_cum4(A)
    assert abs(C.values[0, 0, 0, 0] - (-2.0)) < 0.05


def test_cum4_cross_cumulant_nulls():
    A = generate_sources([SourceSpec("bpsk", seed=6), SourceSpec("uniform", seed=7)], 100_000)
    C = estimate_cum4(A)
    assert abs(C.values[0, 0, 0, 1]) < 0.1


def test_cum4_super_symmetry_spot_check():
    A = generate_sources([SourceSpec("laplace", seed=8), SourceSpec("bpsk", seed=9),
                          SourceSpec("uniform", seed=10)], 4000)
    C = estimate_cum4(A)
    rng = np.random.default_rng(11)
    for _ in range(100):
        idx = tuple(rng.integers(0, 3, size=4))
        for perm in itertools.permutations(idx):
            assert C.values[perm] == C.values[idx]


def test_tensor_requires_hypercube_and_finite():
    with pytest.raises(Exception):
        Cumulant4Tensor(np.zeros((2, 2, 2)))
    bad = np.zeros((2, 2, 2, 2))
    bad[0, 0, 0, 0] = np.inf
    with pytest.raises(Exception):
        Cumulant4Tensor(bad)


def test_kurtosis_values():
    for kind, expect, tol in (("uniform", -1.2, 0.1), ("laplace", 3.0, 0.3), ("bpsk", -2.0, 0.05)):
        A = generate_sources([SourceSpec(kind, seed=12)], 100_000)
        assert abs(kurtosis(A.data[0]) - expect) < tol
    with pytest.raises(DegenerateChannel):
        kurtosis(np.zeros(64))


def test_tucker_identity_and_permutation():
    C = exact_tensor([-2.0, -1.2])
    same = tucker_transform(C, np.eye(2))
    assert np.allclose(same.values, C.values)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    swapped = tucker_transform(C, P)
    assert swapped.values[0, 0, 0, 0] == pytest.approx(-1.2)
    assert swapped.values[1, 1, 1, 1] == pytest.approx(-2.0)


def test_tucker_orthogonal_norm_invariance():
    rng = np.random.default_rng(13)
    for _ in range(5):
        t = rng.standard_normal((3, 3, 3, 3))
        C = Cumulant4Tensor(t)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert abs(tensor_norm(tucker_transform(C, Q)) - tensor_norm(C)) < 1e-10


def test_tensor_norm_values():
    assert tensor_norm(Cumulant4Tensor(np.zeros((2, 2, 2, 2)))) == 0.0
    assert tensor_norm(exact_tensor([-2.0, -2.0])) == pytest.approx(np.sqrt(8.0))


def test_tensor_norm_equals_unfolding_norm():
    rng = np.random.default_rng(14)
    C = Cumulant4Tensor(rng.standard_normal((2, 2, 2, 2)))
    assert tensor_norm(C) == pytest.approx(np.linalg.norm(unfold(C, "1x3")))
    assert tensor_norm(C) == pytest.approx(np.linalg.norm(unfold(C, "2x2")))


def test_unfold_shapes_and_roundtrip():
    C1 = Cumulant4Tensor(np.full((1, 1, 1, 1), -2.0))
    assert unfold(C1, "1x3") == pytest.approx(np.array([[-2.0]]))
    rng = np.random.default_rng(15)
    C = Cumulant4Tensor(rng.standard_normal((3, 3, 3, 3)))
    M = unfold(C, "2x2")
    assert np.allclose(M, M.T)  # super-symmetry forces a symmetric unfolding
    assert np.array_equal(M.reshape(3, 3, 3, 3), C.values)
    assert np.array_equal(unfold(C, "1x3").reshape(3, 3, 3, 3), C.values)


def test_psi4_contrast_masses():
    diag, off = psi4_contrast(exact_tensor([-2.0, -2.0]))
    assert off == 0.0
    assert diag == pytest.approx(8.0)
    rotated = tucker_transform(exact_tensor([-2.0, -2.0]), rot(np.pi / 4))
    d2, o2 = psi4_contrast(rotated)
    assert d2 + o2 == pytest.approx(8.0, abs=1e-8)


def test_hermite_recursion_values():
    y = np.array([0.0, 1.0, 2.0])
    assert np.allclose(hermite(0, y), 1.0)
    assert np.allclose(hermite(1, y), y)
    assert hermite(2, np.array([2.0]))[0] == pytest.approx(3.0)
    assert hermite(3, np.array([1.0]))[0] == pytest.approx(-2.0)


def test_edgeworth_gaussian_case():
    y = np.linspace(-3, 3, 7)
    p = edgeworth_pdf(y, 0.0, 0.0)
    assert np.allclose(p, np.exp(-y * y / 2) / np.sqrt(2 * np.pi))


def test_edgeworth_kurtosis_correction_at_zero():
    p = edgeworth_pdf(np.array([0.0]), 0.0, 1.0)
    p_g = 1.0 / np.sqrt(2 * np.pi)
    assert p[0] == pytest.approx(p_g * (1.0 + 3.0 / 24.0))


def test_edgeworth_integrates_to_one():
    y = np.linspace(-8, 8, 4001)
    p = edgeworth_pdf(y, 0.1, 0.2)
    assert np.trapezoid(p, y) == pytest.approx(1.0, abs=1e-3)
