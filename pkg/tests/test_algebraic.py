"""Tensor-algebra separation: Jacobi, JADE, HO-EVD/PM, PARAFAC, CM solvers."""

import math

import numpy as np
import pytest

from bsskit import (
    Cumulant4Tensor,
    DegenerateSpectrum,
    InvalidSpec,
    MixingModel,
    RankDeficient,
    SourceSpec,
    deterministic_cm,
    estimate_cum4,
    generate_sources,
    hoevd,
    hopm,
    jacobi_diagonalize,
    jade,
    jade_rotation,
    joint_diagonalize,
    kruskal_check,
    mix,
    parafac_als,
    psi4_contrast,
    rank1_init,
    separation_index,
    tucker_transform,
    unimodal_equalizer,
    whiten,
    window_stack,
)

BPSK_TRIPLE = None  # built lazily below


def diag_tensor(c4s):
    n = len(c4s)
    V = np.zeros((n, n, n, n))
    for i, c in enumerate(c4s):
        V[i, i, i, i] = c
    return Cumulant4Tensor(values=V)


def rank1_tensor(weight, q):
    return Cumulant4Tensor(values=weight * np.einsum("i,j,k,l->ijkl", q, q, q, q))


def rot2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_orthogonal(n, seed):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    return Q


def bpsk_product(n):
    # all sign patterns with uniform weight: every sample moment is exact
    grids = np.meshgrid(*([np.array([1.0, -1.0])] * n), indexing="ij")
    return np.vstack([g.ravel() for g in grids])


def signed_permutation_gap(P):
    """How far |P| is from a permutation matrix (max entry deviation)."""
    target = np.zeros(P.size)
    target[-P.shape[0]:] = 1.0
    return float(np.max(np.abs(np.sort(np.abs(P).ravel()) - target)))


# ---------------------------------------------------------------- jacobi


def test_jacobi_leaves_diagonal_tensor_alone():
    Q = jacobi_diagonalize(diag_tensor([-2.0, -1.2, 1.0]))
    assert np.allclose(Q, np.eye(3), atol=1e-8)


def test_jacobi_undoes_a_plane_rotation():
    C = tucker_transform(diag_tensor([-2.0, -2.0]), rot2(math.pi / 6))
    Q = jacobi_diagonalize(C)
    assert psi4_contrast(tucker_transform(C, Q))[1] < 1e-10
    assert signed_permutation_gap(Q @ rot2(math.pi / 6)) < 1e-4


def test_jacobi_never_loses_diagonal_mass():
    for seed in range(5):
        rng = np.random.default_rng(40 + seed)
        c4s = rng.uniform(0.5, 2.5, size=3) * rng.choice([-1.0, 1.0], size=3)
        C = tucker_transform(diag_tensor(c4s), random_orthogonal(3, 140 + seed))
        before = psi4_contrast(C)[0]
        after = psi4_contrast(tucker_transform(C, jacobi_diagonalize(C)))[0]
        assert after >= before - 1e-12


# ---------------------------------------------------- joint diagonalization


def test_joint_diagonalize_single_diagonal_matrix():
    Q = joint_diagonalize([np.diag([3.0, 1.0, 2.0])])
    assert np.array_equal(Q, np.eye(3))


def test_joint_diagonalize_recovers_shared_eigenbasis():
    Q0 = random_orthogonal(4, 41)
    D1 = np.diag([3.0, 1.0, -2.0, 0.5])
    D2 = np.diag([0.3, -1.0, 2.0, -0.7])
    mats = [Q0 @ D1 @ Q0.T, Q0 @ D2 @ Q0.T]
    Q = joint_diagonalize(mats)

    def off2(B):
        R = B - np.diag(np.diag(B))
        return float(np.sum(R * R))

    total = sum(off2(Q.T @ M @ Q) for M in mats)
    assert total < 1e-10
    assert total <= sum(off2(M) for M in mats)
    assert signed_permutation_gap(Q.T @ Q0) < 1e-6


# ------------------------------------------------------------------ jade


def test_jade_separates_three_bpsk_sources():
    A = generate_sources([SourceSpec("bpsk", seed=90 + k) for k in range(3)], 20_000)
    H = np.random.default_rng(42).standard_normal((3, 3))
    U = mix(MixingModel("static", matrix=H), A)
    whitener, Z = whiten(U)
    sep = jade(Z, whitener)
    assert separation_index(sep.matrix @ H) < -15.0


def test_jade_exact_on_orthogonally_mixed_design():
    Q0 = random_orthogonal(3, 43)
    X = Q0 @ bpsk_product(3)
    sep = jade(X)
    assert signed_permutation_gap(sep.matrix @ Q0) < 1e-8


def test_jade_single_channel_is_just_the_whitener():
    data = 2.0 * bpsk_product(1)
    whitener, Z = whiten(data)
    sep = jade(Z, whitener)
    assert np.array_equal(sep.matrix, whitener.matrix)


def test_jacobi_and_jade_agree_on_exact_tensor():
    Q0 = random_orthogonal(3, 44)
    C = tucker_transform(diag_tensor([-2.0, -1.2, 1.0]), Q0)
    Qj = jacobi_diagonalize(C)
    M = Qj @ jade_rotation(C)  # both should be Q0^-1 up to perm/sign
    for row in np.abs(M):
        assert row.max() > 1.0 - 1e-6
    assert sorted(int(np.argmax(r)) for r in np.abs(M)) == [0, 1, 2]


# ----------------------------------------------------------------- hoevd


def test_hoevd_diagonal_tensor():
    factor, core = hoevd(diag_tensor([-2.0, -1.2, 1.0]))
    assert signed_permutation_gap(factor) < 1e-12
    assert psi4_contrast(core)[1] < 1e-16


def test_hoevd_rotated_tensor_and_reconstruction():
    Q0 = random_orthogonal(3, 45)
    C = tucker_transform(diag_tensor([-2.0, -1.2, 1.0]), Q0)
    factor, core = hoevd(C)
    assert psi4_contrast(core)[1] < 1e-8
    recon = tucker_transform(core, factor)
    assert np.allclose(recon.values, C.values, atol=1e-8)


# ------------------------------------------------------------------ hopm


def test_hopm_exact_rank_one():
    rng = np.random.default_rng(46)
    q = rng.standard_normal(3)
    q /= np.linalg.norm(q)
    C = rank1_tensor(-1.7, q)
    lam, g = hopm(C, init=q + 0.3 * rng.standard_normal(3))
    assert abs(abs(float(g @ q)) - 1.0) < 1e-12
    assert np.isclose(lam, -1.7, atol=1e-10)


def test_hopm_two_bpsk_tensor():
    Q0 = random_orthogonal(2, 47)
    C = tucker_transform(diag_tensor([-2.0, -2.0]), Q0)
    lam, g = hopm(C, init=np.array([0.9, 0.45]))
    assert np.isclose(lam, -2.0, atol=1e-8)
    assert np.max(np.abs(g @ Q0)) > 0.999


def test_hopm_orthogonal_start_finds_other_component():
    Q0 = random_orthogonal(3, 48)
    q1, q2, q3 = Q0.T
    C = Cumulant4Tensor(values=rank1_tensor(-2.0, q1).values + rank1_tensor(-2.0, q2).values)
    lam, g = hopm(C, init=q2 + 0.1 * q3)
    assert abs(float(g @ q2)) > 1.0 - 1e-10
    assert np.isclose(lam, -2.0, atol=1e-10)


# --------------------------------------------------------------- parafac


def test_parafac_exact_rank_one():
    rng = np.random.default_rng(49)
    q = rng.standard_normal(3)
    q /= np.linalg.norm(q)
    C = rank1_tensor(2.3, q)
    fit = parafac_als(C, 1)
    assert fit.error_trajectory[-1] < 1e-8
    assert abs(float(fit.factor[:, 0] @ q)) > 0.999999
    assert np.isclose(fit.weights[0], 2.3, atol=1e-8)


def test_parafac_two_source_tensor():
    Q0 = random_orthogonal(2, 50)
    C = tucker_transform(diag_tensor([-2.0, -1.2]), Q0)
    fit = parafac_als(C, 2)
    overlap = np.abs(fit.factor.T @ Q0)
    for j in range(2):
        i = int(np.argmax(overlap[j]))
        assert overlap[j, i] > 0.999
        assert np.isclose(fit.weights[j], [-2.0, -1.2][i], atol=1e-6)


def test_parafac_rejects_rank_zero():
    with pytest.raises(InvalidSpec):
        parafac_als(diag_tensor([-2.0, -1.2]), 0)


def test_parafac_error_never_increases():
    A = generate_sources([SourceSpec("laplace", seed=95 + k) for k in range(3)], 3_000)
    H = np.random.default_rng(51).standard_normal((3, 3))
    U = mix(MixingModel("static", matrix=H), A)
    _, Z = whiten(U)
    fit = parafac_als(estimate_cum4(Z), 2)
    diffs = np.diff(fit.error_trajectory)
    assert np.all(diffs <= 1e-12)


# ----------------------------------------------------------------- kruskal


def test_kruskal_bound():
    assert kruskal_check(3, 4) is True
    assert kruskal_check(2, 3) is False
    for M in range(1, 11):
        for N in range(1, 11):
            assert kruskal_check(M, N) == (4 * M >= 2 * N + 3)
    with pytest.raises(InvalidSpec):
        kruskal_check(1, 0)


# -------------------------------------------------------------- rank1_init


def test_rank1_init_single_source_tensor():
    rng = np.random.default_rng(52)
    h = rng.standard_normal(3)
    h /= np.linalg.norm(h)
    start = rank1_init(rank1_tensor(-2.0, h))
    assert np.isclose(start.eigenvalue, -2.0, atol=1e-10)
    assert np.allclose(start.matrix, np.outer(h, h), atol=1e-10)
    assert np.isclose(start.varsigma, 1.0, atol=1e-10)
    assert abs(float(start.g0 @ h)) > 1.0 - 1e-10


def test_rank1_init_two_sources_picks_strongest():
    Q0 = random_orthogonal(2, 53)
    C = tucker_transform(diag_tensor([-2.0, -1.2]), Q0)
    start = rank1_init(C)
    assert abs(float(start.g0 @ Q0[:, 0])) > 1.0 - 1e-8
    g = start.g0
    psi = abs(float(np.einsum("ijkl,i,j,k,l->", C.values, g, g, g, g)))
    assert np.isclose(psi, 2.0, atol=1e-8)
    assert np.isclose(psi, abs(start.eigenvalue), atol=1e-8)


def test_rank1_init_bounds_on_subgaussian_instances():
    # varsigma^2 |lambda| <= psi_D(g0) <= |lambda|, contrast from the tensor
    for seed in range(20):
        rng = np.random.default_rng(700 + seed)
        c4s = -(0.5 + np.array([0.0, 0.7, 1.4]) + rng.uniform(0.0, 0.5, size=3))
        C = tucker_transform(diag_tensor(c4s), random_orthogonal(3, 800 + seed))
        start = rank1_init(C)
        g = start.g0
        psi = abs(float(np.einsum("ijkl,i,j,k,l->", C.values, g, g, g, g)))
        lam = abs(start.eigenvalue)
        assert start.varsigma**2 * lam <= psi + 1e-10
        assert psi <= lam + 1e-10


def test_rank1_init_refuses_tied_spectrum():
    C = tucker_transform(diag_tensor([-2.0, -2.0]), random_orthogonal(2, 54))
    with pytest.raises(DegenerateSpectrum):
        rank1_init(C)


# ---------------------------------------------------------------- unimodal


def convolutive_scene(seed, T):
    rng = np.random.default_rng(seed)
    A = generate_sources([SourceSpec("bpsk", seed=seed * 2 + 1),
                          SourceSpec("bpsk", seed=seed * 2 + 2)], T)
    taps = rng.standard_normal((6, 4, 2)) / np.sqrt(6)
    U = mix(MixingModel("convolutive", taps=list(taps)), A)
    return A, U


def best_sign_agreement(result, A, U, max_delay):
    y = result.outputs(U)
    s = np.sign(y)
    s[s == 0] = 1.0
    offset = result.window_length - 1
    best = 0.0
    for k in range(A.channel_count):
        a = A.data[k]
        for d in range(max_delay + 1):
            if offset - d < 0:
                continue
            src = np.sign(a[offset - d : offset - d + len(y)])
            agree = float(np.mean(s == src))
            best = max(best, agree, 1.0 - agree)
    return best


def test_unimodal_zero_mu2_freezes_the_equalizer_vector():
    _, U = convolutive_scene(2, 4_000)
    result = unimodal_equalizer(U, mu1=0.05, mu2=0.0, L=8, epochs=1, init="zero")
    first = np.zeros(result.g.shape)
    first[0] = 1.0
    assert np.array_equal(result.g, first)
    assert all(np.array_equal(g, first) for g in result.trajectory)
    X = result.whitener.apply(window_stack(U, 8)).data
    errs = 1.0 - np.einsum("it,ij,jt->t", X, result.W, X)
    assert float(np.mean(errs * errs)) < 0.1  # W alone fits the modulus target


def test_unimodal_settles_on_an_eigenvector():
    _, U = convolutive_scene(1, 10_000)
    result = unimodal_equalizer(U, mu1=0.05, mu2=0.02, L=16, epochs=3)
    Wg = result.W @ result.g
    lam = float(result.g @ Wg)
    assert np.linalg.norm(Wg - lam * result.g) < 0.01
    assert abs(float(result.trajectory[-1] @ result.trajectory[-2])) > 1.0 - 1e-6


def test_unimodal_recovers_a_delayed_source_sign():
    A, U = convolutive_scene(1, 10_000)
    result = unimodal_equalizer(U, mu1=0.05, mu2=0.02, L=16, epochs=3)
    assert result.max_w_asymmetry < 1e-12
    assert result.max_g_norm_dev < 1e-12
    assert best_sign_agreement(result, A, U, 16 + 5) >= 0.99


def test_unimodal_rejects_bad_steps():
    _, U = convolutive_scene(3, 500)
    with pytest.raises(InvalidSpec):
        unimodal_equalizer(U, mu1=0.0, mu2=0.1, L=4)
    with pytest.raises(InvalidSpec):
        unimodal_equalizer(U, mu1=0.05, mu2=-0.1, L=4)
    with pytest.raises(InvalidSpec):
        unimodal_equalizer(U, mu1=0.05, mu2=0.1, L=4, init="warm")


# ----------------------------------------------------------------- det cm


def test_det_cm_scalar_block_normalizes_power():
    U = np.array([[2.0, -2.0, 2.0, -2.0, 2.0]])
    res = deterministic_cm(U)
    assert np.isclose(abs(res.g[0]), 0.5, atol=1e-12)
    y = res.g @ U
    assert np.isclose(np.mean(y * y), 1.0, atol=1e-12)
    assert res.residual < 1e-10


def test_det_cm_exact_on_binary_blocks():
    for seed in (0, 1, 2):
        rng = np.random.default_rng(60 + seed)
        A = generate_sources([SourceSpec("bpsk", seed=600 + 2 * seed),
                              SourceSpec("bpsk", seed=601 + 2 * seed)], 64)
        H = rng.standard_normal((2, 2))
        U = mix(MixingModel("static", matrix=H), A)
        res = deterministic_cm(U)
        y = res.g @ U.data
        assert float(np.max(np.abs(y * y - 1.0))) < 1e-6
        assert np.allclose(res.matrix, res.matrix.T, atol=1e-12)


def test_det_cm_gaussian_block_reports_large_residual():
    U = np.random.default_rng(61).standard_normal((2, 400))
    res = deterministic_cm(U)
    assert res.residual > 0.3  # no constant-modulus output exists


def test_det_cm_needs_enough_excitation():
    with pytest.raises(RankDeficient):
        deterministic_cm(np.ones((2, 10)))
