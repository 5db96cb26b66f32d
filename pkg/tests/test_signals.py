import numpy as np
import pytest

from sparsedoa import arrays
from sparsedoa import signals as sig
from sparsedoa.errors import DomainError, InvalidScenarioError, NotRedundancyArrayError


def test_simulate_zero_sources():
    sc = sig.SourceScenario(freqs=(), powers=(), noise_variance=0.0, snapshots=5, seed=0)
    y, truth = sig.simulate(sc, arrays.ula(4))
    assert np.all(y.data == 0)
    assert truth["S"].shape == (0, 5)


def test_simulate_constant_modulus_single_source():
    sc = sig.SourceScenario(
        freqs=(0.2,), powers=(2.5,), amplitude_model="constant-modulus", snapshots=8, seed=1
    )
    y, truth = sig.simulate(sc, arrays.ula(5))
    a = arrays.steering_vector(arrays.ula(5), f=0.2)
    for t in range(8):
        s = truth["S"][0, t]
        assert abs(s) == pytest.approx(np.sqrt(2.5))
        assert np.allclose(y.data[:, t], a * s)


def test_simulate_reproducible():
    sc = sig.SourceScenario(freqs=(0.1, -0.3), powers=(1.0, 2.0), noise_variance=0.5, snapshots=16, seed=99)
    y1, _ = sig.simulate(sc, arrays.ula(6))
    y2, _ = sig.simulate(sc, arrays.ula(6))
    assert np.array_equal(y1.data, y2.data)


def test_simulate_covariance_convergence():
    geom = arrays.ula(5)
    freqs = (0.05, -0.33)
    powers = (1.0, 2.0)
    sigma = 0.5
    sc = sig.SourceScenario(freqs=freqs, powers=powers, noise_variance=sigma, snapshots=100_000, seed=7)
    y, _ = sig.simulate(sc, geom)
    r = sig.sample_covariance(y)
    a = arrays.steering_matrix(geom, freqs)
    r_true = a @ np.diag(powers) @ a.conj().T + sigma * np.eye(5)
    assert np.linalg.norm(r - r_true) / np.linalg.norm(r_true) < 0.05


def test_simulate_duplicate_frequencies_rejected():
    with pytest.raises(InvalidScenarioError):
        sig.SourceScenario(freqs=(0.1, 0.1), powers=(1.0, 1.0))


def test_simulate_coherent_needs_two_sources():
    with pytest.raises(InvalidScenarioError):
        sig.SourceScenario(freqs=(0.1,), powers=(1.0,), correlation=("coherent", 0))


def test_coherent_sources_are_proportional():
    sc = sig.SourceScenario(
        freqs=(0.1, -0.2, 0.35),
        powers=(1.0, 4.0, 0.25),
        correlation=("coherent", 0),
        snapshots=6,
        seed=3,
    )
    _, truth = sig.simulate(sc, arrays.ula(4))
    s = truth["S"]
    for k in (1, 2):
        ratios = s[k] / s[0]
        assert np.allclose(ratios, ratios[0])
        assert abs(ratios[0]) == pytest.approx(np.sqrt(sc.powers[k] / sc.powers[0]))


def test_source_covariance_mode():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    sc = sig.SourceScenario(
        freqs=(0.1, -0.2), powers=(2.0, 1.0), correlation=("covariance", cov), snapshots=200_000, seed=4
    )
    _, truth = sig.simulate(sc, arrays.ula(3))
    s = truth["S"]
    emp = s @ s.conj().T / s.shape[1]
    assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05


def test_sample_covariance_single_snapshot():
    e1 = np.zeros((3, 1), dtype=complex)
    e1[0, 0] = 1.0
    r = sig.sample_covariance(sig.SnapshotMatrix(e1, arrays.ula(3)))
    expected = np.zeros((3, 3))
    expected[0, 0] = 1.0
    assert np.allclose(r, expected)


def test_sample_covariance_orthogonal_columns_projector():
    y = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], dtype=complex) * 3.0
    r = sig.sample_covariance(y)
    w, v = np.linalg.eigh(r)
    assert np.allclose(sorted(w), [0.0, 4.5, 4.5])


def test_sample_covariance_trace_identity():
    rng = np.random.default_rng(5)
    y = sig.complex_normal(rng, (4, 9))
    r = sig.sample_covariance(y)
    assert np.trace(r).real == pytest.approx(np.linalg.norm(y) ** 2 / 9)


def test_sample_covariance_psd():
    rng = np.random.default_rng(6)
    for _ in range(20):
        y = sig.complex_normal(rng, (5, int(rng.integers(1, 8))))
        w = np.linalg.eigvalsh(sig.sample_covariance(y))
        assert w.min() >= -1e-12 * max(w.max(), 1.0)


def test_toeplitz_basis_cases():
    assert np.allclose(sig.toeplitz(np.array([1.0, 0, 0])), np.eye(3))
    t = sig.toeplitz(np.array([0.0, 1.0, 0.0]))
    expected = np.diag(np.ones(2), k=1) + np.diag(np.ones(2), k=-1)
    assert np.allclose(t, expected)


def test_toeplitz_rejects_complex_lag0():
    with pytest.raises(DomainError):
        sig.toeplitz(np.array([1.0 + 1.0j, 0.0]))


def test_diag_sum_adjoint_identity():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        u = sig.complex_normal(rng, (n,))
        u[0] = u[0].real
        m = sig.complex_normal(rng, (n, n))
        lhs = np.real(np.vdot(sig.toeplitz(u), m))
        rhs = np.real(np.vdot(u, sig.diag_sum(m)))
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_toeplitz_gram_weights_match_basis_norms():
    n = 7
    w = sig.toeplitz_gram_weights(n)
    e0 = np.zeros(n)
    e0[0] = 1.0
    assert np.linalg.norm(sig.toeplitz(e0)) ** 2 == pytest.approx(w[0])
    for k in range(1, n):
        e = np.zeros(n, dtype=complex)
        e[k] = 1.0
        assert np.linalg.norm(sig.toeplitz(e)) ** 2 == pytest.approx(w[k])
        e[k] = 1.0j
        assert np.linalg.norm(sig.toeplitz(e)) ** 2 == pytest.approx(w[k])


def _toeplitz_u(freqs, powers, n):
    a = arrays.full_aperture_steering(n, freqs)
    return (a.conj() @ np.asarray(powers)).ravel()


def test_coarray_average_exact_recovery():
    geom = arrays.sla(10, [1, 2, 3, 7, 10])
    u = _toeplitz_u([0.12, -0.31], [1.0, 2.0], 10)
    gam = arrays.row_selector(geom)
    r_om = gam @ sig.toeplitz(u) @ gam.T
    u_hat = sig.coarray_average(r_om, geom)
    assert np.allclose(u_hat, u, atol=1e-12)


def test_coarray_average_ula_diagonal_means():
    geom = arrays.ula(5)
    rng = np.random.default_rng(8)
    r = sig.complex_normal(rng, (5, 5))
    r = (r + r.conj().T) / 2
    u_hat = sig.coarray_average(r, geom)
    for k in range(5):
        assert u_hat[k] == pytest.approx(np.trace(r, offset=k) / (5 - k))


def test_coarray_average_missing_lag():
    geom = arrays.sla(10, [1, 2, 3, 6, 10])  # lag 6 unrealized
    with pytest.raises(NotRedundancyArrayError):
        sig.coarray_average(np.eye(5), geom)


def test_coarray_average_monte_carlo():
    geom = arrays.sla(8, [1, 2, 3, 5, 8])
    freqs, powers, sigma = (0.07, -0.26), (1.0, 2.0), 0.3
    sc = sig.SourceScenario(freqs=freqs, powers=powers, noise_variance=sigma, snapshots=10_000, seed=11)
    y, _ = sig.simulate(sc, geom)
    u_hat = sig.coarray_average(sig.sample_covariance(y), geom)
    u_true = _toeplitz_u(freqs, powers, 8)
    u_true[0] += sigma
    assert np.linalg.norm(u_hat - u_true) / np.linalg.norm(u_true) < 0.05


def test_virtual_snapshot_shapes_and_symmetry():
    u = np.zeros(6)
    u[0] = 1.0
    v = sig.virtual_snapshot(u)
    expected = np.zeros(11)
    expected[5] = 1.0
    assert np.allclose(v, expected)

    u1 = _toeplitz_u([0.1], [1.0], 6)
    v1 = sig.virtual_snapshot(u1)
    j = np.arange(1, 12)
    assert np.allclose(v1, np.exp(2j * np.pi * (j - 6) * 0.1))
    for k in range(1, 6):
        assert v1[5 + k] == pytest.approx(np.conj(v1[5 - k]))


def test_hankel_lift_all_ones():
    z = np.ones(8, dtype=complex)
    h = sig.hankel_lift(z, 2)
    assert h.shape == (2, 7)
    assert np.allclose(h, 1.0)
    assert np.linalg.matrix_rank(h) == 1


def test_hankel_lift_single_atom_rank_one():
    z = arrays.full_aperture_steering(9, [0.37]).ravel()
    h = sig.hankel_lift(z, 4)
    s = np.linalg.svd(h, compute_uv=False)
    assert s[1] / s[0] < 1e-12


def test_hankel_lift_rank_equals_sources():
    n = 16
    z = arrays.full_aperture_steering(n, [-0.3, 0.05, 0.31]) @ np.array([1.0, 2.0, 0.7])
    h = sig.hankel_lift(z, (n + 1) // 2)
    s = np.linalg.svd(h, compute_uv=False)
    assert s[3] / s[0] < 1e-10
    assert s[2] / s[0] > 1e-6


def test_hankel_lift_out_of_range():
    with pytest.raises(DomainError):
        sig.hankel_lift(np.ones(4), 5)


def test_hankel_multi_snapshot_block_structure():
    rng = np.random.default_rng(9)
    z = sig.complex_normal(rng, (6, 3))
    m = 3
    h = sig.hankel_lift(z, m)
    n = 6 + 1 - m
    assert h.shape == (m, n * 3)
    for t in range(3):
        block = h[:, t * n : (t + 1) * n]
        for i in range(m):
            for j in range(n):
                assert block[i, j] == z[i + j, t]


def test_hankel_adjoint_identity():
    rng = np.random.default_rng(10)
    z = sig.complex_normal(rng, (7, 2))
    m = 3
    h = sig.hankel_lift(z, m)
    mat = sig.complex_normal(rng, h.shape)
    lhs = np.real(np.vdot(h, mat))
    rhs = np.real(np.vdot(z, sig.hankel_adjoint(mat, 7, m, 2)))
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_snapshot_csv_round_trip():
    geom = arrays.ula(3)
    sc = sig.SourceScenario(freqs=(0.2,), powers=(1.0,), noise_variance=0.1, snapshots=4, seed=2)
    y, _ = sig.simulate(sc, geom)
    text = sig.snapshots_to_csv(y)
    back = sig.snapshots_from_csv(text, geom)
    assert np.array_equal(back.data, y.data)


def test_snapshot_json_round_trip():
    geom = arrays.sla(5, [1, 4, 5])
    sc = sig.SourceScenario(freqs=(-0.1,), powers=(2.0,), noise_variance=0.2, snapshots=3, seed=6)
    y, _ = sig.simulate(sc, geom)
    back = sig.snapshots_from_json(sig.snapshots_to_json(y), geom)
    assert np.array_equal(back.data, y.data)
