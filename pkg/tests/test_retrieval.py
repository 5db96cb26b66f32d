import numpy as np
import pytest

from sparsedoa import arrays, retrieval
from sparsedoa.arrays import full_aperture_steering, wrap_distance
from sparsedoa.errors import DegenerateInputError, DomainError


def build_toeplitz(freqs, powers, n, sigma=0.0):
    a = full_aperture_steering(n, freqs)
    return a @ np.diag(powers) @ a.conj().T + sigma * np.eye(n)


def draw_separated(rng, k, n, min_sep):
    while True:
        f = rng.uniform(-0.5, 0.5, size=k)
        if k < 2 or arrays.min_separation(f) > min_sep:
            return np.sort(f)


class TestVandermonde:
    def test_single_atom(self):
        t = build_toeplitz([0.1], [2.0], 4)
        spec = retrieval.vandermonde_decompose(t)
        assert spec.count == 1
        assert spec.freqs[0] == pytest.approx(0.1, abs=1e-10)
        assert spec.powers[0] == pytest.approx(2.0, abs=1e-8)

    def test_zero_matrix(self):
        spec = retrieval.vandermonde_decompose(np.zeros((5, 5)))
        assert spec.count == 0

    def test_five_sources_round_trip(self):
        rng = np.random.default_rng(0)
        freqs = draw_separated(rng, 5, 16, 2 / 16)
        powers = rng.uniform(0.5, 3.0, size=5)
        t = build_toeplitz(freqs, powers, 16)
        spec = retrieval.vandermonde_decompose(t).sorted()
        assert spec.count == 5
        assert np.max(np.abs(spec.freqs - freqs)) < 1e-8
        assert np.max(np.abs(spec.powers - powers)) < 1e-6

    def test_reconstruction_property(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            k = int(rng.integers(1, 7))
            freqs = draw_separated(rng, k, 12, 1 / 12)
            powers = rng.uniform(0.2, 2.0, size=k)
            t = build_toeplitz(freqs, powers, 12)
            spec = retrieval.vandermonde_decompose(t)
            recon = build_toeplitz(spec.freqs, spec.powers, 12)
            assert np.linalg.norm(recon - t) < 1e-8 * np.linalg.norm(t)

    def test_full_rank_peels_zero_frequency(self):
        # full-rank PSD Toeplitz: N atoms with the deterministic one at f = 0
        t = build_toeplitz([0.11, -0.2], [1.0, 1.0], 4, sigma=0.5)
        spec = retrieval.vandermonde_decompose(t)
        assert spec.count == 4
        assert np.min(np.abs(spec.freqs)) < 1e-9
        recon = build_toeplitz(spec.freqs, spec.powers, 4)
        assert np.linalg.norm(recon - t) < 1e-7 * np.linalg.norm(t)

    def test_non_psd_rejected(self):
        with pytest.raises(DomainError):
            retrieval.vandermonde_decompose(np.diag([1.0, -1.0]))


class TestNoiseSplit:
    def test_pure_noise(self):
        spec = retrieval.noise_split_decompose(3.0 * np.eye(5))
        assert spec.sigma == pytest.approx(3.0)
        assert spec.count == 0

    def test_single_source_plus_noise(self):
        t = build_toeplitz([0.2], [1.0], 6, sigma=0.5)
        spec = retrieval.noise_split_decompose(t)
        assert spec.sigma == pytest.approx(0.5, abs=1e-10)
        assert spec.count == 1
        assert spec.freqs[0] == pytest.approx(0.2, abs=1e-9)
        assert spec.powers[0] == pytest.approx(1.0, abs=1e-8)

    def test_sigma_zero_matches_plain_decomposition(self):
        t = build_toeplitz([0.1, -0.3], [1.0, 2.0], 8)
        a = retrieval.noise_split_decompose(t)
        b = retrieval.vandermonde_decompose(t)
        assert a.sigma == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(np.sort(a.freqs), np.sort(b.freqs), atol=1e-9)

    def test_smaller_sigma_breaks_uniqueness(self):
        # any sigma' < lambda_min leaves a full-rank residual: the r < N
        # low-rank certificate of the unique split fails
        rng = np.random.default_rng(2)
        for _ in range(10):
            k = int(rng.integers(1, 4))
            freqs = draw_separated(rng, k, 8, 1 / 8)
            powers = rng.uniform(0.5, 2.0, size=k)
            t = build_toeplitz(freqs, powers, 8, sigma=1.0)
            sigma_prime = rng.uniform(0.1, 0.9)
            residual = t - sigma_prime * np.eye(8)
            w = np.linalg.eigvalsh(residual)
            rank = int(np.sum(w > 1e-8 * w.max()))
            assert rank == 8  # not r < N, so the alternative split is invalid


class TestMusic:
    def test_exact_covariance_two_sources(self):
        t = build_toeplitz([-0.2, 0.17], [1.0, 2.0], 10, sigma=0.3)
        spec = retrieval.music(t, 2)
        assert spec.count == 2
        assert np.max(np.abs(np.sort(spec.freqs) - [-0.2, 0.17])) < 1e-6

    def test_zero_sources(self):
        assert retrieval.music(np.eye(4), 0).count == 0

    def test_coherent_sources_fail(self):
        # rank-deficient source covariance: MUSIC misses a source
        n = 8
        a = full_aperture_steering(n, [-0.1, 0.23])
        s = np.array([[1.0], [1.0]])  # fully coherent pair
        r = (a @ s) @ (a @ s).conj().T + 0.1 * np.eye(n)
        spec = retrieval.music(r, 2)
        truth = retrieval.LineSpectrum([-0.1, 0.23], [1.0, 1.0])
        report = retrieval.match_and_score(truth, spec, success_threshold=1e-3)
        assert not report.success

    def test_order_bound(self):
        with pytest.raises(DomainError):
            retrieval.music(np.eye(4), 4)


class TestEsprit:
    def test_exact_recovery(self):
        t = build_toeplitz([-0.31, 0.02, 0.4], [1.0, 2.0, 0.5], 12)
        spec = retrieval.esprit(t + 0.0 * np.eye(12), 3)
        assert np.max(np.abs(spec.freqs - [-0.31, 0.02, 0.4])) < 1e-10

    def test_rank_one(self):
        t = build_toeplitz([0.27], [1.5], 6)
        spec = retrieval.esprit(t, 1)
        assert spec.freqs[0] == pytest.approx(0.27, abs=1e-10)

    def test_white_noise_invariance(self):
        t = build_toeplitz([-0.11, 0.34], [1.0, 0.8], 9)
        f0 = retrieval.esprit(t, 2).freqs
        f1 = retrieval.esprit(t + 0.7 * np.eye(9), 2).freqs
        assert np.allclose(f0, f1, atol=1e-10)


class TestModelOrder:
    def test_dominant_gap(self):
        assert retrieval.model_order([10.0, 9.0, 1e-9, 1e-9]).k == 2

    def test_flat_spectrum_falls_back(self):
        out = retrieval.model_order([5.0, 5.0, 5.0, 5.0])
        assert not out.confident
        assert out.k == 3

    def test_needs_three(self):
        with pytest.raises(DegenerateInputError):
            retrieval.model_order([2.0, 1.0])

    def test_monotonicity_required(self):
        with pytest.raises(DomainError):
            retrieval.model_order([1.0, 2.0, 3.0])


class TestMatchAndScore:
    def test_identical(self):
        spec = retrieval.LineSpectrum([0.1, -0.2], [1.0, 1.0])
        report = retrieval.match_and_score(spec, spec, 1e-6)
        assert report.rmse == 0.0
        assert report.success

    def test_wraparound_shift(self):
        truth = retrieval.LineSpectrum([0.49], [1.0])
        est = retrieval.LineSpectrum([-0.51 + 1.0], [1.0])  # same point mod 1
        report = retrieval.match_and_score(truth, est, 1e-6)
        assert report.rmse == pytest.approx(0.0, abs=1e-12)

    def test_surplus_estimates(self):
        truth = retrieval.LineSpectrum([0.1, -0.2], [1.0, 1.0])
        est = retrieval.LineSpectrum([0.1, -0.2, 0.4], [1.0, 1.0, 0.1])
        report = retrieval.match_and_score(truth, est, 1e-4)
        assert report.unmatched_estimate == 1
        assert report.success

    def test_missing_estimate_fails(self):
        truth = retrieval.LineSpectrum([0.1, -0.2], [1.0, 1.0])
        est = retrieval.LineSpectrum([0.1], [1.0])
        report = retrieval.match_and_score(truth, est, 1e-4)
        assert report.unmatched_truth == 1
        assert not report.success

    def test_metric_symmetry(self):
        rng = np.random.default_rng(3)
        f = rng.uniform(-0.5, 0.5, size=20)
        g = rng.uniform(-0.5, 0.5, size=20)
        assert np.allclose(wrap_distance(f, g), wrap_distance(g, f))
