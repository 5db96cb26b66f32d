import json

import numpy as np
import pytest

from sparsedoa import arrays
from sparsedoa.errors import DegenerateInputError, DomainError, SizeLimitError


def test_steering_ula_zero_frequency():
    a = arrays.steering_vector(arrays.ula(4), f=0.0)
    assert np.allclose(a, np.ones(4))


def test_steering_ula_nyquist_alternation():
    a = arrays.steering_vector(arrays.ula(4), f=0.5)
    assert np.allclose(a, [1, -1, 1, -1], atol=1e-12)


def test_steering_sla_direct_evaluation():
    a = arrays.steering_vector(arrays.sla(5, [1, 3]), f=0.25)
    assert np.allclose(a, [1, -1], atol=1e-12)


def test_steering_unit_modulus_and_norm():
    rng = np.random.default_rng(0)
    for _ in range(20):
        geom = arrays.sla(12, sorted(rng.choice(12, size=5, replace=False) + 1))
        f = rng.uniform(-0.5, 0.5)
        a = arrays.steering_vector(geom, f=f)
        assert np.allclose(np.abs(a), 1.0)
        assert np.linalg.norm(a) ** 2 == pytest.approx(geom.m)


def test_steering_domain_errors():
    with pytest.raises(DomainError):
        arrays.steering_vector(arrays.ula(4), f=0.7)
    with pytest.raises(DomainError):
        arrays.steering_vector(arrays.planar([1.0], [0.0]), f=0.1)
    with pytest.raises(DomainError):
        arrays.steering_vector(arrays.ula(4))


def test_planar_steering_entry_formula():
    geom = arrays.planar([2.0, 1.0], [0.0, 90.0])
    theta = 30.0
    a = arrays.steering_vector(geom, theta_deg=theta)
    expected = np.exp(
        1j * np.pi * np.array([2.0, 1.0]) * np.cos(np.radians(theta) - np.radians([0.0, 90.0]))
    )
    assert np.allclose(a, expected)
    assert np.allclose(np.abs(a), 1.0)


def test_doa_freq_map_reference_points():
    assert arrays.doa_to_freq(90.0) == pytest.approx(0.0, abs=1e-15)
    assert arrays.doa_to_freq(0.0) == pytest.approx(0.5)
    assert arrays.doa_to_freq(60.0) == pytest.approx(0.25)


def test_doa_freq_round_trip():
    rng = np.random.default_rng(1)
    for theta in rng.uniform(0.0, 180.0 - 1e-9, size=200):
        back = arrays.freq_to_doa(arrays.doa_to_freq(theta))
        assert back == pytest.approx(theta, abs=1e-12)


def test_doa_freq_domain_errors():
    with pytest.raises(DomainError):
        arrays.doa_to_freq(180.0)
    with pytest.raises(DomainError):
        arrays.freq_to_doa(0.75)


def test_mutual_coherence_identity():
    assert arrays.mutual_coherence(np.eye(3)) == 0.0


def test_mutual_coherence_proportional_columns():
    a = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 1.0]])
    assert arrays.mutual_coherence(a) == pytest.approx(1.0)


def test_mutual_coherence_matches_bruteforce():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    best = 0.0
    for i in range(5):
        for j in range(i + 1, 5):
            num = abs(np.vdot(a[:, i], a[:, j]))
            best = max(best, num / (np.linalg.norm(a[:, i]) * np.linalg.norm(a[:, j])))
    assert arrays.mutual_coherence(a) == pytest.approx(best, rel=1e-12)


def test_mutual_coherence_scale_invariance():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 7)) + 1j * rng.standard_normal((4, 7))
    d = rng.uniform(0.1, 10.0, size=7)
    assert arrays.mutual_coherence(a * d) == pytest.approx(arrays.mutual_coherence(a), rel=1e-10)


def test_mutual_coherence_zero_column():
    a = np.eye(3)
    a[:, 1] = 0.0
    with pytest.raises(DegenerateInputError):
        arrays.mutual_coherence(a)


def test_spark_identity():
    assert arrays.spark_bruteforce(np.eye(3)) == 4


def test_spark_repeated_column():
    a = np.eye(3)
    a = np.concatenate([a, a[:, :1]], axis=1)
    assert arrays.spark_bruteforce(a) == 2


def test_spark_vandermonde_dictionary():
    geom = arrays.ula(4)
    freqs = [-0.4, -0.21, -0.05, 0.11, 0.27, 0.43]
    a = arrays.steering_matrix(geom, freqs)
    assert arrays.spark_bruteforce(a) == 5


def test_spark_size_limit():
    with pytest.raises(SizeLimitError):
        arrays.spark_bruteforce(np.ones((3, 21)))


def test_spark_upper_bound_random():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(2, 7))
        a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        assert arrays.spark_bruteforce(a) <= m + 1


def test_identifiability_paper_cases():
    # single-snapshot form K < spark / 2
    assert arrays.identifiability_check(9, 1, 4) is True
    # boundary 8 < 8 is false
    assert arrays.identifiability_check(9, 8, 8) is False
    # ULA M=8: K < (M + rank Y) / 2
    assert arrays.identifiability_check(9, 3, 5) is True


def test_identifiability_preconditions():
    with pytest.raises(DomainError):
        arrays.identifiability_check(1, 1, 0)


def test_row_selector_identity():
    geom = arrays.ula(4)
    assert np.array_equal(arrays.row_selector(geom), np.eye(4))


def test_row_selector_explicit():
    geom = arrays.sla(3, [1, 3])
    assert np.array_equal(arrays.row_selector(geom), [[1, 0, 0], [0, 0, 1]])


def test_row_selector_selects_steering_rows():
    rng = np.random.default_rng(5)
    geom = arrays.sla(9, [1, 4, 5, 9])
    gam = arrays.row_selector(geom)
    assert np.allclose(gam @ gam.T, np.eye(geom.m))
    for f in rng.uniform(-0.5, 0.5, size=10):
        full = arrays.steering_vector(arrays.ula(9), f=f)
        assert np.allclose(gam @ full, arrays.steering_vector(geom, f=f))


def test_geometry_json_round_trip():
    for geom in [arrays.ula(6), arrays.sla(12, [1, 2, 5, 8, 12]), arrays.planar([1.0, 2.0], [0.0, 45.0])]:
        back = arrays.ArrayGeometry.from_json(geom.to_json())
        assert back == geom
    obj = json.loads(arrays.sla(12, [1, 2, 5, 8, 12]).to_json())
    assert obj == {"kind": "sla", "n": 12, "omega": [1, 2, 5, 8, 12]}


def test_geometry_invariants():
    with pytest.raises(DomainError):
        arrays.sla(5, [2, 2, 3])
    with pytest.raises(DomainError):
        arrays.sla(5, [0, 3])
    with pytest.raises(DomainError):
        arrays.sla(5, [1, 6])
    assert arrays.ula(4).omega == (1, 2, 3, 4)


def test_wrap_helpers():
    assert arrays.wrap_frequency(0.75) == pytest.approx(-0.25)
    assert arrays.wrap_frequency(0.5) == pytest.approx(0.5)
    assert arrays.wrap_distance(0.45, -0.45) == pytest.approx(0.1)
    assert arrays.min_separation([0.1, 0.2, -0.45]) == pytest.approx(0.1)


def test_uniform_dictionary_columns():
    geom = arrays.ula(6)
    d = arrays.SteeringDictionary.uniform(geom, 24)
    assert d.matrix.shape == (6, 24)
    for n in (0, 7, 23):
        assert np.allclose(d.matrix[:, n], arrays.steering_vector(geom, f=d.grid[n]))
        assert np.linalg.norm(d.matrix[:, n]) ** 2 == pytest.approx(6.0)
