"""Tests for Gaussian Gram matrices, HSIC, the KCI test and direction scores."""

import numpy as np
import pytest

from errors import DataError
from kernels import (
    center, direction_score, gram_gaussian, gram_median, hsic, kci_test, median_bandwidth,
)


def test_median_bandwidth():
    assert median_bandwidth([0.0, 1.0, 2.0]) == 1.0
    assert median_bandwidth([0.0, 2.0]) == 2.0
    assert median_bandwidth([3.0, 3.0, 3.0]) == 1.0


def test_gram_gaussian_entries():
    gram = gram_gaussian(np.array([[0.0, 0.0], [1.0, 1.0]]), 1.0)
    assert gram.entries[0, 1] == pytest.approx(np.exp(-1.0))
    assert np.all(np.diag(gram.entries) == 1.0)
    np.testing.assert_array_equal(gram.entries, gram.entries.T)

    identical = gram_gaussian(np.ones((4, 2)), 0.5)
    np.testing.assert_array_equal(identical.entries, np.ones((4, 4)))


def test_gram_gaussian_rejects_bad_bandwidth():
    with pytest.raises(DataError):
        gram_gaussian([0.0, 1.0], 0.0)


def test_hsic_of_constant_variable_is_zero():
    x = gram_median(np.random.default_rng(0).standard_normal(20))
    y = gram_gaussian(np.zeros(20), 1.0)
    assert abs(hsic(x, y)) < 1e-12


def test_hsic_matches_double_sum():
    """trace(K H K H) / n^2 evaluated entry by entry on a 3-point toy."""
    samples = np.array([0.0, 1.0, 2.0])
    K = gram_gaussian(samples, 1.0).entries
    n = 3
    H = [[(1.0 if i == j else 0.0) - 1.0 / n for j in range(n)] for i in range(n)]
    KH = [[sum(K[i][k] * H[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    expected = sum(KH[i][j] * KH[j][i] for i in range(n) for j in range(n)) / n ** 2

    gram = gram_gaussian(samples, 1.0)
    assert hsic(gram, gram) == pytest.approx(expected, rel=1e-12)


def test_hsic_size_mismatch():
    with pytest.raises(DataError):
        hsic(gram_gaussian(np.zeros(3), 1.0), gram_gaussian(np.zeros(4), 1.0))


def test_center_removes_row_and_column_means():
    K = gram_median(np.random.default_rng(1).standard_normal((15, 2))).entries
    centered = center(K)
    np.testing.assert_allclose(centered.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(centered.mean(axis=1), 0.0, atol=1e-12)


def test_kci_detects_identity_dependence():
    x = np.random.default_rng(2).standard_normal(200)
    result = kci_test(x, x.copy())
    assert result.p_value < 0.001
    assert not result.independent


def test_kci_permutation_method_detects_dependence():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(100)
    result = kci_test(x, x ** 2 + 0.05 * rng.standard_normal(100), method='permutation',
                      n_permutations=200, seed=7)
    assert result.p_value < 0.01
    assert result.method == 'permutation'


def test_kci_permutation_is_seeded():
    rng = np.random.default_rng(4)
    x, y = rng.standard_normal(60), rng.standard_normal(60)
    first = kci_test(x, y, method='permutation', n_permutations=100, seed=11)
    second = kci_test(x, y, method='permutation', n_permutations=100, seed=11)
    assert first.p_value == second.p_value


def test_kci_conditional_collider_dependence():
    """x and y are independent, but conditioning on their sum makes them dependent."""
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal(200), rng.standard_normal(200)
    z = x + y + 0.1 * rng.standard_normal(200)
    result = kci_test(x, y, z)
    assert result.p_value < 0.01


def test_kci_degenerate_input():
    y = np.random.default_rng(6).standard_normal(30)
    result = kci_test(np.ones(30), y)
    assert result.independent
    assert result.p_value == 1.0
    assert result.degenerate


def test_kci_input_checks():
    x = np.zeros(5)
    with pytest.raises(DataError, match='at least 10'):
        kci_test(x, x)
    y = np.random.default_rng(0).standard_normal(20)
    with pytest.raises(DataError):
        kci_test(y, y, method='bootstrap')
    with pytest.raises(DataError):
        kci_test(y, y, alpha=1.5)
    with pytest.raises(DataError):
        kci_test(y, y[:15])


@pytest.mark.slow
def test_kci_gamma_rejection_rate_under_independence():
    rejections = 0
    trials = 200
    for seed in range(trials):
        rng = np.random.default_rng(1000 + seed)
        result = kci_test(rng.standard_normal(200), rng.standard_normal(200), alpha=0.05)
        rejections += not result.independent
    assert 0.02 <= rejections / trials <= 0.10


@pytest.mark.slow
def test_kci_power_against_quadratic_dependence():
    rejections = 0
    trials = 20
    for seed in range(trials):
        rng = np.random.default_rng(2000 + seed)
        x = rng.standard_normal(200)
        rejections += not kci_test(x, x ** 2 + 0.5 * rng.standard_normal(200)).independent
    assert rejections / trials >= 0.9


@pytest.mark.slow
def test_kci_common_cause_dependence_vanishes_given_the_cause():
    """x and y only share z: dependent marginally, independent once z is given."""
    accepted = 0
    trials = 10
    for seed in range(trials):
        rng = np.random.default_rng(3000 + seed)
        z = rng.standard_normal(200)
        x = z + 0.5 * rng.standard_normal(200)
        y = z + 0.5 * rng.standard_normal(200)
        assert not kci_test(x, y).independent
        accepted += kci_test(x, y, z, alpha=0.01).independent
    assert accepted >= 8


@pytest.mark.slow
def test_direction_score_prefers_the_true_direction():
    """The cause drifts with u while the additive-noise mechanism stays fixed."""
    wins = 0
    trials = 10
    u = np.linspace(0.0, 1.0, 200)
    for seed in range(trials):
        rng = np.random.default_rng(4000 + seed)
        x = 2.0 * np.sin(2.0 * np.pi * u) + rng.standard_normal(200)
        y = x + 2.0 * rng.standard_normal(200)
        wins += direction_score(x, y, u).delta < direction_score(y, x, u).delta
    assert wins >= 7


def test_direction_score_is_bounded():
    rng = np.random.default_rng(8)
    u = np.linspace(0.0, 1.0, 80)
    x = rng.standard_normal(80)
    y = rng.standard_normal(80)
    forward = direction_score(x, y, u).delta
    backward = direction_score(y, x, u).delta
    for value in (forward, backward):
        assert np.isfinite(value)
        assert -1e-12 <= value <= 1.0 + 1e-12


def test_direction_score_rejects_constant_block():
    u = np.linspace(0.0, 1.0, 20)
    with pytest.raises(DataError, match='degenerate'):
        direction_score(np.ones(20), u, u)

