import numpy as np
import pytest
from scipy.special import ndtri
from scipy.stats import kstest

from dinendt.baselines import (ar1_ff_capacity, awgn_capacity, kr_gaussian_forward, kr_gaussian_inverse,
                               ma1_fb_capacity, ma1_ff_capacity, ma1_ff_capacity_toeplitz, normal_quantile,
                               peak_awgn_upper_bound, wasserstein2_1d, water_fill)

POWERS = [0.25, 0.5, 1.0, 2.0, 4.0, 10.0]
ALPHAS = [-0.9, -0.5, 0.0, 0.3, 0.5, 0.8]


def test_awgn_examples():
    assert awgn_capacity(1.0, 1.0) == pytest.approx(0.34657359, abs=1e-8)
    assert awgn_capacity(0.0, 1.0) == 0.0
    assert awgn_capacity(3.0, 1.0) == pytest.approx(np.log(2), abs=1e-15)
    with pytest.raises(ValueError):
        awgn_capacity(-1.0)
    with pytest.raises(ValueError):
        awgn_capacity(1.0, 0.0)


def test_peak_bound_examples():
    assert peak_awgn_upper_bound(1.0, 1.0) == pytest.approx(0.34657359, abs=1e-8)
    assert peak_awgn_upper_bound(1e-9) < 1e-17
    with pytest.raises(ValueError):
        peak_awgn_upper_bound(0.0)


def test_water_fill_examples():
    sol = water_fill([1.0, 2.0], 1.0)
    assert sol.level == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(sol.powers, [1.0, 0.0], atol=1e-10)
    assert sol.capacity_nats == pytest.approx(0.34657359, abs=1e-8)
    sol = water_fill([1.0, 1.0], 2.0)
    np.testing.assert_allclose(sol.powers, [1.0, 1.0], atol=1e-10)
    assert sol.capacity_nats == pytest.approx(np.log(2), abs=1e-10)
    assert water_fill([1.0, 3.0], 0.0).capacity_nats == 0.0
    with pytest.raises(ValueError):
        water_fill([], 1.0)
    with pytest.raises(ValueError):
        water_fill([1.0, -1.0], 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_water_fill_kkt(seed):
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0.1, 5.0, 12)
    caps = []
    for p in POWERS:
        sol = water_fill(noise, p)
        res = sol.kkt_residuals(p)
        assert res["negativity"] == 0.0
        assert res["budget"] < 1e-9
        assert res["slackness"] < 1e-8
        caps.append(sol.capacity_nats)
    assert np.all(np.diff(caps) > 0)


def test_ma1_ff_reduces_and_converges():
    for p in POWERS:
        assert abs(ma1_ff_capacity(0.0, p) - awgn_capacity(p)) < 1e-9
        assert abs(ma1_ff_capacity(0.5, p, 512) - ma1_ff_capacity(0.5, p, 1024)) < 1e-6
    with pytest.raises(ValueError):
        ma1_ff_capacity(1.0, 1.0)
    with pytest.raises(ValueError):
        ma1_ff_capacity(0.5, 1.0, 32)


@pytest.mark.parametrize("power", [0.5, 1.0, 2.0])
def test_ma1_ff_matches_toeplitz_oracle(power):
    assert abs(ma1_ff_capacity(0.5, power) - ma1_ff_capacity_toeplitz(0.5, power, 256)) < 1e-3


def test_ma1_fb_memoryless_reduction():
    for p in POWERS:
        assert abs(ma1_fb_capacity(0.0, p) - awgn_capacity(p)) < 1e-9


def test_ma1_fb_at_least_ff_and_increasing():
    for a in ALPHAS:
        fb = [ma1_fb_capacity(a, p) for p in POWERS]
        ff = [ma1_ff_capacity(a, p) for p in POWERS]
        assert np.all(np.diff(fb) > 0) and np.all(np.diff(ff) > 0)
        assert np.all(np.array(fb) >= np.array(ff) - 1e-6)


def test_ma1_fb_within_cover_pombra_bounds():
    # feedback at most doubles capacity and adds at most half a bit
    for a in ALPHAS:
        for p in POWERS:
            ff = ma1_ff_capacity(a, p)
            assert ma1_fb_capacity(a, p) <= min(2 * ff, ff + 0.5 * np.log(2)) + 1e-9


def test_ma1_fb_root_solves_polynomial():
    c = ma1_fb_capacity(0.5, 1.0)
    x0 = np.exp(-c)
    assert abs(x0 * x0 - (1 - x0 * x0) * (1 - 0.5 * x0) ** 2) < 1e-11
    with pytest.raises(ValueError):
        ma1_fb_capacity(0.5, 0.0)


def test_ar1_symmetry_and_monotonicity():
    for p in [0.5, 1.0, 2.0]:
        assert abs(ar1_ff_capacity(0.4, p, dim=4) - 4 * ar1_ff_capacity(0.4, p / 4, dim=1)) < 1e-9
    caps = [ar1_ff_capacity(0.4, p) for p in [0.5, 1.0, 2.0]]
    assert np.all(np.diff(caps) > 0)
    assert abs(ar1_ff_capacity(0.0, 1.0, dim=1) - awgn_capacity(1.0)) < 1e-9


def test_normal_quantile_accuracy():
    u = np.concatenate([np.linspace(1e-10, 1e-3, 200), np.linspace(1e-3, 1 - 1e-3, 2000),
                        1 - np.linspace(1e-10, 1e-3, 200)])
    assert np.max(np.abs(normal_quantile(u) - ndtri(u))) < 1e-9


def test_kr_examples():
    assert kr_gaussian_inverse(np.full(3, 0.5), 0.0, np.sqrt(2.0)).tolist() == [0.0, 0.0, 0.0]
    assert kr_gaussian_inverse(0.841345, 0.0, 1.0) == pytest.approx(1.0, abs=1e-4)
    x = np.random.default_rng(0).standard_normal((100, 3)) * [1.0, 2.0, 0.5] + [0.0, 1.0, -3.0]
    u = kr_gaussian_forward(x, [0.0, 1.0, -3.0], [1.0, 2.0, 0.5])
    np.testing.assert_allclose(kr_gaussian_inverse(u, [0.0, 1.0, -3.0], [1.0, 2.0, 0.5]), x, atol=1e-6)
    with pytest.raises(ValueError):
        kr_gaussian_inverse(np.array([0.0, 0.5]))
    with pytest.raises(ValueError):
        kr_gaussian_inverse(1.0)


def test_kr_pushforward_is_normal():
    u = np.random.default_rng(1).random(100_000)
    assert kstest(kr_gaussian_inverse(u), "norm").pvalue > 0.01


def test_wasserstein_examples():
    a = np.random.default_rng(2).standard_normal(500)
    assert wasserstein2_1d(a, a[::-1]) == 0.0
    assert wasserstein2_1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-15)
    assert wasserstein2_1d(a, a + 0.3) == pytest.approx(0.3, abs=1e-12)
    b = np.random.default_rng(3).standard_normal(20_000)
    c = np.random.default_rng(4).standard_normal(20_000) + 0.3
    assert abs(wasserstein2_1d(b, c) - 0.3) < 0.03
    assert wasserstein2_1d([0.0, 1.0], [0.0, 0.5, 1.0]) > 0.0
    with pytest.raises(ValueError):
        wasserstein2_1d([], [1.0])
