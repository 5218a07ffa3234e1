import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratheat.coupling import (CouplingError, coupled_ensemble, default_fine_grid, exit_time_cdf,
                                sample_exit_time, skorokhod_couple_donsker, skorokhod_couple_kac)
from stratheat.noise import TimeGrid


def _seed(*keys):
    return np.random.SeedSequence(20240601, spawn_key=keys)


def test_donsker_steps_are_signs():
    for r in range(20):
        res = skorokhod_couple_donsker(16, seed=_seed(r))
        z = res.increments * np.sqrt(16)
        np.testing.assert_allclose(np.abs(z), 1.0, rtol=0, atol=1e-15)
        assert np.all(np.diff(res.stopping_times) > 0)


def test_donsker_approx_is_walk_at_knots():
    res = skorokhod_couple_donsker(8, seed=_seed(0))
    knots = res.approx.values[:: res.approx.grid.N // 8]
    np.testing.assert_allclose(knots[1:], res.embedded, atol=1e-14)
    assert res.approx.values[0] == 0.0


@pytest.mark.slow
def test_donsker_mean_embedding_time():
    T = [skorokhod_couple_donsker(64, seed=_seed(1, r)).stopping_times[-1] for r in range(2000)]
    assert np.mean(T) == pytest.approx(1.0, rel=0.05)


def test_kac_embedded_increment_law():
    n, inc = 16, []
    r = 0
    while len(inc) < 10_000:
        res = skorokhod_couple_kac(n, seed=_seed(2, r))
        inc += list(np.abs(res.increments))
        r += 1
    inc = np.array(inc)
    # time-change increments are |increment| / sqrt(n)
    assert inc.mean() == pytest.approx(1 / (2 * np.sqrt(n)), rel=0.05)
    assert (inc / np.sqrt(n)).mean() == pytest.approx(1 / (2 * n), rel=0.05)
    # exponential law: P(A > mean) = e^-1
    assert np.mean(inc > 1 / (2 * np.sqrt(n))) == pytest.approx(np.exp(-1), abs=0.02)


def test_kac_approx_slope():
    res = skorokhod_couple_kac(9, seed=_seed(3))
    slope = np.abs(np.diff(res.approx.values)) / res.approx.grid.dt
    assert np.all(slope <= 3.0 * (1 + 1e-9))


def test_coupling_horizon_exhaustion():
    with pytest.raises(CouplingError) as info:
        skorokhod_couple_donsker(64, TimeGrid(1.0, 1000), seed=_seed(4))
    assert info.value.embedded < 64
    with pytest.raises(ValueError):
        skorokhod_couple_donsker(4, TimeGrid(0.5, 100), seed=0)


def test_exit_time_series_agree_and_moments():
    # the two series overlap: evaluate both on either side of the switch
    assert exit_time_cdf(0.4999999)[0] == pytest.approx(exit_time_cdf(0.5)[0], abs=1e-6)
    t = np.linspace(0.01, 5, 400)
    F = exit_time_cdf(t)
    assert np.all(np.diff(F) >= 0) and F[0] >= 0 and F[-1] <= 1
    x = sample_exit_time(np.random.default_rng(0), 400_000)
    se = x.std() / np.sqrt(x.size)
    assert abs(x.mean() - 1.0) <= 3 * se
    assert x.var() == pytest.approx(2 / 3, rel=0.02)


def test_exit_time_against_simulation():
    # crude random-walk exit times of [-1, 1] with small steps
    rng = np.random.default_rng(1)
    h, P = 1e-4, 4000
    pos = np.zeros(P)
    t = np.zeros(P)
    alive = np.ones(P, bool)
    while alive.any():
        pos[alive] += rng.standard_normal(alive.sum()) * np.sqrt(h)
        t[alive] += h
        alive &= np.abs(pos) < 1
    assert np.mean(t <= 0.6) == pytest.approx(exit_time_cdf(0.6)[0], abs=0.03)


@given(st.sampled_from(["donsker", "kac"]), st.integers(1, 64), st.integers(0, 2**31))
@settings(max_examples=15, deadline=None)
def test_lattice_error_bounded_by_spacing(kind, n, seed):
    ev = np.linspace(0, 1, 17)
    ens = coupled_ensemble(kind, n, 50, ev, seed)
    assert np.all(np.isfinite(ens.error))
    assert np.all(ens.approx[:, 0] == 0.0)
    if kind == "donsker":
        knots = ens.approx[:, :: max(1, 16 // n)] if n <= 16 and 16 % n == 0 else None
        if knots is not None:
            z = np.diff(knots, axis=1) * np.sqrt(n)
            np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-12)


def test_lattice_and_fine_grid_routes_agree():
    n, R = 16, 1000
    fine = default_fine_grid(n)
    errs = []
    for r in range(R):
        res = skorokhod_couple_donsker(n, fine, _seed(5, r))
        errs.append((res.approx.values - res.brownian.values)[:: res.approx.grid.N // 64])
    xf = np.abs(np.array(errs)) ** 4
    ens = coupled_ensemble("donsker", n, 4000, np.linspace(0, 1, 65), _seed(6))
    xl = np.abs(ens.error) ** 4
    mf, ml = xf.mean(0), xl.mean(0)
    af, al = mf.argmax(), ml.argmax()
    se = np.hypot(xf[:, af].std() / np.sqrt(R), xl[:, al].std() / np.sqrt(4000))
    assert abs(mf[af] - ml[al]) <= 3 * se


def test_coupled_error_decreases():
    ev = np.linspace(0, 1, 65)
    for kind in ("donsker", "kac"):
        sup = [np.max(np.mean(coupled_ensemble(kind, n, 2000, ev, _seed(7, n)).error ** 4, 0))
               for n in (16, 64, 256)]
        assert sup[0] > sup[1] > sup[2]


def test_ensemble_deterministic():
    ev = np.linspace(0, 1, 9)
    a = coupled_ensemble("kac", 8, 30, ev, 11)
    b = coupled_ensemble("kac", 8, 30, ev, 11)
    np.testing.assert_array_equal(a.error, b.error)
    with pytest.raises(ValueError):
        coupled_ensemble("other", 8, 3, ev, 0)
