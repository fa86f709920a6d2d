import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from jsl import kernels, swarm as swarm_mod
from jsl.closed_form import soliton_cdf
from jsl.linear_jump import InitialDensity
from jsl.mean_field import evolve, gaussian_grid
from jsl.params import ModelParams
from jsl.swarm import (
    FrozenSwarm,
    RateIndex,
    RateOverflowError,
    Swarm,
    advance_thinning,
    gillespie_step,
    naive_particle_rates,
    particle_rates,
    rebuild_rates_incremental,
    relative_difference,
    run,
)

P2 = ModelParams(lam=2.0, n=0.0)


# --- rates -----------------------------------------------------------------

def test_rates_two_particles_n0():
    sw = Swarm([0.0, 1.0], P2, 1)
    assert list(particle_rates(sw)) == [1.0, 0.0]


def test_rates_two_particles_n1():
    sw = Swarm([-1.0, 1.0], ModelParams(lam=1.0, n=1.0), 1)
    assert particle_rates(sw) == pytest.approx([1 / math.cosh(1.0), 0.0], rel=1e-15)
    assert particle_rates(sw)[0] == pytest.approx(0.6480543, abs=1e-7)


def test_rightmost_has_zero_rate(rng):
    sw = Swarm(rng.normal(size=50), P2, 1)
    assert particle_rates(sw)[np.argmax(sw.positions)] == 0.0


def test_single_particle_has_zero_rate():
    assert list(particle_rates(Swarm([3.0], P2, 1))) == [0.0]


def test_ties_contribute_nothing():
    sw = Swarm([0.0, 0.0, 1.0], P2, 1)
    assert particle_rates(sw) == pytest.approx([0.5, 0.5, 0.0])
    assert list(particle_rates(Swarm([2.0, 2.0], P2, 1))) == [0.0, 0.0]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(min_value=-20, max_value=20), min_size=2, max_size=40),
    st.floats(min_value=-2.0, max_value=4.0),
)
def test_sorted_rates_match_naive(ints, n):
    x = np.array(ints, dtype=float) / 4.0  # integer grid makes ties common
    p = ModelParams(lam=1.0, n=n, base_rate=1.7)
    sw = Swarm(x, p, 1)
    assert np.allclose(particle_rates(sw), naive_particle_rates(x, p), rtol=1e-12, atol=1e-15)


def test_rate_overflow_for_extreme_outlier():
    sw = Swarm([0.0, 1.0, 5000.0], ModelParams(lam=1.0, n=-1.0), 1)
    with pytest.raises(RateOverflowError):
        particle_rates(sw)


# --- direct method -------------------------------------------------------------

def test_single_particle_is_frozen():
    with pytest.raises(FrozenSwarm):
        gillespie_step(Swarm([0.0], P2, 1))


def test_two_particles_mover_and_mean_wait():
    waits = []
    for seed in range(4000):
        sw = Swarm([0.0, 1.0], ModelParams(lam=1.0), seed)
        ev = gillespie_step(sw)
        assert ev.index == 0
        waits.append(ev.dt)
    assert abs(np.mean(waits) - 1.0) < 4 / math.sqrt(4000)


def test_step_invariants(rng):
    sw = Swarm(rng.normal(size=30), ModelParams(lam=1.0, n=0.5), 3)
    idx = RateIndex(sw)
    prev_t, prev_x = sw.t, sw.positions.copy()
    for _ in range(500):
        ev = gillespie_step(sw, idx)
        assert sw.t > prev_t
        moved = np.flatnonzero(sw.positions != prev_x)
        assert list(moved) == [ev.index] and ev.jump > 0
        prev_t, prev_x = sw.t, sw.positions.copy()
    assert sw.event_count == 500
    assert sw.barycenter == pytest.approx(sw.positions.mean(), rel=1e-12)


def test_mover_frequencies_match_rates():
    # martingale check: counts minus summed selection probabilities, per particle
    size = 20
    sw = Swarm(np.linspace(0, 3, size), ModelParams(lam=1.0, n=1.0), 17)
    idx = RateIndex(sw)
    counts = np.zeros(size)
    expected = np.zeros(size)
    var = np.zeros(size)
    for _ in range(100_000):
        prob = idx.rates() / idx.total
        expected += prob
        var += prob * (1 - prob)
        counts[gillespie_step(sw, idx).index] += 1
    z = (counts - expected) / np.sqrt(np.maximum(var, 1e-12))
    assert np.all(np.abs(z) < 4.0)


def test_indexed_and_unindexed_steps_agree():
    a = Swarm(np.linspace(0, 2, 15), P2, 5)
    b = Swarm(np.linspace(0, 2, 15), P2, 5)
    idx = RateIndex(b)
    for _ in range(200):
        ea = gillespie_step(a)
        eb = gillespie_step(b, idx)
        assert (ea.index, ea.dt, ea.jump) == (eb.index, eb.dt, eb.jump)


# --- incremental rates ---------------------------------------------------------

def test_incremental_single_move_matches_full(rng):
    sw = Swarm(rng.normal(size=500), ModelParams(lam=1.0, n=1.5), 1)
    idx = RateIndex(sw)
    sw.positions[7] += 0.3
    sw._moved(7, 0.3)
    rates = rebuild_rates_incremental(idx, 7)
    assert relative_difference(rates, particle_rates(sw)) < 1e-9


def test_incremental_after_many_events():
    sw = Swarm.from_initial(200, ModelParams(lam=1.0, n=0.5), seed=9)
    idx = RateIndex(sw, rebuild_every=10_000)
    for _ in range(100_000):
        gillespie_step(sw, idx)
    assert relative_difference(idx.rates(), particle_rates(sw)) < 1e-8
    assert idx.rebuilds >= 10
    assert idx.max_rebuild_error < 1e-9


def test_incremental_large_swarm():
    sw = Swarm.from_initial(10_000, ModelParams(lam=2.0, n=0.5), seed=4)
    idx = RateIndex(sw)
    for _ in range(300):
        gillespie_step(sw, idx)
    assert relative_difference(idx.rates(), particle_rates(sw)) < 1e-9
    assert relative_difference(particle_rates(sw), naive_particle_rates(sw.positions, sw.params)) < 1e-9


# --- thinning sampler ------------------------------------------------------------

def _final(seed, p, size=300, t=20.0, backend=None):
    sw = Swarm.from_initial(size, p, seed=seed)
    advance_thinning(sw, t, backend=backend)
    return sw


@pytest.mark.parametrize("n, lam", [(0.0, 2.0), (1.0, 1.0), (-1.0, 3.0), (2.5, 0.5)])
def test_thinning_backends_bit_identical(n, lam):
    if kernels.compiled is None:
        pytest.skip("compiled kernels not built")
    p = ModelParams(lam=lam, n=n)
    a = _final(3, p, t=5.0, backend=kernels.compiled)
    b = _final(3, p, t=5.0, backend=kernels.fallback)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.state, b.state, equal_nan=True)


def test_thinning_deterministic_and_seed_sensitive():
    a, b, c = _final(1, P2), _final(1, P2), _final(2, P2)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_thinning_independent_of_stop_points_and_buffer(monkeypatch):
    ref = _final(5, ModelParams(lam=1.0, n=1.0))
    sw = Swarm.from_initial(300, ModelParams(lam=1.0, n=1.0), seed=5)
    for t in np.linspace(0.37, 20.0, 41):
        advance_thinning(sw, float(t))
    assert np.array_equal(sw.positions, ref.positions)
    monkeypatch.setattr(swarm_mod, "BUFFER_PROPOSALS", 7)
    small = _final(5, ModelParams(lam=1.0, n=1.0))
    assert np.array_equal(small.positions, ref.positions)


@pytest.mark.parametrize("n", [1.0, -1.0])
def test_thinning_and_direct_have_the_same_law(n):
    p = ModelParams(lam=1.0, n=n)
    x0 = np.array([-1.0, -0.3, 0.2, 0.9, 1.5])
    direct, thin = [], []
    for seed in range(2500):
        a = Swarm(x0, p, seed)
        run(a, 2.0, record_every=2.0, method="direct")
        direct.append((a.barycenter, a.variance()))
        b = Swarm(x0, p, seed + 10 ** 6)
        run(b, 2.0, record_every=2.0, method="thinning")
        thin.append((b.barycenter, b.variance()))
    direct, thin = np.array(direct), np.array(thin)
    for k in range(2):
        assert stats.ks_2samp(direct[:, k], thin[:, k]).pvalue > 1e-3


def test_exchangeability_under_relabeling():
    x = np.random.default_rng(0).normal(size=40)
    perm = np.random.default_rng(1).permutation(40)
    a = Swarm(x, ModelParams(lam=1.0, n=0.5), 11)
    b = Swarm(x[perm], ModelParams(lam=1.0, n=0.5), 11)
    ta = run(a, 10.0, method="direct")
    tb = run(b, 10.0, method="direct")
    assert np.array_equal(np.sort(a.positions), np.sort(b.positions))
    assert np.allclose(ta.barycenters, tb.barycenters, rtol=0, atol=1e-12)
    assert np.allclose(ta.variances, tb.variances, rtol=1e-12)


# --- driver --------------------------------------------------------------------

def test_run_records_and_histograms():
    sw = Swarm.from_initial(2000, P2, seed=3)
    tr = run(sw, 10.0, record_every=1.0, snapshot_times=(5.0, 10.0), keep_samples=True)
    assert np.allclose(tr.times, np.arange(11.0))
    assert [h.t for h in tr.histograms] == [5.0, 10.0]
    for h in tr.histograms:
        assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1.0, abs=1e-3)
    assert set(tr.comoving_samples) == {5.0, 10.0}
    assert np.all(np.diff(tr.barycenters) > 0)
    assert tr.status == "completed" and tr.events == sw.event_count
    assert np.all(np.isfinite(sw.positions)) and sw.size == 2000


def test_run_frozen_single_particle():
    tr = run(Swarm([0.0], P2, 1), 5.0)
    assert tr.status == "frozen"


def test_cold_start_jitter_unfreezes():
    sw = Swarm.from_initial(100, P2, seed=1, init="cold")
    assert np.all((sw.positions >= 0) & (sw.positions < 1e-6))
    assert run(sw, 1.0).status == "completed"
    assert sw.event_count > 0


def test_uniform_initial_density():
    sw = Swarm.from_initial(5000, P2, seed=1, init=InitialDensity.uniform(2.0, 4.0))
    assert sw.positions.min() >= 2.0 and sw.positions.max() <= 4.0
    with pytest.raises(ValueError):
        Swarm.from_initial(5, P2, init="bogus")


def test_same_seed_same_trajectory():
    a = run(Swarm.from_initial(1000, P2, seed=42), 20.0)
    b = run(Swarm.from_initial(1000, P2, seed=42), 20.0)
    assert np.array_equal(a.barycenters, b.barycenters)
    assert np.array_equal(a.mean_rates, b.mean_rates)


def test_mean_field_consistency():
    t = 20.0
    sw = Swarm.from_initial(10_000, P2, seed=42)
    tr = run(sw, t, record_every=t, snapshot_times=(t,), keep_samples=True)
    mf = evolve(gaussian_grid(1.0, 0.02, 25.0), P2, t, recenter=True).final
    mean = float(np.dot(mf.x, mf.values) / mf.values.sum())
    xc = mf.x - mean
    cdf = np.cumsum(mf.values) * mf.dx
    ks = stats.kstest(tr.comoving_samples[t], lambda q: np.interp(q, xc, cdf)).statistic
    assert ks < 0.05


def test_soliton_regime_long_run():
    sw = Swarm.from_initial(10_000, P2, seed=42)
    tr = run(sw, 300.0, snapshot_times=(100.0,), keep_samples=True)
    ks = stats.kstest(tr.comoving_samples[100.0], lambda q: soliton_cdf(q, 2.0)).statistic
    assert ks < 0.03
    tt, bb, rr = tr.window(100.0, 300.0)
    slope = np.polyfit(tt, bb, 1)[0]
    assert abs(slope - 0.25) / 0.25 < 0.05
    assert abs(rr.mean() / (2.0 * slope) - 1.0) < 0.05


def test_incremental_throughput_beats_naive():
    import time

    sw = Swarm.from_initial(10_000, ModelParams(lam=2.0, n=0.5), seed=3)
    idx = RateIndex(sw)
    start = time.perf_counter()
    for _ in range(50):
        gillespie_step(sw, idx)
    per_event = (time.perf_counter() - start) / 50
    start = time.perf_counter()
    naive_particle_rates(sw.positions, sw.params)
    naive = time.perf_counter() - start
    assert naive / per_event >= 10.0
