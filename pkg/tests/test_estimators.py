import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unimatch import estimators as est
from unimatch.estimators import (
    BITFLIP,
    DEPOLARISING,
    FailureChain,
    FitFailure,
    NoiseModel,
    Population,
    Problem,
    fit_threshold,
    initial_population,
    ladder,
    metropolis_step,
    monte_carlo,
    sample_error,
    sample_errors,
    scaling_form,
    seed_failure,
    splitting_run,
)
from unimatch.lattices import PauliError, build_color_code, build_surface_code


def test_bitflip_mean_weight():
    rng = np.random.default_rng(0)
    w = sample_errors(NoiseModel(BITFLIP, 0.1), 100, rng, 100000).sum(axis=1)
    assert abs(w.mean() - 10) < 3 * 3 / math.sqrt(100000)


def test_depolarising_marginals():
    rng = np.random.default_rng(1)
    e = sample_errors(NoiseModel(DEPOLARISING, 0.3), 50, rng, 20000)
    freq = np.bincount(e.ravel(), minlength=4) / e.size
    se = math.sqrt(0.1 * 0.9 / e.size)
    assert np.all(np.abs(freq[1:] - 0.1) < 5 * se)


def test_sample_error_types():
    rng = np.random.default_rng(2)
    assert isinstance(sample_error(NoiseModel(DEPOLARISING, 0.1), build_surface_code(4), rng), PauliError)
    assert sample_error(NoiseModel(BITFLIP, 0.1), build_color_code(8), rng).dtype == bool
    with pytest.raises(ValueError):
        sample_error(NoiseModel(BITFLIP, 0.1), build_surface_code(4), rng)
    with pytest.raises(ValueError):
        NoiseModel("other", 0.1)
    with pytest.raises(ValueError):
        NoiseModel(BITFLIP, 1.0)


@given(st.floats(1e-4, 0.3), st.integers(0, 30))
def test_log_weight(p, w):
    m = NoiseModel(DEPOLARISING, p)
    want = w * math.log(p / 3) + (40 - w) * math.log(1 - p)
    assert math.isclose(m.log_weight(w, 40), want, rel_tol=1e-12)


def test_monte_carlo_reproducible_and_worker_independent(monkeypatch):
    pb = Problem("surface", 4, "unified")
    a = monte_carlo(pb, 0.06, 12000, seed=5)
    b = monte_carlo(pb, 0.06, 12000, seed=5)
    assert a == b
    monkeypatch.setenv(est.WORKERS_ENV, "2")
    c = monte_carlo(pb, 0.06, 12000, seed=5)
    assert a == c
    assert monte_carlo(pb, 0.06, 12000, seed=6) != a


def test_monte_carlo_coin_modes():
    pb = Problem("surface", 4, "unified")
    h = monte_carlo(pb, 0.05, 5000, seed=3)
    f = monte_carlo(pb, 0.05, 5000, seed=3, coin="fair")
    assert h.failures == f.failures and h.coin_flips == f.coin_flips
    assert 0 <= f.coin_heads <= f.coin_flips
    assert math.isclose(h.p_fail, (h.failures + h.coin_flips / 2) / 5000)
    with pytest.raises(ValueError):
        monte_carlo(pb, 0.05, 0, seed=3)


def test_monte_carlo_low_rate_tracks_entropic_term():
    # at p = 0.01 the leading term dominates: P ~ (4/3) p^2 for d=4 unified
    pb = Problem("surface", 4, "unified")
    r = monte_carlo(pb, 0.01, 200000, seed=9, engine="matching")
    assert r.p_fail < 5 * (4 / 3) * 0.01**2 + 3 * r.stderr


@given(st.floats(1e-3, 0.04), st.floats(0.05, 0.2), st.integers(2, 8))
def test_ladder_properties(lo, hi, h):
    rates = ladder(hi, lo, 2 * h, 50)
    assert rates[0] == hi and rates[-1] == lo
    assert all(b < a for a, b in zip(rates, rates[1:]))
    for a, b in zip(rates, rates[1:-1]):
        w = max(h, a * 50)
        assert math.isclose(b, a * 2 ** (-1 / math.sqrt(w)))


def test_chain_stays_in_failing_set():
    pb = Problem("surface", 4, "unified")
    chain = FailureChain(pb, seed_failure(pb))
    model = NoiseModel(DEPOLARISING, 0.05)
    rng = np.random.default_rng(4)
    for _ in range(400):
        metropolis_step(chain, model, rng)
        assert chain.f > 0
        assert chain.failure_weight(chain.state) == chain.f


def test_seed_failure_is_least_weight():
    for code, d, w in (("surface", 4, 2), ("surface", 6, 3), ("color", 8, 4)):
        e = seed_failure(Problem(code, d))
        assert np.count_nonzero(e) == w


def test_chain_rejects_success_state():
    pb = Problem("surface", 4)
    with pytest.raises(ValueError):
        FailureChain(pb, np.zeros(25, np.uint8))


def test_population_walkers_stay_failing():
    pb = Problem("surface", 4, "unified")
    pop = Population(pb, np.repeat(seed_failure(pb)[None], 40, axis=0), groups=4)
    model = NoiseModel(DEPOLARISING, 0.08)
    rng = np.random.default_rng(5)
    moved = sum(pop.step(model, rng) for _ in range(60))
    assert moved > 0
    assert (pop.f > 0).all()
    assert np.array_equal(pop.f, pop.failure_weights(pop.states))


def test_resampling_stays_inside_groups():
    pb = Problem("surface", 4, "unified")
    rng = np.random.default_rng(0)
    pool = np.repeat(seed_failure(pb)[None], 40, axis=0)
    pop = Population(pb, pool, groups=4)
    pop.states[:, 0] = np.arange(40) % 4  # tag walkers through an untouched column
    w = rng.random(40)
    w[10:20] = 0  # group 1 keeps only walkers with positive weight
    w[10] = 1.0
    tags = pop.states[:, 0].copy()
    before = [set(map(tuple, pop.states[g * 10 : (g + 1) * 10])) for g in range(4)]
    pop.resample(w, rng)
    for g in range(4):
        assert set(map(tuple, pop.states[g * 10 : (g + 1) * 10])) <= before[g]
    assert (pop.states[10:20, 0] == tags[10]).all()


def test_uniform_resampling_is_identity():
    pb = Problem("surface", 4, "unified")
    pop = Population(pb, np.repeat(seed_failure(pb)[None], 20, axis=0), groups=2)
    pop.states[:, 0] = np.arange(20) % 4
    snapshot = pop.states.copy()
    pop.resample(np.ones(20), np.random.default_rng(1))
    assert np.array_equal(pop.states, snapshot)


def test_initial_population_uses_failing_pool_only():
    pb = Problem("surface", 4, "unified")
    mc = monte_carlo(pb, 0.08, 3000, seed=2, keep_failing=True)
    assert len(mc.failing) == mc.failures + mc.coin_flips
    pool = np.concatenate([mc.failing, np.zeros((5, 25), np.uint8)])
    pop = initial_population(pb, pool, 60, 3, np.random.default_rng(0))
    assert (pop.f > 0).all()
    fallback = initial_population(pb, None, 40, 2, np.random.default_rng(0))
    assert (fallback.states == seed_failure(pb)).all()


def test_population_rejects_bad_groups():
    pb = Problem("surface", 4)
    with pytest.raises(ValueError):
        Population(pb, np.repeat(seed_failure(pb)[None], 10, axis=0), groups=3)


def test_splitting_checkpoint_resume(tmp_path, monkeypatch):
    pb = Problem("surface", 4, "restricted")
    kw = dict(samples=300, anchor=(0.03, 0.001), rel_target=1.0, walkers=100, groups=5)
    full = splitting_run(pb, 0.05, 0.02, seed=8, **kw)
    assert len(full.rungs) >= 2
    ck = tmp_path / "chain.json"
    real = est.run_rung
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 2:
            raise KeyboardInterrupt
        return real(*a, **k)

    monkeypatch.setattr(est, "run_rung", flaky)
    with pytest.raises(KeyboardInterrupt):
        splitting_run(pb, 0.05, 0.02, seed=8, checkpoint=ck, **kw)
    saved = json.loads(ck.read_text())
    assert len(saved["rungs"]) == 1
    monkeypatch.setattr(est, "run_rung", real)
    resumed = splitting_run(pb, 0.05, 0.02, seed=8, checkpoint=ck, **kw)
    assert resumed.curve == full.curve


def test_splitting_exact_at_tiny_rates():
    # deep below threshold every failing state has least weight, so a rung
    # ratio is (p'/p)^(d/2) ((1-p')/(1-p))^(n-d/2)
    pb = Problem("surface", 4, "unified")
    out = splitting_run(pb, 2e-5, 1e-5, seed=1, samples=400, anchor=(1.0, 0.0), walkers=100, groups=5)
    want = (0.5) ** 2 * ((1 - 1e-5) / (1 - 2e-5)) ** 23
    assert math.isclose(out.curve[-1][1], want, rel_tol=1e-3)


def _synthetic(p_th=0.15, nu=1.2, A=2.0, B=3.0, C=0.2, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for d in (4, 6, 8):
        for p in np.linspace(0.12, 0.18, 7):
            f = scaling_form((p, d), p_th, nu, A, B, C)
            recs.append((p, d, f + noise * rng.standard_normal(), max(noise, 1e-4)))
    return recs


def test_fit_recovers_parameters():
    fit = fit_threshold(_synthetic())
    assert math.isclose(fit.p_th, 0.15, abs_tol=1e-6)
    assert math.isclose(fit.nu, 1.2, rel_tol=1e-4)


@given(st.floats(0.13, 0.17), st.floats(0.8, 1.6))
def test_fit_round_trip(p_th, nu):
    fit = fit_threshold(_synthetic(p_th, nu, noise=1e-3, seed=1), p0=(0.15, 1.0, 1.0, 1.0, 0.2))
    assert abs(fit.p_th - p_th) < 0.005


def test_fit_failures():
    with pytest.raises(FitFailure):
        fit_threshold(_synthetic()[:10])
    no_cross = [(p, d, p / d, 1e-3) for d in (4, 6, 8) for p in np.linspace(0.1, 0.2, 6)]
    with pytest.raises(FitFailure):
        fit_threshold(no_cross)
