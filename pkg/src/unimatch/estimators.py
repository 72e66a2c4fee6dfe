"""Noise sampling, direct Monte Carlo, splitting and threshold fits.

Errors are handled as integer arrays: depolarising surface-code errors code
each qubit as 0..3 for I, X, Y, Z; color-code bit flips are 0/1.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .decoder import BatchDecoder, MatchingEngine
from .lattices import ColorLayout, PauliError, SurfaceLayout

DEPOLARISING = "depolarising_surface"
BITFLIP = "bitflip_color"
WORKERS_ENV = "UNIMATCH_WORKERS"
CHUNK = 5000  # shots per independently seeded Monte Carlo chunk
WALKERS = 5000  # splitting population size
SAMPLES = 250000  # kept walker samples per rung, 100 steps per walker
GROUPS = 20  # independent sub-populations, for error bars


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    p: float

    def __post_init__(self):
        if self.kind not in (DEPOLARISING, BITFLIP):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if not 0 <= self.p < 1:
            raise ValueError(f"rate must lie in [0, 1), got {self.p}")

    def at(self, p: float) -> "NoiseModel":
        return NoiseModel(self.kind, p)

    def log_weight(self, weight, n: int):
        """log pi(E) for errors of the given weight on n qubits."""
        site = self.p / 3 if self.kind == DEPOLARISING else self.p
        weight = np.asarray(weight, dtype=float)
        return weight * math.log(site) + (n - weight) * math.log1p(-self.p)


def sample_errors(model: NoiseModel, n: int, rng: np.random.Generator, shots: int) -> np.ndarray:
    """I.i.d. errors as a ``(shots, n)`` uint8 array."""
    u = rng.random((shots, n))
    if model.kind == BITFLIP:
        return (u < model.p).astype(np.uint8)
    out = np.zeros((shots, n), dtype=np.uint8)
    hit = u < model.p
    out[hit] = 1 + rng.integers(0, 3, size=int(hit.sum()), dtype=np.uint8)
    return out


def sample_error(model: NoiseModel, layout, rng: np.random.Generator):
    """One error on ``layout``: a PauliError (surface) or a bit-flip vector."""
    e = sample_errors(model, layout.n, rng, 1)[0]
    if isinstance(layout, SurfaceLayout):
        if model.kind != DEPOLARISING:
            raise ValueError("surface-code errors use the depolarising model")
        return PauliError((e == 1) | (e == 2), (e == 2) | (e == 3))
    if isinstance(layout, ColorLayout) and model.kind != BITFLIP:
        raise ValueError("color-code errors use the bit-flip model")
    return e.astype(bool)


# --------------------------------------------------------------------------
# Experiment description


@dataclass(frozen=True)
class Problem:
    """What is decoded: code family, distance, decoder and weights.

    ``d`` is the surface distance for ``code="surface"`` and the color
    distance for ``code="color"``.
    """

    code: str
    d: int
    decoder: str = "unified"
    w_A: float = 1.0
    w_B: float = 1.0

    @property
    def noise_kind(self) -> str:
        return DEPOLARISING if self.code == "surface" else BITFLIP

    def batch(self) -> BatchDecoder:
        return _batch(self)

    def engine(self, name: str):
        bd = self.batch()
        if name == "exact":
            return bd
        if name == "matching":
            return _matching(self)
        raise ValueError(f"unknown engine {name!r}")


_BATCH, _MATCH = {}, {}


def _batch(pb: Problem) -> BatchDecoder:
    if pb not in _BATCH:
        _BATCH[pb] = BatchDecoder(pb.code, pb.d, pb.decoder, _num(pb.w_A), _num(pb.w_B))
    return _BATCH[pb]


def _matching(pb: Problem) -> MatchingEngine:
    if pb not in _MATCH:
        _MATCH[pb] = MatchingEngine(_batch(pb))
    return _MATCH[pb]


def _num(w):
    from fractions import Fraction

    return Fraction(str(w)) if isinstance(w, float) else Fraction(w)


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MCResult:
    p: float
    trials: int
    failures: int
    coin_flips: int
    coin_heads: int  # fair-coin mode: coin flips resolved as failures
    p_fail: float
    stderr: float
    failing: np.ndarray | None = field(default=None, repr=False)  # failing and coin-flip errors
    failing_status: np.ndarray | None = field(default=None, repr=False)


def _mc_chunk(args):
    pb, p, shots, seed, engine, coin, keep = args
    rng = np.random.default_rng(seed)
    eng = pb.engine(engine)
    errors = sample_errors(NoiseModel(pb.noise_kind, p), pb.batch().n, rng, shots)
    status = eng.assess(errors)
    fails = int((status == 1).sum())
    coins = int((status == 2).sum())
    heads = int((rng.random(coins) < 0.5).sum()) if coin == "fair" else 0
    bad = status > 0
    kept = (errors[bad], status[bad]) if keep else None
    return fails, coins, heads, kept


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def monte_carlo(pb: Problem, p: float, trials: int, seed: int, engine: str = "exact", coin: str = "half",
                keep_failing: bool = False) -> MCResult:
    """Direct sampling estimate of the logical failure rate.

    Coin-flip outcomes count one half (``coin="half"``) or are resolved by
    a seeded fair coin (``coin="fair"``).  Trials are split into fixed
    chunks with seeds spawned from ``seed``, so results do not depend on the
    worker count.  ``keep_failing`` also returns the failing and coin-flip
    errors with their status.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if coin not in ("half", "fair"):
        raise ValueError(f"unknown coin mode {coin!r}")
    sizes = [CHUNK] * (trials // CHUNK) + ([trials % CHUNK] if trials % CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(pb, p, s, ss, engine, coin, keep_failing) for s, ss in zip(sizes, seeds)]
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(j) for j in jobs]
    fails = sum(x[0] for x in parts)
    coins = sum(x[1] for x in parts)
    heads = sum(x[2] for x in parts)
    if coin == "half":
        total = fails + 0.5 * coins
        sq = fails + 0.25 * coins
    else:
        total = sq = fails + heads
    mean = total / trials
    var = max(sq / trials - mean**2, 0.0)
    res = MCResult(p, trials, fails, coins, heads, mean, math.sqrt(var / trials))
    if keep_failing:
        res.failing = np.concatenate([x[3][0] for x in parts])
        res.failing_status = np.concatenate([x[3][1] for x in parts])
    return res


# --------------------------------------------------------------------------
# Failure-conditioned Metropolis chain


class FailureChain:
    """Metropolis walk on errors weighted by pi_p(E) * f(E).

    ``f`` is 1 for a failure, 1/2 for a coin-flip and 0 for a success, so
    the chain samples the failure-conditioned measure with the same
    one-half accounting as the entropic counts.  Proposals pick a uniform
    site and replace its Pauli by a uniform different one (a toggle for
    bit flips); they are symmetric.
    """

    def __init__(self, pb: Problem, state: np.ndarray):
        self.pb = pb
        self.bd = pb.batch()
        self.state = np.array(state, dtype=np.uint8)
        self.f = self.failure_weight(self.state)
        if self.f == 0:
            raise ValueError("initial state does not fail")
        self.levels = 4 if pb.code == "surface" else 2

    def failure_weight(self, e: np.ndarray) -> float:
        s = int(self.bd.assess(e[None])[0])
        return (0.0, 1.0, 0.5)[s]

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.state))

    def step(self, model: NoiseModel, rng: np.random.Generator) -> bool:
        return metropolis_step(self, model, rng)


def metropolis_step(chain: FailureChain, model: NoiseModel, rng: np.random.Generator) -> bool:
    """One proposal; returns whether it was accepted."""
    n = chain.state.shape[0]
    q = int(rng.integers(n))
    old = int(chain.state[q])
    new = (old + 1 + int(rng.integers(chain.levels - 1))) % chain.levels
    site = model.p / 3 if model.kind == DEPOLARISING else model.p
    if old == 0:
        ratio = site / (1 - model.p)
    elif new == 0:
        ratio = (1 - model.p) / site
    else:
        ratio = 1.0
    u = rng.random()
    # f(E') / f(E) is at most 2, so larger draws are rejected without decoding
    if u >= 2 * ratio:
        return False
    chain.state[q] = new
    f_new = chain.failure_weight(chain.state)
    if f_new > 0 and u < ratio * f_new / chain.f:
        chain.f = f_new
        return True
    chain.state[q] = old
    return False


def seed_failure(pb: Problem) -> np.ndarray:
    """A least-weight failing error on the bottom major row."""
    bd = pb.batch()
    e = np.zeros(bd.n, dtype=np.uint8)
    if pb.code == "surface":
        row = [q.id for q in bd.surface.qubits if q.coord[1] == 0]
        e[row[: pb.d // 2]] = 3
    else:
        layout = bd.color
        for x in range(0, pb.d, 2):
            e[layout.index[(2 * x, 0)]] = 1
    if bd.assess(e[None])[0] == 0:
        raise RuntimeError("seed error is corrected; no failing start state")
    return e


# --------------------------------------------------------------------------
# Splitting method


def ladder(p_start: float, p_end: float, d: int, n: int) -> list[float]:
    """Rates p_{j+1} = p_j 2^{+-1/sqrt(w_j)}, w_j = max(d/2, p_j n), clipped at p_end."""
    if p_start <= 0 or p_end <= 0:
        raise ValueError("rates must be positive")
    sign = -1.0 if p_end < p_start else 1.0
    rates = [p_start]
    p = p_start
    while (p_end - p) * sign > 1e-15:
        w = max(d / 2, p * n)
        p = p * 2.0 ** (sign / math.sqrt(w))
        if (p - p_end) * sign >= 0:
            p = p_end
        rates.append(p)
    return rates


@dataclass
class Rung:
    p: float
    p_next: float
    steps: int  # walker steps, summed over the population
    acceptance: float
    ratio: float  # estimate of P(p_next) / P(p)
    log_stderr: float
    group_log_ratios: list = field(default_factory=list)


@dataclass
class SplittingChain:
    problem: dict
    rates: list
    rungs: list = field(default_factory=list)
    anchor: dict = field(default_factory=dict)
    seed: int = 0
    burn_in: float = 0.5
    walkers: int = WALKERS
    groups: int = GROUPS
    curve: list = field(default_factory=list)  # (p, P_hat, log stderr)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class Population:
    """Walkers of the failure-conditioned chain in independent equal groups.

    Every walker moves by the single-site rule of ``metropolis_step``;
    resampling only mixes walkers of the same group, so groups are
    independent replicas of the whole ladder.
    """

    def __init__(self, pb: Problem, states: np.ndarray, groups: int):
        self.pb = pb
        self.bd = pb.batch()
        self.states = np.array(states, dtype=np.uint8)
        if groups < 2 or len(self.states) % groups:
            raise ValueError("walkers must split into at least two equal groups")
        self.groups = groups
        self.f = self.failure_weights(self.states)
        if not (self.f > 0).all():
            raise ValueError("initial states must fail")
        self.levels = 4 if pb.code == "surface" else 2

    def failure_weights(self, e: np.ndarray) -> np.ndarray:
        return np.array([0.0, 1.0, 0.5])[self.bd.assess(e)]

    def weights(self) -> np.ndarray:
        return np.count_nonzero(self.states, axis=1)

    def step(self, model: NoiseModel, rng: np.random.Generator) -> int:
        """One proposal per walker; returns the number accepted."""
        k, n = self.states.shape
        q = rng.integers(n, size=k)
        shift = 1 + rng.integers(self.levels - 1, size=k)
        u = rng.random(k)
        rows = np.arange(k)
        old = self.states[rows, q]
        new = ((old + shift) % self.levels).astype(np.uint8)
        site = model.p / 3 if model.kind == DEPOLARISING else model.p
        ratio = np.where(old == 0, site / (1 - model.p), np.where(new == 0, (1 - model.p) / site, 1.0))
        cand = np.flatnonzero(u < 2 * ratio)
        if not cand.size:
            return 0
        trial = self.states[cand]
        trial[np.arange(cand.size), q[cand]] = new[cand]
        f_new = self.failure_weights(trial)
        ok = (f_new > 0) & (u[cand] < ratio[cand] * f_new / self.f[cand])
        acc = cand[ok]
        self.states[acc, q[acc]] = new[acc]
        self.f[acc] = f_new[ok]
        return int(acc.size)

    def resample(self, w: np.ndarray, rng: np.random.Generator) -> None:
        """Systematic resampling proportional to ``w`` within each group."""
        size = len(w) // self.groups
        idx = np.empty(len(w), dtype=np.int64)
        for g in range(self.groups):
            lo = g * size
            c = np.cumsum(w[lo : lo + size])
            pos = (rng.random() + np.arange(size)) / size * c[-1]
            idx[lo : lo + size] = lo + np.minimum(np.searchsorted(c, pos, side="right"), size - 1)
        self.states = self.states[idx]
        self.f = self.f[idx]


def initial_population(pb: Problem, pool: np.ndarray | None, walkers: int, groups: int,
                       rng: np.random.Generator) -> Population:
    """Walkers drawn from ``pool`` with weight f, else copies of ``seed_failure``."""
    f = np.array([0.0, 1.0, 0.5])[pb.batch().assess(pool)] if pool is not None and len(pool) else np.zeros(0)
    if not f.any():
        return Population(pb, np.repeat(seed_failure(pb)[None], walkers, axis=0), groups)
    pick = rng.choice(len(pool), size=walkers, p=f / f.sum())
    return Population(pb, pool[pick], groups)


def run_rung(pop: Population, model: NoiseModel, p_next: float, rng: np.random.Generator,
             samples: int, burn_in: float = 0.5, rel_target: float = 0.05, max_samples: int | None = None) -> Rung:
    """Sample at rate ``model.p``, average pi_{next}(E) / pi(E), then retarget.

    ``samples`` counts kept walker samples; every walker takes the same
    number of steps and the leading ``burn_in`` fraction is discarded.  The
    error is the spread of the group means.  Steps double until the relative
    error reaches ``rel_target`` or ``max_samples`` kept samples.  Finally
    walkers are resampled by their weight ratio so they follow pi_{next}.
    """
    k, n = pop.states.shape
    nxt = model.at(p_next)
    per_walker = lambda total: max(2, math.ceil(total / (k * (1 - burn_in))))
    steps = per_walker(samples)
    limit = max(steps, per_walker(max_samples or 8 * samples))
    hist = []
    accepted = 0
    while True:
        while len(hist) < steps:
            accepted += pop.step(model, rng)
            hist.append(pop.weights())
        kept = np.array(hist[int(burn_in * steps) :])
        vals = np.exp(nxt.log_weight(kept, n) - model.log_weight(kept, n))
        group = vals.reshape(len(kept), pop.groups, -1).mean(axis=(0, 2))
        ratio = float(group.mean())
        se = float(group.std(ddof=1) / math.sqrt(pop.groups) / ratio)
        if se <= rel_target or steps >= limit:
            break
        steps *= 2
    last = np.exp(nxt.log_weight(hist[-1], n) - model.log_weight(hist[-1], n))
    pop.resample(last, rng)
    return Rung(model.p, p_next, steps * k, accepted / (steps * k), ratio, se, np.log(group).tolist())


def splitting_run(pb: Problem, p_start: float, p_end: float, seed: int, samples: int = SAMPLES,
                  anchor_trials: int = 100000, anchor: tuple | None = None,
                  checkpoint: str | os.PathLike | None = None, rel_target: float = 0.05,
                  max_samples: int | None = None, walkers: int = WALKERS, groups: int = GROUPS,
                  anchor_engine: str = "exact") -> SplittingChain:
    """Failure-rate curve from a Monte Carlo anchor and chained ratios.

    ``P(p_j) = P_MC(p_start) * prod_k R_k``.  The walkers start from the
    failing anchor samples (re-scored by the exact decoder when the anchor
    uses another engine), or from ``seed_failure`` when ``anchor`` is given.  The log standard error at each rate is the spread over groups
    of their cumulative log ratios, plus the anchor error in quadrature.
    With ``checkpoint`` the run is saved after every rung and a matching
    checkpoint is resumed.
    """
    bd = pb.batch()
    rates = ladder(p_start, p_end, pb.d, bd.n)
    # json round trip so a saved checkpoint compares equal to a fresh one
    out = SplittingChain(json.loads(json.dumps(asdict(pb), default=str)), rates, seed=seed,
                         walkers=walkers, groups=groups)
    ss = np.random.SeedSequence(seed)
    mc_seed, chain_seed = ss.spawn(2)
    rung_seeds = chain_seed.spawn(len(rates))
    states = None
    path = Path(checkpoint) if checkpoint else None
    if path and path.exists():
        saved = json.loads(path.read_text())
        same = ("problem", "rates", "seed", "walkers", "groups")
        if all(saved.get(k) == getattr(out, k) for k in same):
            out.anchor = saved["anchor"]
            out.rungs = [Rung(**r) for r in saved["rungs"]]
            states = np.array(saved["states"], dtype=np.uint8)
    pool = None
    if not out.anchor:
        if anchor is None:
            mc = monte_carlo(pb, p_start, anchor_trials, int(mc_seed.generate_state(1)[0]), engine=anchor_engine,
                             keep_failing=True)
            out.anchor = {"p": p_start, "p_fail": mc.p_fail, "stderr": mc.stderr, "trials": mc.trials,
                          "engine": anchor_engine}
            pool = mc.failing
        else:
            out.anchor = {"p": p_start, "p_fail": anchor[0], "stderr": anchor[1], "trials": 0}
    if states is not None:
        pop = Population(pb, states, groups)
    else:
        pop = initial_population(pb, pool, walkers, groups, np.random.default_rng(rung_seeds[-1]))
    model = NoiseModel(pb.noise_kind, p_start)
    for j in range(len(out.rungs), len(rates) - 1):
        rng = np.random.default_rng(rung_seeds[j])
        out.rungs.append(run_rung(pop, model.at(rates[j]), rates[j + 1], rng, samples,
                                  rel_target=rel_target, max_samples=max_samples))
        if path:
            data = json.loads(out.to_json())
            data["states"] = pop.states.tolist()
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(data, sort_keys=True))
            tmp.replace(path)
    p0 = out.anchor["p_fail"]
    log_p = math.log(p0) if p0 > 0 else -math.inf
    var0 = (out.anchor["stderr"] / p0) ** 2 if p0 > 0 else math.inf
    out.curve = [(rates[0], p0, math.sqrt(var0))]
    cum = np.zeros(groups)
    for r in out.rungs:
        log_p += math.log(r.ratio)
        cum += np.array(r.group_log_ratios)
        var = var0 + float(cum.var(ddof=1)) / groups
        out.curve.append((r.p_next, math.exp(log_p), math.sqrt(var)))
    return out


# --------------------------------------------------------------------------
# Threshold fitting


class FitFailure(RuntimeError):
    pass


@dataclass
class ThresholdFit:
    p_th: float
    nu: float
    A: float
    B: float
    C: float
    errors: dict
    covariance: list
    data: list


def scaling_form(pd, p_th, nu, A, B, C):
    p, d = pd
    x = (p - p_th) * d ** (1.0 / nu)
    return A * x**2 + B * x + C


def fit_threshold(records, p0: tuple | None = None) -> ThresholdFit:
    """Least-squares fit of f = A x^2 + B x + C, x = (p - p_th) d^(1/nu).

    ``records`` are ``(p, d, P_fail, stderr)`` tuples covering at least
    three distances and five rates; the curves must cross inside the range.
    """
    data = np.array(records, dtype=float)
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError("records must be (p, d, P_fail, stderr) tuples")
    ds = np.unique(data[:, 1])
    ps = np.unique(data[:, 0])
    if len(ds) < 3 or len(ps) < 5:
        raise FitFailure("need at least 3 distances and 5 rates")
    lo, hi = ps.min(), ps.max()
    small, large = ds.min(), ds.max()

    def at(p, d):
        m = (data[:, 0] == p) & (data[:, 1] == d)
        return data[m, 2].mean() if m.any() else np.nan

    if not (at(lo, large) < at(lo, small) and at(hi, large) > at(hi, small)):
        raise FitFailure("failure curves do not cross inside the rate range")
    sigma = np.where(data[:, 3] > 0, data[:, 3], data[:, 3][data[:, 3] > 0].min(initial=1e-6))
    if p0 is None:
        p0 = ((lo + hi) / 2, 1.0, 0.0, 1.0, float(np.median(data[:, 2])))
    try:
        popt, pcov = curve_fit(scaling_form, (data[:, 0], data[:, 1]), data[:, 2], p0=p0,
                               sigma=sigma, absolute_sigma=True, maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(str(exc)) from exc
    if not lo <= popt[0] <= hi:
        raise FitFailure(f"fitted threshold {popt[0]:.4f} outside the data range")
    err = np.sqrt(np.diag(pcov))
    names = ("p_th", "nu", "A", "B", "C")
    return ThresholdFit(*map(float, popt), dict(zip(names, map(float, err))), pcov.tolist(), data.tolist())
