"""Deviation-probability verification, exact and Monte Carlo.

However the probing inputs are chosen, the chance that the empirical joint
type of (inputs, outputs) at a watched pair (a, b) strays from the channel
law by more than mu is at most 1/(4 n mu^2). Small blocklengths are checked
by brute force over every strategy; large ones by closed-loop simulation
with Wilson intervals. The module also verifies the zero-drift (martingale)
property of the score process and the variance constant p(1-p)/(n mu^2)
coming from the maximal inequality.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .channels import dmc_sample
from .errors import BoundViolated, DepthOverflow, NonpositiveMu
from .rng import RngStream
from .trees import ScoreParams, StrategyFn, ThresholdStrategy, exhaustive_max_success

_Z95 = 1.959963984540054
_MC_ELEMENTS_PER_BLOCK = 3_000_000
_MARTINGALE_TOL = 1e-12


def lemma1_bound(n: int, mu: float) -> float:
    """Ceiling 1/(4 n mu^2) on the worst-case deviation probability."""
    if n < 1:
        raise ValueError("blocklength must be >= 1")
    if not mu > 0:
        raise NonpositiveMu(f"mu must be positive, got {mu}")
    return 1.0 / (4.0 * n * mu * mu)


def wilson_interval(successes: int, trials: int, z: float = _Z95):
    """Wilson score interval; preferred over the normal approximation for
    the near-zero success probabilities these scans produce."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(
        phat * (1.0 - phat) / trials + z * z / (4.0 * trials * trials)
    )
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class DeviationReport:
    """Outcome of one deviation-probability check.

    `margin` is the pass metric: bound minus the exact value for
    exact_enumeration, bound minus the Wilson upper limit for monte_carlo.
    """

    n: int
    mu: float
    a: int
    b: int
    exact_or_estimate: float
    bound: float
    margin: float
    method: str
    ci_halfwidth: float
    trials: int

    def __post_init__(self):
        if self.method not in ("exact_enumeration", "monte_carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        expected = lemma1_bound(self.n, self.mu)
        if abs(self.bound - expected) > 1e-12:
            raise ValueError("bound field disagrees with 1/(4 n mu^2)")
        if self.method == "exact_enumeration" and self.exact_or_estimate > self.bound + 1e-12:
            raise BoundViolated(
                f"exact deviation probability {self.exact_or_estimate} "
                f"exceeds bound {self.bound}"
            )

    @property
    def passed(self) -> bool:
        return self.margin >= -1e-12


@dataclass(frozen=True)
class MartingaleReport:
    n: int
    max_abs_step_bias: float


def verify_lemma1_exhaustive(
    n: int,
    p: ScoreParams,
    x_size: int | None = None,
    workers: int = 1,
) -> DeviationReport:
    """Exact check: the max over all strategies of the deviation probability
    must sit at or below the bound. Raises BoundViolated otherwise."""
    _, value = exhaustive_max_success(n, p, x_size=x_size, workers=workers)
    bound = lemma1_bound(n, p.mu)
    if value > bound + 1e-12:
        raise BoundViolated(
            f"max deviation probability {value} exceeds {bound} "
            f"at n={n}, mu={p.mu}, (a,b)=({p.a},{p.b})"
        )
    return DeviationReport(
        n=n, mu=p.mu, a=p.a, b=p.b,
        exact_or_estimate=value, bound=bound, margin=bound - value,
        method="exact_enumeration", ci_halfwidth=0.0, trials=0,
    )


def _mc_block_sizes(trials: int, n: int) -> list[int]:
    per_block = max(1, _MC_ELEMENTS_PER_BLOCK // max(n, 1))
    sizes = []
    left = trials
    while left > 0:
        take = min(per_block, left)
        sizes.append(take)
        left -= take
    return sizes


def _threshold_block(payload) -> int:
    """Success count for one block of trials under a threshold strategy.

    Draws one uniform per channel use, trial-major, exactly like the generic
    per-step sampler, so both paths agree draw for draw.
    """
    seed, stream, block_trials, n, lo, hi, last_symbol, p_ab, nmu = payload
    u = RngStream(seed, stream).uniforms((block_trials, n))
    if last_symbol:
        hits_b = u >= lo
    else:
        hits_b = (u >= lo) & (u < hi)
    walk = np.cumsum(hits_b.astype(np.float64) - p_ab, axis=1)
    # probing stops at the first strict crossing, freezing the score there,
    # so success is exactly "the walk ever strictly exceeded the threshold"
    return int(np.count_nonzero((np.abs(walk) > nmu).any(axis=1)))


def _generic_block(h, n, p, block_trials, rng) -> int:
    nmu = p.threshold(n)
    successes = 0
    for _ in range(block_trials):
        ys: list[int] = []
        s = 0.0
        for k in range(1, n + 1):
            x = h(k, tuple(ys))
            y = dmc_sample(p.dmc, x, rng)
            if x == p.a:
                s += (1.0 if y == p.b else 0.0) - p.p_ab
            ys.append(y)
        if abs(s) > nmu:
            successes += 1
    return successes


def monte_carlo_deviation(
    h: StrategyFn,
    n: int,
    p: ScoreParams,
    trials: int,
    rng: RngStream,
    workers: int = 1,
) -> DeviationReport:
    """Closed-loop estimate of the deviation probability for one strategy.

    Trial block i consumes stream rng.stream + i; keep at least
    len(blocks) stream indices free above rng when allocating streams.
    Threshold strategies take a vectorized path (and can fan out over
    workers); arbitrary strategy callables are stepped one use at a time.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a meaningful interval")
    blocks = _mc_block_sizes(trials, n)
    if isinstance(h, ThresholdStrategy):
        cum = p.dmc._cum[p.a]
        lo = float(cum[p.b - 1]) if p.b > 0 else 0.0
        hi = float(cum[p.b])
        last = p.b == p.dmc.num_outputs - 1
        payloads = [
            (rng.seed, rng.substream(i).stream, bt, n, lo, hi, last, p.p_ab, p.threshold(n))
            for i, bt in enumerate(blocks)
        ]
        if workers > 1 and len(payloads) > 1:
            with get_context().Pool(workers) as pool:
                counts = pool.map(_threshold_block, payloads)
        else:
            counts = [_threshold_block(pl) for pl in payloads]
        successes = sum(counts)
    else:
        successes = 0
        for i, bt in enumerate(blocks):
            successes += _generic_block(h, n, p, bt, rng.substream(i))
    estimate = successes / trials
    lo_ci, hi_ci = wilson_interval(successes, trials)
    bound = lemma1_bound(n, p.mu)
    return DeviationReport(
        n=n, mu=p.mu, a=p.a, b=p.b,
        exact_or_estimate=estimate, bound=bound, margin=bound - hi_ci,
        method="monte_carlo", ci_halfwidth=(hi_ci - lo_ci) / 2.0, trials=trials,
    )


def kolmogorov_rhs(n: int, mu: float, dmc, a: int, b: int) -> float:
    """Variance-based constant p(1-p)/(n mu^2); never above 1/(4 n mu^2)."""
    bound = lemma1_bound(n, mu)  # validates n, mu
    prob = float(dmc.matrix[a, b])
    value = prob * (1.0 - prob) / (n * mu * mu)
    if value > bound + 1e-12:
        raise BoundViolated(f"p(1-p)/(n mu^2) = {value} exceeds {bound}")
    return value


def martingale_check(h: StrategyFn, n: int, p: ScoreParams) -> MartingaleReport:
    """Exact conditional drift of the score process.

    For every history y^{k-1} the expected score increment, computed by
    summing the channel row over the next output, must vanish; the report
    carries the worst absolute value over all histories and steps.
    """
    y_size = p.dmc.num_outputs
    if y_size**n > 1 << 20:
        raise DepthOverflow(f"{y_size**n} histories exceed cap {1 << 20}")
    row_weighted = p.dmc.matrix * (
        (np.arange(y_size)[None, :] == p.b).astype(np.float64) - p.p_ab
    )
    step_bias = row_weighted.sum(axis=1)  # per input symbol, nonzero only off a
    worst = 0.0
    for k in range(1, n + 1):
        for prefix in itertools.product(range(y_size), repeat=k - 1):
            x = h(k, prefix)
            bias = float(step_bias[x]) if x == p.a else 0.0
            worst = max(worst, abs(bias))
    return MartingaleReport(n=n, max_abs_step_bias=worst)
