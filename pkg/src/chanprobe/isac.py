"""Joint communication and state sensing over a state-dependent channel.

A code sends one of floor(2^{nR}) messages through n uses of a channel
P(y|x,s) driven by an i.i.d. state sequence, choosing each input from the
message and the fed-back outputs, and afterwards estimates the states from
(inputs, outputs). This module provides the per-symbol Bayes-optimal state
estimator, the exact rate and distortion functionals of an input law, a
frontier sweep over input laws, closed-loop simulation, and exhaustive
small-blocklength evaluation of the good-message-set and restricted-measure
constructions (messages whose joint failure probability stays manageable,
and the conditional mass of the outcome set where decoding succeeds, the
distortion target is met, and the empirical triple type hugs the law).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .channels import Pmf, Sdmc, _frozen, triple_type
from .errors import (
    AlphabetTooLarge,
    ChannelParse,
    ChanprobeError,
    EnumerationTooLarge,
    LengthMismatch,
    SymbolOutOfRange,
    ZeroLikelihood,
)
from .deviation import lemma1_bound, wilson_interval
from .rng import RngStream

_ENUM_CAP = 1 << 20
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class DistortionFn:
    """Nonnegative, finite distortion table d[estimate, state]."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.size == 0:
            raise ValueError("distortion table must be 2-d and nonempty")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("distortion entries must be nonnegative and finite")
        object.__setattr__(self, "table", _frozen(t))

    @property
    def num_estimates(self) -> int:
        return int(self.table.shape[0])

    @property
    def num_states(self) -> int:
        return int(self.table.shape[1])

    def __call__(self, s_hat: int, s: int) -> float:
        return float(self.table[s_hat, s])

    @classmethod
    def hamming(cls, size: int) -> "DistortionFn":
        return cls(1.0 - np.eye(size))


def posterior_state(sdmc: Sdmc, state_pmf: Pmf, x: int, y: int) -> Pmf:
    """Bayes posterior over the state after seeing (input, output)."""
    if state_pmf.size != sdmc.num_states:
        raise LengthMismatch("state pmf size does not match channel")
    if not 0 <= y < sdmc.num_outputs:
        raise SymbolOutOfRange(f"output {y} not in alphabet of size {sdmc.num_outputs}")
    likelihood = sdmc.tensor[x, :, y] if 0 <= x < sdmc.num_inputs else None
    if likelihood is None:
        raise SymbolOutOfRange(f"input {x} not in alphabet of size {sdmc.num_inputs}")
    joint = state_pmf.weights * likelihood
    total = float(joint.sum())
    if total <= 0.0:
        raise ZeroLikelihood(f"output {y} is impossible under input {x}")
    return Pmf(joint / total)


def optimal_estimate(
    sdmc: Sdmc, state_pmf: Pmf, d: DistortionFn, x: int, y: int
) -> int:
    """Estimate minimizing the posterior expected distortion (ties: smallest)."""
    post = posterior_state(sdmc, state_pmf, x, y)
    costs = d.table @ post.weights
    return int(np.argmin(costs))


def estimator_table(sdmc: Sdmc, state_pmf: Pmf, d: DistortionFn) -> np.ndarray:
    """Optimal estimate per (input, output); -1 marks unreachable pairs."""
    table = np.full((sdmc.num_inputs, sdmc.num_outputs), -1, dtype=np.int64)
    for x in range(sdmc.num_inputs):
        for y in range(sdmc.num_outputs):
            try:
                table[x, y] = optimal_estimate(sdmc, state_pmf, d, x, y)
            except ZeroLikelihood:
                pass
    return table


def expected_distortion(
    input_pmf: Pmf,
    sdmc: Sdmc,
    state_pmf: Pmf,
    d: DistortionFn,
    estimator: np.ndarray | None = None,
) -> float:
    """Exact one-shot expected distortion of the per-symbol estimator under
    the product law input x state x channel. Zero-probability (input,
    output) pairs are skipped; `estimator` overrides the optimal table (for
    comparing against other deterministic maps)."""
    if input_pmf.size != sdmc.num_inputs:
        raise LengthMismatch("input pmf size does not match channel")
    if estimator is None:
        estimator = estimator_table(sdmc, state_pmf, d)
    total = 0.0
    for x in range(sdmc.num_inputs):
        px = input_pmf[x]
        if px == 0.0:
            continue
        for y in range(sdmc.num_outputs):
            mass = state_pmf.weights * sdmc.tensor[x, :, y]
            if float(mass.sum()) <= 0.0:
                continue
            s_hat = int(estimator[x, y])
            total += px * float(mass @ d.table[s_hat])
    return total


def _mi_bits(px: np.ndarray, w: np.ndarray) -> float:
    """I(X;Y) in bits for input law px and conditional matrix w, with the
    usual convention that zero-probability terms contribute nothing."""
    joint = px[:, None] * w
    py = joint.sum(axis=0)
    total = 0.0
    for x in range(w.shape[0]):
        for y in range(w.shape[1]):
            j = joint[x, y]
            if j > 0.0:
                total += j * math.log(w[x, y] / py[y]) / _LOG2
    return total


def mutual_information(input_pmf: Pmf, sdmc: Sdmc, state_pmf: Pmf) -> float:
    """I(X;Y) in bits of the joint input x state x channel law with the
    state averaged out."""
    if input_pmf.size != sdmc.num_inputs:
        raise LengthMismatch("input pmf size does not match channel")
    w = sdmc.marginal(state_pmf).matrix
    return _mi_bits(input_pmf.weights, w)


def simplex_grid(x_size: int, resolution: int) -> np.ndarray:
    """All pmfs with weights k/(resolution-1); only for alphabets up to 4."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if x_size > 4:
        raise AlphabetTooLarge("full simplex grid is limited to alphabets of size <= 4")
    total = resolution - 1

    def compositions(left: int, parts: int):
        if parts == 1:
            yield (left,)
            return
        for head in range(left + 1):
            for tail in compositions(left - head, parts - 1):
                yield (head, *tail)

    grid = np.array(list(compositions(total, x_size)), dtype=np.float64)
    return grid / total


@dataclass(frozen=True)
class FrontierPoint:
    """One input law with its exact rate (bits) and expected distortion."""

    input_pmf: Pmf
    rate: float
    distortion: float

    def __post_init__(self):
        if self.rate < -1e-12:
            raise ValueError("rate must be nonnegative")


def _ascent_refine(w: np.ndarray, px: np.ndarray, steps: int = 200) -> np.ndarray:
    """Coordinate-ascent polish of an input law toward higher I(X;Y)."""
    best = px.copy()
    best_val = _mi_bits(best, w)
    step = 0.25
    for _ in range(steps):
        improved = False
        for i in range(best.size):
            for j in range(best.size):
                if i == j:
                    continue
                move = min(step, best[j])
                if move <= 0.0:
                    continue
                cand = best.copy()
                cand[i] += move
                cand[j] -= move
                val = _mi_bits(cand, w)
                if val > best_val + 1e-15:
                    best, best_val, improved = cand, val, True
        if not improved:
            step /= 2.0
            if step < 1e-9:
                break
    return best


def frontier_sweep(
    sdmc: Sdmc, state_pmf: Pmf, d: DistortionFn, resolution: int
) -> list[FrontierPoint]:
    """(rate, distortion) pairs over a simplex grid of input laws.

    Output is sorted by distortion, then rate. For input alphabets above 4
    the full grid is infeasible; a coarse grid seeds a coordinate-ascent
    refinement instead (heuristic, the grid path is exact).
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    w = sdmc.marginal(state_pmf).matrix
    x_size = sdmc.num_inputs
    est = estimator_table(sdmc, state_pmf, d)
    # distortion is linear in the input law: precompute the per-input cost
    cost = np.zeros(x_size)
    for x in range(x_size):
        acc = 0.0
        for y in range(sdmc.num_outputs):
            mass = state_pmf.weights * sdmc.tensor[x, :, y]
            if float(mass.sum()) <= 0.0:
                continue
            acc += float(mass @ d.table[int(est[x, y])])
        cost[x] = acc
    if x_size <= 4:
        grid = simplex_grid(x_size, resolution)
    else:
        coarse = _coarse_grid(x_size)
        refined = [_ascent_refine(w, row) for row in coarse]
        grid = np.unique(np.round(np.vstack([coarse, *refined]), 12), axis=0)
        grid = grid / grid.sum(axis=1, keepdims=True)
    points = []
    for row in grid:
        pmf = Pmf(row)
        rate = max(0.0, _mi_bits(row, w))
        dist = float(row @ cost)
        points.append(FrontierPoint(pmf, rate, dist))
    points.sort(key=lambda pt: (pt.distortion, pt.rate, tuple(pt.input_pmf.weights)))
    return points


def _coarse_grid(x_size: int) -> np.ndarray:
    corners = np.eye(x_size)
    uniform = np.full((1, x_size), 1.0 / x_size)
    mixes = 0.5 * (corners[:, None, :] + corners[None, :, :]).reshape(-1, x_size)
    return np.unique(np.vstack([corners, uniform, mixes]), axis=0)


# ---------------------------------------------------------------------------
# codes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsacCode:
    """Encoders (message, fed-back prefix) -> input, a decoder over full
    output blocks, and an optional block state estimator. When `estimator`
    is None the per-symbol Bayes-optimal estimator for the channel at hand
    is attached at evaluation time."""

    n: int
    rate: float
    num_messages: int
    encoder: Callable[[int, tuple], int]
    decoder: Callable[[tuple], int]
    estimator: Callable[[tuple, tuple], tuple] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("blocklength must be >= 1")
        if self.num_messages < 1:
            raise ValueError("message set must be nonempty")


def message_count(n: int, rate: float) -> int:
    """floor(2^{nR}), the integer size of the message set."""
    return max(1, int(math.floor(2.0 ** (n * rate))))


@dataclass(frozen=True)
class _ConstantEncoder:
    symbol: int

    def __call__(self, m: int, prefix: tuple) -> int:
        return self.symbol


@dataclass(frozen=True)
class _ConstantDecoder:
    value: int

    def __call__(self, ys: tuple) -> int:
        return self.value


@dataclass(frozen=True)
class _RepetitionEncoder:
    x_size: int

    def __call__(self, m: int, prefix: tuple) -> int:
        return m % self.x_size


@dataclass(frozen=True)
class _MajorityDecoder:
    num_messages: int

    def __call__(self, ys: tuple) -> int:
        counts: dict[int, int] = {}
        for y in ys:
            counts[y] = counts.get(y, 0) + 1
        best = min(sorted(counts), key=lambda y: -counts[y])
        return best if best < self.num_messages else 0


@dataclass(frozen=True)
class _DigitsEncoder:
    n: int
    x_size: int

    def __call__(self, m: int, prefix: tuple) -> int:
        i = len(prefix)  # 0-based position
        return (m // self.x_size ** (self.n - 1 - i)) % self.x_size


@dataclass(frozen=True)
class _BaseDecoder:
    y_size: int
    num_messages: int

    def __call__(self, ys: tuple) -> int:
        value = 0
        for y in ys:
            value = value * self.y_size + y
        return value % self.num_messages


@dataclass(frozen=True)
class _CodewordEncoder:
    codewords: tuple

    def __call__(self, m: int, prefix: tuple) -> int:
        return self.codewords[m][len(prefix)]


@dataclass(frozen=True)
class _NearestDecoder:
    codewords: tuple

    def __call__(self, ys: tuple) -> int:
        best_m, best_dist = 0, len(ys) + 1
        for m, cw in enumerate(self.codewords):
            dist = sum(1 for c, y in zip(cw, ys) if c != y)
            if dist < best_dist:
                best_m, best_dist = m, dist
        return best_m


@dataclass(frozen=True)
class _TableEncoder:
    entries: dict

    def __call__(self, m: int, prefix: tuple) -> int:
        return self.entries[(m, tuple(prefix))]


@dataclass(frozen=True)
class _TableDecoder:
    entries: dict

    def __call__(self, ys: tuple) -> int:
        return self.entries[tuple(ys)]


def constant_code(n: int, rate: float, symbol: int = 0) -> IsacCode:
    """Fixed input, fixed decode; useful as the known-bad reference."""
    m = message_count(n, rate)
    return IsacCode(n, rate, m, _ConstantEncoder(symbol), _ConstantDecoder(0))


def repetition_code(n: int, rate: float, x_size: int) -> IsacCode:
    """Message symbol repeated every use; majority decode (ties: smallest)."""
    m = message_count(n, rate)
    return IsacCode(n, rate, m, _RepetitionEncoder(x_size), _MajorityDecoder(m))


def identity_decoder_code(n: int, rate: float, x_size: int, y_size: int) -> IsacCode:
    """Message digits written straight to the channel; the decoder reads the
    output block back as a base-|Y| integer. Perfect on a noiseless channel
    with matching alphabets at rate log2 |X|."""
    m = message_count(n, rate)
    return IsacCode(n, rate, m, _DigitsEncoder(n, x_size), _BaseDecoder(y_size, m))


def _parse_digits(token: str) -> tuple[int, ...]:
    if not token.isdigit():
        raise ChannelParse(f"expected a digit string, got {token!r}")
    return tuple(int(c) for c in token)


def parse_code(text: str) -> IsacCode:
    """Code file: 'code n R' then either 'family <name>' or exhaustive
    'codewords'/'table' sections with 'cw', 'enc', and 'dec' lines."""
    lines = [
        line.split("#", 1)[0].split()
        for line in text.splitlines()
        if line.split("#", 1)[0].strip()
    ]
    if not lines or lines[0][:1] != ["code"] or len(lines[0]) != 3:
        raise ChannelParse("code file must start with 'code n R'")
    try:
        n = int(lines[0][1])
        rate = float(lines[0][2])
    except ValueError:
        raise ChannelParse("bad blocklength or rate in code header") from None
    m = message_count(n, rate)
    body = lines[1:]
    if not body:
        raise ChannelParse("code file declares no encoder")
    head = body[0]
    if head[0] == "family":
        if len(head) < 2:
            raise ChannelParse("'family' needs a name")
        name = head[1]
        extra = [int(t) for t in head[2:]]
        if name == "constant":
            return constant_code(n, rate, *(extra or [0]))
        if name == "repetition":
            if len(extra) != 1:
                raise ChannelParse("'family repetition' needs the input alphabet size")
            return repetition_code(n, rate, extra[0])
        if name == "identity-decoder":
            if len(extra) != 2:
                raise ChannelParse("'family identity-decoder' needs |X| and |Y|")
            return identity_decoder_code(n, rate, *extra)
        raise ChannelParse(f"unknown code family {name!r}")
    if head[0] not in ("codewords", "table"):
        raise ChannelParse(f"expected 'family', 'codewords' or 'table', got {head[0]!r}")
    codewords: dict[int, tuple] = {}
    enc_entries: dict = {}
    dec_entries: dict = {}
    nearest = False
    for line in body[1:]:
        if line[0] == "cw" and len(line) == 3:
            codewords[int(line[1])] = _parse_digits(line[2])
        elif line[0] == "enc" and len(line) == 4:
            prefix = () if line[2] == "-" else _parse_digits(line[2])
            enc_entries[(int(line[1]), prefix)] = int(line[3])
        elif line[0] == "dec" and len(line) == 2 and line[1] == "nearest":
            nearest = True
        elif line[0] == "dec" and len(line) == 3:
            dec_entries[_parse_digits(line[1])] = int(line[2])
        else:
            raise ChannelParse(f"unrecognized code line: {' '.join(line)}")
    if codewords:
        if sorted(codewords) != list(range(m)):
            raise ChannelParse(f"need one codeword per message 0..{m - 1}")
        for cw in codewords.values():
            if len(cw) != n:
                raise ChannelParse("codeword length must equal the blocklength")
        cw_tuple = tuple(codewords[i] for i in range(m))
        encoder = _CodewordEncoder(cw_tuple)
        if nearest:
            decoder = _NearestDecoder(cw_tuple)
        elif dec_entries:
            decoder = _TableDecoder(dec_entries)
        else:
            raise ChannelParse("codeword section needs 'dec nearest' or dec lines")
        return IsacCode(n, rate, m, encoder, decoder)
    if not enc_entries:
        raise ChannelParse("table section has no enc lines")
    if not dec_entries:
        raise ChannelParse("table section needs dec lines")
    y_size = max(max(key) for key in dec_entries) + 1
    if sorted(dec_entries) != sorted(itertools.product(range(y_size), repeat=n)):
        raise ChannelParse("dec lines must cover every output block exactly once")
    # encoders must be total on messages x feedback prefixes
    missing = sum(
        1
        for msg in range(m)
        for k in range(n)
        for prefix in itertools.product(range(y_size), repeat=k)
        if (msg, prefix) not in enc_entries
    )
    if missing:
        raise ChannelParse(f"encoder table is missing {missing} entries")
    return IsacCode(n, rate, m, _TableEncoder(enc_entries), _TableDecoder(dec_entries))


def load_code(path) -> IsacCode:
    return parse_code(Path(path).read_text())


def load_distortion(path) -> DistortionFn:
    return parse_distortion(Path(path).read_text())


def parse_distortion(text: str) -> DistortionFn:
    """Distortion file: 'dist |S_hat| |S|' then the matrix rows."""
    lines = [
        line.split("#", 1)[0].split()
        for line in text.splitlines()
        if line.split("#", 1)[0].strip()
    ]
    if not lines or lines[0][:1] != ["dist"] or len(lines[0]) != 3:
        raise ChannelParse("distortion file must start with 'dist |S_hat| |S|'")
    try:
        rows, cols = int(lines[0][1]), int(lines[0][2])
        values = [[float(t) for t in line] for line in lines[1:]]
    except ValueError:
        raise ChannelParse("non-numeric distortion entry") from None
    if len(values) != rows or any(len(r) != cols for r in values):
        raise ChannelParse(f"expected a {rows}x{cols} distortion matrix")
    return DistortionFn(np.array(values))


# ---------------------------------------------------------------------------
# simulation and the exhaustive small-n constructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimStats:
    """Monte Carlo decoding-error and excess-distortion estimates."""

    trials: int
    p_error: float
    p_error_ci: tuple[float, float]
    p_excess: float
    p_excess_ci: tuple[float, float]

    def __post_init__(self):
        for v in (self.p_error, self.p_excess):
            if not 0.0 <= v <= 1.0:
                raise ValueError("estimates must lie in [0, 1]")


def _closed_loop_inputs(code: IsacCode, m: int, ys: Sequence[int]) -> tuple:
    xs = []
    for i in range(len(ys)):
        xs.append(int(code.encoder(m, tuple(ys[:i]))))
    return tuple(xs)


def _resolve_estimator(code, sdmc, state_pmf, d):
    if code.estimator is not None:
        return code.estimator
    table = estimator_table(sdmc, state_pmf, d)

    def estimate(xs: tuple, ys: tuple) -> tuple:
        out = []
        for x, y in zip(xs, ys):
            s_hat = int(table[x, y])
            if s_hat < 0:
                raise ZeroLikelihood(f"pair (x={x}, y={y}) has no posterior")
            out.append(s_hat)
        return tuple(out)

    return estimate


def _block_distortion(d: DistortionFn, s_hat: Sequence[int], ss: Sequence[int]) -> float:
    return sum(d(h, s) for h, s in zip(s_hat, ss)) / len(ss)


def simulate_code(
    code: IsacCode,
    sdmc: Sdmc,
    state_pmf: Pmf,
    d: DistortionFn,
    distortion_cap: float,
    trials: int,
    rng: RngStream,
) -> SimStats:
    """Closed-loop trials: uniform message, i.i.d. states, feedback inputs.

    Counts decoding errors and excess-distortion events (block distortion
    strictly above the cap) with Wilson intervals.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    estimator = _resolve_estimator(code, sdmc, state_pmf, d)
    state_cum = state_pmf.cumulative()
    chan_cum = sdmc._cum
    n = code.n
    errors = 0
    excesses = 0
    for _ in range(trials):
        u = rng.uniform()
        m = min(int(u * code.num_messages), code.num_messages - 1)
        ss = [
            min(int(np.searchsorted(state_cum, rng.uniform(), side="right")),
                state_pmf.size - 1)
            for _ in range(n)
        ]
        ys: list[int] = []
        for i in range(n):
            x = int(code.encoder(m, tuple(ys)))
            cum = chan_cum[x, ss[i]]
            y = min(int(np.searchsorted(cum, rng.uniform(), side="right")),
                    sdmc.num_outputs - 1)
            ys.append(y)
        xs = _closed_loop_inputs(code, m, ys)
        if int(code.decoder(tuple(ys))) != m:
            errors += 1
        if _block_distortion(d, estimator(xs, tuple(ys)), ss) > distortion_cap:
            excesses += 1
    return SimStats(
        trials=trials,
        p_error=errors / trials,
        p_error_ci=wilson_interval(errors, trials),
        p_excess=excesses / trials,
        p_excess_ci=wilson_interval(excesses, trials),
    )


@dataclass(frozen=True)
class ConverseParams:
    """Tolerated error/excess rates, the margin eta, and the distortion cap.

    The type-closeness slack is tied to the blocklength as mu_n = n^(-1/4).
    """

    eps: float
    delta: float
    eta: float
    distortion_cap: float

    def __post_init__(self):
        if not (0.0 <= self.eps and 0.0 <= self.delta and self.eps + self.delta < 1.0):
            raise ValueError("need eps, delta >= 0 with eps + delta < 1")
        if not 0.0 < self.eta < 1.0 - self.eps - self.delta:
            raise ValueError("need 0 < eta < 1 - eps - delta")

    @staticmethod
    def mu_n(n: int) -> float:
        return float(n) ** -0.25


def _check_enum_cap(code: IsacCode, sdmc: Sdmc) -> None:
    size = (sdmc.num_states * sdmc.num_outputs) ** code.n
    if size > _ENUM_CAP:
        raise EnumerationTooLarge(
            f"{size} (state, output) blocks exceed cap {_ENUM_CAP}"
        )


def _outcome_sweep(code, sdmc, state_pmf, d, m):
    """Yield, per (y-block, s-block), the conditional probability given
    message m plus the decoded message, block distortion, and the inputs."""
    n = code.n
    estimator = _resolve_estimator(code, sdmc, state_pmf, d)
    ps = state_pmf.weights
    tensor = sdmc.tensor
    for ys in itertools.product(range(sdmc.num_outputs), repeat=n):
        xs = _closed_loop_inputs(code, m, ys)
        m_hat = int(code.decoder(ys))
        s_hat = None  # estimated only for reachable output blocks
        for ss in itertools.product(range(sdmc.num_states), repeat=n):
            prob = 1.0
            for i in range(n):
                prob *= ps[ss[i]] * tensor[xs[i], ss[i], ys[i]]
            if prob == 0.0:
                continue
            if s_hat is None:
                s_hat = estimator(xs, ys)
            yield prob, xs, ys, ss, m_hat, _block_distortion(d, s_hat, ss)


def message_failure_profile(
    code: IsacCode,
    sdmc: Sdmc,
    state_pmf: Pmf,
    d: DistortionFn,
    distortion_cap: float,
    m: int,
):
    """Exact (decode-error, excess-distortion, joint-failure) probabilities
    conditioned on message m."""
    _check_enum_cap(code, sdmc)
    p_err = p_exc = p_joint = 0.0
    for prob, _, _, _, m_hat, dist in _outcome_sweep(code, sdmc, state_pmf, d, m):
        bad_decode = m_hat != m
        bad_dist = dist > distortion_cap
        if bad_decode:
            p_err += prob
        if bad_dist:
            p_exc += prob
        if bad_decode or bad_dist:
            p_joint += prob
    return float(p_err), float(p_exc), float(p_joint)


def build_good_message_set(
    code: IsacCode,
    sdmc: Sdmc,
    state_pmf: Pmf,
    d: DistortionFn,
    cp: ConverseParams,
    mode: str = "exact",
    trials: int = 10_000,
    rng: RngStream | None = None,
):
    """Messages whose joint failure probability is at most 1 - eta, plus the
    guaranteed fraction gamma = 1 - (P_e + P_D)/(1 - eta).

    In exact mode the per-message probabilities come from full enumeration
    and the fraction bound |good| / #messages >= gamma is asserted (it is
    an instance of Markov's inequality, so a violation means a bug).
    """
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    failures = []
    p_e = p_d = 0.0
    if mode == "exact":
        for m in range(code.num_messages):
            err, exc, joint = message_failure_profile(
                code, sdmc, state_pmf, d, cp.distortion_cap, m
            )
            failures.append(joint)
            p_e += err / code.num_messages
            p_d += exc / code.num_messages
    else:
        if rng is None:
            raise ValueError("mc mode needs an RngStream")
        for m in range(code.num_messages):
            err, exc, joint = _mc_failure_profile(
                code, sdmc, state_pmf, d, cp.distortion_cap, m, trials,
                rng.substream(m),
            )
            failures.append(joint)
            p_e += err / code.num_messages
            p_d += exc / code.num_messages
    good = [m for m, f in enumerate(failures) if f <= 1.0 - cp.eta]
    gamma = 1.0 - (p_e + p_d) / (1.0 - cp.eta)
    if mode == "exact" and len(good) / code.num_messages < gamma - 1e-12:
        raise ChanprobeError(
            "good-message fraction fell below its Markov guarantee; "
            "this indicates a bug"
        )
    return good, gamma


def _mc_failure_profile(code, sdmc, state_pmf, d, cap, m, trials, rng):
    """Monte Carlo (decode-error, excess, joint) frequencies given message m."""
    estimator = _resolve_estimator(code, sdmc, state_pmf, d)
    state_cum = state_pmf.cumulative()
    chan_cum = sdmc._cum
    n = code.n
    errors = excesses = joint = 0
    for _ in range(trials):
        ss = [
            min(int(np.searchsorted(state_cum, rng.uniform(), side="right")),
                state_pmf.size - 1)
            for _ in range(n)
        ]
        ys: list[int] = []
        for i in range(n):
            x = int(code.encoder(m, tuple(ys)))
            cum = chan_cum[x, ss[i]]
            ys.append(min(int(np.searchsorted(cum, rng.uniform(), side="right")),
                          sdmc.num_outputs - 1))
        xs = _closed_loop_inputs(code, m, ys)
        bad_decode = int(code.decoder(tuple(ys))) != m
        bad_dist = _block_distortion(d, estimator(xs, tuple(ys)), ss) > cap
        errors += bad_decode
        excesses += bad_dist
        joint += bad_decode or bad_dist
    return errors / trials, excesses / trials, joint / trials


def delta_lower_bound(
    n: int, x_size: int, s_size: int, y_size: int, eta: float
) -> float:
    """eta - |X||Y||S| / (4 n mu_n^2); only meaningful when positive."""
    mu = ConverseParams.mu_n(n)
    return eta - (x_size * y_size * s_size) * lemma1_bound(n, mu)


def restricted_measure_mass(
    code: IsacCode,
    sdmc: Sdmc,
    state_pmf: Pmf,
    d: DistortionFn,
    m: int,
    cp: ConverseParams,
) -> float:
    """Conditional mass, given message m, of the (state, output) blocks where
    the decoder returns m, the block distortion meets the cap, and every
    (input, state, output) triple frequency stays within mu_n of the product
    of the input type with the state and channel laws.

    When the analytic floor eta - |X||Y||S|/(4 n mu_n^2) is positive and the
    message belongs to the good set, the mass is checked against it.
    """
    _check_enum_cap(code, sdmc)
    n = code.n
    mu = cp.mu_n(n)
    ps = state_pmf.weights
    tensor = sdmc.tensor
    mass = 0.0
    joint_failure = 0.0
    for prob, xs, ys, ss, m_hat, dist in _outcome_sweep(
        code, sdmc, state_pmf, d, m
    ):
        ok = m_hat == m and dist <= cp.distortion_cap
        if m_hat != m or dist > cp.distortion_cap:
            joint_failure += prob
        if not ok:
            continue
        t3 = triple_type(
            xs, ss, ys,
            x_size=sdmc.num_inputs, s_size=sdmc.num_states, y_size=sdmc.num_outputs,
        )
        x_type = t3.counts.sum(axis=(1, 2)) / n
        model = x_type[:, None, None] * ps[None, :, None] * tensor
        if float(np.max(np.abs(t3.counts / n - model))) <= mu:
            mass += prob
    floor = delta_lower_bound(
        n, sdmc.num_inputs, sdmc.num_states, sdmc.num_outputs, cp.eta
    )
    if floor > 0.0 and joint_failure <= 1.0 - cp.eta and mass < floor - 1e-12:
        raise ChanprobeError(
            f"restricted mass {mass} fell below its analytic floor {floor}"
        )
    return float(mass)


def triple_deviation_probabilities(
    code: IsacCode,
    sdmc: Sdmc,
    state_pmf: Pmf,
    d: DistortionFn,
    m: int,
    mu: float,
) -> np.ndarray:
    """Exact per-triple probabilities, given message m, that the empirical
    (input, state, output) frequency deviates from the product law by more
    than mu. Each entry obeys the 1/(4 n mu^2) ceiling, viewing (state,
    output) as the output of one super-channel driven by the inputs."""
    _check_enum_cap(code, sdmc)
    n = code.n
    ps = state_pmf.weights
    tensor = sdmc.tensor
    out = np.zeros((sdmc.num_inputs, sdmc.num_states, sdmc.num_outputs))
    for prob, xs, ys, ss, _, _ in _outcome_sweep(code, sdmc, state_pmf, d, m):
        t3 = triple_type(
            xs, ss, ys,
            x_size=sdmc.num_inputs, s_size=sdmc.num_states, y_size=sdmc.num_outputs,
        )
        x_type = t3.counts.sum(axis=(1, 2)) / n
        model = x_type[:, None, None] * ps[None, :, None] * tensor
        out += prob * (np.abs(t3.counts / n - model) > mu)
    return out
