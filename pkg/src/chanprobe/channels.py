"""Finite alphabets, probability vectors, channel laws, sampling, and types.

Symbols are dense indices 0..size-1 everywhere. Channel and distribution
values are immutable after construction (their arrays are frozen) and safe
to share read-only across parallel workers; all randomness flows through
explicitly passed RngStream objects, one per worker.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import (
    ChannelParse,
    EmptySequence,
    LengthMismatch,
    NegativeWeight,
    SumNotOne,
    SymbolOutOfRange,
)
from .rng import RngStream

PMF_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Alphabet:
    """Finite symbol set; symbols are the dense indices 0..size-1."""

    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError("alphabet size must be >= 1")
        object.__setattr__(self, "size", int(self.size))

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.size))

    def __contains__(self, symbol) -> bool:
        return 0 <= int(symbol) < self.size


@dataclass(frozen=True)
class Pmf:
    """Probability vector over a finite alphabet.

    Weights are stored exactly as given (no renormalization). Construction
    fails unless they are nonnegative and sum to 1 within PMF_TOL.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("pmf needs a nonempty 1-d weight vector")
        if np.any(w < 0.0):
            raise NegativeWeight(
                f"negative weight {w.min():.3e} at index {int(np.argmin(w))}"
            )
        deviation = float(w.sum() - 1.0)
        if abs(deviation) > PMF_TOL:
            raise SumNotOne(deviation)
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "_cum", _frozen(np.cumsum(w)))

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.size)

    def __getitem__(self, symbol: int) -> float:
        if not 0 <= symbol < self.size:
            raise SymbolOutOfRange(f"symbol {symbol} not in alphabet of size {self.size}")
        return float(self.weights[symbol])

    def cumulative(self) -> np.ndarray:
        return self._cum


def validate_pmf(weights: Sequence[float]) -> Pmf:
    """Check nonnegativity and unit sum (within PMF_TOL); no renormalization."""
    return Pmf(np.asarray(weights, dtype=np.float64))


def uniform_pmf(size: int) -> Pmf:
    return Pmf(np.full(size, 1.0 / size))


@dataclass(frozen=True)
class Dmc:
    """Memoryless channel law: one output pmf per input symbol (row-stochastic)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.size == 0:
            raise ChannelParse("channel matrix must be 2-d and nonempty")
        for x in range(m.shape[0]):
            try:
                Pmf(m[x])
            except (NegativeWeight, SumNotOne) as e:
                e.args = (f"row {x}: {e}",)
                raise
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "_cum", _frozen(np.cumsum(m, axis=1)))

    @property
    def num_inputs(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def num_outputs(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def input_alphabet(self) -> Alphabet:
        return Alphabet(self.num_inputs)

    @property
    def output_alphabet(self) -> Alphabet:
        return Alphabet(self.num_outputs)

    def row(self, x: int) -> np.ndarray:
        if not 0 <= x < self.num_inputs:
            raise SymbolOutOfRange(f"input {x} not in alphabet of size {self.num_inputs}")
        return self.matrix[x]

    @classmethod
    def bsc(cls, p: float) -> "Dmc":
        """Binary symmetric channel with crossover probability p."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("crossover probability must lie in [0, 1]")
        return cls(np.array([[1.0 - p, p], [p, 1.0 - p]]))


@dataclass(frozen=True)
class Sdmc:
    """State-dependent memoryless channel: one output pmf per (input, state)."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=np.float64)
        if t.ndim != 3 or t.size == 0:
            raise ChannelParse("state channel tensor must be 3-d and nonempty")
        for x in range(t.shape[0]):
            for s in range(t.shape[1]):
                try:
                    Pmf(t[x, s])
                except (NegativeWeight, SumNotOne) as e:
                    e.args = (f"row (x={x}, s={s}): {e}",)
                    raise
        object.__setattr__(self, "tensor", _frozen(t))
        object.__setattr__(self, "_cum", _frozen(np.cumsum(t, axis=2)))

    @property
    def num_inputs(self) -> int:
        return int(self.tensor.shape[0])

    @property
    def num_states(self) -> int:
        return int(self.tensor.shape[1])

    @property
    def num_outputs(self) -> int:
        return int(self.tensor.shape[2])

    def row(self, x: int, s: int) -> np.ndarray:
        if not 0 <= x < self.num_inputs:
            raise SymbolOutOfRange(f"input {x} not in alphabet of size {self.num_inputs}")
        if not 0 <= s < self.num_states:
            raise SymbolOutOfRange(f"state {s} not in alphabet of size {self.num_states}")
        return self.tensor[x, s]

    def marginal(self, state_pmf: Pmf) -> Dmc:
        """Average the state out: P(y|x) = sum_s P_S(s) P(y|x,s)."""
        if state_pmf.size != self.num_states:
            raise LengthMismatch("state pmf size does not match channel")
        return Dmc(np.tensordot(self.tensor, state_pmf.weights, axes=([1], [0])))


def _inverse_cdf(cum_row: np.ndarray, u: float) -> int:
    # smallest symbol whose cumulative mass strictly exceeds u
    idx = int(np.searchsorted(cum_row, u, side="right"))
    return min(idx, cum_row.size - 1)


def dmc_sample(dmc: Dmc, x: int, rng: RngStream) -> int:
    """One channel output for input x; consumes exactly one uniform draw."""
    if not 0 <= x < dmc.num_inputs:
        raise SymbolOutOfRange(f"input {x} not in alphabet of size {dmc.num_inputs}")
    return _inverse_cdf(dmc._cum[x], rng.uniform())


def dmc_sample_many(dmc: Dmc, x: int, size: int, rng: RngStream) -> np.ndarray:
    """Vectorized i.i.d. outputs for a fixed input; one uniform per draw,
    identical to repeated dmc_sample on the same stream."""
    if not 0 <= x < dmc.num_inputs:
        raise SymbolOutOfRange(f"input {x} not in alphabet of size {dmc.num_inputs}")
    us = rng.uniforms(size)
    idx = np.searchsorted(dmc._cum[x], us, side="right")
    return np.minimum(idx, dmc.num_outputs - 1)


def sdmc_sample(sdmc: Sdmc, x: int, s: int, rng: RngStream) -> int:
    """One output for the (input, state) pair; consumes one uniform draw."""
    row = sdmc.row(x, s)  # validates symbols
    del row
    return _inverse_cdf(sdmc._cum[x, s], rng.uniform())


def sdmc_sample_many(sdmc: Sdmc, x: int, s: int, size: int, rng: RngStream) -> np.ndarray:
    sdmc.row(x, s)
    us = rng.uniforms(size)
    idx = np.searchsorted(sdmc._cum[x, s], us, side="right")
    return np.minimum(idx, sdmc.num_outputs - 1)


@dataclass(frozen=True)
class JointType:
    """Empirical joint counts of aligned symbol sequences of length n.

    Counts are integers so marginalization identities hold exactly;
    counts/n is the usual empirical distribution.
    """

    counts: np.ndarray
    n: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if np.any(c < 0):
            raise ValueError("type counts must be nonnegative")
        if int(c.sum()) != int(self.n):
            raise LengthMismatch(
                f"type counts sum to {int(c.sum())}, expected n={self.n}"
            )
        object.__setattr__(self, "counts", _frozen(c))
        object.__setattr__(self, "n", int(self.n))

    def normalized(self) -> np.ndarray:
        return self.counts / self.n

    def marginal(self, axis: int) -> "JointType":
        """Sum out the given axis."""
        return JointType(self.counts.sum(axis=axis), self.n)


def _checked_sequences(seqs, sizes):
    arrays = [np.asarray(s, dtype=np.int64) for s in seqs]
    n = arrays[0].size
    if n == 0:
        raise EmptySequence("sequences must be nonempty")
    for a in arrays:
        if a.ndim != 1 or a.size != n:
            raise LengthMismatch("sequences must be 1-d and of equal length")
    resolved = []
    for a, size in zip(arrays, sizes):
        if np.any(a < 0):
            raise SymbolOutOfRange("negative symbol in sequence")
        top = int(a.max())
        if size is None:
            size = top + 1
        elif top >= size:
            raise SymbolOutOfRange(f"symbol {top} not in alphabet of size {size}")
        resolved.append(int(size))
    return arrays, resolved, n


def joint_type(xs, ys, x_size: int | None = None, y_size: int | None = None) -> JointType:
    """Joint type of an aligned pair: counts[a, b] = #{i : x_i=a, y_i=b}."""
    (ax, ay), (sx, sy), n = _checked_sequences((xs, ys), (x_size, y_size))
    counts = np.zeros((sx, sy), dtype=np.int64)
    np.add.at(counts, (ax, ay), 1)
    return JointType(counts, n)


def sequence_type(xs, size: int | None = None) -> JointType:
    """Type of a single sequence: counts[a] = #{i : x_i=a}."""
    (ax,), (sx,), n = _checked_sequences((xs,), (size,))
    counts = np.zeros(sx, dtype=np.int64)
    np.add.at(counts, ax, 1)
    return JointType(counts, n)


def triple_type(
    xs,
    ss,
    ys,
    x_size: int | None = None,
    s_size: int | None = None,
    y_size: int | None = None,
) -> JointType:
    """Joint type over (input, state, output) triples."""
    (ax, as_, ay), (sx, s_s, sy), n = _checked_sequences(
        (xs, ss, ys), (x_size, s_size, y_size)
    )
    counts = np.zeros((sx, s_s, sy), dtype=np.int64)
    np.add.at(counts, (ax, as_, ay), 1)
    return JointType(counts, n)


def conditional_deviation(
    t: JointType, marginal: JointType, a: int, b: int, dmc: Dmc
) -> float:
    """Gap between the joint type at (a, b) and the product of the input
    type with the conditional channel law: |t(a,b)/n - (m(a)/n) P(b|a)|."""
    if t.counts.ndim != 2 or marginal.counts.ndim != 1:
        raise ValueError("expected a pair type and a 1-d marginal type")
    if marginal.n != t.n:
        raise LengthMismatch("joint and marginal types have different lengths")
    if not np.array_equal(marginal.counts, t.counts.sum(axis=1)):
        raise ValueError("marginal type does not match the joint type's input marginal")
    if not (0 <= a < t.counts.shape[0] and 0 <= a < dmc.num_inputs):
        raise SymbolOutOfRange(f"input symbol {a} out of range")
    if not (0 <= b < t.counts.shape[1] and 0 <= b < dmc.num_outputs):
        raise SymbolOutOfRange(f"output symbol {b} out of range")
    n = t.n
    return abs(t.counts[a, b] / n - (marginal.counts[a] / n) * float(dmc.matrix[a, b]))


# ---------------------------------------------------------------------------
# channel files: "dmc |X| |Y|" or "sdmc |X| |S| |Y|" header, one probability
# row per input (or per (input, state), input-major), '#' comments
# ---------------------------------------------------------------------------

Channel = Union[Dmc, Sdmc]


def _content_lines(text: str) -> list[list[str]]:
    lines = []
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append(stripped.split())
    return lines


def parse_channel(text: str) -> Channel:
    lines = _content_lines(text)
    if not lines:
        raise ChannelParse("empty channel description")
    header = lines[0]
    try:
        if header[0] == "dmc" and len(header) == 3:
            nx, ny = int(header[1]), int(header[2])
            rows, per_row = nx, ny
            kind = "dmc"
        elif header[0] == "sdmc" and len(header) == 4:
            nx, ns, ny = int(header[1]), int(header[2]), int(header[3])
            rows, per_row = nx * ns, ny
            kind = "sdmc"
        else:
            raise ChannelParse(f"unrecognized channel header: {' '.join(header)}")
    except ValueError:
        raise ChannelParse(f"bad sizes in channel header: {' '.join(header)}") from None
    body = lines[1:]
    if len(body) != rows:
        raise ChannelParse(f"expected {rows} probability rows, found {len(body)}")
    try:
        values = [[float(tok) for tok in line] for line in body]
    except ValueError:
        raise ChannelParse("non-numeric probability entry") from None
    for i, line in enumerate(values):
        if len(line) != per_row:
            raise ChannelParse(f"row {i} has {len(line)} entries, expected {per_row}")
    m = np.array(values)
    if kind == "dmc":
        return Dmc(m)
    return Sdmc(m.reshape(nx, ns, ny))


def format_channel(channel: Channel) -> str:
    if isinstance(channel, Dmc):
        head = f"dmc {channel.num_inputs} {channel.num_outputs}"
        body = channel.matrix
    else:
        head = f"sdmc {channel.num_inputs} {channel.num_states} {channel.num_outputs}"
        body = channel.tensor.reshape(-1, channel.num_outputs)
    rows = [" ".join(repr(float(v)) for v in row) for row in body]
    return "\n".join([head, *rows]) + "\n"


def load_channel(path) -> Channel:
    return parse_channel(Path(path).read_text())


def save_channel(channel: Channel, path) -> None:
    Path(path).write_text(format_channel(channel))
