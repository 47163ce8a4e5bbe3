"""Integer range coder over 16-bit cumulative-frequency tables.

The coder subdivides a 64-bit interval exactly: symbol s with table cum
receives [low + (range*cum[s] >> 16), low + (range*cum[s+1] >> 16)). The
sub-intervals tile the parent interval with no gap, so the only rate loss
is the floor granularity, below 2^-40 bits per symbol once the range is
renormalized to at least 2^56 before each step. Termination flushes the
full 64-bit low, so for every stream

    0 <= 8 * len(payload) - sum(-log2(f_t / 65536)) <= 64  bits.

Carries are propagated into already-emitted bytes by walking back through
0xFF runs; interval nesting guarantees the walk never passes the start of
the payload. Everything here is integer arithmetic; costs in bits are
computed by callers.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right

import numpy as np

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS  # probability resolution of one table
MAX_ALPHABET = TOTAL

_RANGE_BITS = 64
_FULL = 1 << _RANGE_BITS
_MASK = _FULL - 1
_RENORM = 1 << (_RANGE_BITS - 8)
_LOW_MASK = (1 << (_RANGE_BITS - 8)) - 1
_TERM_BYTES = _RANGE_BITS // 8

# Upper bound, in bits, on (achieved - ideal) for any single stream.
TERMINATION_BOUND_BITS = _RANGE_BITS


class CdfTable:
    """Immutable cumulative-frequency table summing to exactly 2^16.

    cum has length alphabet_size + 1 with cum[0] = 0 and cum[-1] = 65536,
    strictly increasing, so every symbol has frequency >= 1 and remains
    decodable regardless of the data the table was fitted on.
    """

    __slots__ = ("cum", "alphabet_size", "_cost")

    def __init__(self, cum) -> None:
        cum = [int(c) for c in cum]
        if len(cum) < 2 or cum[0] != 0 or cum[-1] != TOTAL:
            raise ValueError("cum must run from 0 to 65536")
        for a, b in zip(cum, cum[1:]):
            if b <= a:
                raise ValueError("cum must be strictly increasing (every f >= 1)")
        self.cum = cum
        self.alphabet_size = len(cum) - 1
        self._cost = None

    @property
    def freqs(self) -> list[int]:
        return [b - a for a, b in zip(self.cum, self.cum[1:])]

    @property
    def cost_bits(self) -> np.ndarray:
        """Per-symbol ideal codelength -log2(f/65536) as float64."""
        if self._cost is None:
            f = np.diff(np.asarray(self.cum, dtype=np.float64))
            self._cost = TOTAL_BITS - np.log2(f)
            self._cost.setflags(write=False)
        return self._cost

    @property
    def entropy_bits(self) -> float:
        """Entropy of the table's own distribution, in bits per symbol."""
        f = np.diff(np.asarray(self.cum, dtype=np.float64))
        return float(np.sum((f / TOTAL) * (TOTAL_BITS - np.log2(f))))

    def __eq__(self, other) -> bool:
        return isinstance(other, CdfTable) and self.cum == other.cum

    def __repr__(self) -> str:
        return f"CdfTable(alphabet={self.alphabet_size})"


def cdf_from_frequencies(freqs) -> CdfTable:
    """Build a table from raw counts: add-one smoothing, then scale to 2^16.

    Scaling uses largest-remainder apportionment; any symbol squeezed to
    zero is restored to frequency 1 at the expense of the largest bucket,
    so the result is always decodable. Fully deterministic.
    """
    counts = [int(c) + 1 for c in freqs]
    n = len(counts)
    if n < 1:
        raise ValueError("alphabet must be non-empty")
    if n > MAX_ALPHABET:
        raise ValueError(f"alphabet of {n} symbols cannot all get frequency >= 1 out of {TOTAL}")
    if any(c < 1 for c in counts):
        raise ValueError("frequencies must be non-negative")
    total = sum(counts)
    scaled = [c * TOTAL for c in counts]
    f = [s // total for s in scaled]
    rem = [s % total for s in scaled]
    deficit = TOTAL - sum(f)
    if deficit:
        order = sorted(range(n), key=lambda i: (-rem[i], i))
        for i in order[:deficit]:
            f[i] += 1
    zeros = [i for i in range(n) if f[i] == 0]
    if zeros:
        # take one unit at a time from the currently largest bucket
        heap = [(-fi, i) for i, fi in enumerate(f) if fi >= 2]
        heapq.heapify(heap)
        for i in zeros:
            neg, j = heapq.heappop(heap)
            f[j] -= 1
            f[i] = 1
            if f[j] >= 2:
                heapq.heappush(heap, (-f[j], j))
    cum = [0] * (n + 1)
    acc = 0
    for i, fi in enumerate(f):
        acc += fi
        cum[i + 1] = acc
    return CdfTable(cum)


class RangeEncoder:
    """Single-owner streaming encoder; finish() seals and returns the payload."""

    __slots__ = ("_low", "_range", "_out", "_done", "symbols_in")

    def __init__(self) -> None:
        self._low = 0
        self._range = _FULL
        self._out = bytearray()
        self._done = False
        self.symbols_in = 0

    def encode(self, cdf: CdfTable, symbol: int) -> None:
        if not 0 <= symbol < cdf.alphabet_size:
            raise ValueError(f"symbol {symbol} outside alphabet of {cdf.alphabet_size}")
        self._encode_one(cdf.cum, symbol)
        self.symbols_in += 1

    def encode_stream(self, tables: list[CdfTable], table_ids, symbols) -> None:
        """Hot path: encode parallel sequences of table indices and symbols."""
        cums = [t.cum for t in tables]
        low = self._low
        rng = self._range
        out = self._out
        n = 0
        for t, s in zip(table_ids, symbols):
            cum = cums[t]
            base = (rng * cum[s]) >> TOTAL_BITS
            low += base
            rng = ((rng * cum[s + 1]) >> TOTAL_BITS) - base
            if low >= _FULL:
                low -= _FULL
                i = len(out) - 1
                while out[i] == 0xFF:
                    out[i] = 0
                    i -= 1
                out[i] += 1
            while rng < _RENORM:
                out.append(low >> (_RANGE_BITS - 8))
                low = (low & _LOW_MASK) << 8
                rng <<= 8
            n += 1
        self._low = low
        self._range = rng
        self.symbols_in += n

    def _encode_one(self, cum, s) -> None:
        rng = self._range
        base = (rng * cum[s]) >> TOTAL_BITS
        low = self._low + base
        rng = ((rng * cum[s + 1]) >> TOTAL_BITS) - base
        if low >= _FULL:
            low -= _FULL
            out = self._out
            i = len(out) - 1
            while out[i] == 0xFF:
                out[i] = 0
                i -= 1
            out[i] += 1
        while rng < _RENORM:
            self._out.append(low >> (_RANGE_BITS - 8))
            low = (low & _LOW_MASK) << 8
            rng <<= 8
        self._low = low
        self._range = rng

    def finish(self) -> bytes:
        """Flush the 64-bit low as 8 bytes and return the sealed payload."""
        if self._done:
            raise RuntimeError("finish() called twice")
        self._done = True
        low = self._low
        out = self._out
        for _ in range(_TERM_BYTES):
            out.append(low >> (_RANGE_BITS - 8))
            low = (low & _LOW_MASK) << 8
        return bytes(out)


class RangeDecoder:
    """Mirror of RangeEncoder; reads zero past the payload end.

    Never faults on arbitrary byte input: any payload decodes to some
    symbol sequence under any table sequence.
    """

    __slots__ = ("_offset", "_range", "_data", "_pos")

    def __init__(self, payload: bytes) -> None:
        self._data = payload
        self._offset = int.from_bytes(payload[:_TERM_BYTES].ljust(_TERM_BYTES, b"\0"), "big")
        self._pos = _TERM_BYTES
        self._range = _FULL

    def decode(self, cdf: CdfTable) -> int:
        return self._decode_one(cdf.cum)

    def decode_stream(self, tables: list[CdfTable], table_ids) -> list[int]:
        """Hot path: decode one symbol per entry of table_ids."""
        cums = [t.cum for t in tables]
        rng = self._range
        off = self._offset
        data = self._data
        pos = self._pos
        ndata = len(data)
        out = []
        append = out.append
        for t in table_ids:
            cum = cums[t]
            v = ((off + 1) << TOTAL_BITS) - 1
            v //= rng
            s = bisect_right(cum, v) - 1
            if s >= len(cum) - 1:  # only reachable on adversarial payloads
                s = len(cum) - 2
            base = (rng * cum[s]) >> TOTAL_BITS
            off -= base
            rng = ((rng * cum[s + 1]) >> TOTAL_BITS) - base
            while rng < _RENORM:
                off = (off << 8) | (data[pos] if pos < ndata else 0)
                pos += 1
                rng <<= 8
            append(s)
        self._range = rng
        self._offset = off
        self._pos = pos
        return out

    def _decode_one(self, cum) -> int:
        rng = self._range
        off = self._offset
        v = (((off + 1) << TOTAL_BITS) - 1) // rng
        s = bisect_right(cum, v) - 1
        if s >= len(cum) - 1:
            s = len(cum) - 2
        base = (rng * cum[s]) >> TOTAL_BITS
        off -= base
        rng = ((rng * cum[s + 1]) >> TOTAL_BITS) - base
        data = self._data
        pos = self._pos
        ndata = len(data)
        while rng < _RENORM:
            off = (off << 8) | (data[pos] if pos < ndata else 0)
            pos += 1
            rng <<= 8
        self._range = rng
        self._offset = off
        self._pos = pos
        return s
