"""Factorized probability models over events, fitting, and persistence.

Two model families share one container:

* unconditional: occupancy per (layer-view, slot); strip and ADC-byte
  tables per layer-view, pooled over slots; 12 byte tables for the
  kinematics payload.
* conditional: the hit tables are additionally keyed by a momentum-
  magnitude bin; the kinematics tables are identical to the unconditional
  fit by construction.

ADC values are coded as two bytes (high, low) with separate tables, which
keeps every alphabet at 256 or below and keeps add-one smoothing mild.
Strip tables are shared across slots within a layer-view: slots are list
positions, not channels, so their per-slot statistics are exchangeable.

An event lowers to four tagged symbol streams in a fixed grammar:

    for each layer-view, for each slot: OCC; if occupied: STRIP, ADC-hi,
    ADC-lo; finally the 12 KIN byte symbols.

The internal layout always uses a bin axis; an unconditional model is the
single-bin case, so a conditional fit with one bin is table-identical to
the unconditional fit.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .events import Dataset, canonical_serialize
from .geometry import MAX_SLOTS, N_LAYER_VIEWS, N_STRIPS, PAD
from .rangecoder import CdfTable, cdf_from_frequencies

MODEL_MAGIC = b"ACM1"
MODEL_VERSION = 1

MODE_UNCONDITIONAL = "unconditional"
MODE_CONDITIONAL = "conditional"

STRIP_ALPHABET_MAX = max(N_STRIPS)

TAG_OCC, TAG_STRIP, TAG_ADC, TAG_KIN = "OCC", "STRIP", "ADC", "KIN"


class ModelFormatError(ValueError):
    """Raised for unreadable, corrupt, or mismatched model files."""


def default_binning(n_bins: int = 10, p_max: float = 10.0) -> "MomentumBinning":
    """Equal-width bins over [0, p_max) plus the implicit overflow bin."""
    return MomentumBinning(np.linspace(0.0, p_max, n_bins + 1))


@dataclass(frozen=True)
class MomentumBinning:
    """Contiguous |p| bins: [e0,e1), ..., [e_{k-1},e_k), [e_k, inf)."""

    edges: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 1:
            raise ValueError("binning needs at least one edge")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("edges must be strictly increasing")
        edges = edges.copy()
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return self.edges.size  # len-1 regular bins plus the overflow bin

    def bin_index(self, p_mag) -> np.ndarray:
        idx = np.searchsorted(self.edges, np.asarray(p_mag, dtype=np.float64), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1).astype(np.int64)

    def __eq__(self, other) -> bool:
        return isinstance(other, MomentumBinning) and np.array_equal(self.edges, other.edges)


@dataclass(frozen=True)
class TrainMeta:
    """Training provenance and the context weights used for model entropy."""

    n_events: int
    data_hash: str
    bin_counts: np.ndarray  # (nb,) events per momentum bin
    occ_mean: np.ndarray  # (nb, 9) mean occupied slots per event

    def __post_init__(self) -> None:
        for name in ("bin_counts", "occ_mean"):
            a = np.asarray(getattr(self, name))
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)


class ModelBundle:
    """Complete fitted probability model: all CDF tables plus metadata."""

    def __init__(
        self,
        mode: str,
        binning: MomentumBinning | None,
        occ: list,
        strip: list,
        adc_hi: list,
        adc_lo: list,
        kin: list,
        train_meta: TrainMeta,
    ) -> None:
        if mode not in (MODE_UNCONDITIONAL, MODE_CONDITIONAL):
            raise ValueError(f"unknown mode {mode!r}")
        if (binning is None) != (mode == MODE_UNCONDITIONAL):
            raise ValueError("conditional models require a binning, unconditional forbid one")
        self.mode = mode
        self.binning = binning
        self.n_bins = 1 if binning is None else binning.n_bins
        self.occ = occ  # [bin][lv][slot] -> CdfTable over {empty, occupied}
        self.strip = strip  # [bin][lv] -> CdfTable over [1, n_strips] as symbol strip-1
        self.adc_hi = adc_hi  # [bin][lv] -> CdfTable over 256
        self.adc_lo = adc_lo  # [bin][lv] -> CdfTable over 256
        self.kin = kin  # [byte position] -> CdfTable over 256
        self.train_meta = train_meta
        self._serialized: bytes | None = None
        self._hash: str | None = None
        self._check_shape()

    def _check_shape(self) -> None:
        nb = self.n_bins
        if len(self.occ) != nb or len(self.strip) != nb or len(self.adc_hi) != nb or len(self.adc_lo) != nb:
            raise ValueError("table grids do not match the bin count")
        for b in range(nb):
            if len(self.occ[b]) != N_LAYER_VIEWS or any(len(row) != MAX_SLOTS for row in self.occ[b]):
                raise ValueError("occupancy grid must be 9 x 20 per bin")
            for lv in range(N_LAYER_VIEWS):
                if self.strip[b][lv].alphabet_size != N_STRIPS[lv]:
                    raise ValueError(f"strip table alphabet mismatch for layer-view {lv}")
        if len(self.kin) != 12:
            raise ValueError("exactly 12 kinematics byte tables required")

    def bin_of(self, p_mag) -> np.ndarray:
        if self.binning is None:
            return np.zeros(np.shape(p_mag), dtype=np.int64)
        return self.binning.bin_index(p_mag)

    @property
    def model_hash(self) -> str:
        if self._hash is None:
            self._hash = hashlib.sha256(self._body_bytes()).hexdigest()
        return self._hash

    # --- persistence -----------------------------------------------------

    def _body_bytes(self) -> bytes:
        if self._serialized is not None:
            return self._serialized
        parts = [MODEL_MAGIC, struct.pack("<HB", MODEL_VERSION, 0 if self.mode == MODE_UNCONDITIONAL else 1)]
        parts.append(struct.pack("<B", N_LAYER_VIEWS))
        parts.append(np.asarray(N_STRIPS, dtype="<u2").tobytes())
        if self.binning is None:
            parts.append(struct.pack("<B", 0))
        else:
            parts.append(struct.pack("<BI", 1, self.binning.edges.size))
            parts.append(self.binning.edges.astype("<f8").tobytes())
        tm = self.train_meta
        parts.append(struct.pack("<Q", tm.n_events))
        parts.append(bytes.fromhex(tm.data_hash))
        parts.append(struct.pack("<I", tm.bin_counts.size))
        parts.append(tm.bin_counts.astype("<u8").tobytes())
        parts.append(tm.occ_mean.astype("<f8").tobytes())

        tables = list(self._iter_tables())
        parts.append(struct.pack("<I", len(tables)))
        for kind, lv, slot, b, table in tables:
            parts.append(struct.pack("<Bbbh I", kind, lv, slot, b, table.alphabet_size))
            freqs = np.asarray(table.freqs, dtype=np.int64) - 1
            parts.append(freqs.astype("<u2").tobytes())
        self._serialized = b"".join(parts)
        return self._serialized

    def _iter_tables(self):
        for pos in range(12):
            yield (4, -1, -1, -1, self.kin[pos])
        for b in range(self.n_bins):
            for lv in range(N_LAYER_VIEWS):
                for slot in range(MAX_SLOTS):
                    yield (0, lv, slot, b, self.occ[b][lv][slot])
        for kind, grid in ((1, self.strip), (2, self.adc_hi), (3, self.adc_lo)):
            for b in range(self.n_bins):
                for lv in range(N_LAYER_VIEWS):
                    yield (kind, lv, -1, b, grid[b][lv])

    def save(self) -> bytes:
        body = self._body_bytes()
        return body + hashlib.sha256(body).digest()

    def save_to(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.save())

    @classmethod
    def load(cls, payload: bytes) -> "ModelBundle":
        if payload[:4] != MODEL_MAGIC:
            raise ModelFormatError("not a model file (bad magic)")
        body, trailer = payload[:-32], payload[-32:]
        if hashlib.sha256(body).digest() != trailer:
            raise ModelFormatError("model content hash mismatch (corrupt payload)")
        off = 4
        version, mode_code = struct.unpack_from("<HB", body, off)
        off += 3
        if version != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {version}")
        (n_lv,) = struct.unpack_from("<B", body, off)
        off += 1
        if n_lv != N_LAYER_VIEWS:
            raise ModelFormatError("layer-view count mismatch")
        n_strips = np.frombuffer(body, dtype="<u2", count=N_LAYER_VIEWS, offset=off)
        off += 2 * N_LAYER_VIEWS
        if tuple(int(x) for x in n_strips) != N_STRIPS:
            raise ModelFormatError("strip-count table mismatch")
        (has_binning,) = struct.unpack_from("<B", body, off)
        off += 1
        binning = None
        if has_binning:
            (n_edges,) = struct.unpack_from("<I", body, off)
            off += 4
            edges = np.frombuffer(body, dtype="<f8", count=n_edges, offset=off).copy()
            off += 8 * n_edges
            binning = MomentumBinning(edges)
        n_events, = struct.unpack_from("<Q", body, off)
        off += 8
        data_hash = body[off : off + 32].hex()
        off += 32
        (nb,) = struct.unpack_from("<I", body, off)
        off += 4
        bin_counts = np.frombuffer(body, dtype="<u8", count=nb, offset=off).astype(np.int64)
        off += 8 * nb
        occ_mean = np.frombuffer(body, dtype="<f8", count=nb * N_LAYER_VIEWS, offset=off).reshape(nb, N_LAYER_VIEWS).copy()
        off += 8 * nb * N_LAYER_VIEWS
        (n_tables,) = struct.unpack_from("<I", body, off)
        off += 4

        expected_nb = binning.n_bins if binning is not None else 1
        occ = [[[None] * MAX_SLOTS for _ in range(N_LAYER_VIEWS)] for _ in range(expected_nb)]
        strip = [[None] * N_LAYER_VIEWS for _ in range(expected_nb)]
        adc_hi = [[None] * N_LAYER_VIEWS for _ in range(expected_nb)]
        adc_lo = [[None] * N_LAYER_VIEWS for _ in range(expected_nb)]
        kin = [None] * 12
        kin_seen = 0
        for _ in range(n_tables):
            kind, lv, slot, b, alphabet = struct.unpack_from("<Bbbh I", body, off)
            off += struct.calcsize("<Bbbh I")
            freqs = np.frombuffer(body, dtype="<u2", count=alphabet, offset=off).astype(np.int64) + 1
            off += 2 * alphabet
            table = CdfTable(np.concatenate([[0], np.cumsum(freqs)]))
            if kind == 4:
                kin[kin_seen] = table
                kin_seen += 1
            elif kind == 0:
                occ[b][lv][slot] = table
            elif kind == 1:
                strip[b][lv] = table
            elif kind == 2:
                adc_hi[b][lv] = table
            elif kind == 3:
                adc_lo[b][lv] = table
            else:
                raise ModelFormatError(f"unknown table kind {kind}")
        meta = TrainMeta(n_events=n_events, data_hash=data_hash, bin_counts=bin_counts, occ_mean=occ_mean)
        mode = MODE_CONDITIONAL if mode_code else MODE_UNCONDITIONAL
        bundle = cls(mode, binning, occ, strip, adc_hi, adc_lo, kin, meta)
        if bundle.save() != payload:
            raise ModelFormatError("model payload is not in canonical form")
        return bundle

    @classmethod
    def load_from(cls, path) -> "ModelBundle":
        with open(path, "rb") as f:
            return cls.load(f.read())


# --- fitting --------------------------------------------------------------


class _Tally:
    """Streaming count accumulator; counts are commutative, merges exact."""

    def __init__(self, binning: MomentumBinning | None) -> None:
        self.binning = binning
        nb = 1 if binning is None else binning.n_bins
        self.nb = nb
        self.n_events = 0
        self.bin_counts = np.zeros(nb, dtype=np.int64)
        self.occ_counts = np.zeros((nb, N_LAYER_VIEWS, MAX_SLOTS), dtype=np.int64)
        self.strip_counts = np.zeros((nb, N_LAYER_VIEWS, STRIP_ALPHABET_MAX), dtype=np.int64)
        self.hi_counts = np.zeros((nb, N_LAYER_VIEWS, 256), dtype=np.int64)
        self.lo_counts = np.zeros((nb, N_LAYER_VIEWS, 256), dtype=np.int64)
        self.kin_counts = np.zeros((12, 256), dtype=np.int64)
        self._hasher = hashlib.sha256()

    def add(self, ds: Dataset) -> None:
        n = len(ds)
        self.n_events += n
        self._hasher.update(canonical_serialize(ds, validate=False)[16:])
        if self.binning is None:
            bins = np.zeros(n, dtype=np.int64)
        else:
            bins = self.binning.bin_index(ds.p_mags)
        self.bin_counts += np.bincount(bins, minlength=self.nb)

        occ = ds.occupied
        ei, li, si = np.nonzero(occ)
        be = bins[ei]
        np.add.at(self.occ_counts, (be, li, si), 1)
        strips = ds.strips[ei, li, si].astype(np.int64) - 1
        adcs = ds.adcs[ei, li, si].astype(np.int64)
        flat_strip = (be * N_LAYER_VIEWS + li) * STRIP_ALPHABET_MAX + strips
        self.strip_counts += np.bincount(
            flat_strip, minlength=self.strip_counts.size
        ).reshape(self.strip_counts.shape)
        flat_hi = (be * N_LAYER_VIEWS + li) * 256 + (adcs >> 8)
        flat_lo = (be * N_LAYER_VIEWS + li) * 256 + (adcs & 0xFF)
        self.hi_counts += np.bincount(flat_hi, minlength=self.hi_counts.size).reshape(self.hi_counts.shape)
        self.lo_counts += np.bincount(flat_lo, minlength=self.lo_counts.size).reshape(self.lo_counts.shape)

        kin_bytes = np.ascontiguousarray(ds.momenta.astype("<f4")).view(np.uint8).reshape(n, 12)
        for pos in range(12):
            self.kin_counts[pos] += np.bincount(kin_bytes[:, pos], minlength=256)

    def finish(self, mode: str) -> ModelBundle:
        if self.n_events == 0:
            raise ValueError("cannot fit a model on an empty dataset")
        nb = self.nb
        occ = [
            [
                [
                    cdf_from_frequencies(
                        [
                            int(self.bin_counts[b] - self.occ_counts[b, lv, slot]),
                            int(self.occ_counts[b, lv, slot]),
                        ]
                    )
                    for slot in range(MAX_SLOTS)
                ]
                for lv in range(N_LAYER_VIEWS)
            ]
            for b in range(nb)
        ]
        strip = [
            [cdf_from_frequencies(self.strip_counts[b, lv, : N_STRIPS[lv]]) for lv in range(N_LAYER_VIEWS)]
            for b in range(nb)
        ]
        adc_hi = [
            [cdf_from_frequencies(self.hi_counts[b, lv]) for lv in range(N_LAYER_VIEWS)]
            for b in range(nb)
        ]
        adc_lo = [
            [cdf_from_frequencies(self.lo_counts[b, lv]) for lv in range(N_LAYER_VIEWS)]
            for b in range(nb)
        ]
        kin = [cdf_from_frequencies(self.kin_counts[pos]) for pos in range(12)]
        with np.errstate(invalid="ignore"):
            occ_mean = np.where(
                self.bin_counts[:, None] > 0,
                self.occ_counts.sum(axis=2) / np.maximum(self.bin_counts[:, None], 1),
                0.0,
            )
        meta = TrainMeta(
            n_events=self.n_events,
            data_hash=self._hasher.hexdigest(),
            bin_counts=self.bin_counts,
            occ_mean=occ_mean,
        )
        return ModelBundle(mode, self.binning, occ, strip, adc_hi, adc_lo, kin, meta)


def fit_unconditional(train: Dataset) -> ModelBundle:
    """Tally and smooth the slot-occupancy, per-LV strip/ADC-byte, and
    kinematics byte tables from a training dataset."""
    tally = _Tally(None)
    tally.add(train)
    return tally.finish(MODE_UNCONDITIONAL)


def fit_conditional(train: Dataset, binning: MomentumBinning) -> ModelBundle:
    """Like fit_unconditional, with hit tables keyed by the |p| bin.

    Empty bins are legal; their tables come out uniform through smoothing.
    """
    tally = _Tally(binning)
    tally.add(train)
    return tally.finish(MODE_CONDITIONAL)


def fit_streaming(chunks, binning: MomentumBinning | None) -> ModelBundle:
    """Fit from an iterable of Dataset chunks without materializing them."""
    tally = _Tally(binning)
    for chunk in chunks:
        tally.add(chunk)
    return tally.finish(MODE_UNCONDITIONAL if binning is None else MODE_CONDITIONAL)


def uniform_bundle(binning: MomentumBinning | None = None) -> ModelBundle:
    """All-uniform tables (zero counts, pure smoothing); test helper."""
    tally = _Tally(binning)
    tally.n_events = 1  # bypass the empty-fit guard; counts stay zero
    return tally.finish(MODE_UNCONDITIONAL if binning is None else MODE_CONDITIONAL)


# --- event <-> symbol stream grammar --------------------------------------


@dataclass(frozen=True)
class SymbolEmission:
    table_key: tuple
    symbol: int
    tag: str
    layer_view: int | None


def lower_event(event, m: ModelBundle) -> list[SymbolEmission]:
    """Flatten one event into the coder's symbol sequence (grammar order)."""
    b = int(m.bin_of(event.p_mag)) if m.binning is not None else 0
    stream: list[SymbolEmission] = []
    strips, adcs = event.strips, event.adcs
    for lv in range(N_LAYER_VIEWS):
        for slot in range(MAX_SLOTS):
            s = int(strips[lv, slot])
            occupied = s != PAD
            stream.append(SymbolEmission(("occ", b, lv, slot), int(occupied), TAG_OCC, lv))
            if occupied:
                a = int(adcs[lv, slot])
                stream.append(SymbolEmission(("strip", b, lv), s - 1, TAG_STRIP, lv))
                stream.append(SymbolEmission(("adc_hi", b, lv), a >> 8, TAG_ADC, lv))
                stream.append(SymbolEmission(("adc_lo", b, lv), a & 0xFF, TAG_ADC, lv))
    kin_bytes = np.ascontiguousarray(event.momentum.astype("<f4")).view(np.uint8)
    for pos in range(12):
        stream.append(SymbolEmission(("kin", pos), int(kin_bytes[pos]), TAG_KIN, None))
    return stream


def raise_event(stream: list[SymbolEmission], m: ModelBundle):
    """Reconstruct the event from a lowered stream; exact inverse."""
    from .events import Event  # local import to avoid cycles in type checkers

    strips = np.full((N_LAYER_VIEWS, MAX_SLOTS), PAD, dtype=np.int32)
    adcs = np.full((N_LAYER_VIEWS, MAX_SLOTS), PAD, dtype=np.int32)
    kin_bytes = np.zeros(12, dtype=np.uint8)
    it = iter(stream)
    try:
        for lv in range(N_LAYER_VIEWS):
            for slot in range(MAX_SLOTS):
                emission = next(it)
                if emission.tag != TAG_OCC:
                    raise ValueError(f"expected OCC at (lv={lv}, slot={slot}), got {emission.tag}")
                if emission.symbol not in (0, 1):
                    raise ValueError("occupancy symbol outside alphabet")
                if emission.symbol == 1:
                    strip_e = next(it)
                    hi_e = next(it)
                    lo_e = next(it)
                    if (strip_e.tag, hi_e.tag, lo_e.tag) != (TAG_STRIP, TAG_ADC, TAG_ADC):
                        raise ValueError("malformed attribute triplet after occupied slot")
                    if not 0 <= strip_e.symbol < N_STRIPS[lv]:
                        raise ValueError("strip symbol outside alphabet")
                    if not (0 <= hi_e.symbol < 256 and 0 <= lo_e.symbol < 256):
                        raise ValueError("adc byte outside alphabet")
                    strips[lv, slot] = strip_e.symbol + 1
                    adcs[lv, slot] = (hi_e.symbol << 8) | lo_e.symbol
        for pos in range(12):
            emission = next(it)
            if emission.tag != TAG_KIN:
                raise ValueError("expected kinematics byte")
            kin_bytes[pos] = emission.symbol
    except StopIteration:
        raise ValueError("symbol stream ended early (wrong length)") from None
    if next(it, None) is not None:
        raise ValueError("trailing symbols after a complete event")
    momentum = kin_bytes.view("<f4").copy()
    return Event(strips, adcs, momentum)
