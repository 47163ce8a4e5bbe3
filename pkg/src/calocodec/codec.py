"""Dataset encoder/decoder with exact per-stream bit accounting.

Symbols are routed into four physical streams by tag (OCC, STRIP, ADC,
KIN), each encoded by its own coder state and stored as one length-
prefixed section. Separate streams make the per-component bit budget an
exact measurement rather than an attribution, and let decoding recover
the kinematics (hence the momentum bin) before any hit table is touched.

The compressed container binds the model hash, so a payload can only be
decoded under the model that produced it.

    .acz layout: magic b"ACZ1" | u16 version | u8 mode | 32B model hash |
                 u64 N | 4 x (u64 length + payload), order OCC,STRIP,ADC,KIN
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .events import Dataset, FormatError, validate_dataset
from .geometry import MAX_SLOTS, N_LAYER_VIEWS, PAD
from .model import (
    MODE_CONDITIONAL,
    MODE_UNCONDITIONAL,
    ModelBundle,
    TAG_ADC,
    TAG_KIN,
    TAG_OCC,
    TAG_STRIP,
)
from .rangecoder import RangeDecoder, RangeEncoder, TERMINATION_BOUND_BITS

ACZ_MAGIC = b"ACZ1"
ACZ_VERSION = 1

SECTION_ORDER = (TAG_OCC, TAG_STRIP, TAG_ADC, TAG_KIN)

_CHUNK = 1 << 15


class CodecError(ValueError):
    """Raised on model/payload mismatches during encode or decode."""


@dataclass
class CodelengthAccount:
    """Ideal bits per (layer-view, tag) cell and achieved bits per section.

    Ideal bits are the exact sums of -log2(f/65536) accumulated while the
    symbols were emitted; achieved bits are 8x the sealed payload sizes.
    Per-section gaps are bounded by the coder's termination constant.
    """

    n_events: int
    ideal_lv_tag: np.ndarray  # (9, 3) float64, columns OCC, STRIP, ADC
    ideal_kin: float
    achieved: dict = field(default_factory=dict)  # section tag -> bits (int)

    @property
    def ideal_hits(self) -> float:
        return float(self.ideal_lv_tag.sum())

    @property
    def ideal_total(self) -> float:
        return self.ideal_hits + self.ideal_kin

    @property
    def achieved_total(self) -> int:
        return sum(self.achieved.values())

    @property
    def mean_bits_per_event(self) -> float:
        return self.achieved_total / self.n_events

    def ideal_section(self, tag: str) -> float:
        if tag == TAG_KIN:
            return self.ideal_kin
        col = {TAG_OCC: 0, TAG_STRIP: 1, TAG_ADC: 2}[tag]
        return float(self.ideal_lv_tag[:, col].sum())

    def section_gap_bits(self, tag: str) -> float:
        return self.achieved[tag] - self.ideal_section(tag)

    def check_gaps(self) -> None:
        for tag in SECTION_ORDER:
            gap = self.section_gap_bits(tag)
            if not 0.0 <= gap <= TERMINATION_BOUND_BITS:
                raise AssertionError(f"section {tag}: achieved-ideal gap {gap:.6f} outside [0, 64]")


@dataclass
class CompressedDataset:
    mode: str
    model_hash: str
    n_events: int
    sections: dict  # tag -> bytes

    def to_bytes(self) -> bytes:
        parts = [
            ACZ_MAGIC,
            struct.pack("<HB", ACZ_VERSION, 0 if self.mode == MODE_UNCONDITIONAL else 1),
            bytes.fromhex(self.model_hash),
            struct.pack("<Q", self.n_events),
        ]
        for tag in SECTION_ORDER:
            payload = self.sections[tag]
            parts.append(struct.pack("<Q", len(payload)))
            parts.append(payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CompressedDataset":
        if blob[:4] != ACZ_MAGIC:
            raise FormatError("not a compressed dataset (bad magic)")
        off = 4
        version, mode_code = struct.unpack_from("<HB", blob, off)
        off += 3
        if version != ACZ_VERSION:
            raise FormatError(f"unsupported compressed-dataset version {version}")
        model_hash = blob[off : off + 32].hex()
        off += 32
        (n_events,) = struct.unpack_from("<Q", blob, off)
        off += 8
        sections = {}
        for tag in SECTION_ORDER:
            if off + 8 > len(blob):
                raise FormatError(f"truncated before section {tag}")
            (length,) = struct.unpack_from("<Q", blob, off)
            off += 8
            if off + length > len(blob):
                raise FormatError(f"truncated section {tag}")
            sections[tag] = blob[off : off + length]
            off += length
        if off != len(blob):
            raise FormatError("trailing bytes after the last section")
        mode = MODE_CONDITIONAL if mode_code else MODE_UNCONDITIONAL
        return cls(mode=mode, model_hash=model_hash, n_events=n_events, sections=sections)

    def save_to(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load_from(cls, path) -> "CompressedDataset":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    @property
    def total_bytes(self) -> int:
        return len(self.to_bytes())


class _FlatTables:
    """Model tables laid out for stream coding, with flat integer ids.

    occ id   = (bin * 9 + lv) * 20 + slot
    strip id = bin * 9 + lv
    adc id   = (bin * 9 + lv) * 2 + (0 for the high byte, 1 for the low)
    kin id   = byte position
    """

    def __init__(self, m: ModelBundle) -> None:
        nb = m.n_bins
        self.occ = [m.occ[b][lv][slot] for b in range(nb) for lv in range(N_LAYER_VIEWS) for slot in range(MAX_SLOTS)]
        self.strip = [m.strip[b][lv] for b in range(nb) for lv in range(N_LAYER_VIEWS)]
        self.adc = []
        for b in range(nb):
            for lv in range(N_LAYER_VIEWS):
                self.adc.append(m.adc_hi[b][lv])
                self.adc.append(m.adc_lo[b][lv])
        self.kin = list(m.kin)
        self.occ_cost = np.stack([t.cost_bits for t in self.occ])  # (n_occ, 2)
        self.strip_cost = [t.cost_bits for t in self.strip]
        self.adc_cost = [t.cost_bits for t in self.adc]
        self.kin_cost = np.stack([t.cost_bits for t in self.kin])  # (12, 256)


def _chunk_symbol_streams(ds: Dataset, m: ModelBundle, sl: slice):
    """Per-chunk (table_id, symbol) arrays for each section, grammar order."""
    strips = ds.strips[sl]
    adcs = ds.adcs[sl]
    momenta = ds.momenta[sl]
    n = strips.shape[0]
    p = np.sqrt(np.einsum("ij,ij->i", momenta.astype(np.float64), momenta.astype(np.float64)))
    bins = m.bin_of(p)

    occupied = strips != PAD
    lv_grid = np.arange(N_LAYER_VIEWS)[None, :, None]
    slot_grid = np.arange(MAX_SLOTS)[None, None, :]
    occ_ids = ((bins[:, None, None] * N_LAYER_VIEWS + lv_grid) * MAX_SLOTS + slot_grid)
    occ_ids = np.broadcast_to(occ_ids, (n, N_LAYER_VIEWS, MAX_SLOTS)).reshape(-1)
    occ_syms = occupied.astype(np.int8).reshape(-1)

    ei, li, si = np.nonzero(occupied)
    ctx = bins[ei] * N_LAYER_VIEWS + li
    strip_ids = ctx
    strip_syms = strips[ei, li, si].astype(np.int64) - 1
    a = adcs[ei, li, si].astype(np.int64)
    adc_ids = np.stack([ctx * 2, ctx * 2 + 1], axis=1).reshape(-1)
    adc_syms = np.stack([a >> 8, a & 0xFF], axis=1).reshape(-1)

    kin_bytes = np.ascontiguousarray(momenta.astype("<f4")).view(np.uint8).reshape(n, 12)
    kin_ids = np.broadcast_to(np.arange(12)[None, :], (n, 12)).reshape(-1)
    kin_syms = kin_bytes.reshape(-1).astype(np.int64)

    hit_lv = li  # layer-view of each occupied slot, for accounting
    return {
        TAG_OCC: (occ_ids, occ_syms),
        TAG_STRIP: (strip_ids, strip_syms),
        TAG_ADC: (adc_ids, adc_syms),
        TAG_KIN: (kin_ids, kin_syms),
    }, hit_lv, occupied


def encode_dataset(ds: Dataset, m: ModelBundle) -> tuple[CompressedDataset, CodelengthAccount]:
    """Encode all events into four sealed sections plus an exact account."""
    report = validate_dataset(ds)
    if not report.ok:
        raise CodecError(f"refusing to encode invalid dataset: {report}")
    flat = _FlatTables(m)
    encoders = {tag: RangeEncoder() for tag in SECTION_ORDER}
    tables = {TAG_OCC: flat.occ, TAG_STRIP: flat.strip, TAG_ADC: flat.adc, TAG_KIN: flat.kin}

    ideal_lv_tag = np.zeros((N_LAYER_VIEWS, 3))
    ideal_kin = 0.0
    n = len(ds)
    for lo in range(0, n, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, n))
        streams, hit_lv, occupied = _chunk_symbol_streams(ds, m, sl)
        for tag in SECTION_ORDER:
            ids, syms = streams[tag]
            encoders[tag].encode_stream(tables[tag], ids.tolist(), syms.tolist())

        occ_ids, occ_syms = streams[TAG_OCC]
        occ_bits = flat.occ_cost[occ_ids, occ_syms.astype(np.int64)].reshape(occupied.shape)
        ideal_lv_tag[:, 0] += occ_bits.sum(axis=(0, 2))

        strip_ids, strip_syms = streams[TAG_STRIP]
        strip_bits = _gather_ragged(flat.strip_cost, strip_ids, strip_syms)
        ideal_lv_tag[:, 1] += np.bincount(hit_lv, weights=strip_bits, minlength=N_LAYER_VIEWS)

        adc_ids, adc_syms = streams[TAG_ADC]
        adc_bits = _gather_ragged(flat.adc_cost, adc_ids, adc_syms)
        adc_lv = np.repeat(hit_lv, 2)
        ideal_lv_tag[:, 2] += np.bincount(adc_lv, weights=adc_bits, minlength=N_LAYER_VIEWS)

        kin_ids, kin_syms = streams[TAG_KIN]
        ideal_kin += float(flat.kin_cost[kin_ids, kin_syms].sum())

    sections = {tag: encoders[tag].finish() for tag in SECTION_ORDER}
    account = CodelengthAccount(
        n_events=n,
        ideal_lv_tag=ideal_lv_tag,
        ideal_kin=ideal_kin,
        achieved={tag: 8 * len(sections[tag]) for tag in SECTION_ORDER},
    )
    account.check_gaps()
    compressed = CompressedDataset(
        mode=m.mode, model_hash=m.model_hash, n_events=n, sections=sections
    )
    return compressed, account


def _gather_ragged(cost_list, ids, syms) -> np.ndarray:
    """Gather costs from a list of unequal-length cost vectors."""
    out = np.empty(len(ids))
    ids = np.asarray(ids)
    syms = np.asarray(syms)
    for t in np.unique(ids):
        mask = ids == t
        out[mask] = cost_list[t][syms[mask]]
    return out


def decode_dataset(cd: CompressedDataset, m: ModelBundle) -> Dataset:
    """Exact inverse of encode_dataset under the identical model."""
    if cd.model_hash != m.model_hash:
        raise CodecError(
            f"model hash mismatch: payload needs {cd.model_hash[:12]}..., "
            f"got model {m.model_hash[:12]}..."
        )
    if cd.mode != m.mode:
        raise CodecError(f"mode mismatch: payload {cd.mode}, model {m.mode}")
    n = cd.n_events
    flat = _FlatTables(m)
    decoders = {tag: RangeDecoder(cd.sections[tag]) for tag in SECTION_ORDER}

    kin_ids = np.broadcast_to(np.arange(12)[None, :], (n, 12)).reshape(-1)
    kin_syms = decoders[TAG_KIN].decode_stream(flat.kin, kin_ids.tolist())
    momenta = np.asarray(kin_syms, dtype=np.uint8).reshape(n, 12).view("<f4").copy()
    p = np.sqrt(np.einsum("ij,ij->i", momenta.astype(np.float64), momenta.astype(np.float64)))
    bins = m.bin_of(p)

    lv_grid = np.arange(N_LAYER_VIEWS)[None, :, None]
    slot_grid = np.arange(MAX_SLOTS)[None, None, :]
    occ_ids = ((bins[:, None, None] * N_LAYER_VIEWS + lv_grid) * MAX_SLOTS + slot_grid).reshape(-1)
    occ_syms = decoders[TAG_OCC].decode_stream(flat.occ, occ_ids.tolist())
    occupied = np.asarray(occ_syms, dtype=np.int8).reshape(n, N_LAYER_VIEWS, MAX_SLOTS).astype(bool)

    ei, li, si = np.nonzero(occupied)
    ctx = bins[ei] * N_LAYER_VIEWS + li
    strip_syms = decoders[TAG_STRIP].decode_stream(flat.strip, ctx.tolist())
    adc_ids = np.stack([ctx * 2, ctx * 2 + 1], axis=1).reshape(-1)
    adc_syms = np.asarray(decoders[TAG_ADC].decode_stream(flat.adc, adc_ids.tolist()), dtype=np.int64)
    adc_vals = (adc_syms[0::2] << 8) | adc_syms[1::2]

    strips = np.full((n, N_LAYER_VIEWS, MAX_SLOTS), PAD, dtype=np.int32)
    adcs = np.full((n, N_LAYER_VIEWS, MAX_SLOTS), PAD, dtype=np.int32)
    strips[ei, li, si] = np.asarray(strip_syms, dtype=np.int64) + 1
    adcs[ei, li, si] = adc_vals
    try:
        return Dataset(strips, adcs, momenta, provenance="decoded", validate=True)
    except ValueError as exc:
        raise CodecError(f"decoded payload violates event invariants: {exc}") from exc


@dataclass
class ClosureReport:
    equal: bool
    achieved_bits: int
    ideal_bits: float
    overhead_pct: float
    section_gaps: dict
    error: str | None = None


def closure_check(ds: Dataset, m: ModelBundle) -> ClosureReport:
    """encode -> decode -> bitwise comparison; reports, never raises."""
    from .events import canonical_serialize

    try:
        compressed, account = encode_dataset(ds, m)
        decoded = decode_dataset(CompressedDataset.from_bytes(compressed.to_bytes()), m)
        equal = canonical_serialize(ds) == canonical_serialize(decoded)
        error = None
    except (CodecError, FormatError, ValueError) as exc:
        return ClosureReport(
            equal=False, achieved_bits=0, ideal_bits=0.0, overhead_pct=float("nan"),
            section_gaps={}, error=str(exc),
        )
    ideal = account.ideal_total
    achieved = account.achieved_total
    overhead = (achieved - ideal) / ideal * 100.0 if ideal > 0 else float("inf")
    return ClosureReport(
        equal=equal,
        achieved_bits=achieved,
        ideal_bits=ideal,
        overhead_pct=overhead,
        section_gaps={tag: account.section_gap_bits(tag) for tag in SECTION_ORDER},
        error=error,
    )
