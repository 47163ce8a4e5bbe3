"""Event and dataset containers, validation, canonical serialization, splits.

A dataset is stored column-wise as numpy arrays: strip and ADC grids of
shape (N, 9, 20) int32, momenta of shape (N, 3) float32. Padding uses the
sentinel -999 in both grids simultaneously. Arrays are frozen after
construction, so datasets can be shared freely across threads.

The canonical byte format is the common, deterministic serialization used
for compression-ratio comparisons and content hashing:

    magic b"EVCAN001" | N u64 LE | per event:
        strips 9x20 i32 LE | adcs 9x20 i32 LE | momentum 3x f32 LE
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import ADC_MAX, MAX_SLOTS, N_LAYER_VIEWS, N_STRIPS, PAD

CANONICAL_MAGIC = b"EVCAN001"

_EVENT_DTYPE = np.dtype(
    [
        ("strips", "<i4", (N_LAYER_VIEWS, MAX_SLOTS)),
        ("adcs", "<i4", (N_LAYER_VIEWS, MAX_SLOTS)),
        ("momentum", "<f4", (3,)),
    ]
)

EVENT_NBYTES = _EVENT_DTYPE.itemsize  # 1452


class FormatError(ValueError):
    """Raised for unreadable or corrupt serialized payloads."""


class InvariantError(ValueError):
    """Raised when data violates the event invariants."""


@dataclass(frozen=True)
class Violation:
    layer_view: int
    slot: int
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        lines = [
            f"(lv={v.layer_view}, slot={v.slot}) {v.rule}: {v.detail}"
            for v in self.violations
        ]
        return f"{len(self.violations)} violation(s): " + "; ".join(lines[:10])


@dataclass(frozen=True)
class Event:
    """One detector event: 9x20 strip/ADC grids plus a momentum 3-vector."""

    strips: np.ndarray
    adcs: np.ndarray
    momentum: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "strips", _frozen(self.strips, np.int32, (N_LAYER_VIEWS, MAX_SLOTS)))
        object.__setattr__(self, "adcs", _frozen(self.adcs, np.int32, (N_LAYER_VIEWS, MAX_SLOTS)))
        object.__setattr__(self, "momentum", _frozen(self.momentum, np.float32, (3,)))

    @property
    def p_mag(self) -> float:
        m = self.momentum.astype(np.float64)
        return float(np.sqrt(np.dot(m, m)))


def _frozen(arr: np.ndarray, dtype, shape) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    if out is arr and arr.flags.writeable:
        out = arr.copy()  # do not freeze a caller-owned array in place
    if out.flags.writeable:
        out.setflags(write=False)
    return out


class Dataset:
    """Ordered, immutable collection of events with a provenance tag."""

    __slots__ = ("strips", "adcs", "momenta", "provenance")

    def __init__(
        self,
        strips: np.ndarray,
        adcs: np.ndarray,
        momenta: np.ndarray,
        provenance: str = "",
        validate: bool = True,
    ) -> None:
        strips = np.ascontiguousarray(strips, dtype=np.int32)
        adcs = np.ascontiguousarray(adcs, dtype=np.int32)
        momenta = np.ascontiguousarray(momenta, dtype=np.float32)
        n = strips.shape[0]
        if strips.shape != (n, N_LAYER_VIEWS, MAX_SLOTS) or adcs.shape != strips.shape:
            raise ValueError("strip/adc grids must have shape (N, 9, 20)")
        if momenta.shape != (n, 3):
            raise ValueError("momenta must have shape (N, 3)")
        if n < 1:
            raise InvariantError("dataset must contain at least one event")
        for a in (strips, adcs, momenta):
            a.setflags(write=False)
        self.strips = strips
        self.adcs = adcs
        self.momenta = momenta
        self.provenance = provenance
        if validate:
            report = validate_dataset(self)
            if not report.ok:
                raise InvariantError(f"invalid dataset: {report}")

    def __len__(self) -> int:
        return self.strips.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.strips, other.strips)
            and np.array_equal(self.adcs, other.adcs)
            and np.array_equal(
                self.momenta.view(np.uint32), other.momenta.view(np.uint32)
            )
        )

    def event(self, i: int) -> Event:
        return Event(self.strips[i], self.adcs[i], self.momenta[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self.event(i)

    def take(self, indices: np.ndarray, provenance: str | None = None) -> "Dataset":
        return Dataset(
            self.strips[indices],
            self.adcs[indices],
            self.momenta[indices],
            provenance=provenance if provenance is not None else self.provenance,
            validate=False,
        )

    @property
    def occupied(self) -> np.ndarray:
        """(N, 9, 20) boolean mask of occupied hit slots."""
        return self.strips != PAD

    @property
    def p_mags(self) -> np.ndarray:
        m = self.momenta.astype(np.float64)
        return np.sqrt(np.einsum("ij,ij->i", m, m))

    def content_hash(self) -> str:
        return hashlib.sha256(canonical_serialize(self, validate=False)).hexdigest()


def validate_event(event: Event) -> ValidationReport:
    """Check one event against the invariants; reports, never raises."""
    violations: list[Violation] = []
    strips, adcs = event.strips, event.adcs
    for lv in range(N_LAYER_VIEWS):
        for slot in range(MAX_SLOTS):
            s, a = int(strips[lv, slot]), int(adcs[lv, slot])
            if (s == PAD) != (a == PAD):
                violations.append(
                    Violation(lv, slot, "padding pairing", f"strip={s}, adc={a}")
                )
                continue
            if s == PAD:
                continue
            if not 1 <= s <= N_STRIPS[lv]:
                violations.append(
                    Violation(lv, slot, "strip range", f"strip={s} not in [1, {N_STRIPS[lv]}]")
                )
            if not 0 <= a <= ADC_MAX:
                violations.append(
                    Violation(lv, slot, "adc range", f"adc={a} not in [0, {ADC_MAX}]")
                )
    if not np.all(np.isfinite(event.momentum)):
        violations.append(Violation(-1, -1, "momentum finite", str(event.momentum)))
    return ValidationReport(ok=not violations, violations=tuple(violations))


def validate_dataset(ds: Dataset, max_violations: int = 20) -> ValidationReport:
    """Vectorized dataset validation; collects up to max_violations findings."""
    violations: list[Violation] = []
    strip_pad = ds.strips == PAD
    adc_pad = ds.adcs == PAD
    mismatch = strip_pad != adc_pad
    occ = ~strip_pad
    max_strip = np.array(N_STRIPS, dtype=np.int32)[None, :, None]
    bad_strip = occ & ((ds.strips < 1) | (ds.strips > max_strip))
    bad_adc = occ & ~strip_pad & ((ds.adcs < 0) | (ds.adcs > ADC_MAX)) & ~mismatch
    for mask, rule in ((mismatch, "padding pairing"), (bad_strip, "strip range"), (bad_adc, "adc range")):
        if mask.any():
            for e, lv, slot in zip(*np.nonzero(mask)):
                violations.append(
                    Violation(
                        int(lv),
                        int(slot),
                        rule,
                        f"event {e}: strip={ds.strips[e, lv, slot]}, adc={ds.adcs[e, lv, slot]}",
                    )
                )
                if len(violations) >= max_violations:
                    break
        if len(violations) >= max_violations:
            break
    if not np.all(np.isfinite(ds.momenta)):
        bad = np.nonzero(~np.isfinite(ds.momenta).all(axis=1))[0]
        violations.append(
            Violation(-1, -1, "momentum finite", f"{bad.size} event(s), first at {bad[0]}")
        )
    return ValidationReport(ok=not violations, violations=tuple(violations))


def canonical_serialize(ds: Dataset, validate: bool = True) -> bytes:
    """Deterministic byte form of a dataset; refuses invalid input."""
    if validate:
        report = validate_dataset(ds)
        if not report.ok:
            raise InvariantError(f"refusing to serialize invalid dataset: {report}")
    n = len(ds)
    rec = np.empty(n, dtype=_EVENT_DTYPE)
    rec["strips"] = ds.strips
    rec["adcs"] = ds.adcs
    rec["momentum"] = ds.momenta
    return CANONICAL_MAGIC + n.to_bytes(8, "little") + rec.tobytes()


def canonical_deserialize(payload: bytes, provenance: str = "") -> Dataset:
    """Exact inverse of canonical_serialize; validates every event."""
    if payload[:8] != CANONICAL_MAGIC:
        raise FormatError("unrecognized format: bad magic")
    if len(payload) < 16:
        raise FormatError("truncated header")
    n = int.from_bytes(payload[8:16], "little")
    if n < 1:
        raise FormatError("event count must be >= 1")
    body = payload[16:]
    if len(body) != n * EVENT_NBYTES:
        k = len(body) // EVENT_NBYTES
        raise FormatError(
            f"truncated at event {k}: expected {n * EVENT_NBYTES} body bytes, got {len(body)}"
        )
    rec = np.frombuffer(body, dtype=_EVENT_DTYPE)
    ds = Dataset(
        rec["strips"].copy(),
        rec["adcs"].copy(),
        rec["momentum"].copy(),
        provenance=provenance,
        validate=False,
    )
    report = validate_dataset(ds)
    if not report.ok:
        raise InvariantError(f"deserialized payload violates invariants: {report}")
    return ds


def split_dataset(ds: Dataset, seed: int, train_fraction: float) -> tuple[Dataset, Dataset]:
    """Disjoint seeded partition into (train, test) of sizes (floor(N*f), rest)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(ds)
    if n < 2:
        raise ValueError("cannot split a dataset with fewer than 2 events")
    n_train = int(np.floor(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split of {n} events at fraction {train_fraction} leaves an empty side")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    tag = ds.provenance
    train = ds.take(perm[:n_train], provenance=f"{tag}/A(seed={seed})")
    test = ds.take(perm[n_train:], provenance=f"{tag}/B(seed={seed})")
    return train, test


def write_evcan(ds: Dataset, path) -> None:
    with open(path, "wb") as f:
        f.write(canonical_serialize(ds))


def read_evcan(path, provenance: str | None = None) -> Dataset:
    with open(path, "rb") as f:
        payload = f.read()
    return canonical_deserialize(payload, provenance=provenance or str(path))
