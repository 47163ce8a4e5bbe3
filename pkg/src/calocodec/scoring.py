"""Vectorized per-event ideal codelengths under a set of cost tables.

This is the no-coder scoring path: it gathers -log2 q per symbol from
dense cost arrays and never touches the range coder. The encoder keeps its
own accounting over the emitted symbol sequence, so the two paths check
each other.

Cost tables are dense float64 arrays with a leading momentum-bin axis
(size 1 for unconditional models). The same layout also carries exact
generator probabilities, which is how oracle reference codelengths are
computed with identical gather code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import Dataset
from .geometry import MAX_SLOTS, N_LAYER_VIEWS, N_STRIPS

CHUNK = 1 << 16

_LV_IDX = np.arange(N_LAYER_VIEWS)[None, :, None]
_SLOT_IDX = np.arange(MAX_SLOTS)[None, None, :]


@dataclass(frozen=True)
class CostTables:
    """Per-symbol costs in bits; strip axis padded with +inf past alphabet."""

    occ: np.ndarray  # (nb, 9, 20, 2)
    strip: np.ndarray  # (nb, 9, max_strips)
    adc_hi: np.ndarray  # (nb, 9, 256)
    adc_lo: np.ndarray  # (nb, 9, 256)
    kin: np.ndarray | None  # (12, 256) or None to skip the kinematics payload
    edges: np.ndarray | None  # momentum bin edges; None -> single bin

    @property
    def n_bins(self) -> int:
        return self.occ.shape[0]

    def bin_of(self, p_mag: np.ndarray) -> np.ndarray:
        if self.edges is None:
            return np.zeros(len(p_mag), dtype=np.int64)
        idx = np.searchsorted(self.edges, p_mag, side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1).astype(np.int64)


def cost_tables_from_bundle(m) -> CostTables:
    """Dense -log2(f/65536) arrays for a fitted ModelBundle."""
    nb = m.n_bins
    max_strips = max(N_STRIPS)
    occ = np.empty((nb, N_LAYER_VIEWS, MAX_SLOTS, 2))
    strip = np.full((nb, N_LAYER_VIEWS, max_strips), np.inf)
    adc_hi = np.empty((nb, N_LAYER_VIEWS, 256))
    adc_lo = np.empty((nb, N_LAYER_VIEWS, 256))
    for b in range(nb):
        for lv in range(N_LAYER_VIEWS):
            for slot in range(MAX_SLOTS):
                occ[b, lv, slot] = m.occ[b][lv][slot].cost_bits
            strip[b, lv, : N_STRIPS[lv]] = m.strip[b][lv].cost_bits
            adc_hi[b, lv] = m.adc_hi[b][lv].cost_bits
            adc_lo[b, lv] = m.adc_lo[b][lv].cost_bits
    kin = np.stack([m.kin[pos].cost_bits for pos in range(12)])
    edges = None if m.binning is None else np.asarray(m.binning.edges, dtype=np.float64)
    return CostTables(occ=occ, strip=strip, adc_hi=adc_hi, adc_lo=adc_lo, kin=kin, edges=edges)


@dataclass
class ComponentBits:
    """Ideal bits per event and per (layer-view, tag) totals for a dataset."""

    occ_ev: np.ndarray  # (N,)
    strip_ev: np.ndarray  # (N,)
    adc_ev: np.ndarray  # (N,)
    kin_ev: np.ndarray  # (N,)
    lv_tag_sums: np.ndarray  # (9, 3) summed bits: columns OCC, STRIP, ADC

    @property
    def hits_ev(self) -> np.ndarray:
        return self.occ_ev + self.strip_ev + self.adc_ev

    @property
    def total_ev(self) -> np.ndarray:
        return self.hits_ev + self.kin_ev

    @property
    def n_events(self) -> int:
        return self.occ_ev.shape[0]


def event_component_bits(ds: Dataset, costs: CostTables) -> ComponentBits:
    """Gather per-event ideal codelengths, chunked to bound memory."""
    n = len(ds)
    occ_ev = np.zeros(n)
    strip_ev = np.zeros(n)
    adc_ev = np.zeros(n)
    kin_ev = np.zeros(n)
    lv_tag = np.zeros((N_LAYER_VIEWS, 3))
    p_mags = ds.p_mags
    for lo in range(0, n, CHUNK):
        hi = min(lo + CHUNK, n)
        sl = slice(lo, hi)
        bins = costs.bin_of(p_mags[sl])
        occupied = ds.occupied[sl]
        occ_bits = costs.occ[bins[:, None, None], _LV_IDX, _SLOT_IDX, occupied.astype(np.int8)]
        occ_ev[sl] = occ_bits.sum(axis=(1, 2))
        lv_tag[:, 0] += occ_bits.sum(axis=(0, 2))

        ei, li, si = np.nonzero(occupied)
        be = bins[ei]
        strips = ds.strips[sl][ei, li, si].astype(np.int64) - 1
        adcs = ds.adcs[sl][ei, li, si].astype(np.int64)
        strip_bits = costs.strip[be, li, strips]
        adc_bits = costs.adc_hi[be, li, adcs >> 8] + costs.adc_lo[be, li, adcs & 0xFF]
        flat_ev = np.bincount(ei, weights=strip_bits, minlength=hi - lo)
        strip_ev[sl] = flat_ev
        adc_ev[sl] = np.bincount(ei, weights=adc_bits, minlength=hi - lo)
        lv_tag[:, 1] += np.bincount(li, weights=strip_bits, minlength=N_LAYER_VIEWS)
        lv_tag[:, 2] += np.bincount(li, weights=adc_bits, minlength=N_LAYER_VIEWS)

        if costs.kin is not None:
            kin_bytes = (
                np.ascontiguousarray(ds.momenta[sl].astype("<f4")).view(np.uint8).reshape(hi - lo, 12)
            )
            kin_ev[sl] = costs.kin[np.arange(12)[None, :], kin_bytes].sum(axis=1)
    return ComponentBits(occ_ev=occ_ev, strip_ev=strip_ev, adc_ev=adc_ev, kin_ev=kin_ev, lv_tag_sums=lv_tag)
