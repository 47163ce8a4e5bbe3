"""Entropy, cross-entropy, and bit-budget audits of fitted models.

Cross-entropies here are computed by the scoring path (table lookups, no
coder); encoder accounts provide the same sums through an independent
code path, and the audit compares both against achieved payload bits.

H(p) is never claimed for fitted models: it is unobservable. On synthetic
data the generator oracle supplies exact reference codelengths, which is
what the KL estimates compare against.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .codec import CodelengthAccount, encode_dataset
from .events import Dataset
from .geometry import LAYER_VIEWS, MAX_SLOTS, N_LAYER_VIEWS, N_STRIPS
from .model import ModelBundle
from .scoring import ComponentBits, cost_tables_from_bundle, event_component_bits

COMPONENTS = ("hits", "kinematics", "total")


def cross_entropy(ds: Dataset, m: ModelBundle) -> dict:
    """Mean ideal bits per event, split by component (no coder involved)."""
    bits = event_component_bits(ds, cost_tables_from_bundle(m))
    n = len(ds)
    return {
        "hits": float(bits.hits_ev.sum()) / n,
        "kinematics": float(bits.kin_ev.sum()) / n,
        "total": float(bits.total_ev.sum()) / n,
    }


def per_event_bits(ds: Dataset, m: ModelBundle) -> ComponentBits:
    """Full per-event ideal-bit breakdown (workhorse for the fidelity tests)."""
    return event_component_bits(ds, cost_tables_from_bundle(m))


# --- model entropy ---------------------------------------------------------


def _table_entropies(m: ModelBundle):
    nb = m.n_bins
    occ_h = np.empty((nb, N_LAYER_VIEWS, MAX_SLOTS))
    strip_h = np.empty((nb, N_LAYER_VIEWS))
    adc_h = np.empty((nb, N_LAYER_VIEWS))
    for b in range(nb):
        for lv in range(N_LAYER_VIEWS):
            for slot in range(MAX_SLOTS):
                occ_h[b, lv, slot] = m.occ[b][lv][slot].entropy_bits
            strip_h[b, lv] = m.strip[b][lv].entropy_bits
            adc_h[b, lv] = m.adc_hi[b][lv].entropy_bits + m.adc_lo[b][lv].entropy_bits
    kin_h = sum(t.entropy_bits for t in m.kin)
    return occ_h, strip_h, adc_h, kin_h


def context_weights(m: ModelBundle, ds: Dataset | None = None):
    """Bin visit probabilities and per-(bin, lv) mean hit multiplicities.

    With ds given, weights come from that dataset; otherwise from the
    training metadata stored in the bundle.
    """
    if ds is None:
        counts = m.train_meta.bin_counts.astype(np.float64)
        occ_mean = m.train_meta.occ_mean
        total = counts.sum()
        if total <= 0:
            raise ValueError("bundle carries no training context weights")
        return counts / total, occ_mean
    bins = m.bin_of(ds.p_mags)
    counts = np.bincount(bins, minlength=m.n_bins).astype(np.float64)
    occ_sum = np.zeros((m.n_bins, N_LAYER_VIEWS))
    hit_counts = ds.occupied.sum(axis=2).astype(np.float64)
    np.add.at(occ_sum, bins, hit_counts)
    with np.errstate(invalid="ignore"):
        occ_mean = np.where(counts[:, None] > 0, occ_sum / np.maximum(counts[:, None], 1.0), 0.0)
    return counts / counts.sum(), occ_mean


def model_entropy(m: ModelBundle, weights_from: Dataset | None = None) -> dict:
    """H(q) in bits/event: context-weighted sum of table entropies.

    Occupancy contexts are visited once per slot per event; strip and ADC
    contexts are visited once per hit, so their weight is the mean hit
    multiplicity of the weighting dataset (training data by default).
    """
    p_bin, occ_mean = context_weights(m, weights_from)
    occ_h, strip_h, adc_h, kin_h = _table_entropies(m)
    hits = float(
        np.einsum("b,blv->", p_bin, occ_h)
        + np.einsum("b,bl,bl->", p_bin, occ_mean, strip_h + adc_h)
    )
    return {"hits": hits, "kinematics": float(kin_h), "total": hits + float(kin_h)}


def model_entropy_bruteforce(m: ModelBundle, weights_from: Dataset | None = None) -> dict:
    """Independent slow path: enumerate every table symbol explicitly."""
    from .rangecoder import TOTAL
    import math

    p_bin, occ_mean = context_weights(m, weights_from)

    def table_h(table):
        h = 0.0
        for f in table.freqs:
            p = f / TOTAL
            h -= p * math.log2(p)
        return h

    hits = 0.0
    for b in range(m.n_bins):
        if p_bin[b] == 0:
            continue
        for lv in range(N_LAYER_VIEWS):
            for slot in range(MAX_SLOTS):
                hits += p_bin[b] * table_h(m.occ[b][lv][slot])
            per_hit = table_h(m.strip[b][lv]) + table_h(m.adc_hi[b][lv]) + table_h(m.adc_lo[b][lv])
            hits += p_bin[b] * occ_mean[b, lv] * per_hit
    kin = sum(table_h(t) for t in m.kin)
    return {"hits": hits, "kinematics": kin, "total": hits + kin}


# --- oracle KL -------------------------------------------------------------


@dataclass(frozen=True)
class KlEstimate:
    kl_bits: float  # mean(q bits) - mean(reference bits), hits component
    se_bits: float  # paired standard error of the difference
    n_events: int


def kl_vs_oracle(ds: Dataset, m: ModelBundle, oracle, reference: str = "event") -> KlEstimate:
    """Excess of the model's hit codelength over an exact reference law.

    reference="event": the generator's exact per-event law given the
    stored kinematics. The estimate converges to the model KL plus the
    information the factorization cannot express; it is non-negative in
    expectation.

    reference="family": the exact symbol marginals within the model's own
    context structure. A fit on unbounded data converges to this up to CDF
    quantization, so injected oracle tables sit at the smoothing floor.
    """
    q_bits = per_event_bits(ds, m).hits_ev
    if reference == "event":
        p_bits = oracle.hit_nll_bits(ds)
    elif reference == "family":
        p_bits = oracle.family_nll_bits(ds, m.binning)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    diff = q_bits - p_bits
    n = len(diff)
    return KlEstimate(
        kl_bits=float(diff.mean()),
        se_bits=float(diff.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        n_events=n,
    )


# --- audit and budget tables -------------------------------------------------


@dataclass
class EntropyAudit:
    """Rows (split x component) of H(q), H(p,q), L, overhead in bits/event."""

    rows: list  # dicts: split, component, h_q, h_pq, l_bits, overhead_pct

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["split", "component", "h_q", "h_pq", "l_bits", "overhead_pct"])
        for r in self.rows:
            writer.writerow(
                [r["split"], r["component"], f"{r['h_q']:.5f}", f"{r['h_pq']:.5f}",
                 f"{r['l_bits']:.5f}", f"{r['overhead_pct']:.3e}"]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'split':<8}{'component':<12}{'H(q)':>12}{'H(p,q)':>12}{'L':>12}{'overhead %':>14}"]
        for r in self.rows:
            lines.append(
                f"{r['split']:<8}{r['component']:<12}{r['h_q']:>12.5f}{r['h_pq']:>12.5f}"
                f"{r['l_bits']:>12.5f}{r['overhead_pct']:>14.3e}"
            )
        return "\n".join(lines) + "\n"

    def row(self, split: str, component: str) -> dict:
        for r in self.rows:
            if r["split"] == split and r["component"] == component:
                return r
        raise KeyError((split, component))


def entropy_audit(train: Dataset, test: Dataset, m: ModelBundle) -> EntropyAudit:
    """Tables II/III shape: per split and component, H(q), H(p,q), L, overhead.

    H(q) uses the evaluation split's context weights, so the two splits
    report different model entropies when their kinematics differ.
    """
    rows = []
    for split_name, ds in (("train", train), ("test", test)):
        ce = cross_entropy(ds, m)
        hq = model_entropy(m, weights_from=ds)
        _, account = encode_dataset(ds, m)
        n = len(ds)
        achieved = {
            "hits": sum(account.achieved[t] for t in ("OCC", "STRIP", "ADC")) / n,
            "kinematics": account.achieved["KIN"] / n,
            "total": account.achieved_total / n,
        }
        for comp in COMPONENTS:
            l_bits = achieved[comp]
            h_pq = ce[comp]
            rows.append(
                {
                    "split": split_name,
                    "component": comp,
                    "h_q": hq[comp],
                    "h_pq": h_pq,
                    "l_bits": l_bits,
                    "overhead_pct": (l_bits - h_pq) / h_pq * 100.0 if h_pq > 0 else 0.0,
                }
            )
    return EntropyAudit(rows=rows)


@dataclass
class BitBudget:
    """Table IV shape: per layer-view occ/strip/adc ideal bits per event."""

    lv_rows: np.ndarray  # (9, 3) bits/event
    mean_multiplicity: np.ndarray  # (9,)
    kin_bits: float
    n_events: int

    @property
    def lv_sums(self) -> np.ndarray:
        return self.lv_rows.sum(axis=1)

    @property
    def hits_total(self) -> float:
        return float(self.lv_rows.sum())

    @property
    def grand_total(self) -> float:
        return self.hits_total + self.kin_bits

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer_view", "occ_bits", "strip_bits", "adc_bits", "sum_bits", "mean_hits"])
        for lv in range(N_LAYER_VIEWS):
            writer.writerow(
                [LAYER_VIEWS[lv]]
                + [f"{self.lv_rows[lv, k]:.5f}" for k in range(3)]
                + [f"{self.lv_sums[lv]:.5f}", f"{self.mean_multiplicity[lv]:.5f}"]
            )
        writer.writerow(["hits_total", "", "", "", f"{self.hits_total:.5f}", ""])
        writer.writerow(["kinematics", "", "", "", f"{self.kin_bits:.5f}", ""])
        writer.writerow(["total", "", "", "", f"{self.grand_total:.5f}", ""])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'LV':<10}{'Occ.':>10}{'Strip':>10}{'ADC':>10}{'Sum':>11}{'<N_hit>':>10}"]
        for lv in range(N_LAYER_VIEWS):
            r = self.lv_rows[lv]
            lines.append(
                f"{LAYER_VIEWS[lv]:<10}{r[0]:>10.2f}{r[1]:>10.2f}{r[2]:>10.2f}"
                f"{self.lv_sums[lv]:>11.2f}{self.mean_multiplicity[lv]:>10.2f}"
            )
        lines.append(f"{'Hits total':<10}{'':>30}{self.hits_total:>11.2f}")
        lines.append(f"{'Kinematics':<10}{'':>30}{self.kin_bits:>11.2f}")
        lines.append(f"{'Total':<10}{'':>30}{self.grand_total:>11.2f}")
        return "\n".join(lines) + "\n"


def bit_budget(account: CodelengthAccount, ds: Dataset) -> BitBudget:
    """Ideal-bit budget per layer-view from an encoder account."""
    n = account.n_events
    return BitBudget(
        lv_rows=account.ideal_lv_tag / n,
        mean_multiplicity=ds.occupied.sum(axis=2).mean(axis=0),
        kin_bits=account.ideal_kin / n,
        n_events=n,
    )
