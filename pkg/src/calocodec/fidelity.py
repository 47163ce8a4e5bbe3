"""Codelength-based two-sample fidelity tests and the perturbation scan.

The statistic is the mean excess codelength between a candidate sample and
an independent baseline, both scored under one fixed reference model.
Replicates come from a blocked design (seeded shuffle, contiguous equal
blocks, remainder truncated); significance comes from an empirically
calibrated null built out of real-vs-real splits of a disjoint pool,
p = (1 + #{t_null >= t_obs}) / (R + 1), one-sided.

Block codelengths default to exact per-event ideal bits. Termination
overhead is an additive per-block constant bounded by 4 * 64 bits, which
cancels in the contrast; `mode="achieved"` runs the real coder per block
instead, for audits of that equivalence.

The kernel baseline mirrors the same blocked machinery via the contrast
d_k = MMD^2(C_k, B2_k) - MMD^2(B1_k, B2_k) on a 57-dimensional feature
summary (per layer-view occupancy fraction, ADC mean/sd/max, strip
mean/sd, plus the momentum components).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .events import Dataset
from .geometry import ADC_MAX, MAX_SLOTS, N_LAYER_VIEWS, PAD
from .model import ModelBundle
from .metrics import per_event_bits

N_FEATURES = 57


# --- perturbation -----------------------------------------------------------


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str = "ADC_SCALE"
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.kind != "ADC_SCALE":
            raise ValueError(f"unsupported perturbation kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


def apply_adc_scale(ds: Dataset, eps: float) -> Dataset:
    """Scale occupied ADCs by (1 + eps), round half away from zero, clip.

    Strips, padding, and kinematics are untouched; eps = 0 is the identity.
    Deterministic: the scaled value fits float64 exactly below 2**17.
    """
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    occupied = ds.occupied
    scaled = np.floor(ds.adcs * (1.0 + eps) + 0.5)  # ADCs are non-negative
    adcs = np.where(occupied, np.clip(scaled, 0, ADC_MAX), PAD).astype(np.int32)
    return Dataset(
        ds.strips, adcs, ds.momenta,
        provenance=f"{ds.provenance}/adc_scale(eps={eps:g})",
        validate=False,
    )


def changed_fraction(ds: Dataset, ds_pert: Dataset) -> float:
    """Fraction of occupied ADC entries that differ between the datasets."""
    if ds.strips.shape != ds_pert.strips.shape:
        raise ValueError("datasets must have identical shape")
    occ = ds.occupied
    if not np.array_equal(occ, ds_pert.occupied):
        raise ValueError("datasets must share their padding pattern")
    total = int(occ.sum())
    if total == 0:
        return 0.0
    return float((ds.adcs[occ] != ds_pert.adcs[occ]).sum() / total)


# --- blocked design ---------------------------------------------------------


@dataclass(frozen=True)
class BlockPlan:
    """Seeded partition of n events into k equal disjoint blocks."""

    n_events: int
    k: int
    seed: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("need at least one block")
        if self.k > self.n_events:
            raise ValueError(f"cannot split {self.n_events} events into {self.k} blocks")

    @property
    def block_size(self) -> int:
        return self.n_events // self.k

    def blocks(self) -> np.ndarray:
        """(k, block_size) event indices; remainder events are dropped."""
        perm = np.random.Generator(np.random.PCG64(self.seed)).permutation(self.n_events)
        b = self.block_size
        return perm[: self.k * b].reshape(self.k, b)


def block_means(values: np.ndarray, plan: BlockPlan) -> np.ndarray:
    """(k,) means of a per-event array over the plan's blocks."""
    return values[plan.blocks()].mean(axis=1)


def blocked_codelengths(
    ds: Dataset, m: ModelBundle, plan: BlockPlan, mode: str = "ideal"
) -> np.ndarray:
    """K per-block mean codelengths (bits/event) under the fixed model.

    mode="ideal" sums exact -log2 q per event; mode="achieved" encodes
    each block separately and divides sealed payload bits by block size.
    """
    if plan.n_events != len(ds):
        raise ValueError("plan does not match the dataset size")
    if mode == "ideal":
        return block_means(per_event_bits(ds, m).total_ev, plan)
    if mode == "achieved":
        from .codec import encode_dataset

        out = np.empty(plan.k)
        for i, idx in enumerate(plan.blocks()):
            _, account = encode_dataset(ds.take(idx), m)
            out[i] = account.achieved_total / idx.size
        return out
    raise ValueError(f"unknown mode {mode!r}")


# --- test statistic ---------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    delta_l: float
    se: float
    t: float
    p_empirical: float | None = None
    null_size: int | None = None
    degenerate_se: bool = False

    def with_p(self, p: float, null_size: int) -> "TestResult":
        return TestResult(self.delta_l, self.se, self.t, p, null_size, self.degenerate_se)


def excess_test(c_blocks: np.ndarray, b_blocks: np.ndarray) -> TestResult:
    """Welch-type contrast of blockwise codelengths (no p-value yet)."""
    c_blocks = np.asarray(c_blocks, dtype=np.float64)
    b_blocks = np.asarray(b_blocks, dtype=np.float64)
    k = c_blocks.size
    if k != b_blocks.size:
        raise ValueError("block counts must match")
    if k < 2:
        raise ValueError("need at least two blocks per sample")
    delta = float(c_blocks.mean() - b_blocks.mean())
    var = (c_blocks.var(ddof=1) + b_blocks.var(ddof=1)) / k
    se = math.sqrt(var)
    if se == 0.0:
        t = 0.0 if delta == 0.0 else math.copysign(math.inf, delta)
        return TestResult(delta, 0.0, t, degenerate_se=True)
    return TestResult(delta, se, delta / se)


def p_value(t_obs: float, null_ts: np.ndarray) -> float:
    """One-sided empirical p with the 1/(R+1) floor."""
    null_ts = np.asarray(null_ts)
    r = null_ts.size
    return float((1 + int((null_ts >= t_obs).sum())) / (r + 1))


def _null_ts_from_bits(
    pool_bits: np.ndarray, k: int, block_size: int, r: int, seed: int
) -> np.ndarray:
    """R real-vs-real t values: split the pool into two halves, block, test."""
    need = 2 * k * block_size
    if pool_bits.size < need:
        raise ValueError(
            f"pool of {pool_bits.size} events is too small for 2 x {k} blocks of {block_size}"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty(r)
    for i in range(r):
        perm = rng.permutation(pool_bits.size)[:need]
        half = pool_bits[perm].reshape(2, k, block_size).mean(axis=2)
        c_means, b_means = half[0], half[1]
        delta = c_means.mean() - b_means.mean()
        var = (c_means.var(ddof=1) + b_means.var(ddof=1)) / k
        out[i] = delta / math.sqrt(var) if var > 0 else 0.0
    return out


def calibrate_null(
    baseline_pool: Dataset,
    m: ModelBundle,
    k: int,
    r: int,
    seed: int,
    block_size: int | None = None,
    mode: str = "ideal",
) -> np.ndarray:
    """Empirical null of t from real-vs-real resamples of a disjoint pool.

    With r = 1500 the attainable p floor is 1/1501 = 6.662e-4.
    """
    if r < 99:
        raise ValueError("need at least 99 resamples for a usable null")
    if mode != "ideal":
        raise ValueError("null calibration runs on ideal per-event bits")
    bits = per_event_bits(baseline_pool, m).total_ev
    if block_size is None:
        block_size = (len(baseline_pool) // 2) // k
    if block_size < 1:
        raise ValueError("pool too small for the requested block count")
    return _null_ts_from_bits(bits, k, block_size, r, seed)


def fidelity_gap(
    real_ref: Dataset,
    synth: Dataset,
    m: ModelBundle,
    k: int = 10,
    seed: int = 0,
    null_ts: np.ndarray | None = None,
) -> TestResult:
    """Blocked synthetic-vs-real excess codelength under a real-fitted model."""
    plan_s = BlockPlan(len(synth), k, seed)
    plan_r = BlockPlan(len(real_ref), k, seed + 1)
    s_blocks = blocked_codelengths(synth, m, plan_s)
    r_blocks = blocked_codelengths(real_ref, m, plan_r)
    result = excess_test(s_blocks, r_blocks)
    if null_ts is not None:
        result = result.with_p(p_value(result.t, null_ts), null_ts.size)
    return result


# --- feature map and MMD ----------------------------------------------------


def extract_features_dataset(ds: Dataset) -> np.ndarray:
    """(N, 57) per-event summary: 6 stats per layer-view plus momentum.

    Per layer-view: occupancy fraction, ADC mean/sd/max and strip mean/sd
    over occupied slots (population sd; all five zero when the layer-view
    is empty). Slot order does not matter.
    """
    occ = ds.occupied
    counts = occ.sum(axis=2)
    safe = np.maximum(counts, 1)
    adc = np.where(occ, ds.adcs, 0).astype(np.float64)
    strips = np.where(occ, ds.strips, 0).astype(np.float64)

    adc_mean = adc.sum(axis=2) / safe
    adc_sq = (adc * adc).sum(axis=2) / safe
    adc_sd = np.sqrt(np.clip(adc_sq - adc_mean**2, 0.0, None))
    adc_max = np.where(occ, ds.adcs, -1).max(axis=2).astype(np.float64)
    strip_mean = strips.sum(axis=2) / safe
    strip_sq = (strips * strips).sum(axis=2) / safe
    strip_sd = np.sqrt(np.clip(strip_sq - strip_mean**2, 0.0, None))

    empty = counts == 0
    for arr in (adc_mean, adc_sd, adc_max, strip_mean, strip_sd):
        arr[empty] = 0.0

    per_lv = np.stack(
        [counts / MAX_SLOTS, adc_mean, adc_sd, adc_max, strip_mean, strip_sd], axis=2
    )  # (N, 9, 6)
    return np.concatenate(
        [per_lv.reshape(len(ds), 6 * N_LAYER_VIEWS), ds.momenta.astype(np.float64)], axis=1
    )


def extract_features(event) -> np.ndarray:
    """57-vector for a single event."""
    ds = Dataset(
        event.strips[None], event.adcs[None], event.momentum[None], validate=False
    )
    return extract_features_dataset(ds)[0]


def median_heuristic_bandwidth(
    features: np.ndarray, max_points: int = 1000, seed: int = 0
) -> float:
    """Median pairwise Euclidean distance on a seeded subsample."""
    n = features.shape[0]
    if n > max_points:
        idx = np.random.Generator(np.random.PCG64(seed)).choice(n, size=max_points, replace=False)
        features = features[idx]
    med = float(np.median(pdist(features)))
    if med <= 0:
        raise ValueError("median pairwise distance is zero; features degenerate")
    return med


def mmd2_unbiased(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """U-statistic MMD^2 with a Gaussian RBF kernel exp(-d^2 / (2 sigma^2)).

    For equal sample sizes the paired cross diagonal is excluded, so
    mmd2_unbiased(x, x, s) is exactly zero up to float error.
    """
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("need at least two points per sample")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    gamma = 0.5 / bandwidth**2
    kxx = np.exp(-gamma * cdist(x, x, "sqeuclidean"))
    kyy = np.exp(-gamma * cdist(y, y, "sqeuclidean"))
    kxy = np.exp(-gamma * cdist(x, y, "sqeuclidean"))
    a = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    b = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    if n == m:
        c = (kxy.sum() - np.trace(kxy)) / (n * (n - 1))
    else:
        c = kxy.mean()
    return float(a + b - 2 * c)


def mmd_block_contrast(
    c_feats: np.ndarray,
    b1_feats: np.ndarray,
    b2_feats: np.ndarray,
    plans: tuple[BlockPlan, BlockPlan, BlockPlan],
    bandwidth: float,
) -> np.ndarray:
    """K blockwise contrasts MMD^2(C_k, B2_k) - MMD^2(B1_k, B2_k)."""
    plan_c, plan_b1, plan_b2 = plans
    if not plan_c.k == plan_b1.k == plan_b2.k:
        raise ValueError("plans must share the block count")
    blocks_c = plan_c.blocks()
    blocks_b1 = plan_b1.blocks()
    blocks_b2 = plan_b2.blocks()
    out = np.empty(plan_c.k)
    for k in range(plan_c.k):
        out[k] = mmd2_unbiased(c_feats[blocks_c[k]], b2_feats[blocks_b2[k]], bandwidth) - mmd2_unbiased(
            b1_feats[blocks_b1[k]], b2_feats[blocks_b2[k]], bandwidth
        )
    return out


class _MmdNullEngine:
    """Precomputed kernels for fast real-vs-real MMD contrast resampling.

    The pool is subsampled to 2*K*b points; X/Y halves are re-drawn by
    permutation, while the B2 blocks stay fixed, mirroring the observed
    contrast construction.
    """

    def __init__(
        self,
        pool_feats: np.ndarray,
        b2_feats: np.ndarray,
        plan_b2: BlockPlan,
        k: int,
        block_size: int,
        bandwidth: float,
        seed: int,
    ) -> None:
        need = 2 * k * block_size
        if pool_feats.shape[0] < need:
            raise ValueError(
                f"MMD null pool of {pool_feats.shape[0]} events is too small for {need}"
            )
        rng = np.random.Generator(np.random.PCG64(seed))
        subsample = rng.permutation(pool_feats.shape[0])[:need]
        self.pool = pool_feats[subsample]
        self.k = k
        self.b = block_size
        self.rng = rng
        gamma = 0.5 / bandwidth**2
        blocks_b2 = plan_b2.blocks()[:, :block_size]
        b2_sel = b2_feats[blocks_b2.reshape(-1)]
        self.k_pool_pool = np.exp(-gamma * cdist(self.pool, self.pool, "sqeuclidean")).astype(
            np.float32
        )
        self.k_pool_b2 = np.exp(-gamma * cdist(self.pool, b2_sel, "sqeuclidean")).astype(np.float32)
        k_b2 = np.exp(-gamma * cdist(b2_sel, b2_sel, "sqeuclidean"))
        self.b2_terms = np.empty(k)
        for j in range(k):
            sl = slice(j * block_size, (j + 1) * block_size)
            kb = k_b2[sl, sl]
            self.b2_terms[j] = (kb.sum() - np.trace(kb)) / (block_size * (block_size - 1))

    def _mmd_against_b2(self, idx: np.ndarray, j: int) -> float:
        b = self.b
        kxx = self.k_pool_pool[np.ix_(idx, idx)]
        a = (float(kxx.sum()) - float(np.trace(kxx))) / (b * (b - 1))
        cross = self.k_pool_b2[idx, j * b : (j + 1) * b]
        c = (float(cross.sum()) - float(np.trace(cross))) / (b * (b - 1))
        return a + self.b2_terms[j] - 2 * c

    def resample(self) -> np.ndarray:
        """One null draw: K contrasts from a fresh X/Y split of the pool."""
        perm = self.rng.permutation(self.pool.shape[0])
        k, b = self.k, self.b
        out = np.empty(k)
        for j in range(k):
            x_idx = perm[j * b : (j + 1) * b]
            y_idx = perm[(k + j) * b : (k + j + 1) * b]
            out[j] = self._mmd_against_b2(x_idx, j) - self._mmd_against_b2(y_idx, j)
        return out

    def null_ts(self, r: int) -> np.ndarray:
        out = np.empty(r)
        for i in range(r):
            d = self.resample()
            mean = d.mean()
            sd = d.std(ddof=1)
            out[i] = mean / (sd / math.sqrt(self.k)) if sd > 0 else 0.0
        return out


def mmd_test_from_contrasts(d_blocks: np.ndarray) -> TestResult:
    """One-sample t on the blockwise contrasts (baseline difference removed)."""
    d_blocks = np.asarray(d_blocks, dtype=np.float64)
    k = d_blocks.size
    mean = float(d_blocks.mean())
    sd = float(d_blocks.std(ddof=1))
    if sd == 0.0:
        t = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TestResult(mean, 0.0, t, degenerate_se=True)
    se = sd / math.sqrt(k)
    return TestResult(mean, se, mean / se)


# --- the scan ----------------------------------------------------------------


SCAN_COLUMNS = (
    "eps",
    "delta_l_uncond",
    "p_uncond",
    "delta_l_cond",
    "p_cond",
    "delta_mmd2",
    "p_mmd",
    "changed_adc_fraction",
)


@dataclass(frozen=True)
class ScanRow:
    eps: float
    delta_l_uncond: float
    p_uncond: float
    delta_l_cond: float
    p_cond: float
    delta_mmd2: float
    p_mmd: float
    changed_adc_fraction: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in SCAN_COLUMNS)


@dataclass
class ScanResult:
    rows: list
    k_blocks: int
    null_resamples: int
    seed: int
    nulls: dict = field(default_factory=dict)  # name -> np.ndarray of null t values

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SCAN_COLUMNS)
        for row in self.rows:
            writer.writerow([f"{v:.10g}" for v in row.as_tuple()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScanResult":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != SCAN_COLUMNS:
            missing = set(SCAN_COLUMNS) - set(header)
            raise ValueError(f"scan CSV header mismatch; missing columns: {sorted(missing)}")
        rows = [ScanRow(*(float(v) for v in line)) for line in reader if line]
        return cls(rows=rows, k_blocks=0, null_resamples=0, seed=0)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


@dataclass(frozen=True)
class ScanConfig:
    eps_grid: tuple
    k_blocks: int = 10
    null_resamples: int = 1500
    mmd_block_size: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.eps_grid) == 0:
            raise ValueError("eps grid must be non-empty")


def parse_eps_grid(spec: str) -> tuple:
    """Grid syntax 'log:lo:hi:n' or a comma-separated explicit list."""
    if spec.startswith("log:"):
        _, lo, hi, n = spec.split(":")
        return tuple(np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(n)))
    return tuple(float(x) for x in spec.split(","))


def run_scan(
    b1: Dataset,
    b2: Dataset,
    null_pool: Dataset,
    models: dict,
    cfg: ScanConfig,
) -> ScanResult:
    """Full sensitivity scan over the epsilon grid (Table VI shape).

    b1 seeds the perturbed samples C_eps, b2 is the untouched baseline,
    null_pool is a disjoint real sample used only for calibration, and
    models maps {"uncond", "cond"} to bundles fitted on a third split.
    Blocks are fixed across the grid; all randomness descends from
    cfg.seed, so reruns are identical.
    """
    if set(models) != {"uncond", "cond"}:
        raise ValueError("models must provide exactly 'uncond' and 'cond'")
    seeds = np.random.SeedSequence(cfg.seed).spawn(6)
    seed_ints = [int(s.generate_state(1)[0]) for s in seeds]
    k = cfg.k_blocks
    plan_c = BlockPlan(len(b1), k, seed_ints[0])
    plan_b = BlockPlan(len(b2), k, seed_ints[1])

    # per-model static quantities
    static = {}
    for name, m in models.items():
        bits_b2 = per_event_bits(b2, m)
        b_blocks = block_means(bits_b2.total_ev, plan_b)
        bits_b1 = per_event_bits(b1, m)
        fixed_part = bits_b1.occ_ev + bits_b1.strip_ev + bits_b1.kin_ev
        null_ts = calibrate_null(
            null_pool, m, k=k, r=cfg.null_resamples,
            seed=seed_ints[2] + (0 if name == "uncond" else 1),
            block_size=plan_c.block_size,
        )
        static[name] = (m, fixed_part, b_blocks, null_ts)

    # MMD setup: fixed feature blocks, bandwidth from the pooled baselines
    feats_b1 = extract_features_dataset(b1)
    feats_b2 = extract_features_dataset(b2)
    feats_pool = extract_features_dataset(null_pool)
    bandwidth = median_heuristic_bandwidth(
        np.concatenate([feats_b1, feats_b2]), seed=seed_ints[3]
    )
    mb = min(cfg.mmd_block_size, plan_c.block_size, plan_b.block_size)
    mmd_plan_c = BlockPlan(len(b1), k, seed_ints[4])
    mmd_plan_b1 = BlockPlan(len(b1), k, seed_ints[4] + 1)
    mmd_plan_b2 = BlockPlan(len(b2), k, seed_ints[4] + 2)
    mmd_blocks_c = mmd_plan_c.blocks()[:, :mb]
    mmd_blocks_b1 = mmd_plan_b1.blocks()[:, :mb]
    mmd_blocks_b2 = mmd_plan_b2.blocks()[:, :mb]
    engine = _MmdNullEngine(
        feats_pool, feats_b2, mmd_plan_b2, k, mb, bandwidth, seed_ints[5]
    )
    mmd_null_ts = engine.null_ts(cfg.null_resamples)

    # scoring context for fast per-epsilon ADC re-costing
    from .scoring import cost_tables_from_bundle

    occ_idx = np.nonzero(b1.occupied)
    ei = occ_idx[0]
    adc_ctx = {}
    for name, m in models.items():
        costs = cost_tables_from_bundle(m)
        bins = costs.bin_of(b1.p_mags)
        adc_ctx[name] = (costs, bins[ei], occ_idx[1])

    rows = []
    nulls = {f"t_{name}": static[name][3] for name in ("uncond", "cond")}
    nulls["t_mmd"] = mmd_null_ts
    base_adcs = b1.adcs[occ_idx].astype(np.int64)
    for eps in cfg.eps_grid:
        pert_vals = np.minimum(np.floor(base_adcs * (1.0 + eps) + 0.5), ADC_MAX).astype(np.int64)
        frac = float((pert_vals != base_adcs).sum() / base_adcs.size) if base_adcs.size else 0.0

        results = {}
        for name in ("uncond", "cond"):
            m, fixed_part, b_blocks, null_ts = static[name]
            costs, be, li = adc_ctx[name]
            adc_bits = costs.adc_hi[be, li, pert_vals >> 8] + costs.adc_lo[be, li, pert_vals & 0xFF]
            adc_ev = np.bincount(ei, weights=adc_bits, minlength=len(b1))
            c_blocks = block_means(fixed_part + adc_ev, plan_c)
            res = excess_test(c_blocks, b_blocks)
            results[name] = res.with_p(p_value(res.t, null_ts), null_ts.size)

        # MMD on the perturbed features
        c_pert = apply_adc_scale(b1, float(eps))
        feats_c = extract_features_dataset(c_pert)
        d_blocks = np.empty(k)
        for j in range(k):
            d_blocks[j] = mmd2_unbiased(
                feats_c[mmd_blocks_c[j]], feats_b2[mmd_blocks_b2[j]], bandwidth
            ) - mmd2_unbiased(
                feats_b1[mmd_blocks_b1[j]], feats_b2[mmd_blocks_b2[j]], bandwidth
            )
        mmd_res = mmd_test_from_contrasts(d_blocks)
        mmd_res = mmd_res.with_p(p_value(mmd_res.t, mmd_null_ts), mmd_null_ts.size)

        rows.append(
            ScanRow(
                eps=float(eps),
                delta_l_uncond=results["uncond"].delta_l,
                p_uncond=results["uncond"].p_empirical,
                delta_l_cond=results["cond"].delta_l,
                p_cond=results["cond"].p_empirical,
                delta_mmd2=mmd_res.delta_l,
                p_mmd=mmd_res.p_empirical,
                changed_adc_fraction=frac,
            )
        )
    return ScanResult(
        rows=rows, k_blocks=k, null_resamples=cfg.null_resamples, seed=cfg.seed, nulls=nulls
    )


def three_way_protocol(base: Dataset, seed: int, train_fraction: float = 0.7):
    """The three-split protocol: C's parent, the baseline, and the model split.

    Returns (b1, b2, a2_pool, a3_train): independent resplits of the same
    base dataset; the perturbation acts on b1, codelengths are compared on
    b2, the null is calibrated from a2, models are fitted on a3.
    """
    from .events import split_dataset

    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3)]
    _, b1 = split_dataset(base, seeds[0], train_fraction)
    a2, b2 = split_dataset(base, seeds[1], train_fraction)
    a3, _ = split_dataset(base, seeds[2], train_fraction)
    return b1, b2, a2, a3
