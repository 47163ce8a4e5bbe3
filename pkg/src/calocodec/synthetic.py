"""Synthetic event generator with exact, queryable ground-truth law.

The generator stands in for the non-public detector dataset. Its law is
chosen so every hit symbol has a closed-form probability conditional on
the stored kinematics:

* |p| is drawn from a configurable law on a bounded range, the direction
  is isotropic; the momentum vector is stored as float32 and everything
  downstream (rates, centers, the oracle) is derived from the float32
  values, so the law is exactly reconstructible from a saved dataset.
* per layer-view, the hit count is min(Poisson(rate), 20) with
  rate = base * (1 + slope * |p|) capped at 20; hits fill slots 0..count-1.
* strip indices follow a discretized Gaussian around a per-event shower
  center; the center is a deterministic function of the azimuth, with a
  per-view phase, so stereo views are correlated the way projections of
  one shower are.
* ADC values are geometric with mean adc_scale * |p|, clipped to 16 bits.

GeneratorOracle exposes exact per-event codelengths under this law, exact
per-event conditional entropies, and exact context-marginal tables for any
momentum binning (the best model reachable within the codec's
factorization family), which is what table-injection tests encode with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .events import Dataset
from .geometry import ADC_MAX, MAX_SLOTS, N_LAYER_VIEWS, N_STRIPS, PAD
from .model import MomentumBinning, ModelBundle, TrainMeta, MODE_CONDITIONAL, MODE_UNCONDITIONAL
from .rangecoder import cdf_from_frequencies
from .scoring import CostTables

GEN_CHUNK = 1 << 16
_LN2 = math.log(2.0)

# Azimuthal phase per layer-view: U/V/W stereo views of each segment.
_VIEW_PHASE = np.array([0.0, 1 / 3, 2 / 3, 0.0, 1 / 3, 2 / 3, 0.0, 1 / 3, 2 / 3])

DEFAULT_RATE_BASE = (3.2, 3.9, 4.7, 3.5, 3.2, 3.1, 2.1, 2.1, 2.0)
DEFAULT_ADC_SCALE = (420.0, 500.0, 560.0, 430.0, 400.0, 380.0, 260.0, 260.0, 250.0)


@dataclass(frozen=True)
class SyntheticConfig:
    """Ground-truth law parameters; all rates and scales strictly positive."""

    seed: int
    n_events: int
    occupancy_rate_base: tuple = DEFAULT_RATE_BASE
    occupancy_slope: float = 0.15
    adc_scale: tuple = DEFAULT_ADC_SCALE
    shower_width: float = 4.0
    momentum_law: str = "uniform:0.2:10"

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.n_events < 1:
            raise ValueError("n_events must be positive")
        base = np.asarray(self.occupancy_rate_base, dtype=np.float64)
        scale = np.asarray(self.adc_scale, dtype=np.float64)
        if base.shape != (N_LAYER_VIEWS,) or scale.shape != (N_LAYER_VIEWS,):
            raise ValueError("occupancy_rate_base and adc_scale need one value per layer-view")
        if not (np.all(base > 0) and np.all(scale > 0)):
            raise ValueError("rates and scales must be strictly positive")
        if self.occupancy_slope < 0:
            raise ValueError("occupancy_slope must be non-negative")
        if not self.shower_width > 0:
            raise ValueError("shower_width must be strictly positive")
        _parse_law(self.momentum_law)

    @property
    def rate_base(self) -> np.ndarray:
        return np.asarray(self.occupancy_rate_base, dtype=np.float64)

    @property
    def adc_scales(self) -> np.ndarray:
        return np.asarray(self.adc_scale, dtype=np.float64)


def _parse_law(spec: str) -> tuple[str, float, float]:
    parts = spec.split(":")
    if len(parts) != 3 or parts[0] not in ("uniform", "loguniform"):
        raise ValueError(f"momentum_law must be 'uniform:lo:hi' or 'loguniform:lo:hi', got {spec!r}")
    lo, hi = float(parts[1]), float(parts[2])
    if not (0 < lo < hi):
        raise ValueError("momentum_law range must satisfy 0 < lo < hi")
    return parts[0], lo, hi


def save_config(cfg: SyntheticConfig, path) -> None:
    """Flat key=value text form."""
    lines = [
        f"seed={cfg.seed}",
        f"n_events={cfg.n_events}",
        "occupancy_rate_base=" + ",".join(repr(float(x)) for x in cfg.occupancy_rate_base),
        f"occupancy_slope={cfg.occupancy_slope!r}",
        "adc_scale=" + ",".join(repr(float(x)) for x in cfg.adc_scale),
        f"shower_width={cfg.shower_width!r}",
        f"momentum_law={cfg.momentum_law}",
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_config(path) -> SyntheticConfig:
    kv = {}
    with open(path) as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    return SyntheticConfig(
        seed=int(kv["seed"]),
        n_events=int(kv["n_events"]),
        occupancy_rate_base=tuple(float(x) for x in kv["occupancy_rate_base"].split(",")),
        occupancy_slope=float(kv["occupancy_slope"]),
        adc_scale=tuple(float(x) for x in kv["adc_scale"].split(",")),
        shower_width=float(kv["shower_width"]),
        momentum_law=kv["momentum_law"],
    )


def shower_centers(momenta: np.ndarray) -> np.ndarray:
    """(N, 9) continuous shower centers in strip coordinates [0.5, n+0.5).

    Deterministic in the stored float32 momentum, so generator and oracle
    agree exactly.
    """
    m = np.asarray(momenta, dtype=np.float64)
    phi = np.arctan2(m[:, 1], m[:, 0])
    frac = (phi[:, None] / (2 * np.pi) + 0.5 + _VIEW_PHASE[None, :]) % 1.0
    n_strips = np.asarray(N_STRIPS, dtype=np.float64)[None, :]
    return 0.5 + frac * n_strips


def _hit_rates(cfg: SyntheticConfig, p_mags: np.ndarray) -> np.ndarray:
    lam = cfg.rate_base[None, :] * (1.0 + cfg.occupancy_slope * p_mags[:, None])
    return np.minimum(lam, float(MAX_SLOTS))


def _adc_means(cfg: SyntheticConfig, p_mags: np.ndarray) -> np.ndarray:
    return cfg.adc_scales[None, :] * p_mags[:, None]


def _generate_chunk(cfg: SyntheticConfig, chunk_index: int, n: int) -> Dataset:
    rng = np.random.Generator(np.random.Philox(key=cfg.seed).jumped(chunk_index))
    kind, lo, hi = _parse_law(cfg.momentum_law)
    if kind == "uniform":
        p_draw = rng.uniform(lo, hi, size=n)
    else:
        p_draw = np.exp(rng.uniform(np.log(lo), np.log(hi), size=n))
    direction = rng.standard_normal(size=(n, 3))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    direction = np.where(norms > 0, direction / np.maximum(norms, 1e-300), [1.0, 0.0, 0.0])
    momenta = (p_draw[:, None] * direction).astype("<f4")

    p_mags = np.sqrt(np.einsum("ij,ij->i", momenta.astype(np.float64), momenta.astype(np.float64)))
    lam = _hit_rates(cfg, p_mags)
    counts = np.minimum(rng.poisson(lam), MAX_SLOTS)

    centers = shower_centers(momenta)
    z = rng.standard_normal(size=(n, N_LAYER_VIEWS, MAX_SLOTS))
    raw = np.floor(centers[:, :, None] + cfg.shower_width * z + 0.5)
    n_strips = np.asarray(N_STRIPS, dtype=np.float64)[None, :, None]
    strips = np.clip(raw, 1, n_strips).astype(np.int32)

    mu = _adc_means(cfg, p_mags)
    rho = 1.0 / (1.0 + mu)
    adc_raw = rng.geometric(p=np.broadcast_to(rho[:, :, None], (n, N_LAYER_VIEWS, MAX_SLOTS))) - 1
    adcs = np.minimum(adc_raw, ADC_MAX).astype(np.int32)

    occupied = np.arange(MAX_SLOTS)[None, None, :] < counts[:, :, None]
    strips = np.where(occupied, strips, PAD).astype(np.int32)
    adcs = np.where(occupied, adcs, PAD).astype(np.int32)
    return Dataset(strips, adcs, momenta, provenance=f"synthetic(seed={cfg.seed})", validate=False)


def generate_chunks(cfg: SyntheticConfig):
    """Yield the dataset in deterministic chunks (streaming-friendly)."""
    produced = 0
    chunk_index = 0
    while produced < cfg.n_events:
        n = min(GEN_CHUNK, cfg.n_events - produced)
        yield _generate_chunk(cfg, chunk_index, n)
        produced += n
        chunk_index += 1


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Materialize the full dataset; deterministic given the config."""
    chunks = list(generate_chunks(cfg))
    if len(chunks) == 1:
        return chunks[0]
    return Dataset(
        np.concatenate([c.strips for c in chunks]),
        np.concatenate([c.adcs for c in chunks]),
        np.concatenate([c.momenta for c in chunks]),
        provenance=f"synthetic(seed={cfg.seed})",
        validate=False,
    )


# --- exact law: pmf building blocks ----------------------------------------


def _count_log_pmf_value(counts: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """log P(min(Poisson(lam), 20) = counts), elementwise."""
    c = counts.astype(np.float64)
    with np.errstate(divide="ignore"):
        body = c * np.log(lam) - lam - special.gammaln(c + 1.0)
        tail = np.log(special.pdtrc(MAX_SLOTS - 1, lam))  # P(Poisson >= 20)
    return np.where(counts >= MAX_SLOTS, tail, body)


def _count_pmf_matrix(lam: np.ndarray) -> np.ndarray:
    """(..., 21) pmf of the clipped count for an array of rates."""
    ks = np.arange(MAX_SLOTS + 1, dtype=np.float64)
    shape = lam.shape + (MAX_SLOTS + 1,)
    lam_e = lam[..., None]
    with np.errstate(divide="ignore"):
        log_pmf = ks * np.log(lam_e) - lam_e - special.gammaln(ks + 1.0)
    pmf = np.exp(log_pmf)
    pmf[..., MAX_SLOTS] = special.pdtrc(MAX_SLOTS - 1, lam)
    return pmf.reshape(shape)


def _strip_log_pmf_value(strips: np.ndarray, centers: np.ndarray, width: float, n_strips: np.ndarray) -> np.ndarray:
    """log pmf of clipped, discretized Gaussian strips, elementwise."""
    s = strips.astype(np.float64)
    z_hi = (s + 0.5 - centers) / width
    z_lo = (s - 0.5 - centers) / width
    p = special.ndtr(z_hi) - special.ndtr(z_lo)
    p = np.where(strips <= 1, special.ndtr(z_hi), p)
    p = np.where(strips >= n_strips, special.ndtr(-z_lo), p)
    with np.errstate(divide="ignore"):
        return np.log(p)


def _strip_pmf_matrix(centers: np.ndarray, width: float, n: int) -> np.ndarray:
    """(..., n) strip pmf for an array of centers in one layer-view."""
    s = np.arange(1, n + 1, dtype=np.float64)
    c = centers[..., None]
    hi = special.ndtr((s + 0.5 - c) / width)
    lo = special.ndtr((s - 0.5 - c) / width)
    pmf = hi - lo
    pmf[..., 0] = hi[..., 0]
    pmf[..., -1] = 1.0 - lo[..., -1]
    return pmf


def _adc_log_pmf_value(adcs: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """log pmf of the 16-bit-clipped geometric, elementwise."""
    log_q = -np.log1p(1.0 / mu)  # log(mu / (1 + mu))
    log_rho = -np.log1p(mu)
    a = adcs.astype(np.float64)
    return np.where(adcs >= ADC_MAX, ADC_MAX * log_q, a * log_q + log_rho)


def _adc_entropy_nat(mu: np.ndarray) -> np.ndarray:
    """Closed-form entropy (nats) of the clipped geometric."""
    m = float(ADC_MAX)
    log_q = -np.log1p(1.0 / mu)
    log_rho = -np.log1p(mu)
    rho = np.exp(log_rho)
    q_m = np.exp(m * log_q)
    one_minus_q = rho  # 1 - q == rho
    s0 = (1.0 - q_m) / one_minus_q
    q = np.exp(log_q)
    s1 = q * (1.0 - m * np.exp((m - 1.0) * log_q) + (m - 1.0) * q_m) / one_minus_q**2
    return -(rho * s0 * log_rho + rho * s1 * log_q) - q_m * m * log_q


def _left_packed(ds: Dataset) -> bool:
    occ = ds.occupied
    counts = occ.sum(axis=2)
    expected = np.arange(MAX_SLOTS)[None, None, :] < counts[:, :, None]
    return bool(np.array_equal(occ, expected))


class GeneratorOracle:
    """Exact probabilities and entropies under a SyntheticConfig's law."""

    def __init__(self, cfg: SyntheticConfig) -> None:
        self.cfg = cfg
        self._law = _parse_law(cfg.momentum_law)

    # -- per-event exact quantities ------------------------------------

    def _require_provenance(self, ds: Dataset) -> None:
        if not _left_packed(ds):
            raise ValueError(
                "dataset lacks oracle provenance: hit slots are not left-packed "
                "the way this generator produces them"
            )

    def hit_nll_bits(self, ds: Dataset) -> np.ndarray:
        """Exact -log2 p(hits | kinematics) per event."""
        self._require_provenance(ds)
        cfg = self.cfg
        n = len(ds)
        out = np.zeros(n)
        p_mags = ds.p_mags
        for lo in range(0, n, GEN_CHUNK):
            hi = min(lo + GEN_CHUNK, n)
            sl = slice(lo, hi)
            centers = shower_centers(ds.momenta[sl])
            lam = _hit_rates(cfg, p_mags[sl])
            occ = ds.occupied[sl]
            counts = occ.sum(axis=2)
            out[sl] = -_count_log_pmf_value(counts, lam).sum(axis=1)

            ei, li, si = np.nonzero(occ)
            strips = ds.strips[sl][ei, li, si]
            adcs = ds.adcs[sl][ei, li, si]
            n_strips = np.asarray(N_STRIPS, dtype=np.float64)[li]
            strip_ll = _strip_log_pmf_value(strips, centers[ei, li], cfg.shower_width, n_strips)
            mu = _adc_means(cfg, p_mags[sl])
            adc_ll = _adc_log_pmf_value(adcs, mu[ei, li])
            out[sl] += np.bincount(ei, weights=-(strip_ll + adc_ll), minlength=hi - lo)
        return out / _LN2

    def hit_entropy_bits(self, ds: Dataset) -> np.ndarray:
        """Exact H(hits | kinematics) per event, in bits."""
        cfg = self.cfg
        n = len(ds)
        out = np.empty(n)
        p_mags = ds.p_mags
        chunk = 1 << 14
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            sl = slice(lo, hi)
            centers = shower_centers(ds.momenta[sl])
            lam = _hit_rates(cfg, p_mags[sl])
            mu = _adc_means(cfg, p_mags[sl])

            pmf_c = _count_pmf_matrix(lam)  # (m, 9, 21)
            with np.errstate(divide="ignore", invalid="ignore"):
                h_count = -np.sum(np.where(pmf_c > 0, pmf_c * np.log(pmf_c), 0.0), axis=2)
            mean_count = (pmf_c * np.arange(MAX_SLOTS + 1)).sum(axis=2)

            h_strip = np.empty((hi - lo, N_LAYER_VIEWS))
            for lv in range(N_LAYER_VIEWS):
                pmf_s = _strip_pmf_matrix(centers[:, lv], cfg.shower_width, N_STRIPS[lv])
                with np.errstate(divide="ignore", invalid="ignore"):
                    h_strip[:, lv] = -np.sum(np.where(pmf_s > 0, pmf_s * np.log(pmf_s), 0.0), axis=1)
            h_adc = _adc_entropy_nat(mu)
            out[sl] = (h_count + mean_count * (h_strip + h_adc)).sum(axis=1)
        return out / _LN2

    def mean_hits_analytic(self) -> np.ndarray:
        """(9,) expected hit count per layer-view under the full law."""
        nodes, weights = self._law_quadrature(None)
        lam = _hit_rates(self.cfg, nodes)  # (q, 9)
        mean_counts = (_count_pmf_matrix(lam) * np.arange(MAX_SLOTS + 1)).sum(axis=2)
        return np.einsum("q,ql->l", weights, mean_counts)

    # -- context marginals (family-optimal reference model) -------------

    def _law_quadrature(self, bin_range, points: int = 256):
        """Nodes and normalized weights of |p| restricted to bin_range."""
        kind, lo, hi = self._law
        a = lo if bin_range is None else max(lo, bin_range[0])
        b = hi if bin_range is None else min(hi, bin_range[1])
        if not a < b:
            return None, None
        x, w = np.polynomial.legendre.leggauss(points)
        if kind == "uniform":
            nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
            weights = w / w.sum()
        else:
            la, lb = np.log(a), np.log(b)
            u = 0.5 * (lb - la) * x + 0.5 * (la + lb)
            nodes = np.exp(u)
            weights = w / w.sum()
        return nodes, weights

    def _bin_ranges(self, binning: MomentumBinning | None):
        if binning is None:
            return [(0.0, np.inf)]
        edges = list(binning.edges) + [np.inf]
        return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]

    def family_cost_tables(self, binning: MomentumBinning | None) -> CostTables:
        """Exact -log2 of the per-context symbol marginals.

        This is the information-theoretic optimum within the codec's
        factorization family (per-slot occupancy, per-LV strips and ADC
        bytes, the given binning); an infinite-data fit converges to it
        up to CDF quantization.
        """
        cfg = self.cfg
        ranges = self._bin_ranges(binning)
        nb = len(ranges)
        max_strips = max(N_STRIPS)
        occ = np.full((nb, N_LAYER_VIEWS, MAX_SLOTS, 2), np.log2(2.0))
        strip = np.full((nb, N_LAYER_VIEWS, max_strips), np.inf)
        adc_hi = np.full((nb, N_LAYER_VIEWS, 256), np.log2(256.0))
        adc_lo = np.full((nb, N_LAYER_VIEWS, 256), np.log2(256.0))

        strip_marginal = [self._strip_marginal(lv) for lv in range(N_LAYER_VIEWS)]
        for b, rng_b in enumerate(ranges):
            nodes, weights = self._law_quadrature(rng_b)
            for lv in range(N_LAYER_VIEWS):
                strip[b, lv, : N_STRIPS[lv]] = -np.log2(strip_marginal[lv])
            if nodes is None:
                continue  # bin outside the law's support: tables never visited
            lam = _hit_rates(cfg, nodes)  # (q, 9)
            for slot in range(MAX_SLOTS):
                p_occ = np.einsum("q,ql->l", weights, special.pdtrc(slot, lam))
                p_occ = np.clip(p_occ, 1e-300, 1 - 1e-16)
                occ[b, :, slot, 0] = -np.log2(1 - p_occ)
                occ[b, :, slot, 1] = -np.log2(p_occ)
            mu = _adc_means(cfg, nodes)  # (q, 9)
            hi_m, lo_m = _adc_byte_marginals(mu)  # (q, 9, 256) each
            adc_hi[b] = -np.log2(np.einsum("q,qlv->lv", weights, hi_m).clip(1e-300))
            adc_lo[b] = -np.log2(np.einsum("q,qlv->lv", weights, lo_m).clip(1e-300))
        edges = None if binning is None else np.asarray(binning.edges, dtype=np.float64)
        return CostTables(occ=occ, strip=strip, adc_hi=adc_hi, adc_lo=adc_lo, kin=None, edges=edges)

    def _strip_marginal(self, lv: int) -> np.ndarray:
        """Exact strip marginal with the center integrated out (closed form).

        The center is uniform on [0.5, n+0.5); integrating the clipped
        discretized Gaussian over it reduces to I(z) = z*ndtr(z) + pdf(z).
        """
        n = N_STRIPS[lv]
        w = self.cfg.shower_width

        def big_phi_integral(t: np.ndarray) -> np.ndarray:
            # integral over c in [0.5, n+0.5] of ndtr((t - c)/w) dc
            z_hi = (t - 0.5) / w
            z_lo = (t - n - 0.5) / w
            I = lambda z: z * special.ndtr(z) + np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
            return w * (I(z_hi) - I(z_lo))

        s = np.arange(1, n + 1, dtype=np.float64)
        upper = big_phi_integral(s + 0.5)
        lower = big_phi_integral(s - 0.5)
        pmf = (upper - lower) / n
        pmf[0] = upper[0] / n
        pmf[-1] = (n - lower[-1]) / n
        return pmf

    def family_nll_bits(self, ds: Dataset, binning: MomentumBinning | None) -> np.ndarray:
        """Per-event hit bits under the family-optimal reference model."""
        from .scoring import event_component_bits

        costs = self.family_cost_tables(binning)
        return event_component_bits(ds, costs).hits_ev

    def injected_bundle(self, binning: MomentumBinning | None) -> ModelBundle:
        """ModelBundle whose hit tables quantize the exact context marginals.

        Kinematics tables are uniform; the injected bundle is meant for
        hit-stream codelength studies.
        """
        costs = self.family_cost_tables(binning)
        nb = costs.n_bins
        scale = 1 << 31

        def quantize(pmf: np.ndarray):
            return cdf_from_frequencies(np.round(pmf * scale).astype(np.int64))

        occ, strip, hi, lo = [], [], [], []
        for b in range(nb):
            occ.append(
                [
                    [
                        quantize(np.exp2(-costs.occ[b, lv, slot]))
                        for slot in range(MAX_SLOTS)
                    ]
                    for lv in range(N_LAYER_VIEWS)
                ]
            )
            strip.append(
                [quantize(np.exp2(-costs.strip[b, lv, : N_STRIPS[lv]])) for lv in range(N_LAYER_VIEWS)]
            )
            hi.append([quantize(np.exp2(-costs.adc_hi[b, lv])) for lv in range(N_LAYER_VIEWS)])
            lo.append([quantize(np.exp2(-costs.adc_lo[b, lv])) for lv in range(N_LAYER_VIEWS)])
        kin = [cdf_from_frequencies(np.zeros(256, dtype=np.int64)) for _ in range(12)]
        meta = TrainMeta(
            n_events=0,
            data_hash="00" * 32,
            bin_counts=np.zeros(nb, dtype=np.int64),
            occ_mean=np.zeros((nb, N_LAYER_VIEWS)),
        )
        mode = MODE_UNCONDITIONAL if binning is None else MODE_CONDITIONAL
        return ModelBundle(mode, binning, occ, strip, hi, lo, kin, meta)


def _adc_byte_marginals(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact high/low byte marginals of the clipped geometric.

    mu has shape (..., ); returns two arrays of shape (..., 256).
    """
    log_q = -np.log1p(1.0 / mu)[..., None]  # (..., 1)
    rho = (1.0 / (1.0 + mu))[..., None]
    h = np.arange(256, dtype=np.float64)

    # high byte: P(h) = q^(256 h) (1 - q^256) for h < 255, else q^(256*255)
    q_256h = np.exp(256.0 * h * log_q)
    one_minus_q256 = -np.expm1(256.0 * log_q)
    hi = q_256h * one_minus_q256
    hi[..., 255] = np.exp(256.0 * 255 * np.squeeze(log_q, -1))

    # low byte: sum over h of q^(256 h + l) * rho, with the clip lump at 255
    l = h
    q_l = np.exp(l * log_q)
    geo_full = -np.expm1(65536.0 * log_q)  # 1 - q^65536
    geo_254 = -np.expm1(65280.0 * log_q)  # 1 - q^(256*255)
    denom = -np.expm1(256.0 * log_q)  # 1 - q^256
    lo = rho * q_l * geo_full / denom
    lump = np.exp(float(ADC_MAX) * np.squeeze(log_q, -1))
    lo[..., 255] = (rho * q_l * geo_254 / denom)[..., 255] + lump
    return hi, lo
