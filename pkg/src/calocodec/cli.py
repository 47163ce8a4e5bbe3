"""Command-line pipeline: generate, split, fit, encode/decode/verify,
audit, budget, perturb, scan, gzip-compare, report, rerun.

Exit codes: 0 success, 1 domain failure (invariant violation, mismatch,
failed verification), 2 usage errors. Every command that writes files also
writes a .manifest.json next to its first output; `rerun` replays a
manifest's argv and must reproduce outputs byte-exactly.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .codec import CompressedDataset, closure_check, decode_dataset, encode_dataset
from .events import (
    Dataset,
    FormatError,
    InvariantError,
    read_evcan,
    split_dataset,
    write_evcan,
)
from .fidelity import ScanConfig, parse_eps_grid, run_scan, three_way_protocol, apply_adc_scale
from .manifest import ManifestWriter, RunManifest
from .metrics import bit_budget, entropy_audit
from .model import ModelBundle, default_binning, fit_conditional, fit_unconditional
from .synthetic import SyntheticConfig, generate_synthetic, load_config, save_config


class CliError(Exception):
    """Domain failure surfaced to the user with exit code 1."""


def _writer(args, command: str, parameters: dict) -> ManifestWriter:
    return ManifestWriter(
        command=command,
        argv=sys.argv[1:] if args._argv is None else args._argv,
        parameters=parameters,
        master_seed=getattr(args, "seed", None),
        version=__version__,
    )


# --- commands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        cfg = SyntheticConfig(**{**cfg.__dict__, "seed": args.seed, "n_events": args.n})
    else:
        kwargs = {}
        if args.rate_base:
            kwargs["occupancy_rate_base"] = tuple(float(x) for x in args.rate_base.split(","))
        if args.adc_scale:
            kwargs["adc_scale"] = tuple(float(x) for x in args.adc_scale.split(","))
        if args.slope is not None:
            kwargs["occupancy_slope"] = args.slope
        if args.width is not None:
            kwargs["shower_width"] = args.width
        if args.momentum_law:
            kwargs["momentum_law"] = args.momentum_law
        cfg = SyntheticConfig(seed=args.seed, n_events=args.n, **kwargs)
    writer = _writer(args, "generate", {"n": args.n, "seed": args.seed})
    ds = generate_synthetic(cfg)
    write_evcan(ds, args.out)
    sidecar = Path(str(args.out) + ".meta.txt")
    with open(sidecar, "w") as f:
        f.write(f"provenance={ds.provenance}\nn_events={len(ds)}\ncontent_sha256={ds.content_hash()}\n")
    cfg_path = Path(str(args.out) + ".config.txt")
    save_config(cfg, cfg_path)
    for p in (args.out, sidecar, cfg_path):
        writer.add_output(p)
    writer.write()
    print(f"wrote {len(ds)} events to {args.out}")
    return 0


def cmd_split(args) -> int:
    writer = _writer(args, "split", {"seed": args.seed, "fraction": args.fraction})
    writer.add_input(args.infile)
    ds = read_evcan(args.infile)
    a, b = split_dataset(ds, seed=args.seed, train_fraction=args.fraction)
    write_evcan(a, args.out_a)
    write_evcan(b, args.out_b)
    writer.add_output(args.out_a)
    writer.add_output(args.out_b)
    writer.write()
    print(f"split {len(ds)} events into {len(a)} / {len(b)}")
    return 0


def cmd_fit(args) -> int:
    writer = _writer(args, "fit", {"mode": args.mode, "bins": args.bins, "p_max": args.p_max})
    writer.add_input(args.train)
    train = read_evcan(args.train)
    if args.mode == "uncond":
        bundle = fit_unconditional(train)
    else:
        bundle = fit_conditional(train, default_binning(args.bins, args.p_max))
    bundle.save_to(args.out)
    writer.add_output(args.out)
    writer.write()
    print(f"fitted {bundle.mode} model on {len(train)} events, hash {bundle.model_hash[:16]}")
    return 0


def cmd_encode(args) -> int:
    writer = _writer(args, "encode", {})
    writer.add_input(args.infile)
    writer.add_input(args.model)
    ds = read_evcan(args.infile)
    bundle = ModelBundle.load_from(args.model)
    compressed, account = encode_dataset(ds, bundle)
    compressed.save_to(args.out)
    account_path = Path(args.account) if args.account else Path(str(args.out) + ".account.json")
    with open(account_path, "w") as f:
        json.dump(
            {
                "n_events": account.n_events,
                "ideal_lv_tag_bits": account.ideal_lv_tag.tolist(),
                "ideal_kin_bits": account.ideal_kin,
                "achieved_bits": account.achieved,
                "mean_bits_per_event": account.mean_bits_per_event,
            },
            f,
            indent=2,
        )
        f.write("\n")
    writer.add_output(args.out)
    writer.add_output(account_path)
    writer.write()
    print(
        f"encoded {len(ds)} events: {account.achieved_total} bits "
        f"({account.mean_bits_per_event:.2f} bits/event)"
    )
    return 0


def cmd_decode(args) -> int:
    writer = _writer(args, "decode", {})
    writer.add_input(args.infile)
    writer.add_input(args.model)
    compressed = CompressedDataset.load_from(args.infile)
    bundle = ModelBundle.load_from(args.model)
    ds = decode_dataset(compressed, bundle)
    write_evcan(ds, args.out)
    writer.add_output(args.out)
    writer.write()
    print(f"decoded {len(ds)} events to {args.out}")
    return 0


def cmd_verify(args) -> int:
    ds = read_evcan(args.infile)
    bundle = ModelBundle.load_from(args.model)
    report = closure_check(ds, bundle)
    if report.error:
        print(f"closure FAILED: {report.error}")
        return 1
    print(
        f"closure {'ok' if report.equal else 'FAILED'}: achieved={report.achieved_bits} bits, "
        f"ideal={report.ideal_bits:.3f} bits, overhead={report.overhead_pct:.3e} %"
    )
    for tag, gap in report.section_gaps.items():
        print(f"  section {tag}: gap {gap:.3f} bits")
    return 0 if report.equal else 1


def cmd_audit(args) -> int:
    writer = _writer(args, "audit", {})
    for p in (args.train, args.test, args.model):
        writer.add_input(p)
    train = read_evcan(args.train)
    test = read_evcan(args.test)
    bundle = ModelBundle.load_from(args.model)
    audit = entropy_audit(train, test, bundle)
    csv_path = Path(args.out_prefix + ".csv")
    txt_path = Path(args.out_prefix + ".txt")
    csv_path.write_text(audit.to_csv())
    txt_path.write_text(audit.to_text())
    writer.add_output(csv_path)
    writer.add_output(txt_path)
    writer.write()
    print(audit.to_text(), end="")
    return 0


def cmd_budget(args) -> int:
    writer = _writer(args, "budget", {})
    writer.add_input(args.infile)
    writer.add_input(args.model)
    ds = read_evcan(args.infile)
    bundle = ModelBundle.load_from(args.model)
    _, account = encode_dataset(ds, bundle)
    budget = bit_budget(account, ds)
    csv_path = Path(args.out_prefix + ".csv")
    txt_path = Path(args.out_prefix + ".txt")
    csv_path.write_text(budget.to_csv())
    txt_path.write_text(budget.to_text())
    writer.add_output(csv_path)
    writer.add_output(txt_path)
    writer.write()
    print(budget.to_text(), end="")
    return 0


def cmd_perturb(args) -> int:
    writer = _writer(args, "perturb", {"eps": args.eps})
    writer.add_input(args.infile)
    ds = read_evcan(args.infile)
    out = apply_adc_scale(ds, args.eps)
    write_evcan(out, args.out)
    writer.add_output(args.out)
    writer.write()
    from .fidelity import changed_fraction

    print(f"eps={args.eps:g}: changed ADC fraction {changed_fraction(ds, out):.4f}")
    return 0


def cmd_scan(args) -> int:
    writer = _writer(
        args,
        "scan",
        {
            "eps_grid": args.eps_grid,
            "k": args.k,
            "resamples": args.resamples,
            "bins": args.bins,
            "seed": args.seed,
        },
    )
    writer.add_input(args.infile)
    base = read_evcan(args.infile)
    b1, b2, a2_pool, a3_train = three_way_protocol(base, seed=args.seed)
    models = {
        "uncond": fit_unconditional(a3_train),
        "cond": fit_conditional(a3_train, default_binning(args.bins, args.p_max)),
    }
    cfg = ScanConfig(
        eps_grid=parse_eps_grid(args.eps_grid),
        k_blocks=args.k,
        null_resamples=args.resamples,
        mmd_block_size=args.mmd_block_size,
        seed=args.seed,
    )
    result = run_scan(b1, b2, a2_pool, models, cfg)
    Path(args.out).write_text(result.to_csv())
    writer.add_output(args.out)
    if args.dump_null:
        for name, ts in result.nulls.items():
            p = Path(f"{args.dump_null}.{name}.csv")
            p.write_text("\n".join(f"{v:.10g}" for v in ts) + "\n")
            writer.add_output(p)
    writer.write()
    print(f"scan of {len(cfg.eps_grid)} epsilon points written to {args.out}")
    return 0


@dataclass
class ComparisonRow:
    method: str
    size_bytes: int
    ratio: float
    rel_uncond: float | None
    rel_cond: float | None


def gzip_compare(canonical: bytes, ac_sizes: dict, levels=(1, 6, 9)):
    """Size/ratio table: canonical size vs DEFLATE levels vs AC payloads.

    ac_sizes maps a label ('uncond', 'cond') to compressed byte counts.
    Returns (rows, warning); DEFLATE rows are dropped with a warning if
    zlib is unavailable.
    """
    rows = [ComparisonRow("uncompressed", len(canonical), 1.0, None, None)]
    size_u = ac_sizes.get("uncond")
    size_c = ac_sizes.get("cond")

    def rel(size):
        return (
            size / size_u if size_u else None,
            size / size_c if size_c else None,
        )

    for label, size in ac_sizes.items():
        ru, rc = rel(size)
        rows.append(ComparisonRow(f"ac-{label}", size, len(canonical) / size, ru, rc))
    warning = None
    try:
        import zlib

        for level in levels:
            comp = zlib.compress(canonical, level)
            ru, rc = rel(len(comp))
            rows.append(
                ComparisonRow(f"gzip-{level}", len(comp), len(canonical) / len(comp), ru, rc)
            )
    except ImportError:  # pragma: no cover - zlib ships with CPython
        warning = "DEFLATE backend unavailable; gzip rows omitted"
    return rows, warning


def comparison_to_csv(rows) -> str:
    lines = ["method,size_bytes,ratio,rel_to_uncond_ac,rel_to_cond_ac"]
    for r in rows:
        ru = f"{r.rel_uncond:.4f}" if r.rel_uncond is not None else ""
        rc = f"{r.rel_cond:.4f}" if r.rel_cond is not None else ""
        lines.append(f"{r.method},{r.size_bytes},{r.ratio:.4f},{ru},{rc}")
    return "\n".join(lines) + "\n"


def comparison_to_text(rows) -> str:
    lines = [f"{'method':<14}{'size [B]':>12}{'ratio':>9}{'vs U.-AC':>10}{'vs C.-AC':>10}"]
    for r in rows:
        ru = f"{r.rel_uncond:.2f}x" if r.rel_uncond is not None else "--"
        rc = f"{r.rel_cond:.2f}x" if r.rel_cond is not None else "--"
        lines.append(f"{r.method:<14}{r.size_bytes:>12}{r.ratio:>8.2f}x{ru:>10}{rc:>10}")
    return "\n".join(lines) + "\n"


def cmd_gzip_compare(args) -> int:
    writer = _writer(args, "gzip-compare", {"levels": args.levels})
    writer.add_input(args.canonical)
    canonical = Path(args.canonical).read_bytes()
    ac_sizes = {}
    for spec in args.ac or []:
        label, _, path = spec.partition("=")
        if not path:
            raise CliError(f"--ac needs label=path, got {spec!r}")
        writer.add_input(path)
        ac_sizes[label] = Path(path).stat().st_size
    levels = tuple(int(x) for x in args.levels.split(","))
    rows, warning = gzip_compare(canonical, ac_sizes, levels)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    csv_path = Path(args.out_prefix + ".csv")
    txt_path = Path(args.out_prefix + ".txt")
    csv_path.write_text(comparison_to_csv(rows))
    txt_path.write_text(comparison_to_text(rows))
    writer.add_output(csv_path)
    writer.add_output(txt_path)
    writer.write()
    print(comparison_to_text(rows), end="")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _writer(args, "report", {"out_dir": str(out_dir)})
    mapping = {
        "scan.csv": args.scan,
        "budget.csv": args.budget,
        "audit.csv": args.audit,
        "compare.csv": args.compare,
    }
    for name, src in mapping.items():
        if src is None:
            continue
        writer.add_input(src)
        shutil.copyfile(src, out_dir / name)
        writer.add_output(out_dir / name)
    writer.write(out_dir / "manifest.json")
    print(f"report bundle written to {out_dir}")
    return 0


def cmd_rerun(args) -> int:
    manifest = RunManifest.load_from(args.manifest)
    print(f"replaying: calocodec {' '.join(manifest.argv)}")
    return main(manifest.argv)


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calocodec",
        description="Physics-aware lossless event coding and codelength fidelity tests",
    )
    parser.add_argument("--version", action="version", version=f"calocodec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="synthetic config key=value file")
    p.add_argument("--rate-base", help="9 comma-separated occupancy base rates")
    p.add_argument("--adc-scale", help="9 comma-separated ADC scales (per GeV)")
    p.add_argument("--slope", type=float, help="occupancy slope vs |p|")
    p.add_argument("--width", type=float, help="shower width in strips")
    p.add_argument("--momentum-law", help="uniform:lo:hi or loguniform:lo:hi")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="seeded disjoint train/test split")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.7)
    p.add_argument("--out-a", required=True)
    p.add_argument("--out-b", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", help="fit a probability model")
    p.add_argument("--train", required=True)
    p.add_argument("--mode", choices=("uncond", "cond"), default="uncond")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--p-max", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("encode", help="compress a dataset under a model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--account", help="where to write the bit account JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("verify", help="closure test: encode, decode, compare")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("audit", help="entropy / cross-entropy / codelength audit")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("budget", help="per-layer-view bit budget")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("perturb", help="apply an ADC scale perturbation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("scan", help="epsilon sensitivity scan (both codecs + MMD)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--eps-grid", default="log:1e-6:1e-1:23")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--resamples", type=int, default=1500)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--p-max", type=float, default=10.0)
    p.add_argument("--mmd-block-size", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-null", help="prefix for null-distribution dumps")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("gzip-compare", help="compression-ratio table vs DEFLATE")
    p.add_argument("--canonical", required=True)
    p.add_argument("--ac", action="append", help="label=path of an .acz payload")
    p.add_argument("--levels", default="1,6,9")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gzip_compare)

    p = sub.add_parser("report", help="bundle result CSVs into a run directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scan")
    p.add_argument("--budget")
    p.add_argument("--audit")
    p.add_argument("--compare")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rerun", help="replay a recorded manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv) if argv is not None else None
    try:
        return args.func(args)
    except (CliError, InvariantError, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
