"""Command-line front end.

Commands: sample, calibrate, encode, decode, sweep, analyze, verify.  Every
command is deterministic given its options; options can come from a simple
``key=value`` config file (``--config``), with command-line flags taking
precedence.  The effective option set is echoed into every output CSV as
leading ``#`` comment lines for provenance.  Errors exit nonzero with a
one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibrate as calib
from . import harness, schemes
from .grid import gibbs_sample
from .pbm import read_pbm, write_pbm


def _parse_config_file(path):
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: bad config line {raw!r}")
        key, val = line.split("=", 1)
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config(args, parser):
    """Fill parser defaults from the config file, keeping explicit flags."""
    if not getattr(args, "config", None):
        return args
    values = _parse_config_file(args.config)
    argv_keys = set()
    for tok in sys.argv[1:]:
        if tok.startswith("--"):
            argv_keys.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, val in values.items():
        if key in argv_keys or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, val.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(val))
        elif isinstance(current, float):
            setattr(args, key, float(val))
        else:
            setattr(args, key, val)
    return args


def _echo_lines(command, args, skip=("config", "func")):
    parts = [f"command={command}"]
    for key in sorted(vars(args)):
        if key in skip or key == "command":
            continue
        parts.append(f"{key}={getattr(args, key)}")
    return parts


def _parse_int_list(text):
    """Grid syntax: "1,2,3" or "1-8" or a mix ("1-4,6")."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _load_corpus(corpus_dir):
    paths = sorted(Path(corpus_dir).glob("*.pbm"))
    if not paths:
        raise FileNotFoundError(f"no .pbm images found in {corpus_dir}")
    return [read_pbm(p) for p in paths], [p.name for p in paths]


def cmd_sample(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = gibbs_sample(args.height, args.width, args.theta, args.count,
                          burn_in_sweeps=args.burn_in,
                          sweeps_between_samples=args.spacing,
                          rng_seed=args.seed)
    for i, img in enumerate(images):
        write_pbm(out_dir / f"{args.prefix}{i:03d}.pbm", img)
    manifest = out_dir / f"{args.prefix}manifest.txt"
    manifest.write_text("".join(f"# {ln}\n" for ln in _echo_lines("sample", args)))
    print(f"wrote {len(images)} images to {out_dir}")
    return 0


def cmd_calibrate(args):
    corpus, _ = _load_corpus(args.corpus_dir)
    table = calib.calibrate_corpus(corpus, _parse_int_list(args.sidedness),
                                   _parse_int_list(args.n_rows),
                                   boundary_samples=args.boundary_samples)
    table.to_csv(args.out, echo=_echo_lines("calibrate", args))
    print(f"wrote {len(table.results)} calibration rows to {args.out}")
    return 0


def _resolve_table(args, height_width=None):
    if args.table:
        return schemes.ContextTable.from_bytes(Path(args.table).read_bytes())
    if args.train_dir:
        corpus, _ = _load_corpus(args.train_dir)
        return schemes.train_context_table(corpus, args.context_size)
    return None


def cmd_encode(args):
    pixels = read_pbm(args.image)
    calibration = calib.CalibrationTable.from_csv(args.calibration) \
        if args.calibration else None
    if args.scheme in ("model0", "model1", "rcc"):
        if calibration is None:
            raise ValueError(f"scheme {args.scheme} needs --calibration")
        if args.scheme == "rcc":
            spec = harness.SchemeSpec("rcc02", n_lines=args.n_lines or args.n_rows,
                                      n_strips=args.n_strips or args.n_rows)
        else:
            spec = harness.SchemeSpec(args.scheme, n_rows=args.n_rows)
        result = harness.encode_with_spec(pixels, spec, args.theta, calibration)
    elif args.scheme == "empirical":
        table = _resolve_table(args)
        if table is None:
            raise ValueError("empirical encoding needs --table or --train-dir")
        result = schemes.encode_empirical_1sided(pixels, table,
                                                 embed_table=args.embed_table,
                                                 theta=args.theta)
        if args.save_table:
            Path(args.save_table).write_bytes(table.to_bytes())
    else:
        raise ValueError(f"unknown scheme {args.scheme!r}")
    Path(args.out).write_bytes(result.data)
    bpp = result.ideal_bits / pixels.size
    print(f"{args.image}: {len(result.data)} bytes, ideal {bpp:.5f} bpp, "
          f"coded {result.payload_bits / pixels.size:.5f} bpp")
    return 0


def cmd_decode(args):
    data = Path(args.input).read_bytes()
    table = None
    if args.table:
        table = schemes.ContextTable.from_bytes(Path(args.table).read_bytes())
    pixels = schemes.decode(data, table=table)
    write_pbm(args.out, pixels)
    print(f"decoded {args.input} -> {args.out} ({pixels.shape[0]}x{pixels.shape[1]})")
    return 0


def cmd_sweep(args):
    corpus, names = _load_corpus(args.corpus_dir)
    calibration = calib.CalibrationTable.from_csv(args.calibration)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = _echo_lines("sweep", args) + [f"corpus={','.join(names)}"]
    n_list = _parse_int_list(args.n_rows)
    c_list = _parse_int_list(args.context_sizes)

    specs = [harness.SchemeSpec("model0", n_rows=n) for n in n_list]
    specs += [harness.SchemeSpec("model1", n_rows=n) for n in n_list]
    specs += [harness.SchemeSpec("rcc02", n_lines=n, n_strips=n) for n in n_list]
    tables = harness.train_tables(corpus, c_list)
    specs += [harness.SchemeSpec("empirical1", context_size=c) for c in c_list]
    reports = harness.sweep_rates(corpus, specs, args.theta, calibration, tables)
    write = {r.spec.label(): r for r in reports}
    write_list = list(reports)

    two_sided = {n: harness.two_sided_rate(corpus, n, args.theta) for n in n_list}
    harness.write_rates_csv(out_dir / "rates.csv", write_list, echo)
    harness.write_fig2_csv(out_dir / "fig2_params.csv", calibration, echo)
    r0m = {n: write[f"model0[n={n}]"].ideal_bpp for n in n_list}
    r02 = {n: write[f"rcc02[nL={n},nS={n}]"].ideal_bpp for n in n_list}
    r1m = {n: write[f"model1[n={n}]"].ideal_bpp for n in n_list}
    r2m = {n: float(two_sided[n].mean()) for n in n_list}
    harness.write_fig3_csv(out_dir / "fig3_model_rates.csv", n_list, r0m, r02,
                           r1m, r2m, echo)
    r1e = {c: write[f"empirical1[c={c}]"].ideal_bpp for c in c_list}
    harness.write_fig4_csv(out_dir / "fig4_1sided.csv", c_list, r1e, r1m[1]
                           if 1 in r1m else float("nan"), echo)
    print(f"wrote rate tables for {len(reports)} schemes to {out_dir}")
    return 0


def cmd_analyze(args):
    corpus, names = _load_corpus(args.corpus_dir)
    calibration = calib.CalibrationTable.from_csv(args.calibration)
    est = harness.analyze_corpus(corpus, args.theta, calibration,
                                 n_grid=_parse_int_list(args.n_rows))
    echo = _echo_lines("analyze", args) + [f"corpus={','.join(names)}"]
    rows = [
        ["h_inf_lower_bpp", repr(est.h_inf_lower), f"2-sided rate at n={est.h_inf_lower_n}"],
        ["divergence_0m_bpp", repr(est.div_0m), f"stderr {est.div_0m_stderr!r}"],
        ["divergence_0m_left_only_bpp", repr(est.div_0m_left_only),
         "strict left-only empirical reference"],
        ["info_adjacent_bpp", repr(est.info_adjacent), f"stderr {est.info_adjacent_stderr!r}"],
    ]
    for gap, val in sorted(est.info_gap.items()):
        rows.append([f"info_gap_{gap}_bpp", repr(val),
                     "larger gaps unavailable at this block size"])
    harness._write_csv(args.out, ["metric", "value", "note"], rows, echo)
    print(f"h_inf lower bound {est.h_inf_lower:.5f} bpp (n={est.h_inf_lower_n}); "
          f"divergence {est.div_0m:.5f} bpp; adjacent-row info {est.info_adjacent:.5f} bpp")
    return 0


def cmd_verify(args):
    corpus = calibration = None
    if args.corpus_dir:
        corpus, _ = _load_corpus(args.corpus_dir)
        if not args.calibration:
            raise ValueError("--corpus-dir verification also needs --calibration")
        calibration = calib.CalibrationTable.from_csv(args.calibration)
    checks = harness.verify_propositions(
        corpus, args.theta, calibration,
        exact_widths=tuple(_parse_int_list(args.exact_widths)))
    failed = 0
    for c in checks:
        print(c.line())
        failed += 0 if c.passed else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rcmi",
        description="Row-centric lossless compression laboratory for Ising images.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override")
        p.add_argument("--theta", type=float, default=0.4,
                       help="source model edge correlation")

    p = sub.add_parser("sample", help="generate a Gibbs-sampled PBM corpus")
    common(p)
    p.add_argument("--height", type=int, default=200)
    p.add_argument("--width", type=int, default=200)
    p.add_argument("--count", type=int, default=17)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--spacing", type=int, default=100)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="img_")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("calibrate", help="moment-match block parameters on a corpus")
    common(p)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--sidedness", default="0,1")
    p.add_argument("--n-rows", default="1-8")
    p.add_argument("--boundary-samples", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("encode", help="encode one PBM image")
    common(p)
    p.add_argument("--scheme", required=True,
                   choices=["model0", "model1", "rcc", "empirical"])
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--calibration", help="calibration CSV (model schemes)")
    p.add_argument("--n-rows", type=int, default=3)
    p.add_argument("--n-lines", type=int)
    p.add_argument("--n-strips", type=int)
    p.add_argument("--context-size", type=int, default=5)
    p.add_argument("--table", help="serialized context table (empirical)")
    p.add_argument("--train-dir", help="train the context table on this corpus")
    p.add_argument("--save-table", help="write the trained table here")
    p.add_argument("--embed-table", action="store_true",
                   help="ship the context table inside the bitstream")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream back to PBM")
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="serialized context table (external-table empirical)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="rate curves over block and context sizes")
    common(p)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--n-rows", default="1-8")
    p.add_argument("--context-sizes", default="1-8")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="redundancy and information estimates")
    common(p)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--n-rows", default="1-8")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="proposition and lemma check ledger")
    common(p)
    p.add_argument("--corpus-dir", help="also run corpus-scale ordering checks")
    p.add_argument("--calibration")
    p.add_argument("--exact-widths", default="4,6")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    try:
        return args.func(args)
    except Exception as exc:  # surface a machine-readable error, exit nonzero
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
