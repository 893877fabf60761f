"""Command line entry point.

Verbs: gen, noise, denoise, run, compare, filter, report. A ``--config`` JSON
document may carry any flag (dashes or underscores); explicit flags win.
Exit codes: 0 success, 1 usage error, 2 data error, 3 some matrix cells failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from ..backbone import BackboneConfig
from ..data import GENERATORS, DataError, NoiseSpec, add_gaussian_noise, load_csv, save_csv, sidecar_path
from ..denoise import DenoGradConfig, DenoiseError
from ..interpretable import KINDS
from ..metrics import MetricError
from .report import emit_report, load_results
from .scenarios import (DENOISERS, MatrixRun, RunConfig, ScenarioError, compare_denoisers, filter_verdicts,
                        make_denoiser, run_repeated)

log = logging.getLogger("denograd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="denograd", description="Gradient-based instance denoising toolkit.")
    p.add_argument("--config", help="JSON file mirroring the flags")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def data_flags(sp, multi=False):
        if multi:
            sp.add_argument("--dataset", action="append", help="generator name or CSV path (repeatable)")
        else:
            sp.add_argument("--dataset", help="generator name or CSV path")
        sp.add_argument("--target")
        sp.add_argument("--kind", choices=["static", "timeseries"])
        sp.add_argument("--window", type=int)
        sp.add_argument("--horizon", type=int)

    def denoise_flags(sp):
        sp.add_argument("--noise-threshold", type=float)
        sp.add_argument("--eta", type=float)
        sp.add_argument("--max-denoise-epochs", type=int)
        sp.add_argument("--max-epochs", type=int, help="backbone training epochs")
        sp.add_argument("--kl-bins", type=int)

    g = sub.add_parser("gen", help="write a synthetic dataset to CSV")
    g.add_argument("--dataset", choices=sorted(GENERATORS))
    g.add_argument("--n", type=int, help="number of rows")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")

    n = sub.add_parser("noise", help="inject Gaussian noise into a CSV dataset")
    data_flags(n)
    n.add_argument("--sigma", type=float)
    n.add_argument("--absolute", action="store_true", help="sigma in data units instead of column-sd multiples")
    n.add_argument("--seed", type=int)
    n.add_argument("--out")

    d = sub.add_parser("denoise", help="fit one denoiser on a dataset and denoise it")
    data_flags(d)
    d.add_argument("--denoisers", help="a single denoiser name")
    d.add_argument("--seed", type=int)
    denoise_flags(d)
    d.add_argument("--out")

    r = sub.add_parser("run", help="run the full train x test scenario matrix")
    data_flags(r, multi=True)
    r.add_argument("--sigma", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--denoisers")
    r.add_argument("--models")
    denoise_flags(r)
    r.add_argument("--workers", type=int)
    r.add_argument("--repeats", type=int)
    r.add_argument("--out", help="output directory")

    c = sub.add_parser("compare", help="Bayesian signed-rank comparison of two denoisers")
    c.add_argument("--results", help="results.json from run")
    c.add_argument("--denoisers", help="two names, comma separated")
    c.add_argument("--rope", type=float)
    c.add_argument("--seed", type=int)
    c.add_argument("--stage-pair", help="train:test stages, default denoised:denoised")
    c.add_argument("--out")

    f = sub.add_parser("filter", help="80%% underperformance verdicts")
    f.add_argument("--results")
    f.add_argument("--raw-r2", action="store_true", help="compare raw instead of clipped R2")
    f.add_argument("--out")

    rp = sub.add_parser("report", help="re-emit a results.json in another format")
    rp.add_argument("--results")
    rp.add_argument("--format", choices=["csv", "json"])
    rp.add_argument("--out")
    return p


DEFAULTS = {
    "n": None, "seed": 0, "sigma": 0.1, "absolute": False, "rope": 0.01, "workers": 1, "repeats": 1,
    "kl_bins": 50, "format": "csv", "stage_pair": "denoised:denoised", "raw_r2": False,
}


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then from DEFAULTS."""
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    out = vars(args).copy()
    for key, value in out.items():
        if value is None or (value is False and key in DEFAULTS):
            if key in file_cfg:
                out[key] = file_cfg[key]
            elif key in DEFAULTS and value is None:
                out[key] = DEFAULTS[key]
    return argparse.Namespace(**out)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, [], "")]
    if missing:
        raise UsageError(f"{args.verb}: missing {', '.join(missing)}")


def _names(value):
    if value is None:
        return None
    return _csv_list(value) if isinstance(value, str) else list(value)


def _load(args, name=None):
    name = name or args.dataset
    if name in GENERATORS:
        ds = GENERATORS[name](seed=args.seed)
    else:
        meta = {k: getattr(args, k) for k in ("window", "horizon") if getattr(args, k, None) is not None}
        ds = load_csv(name, target=args.target, kind=args.kind, **meta)
    return ds


def _denograd_config(args) -> DenoGradConfig:
    cfg = DenoGradConfig()
    changes = {}
    if getattr(args, "noise_threshold", None) is not None:
        changes["noise_threshold"] = args.noise_threshold
    if getattr(args, "eta", None) is not None:
        changes["reduction_rate"] = args.eta
    if getattr(args, "max_denoise_epochs", None) is not None:
        changes["max_epochs"] = args.max_denoise_epochs
    return replace(cfg, **changes)


def _backbone_config(args) -> BackboneConfig:
    cfg = BackboneConfig(seed=args.seed)
    if getattr(args, "max_epochs", None) is not None:
        cfg = replace(cfg, max_epochs=args.max_epochs, patience=min(cfg.patience, args.max_epochs))
    return cfg


def _run_config(args) -> RunConfig:
    try:
        cfg = RunConfig(seed=args.seed, sigma=getattr(args, "sigma", 0.1), denograd=_denograd_config(args),
                        backbone=_backbone_config(args), kl_bins=args.kl_bins,
                        workers=getattr(args, "workers", 1), repeats=getattr(args, "repeats", 1))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.workers < 1 or cfg.repeats < 1 or cfg.kl_bins < 1:
        raise UsageError("--workers, --repeats and --kl-bins must be positive")
    return cfg


# -- verbs -----------------------------------------------------------------------------


def cmd_gen(args):
    _require(args, "dataset", "out")
    kwargs = {"seed": args.seed}
    if args.n is not None:
        kwargs["n_samples" if args.dataset == "linear_combination" else "n"] = args.n
    save_csv(GENERATORS[args.dataset](**kwargs), args.out)
    print(args.out)
    return EXIT_OK


def cmd_noise(args):
    _require(args, "dataset", "out")
    ds = _load(args)
    noisy = add_gaussian_noise(ds, NoiseSpec(args.sigma, seed=args.seed, relative=not args.absolute))
    out = Path(args.out)
    clean_path = out.with_name(out.stem + ".clean.csv")
    save_csv(noisy.clean, clean_path, metadata=False)
    save_csv(noisy, out)
    meta = json.loads(sidecar_path(out).read_text())
    meta["clean"] = clean_path.name
    sidecar_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(out)
    return EXIT_OK


def cmd_denoise(args):
    _require(args, "dataset", "denoisers", "out")
    names = _names(args.denoisers)
    if len(names) != 1 or names[0] not in DENOISERS:
        raise UsageError(f"denoise takes exactly one of {DENOISERS}")
    ds = _load(args)
    cfg = _run_config(args)
    den = make_denoiser(names[0], cfg, args.seed).fit(ds)
    out_ds, report = den.transform(ds)
    save_csv(out_ds, args.out)
    summary = {"denoiser": names[0], "rows": len(out_ds.matrix)}
    if report is not None:
        summary["report"] = asdict(report)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_run(args):
    _require(args, "out")
    names = args.dataset or sorted(GENERATORS)
    if isinstance(names, str):
        names = [names]
    datasets = [_load(args, n) for n in names]
    denoisers = _names(args.denoisers) or list(DENOISERS)
    models = _names(args.models)
    for m in models or []:
        if m not in KINDS:
            raise UsageError(f"unknown model {m!r}; choose from {KINDS}")
    cfg = _run_config(args)
    try:
        run = run_repeated(datasets, denoisers, models, cfg)
    except ScenarioError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    emit_report(run, "csv", out / "results.csv")
    emit_report(run, "json", out / "results.json")
    _write_verdicts(filter_verdicts(run.results), out / "verdicts.csv")
    print(f"{len(run.results)} cells, {len(run.failed)} failed -> {out}")
    return EXIT_PARTIAL if run.failed else EXIT_OK


def _write_verdicts(verdicts, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["denoiser", "flagged", "cells", "rate", "verdict"])
        for v in verdicts.values():
            w.writerow([v.denoiser, v.flagged, v.cells, repr(v.rate), "discarded" if v.discarded else "retained"])


def cmd_compare(args):
    _require(args, "results", "denoisers")
    names = _names(args.denoisers)
    if len(names) != 2:
        raise UsageError("compare needs exactly two denoisers")
    pair = tuple(args.stage_pair.split(":"))
    if len(pair) != 2:
        raise UsageError("--stage-pair must look like train:test")
    try:
        outcome = compare_denoisers(load_results(args.results), names[0], names[1], args.rope, args.seed, pair)
    except (ScenarioError, MetricError) as exc:
        raise DataError(str(exc)) from exc
    text = json.dumps({"method_a": names[0], "method_b": names[1], **asdict(outcome)}, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_filter(args):
    _require(args, "results")
    try:
        verdicts = filter_verdicts(load_results(args.results), clipped=not args.raw_r2)
    except MetricError as exc:
        raise DataError(str(exc)) from exc
    if args.out:
        _write_verdicts(verdicts, args.out)
    for v in verdicts.values():
        print(f"{v.denoiser}: {v.flagged}/{v.cells} flagged -> {'discarded' if v.discarded else 'retained'}")
    return EXIT_OK


def cmd_report(args):
    _require(args, "results", "out")
    results = load_results(args.results)
    emit_report(MatrixRun(results, []), args.format, args.out)
    print(args.out)
    return EXIT_OK


VERBS = {"gen": cmd_gen, "noise": cmd_noise, "denoise": cmd_denoise, "run": cmd_run,
         "compare": cmd_compare, "filter": cmd_filter, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return VERBS[args.verb](resolve(args))
    except UsageError as exc:
        print(f"denograd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, DenoiseError, OSError) as exc:
        print(f"denograd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
