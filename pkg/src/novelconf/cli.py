"""Command-line entry point: ``novelconf <command> [flags]``.

Exit codes: 0 success, 1 input error, 2 internal failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, calibration, ensemble, metrics
from .predictions import PredictionFileError, filter_by_group, load_predictions, to_probabilities
from .report import REPORT_METRICS, build_report
from .toybench import GENERATORS, METHODS, ToyConfig, ToySpec, run_experiment

log = logging.getLogger("novelconf")


class InputError(Exception):
    pass


def _write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _format_reports(reports: dict) -> str:
    names = ("nll", "brier", "label_error", "ece", "e99", "e99_count", "n")
    lines = ["group          " + "".join(f"{n:>12s}" for n in names)]
    for g, r in reports.items():
        d = r.to_dict()
        cells = []
        for n in names:
            v = d[n]
            cells.append(f"{'n/a':>12s}" if v is None else (f"{v:>12d}" if isinstance(v, int) else f"{v:>12.6f}"))
        lines.append(f"{g:15s}" + "".join(cells))
    return "\n".join(lines)


def cmd_eval(args) -> int:
    pset = load_predictions(args.pred, args.format)
    if args.calibrator:
        probs = calibration.apply(calibration.load_calibrator(args.calibrator), pset)
    else:
        probs = to_probabilities(pset)
    reports = metrics.evaluate_by_group(probs)
    if not reports:
        raise InputError("no labeled rows to evaluate")
    print(_format_reports(reports))
    if args.out:
        _write_json(args.out, {
            "source": str(args.pred),
            "calibrator": args.calibrator and calibration.load_calibrator(args.calibrator).to_dict(),
            "groups": {g: r.to_dict(breakdown=True) for g, r in reports.items()},
        })
    return 0


def _val_rows(pset):
    val = filter_by_group(pset, "val")
    if len(val) == 0:
        raise InputError("prediction file has no val-tagged rows")
    return val


def cmd_fit_temp(args) -> int:
    cal = calibration.fit_temperature(_val_rows(load_predictions(args.pred, args.format)))
    print(json.dumps(cal.to_dict()))
    if args.out:
        calibration.save_calibrator(cal, args.out)
    return 0


def cmd_fit_novelty(args) -> int:
    pset = load_predictions(args.pred, args.format)
    val = _val_rows(pset)
    if not val.has_novelty:
        raise InputError("val rows need a novelty score")
    train = filter_by_group(pset, "train")
    source = train if len(train) else val
    if not len(train):
        log.warning("no train rows; novelty percentiles taken from val rows")
    scores = source.novelty[~np.isnan(source.novelty)]
    cal = calibration.fit_novelty_scaling(val, calibration.fit_novelty_percentiles(scores))
    print(json.dumps(cal.to_dict()))
    if args.out:
        calibration.save_calibrator(cal, args.out)
    return 0


def cmd_combine(args) -> int:
    members = [load_predictions(p, args.format) for p in args.pred]
    if args.calibrate == "member":
        probs, cals = ensemble.ensemble_of_calibrated([(m, _val_rows(m)) for m in members])
        log.info("member temperatures: %s", [c.t for c in cals])
    elif args.calibrate == "shared":
        cal = ensemble.fit_shared_ensemble_temperature(members, _val_rows(members[0]).ids)
        probs = ensemble.apply_shared(cal, members)
        log.info("shared temperature: %s", cal.t)
    else:
        probs = ensemble.combine([to_probabilities(m) for m in members])
    C = probs.class_count
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["id", "label", "group"] + [f"p_{c}" for c in range(C)])
        for i in range(len(probs)):
            w.writerow([probs.ids[i], int(probs.labels[i]), probs.groups[i]] + [repr(float(v)) for v in probs.probs[i]])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def sweep_rows(pset, t_min: float, t_max: float, steps: int) -> tuple[list, list]:
    if not t_min > 0 or t_max < t_min or steps < 2:
        raise InputError("need 0 < t_min <= t_max and steps >= 2")
    groups = [g for g in dict.fromkeys(pset.groups) if g != "unsup"]
    header = ["t"] + [f"{m}_{g}" for g in groups for m in ("nll", "ece")]
    rows = []
    for t in np.linspace(t_min, t_max, steps):
        probs = calibration.apply(calibration.FixedTemperature(float(t)), pset)
        row = [float(t)]
        for g in groups:
            sub = probs.select_group(g)
            row += [metrics.nll(sub), metrics.ece(sub)[0]]
        rows.append(row)
    return header, rows


def cmd_sweep(args) -> int:
    header, rows = sweep_rows(load_predictions(args.pred, args.format), args.t_min, args.t_max, args.steps)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(header)
        w.writerows([[repr(v) for v in r] for r in rows])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _load_report(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "groups" not in doc:
        raise InputError(f"{path}: not a report document (missing 'groups')")
    return doc["groups"]


def cmd_report(args) -> int:
    methods = {}
    for item in args.method:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        methods[name] = _load_report(path)
    try:
        table = build_report(_load_report(args.baseline), methods, args.baseline_name)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    md = table.to_markdown()
    print(md, end="")
    if args.out:
        out = Path(args.out)
        _write_json(out.with_suffix(".json"), table.to_dict())
        out.with_suffix(".md").write_text(md, encoding="utf-8")
    return 0


def _roster(text: str) -> list:
    if text == "all":
        return list(METHODS)
    roster = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in roster if m not in METHODS]
    if bad or not roster:
        raise InputError(f"unknown methods {bad}; choose from {', '.join(METHODS)} or 'all'")
    return roster


def toy_summary_markdown(run) -> str:
    summary = run.summary()
    lines = [f"# Toy benchmark: {run.spec.generator}, seeds {run.seeds}", "",
             "Mean ± std over seeds.", "",
             "| method | group | " + " | ".join(REPORT_METRICS) + " |",
             "|---|---|" + "---|" * len(REPORT_METRICS)]
    for m in run.roster:
        for g, vals in summary[m].items():
            cells = []
            for name in REPORT_METRICS:
                v = vals[name]
                cells.append("n/a" if v["mean"] is None else f"{v['mean']:.4f} ± {v['std']:.4f}")
            lines.append(f"| {m} | {g} | " + " | ".join(cells) + " |")
    if "single" in run.roster and len(run.roster) > 1:
        base = {g: {k: v["mean"] for k, v in vals.items()} for g, vals in summary["single"].items()}
        others = {m: {g: {k: v["mean"] for k, v in vals.items()} for g, vals in summary[m].items()}
                  for m in run.roster if m != "single"}
        lines += ["", "Percent reduction vs. uncalibrated single model (seed means):", "",
                  build_report(base, others, "single").to_markdown()]
    if run.seconds:
        lines += ["", f"Wall time: {sum(run.seconds.values()):.1f} s over {len(run.seconds)} seed(s)."]
    failures = {s: r["failures"] for s, r in run.per_seed.items() if r["failures"]}
    if failures:
        lines += ["", "Failures:", ""] + [f"- seed {s}: {f}" for s, f in failures.items()]
    return "\n".join(lines) + "\n"


def cmd_toy(args) -> int:
    roster = _roster(args.roster)
    if args.seeds < 1 or args.width < 1:
        raise InputError("--seeds and --width must be positive")
    spec = ToySpec(generator=args.spec, seed=args.seed)
    config = ToyConfig(width=args.width, members=args.members,
                       train=replace(ToyConfig().train, max_epochs=args.epochs))
    seeds = list(range(args.seed, args.seed + args.seeds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = run_experiment(spec, roster, seeds, config, progress=lambda msg: log.info(msg))
    _write_json(out / "config.json", {
        "spec": run.to_dict()["spec"], "config": config.to_dict(), "roster": roster, "seeds": seeds,
        "versions": {"novelconf": __version__, "python": platform.python_version(), "numpy": np.__version__},
    })
    _write_json(out / "results.json", run.to_dict())
    md = toy_summary_markdown(run)
    (out / "summary.md").write_text(md, encoding="utf-8")
    with open(out / "heatmap.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "x1", "group", "method", "nll"])
        for _, x0, x1, g, m, v in run.heatmap_rows():
            w.writerow([repr(x0), repr(x1), g, m, repr(v)])
    print(md, end="")
    failed = sum(len(r["failures"]) for r in run.per_seed.values())
    if failed:
        print(f"{failed} method run(s) failed; see results.json", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="novelconf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def pred_cmd(name, func, help):
        sp = sub.add_parser(name, help=help, parents=[common])
        sp.add_argument("--pred", required=True)
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--out")
        sp.set_defaults(func=func)
        return sp

    sp = pred_cmd("eval", cmd_eval, "metrics per group tag")
    sp.add_argument("--calibrator")
    pred_cmd("fit-temp", cmd_fit_temp, "fit a single temperature on val rows")
    pred_cmd("fit-novelty", cmd_fit_novelty, "fit novelty-weighted temperature on val rows")
    sp = pred_cmd("sweep", cmd_sweep, "NLL/ECE per group over a temperature grid")
    sp.add_argument("--t-min", type=float, default=0.25)
    sp.add_argument("--t-max", type=float, default=5.0)
    sp.add_argument("--steps", type=int, default=20)

    sp = sub.add_parser("combine", help="average member predictions into a probability CSV", parents=[common])
    sp.add_argument("--pred", required=True, action="append", help="repeat once per member")
    sp.add_argument("--format", choices=("csv", "json"), default=None)
    sp.add_argument("--calibrate", choices=("none", "member", "shared"), default="none")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_combine)

    sp = sub.add_parser("report", help="baseline + percent-reduction table from eval reports", parents=[common])
    sp.add_argument("--baseline", required=True)
    sp.add_argument("--baseline-name", default="Baseline")
    sp.add_argument("--method", action="append", default=[], help="NAME=PATH (repeatable)")
    sp.add_argument("--out", help="output stem; writes .json and .md")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("toy", help="run the 2-D familiar/novel benchmark", parents=[common])
    sp.add_argument("--spec", choices=GENERATORS, default="blobs")
    sp.add_argument("--roster", default="all")
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--width", type=int, default=128)
    sp.add_argument("--members", type=int, default=10)
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--out", default="toy_run")
    sp.set_defaults(func=cmd_toy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, PredictionFileError, FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.exception("internal failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
