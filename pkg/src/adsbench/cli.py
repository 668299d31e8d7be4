"""Command-line entry point: run, compare, render, route, selftest."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from adsbench import __version__
from adsbench.campaign import MODES, TECHNIQUES, CampaignConfig, default_jobs, run_campaign
from adsbench.routes import ROUTE_IDS, ConfigError, builtin_route, load_route
from adsbench.stats import auc_normalized, dunn, format_p, friedman, summarize
from adsbench import svg

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# flag name -> CampaignConfig field
RUN_FLAGS = {
    "technique": "technique",
    "route": "route",
    "mode": "mode",
    "detection": "detection",
    "budget_steps": "budget_steps",
    "episode_timeout": "episode_timeout",
    "reps": "repetitions",
    "seed": "base_seed",
    "frame": "frame",
    "action_repeat": "action_repeat",
    "key_decimals": "key_decimals",
}


class UsageError(Exception):
    pass


def _decimals(text: str):
    if text == "full":
        return "full"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer or 'full'") from None
    if value < 0:
        raise argparse.ArgumentTypeError("decimals must be >= 0")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adsbench", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a testing campaign")
    run.add_argument("--technique", choices=TECHNIQUES)
    run.add_argument("--route", choices=ROUTE_IDS)
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--detection", choices=("sensor", "threshold", "fused"))
    run.add_argument("--budget-steps", type=_positive)
    run.add_argument("--episode-timeout", type=_positive)
    run.add_argument("--reps", type=_positive)
    run.add_argument("--seed", type=int)
    run.add_argument("--frame", choices=("absolute", "relative"))
    run.add_argument("--action-repeat", type=_positive)
    run.add_argument("--key-decimals", type=_decimals)
    run.add_argument("--jobs", type=_positive)
    run.add_argument("--out", default="result")
    run.add_argument("--config", help="JSON file with CampaignConfig keys; flags override it")

    cmp_ = sub.add_parser("compare", help="Friedman + Dunn comparison of campaign directories")
    cmp_.add_argument("dirs", nargs="+")
    cmp_.add_argument("--metric", choices=("coverage", "violations", "auc"), default="violations")
    cmp_.add_argument("--out", help="report JSON path (default: stdout only)")

    ren = sub.add_parser("render", help="render SVG figures from campaign directories")
    ren.add_argument("dirs", nargs="+")
    ren.add_argument("--kind", choices=("trajectories", "coverage", "growth"), required=True)
    ren.add_argument("--out", help="output SVG path")

    route = sub.add_parser("route", help="route utilities")
    route_sub = route.add_subparsers(dest="route_command", required=True)
    dump = route_sub.add_parser("dump", help="print a built-in route as JSON")
    dump.add_argument("--route", choices=ROUTE_IDS, required=True)
    dump.add_argument("--out")

    sub.add_parser("selftest", help="gradient, statistics and geometry self-checks")
    return parser


def config_from_args(args: argparse.Namespace) -> CampaignConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for flag, key in RUN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if data.get("key_decimals") == "full":
        data["key_decimals"] = None
    return CampaignConfig.from_dict(data)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = config_from_args(args)
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    jobs = args.jobs or default_jobs()
    start = time.perf_counter()
    try:
        result = run_campaign(config, args.out, jobs=jobs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    wall = time.perf_counter() - start
    violations = result.violations()
    coverage = result.final_coverage()
    print(
        f"{config.campaign_id()}: reps={config.repetitions} "
        f"violations mean={np.mean(violations):.2f} coverage mean={np.mean(coverage):.3f} "
        f"wall={wall:.1f}s -> {result.directory}"
    )
    if result.failed:
        print(f"error: repetitions failed: {result.failed}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# -- reading campaign directories ------------------------------------------------


def load_campaign(directory: str | Path) -> dict:
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{d}: not a campaign directory ({exc})") from None
    reps = []
    for entry in meta["repetitions"]:
        rep_dir = d / f"rep_{entry['index']}"
        with open(rep_dir / "timeline.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        reps.append({
            "dir": rep_dir,
            "steps": [int(r["step"]) for r in rows],
            "coverage": [float(r["coverage"]) for r in rows],
            "violations": [int(r["violations_total"]) for r in rows],
        })
    return {"dir": d, "meta": meta, "reps": reps}


def _label(c: dict) -> str:
    cfg = c["meta"]["config"]
    return f"{cfg['technique']}/{c['meta']['detection_mode']}"


def _series(c: dict, rep: dict) -> list[float]:
    if c["meta"]["config"]["mode"] == "replication":
        return rep["coverage"]
    return [float(v) for v in rep["violations"]]


def compare_report(campaigns: list[dict], metric: str) -> dict:
    n = len(campaigns[0]["reps"])
    if any(len(c["reps"]) != n for c in campaigns):
        raise UsageError("campaigns have different repetition counts")
    keys = {(c["meta"]["config"]["route"], c["meta"]["config"]["mode"]) for c in campaigns}
    if len(keys) != 1:
        raise UsageError("campaigns differ in route or mode")
    names = [_label(c) for c in campaigns]
    if len(set(names)) != len(names):
        names = [f"{name}#{i}" for i, name in enumerate(names)]
    if metric == "coverage":
        columns = [[rep["coverage"][-1] for rep in c["reps"]] for c in campaigns]
    elif metric == "violations":
        columns = [[float(rep["violations"][-1]) for rep in c["reps"]] for c in campaigns]
    else:
        v_max = max(max(_series(c, rep)) for c in campaigns for rep in c["reps"])
        columns = []
        for c in campaigns:
            t_max = float(c["meta"]["config"]["budget_steps"])
            columns.append([auc_normalized(_series(c, rep), t_max, v_max, rep["steps"]) for rep in c["reps"]])
    matrix = np.array(columns).T
    report: dict = {"metric": metric, "techniques": names, "repetitions": n}
    report["summaries"] = {name: summarize(col) for name, col in zip(names, columns)}
    if metric == "auc":
        report["auc"] = {name: float(np.mean(col)) for name, col in zip(names, columns)}
    if n >= 2:
        f = friedman(matrix)
        d = dunn(matrix)
        report["friedman"] = {"stat": f.statistic, "df": f.df, "p": f.p, **f.meta}
        report["dunn"] = [
            {"pair": [names[p.i], names[p.j]], "z": p.z, "p_adj": p.p_adj,
             "direction": names[p.direction] if p.direction >= 0 else None}
            for p in d.pairs
        ]
    return report


def _table(report: dict) -> str:
    lines = [f"metric: {report['metric']}"]
    for name, s in report["summaries"].items():
        std = "-" if s["std"] is None else f"{s['std']:.4g}"
        lines.append(f"  {name:24s} mean {s['mean']:.4g} (median {s['median']:.4g})  std {std} (IQR {s['iqr']:.4g})")
    if "friedman" in report:
        f = report["friedman"]
        lines.append(f"Friedman chi2={f['stat']:.4f} df={f['df']} p={format_p(f['p'])}")
        for row in report["dunn"]:
            arrow = f"  [{row['direction']} higher]" if row["direction"] else ""
            lines.append(f"  {row['pair'][0]} vs {row['pair'][1]}: z={row['z']:.3f} p_adj={format_p(row['p_adj'])}{arrow}")
    return "\n".join(lines)


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.dirs) < 2:
        print("error: compare needs at least two campaign directories", file=sys.stderr)
        return EXIT_USAGE
    try:
        campaigns = [load_campaign(d) for d in args.dirs]
        report = compare_report(campaigns, args.metric)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(_table(report))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    try:
        campaigns = [load_campaign(d) for d in args.dirs]
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    first = campaigns[0]
    out = Path(args.out) if args.out else first["dir"] / f"{args.kind}.svg"
    cfg = first["meta"]["config"]
    if args.kind == "trajectories":
        route = load_route(cfg["route_file"]) if cfg.get("route_file") else builtin_route(cfg["route"])
        trajectories = []
        for c in campaigns:
            for rep in c["reps"]:
                path = rep["dir"] / "trajectories.jsonl"
                if path.exists():
                    for line in path.read_text().splitlines():
                        if line.strip():
                            trajectories.append(json.loads(line)["vif_xy"])
        if not trajectories:
            print("warning: no failure trajectories; rendering the route only", file=sys.stderr)
        text = svg.render_trajectories(route, trajectories)
    elif args.kind == "coverage":
        curves = []
        steps = first["reps"][0]["steps"]
        for c in campaigns:
            data = np.array([_series(c, rep) for rep in c["reps"]])
            mean = data.mean(axis=0)
            sem = data.std(axis=0, ddof=1) / np.sqrt(len(data)) if len(data) > 1 else np.zeros_like(mean)
            curves.append((_label(c), mean.tolist(), sem.tolist()))
        ylabel = "coverage" if cfg["mode"] == "replication" else "violations"
        text = svg.render_coverage(steps, curves, ylabel=ylabel)
    else:
        path = first["reps"][0]["dir"] / "qtable_growth.csv"
        if not path.exists():
            print(f"error: {path} missing (growth needs a tabular campaign)", file=sys.stderr)
            return EXIT_USAGE
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        text = svg.render_growth([int(r["step"]) for r in rows], [int(r["distinct_states"]) for r in rows])
    try:
        out.write_text(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(out)
    return EXIT_OK


def cmd_route(args: argparse.Namespace) -> int:
    text = json.dumps(builtin_route(args.route).to_dict(), indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    from adsbench.selftest import run_selftest

    failures = run_selftest(print)
    return EXIT_FAILURE if failures else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "run": cmd_run,
        "compare": cmd_compare,
        "render": cmd_render,
        "route": cmd_route,
        "selftest": cmd_selftest,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
