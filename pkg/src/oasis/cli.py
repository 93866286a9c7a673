"""Command-line front end: ``run``, ``sweep``, ``report`` and ``solve-threshold``.

Configuration files are INI-style (``[section]`` headers, ``key = value``
lines, ``#`` comments). Every key has a fixed type given in :data:`SCHEMA`;
unknown keys and missing sections are errors. See README.md for the grammar
and the output formats.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .metrics import mean_std
from .select import GATING_MODES, STATS_SOURCES, SelectorConfig
from .siren import SirenConfig
from .sim import SELECTORS, EvalParams, ModelParams, RunConfig, StreamParams, run_experiment
from .stats import ThresholdSolverConfig, solve_threshold


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    kind: str  # int | float | bool | str | ints | optfloat
    default: object
    check: Optional[Callable[[object], bool]] = None
    valid: str = ""


def _between(lo, hi, lo_open=True, hi_open=True):
    def check(v):
        return (v > lo if lo_open else v >= lo) and (v < hi if hi_open else v <= hi)
    left = "(" if lo_open else "["
    right = ")" if hi_open else "]"
    return check, f"{left}{lo}, {hi}{right}"


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _in(options):
    return (lambda v: v in options), "one of " + ", ".join(options)


_open01, _open01_s = _between(0, 1)
_closed01, _closed01_s = _between(0, 1, False, False)
_alpha, _alpha_s = _between(0, 1, True, False)
_dup, _dup_s = _between(0, 1, False, True)

SCHEMA: dict = {
    "run": {
        "seed": Key("int", 0, _nonneg, ">= 0"),
    },
    "stream": {
        "task_sizes": Key("ints", (3000, 1000, 4000, 2000),
                          lambda v: len(v) > 0 and all(x > 0 for x in v), "non-empty, each > 0"),
        "classes_per_task": Key("int", 2, _positive, "> 0"),
        "feature_dim": Key("int", 64, _positive, "> 0"),
        "center_spread": Key("float", 0.5, _nonneg, ">= 0"),
        "feature_scale": Key("float", 1.0, _nonneg, ">= 0"),
        "batch_size": Key("int", 16, _positive, "> 0"),
        "shuffle_within_task": Key("bool", True),
        "duplicate_fraction": Key("float", 0.0, _dup, _dup_s),
        "duplicate_prototypes": Key("int", 4, _positive, "> 0"),
        "duplicate_hardness": Key("float", 0.0, _closed01, _closed01_s),
        "recurrence": Key("float", 0.0, _closed01, _closed01_s),
        "test_per_task": Key("int", 200, _positive, "> 0"),
    },
    "selector": {
        "name": Key("str", "oasis", *_in(SELECTORS)),
        "target_ratio": Key("float", 0.25, _open01, _open01_s),
        "threshold": Key("optfloat", None),
        "alpha": Key("float", 0.9, _alpha, _alpha_s),
        "gating_mode": Key("str", "per_sample_bernoulli", *_in(GATING_MODES)),
        "gate_slope": Key("float", 2.0, _positive, "> 0"),
        "siren_enabled": Key("bool", True),
        "siren_max_order": Key("int", 3, _positive, ">= 1"),
        "siren_exact": Key("bool", False),
        "normalize_by_variance": Key("bool", False),
        "controller_gain": Key("optfloat", None, lambda v: v is None or v > 0, "> 0 or empty"),
        "stats_source": Key("str", "raw", *_in(STATS_SOURCES)),
        "prune_prob": Key("float", 0.5, _closed01, _closed01_s),
        "reeligible": Key("bool", True),
    },
    "model": {
        "learning_rate": Key("float", 0.05, _positive, "> 0"),
        "iterations_per_encounter": Key("float", 0.125, _positive, "> 0"),
        "init_scale": Key("float", 0.0, _nonneg, ">= 0"),
    },
    "metrics": {
        "eval_every": Key("int", 0, _nonneg, ">= 0"),
        "density_bandwidth": Key("optfloat", None, lambda v: v is None or v > 0, "> 0 or empty"),
        "density_max_points": Key("int", 2000, lambda v: v >= 2, ">= 2"),
    },
    "output": {
        "dir": Key("str", "results"),
        "summary_file": Key("str", "summary.json"),
        "steps_file": Key("str", "steps.jsonl"),
    },
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_value(section: str, key: str, kdef: Key, raw: str):
    name = f"{section}.{key}"
    text = raw.strip()
    try:
        if kdef.kind == "int":
            value = int(text)
        elif kdef.kind == "float":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
        elif kdef.kind == "optfloat":
            value = None if text in ("", "none") else float(text)
        elif kdef.kind == "bool":
            low = text.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError
            value = low in _TRUE
        elif kdef.kind == "ints":
            value = tuple(int(p) for p in text.split(",") if p.strip())
        else:
            value = text
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kdef.kind}") from None
    if kdef.check is not None and not kdef.check(value):
        raise ConfigError(f"{name} = {raw.strip()} is out of range; valid range: {kdef.valid}")
    return value


def _format_value(kdef: Key, value) -> str:
    if value is None:
        return ""
    if kdef.kind == "bool":
        return "true" if value else "false"
    if kdef.kind == "ints":
        return ", ".join(str(v) for v in value)
    if kdef.kind in ("float", "optfloat"):
        return repr(float(value))
    return str(value)


def parse_config_text(text: str) -> dict:
    """Parse config text into ``{section: {key: value}}`` with defaults filled."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    out = {}
    for section, keys in SCHEMA.items():
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")
        for key in parser[section]:
            if key not in keys:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
        out[section] = {k: (_parse_value(section, k, kdef, parser[section][k])
                            if k in parser[section] else kdef.default)
                        for k, kdef in keys.items()}
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def dump_config(values: dict) -> str:
    """Serialise parsed values back to config text (canonical key order)."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, kdef in keys.items():
            lines.append(f"{key} = {_format_value(kdef, values[section][key])}".rstrip())
        lines.append("")
    return "\n".join(lines)


def resolve(values: dict) -> dict:
    """Copy of ``values`` with the threshold solved when left empty."""
    out = {s: dict(v) for s, v in values.items()}
    sel = out["selector"]
    if sel["threshold"] is None:
        sel["threshold"] = solve_threshold(sel["target_ratio"],
                                           ThresholdSolverConfig(gate_slope=sel["gate_slope"]))
    return out


def build_run_config(values: dict) -> RunConfig:
    st, sel, mo, me = (values[k] for k in ("stream", "selector", "model", "metrics"))
    try:
        return RunConfig(
            seed=values["run"]["seed"],
            stream=StreamParams(**st),
            selector_name=sel["name"],
            selector=SelectorConfig(
                target_ratio=sel["target_ratio"], threshold=sel["threshold"],
                alpha=sel["alpha"], gating_mode=sel["gating_mode"],
                siren=SirenConfig(sel["siren_enabled"], sel["siren_max_order"], sel["siren_exact"]),
                normalize_by_variance=sel["normalize_by_variance"], gate_slope=sel["gate_slope"],
                controller_gain=sel["controller_gain"], stats_source=sel["stats_source"],
                seed=values["run"]["seed"]),
            prune_prob=sel["prune_prob"], reeligible=sel["reeligible"],
            model=ModelParams(**mo), metrics=EvalParams(**me))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def execute(values: dict, out_dir: Path) -> dict:
    """Run one resolved config and write its step log and summary into ``out_dir``.

    The step log is appended line by line; the summary is written last and
    atomically, so a summary file only exists for a completed run.
    """
    values = resolve(values)
    record = run_experiment(build_run_config(values), config_snapshot=values)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = values["output"]
    steps_path = out_dir / out["steps_file"]
    with open(steps_path, "w") as fh:
        for step in record.steps:
            fh.write(json.dumps(step) + "\n")
    summary = record.summary()
    _write_atomic(out_dir / out["summary_file"], json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_run(config_path, seed=None, out=None) -> int:
    try:
        values = load_config(config_path)
        if seed is not None:
            values["run"]["seed"] = int(seed)
        build_run_config(resolve(values))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(out) if out is not None else Path(values["output"]["dir"])
    try:
        summary = execute(values, out_dir)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1
    print(f"{summary['selector']} seed={summary['seed']} A_avg={summary['a_avg']:.4f} "
          f"A_last={summary['a_last']:.4f} realized_ratio={summary['realized_ratio']:.4f}")
    return 0


def _sweep_job(args):
    values, out_dir = args
    return execute(values, Path(out_dir))


SUMMARY_COLUMNS = ("selector", "target_ratio", "n_runs", "a_avg_mean", "a_avg_std",
                   "a_last_mean", "a_last_std", "realized_ratio_mean", "density_mean",
                   "forward_mean", "last_layer_grad_mean", "backward_mean")


def summarize(summaries) -> list:
    """One row per (selector, target ratio): mean and sample std over runs."""
    groups = defaultdict(list)
    for s in summaries:
        groups[(s["selector"], s["config"]["selector"]["target_ratio"])].append(s)
    rows = []
    for (name, ratio), group in sorted(groups.items()):
        a_avg_m, a_avg_s = mean_std([g["a_avg"] for g in group])
        a_last_m, a_last_s = mean_std([g["a_last"] for g in group])
        dens = [g["density"] for g in group if g["density"] is not None]
        rows.append({
            "selector": name, "target_ratio": ratio, "n_runs": len(group),
            "a_avg_mean": a_avg_m, "a_avg_std": a_avg_s,
            "a_last_mean": a_last_m, "a_last_std": a_last_s,
            "realized_ratio_mean": mean_std([g["realized_ratio"] for g in group])[0],
            "density_mean": mean_std(dens)[0] if dens else None,
            "forward_mean": mean_std([g["counters"]["forward"] for g in group])[0],
            "last_layer_grad_mean": mean_std([g["counters"]["last_layer_grad"] for g in group])[0],
            "backward_mean": mean_std([g["counters"]["backward"] for g in group])[0],
        })
    return rows


def _rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else row[k]) for k in SUMMARY_COLUMNS})
    return buf.getvalue()


def _print_table(rows, stream=None) -> None:
    stream = stream if stream is not None else sys.stdout
    header = (f"{'selector':<18} {'ratio':>7} {'n':>3} {'A_avg':>15} {'A_last':>15} "
              f"{'realized':>8} {'density':>8} {'forward':>9} {'llgrad':>9} {'backward':>9}")
    print(header, file=stream)
    for r in rows:
        dens = "-" if r["density_mean"] is None else f"{r['density_mean']:.4f}"
        print(f"{r['selector']:<18} {r['target_ratio']:>7.4f} {r['n_runs']:>3} "
              f"{r['a_avg_mean']:.4f}±{r['a_avg_std']:.4f} {r['a_last_mean']:.4f}±{r['a_last_std']:.4f} "
              f"{r['realized_ratio_mean']:>8.4f} {dens:>8} {r['forward_mean']:>9.0f} "
              f"{r['last_layer_grad_mean']:>9.0f} {r['backward_mean']:>9.0f}", file=stream)


def cmd_sweep(config_path, selectors=None, ratios=None, seeds=None, out=None, jobs=1) -> int:
    try:
        base = load_config(config_path)
        root = Path(out) if out is not None else Path(base["output"]["dir"])
        sel_keys = SCHEMA["selector"]
        names = [_parse_value("selector", "name", sel_keys["name"], n)
                 for n in (selectors or [base["selector"]["name"]])]
        # an explicit ratio list always re-solves the threshold per ratio
        ratio_list = ([_parse_value("selector", "target_ratio", sel_keys["target_ratio"], str(r))
                       for r in ratios] if ratios else [base["selector"]["target_ratio"]])
        jobs_list = []
        for name in names:
            for ratio in ratio_list:
                for seed in (seeds or [base["run"]["seed"]]):
                    values = {s: dict(v) for s, v in base.items()}
                    values["selector"]["name"] = name
                    values["selector"]["target_ratio"] = ratio
                    if ratios:
                        values["selector"]["threshold"] = None
                    values["run"]["seed"] = int(seed)
                    build_run_config(resolve(values))
                    jobs_list.append((values, str(root / f"{name}_r{ratio}_s{seed}")))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_sweep_job, jobs_list))
    else:
        summaries = [_sweep_job(j) for j in jobs_list]
    rows = summarize(summaries)
    root.mkdir(parents=True, exist_ok=True)
    _write_atomic(root / "sweep_summary.csv", _rows_to_csv(rows))
    _print_table(rows)
    return 0


def cmd_report(results_dir, summary_name: str = "summary.json") -> int:
    root = Path(results_dir)
    if not root.is_dir():
        print(f"error: results directory not found: {root}", file=sys.stderr)
        return 2
    valid, bad = [], []
    for path in sorted(root.rglob(summary_name)):
        try:
            data = json.loads(path.read_text())
            for field in ("selector", "a_avg", "a_last", "realized_ratio", "counters", "config"):
                data[field]
            valid.append(data)
        except (OSError, ValueError, KeyError, TypeError):
            bad.append(path)
    for path in bad:
        print(f"skipping corrupt record: {path}", file=sys.stderr)
    if not valid:
        print("error: no valid run records found", file=sys.stderr)
        return 1
    rows = summarize(valid)
    _print_table(rows)
    _write_atomic(root / "report.csv", _rows_to_csv(rows))
    return 0


def cmd_solve_threshold(ratio: float, gate_slope: float = 2.0) -> int:
    try:
        value = solve_threshold(ratio, ThresholdSolverConfig(gate_slope=gate_slope))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{value:.6f}")
    return 0


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="oasis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="selectors x ratios x seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--selectors", type=_strs)
    p.add_argument("--ratios", type=_floats)
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", help="tabulate a directory of run records")
    p.add_argument("results_dir")

    p = sub.add_parser("solve-threshold", help="print the threshold for a target ratio")
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--gate-slope", type=float, default=2.0)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.selectors, args.ratios, args.seeds, args.out, args.jobs)
    if args.command == "report":
        return cmd_report(args.results_dir)
    return cmd_solve_threshold(args.ratio, args.gate_slope)


if __name__ == "__main__":
    sys.exit(main())
