"""Command-line front door: fit models, run simulation grids, render reports.

Subcommands:

* ``fit``: estimate a model from a survey file and write it as JSON.
* ``simulate``: run a scenario grid from a declarative config and write
  machine-readable results, a human-readable table, and plot-ready data.
* ``report``: compare binary vs sum power across one or more results files.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .harness import (
    SCENARIO_PRESETS,
    CellResult,
    SimulationConfig,
    latent_summary,
    scenario_grid,
    scenario_preset,
)
from .ingest import (
    EmpiricalResampler,
    SurveyFormatError,
    _atomic_write_text,
    fit_model,
    load_model,
    read_survey,
    save_model,
)
from .joint import MultiActModel
from .outcomes import TARGET_PRESETS, EffectScenario

RESULTS_SCHEMA_VERSION = 1
THREADS_ENV_VAR = "CTSSIM_THREADS"

RESULTS_COLUMNS = [
    "schema_version", "scenario", "target", "coding", "n_units", "n_reps",
    "n_bootstrap", "alpha", "seed", "mean_true_ate", "true_ate_is_zero",
    "bias", "bias_mc_se", "rmse", "rmse_mc_se", "power", "power_mc_se",
    "coverage", "coverage_mc_se",
]


class ConfigError(ValueError):
    """Bad run configuration; reported before any computation starts."""


# ---------------------------------------------------------------------------
# Run configuration


@dataclass
class RunConfig:
    model: object
    scenarios: list[EffectScenario]
    targets: list
    n_units: int
    n_reps: int
    n_bootstrap: int
    alpha: float
    seed: int
    df: str
    latent_diagnostics: bool
    fingerprint: str  # sha256 of the canonical effective config document


def _canonical_hash(document: dict) -> str:
    blob = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _build_model(source: dict, base_dir: str):
    kinds = [k for k in ("file", "inline", "survey") if k in source]
    if len(kinds) != 1:
        raise ConfigError(
            f"config 'model' must have exactly one of file/inline/survey, got {kinds}"
        )
    kind = kinds[0]
    if kind == "file":
        return load_model(os.path.join(base_dir, source["file"]))
    if kind == "inline":
        return MultiActModel.from_dict(source["inline"])
    survey = source["survey"]
    for key in ("data", "descriptor"):
        if key not in survey:
            raise ConfigError(f"config model.survey is missing {key!r}")
    table = read_survey(
        os.path.join(base_dir, survey["data"]),
        os.path.join(base_dir, survey["descriptor"]),
    )
    family = survey.get("family", "zip")
    use = survey.get("use", "fit")
    if use == "fit":
        model, _ = fit_model(table, family, survey.get("sigma_method", "adjusted"))
        return model
    if use == "resample":
        return EmpiricalResampler(table, family=family)
    raise ConfigError(f"config model.survey.use must be 'fit' or 'resample', got {use!r}")


def _build_scenarios(raw: list, magnitude: int, floor: int) -> list[EffectScenario]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("config 'scenarios' must be a non-empty list")
    out = []
    for item in raw:
        if isinstance(item, str):
            if item not in SCENARIO_PRESETS:
                raise ConfigError(
                    f"unknown scenario preset {item!r}; have {sorted(SCENARIO_PRESETS)}"
                )
            out.append(scenario_preset(item, magnitude=magnitude, floor=floor))
        elif isinstance(item, dict):
            try:
                out.append(
                    EffectScenario(
                        tuple(item["probs"]),
                        magnitude=item.get("magnitude", magnitude),
                        floor=item.get("floor", floor),
                        name=item.get("name", "custom"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad custom scenario {item!r}: {exc}") from None
        else:
            raise ConfigError(f"scenario entries must be names or objects, got {item!r}")
    return out


def _build_targets(raw: list) -> list:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("config 'targets' must be a non-empty list")
    out = []
    for item in raw:
        if isinstance(item, str):
            if item not in TARGET_PRESETS:
                raise ConfigError(f"unknown target preset {item!r}; have {TARGET_PRESETS}")
            out.append(item)
        elif isinstance(item, list):
            out.append(tuple(int(i) for i in item))
        else:
            raise ConfigError(f"target entries must be presets or index lists, got {item!r}")
    return out


def load_run_config(path: str, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if "model" not in doc:
        raise ConfigError("config is missing 'model'")
    known = {
        "model", "scenarios", "targets", "n_units", "n_reps", "n_bootstrap",
        "alpha", "seed", "df", "magnitude", "floor", "latent_diagnostics",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "n_units" not in doc:
        raise ConfigError("config is missing 'n_units'")

    effective = dict(doc)
    if seed_override is not None:
        effective["seed"] = seed_override
    seed = effective.get("seed", 0)
    magnitude = doc.get("magnitude", 2)
    floor = doc.get("floor", 1)
    scenarios = _build_scenarios(doc.get("scenarios", list(SCENARIO_PRESETS)), magnitude, floor)
    targets = _build_targets(doc.get("targets", ["all"]))
    model = _build_model(doc["model"], os.path.dirname(os.path.abspath(path)))
    try:
        probe = SimulationConfig(
            model=model,
            scenario=scenarios[0],
            n_units=int(doc["n_units"]),
            n_reps=int(doc.get("n_reps", 1000)),
            n_bootstrap=int(doc.get("n_bootstrap", 100)),
            alpha=float(doc.get("alpha", 0.05)),
            seed=int(seed),
            df=doc.get("df", "normal"),
            latent_diagnostics=bool(doc.get("latent_diagnostics", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        model=model,
        scenarios=scenarios,
        targets=targets,
        n_units=probe.n_units,
        n_reps=probe.n_reps,
        n_bootstrap=probe.n_bootstrap,
        alpha=probe.alpha,
        seed=probe.seed,
        df=probe.df,
        latent_diagnostics=probe.latent_diagnostics,
        fingerprint=_canonical_hash(effective),
    )


# ---------------------------------------------------------------------------
# Output rendering


def _fmt(value: float) -> str:
    return repr(float(value))


def _results_rows(cells: list[CellResult], run: RunConfig) -> list[dict]:
    rows = []
    for cell in cells:
        for coding in ("binary", "sum"):
            stats = cell.stats[coding]
            rows.append({
                "schema_version": RESULTS_SCHEMA_VERSION,
                "scenario": cell.scenario_name,
                "target": cell.target,
                "coding": coding,
                "n_units": cell.n_units,
                "n_reps": cell.n_reps,
                "n_bootstrap": run.n_bootstrap,
                "alpha": _fmt(cell.alpha),
                "seed": cell.seed,
                "mean_true_ate": _fmt(stats.mean_true_ate),
                "true_ate_is_zero": int(stats.true_ate_is_zero),
                "bias": _fmt(stats.bias),
                "bias_mc_se": _fmt(stats.mc_se.get("bias", float("nan"))),
                "rmse": _fmt(stats.rmse),
                "rmse_mc_se": _fmt(stats.mc_se.get("rmse", float("nan"))),
                "power": _fmt(stats.power),
                "power_mc_se": _fmt(stats.mc_se.get("power", float("nan"))),
                "coverage": _fmt(stats.coverage),
                "coverage_mc_se": _fmt(stats.mc_se.get("coverage", float("nan"))),
            })
    return rows


def _write_csv(path: str, columns: list[str], rows: list[dict]):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _human_table(cells: list[CellResult], markdown: bool) -> str:
    lines = []
    targets = []
    for cell in cells:
        if cell.target not in targets:
            targets.append(cell.target)
    flagged = False
    for target in targets:
        block = [c for c in cells if c.target == target]
        title = f"Target: {target}  (n_units={block[0].n_units}, n_reps={block[0].n_reps})"
        lines.append(f"## {title}" if markdown else title)
        header = ["Scenario", "Coding", "Bias", "RMSE", "Power", "Coverage"]
        rows = []
        for cell in block:
            for coding in ("binary", "sum"):
                s = cell.stats[coding]
                mark = "*" if s.true_ate_is_zero else ""
                flagged = flagged or bool(mark)
                rows.append([
                    cell.scenario_name, coding, f"{s.bias:.4f}", f"{s.rmse:.4f}",
                    f"{s.power:.3f}{mark}", f"{s.coverage:.3f}",
                ])
        if markdown:
            lines.append("| " + " | ".join(header) + " |")
            lines.append("|" + "|".join("---" for _ in header) + "|")
            lines.extend("| " + " | ".join(r) + " |" for r in rows)
        else:
            widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
            lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
            lines.extend("  ".join(r[i].ljust(widths[i]) for i in range(len(header))) for r in rows)
        lines.append("")
    if flagged:
        lines.append("* true effect is 0 for this coding; the power column is a type-I error rate.")
        lines.append("")
    return "\n".join(lines)


def _power_long_rows(cells: list[CellResult]) -> list[dict]:
    rows = []
    for cell in cells:
        for coding in ("binary", "sum"):
            s = cell.stats[coding]
            rows.append({
                "schema_version": RESULTS_SCHEMA_VERSION,
                "scenario": cell.scenario_name,
                "target": cell.target,
                "coding": coding,
                "power": _fmt(s.power),
                "power_mc_se": _fmt(s.mc_se.get("power", float("nan"))),
                "true_ate_is_zero": int(s.true_ate_is_zero),
            })
    return rows


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(args) -> int:
    try:
        table = read_survey(args.data, args.descriptor)
        model, report = fit_model(table, args.family, args.sigma_method)
    except (SurveyFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    save_model(model, args.out)
    print(f"fitted {table.n_acts} acts on {table.n_rows} rows "
          f"({table.n_dropped} dropped for missing values); model -> {args.out}")
    header = f"{'act':40s} {'family':6s} {'rate':>8s} {'zero_prob':>10s} {'disp':>8s} {'loglik':>12s} {'gof_p':>7s}"
    print(header)
    for act_fit, margin in zip(report.per_act, model.margins):
        disp = f"{margin.dispersion:.3f}" if margin.dispersion is not None else "-"
        gof = f"{act_fit.chi2_p:.3f}" if act_fit.chi2_p is not None else "-"
        flag = " [degenerate]" if act_fit.fit.degenerate else ""
        print(f"{act_fit.label[:40]:40s} {margin.family:6s} {margin.rate:8.3f} "
              f"{margin.zero_prob:10.3f} {disp:>8s} {act_fit.fit.loglik:12.2f} {gof:>7s}{flag}")
    return 0


def cmd_simulate(args) -> int:
    started = time.time()
    try:
        run = load_run_config(args.config, args.seed)
    except (ConfigError, SurveyFormatError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    threads = args.threads or int(os.environ.get(THREADS_ENV_VAR, "1"))
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)

    base = SimulationConfig(
        model=run.model,
        scenario=run.scenarios[0],
        n_units=run.n_units,
        n_reps=run.n_reps,
        n_bootstrap=run.n_bootstrap,
        alpha=run.alpha,
        seed=run.seed,
        df=run.df,
        latent_diagnostics=run.latent_diagnostics,
    )
    cells = scenario_grid(base, run.scenarios, run.targets, threads=threads)

    results_path = os.path.join(out_dir, "results.csv")
    _write_csv(results_path, RESULTS_COLUMNS, _results_rows(cells, run))
    long_path = os.path.join(out_dir, "power_long.csv")
    _write_csv(
        long_path,
        ["schema_version", "scenario", "target", "coding", "power", "power_mc_se", "true_ate_is_zero"],
        _power_long_rows(cells),
    )
    table_ext = "md" if args.table_format == "md" else "txt"
    table_path = os.path.join(out_dir, f"results.{table_ext}")
    _atomic_write_text(table_path, _human_table(cells, markdown=args.table_format == "md"))
    if run.latent_diagnostics:
        n_items = len(run.model.acts)
        latent_rows = []
        for cell in cells:
            report = latent_summary(cell.reps, n_items)
            latent_rows.append({
                "schema_version": RESULTS_SCHEMA_VERSION,
                "scenario": cell.scenario_name,
                "target": cell.target,
                **{k: _fmt(v) for k, v in report.items()},
            })
        _write_csv(
            os.path.join(out_dir, "latent_diagnostics.csv"),
            ["schema_version", "scenario", "target", "mean_latent_count_ate",
             "denormalized_sum_bias", "denormalized_sum_coverage"],
            latent_rows,
        )

    elapsed = time.time() - started
    meta = {
        "config_hash": run.fingerprint,
        "seed": run.seed,
        "version": __version__,
        "threads": threads,
        "wall_clock_seconds": round(elapsed, 3),
        "cells": len(cells),
    }
    _atomic_write_text(os.path.join(out_dir, "run_meta.json"), json.dumps(meta, indent=2) + "\n")
    print(f"config {run.fingerprint[:12]} seed {run.seed} version {__version__} "
          f"threads {threads}: {len(cells)} cells in {elapsed:.1f}s -> {out_dir}")
    return 0


def _read_results(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty results file")
    for row in rows:
        if int(row.get("schema_version", -1)) != RESULTS_SCHEMA_VERSION:
            raise ValueError(
                f"{path}: results schema version {row.get('schema_version')!r} "
                f"does not match supported version {RESULTS_SCHEMA_VERSION}"
            )
        # full path: distinct runs often share the basename results.csv
        row["_source"] = path
    return rows


def power_differences(rows: list[dict]) -> list[dict]:
    """Per-cell power(binary) - power(sum) with propagated bootstrap SE."""
    cells: dict[tuple, dict[str, dict]] = {}
    for row in rows:
        key = (row["_source"], row["scenario"], row["target"], row["n_units"], row["seed"])
        cells.setdefault(key, {})[row["coding"]] = row
    out = []
    for key in sorted(cells):
        pair = cells[key]
        if set(pair) != {"binary", "sum"}:
            raise ValueError(f"cell {key} lacks both codings")
        b, s = pair["binary"], pair["sum"]
        diff = float(b["power"]) - float(s["power"])
        se = float(np.hypot(float(b["power_mc_se"]), float(s["power_mc_se"])))
        flags = []
        if int(b["true_ate_is_zero"]):
            flags.append("binary true effect = 0 (type-I rate)")
        if int(s["true_ate_is_zero"]):
            flags.append("sum true effect = 0 (type-I rate)")
        out.append({
            "source": key[0],
            "scenario": key[1],
            "target": key[2],
            "power_binary": float(b["power"]),
            "power_sum": float(s["power"]),
            "power_diff": diff,
            "power_diff_se": se,
            "flags": "; ".join(flags),
        })
    return out


def cmd_report(args) -> int:
    try:
        rows = []
        for path in args.results:
            rows.extend(_read_results(path))
        diffs = power_differences(rows)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    columns = ["source", "scenario", "target", "power_binary", "power_sum",
               "power_diff", "power_diff_se", "flags"]
    if args.format == "csv":
        formatted = [
            {k: (_fmt(v) if isinstance(v, float) else v) for k, v in d.items()} for d in diffs
        ]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(formatted)
        text = buf.getvalue()
    else:
        header = columns
        body = [
            [d["source"], d["scenario"], d["target"], f"{d['power_binary']:.3f}",
             f"{d['power_sum']:.3f}", f"{d['power_diff']:+.3f}", f"{d['power_diff_se']:.3f}",
             d["flags"]]
            for d in diffs
        ]
        if args.format == "md":
            lines = ["| " + " | ".join(header) + " |",
                     "|" + "|".join("---" for _ in header) + "|"]
            lines += ["| " + " | ".join(r) + " |" for r in body]
        else:
            widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h)
                      for i, h in enumerate(header)]
            lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
            lines += ["  ".join(r[i].ljust(widths[i]) for i in range(len(header))) for r in body]
        text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
        print(f"report -> {args.out}")
    else:
        print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctssim",
        description="Simulate randomized trials with multi-item violence outcomes "
                    "and compare binary vs normalized-sum outcome codings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to survey data")
    p_fit.add_argument("--data", required=True, help="survey CSV path")
    p_fit.add_argument("--descriptor", required=True, help="survey descriptor JSON path")
    p_fit.add_argument("--family", choices=["zip", "zinb"], default="zip")
    p_fit.add_argument("--sigma-method", choices=["adjusted", "raw"], default="adjusted",
                       help="latent correlation estimator (default adjusted)")
    p_fit.add_argument("--out", required=True, help="output model JSON path")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo scenario grid")
    p_sim.add_argument("--config", required=True, help="run config JSON path")
    p_sim.add_argument("--out-dir", required=True, help="output directory")
    p_sim.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default ${THREADS_ENV_VAR} or 1); "
                            "never affects results")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--table-format", choices=["md", "txt"], default="md")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="binary-vs-sum power differences")
    p_rep.add_argument("--results", nargs="+", required=True, help="results.csv paths")
    p_rep.add_argument("--format", choices=["csv", "md", "txt"], default="txt")
    p_rep.add_argument("--out", default=None, help="write here instead of stdout")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
