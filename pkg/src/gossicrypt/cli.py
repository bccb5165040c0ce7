"""Command-line front end.

CSV outputs are comma separated with a header row; floats carry 6
significant digits. Schemas:

  stationary  i,pi
  table1      L,q,p_success,flag
  success     L,q,p_success
  breach      k,F                      (--simulate: k,empirical,analytical)
  energy      metric,gossicrypt,pke_rsa,pke_ecc
  figures     fig3_stationary.csv   tau,i,pi
              fig4_empirical.csv    i,run1..runR,analytical
              fig5_success.csv      q,median,lo95,hi95,analytical
              fig6_breach.csv       k,empirical,analytical,reference

``--format json`` turns any table into a list of objects keyed by the same
header. ``simulate`` always writes SimMetrics as JSON. Exit status is 2 on
any configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import (
    SUSPECT_CELLS,
    TABLE1_LENGTHS,
    TABLE1_QS,
    MarkovModel,
    breach_probability,
    stationary,
    success_probability,
    table1,
)
from .energy import EnergyModel, EnergyReport, energy_compare
from .simulator import ConfigError, SimConfig, measure_breach, measure_success, replicate_configs, run_many

COMMANDS = ("stationary", "table1", "success", "breach", "energy", "simulate", "figures")
FIG3_TAUS = (0.6, 1.0, 1.5)
# reference single-snapshot breach probability (5 relays, q=0.5)
REFERENCE_F1 = 0.1742


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{x:.6g}"
    return str(x)


def write_csv(rows, header, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def _json_value(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(fmt(v))
    return v


def write_table(rows, header, out, format: str = "csv") -> None:
    if format == "json":
        json.dump([dict(zip(header, map(_json_value, row))) for row in rows], out, indent=2)
        out.write("\n")
    else:
        write_csv(rows, header, out)


# -- config files ---------------------------------------------------------------


_HINTS = typing.get_type_hints(SimConfig)


def _coerce(name: str, raw: str):
    if name not in _HINTS:
        raise ConfigError(name, "unknown key")
    hint = _HINTS[name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    if args:
        if raw.strip().lower() in ("none", ""):
            return None
        hint = args[0]
    text = raw.strip()
    try:
        if hint is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r} as {hint.__name__}") from None


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(pair, "override must look like key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = _coerce(key.strip(), value)
    return out


@dataclass
class ExperimentSpec:
    command: str
    config: SimConfig
    output_path: Optional[Path] = None
    format: str = "csv"

    @property
    def seed(self) -> int:
        return self.config.seed


def build_config(config_path=None, overrides=None, **flags) -> SimConfig:
    values = {}
    if config_path:
        values.update(parse_config_text(Path(config_path).read_text()))
    values.update({k: v for k, v in flags.items() if v is not None})
    values.update(overrides or {})
    return SimConfig(**values)


# -- commands -------------------------------------------------------------------


def _model(args) -> MarkovModel:
    try:
        return MarkovModel(args.n, args.lam, args.tau, args.efficiency)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None


def cmd_stationary(args, spec, out):
    pi = stationary(_model(args))
    write_table(enumerate(pi), ("i", "pi"), out, spec.format)


def table1_rows(model: MarkovModel, exclude_m0: bool = False):
    grid = table1(model, exclude_m0=exclude_m0)
    for a, L in enumerate(TABLE1_LENGTHS):
        for b, q in enumerate(TABLE1_QS):
            yield L, q, float(grid[a, b]), "suspect" if (L, q) in SUSPECT_CELLS else ""


def cmd_table1(args, spec, out):
    write_table(table1_rows(_model(args), args.exclude_m0), ("L", "q", "p_success", "flag"), out, spec.format)


def cmd_success(args, spec, out):
    model = _model(args)
    rows = [(args.l, q, success_probability(model, args.l, q, args.exclude_m0)) for q in args.q]
    write_table(rows, ("L", "q", "p_success"), out, spec.format)


def breach_rows(est, f1_ref: Optional[float] = None):
    rows = [(int(k), float(f), float(a)) for k, f, a in zip(est.k, est.F, est.analytical)]
    if f1_ref is None:
        return rows
    return [(*row, f1_ref ** row[0]) for row in rows]


def cmd_breach(args, spec, out):
    if args.simulate:
        cfg = spec.config
        collector = args.collector if args.collector is not None else cfg.side // 2 if cfg.side > 2 else 1
        est = measure_breach(cfg, args.source, collector, args.k, runs=args.runs,
                             replicates=args.replicates, workers=args.workers)
        write_table(breach_rows(est), ("k", "empirical", "analytical"), out, spec.format)
        return
    if args.f1 is None:
        raise ConfigError("f1", "required unless --simulate is given")
    try:
        rows = [(k, breach_probability(args.f1, k)) for k in range(args.k + 1)]
    except ValueError as exc:
        raise ConfigError("f1", str(exc)) from None
    write_table(rows, ("k", "F"), out, spec.format)


def energy_rows(report: EnergyReport):
    return report.rows


def cmd_energy(args, spec, out):
    try:
        report = energy_compare(EnergyModel(), args.n, args.q, args.hops)
    except ValueError as exc:
        raise ConfigError("energy", str(exc)) from None
    write_table(energy_rows(report), EnergyReport.HEADER, out, spec.format)


def intercept_rows(metrics):
    for rec in metrics.intercepts:
        yield rec.time, rec.outer_id, rec.depth, " ".join(map(str, rec.encryptors)), rec.outcome


def cmd_simulate(args, spec, out):
    cfg = spec.config
    metrics = run_many([cfg])[0]
    json.dump(metrics.to_dict(trace=args.trace), out, indent=2, sort_keys=True)
    out.write("\n")
    if args.intercepts:
        with open(args.intercepts, "w", newline="") as fh:
            write_csv(intercept_rows(metrics), ("time", "outer_id", "depth", "encryptors", "outcome"), fh)


def figure_tables(cfg: SimConfig, runs: int = 20, fig4_runs: int = 4, breach_runs: int = 200,
                  replicates: int = 2000, breach_q: float = 0.5, f1_ref: float = REFERENCE_F1,
                  workers: int = 1) -> dict:
    """All figure data as ``{filename: (header, rows)}``.

    fig6 measures a 3-relay path at ``breach_q``; its ``reference`` column is
    ``f1_ref ** k`` for a given single-snapshot breach probability.
    """
    tables = {}
    rows = []
    for tau in FIG3_TAUS:
        pi = stationary(MarkovModel(cfg.N, cfg.lam, tau))
        rows += [(tau, i, p) for i, p in enumerate(pi)]
    tables["fig3_stationary.csv"] = (("tau", "i", "pi"), rows)

    pi = stationary(cfg.markov_model())
    results = run_many(replicate_configs(cfg, fig4_runs), workers)
    dists = [m.empirical_distribution for m in results]
    header = ("i", *[f"run{j + 1}" for j in range(fig4_runs)], "analytical")
    tables["fig4_empirical.csv"] = (header, [(i, *[d[i] for d in dists], pi[i]) for i in range(len(pi))])

    ests = measure_success(cfg, qs=TABLE1_QS, runs=runs, workers=workers)
    tables["fig5_success.csv"] = (("q", "median", "lo95", "hi95", "analytical"),
                                  [(e.q, e.median, *e.band, e.analytical) for e in ests])

    bcfg = cfg.replace(q=breach_q, protocol=False)
    est = measure_breach(bcfg, 0, min(4, cfg.side // 2) if cfg.side > 2 else 1, cfg.k,
                         runs=breach_runs, replicates=replicates, workers=workers)
    tables["fig6_breach.csv"] = (("k", "empirical", "analytical", "reference"), breach_rows(est, f1_ref))
    return tables


def cmd_figures(args, spec, out):
    cfg = spec.config
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tables = figure_tables(cfg, runs=args.runs, fig4_runs=args.fig4_runs, breach_runs=args.breach_runs,
                           replicates=args.replicates, f1_ref=args.f1, workers=args.workers)
    for name, (header, rows) in tables.items():
        with open(outdir / name, "w", newline="") as fh:
            write_csv(rows, header, fh)
        out.write(f"wrote {outdir / name}\n")


# -- parser ---------------------------------------------------------------------


def _sim_config(args) -> SimConfig:
    flags = {"seed": args.seed}
    if getattr(args, "fast", False):
        flags["protocol"] = False
    return build_config(args.config, parse_overrides(args.set), **flags)


def _model_args(p):
    p.add_argument("--n", type=int, default=100, help="system size N")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="refresh intensity")
    p.add_argument("--tau", type=float, default=1.5, help="mean time between compromises")
    p.add_argument("--efficiency", type=float, default=1.0, help="refresh-rate discount in (0, 1]")


def _sim_args(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossicrypt", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-o", "--output", help="write to this file instead of stdout")
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="table output format")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stationary", help="stationary law of the correct-node count")
    _model_args(p)

    p = sub.add_parser("table1", help="P{Y>0} grid for L=5..12, q=0.5..0.9")
    _model_args(p)
    p.add_argument("--exclude-m0", action="store_true", help="drop the no-re-encryption term")

    p = sub.add_parser("success", help="P{Y>0} for one path length")
    _model_args(p)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--q", type=float, nargs="+", required=True)
    p.add_argument("--exclude-m0", action="store_true")

    p = sub.add_parser("breach", help="breach probability of k snapshots")
    p.add_argument("--f1", type=float)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--simulate", action="store_true", help="estimate F(k) by simulation")
    p.add_argument("--source", type=int, default=0)
    p.add_argument("--collector", type=int)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--replicates", type=int, default=2000)
    _sim_args(p)

    p = sub.add_parser("energy", help="energy comparison against per-message PKE")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--hops", type=int, default=5)

    p = sub.add_parser("simulate", help="one simulation run, metrics as JSON")
    _sim_args(p)
    p.add_argument("--fast", action="store_true", help="state-only run without cryptography")
    p.add_argument("--trace", action="store_true", help="include the per-event count trace")
    p.add_argument("--intercepts", help="write the adversary's intercept log as CSV")

    p = sub.add_parser("figures", help="CSV data for every figure")
    _sim_args(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--fast", action="store_true", help="state-only runs without cryptography")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--fig4-runs", type=int, default=4)
    p.add_argument("--breach-runs", type=int, default=200)
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--f1", type=float, default=REFERENCE_F1, help="f1 for the reference f1^k column of fig6")
    return parser


HANDLERS = {
    "stationary": cmd_stationary,
    "table1": cmd_table1,
    "success": cmd_success,
    "breach": cmd_breach,
    "energy": cmd_energy,
    "simulate": cmd_simulate,
    "figures": cmd_figures,
}


SIM_COMMANDS = ("simulate", "figures")


def experiment_spec(args) -> ExperimentSpec:
    """Resolve parsed arguments; config errors surface here for sim commands."""
    wants_config = args.command in SIM_COMMANDS or getattr(args, "simulate", False)
    cfg = _sim_config(args) if wants_config else SimConfig()
    return ExperimentSpec(args.command, cfg, Path(args.output) if args.output else None, args.format)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    buf = io.StringIO()
    try:
        spec = experiment_spec(args)
        HANDLERS[spec.command](args, spec, buf)
    except (ConfigError, TypeError) as exc:
        print(f"gossicrypt: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gossicrypt: {exc}", file=sys.stderr)
        return 1
    if spec.output_path:
        spec.output_path.write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
