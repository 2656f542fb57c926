"""Command-line interface: ``seqvimp {test,simulate,characterize,boundaries}``.

Settings come from flags, then an optional JSON ``--config`` file, then the
built-in defaults, in that order of precedence.  Exit status is 0 on success,
2 for configuration errors, 3 for data errors and 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, NumericalError, SeqVimpError
from .forest import ForestConfig, read_csv, read_schema
from .monitor import (
    DEFAULTS,
    Method,
    SequentialSpec,
    average_expected_permutations,
    boundary_table,
    characteristic_table,
    effective_alpha,
    write_csv,
)
from .simbench import (
    K_GRID,
    run_experiment,
    study1,
    study2,
    write_manifest,
    write_records,
    write_summaries,
)
from .vimp_tests import reports_to_csv, reports_to_json, test_all_variables, total_permutations

log = logging.getLogger("seqvimp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

SPEC_KEYS = ("method", "p0", "p1", "alpha", "beta", "A", "B", "M", "h")
FOREST_KEYS = ("ntree", "mtry", "nperm", "min_node_size", "loss")
RUN_KEYS = ("data", "target", "schema", "test", "seed", "out", "format", "study", "replicates",
            "k", "n", "variables", "methods", "full_trajectory", "grid")
BUILTIN = dict(method="sapt", test="general", seed=0, format="json", ntree=500, nperm=1,
               study="study2", replicates=200, n=100, grid=201, full_trajectory=False)


def _add_spec_flags(p):
    g = p.add_argument_group("stopping regime")
    g.add_argument("--method", choices=[m.value for m in Method])
    g.add_argument("--p0", type=float)
    g.add_argument("--p1", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--A", dest="A", type=float)
    g.add_argument("--B", dest="B", type=float)
    g.add_argument("--M", dest="M", type=int)
    g.add_argument("--h", dest="h", type=int)


def _add_forest_flags(p):
    g = p.add_argument_group("forest")
    g.add_argument("--ntree", type=int)
    g.add_argument("--mtry", type=int)
    g.add_argument("--nperm", type=int)
    g.add_argument("--min-node-size", dest="min_node_size", type=int)
    g.add_argument("--loss", choices=["squared_error", "brier", "misclassification"])
    g.add_argument("--test", choices=["general", "two-sample"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqvimp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON file of default settings")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, help="output file or directory")
        p.add_argument("--format", choices=["json", "csv"])
        p.add_argument("-v", "--verbose", action="store_true")

    t = sub.add_parser("test", help="test every predictor of a CSV dataset")
    common(t)
    t.add_argument("--data", type=Path)
    t.add_argument("--target")
    t.add_argument("--schema", type=Path, help="file of name:type lines")
    _add_spec_flags(t)
    _add_forest_flags(t)

    s = sub.add_parser("simulate", help="run a simulation study")
    common(s)
    s.add_argument("--study", choices=["study1", "study2"])
    s.add_argument("--replicates", type=int)
    s.add_argument("--k", type=float, action="append", help="study1 effect size (repeatable)")
    s.add_argument("--n", type=int)
    s.add_argument("--variables", nargs="+")
    s.add_argument("--methods", nargs="+", choices=[m.value for m in Method])
    s.add_argument("--full-trajectory", dest="full_trajectory", action="store_true", default=None)
    _add_spec_flags(s)
    _add_forest_flags(s)

    c = sub.add_parser("characterize", help="power function and expected cost tables")
    common(c)
    c.add_argument("--grid", type=int, help="number of p grid points")
    _add_spec_flags(c)

    b = sub.add_parser("boundaries", help="decision boundary table")
    common(b)
    _add_spec_flags(b)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over the built-in defaults."""
    cfg = dict(BUILTIN)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(SPEC_KEYS + FOREST_KEYS + RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "verbose"):
            cfg[key] = value
    return cfg


def spec_from(cfg: dict, method=None) -> SequentialSpec:
    explicit = method is None
    method = Method.parse(method or cfg["method"])
    if explicit and method is Method.SPRT and (cfg.get("A") or cfg.get("B")):
        raise ConfigError("SPRT derives A and B from alpha and beta; do not set them")
    keys = ("p0", "p1", "alpha", "beta", "M", "h")
    if method is not Method.SPRT:
        keys += ("A", "B")  # SPRT derives its own
    kw = {k: cfg[k] for k in keys if cfg.get(k) is not None}
    if method is Method.SAPT:
        kw.setdefault("A", DEFAULTS["A"])
    return SequentialSpec(method=method, **kw)


def forest_from(cfg: dict) -> ForestConfig:
    return ForestConfig(**{k: cfg[k] for k in ("ntree", "mtry", "nperm", "min_node_size", "loss", "seed")
                           if cfg.get(k) is not None})


def _out_dir(cfg: dict, default: str) -> Path:
    out = Path(cfg.get("out") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# commands ---------------------------------------------------------------------

def cmd_test(cfg: dict) -> int:
    if not cfg.get("data") or not cfg.get("target"):
        raise ConfigError("test needs --data and --target")
    schema = read_schema(cfg["schema"]) if cfg.get("schema") else None
    data = read_csv(cfg["data"], cfg["target"], schema)
    spec = spec_from(cfg)
    fcfg = forest_from(cfg)
    reports = test_all_variables(data, fcfg, spec, cfg["test"], seed=cfg["seed"])
    fmt = cfg["format"]
    out = Path(cfg.get("out") or f"seqvimp_report.{fmt}")
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    # the --format file goes to --out; the other format sits beside it
    other = "csv" if fmt == "json" else "json"
    paths = {fmt: out, other: out.with_suffix(f".{other}")}
    reports_to_json(reports, paths["json"])
    reports_to_csv(reports, paths["csv"])
    write_manifest({"command": "test", "settings": _jsonable(cfg), "spec": spec.to_dict(),
                    "forest": asdict(fcfg), "test": cfg["test"]},
                   out.with_suffix(".manifest.json"))
    print(f"{'variable':<20} {'VIMP':>12} {'decision':>10} {'p-value':>10} {'perms':>6}")
    for r in reports:
        if not r.ok:
            print(f"{r.variable:<20} {'error: ' + r.error}")
            continue
        p = "" if r.p_value is None else f"{r.p_value:.6g}"
        print(f"{r.variable:<20} {r.u:>12.6g} {r.decision.value:>10} {p:>10} {r.permutations_used:>6}")
    print(f"total permutations: {total_permutations(reports)} of {spec.M * data.p}; report: {out}")
    failed = [r for r in reports if not r.ok]
    return EXIT_DATA if failed and len(failed) == len(reports) else EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    methods = cfg.get("methods") or [m.value for m in Method]
    specs = [spec_from(cfg, m) for m in methods]
    fcfg = forest_from(cfg)
    n = int(cfg["n"])
    if cfg["study"] == "study1":
        ks = cfg.get("k") or list(K_GRID)
        ks = ks if isinstance(ks, list) else [ks]
        studies = [study1(float(k), n) for k in ks]
    else:
        studies = [study2(n)]
    out = _out_dir(cfg, "seqvimp_sim")
    summaries, records, manifests = [], [], []
    for st in studies:
        res = run_experiment(st, int(cfg["replicates"]), fcfg, specs, cfg["test"],
                             cfg.get("variables"), seed=cfg["seed"],
                             full_trajectory=bool(cfg["full_trajectory"]))
        summaries += res.summaries
        records += res.records
        manifests.append(res.manifest)
    write_summaries(summaries, out / "summary.csv")
    write_records(records, out / "replicates.csv")
    write_manifest({"command": "simulate", "settings": _jsonable(cfg), "experiments": manifests},
                   out / "manifest.json")
    print(f"{'study':<7} {'k':>6} {'variable':<8} {'method':<9} {'reject':>7} {'perms':>8} {'fail':>4}")
    for s in summaries:
        k = "" if s.k is None else f"{s.k:g}"
        print(f"{s.study:<7} {k:>6} {s.variable:<8} {s.method:<9} {s.rejection_rate:>7.3f} "
              f"{s.mean_permutations:>8.1f} {s.failures:>4}")
    return EXIT_OK


def cmd_characterize(cfg: dict) -> int:
    spec = spec_from(cfg)
    if not spec.is_wald:
        raise ConfigError("characterize needs --method sprt or sapt")
    out = _out_dir(cfg, "seqvimp_characterize")
    rows = characteristic_table(spec, int(cfg["grid"]))
    write_csv(rows, out / "characteristic.csv")
    write_csv(boundary_table(spec), out / "boundaries.csv")
    alpha_eff = effective_alpha(spec)
    avg = average_expected_permutations(spec)
    summary = {"method": spec.label, "spec": spec.to_dict(), "effective_alpha": float(f"{alpha_eff:.6g}"),
               "average_expected_permutations": float(f"{avg:.6g}")}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{spec.label}: effective alpha {alpha_eff:.4f}, average expected permutations {avg:.1f}")
    return EXIT_OK


def cmd_boundaries(cfg: dict) -> int:
    spec = spec_from(cfg)
    if not spec.is_wald:
        raise ConfigError("boundaries needs --method sprt or sapt")
    rows = boundary_table(spec)
    out = Path(cfg.get("out") or "boundaries.csv")
    if cfg["format"] == "json":
        out.write_text(json.dumps([{k: float(f"{v:.6g}") for k, v in r.items()} for r in rows],
                                  indent=1) + "\n")
    else:
        write_csv(rows, out)
    first_h1 = next((r["m"] for r in rows if r["lower_H1"] >= 0), None)
    first_h0 = next((r["m"] for r in rows if r["upper_H0"] <= r["m"]), None)
    print(f"{spec.label}: earliest AcceptH1 at m={first_h1}, earliest AcceptH0 at m={first_h0}; table: {out}")
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "characterize": cmd_characterize,
            "boundaries": cmd_boundaries}


def _jsonable(cfg: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SeqVimpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
