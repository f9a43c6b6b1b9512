"""Command-line front end: ``pjmp {enumerate,constants,verify,simulate}``.

Exit codes: 0 success, 2 configuration error, 3 state space over capacity,
4 a checked bound failed, 5 numerical breakdown.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ObservableSpec, build_observables, load_config
from .constants import VARIANTS
from .errors import (
    ConfigError,
    ModelError,
    MultipleClosedClasses,
    NonPositiveProbability,
    SingularSystem,
    StateSpaceTooLarge,
)
from .statespace import enumerate_reachable
from .verify import Certifier, montecarlo_crosscheck, random_observable_sweep, reports_to_csv

log = logging.getLogger("pjmp")

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_CHECK, EXIT_NUMERICAL = 0, 2, 3, 4, 5


class Output:
    """Where results go: files in a directory, or JSON lines on stdout for ``-``."""

    def __init__(self, target, formats):
        self.stream = target == "-"
        self.dir = None if self.stream else Path(target)
        self.formats = formats
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def say(self, line: str):
        print(line, file=sys.stderr if self.stream else sys.stdout)

    def record(self, kind: str, obj: dict):
        if self.stream:
            sys.stdout.write(json.dumps(dict(obj, record=kind), sort_keys=True) + "\n")

    def json(self, name: str, obj):
        if self.stream:
            self.record(name, obj if isinstance(obj, dict) else {"value": obj})
        elif "json" in self.formats:
            (self.dir / f"{name}.json").write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def jsonl(self, name: str, records):
        if self.stream:
            for r in records:
                self.record(name, r)
        elif "json" in self.formats:
            with open(self.dir / f"{name}.jsonl", "w") as fh:
                for r in records:
                    fh.write(json.dumps(r, sort_keys=True) + "\n")

    def csv(self, name: str, text: str):
        if not self.stream and "csv" in self.formats:
            (self.dir / f"{name}.csv").write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _setup(args):
    cfg = load_config(args.config)
    model = cfg.network
    space = enumerate_reachable(model, cfg.initial_state, max_states=cfg.max_states)
    target = args.out if args.out is not None else cfg.output.get("directory", "-")
    formats = [args.format] if args.format else cfg.output.get("formats", ["json", "csv"])
    return cfg, model, space, Output(target, formats)


def _variants(args):
    return VARIANTS if args.constants_variant == "both" else (args.constants_variant,)


def cmd_enumerate(args) -> int:
    cfg, model, space, out = _setup(args)
    rec = np.flatnonzero(space.recurrent_mask)
    summary = {
        "states": space.n_states,
        "recurrent": int(rec.size),
        "closed_classes": len(space.closed_classes),
        "scale": space.scale,
    }
    out.say(f"states: {space.n_states}, recurrent: {rec.size}, closed classes: {len(space.closed_classes)}")
    out.json("statespace", summary)
    N = model.n_neurons
    out.csv("states", _csv_text(["index"] + [f"x{j}" for j in range(N)] + ["recurrent"],
                                [[u] + [repr(v) for v in space.states[u]] + [int(space.recurrent_mask[u])]
                                 for u in range(space.n_states)]))
    out.csv("edges", _csv_text(["source", "neuron", "target"], space.edge_list()))
    return EXIT_OK


def _certifier(cfg, model, space):
    return Certifier(model, space, tol=cfg.tol, per_decade=cfg.per_decade)


def cmd_constants(args) -> int:
    cfg, model, space, out = _setup(args)
    cert = _certifier(cfg, model, space)
    report = cert.constants.to_dict()
    out.json("constants", report)
    c = cert.constants
    out.say(f"M = {c.M.paper:.6g} (constructive) / {c.M.empirical:.6g} (empirical), t0* = {c.t0_star:.6g}, "
            f"C1 = {c.C1.paper:.6g} / {c.C1.empirical:.6g}, t1 = {c.t1:.6g}")
    return EXIT_OK


def _family(cfg, cert):
    """Configured observables; the coordinate projections when none are listed."""
    specs = cfg.observables or [ObservableSpec("coordinate")]
    return build_observables(cert, specs, cfg.base_dir)


def cmd_verify(args) -> int:
    cfg, model, space, out = _setup(args)
    cert = _certifier(cfg, model, space)
    ids, F = _family(cfg, cert)
    checks = [c for c in cfg.checks if c != "montecarlo_crosscheck"]
    summary = random_observable_sweep(cert, 0, times=cfg.times, variants=_variants(args), checks=checks,
                                      workers=args.workers, family=(ids, F))
    reports = list(summary.reports)
    if "montecarlo_crosscheck" in cfg.checks:
        mids, MF = build_observables(cert, cfg.mc_observables, cfg.base_dir)
        _, mc_reports = montecarlo_crosscheck(cert, mids, MF, 0, cfg.mc_times, cfg.n_paths, cfg.mc_seed,
                                              args.workers)
        for r in mc_reports:
            summary.add(r)
        reports += mc_reports
    out.jsonl("reports", (r.to_dict() for r in reports))
    out.json("summary", summary.to_dict())
    out.csv("margins", reports_to_csv(reports))
    n_fail = sum(c.get("fail", 0) for c in summary.counts.values())
    n_total = sum(c["pass"] + c["fail"] + c["skipped"] for c in summary.counts.values())
    out.say(f"{n_total} instances over {summary.n_observables} observables: "
            f"{'all passed' if summary.all_passed else f'{n_fail} FAILED'}")
    for key, cnt in sorted(summary.counts.items()):
        if cnt.get("fail"):
            out.say(f"  {key}: {cnt['fail']} failed, worst instance {summary.worst[key].instance}")
    return EXIT_OK if summary.all_passed else EXIT_CHECK


def cmd_simulate(args) -> int:
    cfg, model, space, out = _setup(args)
    cert = Certifier(model, space, constants=_NoConstants(), tol=cfg.tol)
    ids, F = build_observables(cert, cfg.mc_observables, cfg.base_dir)
    rows, reports = montecarlo_crosscheck(cert, ids, F, 0, cfg.mc_times, cfg.n_paths, cfg.mc_seed, args.workers)
    out.json("simulate", {"n_paths": cfg.n_paths, "seed": cfg.mc_seed, "rows": rows})
    table = []
    for r in rows:
        if r["kind"] == "chi_square":
            table.append([r["t"], "", "chi_square", repr(r["statistic"]), "", "", repr(r["p_value"])])
        else:
            e = r["estimate"]
            table.append([r["t"], r["f"], r["kind"], repr(e["mean"]), repr(e["std_error"]), repr(r["exact"]),
                          repr(r["z"])])
    out.csv("simulate", _csv_text(["t", "f", "kind", "estimate", "std_error", "exact", "z_or_p"], table))
    out.say(f"{'t':>8} {'f':>16} {'kind':>12} {'estimate':>12} {'exact':>12} {'z / p':>9}")
    for row in table:
        est = float(row[3])
        exact = f"{float(row[5]):12.6g}" if row[5] else " " * 12
        out.say(f"{row[0]:8.4g} {row[1]:>16} {row[2]:>12} {est:12.6g} {exact} {float(row[6]):9.3f}")
    failed = [r for r in reports if not r.passed]
    return EXIT_OK if not failed else EXIT_CHECK


class _NoConstants:
    """Stand-in: simulation never needs the bound constants."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run config, or the name of a bundled one")
    common.add_argument("--out", default=None,
                        help="output directory; '-' streams JSON lines to stdout (default: config output.directory)")
    common.add_argument("--workers", type=int, default=1, help="worker threads (affects wall time only)")
    common.add_argument("--constants-variant", choices=("paper", "empirical", "both"), default="both")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="write only this format (default: config output.formats)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pjmp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("enumerate", cmd_enumerate, "enumerate the reachable states and closed classes"),
        ("constants", cmd_constants, "compute every constant entering the bounds"),
        ("verify", cmd_verify, "check every bound on the configured observables and times"),
        ("simulate", cmd_simulate, "Monte-Carlo estimates compared with the exact engine"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StateSpaceTooLarge as exc:
        print(f"capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (SingularSystem, NonPositiveProbability, MultipleClosedClasses, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
