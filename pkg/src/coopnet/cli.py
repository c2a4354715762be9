"""``coopnet`` command-line interface.

Every subcommand accepts ``--config PATH`` (a ``key = value`` document or a run
manifest written by an earlier run), repeatable ``--set KEY=VALUE`` overrides,
``--seed N`` and ``--out DIR``.  A ``manifest.json`` holding the resolved config,
root seed and package versions is written before any computation starts.
Failures are reported as one JSON object on stderr with a nonzero exit status.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np
import scipy

from . import __version__
from .config import ConfigError, config_to_flat, parse_config
from .dynamics import CooperationState, IntegrationFault
from .experiments import (
    ScenarioConfig,
    SweepSpec,
    build_network,
    run_scenario,
    run_sweep,
    summarize_sweep,
    tragedy_regression,
    write_sweep_csv,
)
from .metrics import assortativity, cooperation_graph, degree_stats
from .model import RNG_ALGORITHM, BinaryGraph, ConnectivityMatrix, derive_seed, realize_edges

EXIT_FAILED_CHECK = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

# stream ids for sub-seeds derived from the root seed
EDGE_STREAM = 1


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_USAGE, **extra):
        super().__init__(message)
        self.kind = kind
        self.code = code
        self.extra = extra


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _clean(x):
    """Replace non-finite floats with strings so the output stays strict JSON."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _dump(path: Path, doc) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=False, default=_json_default, allow_nan=False)
        fh.write("\n")


def versions() -> dict:
    return {
        "coopnet": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _prepare_outdir(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=out, prefix=".write-probe-")
        os.close(fd)
        os.unlink(probe)
    except OSError as exc:
        raise CliError("OutputNotWritable", f"output directory {out} is not writable: {exc.strerror or exc}")


def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError("InputError", f"cannot read {path}: {exc.strerror or exc}")
    except json.JSONDecodeError as exc:
        raise CliError("InputError", f"{path}: invalid JSON: {exc}")


def _resolve(args) -> ScenarioConfig | SweepSpec:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"scenario.seed={args.seed}")
    try:
        return parse_config(args.config, overrides)
    except ConfigError as exc:
        raise CliError("ConfigError", str(exc), key=exc.key)


def _scenario(cfg, command: str) -> ScenarioConfig:
    if isinstance(cfg, SweepSpec):
        raise CliError("ConfigError", f"'{command}' takes a single scenario; remove the sweep.* keys", key="sweep.axis1")
    return cfg


def _write_manifest(out: Path, command: str, cfg, outputs: list[str], extra: Optional[dict] = None) -> None:
    base = cfg.base if isinstance(cfg, SweepSpec) else cfg
    doc = {
        "command": command,
        "config": config_to_flat(cfg),
        "seed": base.seed,
        "rng": RNG_ALGORITHM,
        "seed_derivation": {
            "deployment": "root seed",
            "edges": f"derive_seed(root, {EDGE_STREAM})",
        },
        "versions": versions(),
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    _dump(out / "manifest.json", doc)


def cmd_generate(args, cfg, out: Path) -> int:
    cfg = _scenario(cfg, "generate")
    edge_seed = derive_seed(cfg.seed, EDGE_STREAM)
    _write_manifest(out, "generate", cfg, ["deployment.json", "connectivity.json", "graph.json"])
    dep, h = build_network(cfg)
    _dump(out / "deployment.json", dep.to_dict())
    _dump(out / "connectivity.json", h.to_dict())
    g = realize_edges(h, edge_seed)
    _dump(out / "graph.json", {**g.to_dict(), "seed": edge_seed})
    return 0


def cmd_evolve(args, cfg, out: Path) -> int:
    cfg = _scenario(cfg, "evolve")
    outputs = ["trajectory.csv", "equilibrium.json"] + (["state.json"] if args.save_state else [])
    _write_manifest(out, "evolve", cfg, outputs)
    rec, summary = run_scenario(cfg)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        rec.write_csv(fh)
    eq = summary.to_dict()
    eq["first_increase_step"] = rec.first_increase_step
    _dump(out / "equilibrium.json", eq)
    if args.save_state:
        _dump(out / "state.json", summary.state.to_dict())
    return 0


def cmd_sweep(args, cfg, out: Path) -> int:
    if not isinstance(cfg, SweepSpec):
        raise CliError("ConfigError", "sweep needs at least sweep.axis1 = name: v1, v2, ...", key="sweep.axis1")
    _write_manifest(out, "sweep", cfg, ["sweep.csv", "sweep_summary.json"])
    rows = run_sweep(cfg, workers=args.workers)
    with open(out / "sweep.csv", "w", newline="") as fh:
        write_sweep_csv(rows, fh)
    _dump(out / "sweep_summary.json", summarize_sweep(rows))
    return 0


def _graph_from_input(doc: dict, cfg: ScenarioConfig) -> tuple[str, BinaryGraph, dict]:
    try:
        if "edges" in doc:
            return "graph", BinaryGraph.from_dict(doc), {}
        if "h" in doc:
            seed = derive_seed(cfg.seed, EDGE_STREAM)
            return "connectivity", realize_edges(ConnectivityMatrix.from_dict(doc), seed), {"edge_seed": seed}
        if "e" in doc:
            st = CooperationState.from_dict(doc)
            return "state", cooperation_graph(st, cfg.coop_threshold), {"coop_threshold": cfg.coop_threshold}
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("InputError", f"malformed input: {exc}")
    raise CliError("InputError", "input must be a graph ('edges'), connectivity ('h') or state ('e') document")


def cmd_metrics(args, cfg, out: Path) -> int:
    cfg = _scenario(cfg, "metrics")
    doc = _load_json(Path(args.input))
    _write_manifest(out, "metrics", cfg, ["metrics.json"], {"input": str(args.input)})
    kind, g, info = _graph_from_input(doc, cfg)
    _dump(
        out / "metrics.json",
        {
            "source": kind,
            **info,
            "n": g.n,
            "num_edges": g.num_edges,
            "degree_stats": degree_stats(g).to_dict(),
            "assortativity": assortativity(g).to_dict(),
        },
    )
    return 0


def cmd_tragedy(args, cfg, out: Path) -> int:
    cfg = _scenario(cfg, "tragedy")
    if cfg.game.m != 0 and not args.force_m0:
        raise CliError(
            "ConfigError", f"tragedy runs need m = 0 but game.m = {cfg.game.m!r}; pass --force-m0 to override", key="game.m"
        )
    _write_manifest(out, "tragedy", cfg, ["tragedy.json"], {"force_m0": bool(args.force_m0)})
    report = tragedy_regression(cfg, force_zero_m=args.force_m0)
    _dump(out / "tragedy.json", report.to_dict())
    print("PASS" if report.passed else "FAIL: " + "; ".join(report.failures))
    return 0 if report.passed else EXIT_FAILED_CHECK


COMMANDS = {
    "generate": (cmd_generate, "deploy nodes and write positions, H matrix and a realized graph"),
    "evolve": (cmd_evolve, "run the cooperation dynamics; write trajectory CSV and equilibrium JSON"),
    "sweep": (cmd_sweep, "run a one- or two-parameter sweep; write sweep CSV"),
    "metrics": (cmd_metrics, "degree statistics and assortativity of a graph, H matrix or state JSON"),
    "tragedy": (cmd_tragedy, "check that cooperation dies out without incentive (m = 0)"),
}


class _Parser(argparse.ArgumentParser):
    """Usage errors become structured JSON on stderr like every other failure."""

    def error(self, message):
        raise CliError("UsageError", f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file or a manifest.json")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", help="override a config key (repeatable)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", metavar="N", type=int, help="root seed (same as --set scenario.seed=N)")

    p = _Parser(prog="coopnet", description="Cooperation dynamics on random ad hoc networks.")
    p.add_argument("--version", action="version", version=f"coopnet {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        if name == "evolve":
            sp.add_argument("--save-state", action="store_true", help="also write the final state matrix")
        elif name == "sweep":
            sp.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
        elif name == "metrics":
            sp.add_argument("input", help="graph, connectivity or state JSON")
        elif name == "tragedy":
            sp.add_argument("--force-m0", action="store_true", help="run with m = 0 even if the config sets m")
    return p


def _report(exc: CliError) -> int:
    err = {"type": exc.kind, "message": str(exc), **exc.extra}
    print(json.dumps({"error": err}), file=sys.stderr)
    return exc.code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        if getattr(args, "workers", 1) < 1:
            raise CliError("ConfigError", "--workers must be at least 1")
        cfg = _resolve(args)
        out = Path(args.out)
        _prepare_outdir(out)
        return COMMANDS[args.command][0](args, cfg, out)
    except CliError as exc:
        return _report(exc)
    except IntegrationFault as exc:
        return _report(CliError("IntegrationFault", str(exc), EXIT_RUNTIME, indices=list(exc.indices), step=exc.step))
    except ValueError as exc:
        return _report(CliError("ValueError", str(exc)))


if __name__ == "__main__":
    sys.exit(main())
