#!/usr/bin/env python3
"""
cli.py

Command line surface: ``run``, ``audit`` and ``sweep``.

Every command writes its artifacts and a ``manifest.json`` into ``--out``.
On failure it writes ``error.json`` instead and exits with the error's code
(2 configuration/usage, 3 numerical failure, 4 invariant violation).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, List, Mapping, Optional

import numpy as np
import pandas as pd

from gauge_optics import __version__
from gauge_optics.analysis import fringe_extract, single_peak_summary, write_profile_csv
from gauge_optics.errors import GaugeOpticsError, NumericalError, UsageError
from gauge_optics.load_config import (
    ConfigManager,
    load_gauges,
    load_scenario,
    parse_quantity,
)
from gauge_optics.run_record import RunManifest
from gauge_optics.scenarios import (
    ScenarioConfig,
    SimulationResult,
    flux_sweep,
    gauge_audit,
    momentum_sweep,
    run_scenario,
    toroidal_effect_experiment,
)
from gauge_optics.wavesolver import write_snapshot

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("channel_a", "flux", "k0")
ERROR_FILE = "error.json"
CONFIG_FILE = "config.json"


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="[%(levelname)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _write_json(path: Path, data: Mapping[str, Any]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=4, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return path


def _write_failure(out: Path, exc: BaseException, exit_code: int = 2) -> int:
    """error.json for failures outside the package's own error types."""
    _write_json(
        out / ERROR_FILE,
        {
            "error": type(exc).__name__,
            "exit_code": exit_code,
            "message": str(exc),
            "details": {},
        },
    )
    return exit_code


def _save_config(
    args: argparse.Namespace, config: ScenarioConfig, manifest: RunManifest
) -> None:
    """Resolved scenario next to the results it produced."""
    target = ConfigManager(args.config).save(
        config.to_dict(), manifest.out_dir / CONFIG_FILE
    )
    manifest.add_artifact(target)


def _write_snapshots(out: Path, result: SimulationResult) -> List[Path]:
    """One ``|ψ|²`` matrix per snapshot (rows along x) plus the final state."""
    if not result.snapshots and result.final_state is None:
        return []
    folder = out / "snapshots"
    folder.mkdir(exist_ok=True)
    paths = []
    for snap in result.snapshots:
        path = folder / f"density_{snap.step:07d}.csv"
        pd.DataFrame(snap.density).to_csv(
            path, header=False, index=False, float_format="%.17g", lineterminator="\n"
        )
        paths.append(path)
    if result.final_state is not None:
        paths.append(write_snapshot(result.final_state, folder / "final_state.csv"))
    return paths


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #
def cmd_run(args: argparse.Namespace) -> int:
    """Propagate one scenario; write profile.csv, fringe.json, manifest.json."""
    out = Path(args.out)
    config = load_scenario(args.config)
    manifest = RunManifest(out, config.config_hash(), "run")
    _save_config(args, config, manifest)

    with manifest.stage("propagate"):
        result = run_scenario(
            config,
            snapshot_every=args.snapshots,
            workers=args.threads,
            keep_state=args.snapshots > 0,
        )
    with manifest.stage("analyse"):
        summary = {
            "kind": config.kind,
            "name": config.name,
            "config_hash": config.config_hash(),
            "run": result.metadata(),
        }
        if config.kind == "free":
            summary["single_peak"] = single_peak_summary(result.y, result.profile)
        else:
            summary["fringe"] = fringe_extract(result.y, result.profile).to_dict()

    manifest.add_artifact(write_profile_csv(out / "profile.csv", result.y, result.profile))
    manifest.add_artifact(_write_json(out / "fringe.json", summary))
    for path in _write_snapshots(out, result):
        manifest.add_artifact(path)
    manifest.save()
    logger.info("Wrote %d artifacts to %s", len(manifest.artifacts), out)
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    """Gauge audit; writes audit.json and manifest.json."""
    if not args.gauges:
        raise UsageError("audit needs --gauges")
    out = Path(args.out)
    config = load_scenario(args.config)
    gauges = load_gauges(args.gauges)
    if all(g.identity for g in gauges):
        raise UsageError("audit needs at least one non-identity gauge")
    manifest = RunManifest(out, config.config_hash(), "audit")
    _save_config(args, config, manifest)

    with manifest.stage("audit"):
        report = gauge_audit(
            config, gauges, snapshot_every=args.snapshots, workers=args.threads
        )
    manifest.add_artifact(_write_json(out / "audit.json", report.to_dict()))
    manifest.save()
    if report.failed:
        raise NumericalError(
            "one or more gauge branches failed; see audit.json",
            branches=[b["gauge"] for b in report.branches if b["failed"]],
        )
    return 0


def _sweep_values(raw: List[str], k_magnitude: float) -> List[float]:
    values = []
    for item in raw:
        for token in item.split(","):
            if token.strip():
                values.append(parse_quantity(token, k_magnitude, "values"))
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    """Parameter sweep; writes sweep.csv, sweep.json and manifest.json."""
    if args.param not in SWEEP_PARAMS:
        raise UsageError(
            f"unknown sweep parameter '{args.param}', expected one of {SWEEP_PARAMS}"
        )
    if not args.values:
        raise UsageError("sweep needs --values")
    out = Path(args.out)
    config = load_scenario(args.config)
    values = _sweep_values(args.values, config.packet.k_magnitude)
    manifest = RunManifest(out, config.config_hash(), f"sweep:{args.param}")
    _save_config(args, config, manifest)

    with manifest.stage("sweep"):
        if args.param == "channel_a":
            effect = toroidal_effect_experiment(config, values, workers=args.threads)
            report = effect.to_sweep()
            details = effect.to_dict()
        elif args.param == "flux":
            report = flux_sweep(config, values, workers=args.threads)
            details = report.to_dict()
        else:
            report = momentum_sweep(config, values, workers=args.threads)
            details = report.to_dict()

    frame = report.to_frame()
    csv_path = out / "sweep.csv"
    frame.to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
    manifest.add_artifact(csv_path)
    manifest.add_artifact(_write_json(out / "sweep.json", details))
    manifest.save()
    logger.info(
        "Sweep over %s: shifts %s",
        args.param,
        np.round(frame["fullwave_shift"], 4).tolist(),
    )
    return 0


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gauge-optics",
        description="Gauge-covariant wave optics of charged particles.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: INFO).",
    )
    subparsers = parser.add_subparsers(dest="cmd", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", required=True, help="Scenario TOML file.")
        sp.add_argument("--out", required=True, help="Output directory.")
        sp.add_argument(
            "--threads",
            type=int,
            default=1,
            help="Worker threads (line solves for run, branches otherwise).",
        )
        sp.add_argument(
            "--snapshots",
            type=int,
            default=0,
            metavar="N",
            help="Record |psi|^2 every N steps (0: off).",
        )

    sp = subparsers.add_parser("run", help="Propagate one scenario.")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = subparsers.add_parser("audit", help="Compare runs across gauges.")
    common(sp)
    sp.add_argument("--gauges", help="TOML file with [[gauges]] entries.")
    sp.set_defaults(func=cmd_audit)

    sp = subparsers.add_parser("sweep", help="Sweep channel_a, flux or k0.")
    common(sp)
    sp.add_argument("--param", required=True, help="channel_a, flux or k0.")
    sp.add_argument(
        "--values",
        nargs="+",
        help="Values, comma or space separated; accepts '0.5pi' and '0.25k'.",
    )
    sp.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / ERROR_FILE
    if stale.exists():
        stale.unlink()
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if args.snapshots < 0:
            raise UsageError("--snapshots must be non-negative")
        return args.func(args)
    except GaugeOpticsError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.message)
        _write_json(out / ERROR_FILE, exc.to_dict())
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return _write_failure(out, exc)
    except Exception as exc:
        logger.exception("Unexpected failure in %s", args.cmd)
        return _write_failure(out, exc)
