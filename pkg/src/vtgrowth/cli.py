"""Command-line interface.

Subcommands:
  run              execute a scenario config and write CSV/VTK outputs
  validate         parse a config, build its network, report problems
  convert-network  turn a tabular segment file into the canonical JSON
  scenario         emit a builtin scenario config (plus its network JSON)
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as cfgmod
from .config import ColumnMapping, ConfigError, builtin_scenario, import_tabular_network, load_config
from .engine import EngineError, run_scenario
from .linalg import SolverError
from .network import save_network_json, validate_network
from .species import CFLError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtgrowth",
        description="3D-1D coupled phase-field simulator for vascularized tumor growth",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("--config", required=True, help="scenario TOML file")
    p_run.add_argument("--output", default=None, help="output directory (default from config)")
    p_run.add_argument("--vtk-every", type=int, default=None, help="VTK snapshot stride in steps")

    p_val = sub.add_parser("validate", help="validate a scenario config")
    p_val.add_argument("--config", required=True)

    p_conv = sub.add_parser("convert-network", help="import a tabular network file")
    p_conv.add_argument("--input", required=True, help="whitespace/CSV segment table")
    p_conv.add_argument("--mapping", required=True, help="JSON column-mapping file")
    p_conv.add_argument("--output", required=True, help="network JSON to write")

    p_scen = sub.add_parser("scenario", help="emit a builtin scenario config")
    p_scen.add_argument("--name", required=True, choices=["two-vessel", "network"])
    p_scen.add_argument("--output", required=True, help="config TOML path to write")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_scenario(cfg, output_dir=args.output, vtk_every=args.vtk_every)
    last = result.history[-1]
    print(
        f"completed t={last.t:g} ({len(result.history) - 1} steps), "
        f"outputs in {result.output_dir}"
    )
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    net = cfgmod.build_network(cfg)
    report = validate_network(net)
    print(
        f"network: {net.n_nodes} nodes, {len(net.edges)} edges, radii "
        f"max/min/mean = {report.radius_max:.4g}/{report.radius_min:.4g}/{report.radius_mean:.4g}"
    )
    if not report.ok:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return 1
    print("config ok")
    return 0


def _cmd_convert(args) -> int:
    with open(args.mapping) as f:
        mapping = ColumnMapping.from_dict(json.load(f))
    net = import_tabular_network(args.input, mapping)
    report = validate_network(net)
    save_network_json(net, args.output)
    print(
        f"wrote {args.output}: {net.n_nodes} nodes, {len(net.edges)} edges, radii "
        f"max/min/mean = {report.radius_max:.4g}/{report.radius_min:.4g}/{report.radius_mean:.4g}"
    )
    for v in report.violations:
        print(f"note: {v}", file=sys.stderr)
    return 0


def _cmd_scenario(args) -> int:
    cfg = builtin_scenario(args.name)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    cfgmod.save_config(cfg, out)
    net = cfgmod.build_network(cfg)
    net_path = out.with_name(out.stem + "-network.json")
    save_network_json(net, net_path)
    print(f"wrote {out} and {net_path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "validate": _cmd_validate,
    "convert-network": _cmd_convert,
    "scenario": _cmd_scenario,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EngineError, SolverError, CFLError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
