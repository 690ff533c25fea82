"""Scenario configuration: TOML schema, builtin scenarios, network import.

A scenario file is a TOML document with sections [grid], [time], [solver],
[network], [initial], [parameters] and [output]. Unknown sections or keys
are rejected. Every value has a default, so an empty file is a valid
configuration with the reference parameter set on the standard domain.

Two builtin scenarios cover the reference experiments: ``two-vessel`` (an
artery/vein pair flanking a centered tumor) and ``network`` (a small
capillary bed around an off-center tumor; the vessel geometry is a bundled
synthetic stand-in for the original microvascular dataset, which must be
imported separately via ``convert-network`` when available).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import TimeLoopConfig
from .linalg import SolverConfig
from .network import BoundaryCondition, NetworkGraph, load_network_json
from .species import Parameters


class ConfigError(ValueError):
    pass


@dataclass
class GridSpec:
    n: int = 80
    length: float = 2.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class NetworkSpec:
    source: str = "builtin:two-vessel"
    subsegment_target: float = 0.0  # 0 -> one sub-segment per grid cell
    circle_points: int = 8


@dataclass
class InitialSpec:
    tumor_center: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tumor_radius: float = 0.3
    nutrient: float = 0.6
    ecm: float = 1.0
    # "steady" solves the stationary 1D transport profile; a number fills
    # all non-Dirichlet vessel nodes uniformly
    vessel_nutrient: str | float = "steady"


@dataclass
class OutputSpec:
    directory: str = "out"


@dataclass
class ScenarioConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    time: TimeLoopConfig = field(default_factory=TimeLoopConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    parameters: Parameters = field(default_factory=Parameters)
    output: OutputSpec = field(default_factory=OutputSpec)
    base_dir: str = "."  # directory of the config file, for relative paths


_SECTIONS = {
    "grid": GridSpec,
    "time": TimeLoopConfig,
    "solver": SolverConfig,
    "network": NetworkSpec,
    "initial": InitialSpec,
    "parameters": Parameters,
    "output": OutputSpec,
}

_TUPLE_KEYS = {"origin", "tumor_center"}


def _coerce(section: str, key: str, value, target_type):
    if key in _TUPLE_KEYS:
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            raise ConfigError(f"[{section}] {key}: expected a 3-element list")
        return tuple(float(v) for v in value)
    if key == "vessel_nutrient":
        if isinstance(value, str):
            if value != "steady":
                raise ConfigError(f"[{section}] {key}: expected 'steady' or a number")
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key}: expected 'steady' or a number")
        return float(value)
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}")
        return int(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {key}: expected a string, got {value!r}")
        return value
    return value


def _parse_section(name: str, data: dict):
    cls = _SECTIONS[name]
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in section [{name}]")
        default = getattr(cls(), key)
        target = type(default) if not isinstance(default, tuple) else tuple
        kw[key] = _coerce(name, key, value, target)
    try:
        return cls(**kw)
    except ValueError as exc:
        raise ConfigError(f"invalid section [{name}]: {exc}") from exc


def parse_config(doc: dict, base_dir: str = ".") -> ScenarioConfig:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kw = {}
    for name in _SECTIONS:
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section [{name}] must be a table")
        kw[name] = _parse_section(name, section)
    return ScenarioConfig(base_dir=base_dir, **kw)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    with open(path, "rb") as f:
        try:
            doc = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, base_dir=str(path.parent))


def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v)}")


def emit_config(cfg: ScenarioConfig) -> str:
    """Serialize a configuration to TOML with every value explicit.

    ``load(emit(cfg))`` reproduces ``cfg`` exactly (floats are written with
    full precision).
    """
    lines = []
    for name, cls in _SECTIONS.items():
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(cls):
            lines.append(f"{f.name} = {_toml_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as f:
        f.write(emit_config(cfg))


# ---------------------------------------------------------------------------
# builtin scenarios


def two_vessel_network() -> NetworkGraph:
    """Artery through (0.2, 0.2, z) and vein through (1.8, 1.8, z).

    The artery (R = 0.08) runs at pressure 10000 -> 5000 and injects
    nutrient at its high-pressure end; the vein (R = 0.1) runs at
    1000 -> 2000 and drains with a zero-nutrient far end.
    """
    nodes = np.array(
        [
            [0.2, 0.2, 0.0],
            [0.2, 0.2, 2.0],
            [1.8, 1.8, 0.0],
            [1.8, 1.8, 2.0],
        ]
    )
    edges = [(0, 1, 0.08), (2, 3, 0.1)]
    boundary = {
        0: BoundaryCondition(pressure=10000.0, nutrient=1.0),
        1: BoundaryCondition(pressure=5000.0, nutrient=None),
        2: BoundaryCondition(pressure=1000.0, nutrient=None),
        3: BoundaryCondition(pressure=2000.0, nutrient=0.0),
    }
    return NetworkGraph(nodes, edges, boundary)


def capillary_network(
    pressure_in: float = 25000.0, pressure_out: float = 10000.0, seed: int = 20210114
) -> NetworkGraph:
    """Small deterministic capillary bed standing in for the original
    microvascular dataset: four vertical trunks with cross-links and a few
    oblique shortcuts, radii in [0.031, 0.061], four nutrient inlets."""
    rng = np.random.default_rng(seed)
    xy = [(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)]
    levels = [0.2, 0.6, 1.0, 1.4, 1.8]
    nodes = []
    index = {}
    for t, (x, y) in enumerate(xy):
        for li, z in enumerate(levels):
            index[t, li] = len(nodes)
            nodes.append([x, y, z])
    edges = []

    def radius():
        return float(rng.uniform(0.031, 0.061))

    for t in range(4):
        for li in range(len(levels) - 1):
            edges.append((index[t, li], index[t, li + 1], radius()))
    # cross-links between trunks, alternating direction by level
    cross = [
        (1, (0, 1)), (1, (2, 3)),
        (2, (0, 2)), (2, (1, 3)),
        (3, (0, 3)), (3, (1, 2)),
    ]
    for li, (ta, tb) in cross:
        edges.append((index[ta, li], index[tb, li], radius()))
    # oblique shortcuts passing near the tumor site
    edges.append((index[1, 1], index[3, 2], radius()))
    edges.append((index[0, 2], index[3, 1], radius()))

    boundary = {}
    inlets = [index[0, 0], index[3, 0], index[1, 4], index[2, 4]]
    outlets = [index[1, 0], index[2, 0], index[0, 4], index[3, 4]]
    for n in inlets:
        boundary[n] = BoundaryCondition(pressure=pressure_in, nutrient=1.0)
    for n in outlets:
        boundary[n] = BoundaryCondition(pressure=pressure_out, nutrient=None)
    return NetworkGraph(np.array(nodes, dtype=float), edges, boundary)


def builtin_scenario(name: str) -> ScenarioConfig:
    if name == "two-vessel":
        return ScenarioConfig(
            grid=GridSpec(n=80, length=2.0),
            time=TimeLoopConfig(dt=0.025, t_end=5.0),
            network=NetworkSpec(source="builtin:two-vessel"),
            initial=InitialSpec(tumor_center=(1.0, 1.0, 1.0), tumor_radius=0.3),
            output=OutputSpec(directory="out-two-vessel"),
        )
    if name == "network":
        return ScenarioConfig(
            grid=GridSpec(n=80, length=2.0),
            time=TimeLoopConfig(dt=0.025, t_end=5.0),
            network=NetworkSpec(source="builtin:capillary-network"),
            initial=InitialSpec(tumor_center=(1.3, 0.9, 0.7), tumor_radius=0.25),
            output=OutputSpec(directory="out-network"),
        )
    raise ConfigError(f"unknown builtin scenario {name!r} (have: two-vessel, network)")


BUILTIN_NETWORKS = {
    "builtin:two-vessel": two_vessel_network,
    "builtin:capillary-network": capillary_network,
}


def build_network(cfg: ScenarioConfig) -> NetworkGraph:
    src = cfg.network.source
    if src in BUILTIN_NETWORKS:
        return BUILTIN_NETWORKS[src]()
    if src.startswith("builtin:"):
        raise ConfigError(f"unknown builtin network {src!r}")
    path = Path(src)
    if not path.is_absolute():
        path = Path(cfg.base_dir) / path
    if not path.exists():
        raise ConfigError(f"network file not found: {path}")
    return load_network_json(path)


# ---------------------------------------------------------------------------
# tabular network import


@dataclass
class ColumnMapping:
    """How to read a whitespace/CSV segment table into a network.

    Coordinates come either from per-edge endpoint columns or from a
    separate node table (id + xyz columns). Radii can be rescaled, e.g. by
    0.5 to turn diameters into radii, before the domain fit.
    """

    from_column: int
    to_column: int
    radius_column: int
    radius_scale: float = 1.0
    delimiter: str | None = None  # None = any whitespace
    skip_rows: int = 0
    from_xyz_columns: tuple[int, int, int] | None = None
    to_xyz_columns: tuple[int, int, int] | None = None
    node_file: str | None = None
    node_id_column: int = 0
    node_xyz_columns: tuple[int, int, int] = (1, 2, 3)
    node_skip_rows: int = 0
    fit_domain: tuple[float, float] | None = (0.0, 2.0)
    fit_margin: float = 0.0
    default_pressure: float | None = None
    default_nutrient: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown mapping key(s): {', '.join(sorted(unknown))}")
        missing = {"from_column", "to_column", "radius_column"} - set(d)
        if missing:
            raise ConfigError(f"mapping is missing: {', '.join(sorted(missing))}")
        d = dict(d)
        for key in ("from_xyz_columns", "to_xyz_columns", "node_xyz_columns", "fit_domain"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def _read_rows(path, delimiter, skip_rows):
    rows = []
    with open(path) as f:
        for i, line in enumerate(f):
            if i < skip_rows:
                continue
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line.split(delimiter) if delimiter else line.split())
    return rows


def import_tabular_network(path, mapping: ColumnMapping) -> NetworkGraph:
    """Build a network from a segment table, rescaled into the domain.

    The fit is a uniform scale plus translation (aspect ratio preserved,
    centered in the non-dominant directions); vessel radii are scaled by
    the same factor. Degree-1 nodes receive the mapping's default boundary
    conditions, which may be null placeholders to be filled in by hand.
    """
    rows = _read_rows(path, mapping.delimiter, mapping.skip_rows)
    if not rows:
        raise ConfigError(f"{path}: no data rows")

    node_ids: dict[str, int] = {}
    positions: list[np.ndarray] = []

    def node_index(key: str, xyz=None) -> int:
        if key not in node_ids:
            if xyz is None:
                raise ConfigError(f"{path}: edge references unknown node {key!r}")
            node_ids[key] = len(positions)
            positions.append(np.asarray(xyz, dtype=float))
        return node_ids[key]

    if mapping.node_file is not None:
        for row in _read_rows(mapping.node_file, mapping.delimiter, mapping.node_skip_rows):
            key = row[mapping.node_id_column]
            xyz = [float(row[c]) for c in mapping.node_xyz_columns]
            node_index(key, xyz)

    edges = []
    for row in rows:
        try:
            a_key = row[mapping.from_column]
            b_key = row[mapping.to_column]
            radius = float(row[mapping.radius_column]) * mapping.radius_scale
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"{path}: bad row {row!r}: {exc}") from exc
        if mapping.from_xyz_columns is not None:
            a = node_index(a_key, [float(row[c]) for c in mapping.from_xyz_columns])
            b = node_index(b_key, [float(row[c]) for c in mapping.to_xyz_columns])
        else:
            a = node_index(a_key)
            b = node_index(b_key)
        edges.append((a, b, radius))

    nodes = np.array(positions)
    if mapping.fit_domain is not None:
        lo, hi = mapping.fit_domain
        lo += mapping.fit_margin
        hi -= mapping.fit_margin
        mins = nodes.min(axis=0)
        maxs = nodes.max(axis=0)
        span = float((maxs - mins).max())
        if span == 0.0:
            raise ConfigError("cannot fit a degenerate (single-point) network")
        scale = (hi - lo) / span
        center_target = 0.5 * (lo + hi)
        center_src = 0.5 * (mins + maxs)
        nodes = (nodes - center_src) * scale + center_target
        edges = [(a, b, r * scale) for a, b, r in edges]

    net = NetworkGraph(nodes, edges, {})
    for node in np.nonzero(net.degrees() == 1)[0]:
        net.boundary[int(node)] = BoundaryCondition(
            pressure=mapping.default_pressure, nutrient=mapping.default_nutrient
        )
    return net
