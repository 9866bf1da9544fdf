"""Run configuration: ``dotted.key = value`` lines with a fixed schema.

Blank lines and text after ``#`` are ignored. Values are parsed by the
type of their key; lists are whitespace separated. Relative paths are
resolved against the directory of the configuration file. Every key
has a default except the case geometry paths.

Example::

    case.structure = structure.txt
    case.lattice = lattice.txt
    case.ffd = ffd.txt
    coupler.omega = 0.7
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import FormatError


class ConfigError(Exception):
    """Base class of configuration failures."""


class ConfigFileNotFoundError(ConfigError, FileNotFoundError):
    """The configuration file or a file it references does not exist."""

    def __init__(self, path, key=None):
        self.path = str(path)
        self.key = key
        where = f" (referenced by '{key}')" if key else ""
        super().__init__(f"file not found: {self.path}{where}")


class ConfigSyntaxError(ConfigError):
    """A line is not ``key = value`` or a value has the wrong type."""

    def __init__(self, source, line, column, message):
        self.source, self.line, self.column = str(source), line, column
        super().__init__(f"{source}:{line}:{column}: {message}")


class UnknownKeyError(ConfigError):
    def __init__(self, source, key, line):
        self.source, self.key, self.line = str(source), key, line
        super().__init__(f"{source}:{line}: unknown key '{key}'")


class ConsistencyError(ConfigError):
    """Referenced files parse but do not fit together."""


MODES = ("analyze", "adjoint", "validate-gradient", "optimize", "compare")


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _list(item):
    def parse(text):
        return tuple(item(t) for t in text.split())
    return parse


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise ValueError(f"expected a positive value, got {text!r}")
        return v
    return parse


# key -> (parser, default); "path" marks file references
SCHEMA = {
    "case.structure": ("path", None),
    "case.lattice": ("path", None),
    "case.ffd": ("path", None),
    "case.constraints": ("path", ""),
    "case.spline": ("path", ""),
    "case.target_cl": (float, 0.3),
    "flow.speed": (_positive(float), 50.0),
    "flow.alpha_deg": (float, 4.0),
    "flow.density": (_positive(float), 1.225),
    "flow.mach": (float, 0.0),
    "flow.wake_length": (_positive(float), 25.0),
    "flow.core_factor": (_positive(float), 1e-6),
    "structure.stiffness_scale": (_positive(float), 1.0),
    "structure.load_steps": (_positive(int), 10),
    "structure.newton_tol": (_positive(float), 1e-9),
    "structure.penalty_factor": (_positive(float), 1.0),
    "spline.n_donors": (_positive(int), 12),
    "spline.support_factor": (_positive(float), 1.5),
    "coupler.omega": (_positive(float), 0.7),
    "coupler.tol": (_positive(float), 1e-8),
    "coupler.max_iter": (_positive(int), 50),
    "coupler.adjoint_tol": (_positive(float), 1e-8),
    "coupler.adjoint_max_iter": (_positive(int), 200),
    "coupler.trim_tol": (_positive(float), 1e-6),
    "analysis.trim": (_bool, False),
    "adjoint.objective": (_choice("drag", "lift"), "drag"),
    "adjoint.trimmed": (_bool, False),
    "validate.components": (_list(int), ()),
    "validate.count": (_positive(int), 10),
    "validate.steps": (_list(_positive(float)), (1e-4, 1e-5, 1e-6)),
    "validate.tolerance": (_positive(float), 1e-5),
    "optimizer.mode": (_choice("flexible", "rigid"), "flexible"),
    "optimizer.max_iter": (_positive(int), 25),
    "optimizer.gradient_tol": (_positive(float), 1e-5),
    "optimizer.constraint_tol": (_positive(float), 1e-8),
    "optimizer.bound": (_positive(float), 0.05),
    "optimizer.fsi_tol": (_positive(float), 1e-10),
    "optimizer.adjoint_tol": (_positive(float), 1e-10),
    "optimizer.trim_tol": (_positive(float), 1e-9),
    "optimizer.mask_sharp_edges": (_bool, False),
    "optimizer.sharp_edge_deg": (_positive(float), 60.0),
    "optimizer.fd_check_components": (int, 3),
    "optimizer.fd_check_step": (_positive(float), 1e-5),
    "optimizer.fd_check_tol": (_positive(float), 1e-4),
    "optimizer.fd_check_seed": (int, 20240501),
    "compare.aswso_design": ("path", ""),
    "compare.awso_design": ("path", ""),
}

REQUIRED = ("case.structure", "case.lattice", "case.ffd")


@dataclass
class RunConfig:
    """Validated configuration; ``values`` maps every schema key to its value."""

    source: str
    values: dict
    mode: str = "analyze"
    threads: int = 1
    lines: dict = field(default_factory=dict)    # key -> line number, for messages

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}


def parse_config_text(text: str, source="<string>", base_dir=None) -> RunConfig:
    """Parse configuration text; file references are checked for existence."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    values = {k: d for k, (_, d) in SCHEMA.items()}
    lines = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigSyntaxError(source, ln, col, "expected 'key = value'")
        key_part, val_part = body.split("=", 1)
        key = key_part.strip()
        col = len(key_part) - len(key_part.lstrip()) + 1
        if not key or any(c.isspace() for c in key):
            raise ConfigSyntaxError(source, ln, col, f"malformed key {key_part.strip()!r}")
        if key not in SCHEMA:
            raise UnknownKeyError(source, key, ln)
        if key in lines:
            raise ConfigSyntaxError(source, ln, col, f"key '{key}' already set on line {lines[key]}")
        value = val_part.strip()
        vcol = len(key_part) + 2 + len(val_part) - len(val_part.lstrip())
        parser, _ = SCHEMA[key]
        if parser == "path":
            if not value:
                raise ConfigSyntaxError(source, ln, vcol, f"empty path for '{key}'")
            values[key] = str(base / value)
        else:
            try:
                values[key] = parser(value)
            except ValueError as exc:
                raise ConfigSyntaxError(source, ln, vcol, f"bad value for '{key}': {exc}") from None
        lines[key] = ln
    for key in REQUIRED:
        if key not in lines:
            raise ConfigSyntaxError(source, 0, 0, f"missing required key '{key}'")
    for key, (parser, _) in SCHEMA.items():
        if parser == "path" and values[key] and not os.path.isfile(values[key]):
            raise ConfigFileNotFoundError(values[key], key)
    return RunConfig(str(source), values, lines=lines)


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file (see :func:`parse_config_text`)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigFileNotFoundError(path)
    return parse_config_text(path.read_text(), str(path), path.parent)


def format_config(values: dict, base_dir=None) -> str:
    """Configuration text for ``values`` (only keys differing from the defaults)."""
    out = []
    for key, (parser, default) in SCHEMA.items():
        v = values.get(key, default)
        if v == default and key not in REQUIRED:
            continue
        if parser == "path":
            v = os.path.relpath(v, base_dir) if base_dir is not None else v
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = " ".join(repr(x) for x in v)
        else:
            v = repr(v) if isinstance(v, float) else str(v)
        out.append(f"{key} = {v}")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------
def load_case(cfg: RunConfig):
    """Read the referenced files and assemble a :class:`WingCase`.

    Node counts across files are checked before anything is solved.
    """
    from dataclasses import replace

    from .beam import StructuralSettings, read_structure
    from .cases import build_wing_case
    from .coupler import CouplerSettings
    from .ffd import EmbeddingError, read_ffd, read_stations
    from .fileio import parse_matrix_coo
    from .spline import SplineSettings
    from .vlm import FlowConditions, read_lattice

    v = cfg.values

    def read(key, reader):
        try:
            return reader(v[key])
        except FormatError as exc:
            raise ConsistencyError(f"{key}: {exc}") from exc

    structure = read("case.structure", read_structure)
    lattice = read("case.lattice", read_lattice)
    box, stations = read("case.ffd", read_ffd)
    if v["case.constraints"]:
        stations = read("case.constraints", read_stations)
    if stations is None:
        raise ConsistencyError("no thickness stations: give case.constraints or a STATIONS "
                               "section in the FFD file")
    if lattice.thickness is None:
        raise ConsistencyError(f"{v['case.lattice']}: lattice needs a THICKNESS section")
    ys = lattice.nodes[..., 1]
    bad = (stations[0] < ys.min()) | (stations[0] > ys.max())
    if bad.any():
        raise ConsistencyError(f"thickness station y = {stations[0][bad][0]} lies outside the "
                               f"lattice span [{ys.min()}, {ys.max()}]")
    coupling = None
    if v["case.spline"]:
        with open(v["case.spline"]) as fh:
            try:
                coupling = parse_matrix_coo(fh.read(), v["case.spline"])
            except (FormatError, ValueError) as exc:
                raise ConsistencyError(f"case.spline: {exc}") from exc
        rows, cols = coupling.shape
        if rows != 3 * lattice.n_bound:
            raise ConsistencyError(
                f"spline has {rows // 3} receivers ({rows} rows) but the lattice has "
                f"{lattice.n_bound} surface nodes")
        if cols != structure.n_dof:
            raise ConsistencyError(f"spline has {cols} columns but the structure has "
                                   f"{structure.n_dof} DOFs")
    flow = FlowConditions(speed=v["flow.speed"], alpha=np.deg2rad(v["flow.alpha_deg"]),
                          density=v["flow.density"], mach=v["flow.mach"],
                          wake_length=v["flow.wake_length"], core_factor=v["flow.core_factor"])
    sst = StructuralSettings(load_steps=v["structure.load_steps"],
                             newton_tol=v["structure.newton_tol"],
                             penalty_factor=v["structure.penalty_factor"])
    cst = CouplerSettings(omega=v["coupler.omega"], tol=v["coupler.tol"],
                          max_iter=v["coupler.max_iter"], adj_tol=v["coupler.adjoint_tol"],
                          adj_max_iter=v["coupler.adjoint_max_iter"], trim_tol=v["coupler.trim_tol"])
    spl = SplineSettings(n_donors=v["spline.n_donors"], support_factor=v["spline.support_factor"])
    try:
        case = build_wing_case(lattice, structure, flow, box, stations[0], stations[1],
                               v["case.target_cl"], spl, sst, cst)
    except EmbeddingError as exc:
        raise ConsistencyError(f"lattice is not inside the FFD volume: {exc}") from exc
    if coupling is not None:
        case = replace(case, coupling=coupling)
    return case


def write_case(case, directory, name="run.cfg", **overrides) -> Path:
    """Write the structure, lattice and FFD files of ``case`` plus a configuration.

    ``overrides`` set configuration keys with dots replaced by double
    underscores, e.g. ``optimizer__max_iter=10``. Returns the config path.
    """
    from .beam import write_structure
    from .ffd import write_ffd
    from .vlm import write_lattice

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_structure(case.structure, d / "structure.txt")
    write_lattice(case.lattice, d / "lattice.txt")
    write_ffd(case.ffd, d / "ffd.txt", (case.constraints.stations, case.constraints.minima))
    values = {"case.structure": str(d / "structure.txt"), "case.lattice": str(d / "lattice.txt"),
              "case.ffd": str(d / "ffd.txt"), "case.target_cl": float(case.target_cl),
              "flow.speed": float(case.flow.speed),
              "flow.alpha_deg": float(np.rad2deg(case.flow.alpha)),
              "flow.density": float(case.flow.density)}
    for k, v in overrides.items():
        key = k.replace("__", ".")
        if key not in SCHEMA:
            raise KeyError(f"unknown configuration key '{key}'")
        values[key] = v
    path = d / name
    path.write_text(format_config(values, d))
    return path
