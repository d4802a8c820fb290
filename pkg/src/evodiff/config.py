"""TOML run configuration, validation and the run manifest."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__, expressions
from .errors import ConfigError, EvodiffError
from .grid import Grid
from .growth import JACOBIAN_MODES, KINDS, GrowthLaw
from .models import BUILTINS, builtin, from_expressions
from .operator import FLUX_CONVENTIONS
from .solver import STEPPERS, RunConfig

SCHEMA_VERSION = 1


class ConfigParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        super().__init__([f"{message} (line {line}, column {column})"])


@dataclass
class GrowthSection:
    kind: str = "static"
    n: int = 1
    horizon: float = 1.0
    rho: float = 0.0
    saturation: float | None = None
    expressions: list | None = None
    table: str | None = None
    jacobian: str = "paper-sqrt"


@dataclass
class ModelSection:
    builtin: str | None = None
    f: list | None = None
    g: list | None = None
    d: list | None = None
    constants: dict = field(default_factory=dict)
    initial: list = field(default_factory=lambda: ["1"])
    flux_convention: str = "d-scaled"


@dataclass
class GridSection:
    extents: list = field(default_factory=lambda: [1.0])
    nodes: list = field(default_factory=lambda: [33])


@dataclass
class TimeSection:
    t_end: float = 1.0
    stepper: str = "rk4"
    dt: object = "auto"
    safety: float = 0.9
    overshoot_tol: float = 1e-8
    blowup_threshold: float | None = None


@dataclass
class DiagnosticsSection:
    every: int = 1
    lyapunov_p: int = 2
    theta: float | None = None
    weights: list | None = None


@dataclass
class OutputSection:
    directory: str = "evodiff-out"
    snapshot_every: int = 0


SECTIONS = {
    "growth": GrowthSection,
    "model": ModelSection,
    "grid": GridSection,
    "time": TimeSection,
    "diagnostics": DiagnosticsSection,
    "output": OutputSection,
}


@dataclass
class AppConfig:
    schema_version: int = SCHEMA_VERSION
    growth: GrowthSection = field(default_factory=GrowthSection)
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    time: TimeSection = field(default_factory=TimeSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def to_dict(self, include_defaults=True):
        out = {"schema_version": self.schema_version}
        for name in SECTIONS:
            sec = asdict(getattr(self, name))
            out[name] = {k: v for k, v in sec.items() if v is not None}
        return out

    def hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    # -- runtime objects --------------------------------------------------

    def build_law(self):
        g = self.growth
        kw = dict(jacobian=g.jacobian)
        if g.kind == "static":
            return GrowthLaw.static(g.n, g.horizon, **kw)
        if g.kind == "isotropic-exponential":
            return GrowthLaw.exponential(g.rho, g.n, g.horizon, **kw)
        if g.kind == "isotropic-logistic":
            return GrowthLaw.logistic(g.rho, g.saturation, g.n, g.horizon, **kw)
        if g.kind == "per-axis-analytic":
            return GrowthLaw.per_axis(g.expressions, g.horizon, **kw)
        data = np.loadtxt(self.base_dir / g.table, delimiter=",", ndmin=2)
        return GrowthLaw.tabulated(data[:, 0], data[:, 1:], g.horizon, **kw)

    def build_model(self):
        m = self.model
        if m.builtin is not None:
            return builtin(m.builtin, m.constants or None, tuple(m.d) if m.d else None)
        return from_expressions(m.f, m.g, m.d, m.constants, name="config")

    def build_grid(self):
        return Grid(tuple(self.grid.extents), tuple(self.grid.nodes))

    def initial_data(self, grid):
        names = [f"x{k + 1}" for k in range(grid.n)]
        mesh = grid.mesh()
        out = []
        for text in self.model.initial:
            fn = expressions.compile_expr(expressions.parse(text, names, self.model.constants), names)
            out.append(np.broadcast_to(fn(*mesh), grid.shape))
        return np.stack(out).astype(float)

    def run_config(self):
        law, model, grid = self.build_law(), self.build_model(), self.build_grid()
        t = self.time
        return RunConfig(
            law=law, model=model, grid=grid, t_end=t.t_end, u0=self.initial_data(grid),
            stepper=t.stepper, dt=t.dt, safety=t.safety, overshoot_tol=t.overshoot_tol,
            blowup_threshold=t.blowup_threshold, snapshot_every=self.output.snapshot_every,
            diagnostics_every=self.diagnostics.every,
            flux_convention=self.model.flux_convention,
            weights=tuple(self.diagnostics.weights) if self.diagnostics.weights else None,
            lyapunov_p=self.diagnostics.lyapunov_p, theta=self.diagnostics.theta,
        )


# -- validation ---------------------------------------------------------------

_NUMBER = (int, float)


def _typed(errors, where, value, kinds, label):
    if isinstance(value, bool) or not isinstance(value, kinds):
        errors.append(f"{where}: expected {label}, got {type(value).__name__}")
        return False
    return True


def _section(errors, raw, name):
    cls = SECTIONS[name]
    data = raw.get(name, {})
    if not isinstance(data, dict):
        errors.append(f"[{name}] must be a table")
        return cls()
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            errors.append(f"{name}.{key}: unknown key")
    return cls(**{k: v for k, v in data.items() if k in known})


def validate(raw, base_dir=Path(".")):
    """Build an :class:`AppConfig` from a parsed TOML mapping, collecting every error."""
    errors = []
    for key in raw:
        if key != "schema_version" and key not in SECTIONS:
            errors.append(f"{key}: unknown section or key")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    secs = {name: _section(errors, raw, name) for name in SECTIONS}
    gr, mo, gd, tm, dg, out = (secs[k] for k in SECTIONS)

    if gr.kind not in KINDS:
        errors.append(f"growth.kind: must be one of {KINDS}")
    if _typed(errors, "growth.n", gr.n, int, "integer") and gr.n not in (1, 2, 3):
        errors.append("growth.n: must be 1, 2 or 3")
    if _typed(errors, "growth.horizon", gr.horizon, _NUMBER, "number") and not gr.horizon > 0:
        errors.append("growth.horizon: must be positive")
    if gr.jacobian not in JACOBIAN_MODES:
        errors.append(f"growth.jacobian: must be one of {JACOBIAN_MODES}")
    if gr.kind == "isotropic-logistic" and gr.saturation is None:
        errors.append("growth.saturation: required for isotropic-logistic")
    if gr.kind == "per-axis-analytic" and (not gr.expressions or len(gr.expressions) != gr.n):
        errors.append("growth.expressions: need one expression per axis")
    if gr.kind == "tabulated":
        if not gr.table:
            errors.append("growth.table: required for tabulated growth")
        elif not (base_dir / gr.table).is_file():
            errors.append(f"growth.table: file {gr.table!r} does not exist")

    m = None
    if mo.builtin is not None:
        if mo.builtin not in BUILTINS:
            errors.append(f"model.builtin: unknown model {mo.builtin!r}; choose from {sorted(BUILTINS)}")
        elif mo.f is not None or mo.g is not None:
            errors.append("model.builtin: cannot be combined with model.f / model.g")
        else:
            m = {"brusselator-surface": 2, "reversible-reaction": 3, "example3": 2}.get(mo.builtin)
    elif mo.f is None or mo.g is None:
        errors.append("model: give either builtin or both f and g")
    else:
        if len(mo.f) != len(mo.g):
            errors.append("model.f / model.g: need the same number of components")
        m = len(mo.f)
    if m is not None:
        if mo.d is not None and len(mo.d) != m:
            errors.append(f"model.d: need {m} diffusivities")
        if mo.d is None and mo.builtin is None:
            errors.append("model.d: required for expression models")
        if len(mo.initial) != m:
            errors.append(f"model.initial: need {m} initial expressions")
        if dg.weights is not None and len(dg.weights) != m:
            errors.append(f"diagnostics.weights: need {m} weights")
    if mo.flux_convention not in FLUX_CONVENTIONS:
        errors.append(f"model.flux_convention: must be one of {FLUX_CONVENTIONS}")

    if len(gd.extents) != len(gd.nodes):
        errors.append("grid.extents / grid.nodes: lengths differ")
    if isinstance(gr.n, int) and len(gd.nodes) != gr.n:
        errors.append(f"grid.nodes: need {gr.n} entries to match growth.n")
    if any(not isinstance(k, int) or k < 3 for k in gd.nodes):
        errors.append("grid.nodes: each entry must be an integer >= 3")

    if _typed(errors, "time.t_end", tm.t_end, _NUMBER, "number"):
        if not tm.t_end > 0:
            errors.append("time.t_end: must be positive")
        elif isinstance(gr.horizon, _NUMBER) and tm.t_end > gr.horizon:
            errors.append(f"time.t_end ({tm.t_end}) exceeds growth.horizon ({gr.horizon})")
    if tm.stepper not in STEPPERS:
        errors.append(f"time.stepper: must be one of {STEPPERS}")
    if not (tm.dt == "auto" or (isinstance(tm.dt, _NUMBER) and not isinstance(tm.dt, bool) and tm.dt > 0)):
        errors.append("time.dt: must be 'auto' or a positive number")
    if tm.blowup_threshold is not None and not (
        isinstance(tm.blowup_threshold, _NUMBER) and tm.blowup_threshold > 0
    ):
        errors.append("time.blowup_threshold: must be positive")
    if not (isinstance(tm.safety, _NUMBER) and 0 < tm.safety <= 1):
        errors.append("time.safety: must lie in (0, 1]")
    if not (isinstance(dg.every, int) and dg.every >= 0):
        errors.append("diagnostics.every: must be a nonnegative integer")
    if not (isinstance(dg.lyapunov_p, int) and dg.lyapunov_p >= 2):
        errors.append("diagnostics.lyapunov_p: must be an integer >= 2")
    if not (isinstance(out.snapshot_every, int) and out.snapshot_every >= 0):
        errors.append("output.snapshot_every: must be a nonnegative integer")
    if errors:
        raise ConfigError(errors)
    cfg = AppConfig(version, gr, mo, gd, tm, dg, out, base_dir)
    # expressions and model construction surface their own errors
    try:
        grid = cfg.build_grid()
        cfg.build_law()
        cfg.build_model()
        cfg.initial_data(grid)
    except (EvodiffError, ValueError) as exc:
        raise ConfigError([f"{type(exc).__name__}: {exc}"]) from exc
    return cfg


def loads(text, base_dir=Path(".")):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ConfigParseError(msg, line, col) from exc
    return validate(raw, Path(base_dir))


def load_config(path):
    path = Path(path)
    return loads(path.read_text(), path.parent)


def dumps(cfg):
    return tomli_w.dumps(cfg.to_dict())


def write_config(cfg, path):
    path = Path(path)
    path.write_text(dumps(cfg))
    return path


# -- manifest -----------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    deviations: list
    termination: str
    wall_time: float
    steps: int = 0
    message: str = ""
    defaults: dict = field(default_factory=dict)

    @classmethod
    def from_run(cls, cfg, trajectory):
        return cls(cfg.hash(), __version__, list(trajectory.deviations), trajectory.termination,
                   trajectory.wall_time, trajectory.steps, trajectory.message, cfg.to_dict())

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))
