"""Run configuration: TOML file with strictly validated sections."""

from __future__ import annotations

import dataclasses
import os
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .topopt import OptConfig

THREADS_ENV = "MOMTOPO_THREADS"


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class MeshConfig:
    kind: str = "plate"          # plate | sphere | file
    nx: int = 20
    ny: int = 12
    L: float = 1.0
    aspect: float = 0.6
    subdivisions: int = 3
    R: float = 1.0
    path: str | None = None


@dataclasses.dataclass
class FeedConfig:
    edges: list[int] | None = None       # explicit inner-edge indices
    voltages: list[float] | None = None  # real amplitudes, one per edge
    phase_deg: float = 0.0               # sphere: phase of the second source


@dataclasses.dataclass
class SolverConfig:
    threads: int | None = None
    cache_dir: str | None = None
    quad_far: int = 2
    quad_near: int = 10
    quad_radiation: int = 5
    fd_step: float = 1e-3


@dataclasses.dataclass
class OutputConfig:
    dir: str = "out"


@dataclasses.dataclass
class RunConfig:
    mesh: MeshConfig
    feed: FeedConfig
    optimization: OptConfig
    solver: SolverConfig
    output: OutputConfig
    source: Path | None = None

    @property
    def threads(self) -> int | None:
        """Thread count from the file, else from the environment, else None."""
        if self.solver.threads is not None:
            return self.solver.threads
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
            if n < 1:
                raise ConfigError(f"{THREADS_ENV} must be >= 1")
            return n
        return None


_SECTIONS = {"mesh": MeshConfig, "feed": FeedConfig, "optimization": OptConfig,
             "solver": SolverConfig, "output": OutputConfig}
_OPT_SKIP = {"init_design"}


def _fields(cls) -> dict[str, dataclasses.Field]:
    return {f.name: f for f in dataclasses.fields(cls) if f.name not in _OPT_SKIP}


def _check_type(where: str, value: Any, field: dataclasses.Field) -> Any:
    kind = str(field.type)
    if "list" in kind:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return value
    if kind.startswith("int") or kind == "int | None":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
    elif kind.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        value = float(value)
    elif kind.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
    elif kind.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
    return value


def parse_config(data: dict, source: Path | None = None) -> RunConfig:
    """Validate a decoded TOML document; unknown keys are reported by location."""
    label = str(source) if source else "<config>"
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(f"{label}: unknown section [{key}]")
    parts = {}
    for name, cls in _SECTIONS.items():
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"{label}: [{name}] must be a table")
        fields = _fields(cls)
        kwargs = {}
        for key, value in sec.items():
            if key not in fields:
                raise ConfigError(f"{label}: unknown key '{key}' in [{name}]")
            kwargs[key] = _check_type(f"{label}: [{name}].{key}", value, fields[key])
        try:
            parts[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{label}: [{name}]: {exc}") from exc
    cfg = RunConfig(source=source, **parts)
    _validate(cfg, label)
    return cfg


def _resolve(cfg: RunConfig, p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and cfg.source is not None:
        path = cfg.source.parent / path
    return path


def _validate(cfg: RunConfig, label: str) -> None:
    m = cfg.mesh
    if m.kind not in ("plate", "sphere", "file"):
        raise ConfigError(f"{label}: [mesh].kind must be plate, sphere or file")
    if m.kind == "plate" and not (m.nx >= 1 and m.ny >= 1 and m.L > 0 and m.aspect > 0):
        raise ConfigError(f"{label}: [mesh] plate needs nx, ny >= 1 and positive L, aspect")
    if m.kind == "sphere" and not (m.subdivisions >= 0 and m.R > 0):
        raise ConfigError(f"{label}: [mesh] sphere needs subdivisions >= 0 and R > 0")
    if m.kind == "file":
        if not m.path:
            raise ConfigError(f"{label}: [mesh].path is required for kind = 'file'")
        if not _resolve(cfg, m.path).is_file():
            raise ConfigError(f"{label}: [mesh].path {m.path!r} does not exist")
        if not cfg.feed.edges:
            raise ConfigError(f"{label}: [feed].edges is required for a mesh read from file")
    f = cfg.feed
    if f.voltages is not None and (f.edges is None or len(f.voltages) != len(f.edges)):
        raise ConfigError(f"{label}: [feed].voltages needs one entry per edge")
    o = cfg.optimization
    if o.init == "file":
        if not getattr(o, "init_file", None):
            raise ConfigError(f"{label}: [optimization].init_file is required for init = 'file'")
        if not _resolve(cfg, o.init_file).is_file():
            raise ConfigError(f"{label}: [optimization].init_file {o.init_file!r} does not exist")
    s = cfg.solver
    if s.threads is not None and s.threads < 1:
        raise ConfigError(f"{label}: [solver].threads must be >= 1")
    if min(s.quad_far, s.quad_near, s.quad_radiation) < 1:
        raise ConfigError(f"{label}: quadrature degrees must be >= 1")
    if not 0 < s.fd_step < 0.1:
        raise ConfigError(f"{label}: [solver].fd_step must lie in (0, 0.1)")
    out = _resolve(cfg, cfg.output.dir)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"{label}: [output].dir {cfg.output.dir!r} is not a directory")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path)


def resolve_path(cfg: RunConfig, p: str) -> Path:
    return _resolve(cfg, p)
