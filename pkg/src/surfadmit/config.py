"""YAML run configuration.

A configuration file is a single UTF-8 YAML mapping::

    scene:
      exterior: {eps_r: 1.0}
      scatterers:
        - sphere: {radius: 0.5, triangles: 1220, center: [0, 0, 0]}
          material: {eps_r: 2.25, name: glass}
        - mesh: bodies.msh          # every body in the file gets this material
          material: {eps_r: [4.0, -0.1]}
        - sphere_array: {nx: 2, ny: 2, spacing: 2.0, radius: 0.5, triangles: 300}
          material: {eps_r: 2.25}
    excitation: {direction: [0, 0, -1], polarization: [1, 0, 0], amplitude: 1.0}
    frequencies: {start: 50 MHz, stop: 300 MHz, count: 6}
    solvers: [single_source, pmchwt, schur, mie]
    alpha: 0.5
    avg_weight: 0.5
    efie_testing: normal
    quadrature: {far_points: 7, near_points: 16}
    cuts: [{phi: 0}, {phi: 90}]
    cut_resolution: 1.0
    output: {directory: results, plots: true}
    benchmark: false

Complex material values are written as ``[re, im]`` pairs or strings such as
``"4-0.1j"``.  Frequencies accept plain numbers in Hz or strings with a
``Hz``/``kHz``/``MHz``/``GHz`` suffix, either as a list or as a
``start``/``stop`` range with ``count`` or ``step``.  Relative paths are
resolved against the configuration file's directory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .excitation import PlaneWave
from .mesh import MeshError, load_mesh
from .operators import AssemblyOptions
from .shapes import sphere, sphere_array
from .solver import FREE_SPACE, Material, Scatterer, Scene

__all__ = ["ConfigError", "RunConfig", "SphereSpec", "CutSpec", "load_config", "parse_config", "SOLVER_NAMES"]

SOLVER_NAMES = ("single_source", "pmchwt", "schur", "mie")
_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_TOP_KEYS = {"scene", "excitation", "frequencies", "solvers", "alpha", "avg_weight", "efie_testing",
             "quadrature", "cuts", "cut_resolution", "output", "benchmark", "threads"}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SphereSpec:
    radius: float
    center: tuple[float, float, float]
    material: Material


@dataclass(frozen=True)
class CutSpec:
    phi_deg: float | None = None
    theta_deg: float | None = None

    @property
    def label(self) -> str:
        return f"phi{self.phi_deg:g}" if self.phi_deg is not None else f"theta{self.theta_deg:g}"


@dataclass(frozen=True, eq=False)
class RunConfig:
    scene: Scene
    excitation: PlaneWave
    frequencies: tuple[float, ...]
    solvers: tuple[str, ...]
    alpha: float = 0.5
    avg_weight: float = 0.5
    efie_testing: str = "normal"
    options: AssemblyOptions = AssemblyOptions()
    cuts: tuple[CutSpec, ...] = (CutSpec(phi_deg=0.0), CutSpec(phi_deg=90.0))
    cut_resolution: float = 1.0
    output_dir: Path = Path("results")
    plots: bool = True
    benchmark: bool = False
    threads: int | None = None
    sphere: SphereSpec | None = None
    source: Path | None = None

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _unknown(d: dict, allowed, path: str) -> None:
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0],
                          f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(value, path: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, f"must be positive, got {value}")
    return float(value)


def _integer(value, path: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _complex(value, path: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(path, "complex values are [re, im] pairs")
        return complex(_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]"))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(path, f"cannot parse {value!r} as a complex number") from None
    return complex(_number(value, path))


def _vector(value, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(path, "expected a list of three numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _frequency(value, path: str) -> float:
    if isinstance(value, str):
        m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([kKmMgG]?[hH][zZ])?\s*", value)
        if not m:
            raise ConfigError(path, f"cannot parse frequency {value!r}")
        try:
            number = float(m.group(1))
        except ValueError:
            raise ConfigError(path, f"cannot parse frequency {value!r}") from None
        f = number * _UNITS[(m.group(2) or "hz").lower()]
    else:
        f = _number(value, path)
    if f <= 0:
        raise ConfigError(path, f"frequency must be positive, got {f}")
    return f


def _frequencies(value, path: str) -> tuple[float, ...]:
    if value is None:
        raise ConfigError(path, "required")
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(path, "at least one frequency is required")
        return tuple(_frequency(v, f"{path}[{i}]") for i, v in enumerate(value))
    if isinstance(value, dict):
        _unknown(value, {"start", "stop", "count", "step"}, path)
        for key in ("start", "stop"):
            if key not in value:
                raise ConfigError(f"{path}.{key}", "required")
        start = _frequency(value["start"], f"{path}.start")
        stop = _frequency(value["stop"], f"{path}.stop")
        if stop < start:
            raise ConfigError(f"{path}.stop", "must not be below start")
        if ("count" in value) == ("step" in value):
            raise ConfigError(path, "give exactly one of count or step")
        if "count" in value:
            n = _integer(value["count"], f"{path}.count")
            return tuple(float(f) for f in np.linspace(start, stop, n))
        step = _frequency(value["step"], f"{path}.step")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(n))
    return (_frequency(value, path),)


def _material(value, path: str) -> Material:
    d = _mapping(value, path)
    _unknown(d, {"eps_r", "mu_r", "name"}, path)
    try:
        return Material(_complex(d.get("eps_r", 1.0), f"{path}.eps_r"),
                        _complex(d.get("mu_r", 1.0), f"{path}.mu_r"), str(d.get("name", "")))
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(path, str(err)) from None


def _scatterers(entries, path: str, base: Path) -> tuple[list[Scatterer], list[SphereSpec]]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError(path, "expected a non-empty list of scatterers")
    out: list[Scatterer] = []
    spheres: list[SphereSpec] = []
    for i, raw in enumerate(entries):
        p = f"{path}[{i}]"
        d = _mapping(raw, p)
        _unknown(d, {"mesh", "sphere", "sphere_array", "material", "name"}, p)
        kinds = [k for k in ("mesh", "sphere", "sphere_array") if k in d]
        if len(kinds) != 1:
            raise ConfigError(p, "give exactly one of mesh, sphere or sphere_array")
        kind = kinds[0]
        mat = _material(d.get("material"), f"{p}.material")
        name = str(d.get("name", f"{kind}{i}"))
        if kind == "mesh":
            mesh_path = Path(str(d["mesh"]))
            mesh_path = mesh_path if mesh_path.is_absolute() else base / mesh_path
            if not mesh_path.is_file():
                raise ConfigError(f"{p}.mesh", f"file not found: {mesh_path}")
            try:
                mesh = load_mesh(mesh_path)
            except MeshError as err:
                raise ConfigError(f"{p}.mesh", str(err)) from None
            bodies = [mesh.body(b) for b in mesh.bodies]
        elif kind == "sphere":
            s = _mapping(d["sphere"], f"{p}.sphere")
            _unknown(s, {"radius", "triangles", "center"}, f"{p}.sphere")
            radius = _number(s.get("radius"), f"{p}.sphere.radius", positive=True)
            tris = _integer(s.get("triangles", 320), f"{p}.sphere.triangles", 4)
            if tris % 2:
                raise ConfigError(f"{p}.sphere.triangles", "must be even")
            center = _vector(s.get("center", [0, 0, 0]), f"{p}.sphere.center")
            bodies = [sphere(radius, tris, center)]
            spheres.append(SphereSpec(radius, tuple(center), mat))
        else:
            s = _mapping(d["sphere_array"], f"{p}.sphere_array")
            _unknown(s, {"nx", "ny", "spacing", "radius", "triangles"}, f"{p}.sphere_array")
            nx = _integer(s.get("nx"), f"{p}.sphere_array.nx")
            ny = _integer(s.get("ny"), f"{p}.sphere_array.ny")
            spacing = _number(s.get("spacing"), f"{p}.sphere_array.spacing", positive=True)
            radius = _number(s.get("radius"), f"{p}.sphere_array.radius", positive=True)
            tris = _integer(s.get("triangles", 320), f"{p}.sphere_array.triangles", 4)
            if tris % 2:
                raise ConfigError(f"{p}.sphere_array.triangles", "must be even")
            arr = sphere_array(nx, ny, spacing, radius, tris)
            bodies = [arr.body(b) for b in arr.bodies]
            spheres.extend(SphereSpec(radius, (np.nan,) * 3, mat) for _ in bodies)
        suffix = len(bodies) > 1
        out.extend(Scatterer(b, mat, f"{name}.{j}" if suffix else name) for j, b in enumerate(bodies))
        if kind == "mesh":
            spheres.extend([None] * len(bodies))
    return out, spheres


def _cuts(value, path: str) -> tuple[CutSpec, ...]:
    if value is None:
        return RunConfig.cuts
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of cuts")
    cuts = []
    for i, c in enumerate(value):
        d = _mapping(c, f"{path}[{i}]")
        _unknown(d, {"phi", "theta"}, f"{path}[{i}]")
        if len(d) != 1:
            raise ConfigError(f"{path}[{i}]", "give exactly one of phi or theta (degrees)")
        key, v = next(iter(d.items()))
        v = _number(v, f"{path}[{i}].{key}")
        cuts.append(CutSpec(phi_deg=v) if key == "phi" else CutSpec(theta_deg=v))
    return tuple(cuts)


def _options(value, path: str) -> AssemblyOptions:
    d = _mapping(value, path)
    names = {f.name for f in fields(AssemblyOptions)}
    _unknown(d, names, path)
    kw = {}
    for k, v in d.items():
        kw[k] = _number(v, f"{path}.{k}", positive=True) if k == "near_factor" else _integer(v, f"{path}.{k}")
    return AssemblyOptions(**kw)


def parse_config(data, base: Path | str = ".", source: Path | None = None) -> RunConfig:
    """Validate a configuration mapping (already parsed from YAML)."""
    base = Path(base)
    d = _mapping(data, "<root>")
    _unknown(d, _TOP_KEYS, "")
    if "scene" not in d:
        raise ConfigError("scene", "required")
    sc = _mapping(d["scene"], "scene")
    _unknown(sc, {"exterior", "scatterers"}, "scene")
    exterior = _material(sc["exterior"], "scene.exterior") if "exterior" in sc else FREE_SPACE
    if "scatterers" not in sc:
        raise ConfigError("scene.scatterers", "required")
    scatterers, spheres = _scatterers(sc["scatterers"], "scene.scatterers", base)
    frequencies = _frequencies(d.get("frequencies"), "frequencies")
    try:
        scene = Scene(tuple(scatterers), exterior, frequencies)
    except ValueError as err:
        raise ConfigError("scene.scatterers", str(err)) from None

    ex = _mapping(d.get("excitation"), "excitation")
    _unknown(ex, {"direction", "polarization", "amplitude"}, "excitation")
    try:
        pw = PlaneWave.normalized(_vector(ex.get("direction", [0, 0, 1]), "excitation.direction"),
                                  _vector(ex.get("polarization", [1, 0, 0]), "excitation.polarization"),
                                  _number(ex.get("amplitude", 1.0), "excitation.amplitude", positive=True),
                                  frequencies[0])
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("excitation", str(err)) from None

    solvers = d.get("solvers")
    if not isinstance(solvers, list) or not solvers:
        raise ConfigError("solvers", f"expected a non-empty list drawn from {', '.join(SOLVER_NAMES)}")
    for i, s in enumerate(solvers):
        if s not in SOLVER_NAMES:
            raise ConfigError(f"solvers[{i}]", f"unknown solver {s!r} (choose from {', '.join(SOLVER_NAMES)})")
    if len(set(solvers)) != len(solvers):
        raise ConfigError("solvers", "duplicate entries")
    sphere_spec = None
    if "mie" in solvers:
        if len(spheres) != 1 or spheres[0] is None or np.isnan(spheres[0].center[0]):
            raise ConfigError("solvers", "mie needs a scene made of exactly one 'sphere' entry")
        sphere_spec = spheres[0]
        if complex(sphere_spec.material.mu_r) != 1 or complex(exterior.eps_r) != 1 or complex(exterior.mu_r) != 1:
            raise ConfigError("solvers", "mie supports a non-magnetic sphere in free space only")

    alpha = _number(d.get("alpha", 0.5), "alpha")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha", f"must satisfy 0 < alpha < 1, got {alpha}")
    weight = _number(d.get("avg_weight", 0.5), "avg_weight")
    if not 0.0 <= weight <= 1.0:
        raise ConfigError("avg_weight", f"must lie in [0, 1], got {weight}")
    testing = d.get("efie_testing", "normal")
    if testing not in ("normal", "tangential"):
        raise ConfigError("efie_testing", f"must be 'normal' or 'tangential', got {testing!r}")
    resolution = _number(d.get("cut_resolution", 1.0), "cut_resolution", positive=True)
    if resolution > 90:
        raise ConfigError("cut_resolution", "must not exceed 90 degrees")

    out = _mapping(d.get("output"), "output")
    _unknown(out, {"directory", "plots"}, "output")
    out_dir = Path(str(out.get("directory", "results")))
    out_dir = out_dir if out_dir.is_absolute() else base / out_dir
    plots = out.get("plots", True)
    if not isinstance(plots, bool):
        raise ConfigError("output.plots", "expected true or false")
    bench = d.get("benchmark", False)
    if not isinstance(bench, bool):
        raise ConfigError("benchmark", "expected true or false")
    threads = d.get("threads")
    if threads is not None:
        threads = _integer(threads, "threads")

    return RunConfig(scene=scene, excitation=pw, frequencies=frequencies, solvers=tuple(solvers),
                     alpha=alpha, avg_weight=weight, efie_testing=testing,
                     options=_options(d.get("quadrature"), "quadrature"),
                     cuts=_cuts(d.get("cuts"), "cuts"), cut_resolution=resolution,
                     output_dir=out_dir, plots=plots, benchmark=bench, threads=threads,
                     sphere=sphere_spec, source=source)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "configuration file not found")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(str(path), f"invalid YAML: {err}") from None
    return parse_config(data, path.parent, path)
