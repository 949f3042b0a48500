"""Plain key-value run configuration: parsing, validation, serialisation.

The parameter space is flat, so the format is one ``key = value`` per line
with ``#`` comments.  Parsing applies defaults, rejects unknown keys, and
validates the same constraints the simulation enforces (time-step bound,
mesh-size ratio caps), naming the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from tgfem.errors import ConfigError
from tgfem.simulation import SimParams

_MODES = ("run", "radial", "oracle", "sweep", "check-mesh")

# key -> (type, default); REQUIRED means the key must be present.
REQUIRED = object()
_SCHEMA = {
    "mode": (str, "run"),
    "Q": (float, REQUIRED),
    "alpha": (float, REQUIRED),
    "beta": (float, REQUIRED),
    "epsilon": (float, REQUIRED),
    "T": (float, REQUIRED),
    "domain": ("box", REQUIRED),
    "dt": (float, None),
    "dt_factor": (float, None),
    "h_max_f": (float, None),
    "h_factor": (float, None),
    "h_max_m": (float, None),
    "h_max_c": (float, None),
    "initial": (str, "circle"),
    "R0": (float, 1.0),
    "u0": (float, 0.0),
    "cutoff": (float, 0.99),
    "pcg_tol": (float, 1e-10),
    "sor_omega": (float, 1.5),
    "sor_tol": (float, 1e-8),
    "sor_max_iter": (int, 20000),
    "sor_ordering": (str, "natural"),
    "remesh_every": (int, 1),
    "snapshot_every": (int, 0),   # 0: default cadence max(1, n_steps // 50)
    "sample_dt": (float, 0.01),
    "output_dir": (str, "out"),
    "mask_pressure": (bool, True),
    "radius_method": (str, "ray"),  # ray | area
    "sweep_Q": ("floats", None),
    "sweep_alpha": ("floats", None),
    "sweep_beta": ("floats", None),
    "sweep_epsilon": ("floats", None),
    "sweep_dt_factor": ("floats", None),
    "sweep_h_factor": ("floats", None),
}

_SWEEP_KEYS = ("sweep_Q", "sweep_alpha", "sweep_beta", "sweep_epsilon",
               "sweep_dt_factor", "sweep_h_factor")


@dataclass
class RunConfig:
    mode: str = "run"
    Q: float = None
    alpha: float = None
    beta: float = None
    epsilon: float = None
    T: float = None
    domain: tuple = None
    dt: float = None
    dt_factor: float = None
    h_max_f: float = None
    h_factor: float = None
    h_max_m: float = None
    h_max_c: float = None
    initial: str = "circle"
    R0: float = 1.0
    u0: float = 0.0
    cutoff: float = 0.99
    pcg_tol: float = 1e-10
    sor_omega: float = 1.5
    sor_tol: float = 1e-8
    sor_max_iter: int = 20000
    sor_ordering: str = "natural"
    remesh_every: int = 1
    snapshot_every: int = 0
    sample_dt: float = 0.01
    output_dir: str = "out"
    mask_pressure: bool = True
    radius_method: str = "ray"
    sweep_Q: tuple = None
    sweep_alpha: tuple = None
    sweep_beta: tuple = None
    sweep_epsilon: tuple = None
    sweep_dt_factor: tuple = None
    sweep_h_factor: tuple = None

    def resolved_h_max_f(self, epsilon=None):
        eps = self.epsilon if epsilon is None else epsilon
        if self.h_max_f is not None:
            return self.h_max_f
        return self.h_factor * eps

    def resolved_dt(self, h_max_f=None):
        if self.dt is not None:
            return self.dt
        h = self.resolved_h_max_f() if h_max_f is None else h_max_f
        return self.dt_factor * h

    def to_sim_params(self, **overrides) -> SimParams:
        eps = overrides.get("epsilon", self.epsilon)
        h_factor = overrides.get("h_factor", self.h_factor)
        h = self.h_max_f if h_factor is None else h_factor * eps
        if h is None:
            h = self.resolved_h_max_f(eps)
        dt_factor = overrides.get("dt_factor", self.dt_factor)
        dt = self.dt if dt_factor is None else dt_factor * h
        if dt is None:
            dt = self.resolved_dt(h)
        return SimParams(
            Q=overrides.get("Q", self.Q),
            alpha=overrides.get("alpha", self.alpha),
            beta=overrides.get("beta", self.beta),
            epsilon=eps, dt=dt, T=self.T, domain=self.domain,
            h_max_f=h, h_max_m=self.h_max_m, h_max_c=self.h_max_c,
            initial=self.initial, R0=self.R0, u0=self.u0, cutoff=self.cutoff,
            pcg_tol=self.pcg_tol, sor_omega=self.sor_omega,
            sor_tol=self.sor_tol, sor_max_iter=self.sor_max_iter,
            sor_ordering=self.sor_ordering, remesh_every=self.remesh_every)

    def sweep_axes(self):
        return {k[len("sweep_"):]: v for k in _SWEEP_KEYS
                if (v := getattr(self, k)) is not None}


def _parse_value(key, kind, raw):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is str:
            return raw
        if kind == "box":
            parts = [float(v) for v in raw.replace(",", " ").split()]
            if len(parts) != 4:
                raise ValueError("expected four numbers x0 y0 x1 y1")
            return tuple(parts)
        if kind == "floats":
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if not vals:
                raise ValueError("expected at least one number")
            return vals
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': cannot parse {raw!r} ({exc})")
    raise ConfigError(f"config key '{key}': unsupported kind {kind!r}")


def parse_config(text) -> RunConfig:
    """Parse a key-value document into a validated RunConfig."""
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate config key '{key}'")
        seen[key] = _parse_value(key, _SCHEMA[key][0], raw)

    missing = [k for k, (_, dflt) in _SCHEMA.items()
               if dflt is REQUIRED and k not in seen]
    if missing:
        raise ConfigError("missing required config keys: " + ", ".join(sorted(missing)))

    cfg = RunConfig()
    for k, (_, dflt) in _SCHEMA.items():
        setattr(cfg, k, seen.get(k, None if dflt is REQUIRED else dflt))
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _validate(cfg):
    if cfg.mode not in _MODES:
        raise ConfigError(f"config key 'mode': must be one of {', '.join(_MODES)}")
    if (cfg.dt is None) == (cfg.dt_factor is None):
        raise ConfigError("exactly one of 'dt' and 'dt_factor' must be set")
    if (cfg.h_max_f is None) == (cfg.h_factor is None):
        raise ConfigError("exactly one of 'h_max_f' and 'h_factor' must be set")
    x0, y0, x1, y1 = cfg.domain
    if x1 <= x0 or y1 <= y0:
        raise ConfigError("config key 'domain': box must have positive extent")
    if cfg.mode == "sweep" and not cfg.sweep_axes():
        raise ConfigError("mode = sweep requires at least one non-empty sweep_* axis")
    # Static guards; sweeps re-validate per generated parameter set.
    h = cfg.resolved_h_max_f()
    dt = cfg.resolved_dt(h)
    if not dt > 0:
        raise ConfigError("config key 'dt': must be positive")
    if not dt < cfg.epsilon ** 2 / cfg.beta:
        raise ConfigError(
            f"config key 'dt': {dt} violates dt < eps^2/beta = "
            f"{cfg.epsilon ** 2 / cfg.beta}")
    h_m = cfg.h_max_m if cfg.h_max_m is not None else min(0.02, 16.0 * h)
    h_c = cfg.h_max_c if cfg.h_max_c is not None else min(2.5, 128.0 * h_m)
    if not h <= h_m <= h_c:
        raise ConfigError("config key 'h_max_m': mesh targets must be ordered "
                          "h_max_f <= h_max_m <= h_max_c")
    if h_m > 16.0 * h + 1e-12:
        raise ConfigError("config key 'h_max_m': exceeds 16 * h_max_f")
    if h_c > 128.0 * h_m + 1e-9:
        raise ConfigError("config key 'h_max_c': exceeds 128 * h_max_m")
    if cfg.radius_method not in ("ray", "area"):
        raise ConfigError("config key 'radius_method': must be 'ray' or 'area'")
    if cfg.initial not in ("circle", "ellipse"):
        raise ConfigError("config key 'initial': must be 'circle' or 'ellipse'")


def serialize_config(cfg) -> str:
    """Canonical text form; parse(serialize(cfg)) equals cfg."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            out = "true" if v else "false"
        elif isinstance(v, tuple):
            out = ", ".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            out = repr(v)
        else:
            out = str(v)
        lines.append(f"{f.name} = {out}")
    return "\n".join(lines) + "\n"
