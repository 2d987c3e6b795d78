"""Line-oriented run configuration.

The format is a small INI dialect::

    [model]
    name = TRIG2
    dim = 2

    [profile 1]
    kind = sin
    offset = 1
    amplitude = 0.3

    [run]
    seed = 7

Values may be plain floats or multiples of pi (``2pi``, ``-0.5*pi``).
The stdlib configparser drops key line numbers, which every error message
here carries, so the parser is hand-rolled.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError, ProfileError
from .metric_core import ChartModel, LCProfile, Profile, lc_generate
from .models import broken_pair, proportional_pair

_PI = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)?(?:[eE][+-]?\d+)?)\s*\*?\s*pi$")

MODEL_KEYS = {"name", "dim", "variant", "factor", "broken_index", "allow_contact"}
PROFILE_KEYS = {"kind", "offset", "amplitude", "frequency", "phase", "lo", "hi", "periodic", "range"}
RUN_KEYS = {
    "seed", "depth", "steps", "step_size", "horizon", "record_stride", "tol", "max_iter",
    "ensemble", "renorm_interval", "t_list", "a", "x0", "p0", "xi0", "samples", "out",
}
VARIANTS = ("lc", "broken", "proportional")


def parse_real(text: str) -> float:
    s = text.strip().replace(" ", "")
    m = _PI.match(s)
    if m:
        c = m.group(1)
        coef = 1.0 if c in ("", "+") else -1.0 if c == "-" else float(c)
        return coef * math.pi
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class RunConfig:
    model_name: str
    dim: int
    variant: str
    profiles: list
    bounds: list
    periodic: list
    ranges: Optional[list]
    allow_contact: bool
    factor: float = 2.0
    broken_index: int = 1
    run: dict = field(default_factory=dict)

    def build_model(self) -> ChartModel:
        try:
            base = lc_generate(self.profiles, self.bounds, self.periodic, self.ranges,
                               allow_contact=self.allow_contact, name=self.model_name)
        except ProfileError as exc:
            raise ConfigError(str(exc)) from exc
        if self.variant == "broken":
            return broken_pair(base, self.broken_index - 1)
        if self.variant == "proportional":
            return proportional_pair(base, self.factor)
        return base

    def get(self, key: str, default=None):
        return self.run.get(key, default)


def _sections(text: str):
    sections: dict = {}
    order = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            name = " ".join(line[1:-1].split())
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno, name)
            sections[name] = {"__line__": lineno}
            order.append(name)
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in [{current}]", lineno, key)
        sections[current][key] = Entry(value, lineno)
    return sections, order


def _real(sec, key, default=None, positive=False):
    if key not in sec:
        return default
    e = sec[key]
    try:
        v = parse_real(e.value)
    except ValueError:
        raise ConfigError(f"malformed value for '{key}': {e.value!r}", e.line, key) from None
    if positive and not v > 0:
        raise ConfigError(f"{key} must be > 0", e.line, key)
    return v


def _int(sec, key, default=None, minimum=None):
    if key not in sec:
        return default
    e = sec[key]
    try:
        v = int(e.value)
    except ValueError:
        raise ConfigError(f"malformed value for '{key}': {e.value!r}", e.line, key) from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key} must be ≥ {minimum}", e.line, key)
    return v


def _bool(sec, key, default=False):
    if key not in sec:
        return default
    e = sec[key]
    v = e.value.lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"malformed value for '{key}': {e.value!r}", e.line, key)


def _reals(sec, key, length=None):
    if key not in sec:
        return None
    e = sec[key]
    try:
        vals = [parse_real(s) for s in e.value.split(",")]
    except ValueError:
        raise ConfigError(f"malformed value for '{key}': {e.value!r}", e.line, key) from None
    if length is not None and len(vals) != length:
        raise ConfigError(f"'{key}' needs {length} values, got {len(vals)}", e.line, key)
    return vals


def _check_keys(sec, allowed, name):
    for key, e in sec.items():
        if key != "__line__" and key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{name}]", e.line, key)


def _required(sec, key, name):
    if key not in sec:
        raise ConfigError(f"missing required key '{key}' in [{name}]", sec["__line__"], key)


def parse_config(text: str) -> RunConfig:
    """Validate ``text`` into a RunConfig; errors cite the offending line and key."""
    sections, order = _sections(text)
    for name in order:
        if name not in ("model", "run") and not re.fullmatch(r"profile \d+", name):
            raise ConfigError(f"unknown section [{name}]", sections[name]["__line__"], name)
    if "model" not in sections:
        raise ConfigError("missing section [model]", 1)
    model = sections["model"]
    _check_keys(model, MODEL_KEYS, "model")
    _required(model, "dim", "model")
    dim = _int(model, "dim")
    if dim < 1:
        raise ConfigError("dim must be ≥ 1", model["dim"].line, "dim")
    variant = model["variant"].value if "variant" in model else "lc"
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {', '.join(VARIANTS)}", model["variant"].line, "variant")
    factor = _real(model, "factor", 2.0, positive=True)
    broken_index = _int(model, "broken_index", 1, minimum=1)
    if broken_index > dim:
        raise ConfigError(f"broken_index must be ≤ {dim}", model["broken_index"].line, "broken_index")

    profiles, bounds, periodic, ranges = [], [], [], []
    for k in range(1, dim + 1):
        name = f"profile {k}"
        if name not in sections:
            raise ConfigError(f"missing section [{name}]", model["__line__"], name)
        sec = sections[name]
        _check_keys(sec, PROFILE_KEYS, name)
        _required(sec, "kind", name)
        kind = sec["kind"].value
        try:
            prof = Profile(
                kind,
                offset=_real(sec, "offset", 0.0),
                amplitude=_real(sec, "amplitude", 0.0),
                frequency=_real(sec, "frequency", 1.0),
                phase=_real(sec, "phase", 0.0),
            )
        except ProfileError as exc:
            raise ConfigError(str(exc), sec["kind"].line, "kind") from None
        profiles.append(prof)
        lo = _real(sec, "lo", 0.0)
        hi = _real(sec, "hi", 2 * math.pi)
        if not hi > lo:
            line = sec["hi"].line if "hi" in sec else sec["__line__"]
            raise ConfigError(f"empty bound [{lo}, {hi}]", line, "hi")
        bounds.append((lo, hi))
        periodic.append(_bool(sec, "periodic", True))
        ranges.append(_reals(sec, "range", 2))
    extra = [n for n in order if n.startswith("profile ") and int(n.split()[1]) > dim]
    if extra:
        raise ConfigError(f"section [{extra[0]}] exceeds dim = {dim}", sections[extra[0]]["__line__"], extra[0])
    if any(r is None for r in ranges) and not all(r is None for r in ranges):
        raise ConfigError("declare range for every profile or for none", model["__line__"], "range")
    ranges = None if ranges[0] is None else [tuple(r) for r in ranges]

    run = {}
    if "run" in sections:
        sec = sections["run"]
        _check_keys(sec, RUN_KEYS, "run")
        run["seed"] = _int(sec, "seed", None, minimum=0)
        run["steps"] = _int(sec, "steps", None, minimum=0)
        run["record_stride"] = _int(sec, "record_stride", None, minimum=1)
        run["max_iter"] = _int(sec, "max_iter", None, minimum=1)
        run["ensemble"] = _int(sec, "ensemble", None, minimum=1)
        run["samples"] = _int(sec, "samples", None, minimum=1)
        run["step_size"] = _real(sec, "step_size", None, positive=True)
        run["tol"] = _real(sec, "tol", None, positive=True)
        run["renorm_interval"] = _real(sec, "renorm_interval", None, positive=True)
        run["horizon"] = _real(sec, "horizon", None, positive=True)
        if run["horizon"] is not None and run["horizon"] < 1:
            raise ConfigError("horizon must be ≥ 1", sec["horizon"].line, "horizon")
        if "depth" in sec:
            if sec["depth"].value not in ("quick", "full"):
                raise ConfigError("depth must be quick or full", sec["depth"].line, "depth")
            run["depth"] = sec["depth"].value
        run["t_list"] = _reals(sec, "t_list")
        run["a"] = _reals(sec, "a")
        run["x0"] = _reals(sec, "x0", dim)
        run["p0"] = _reals(sec, "p0", dim)
        run["xi0"] = _reals(sec, "xi0", dim)
        if run["p0"] is not None and run["xi0"] is not None:
            raise ConfigError("give p0 or xi0, not both", sec["xi0"].line, "xi0")
        if "out" in sec:
            run["out"] = sec["out"].value
        run = {k: v for k, v in run.items() if v is not None}

    return RunConfig(
        model_name=model["name"].value if "name" in model else "model",
        dim=dim,
        variant=variant,
        profiles=profiles,
        bounds=bounds,
        periodic=periodic,
        ranges=ranges,
        allow_contact=_bool(model, "allow_contact", False),
        factor=factor,
        broken_index=broken_index,
        run=run,
    )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def model_text(model: ChartModel, allow_contact: bool = False) -> str:
    """Canonical model file for an lc_generate model, with its declared ranges."""
    lcp: LCProfile = model.profiles
    lines = ["[model]", f"name = {model.name or 'model'}", f"dim = {model.dim}", "variant = lc"]
    if allow_contact:
        lines.append("allow_contact = true")
    lines.append("")
    for k, f in enumerate(lcp.functions):
        lo, hi = model.bounds[k]
        lines += [
            f"[profile {k + 1}]",
            f"kind = {f.kind}",
            f"offset = {_fmt(f.offset)}",
            f"amplitude = {_fmt(f.amplitude)}",
            f"frequency = {_fmt(f.frequency)}",
            f"phase = {_fmt(f.phase)}",
            f"lo = {_fmt(lo)}",
            f"hi = {_fmt(hi)}",
            f"periodic = {'true' if model.periodic[k] else 'false'}",
            f"range = {_fmt(lcp.ranges[k][0])}, {_fmt(lcp.ranges[k][1])}",
            "",
        ]
    return "\n".join(lines)
