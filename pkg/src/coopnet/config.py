"""Flat ``key = value`` configuration files with dotted namespaces.

Example::

    # incentive sweep over m
    scenario.n = 100
    scenario.rho = 2.77
    channel.eta = 2
    channel.eps = 0.01
    sweep.axis1 = m: 0.1, 1, 3, 6
    sweep.seed_mode = shared

Bare leaf names (``m``, ``tau``, ``eta`` ...) are accepted as aliases.  Unknown keys
are rejected.
"""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

from .experiments import SWEEP_PARAMS, ScenarioConfig, SweepSpec

__all__ = ["ConfigError", "KEYS", "parse_config", "parse_text", "emit_config", "config_to_flat", "from_flat"]


class ConfigError(ValueError):
    def __init__(self, key: Optional[str], message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def _int(v: str) -> int:
    try:
        return int(v)
    except ValueError:
        pass
    # allow "1e7"-style spellings when they are exact
    f = float(v)
    if not f.is_integer() or abs(f) > 2**53:
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v: str) -> float:
    f = float(v)
    if math.isnan(f):
        raise ValueError("NaN is not allowed")
    return f


def _tol(v: str) -> Optional[float]:
    return None if v.strip().lower() in ("auto", "none", "") else _float(v)


def _axis(v: str):
    v = v.strip()
    if not v or v.lower() == "none":
        return None
    name, sep, values = v.partition(":")
    if not sep:
        raise ValueError("expected 'name: v1, v2, ...'")
    name = name.strip()
    if name not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {name!r}; expected one of {', '.join(SWEEP_PARAMS)}")
    vals = tuple(_float(x) for x in values.split(",") if x.strip())
    if not vals:
        raise ValueError("axis has no values")
    return name, vals


def _choice(*options: str) -> Callable[[str], str]:
    def conv(v: str) -> str:
        v = v.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return conv


def _positive(x) -> bool:
    return x > 0


# key -> (parser, check, requirement text)
KEYS: dict[str, tuple[Callable, Optional[Callable], str]] = {
    "scenario.n": (_int, lambda x: x >= 2, "must be at least 2"),
    "scenario.rho": (_float, lambda x: 0 < x < math.inf, "must be positive and finite"),
    "scenario.seed": (_int, lambda x: 0 <= x < 2**64, "must lie in [0, 2**64)"),
    "scenario.coop_threshold": (_float, lambda x: 0 <= x < math.inf, "must be non-negative"),
    "scenario.replicates": (_int, lambda x: x >= 1, "must be at least 1"),
    "scenario.domain": (_choice("square", "torus"), None, ""),
    "channel.eta": (_float, _positive, "must be positive (inf for hard-disk)"),
    "channel.eps": (_float, lambda x: 0 <= x < math.inf, "must be non-negative and finite"),
    "channel.r0": (_float, lambda x: 0 < x < math.inf, "must be positive and finite"),
    "game.m": (_float, lambda x: 0 <= x < math.inf, "must be non-negative and finite"),
    "game.mu": (_float, lambda x: 0 < x < math.inf, "must be positive and finite"),
    "game.tau": (_float, lambda x: 0 < x < math.inf, "must be positive and finite"),
    "integrator.s": (_float, lambda x: 0 < x < 1, "must lie in (0, 1)"),
    "integrator.max_steps": (_int, lambda x: x >= 1, "must be at least 1"),
    "integrator.convergence_tol": (_tol, lambda x: x is None or x > 0, "must be positive or 'auto'"),
    "integrator.record_every": (_int, lambda x: x >= 1, "must be at least 1"),
    "sweep.axis1": (_axis, None, ""),
    "sweep.axis2": (_axis, None, ""),
    "sweep.seed_mode": (_choice("per_cell", "shared"), None, ""),
}

ALIASES = {k.split(".", 1)[1]: k for k in KEYS}


def _canonical(key: str) -> str:
    key = key.strip()
    if key in KEYS:
        return key
    if key in ALIASES:
        return ALIASES[key]
    raise ConfigError(key, "unknown configuration key")


def _split_assignment(item: str, where: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(None, f"{where}: expected 'key = value', got {item!r}")
    return key.strip(), value.strip()


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings from a config document."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = _split_assignment(line, f"{source}:{lineno}")
        out[_canonical(key)] = value
    return out


def _read(path: Union[str, Path]) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(None, f"cannot read config file {p}: {exc.strerror or exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        # run manifest: replay its resolved configuration
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(None, f"{p}: invalid JSON: {exc}") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
            raise ConfigError(None, f"{p}: JSON config must be a run manifest with a 'config' object")
        return {_canonical(k): str(v) for k, v in doc["config"].items()}
    return parse_text(text, str(p))


def from_flat(raw: dict[str, str]) -> Union[ScenarioConfig, SweepSpec]:
    """Validate raw strings and assemble the configuration object (defaults fill gaps)."""
    vals = {}
    for key, text in raw.items():
        parse, check, req = KEYS[key]
        try:
            v = parse(text)
        except ValueError as exc:
            raise ConfigError(key, f"invalid value {text!r}: {exc}") from None
        if check is not None and not check(v):
            raise ConfigError(key, f"{req}, got {text!r}")
        vals[key] = v

    def pick(prefix: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith(prefix + ".")}

    base = ScenarioConfig()
    sc = pick("scenario")
    if "replicates" in sc:
        sc["replicate_count"] = sc.pop("replicates")
    try:
        cfg = dataclasses.replace(
            base,
            channel=dataclasses.replace(base.channel, **pick("channel")),
            game=dataclasses.replace(base.game, **pick("game")),
            integrator=dataclasses.replace(base.integrator, **pick("integrator")),
            **sc,
        )
    except ValueError as exc:
        raise ConfigError(None, str(exc)) from None
    sw = pick("sweep")
    if sw.get("axis1") is None:
        if sw.get("axis2") is not None:
            raise ConfigError("sweep.axis2", "given without sweep.axis1")
        return cfg
    try:
        return SweepSpec(cfg, sw["axis1"], sw.get("axis2"), sw.get("seed_mode", "per_cell"))
    except ValueError as exc:
        raise ConfigError("sweep.axis1", str(exc)) from None


def parse_config(
    path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()
) -> Union[ScenarioConfig, SweepSpec]:
    """Read ``path`` (a config document or run manifest), apply ``key=value``
    overrides on top and return a validated configuration."""
    raw = _read(path) if path is not None else {}
    for item in overrides:
        key, value = _split_assignment(item, "override")
        raw[_canonical(key)] = value
    return from_flat(raw)


def _num(x) -> str:
    if isinstance(x, bool):
        raise TypeError(x)
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def config_to_flat(cfg: Union[ScenarioConfig, SweepSpec]) -> dict[str, str]:
    spec = cfg if isinstance(cfg, SweepSpec) else None
    sc = spec.base if spec else cfg
    tol = sc.integrator.convergence_tol
    flat = {
        "scenario.n": _num(sc.n),
        "scenario.rho": _num(sc.rho),
        "scenario.seed": _num(sc.seed),
        "scenario.coop_threshold": _num(sc.coop_threshold),
        "scenario.replicates": _num(sc.replicate_count),
        "scenario.domain": sc.domain,
        "channel.eta": _num(sc.channel.eta),
        "channel.eps": _num(sc.channel.eps),
        "channel.r0": _num(sc.channel.r0),
        "game.m": _num(sc.game.m),
        "game.mu": _num(sc.game.mu),
        "game.tau": _num(sc.game.tau),
        "integrator.s": _num(sc.integrator.s),
        "integrator.max_steps": _num(sc.integrator.max_steps),
        "integrator.convergence_tol": "auto" if tol is None else _num(tol),
        "integrator.record_every": _num(sc.integrator.record_every),
    }
    if spec is not None:
        for name, axis in (("sweep.axis1", spec.axis1), ("sweep.axis2", spec.axis2)):
            if axis is not None:
                flat[name] = f"{axis[0]}: " + ", ".join(_num(v) for v in axis[1])
        flat["sweep.seed_mode"] = spec.seed_mode
    return flat


def emit_config(cfg: Union[ScenarioConfig, SweepSpec]) -> str:
    """Config document that ``parse_text``/``from_flat`` read back to an equal object."""
    return "".join(f"{k} = {v}\n" for k, v in config_to_flat(cfg).items())
