"""Loading scenarios and sweeps from INI-style ``key = value`` files.

A scenario file holds a ``[scenario]`` section and an optional
``[error_model]`` section. A sweep file holds a ``[sweep]`` section, optional
``[detector]`` and ``[responder]`` sections, and one ``[scenario:NAME]``
section per scenario. A scenario section may name a shipped ``preset`` and
override any of its keys; error-model keys may appear inline.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .acquisition import ActionBounds, BetaSchedule, OptBudget, PenaltyConfig
from .detector import DetectorConfig
from .gp import KernelSpec
from .harness import SweepConfig
from .responder import ResponderConfig
from .sim import ErrorModelParams, ScenarioSpec

SCENARIO_KEYS = {
    "name": str,
    "road": str,
    "radius": float,
    "obstacle_offset": float,
    "obstacle_half_width": float,
    "approach_speed": float,
    "seed": int,
}
ERROR_MODEL_KEYS = {
    "e_base": float,
    "amplitude": float,
    "d_vis": float,
    "fov_deg": float,
    "p_exp": float,
    "noise_sd": float,
}
PRESETS = ("straight", "arc_left", "arc_right")


def _read(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc}") from exc
    return cp


def _check_keys(section: str, items: dict, allowed) -> None:
    unknown = sorted(set(items) - set(allowed))
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {', '.join(unknown)}")


def _error_model(items: dict, base: ErrorModelParams | None = None) -> ErrorModelParams:
    base = base or ErrorModelParams()
    kw = {}
    for key, conv in ERROR_MODEL_KEYS.items():
        if key in items:
            val = conv(items[key])
            if key == "fov_deg":
                kw["fov"] = math.radians(val)
            else:
                kw[key] = val
    return replace(base, **kw)


def _scenario(items: dict, base: ScenarioSpec | None = None, default_name: str | None = None) -> ScenarioSpec:
    kw = {k: conv(items[k]) for k, conv in SCENARIO_KEYS.items() if k in items}
    if "name" not in kw and default_name is not None:
        kw["name"] = default_name
    if base is None:
        kw.setdefault("name", kw.get("road", "straight"))
        em = _error_model(items)
        return ScenarioSpec(error_model=em, **kw)
    em = _error_model(items, base.error_model)
    return replace(base, error_model=em, **kw)


def load_scenario(path) -> ScenarioSpec:
    """Read a single-scenario file."""
    cp = _read(path)
    if "scenario" not in cp:
        raise ValueError(f"{path}: missing [scenario] section")
    items = dict(cp["scenario"])
    if "error_model" in cp:
        _check_keys("error_model", cp["error_model"], ERROR_MODEL_KEYS)
        items.update({k: v for k, v in cp["error_model"].items() if k not in items})
    preset = items.pop("preset", None)
    _check_keys("scenario", items, {**SCENARIO_KEYS, **ERROR_MODEL_KEYS})
    base = load_preset(preset) if preset else None
    return _scenario(items, base)


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return Path(str(resources.files(__package__).joinpath("presets", f"{name}.ini")))


def load_preset(name: str) -> ScenarioSpec:
    """One of the shipped 20 km/h scenarios."""
    return load_scenario(preset_path(name))


def sweep_preset_path(name: str) -> Path:
    path = Path(str(resources.files(__package__).joinpath("presets", f"{name}.ini")))
    if not name.startswith("sweep_") or not path.exists():
        raise ValueError(f"unknown sweep preset {name!r}")
    return path


def _detector(items: dict) -> DetectorConfig:
    keys = {"window": int, "horizon": int, "min_exceed": int, "degree": int}
    _check_keys("detector", items, keys)
    return DetectorConfig(**{k: conv(items[k]) for k, conv in keys.items() if k in items})


def _responder(items: dict) -> ResponderConfig:
    keys = {
        "n_steps": int, "smoothing_window": int, "kernel": str, "length_scale": float,
        "output_scale": float, "noise": float, "beta0": float, "beta_k": float, "k_step": int,
        "schedule_shape": str, "penalty_gain": float, "penalty_offset": float, "penalty_mode": str,
        "grid_per_axis": int, "n_starts": int, "min_step": float, "random_first_action": str,
    }
    _check_keys("responder", items, keys)
    v = {k: conv(items[k]) for k, conv in keys.items() if k in items}
    d = ResponderConfig()
    return ResponderConfig(
        n_steps=v.get("n_steps", d.n_steps),
        smoothing_window=v.get("smoothing_window", d.smoothing_window),
        bounds=ActionBounds.unit(2),
        kernel=KernelSpec(
            v.get("kernel", d.kernel.kind),
            v.get("length_scale", d.kernel.length_scale),
            v.get("output_scale", d.kernel.output_scale),
        ),
        noise=v.get("noise", d.noise),
        schedule=BetaSchedule(
            v.get("beta0", d.schedule.beta0),
            v.get("beta_k", d.schedule.beta_k),
            v.get("k_step", d.schedule.k_step),
            v.get("schedule_shape", d.schedule.shape),
        ),
        penalty=PenaltyConfig(
            v.get("penalty_gain", d.penalty.gain),
            v.get("penalty_offset", d.penalty.offset),
            v.get("penalty_mode", d.penalty.mode),
        ),
        budget=OptBudget(
            v.get("grid_per_axis", d.budget.grid_per_axis),
            v.get("n_starts", d.budget.n_starts),
            v.get("min_step", d.budget.min_step),
        ),
        random_first_action=v.get("random_first_action", "false").lower() in ("1", "true", "yes", "on"),
    )


def load_sweep(path) -> SweepConfig:
    """Read a sweep file into a :class:`SweepConfig`."""
    cp = _read(path)
    scenarios = []
    for section in cp.sections():
        if not section.startswith("scenario:"):
            continue
        name = section.split(":", 1)[1].strip()
        items = dict(cp[section])
        preset = items.pop("preset", None)
        _check_keys(section, items, {**SCENARIO_KEYS, **ERROR_MODEL_KEYS})
        base = load_preset(preset) if preset else None
        scenarios.append(_scenario(items, base, default_name=name))
    if not scenarios:
        raise ValueError(f"{path}: no [scenario:NAME] sections")
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ValueError(f"{path}: duplicate scenario names {names}")

    sw = dict(cp["sweep"]) if "sweep" in cp else {}
    keys = {
        "policies": str, "reps": int, "trigger": str, "manual_trigger_distance": float,
        "calibration_steps": int, "rho": float, "method": str, "ule": float,
    }
    _check_keys("sweep", sw, keys)
    kw = {k: conv(sw[k]) for k, conv in keys.items() if k in sw}
    if "policies" in kw:
        kw["policies"] = tuple(p.strip() for p in kw["policies"].split(",") if p.strip())
    detector = _detector(dict(cp["detector"])) if "detector" in cp else DetectorConfig()
    responder = _responder(dict(cp["responder"])) if "responder" in cp else ResponderConfig()
    return SweepConfig(scenarios=tuple(scenarios), detector=detector, responder=responder, **kw)
