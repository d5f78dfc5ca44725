"""Experiment orchestration: calibration, single episodes and seeded sweeps.

Every run draws sensor noise and policy randomness from its own
counter-based streams keyed by ``(scenario seed, replication index)``, so a
sweep produces the same bytes whatever the worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detector import DetectorConfig, DetectorState, calibrate_threshold, calibration_report, push_and_check
from .responder import ResponderConfig, begin_response, respond_step, smooth
from .sim import (
    ActionVector,
    ScenarioSpec,
    autopilot_action,
    initial_world,
    make_rngs,
    obstacle_distance,
    step_world,
    synthetic_error,
)

POLICIES = ("bogp", "random", "noaction")
POST_RESPONSE_STEPS = 60  # 3 s at 20 fps
MAX_STEPS = 4000
CALIBRATION_RUN_INDEX = 2**31 - 1

RUN_COLUMNS = ("step", "t_sec", "x", "y", "heading", "speed", "error", "smoothed", "rate", "a1", "a2", "phase")
SUMMARY_COLUMNS = ("scenario", "policy", "reps", "successes", "success_rate")
RUNS_COLUMNS = (
    "scenario", "policy", "seed", "success", "collided", "off_road",
    "trigger_step", "trigger_distance", "ule",
)
AGGREGATE_COLUMNS = (
    "scenario", "policy", "response_step", "n_runs",
    "error_p25", "error_median", "error_p75", "rate_p25", "rate_median", "rate_p75",
)


def _policy(name: str) -> str:
    name = name.lower().replace("_", "").replace("-", "").replace("+", "")
    aliases = {"bo": "bogp", "bogp": "bogp", "random": "random", "randomresponse": "random", "noaction": "noaction", "none": "noaction"}
    if name not in aliases:
        raise ValueError(f"unknown policy {name!r}; expected one of {POLICIES}")
    return aliases[name]


@dataclass
class RunRecord:
    scenario: str
    policy: str
    seed: int
    success: bool
    collided: bool
    off_road: bool
    trigger_step: int | None
    trigger_distance: float | None
    ule: float
    trace: list[dict] = field(default_factory=list)

    @property
    def response_rows(self) -> list[dict]:
        if self.trigger_step is None:
            return []
        return [r for r in self.trace if r["phase"] in ("response", "collided") and r["step"] >= self.trigger_step]


# -- calibration ------------------------------------------------------------


def nominal_errors(spec: ScenarioSpec, steps: int) -> np.ndarray:
    """Errors from autopilot driving on the obstacle-free version of ``spec``."""
    spec = spec.without_obstacle()
    noise_rng, _ = make_rngs(spec.seed, CALIBRATION_RUN_INDEX)
    w = initial_world(spec)
    out = np.empty(steps)
    for t in range(steps):
        out[t] = synthetic_error(w, spec, noise_rng)
        w = step_world(w, spec, autopilot_action(w, spec))
    return out


def run_calibration(spec: ScenarioSpec, steps: int = 2000, rho: float = 0.995, method: str = "empirical"):
    """Returns ``(ULe, report_text, nominal_trace)``."""
    if steps < 1000:
        raise ValueError(f"calibration needs at least 1000 steps, got {steps}")
    errors = nominal_errors(spec, steps)
    ule, params = calibrate_threshold(errors, rho, method)
    return ule, calibration_report(ule, rho, method, params), errors


# -- single episode ---------------------------------------------------------


def run_episode(
    spec: ScenarioSpec,
    policy: str,
    ule: float,
    detector_cfg: DetectorConfig | None = None,
    responder_cfg: ResponderConfig | None = None,
    run_index: int = 0,
    manual_trigger_distance: float | None = None,
    retrigger: bool = False,
) -> RunRecord:
    """Drive with the autopilot until detection, then hand over to ``policy``.

    ``bogp`` and ``random`` control the car for ``n_steps`` and then brake to
    rest for 3 s. ``noaction`` never intervenes and drives on until it
    collides or passes the obstacle. With ``manual_trigger_distance`` the
    handover happens at that center distance instead of on detection.
    """
    policy = _policy(policy)
    det_cfg = replace(detector_cfg or DetectorConfig(), threshold=float(ule))
    rcfg = responder_cfg or ResponderConfig()
    n_resp = rcfg.n_steps
    noise_rng, policy_rng = make_rngs(spec.seed, run_index)

    w = initial_world(spec)
    det = DetectorState(window=det_cfg.window)
    errors: list[float] = []
    trace: list[dict] = []
    phase = "nominal"
    k = 0
    trigger_step = None
    trigger_distance = None
    resp_state = None
    collided = off_road = False
    end_step = None

    for t in range(MAX_STEPS):
        e = synthetic_error(w, spec, noise_rng)
        errors.append(e)
        dist = obstacle_distance(w, spec)

        if phase == "nominal":
            fired, _ = push_and_check(det, det_cfg, e)
            if manual_trigger_distance is not None:
                fired = dist <= manual_trigger_distance
            if fired:
                phase, k = "response", 0
                trigger_step, trigger_distance = t, dist
                if policy == "bogp":
                    resp_state = begin_response(rcfg, [v for _, v in det.buffer])

        if collided:
            act = None
        elif phase == "nominal":
            act = autopilot_action(w, spec)
        elif phase == "response":
            if policy == "bogp":
                a, _ = respond_step(resp_state, None if k == 0 else e)
                act = ActionVector.from_array(a)
            elif policy == "random":
                act = ActionVector.from_array(policy_rng.uniform(0.0, 1.0, size=2))
            else:
                act = autopilot_action(w, spec)
        else:  # post-response
            act = autopilot_action(w, spec) if policy == "noaction" else ActionVector(0.0, 0.5)

        s = smooth(errors[-rcfg.smoothing_window - 1:], rcfg.smoothing_window)
        trace.append(
            {
                "step": t,
                "t_sec": t * 0.05,
                "x": w.x,
                "y": w.y,
                "heading": w.heading,
                "speed": w.speed,
                "error": e,
                "smoothed": float(s[-1]),
                "rate": float(s[-1] - s[-2]) if len(s) > 1 else 0.0,
                "a1": act.a1 if act else math.nan,
                "a2": act.a2 if act else math.nan,
                "phase": "collided" if collided else phase,
            }
        )

        if phase == "response":
            k += 1
            if k >= n_resp:
                phase = "post"
                end_step = t + POST_RESPONSE_STEPS
                if retrigger and policy != "noaction":
                    phase, det = "nominal", DetectorState(window=det_cfg.window)

        if collided:
            # frozen world: keep sampling only to complete the response window
            if trigger_step is None or t >= trigger_step + n_resp - 1:
                break
            continue
        w = step_world(w, spec, act)
        collided = w.collided
        off_road = off_road or w.off_road
        if collided and (trigger_step is None or t + 1 >= trigger_step + n_resp):
            break
        if phase == "post":
            if policy == "noaction":
                s_pos, _ = spec.project(w.x, w.y)
                if s_pos > spec.obstacle_offset + spec.obstacle_half_width + 5.0:
                    break
            elif t >= end_step:
                break

    success = trigger_step is not None and not collided and not off_road
    return RunRecord(
        scenario=spec.name,
        policy=policy,
        seed=run_index,
        success=success,
        collided=collided,
        off_road=off_road,
        trigger_step=trigger_step,
        trigger_distance=trigger_distance,
        ule=float(ule),
        trace=trace,
    )


# -- sweeps -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    scenarios: tuple[ScenarioSpec, ...]
    policies: tuple[str, ...] = POLICIES
    reps: int = 20
    trigger: str = "auto"
    manual_trigger_distance: float = 9.0
    calibration_steps: int = 2000
    rho: float = 0.995
    method: str = "empirical"
    ule: float | None = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    responder: ResponderConfig = field(default_factory=ResponderConfig)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.trigger not in ("auto", "manual"):
            raise ValueError(f"trigger must be 'auto' or 'manual', got {self.trigger!r}")


@dataclass
class SweepSummary:
    rows: list[dict]
    runs: list[RunRecord]

    def success_rate(self, scenario: str, policy: str) -> float:
        for r in self.rows:
            if r["scenario"] == scenario and r["policy"] == policy:
                return r["success_rate"]
        raise KeyError((scenario, policy))


def _run_cell(args) -> RunRecord:
    spec, policy, ule, cfg, rep = args
    manual = cfg.manual_trigger_distance if cfg.trigger == "manual" else None
    return run_episode(spec, policy, ule, cfg.detector, cfg.responder, rep, manual)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, columns, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc


def aggregate_rows(runs: list[RunRecord], n_resp: int) -> list[dict]:
    """Per-step percentiles of error and rate over each (scenario, policy) group."""
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for r in runs:
        groups.setdefault((r.scenario, r.policy), []).append(r)
    out = []
    for (scen, pol), members in groups.items():
        series = [rr.response_rows for rr in members if rr.trigger_step is not None]
        for k in range(n_resp):
            errs = np.array([s[k]["error"] for s in series if len(s) > k])
            rates = np.array([s[k]["rate"] for s in series if len(s) > k])
            if errs.size == 0:
                continue
            pe = np.percentile(errs, [25, 50, 75])
            pr = np.percentile(rates, [25, 50, 75])
            out.append(
                {
                    "scenario": scen, "policy": pol, "response_step": k, "n_runs": int(errs.size),
                    "error_p25": float(pe[0]), "error_median": float(pe[1]), "error_p75": float(pe[2]),
                    "rate_p25": float(pr[0]), "rate_median": float(pr[1]), "rate_p75": float(pr[2]),
                }
            )
    return out


def calibrate_scenarios(cfg: SweepConfig) -> dict[str, float]:
    if cfg.ule is not None:
        return {s.name: float(cfg.ule) for s in cfg.scenarios}
    return {s.name: run_calibration(s, cfg.calibration_steps, cfg.rho, cfg.method)[0] for s in cfg.scenarios}


def run_sweep(cfg: SweepConfig, out_dir=None, jobs: int = 1) -> SweepSummary:
    """Run every (scenario, policy, replication) cell; optionally write CSVs.

    Files written under ``out_dir``: ``runs/<scenario>__<policy>__<seed>.csv``
    traces, ``runs.csv``, ``summary.csv`` and ``aggregate.csv``.
    """
    ules = calibrate_scenarios(cfg)
    policies = tuple(_policy(p) for p in cfg.policies)
    tasks = [
        (spec, pol, ules[spec.name], cfg, rep)
        for spec in cfg.scenarios
        for pol in policies
        for rep in range(cfg.reps)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        runs = [_run_cell(t) for t in tasks]

    rows = []
    for spec in cfg.scenarios:
        for pol in policies:
            cell = [r for r in runs if r.scenario == spec.name and r.policy == pol]
            succ = sum(r.success for r in cell)
            rows.append(
                {"scenario": spec.name, "policy": pol, "reps": len(cell), "successes": succ, "success_rate": succ / len(cell)}
            )
    summary = SweepSummary(rows=rows, runs=runs)
    if out_dir is not None:
        write_sweep(summary, Path(out_dir), cfg.responder.n_steps)
    return summary


def write_sweep(summary: SweepSummary, out: Path, n_resp: int) -> None:
    runs_dir = out / "runs"
    os.makedirs(runs_dir, exist_ok=True)
    for r in summary.runs:
        _write_csv(runs_dir / f"{r.scenario}__{r.policy}__{r.seed}.csv", RUN_COLUMNS, r.trace)
    _write_csv(out / "runs.csv", RUNS_COLUMNS, [r.__dict__ for r in summary.runs])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary.rows)
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(summary.runs, n_resp))


def write_run(record: RunRecord, path) -> None:
    _write_csv(Path(path), RUN_COLUMNS, record.trace)


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def format_report(rows: list[dict]) -> str:
    """Success-rate table: one row per scenario, one column per policy."""
    scenarios = list(dict.fromkeys(r["scenario"] for r in rows))
    policies = list(dict.fromkeys(r["policy"] for r in rows))
    rate = {(r["scenario"], r["policy"]): float(r["success_rate"]) for r in rows}
    reps = {(r["scenario"], r["policy"]): int(r["reps"]) for r in rows}
    width = max([len("scenario"), len("average")] + [len(s) for s in scenarios])
    head = f"{'scenario':<{width}}  " + "  ".join(f"{p:>9}" for p in policies)
    lines = [head, "-" * len(head)]
    for s in scenarios:
        cells = [f"{100 * rate[(s, p)]:8.1f}%" if (s, p) in rate else f"{'-':>9}" for p in policies]
        lines.append(f"{s:<{width}}  " + "  ".join(cells))
    avgs = []
    for p in policies:
        vals = [rate[(s, p)] for s in scenarios if (s, p) in rate]
        avgs.append(f"{100 * sum(vals) / len(vals):8.1f}%" if vals else f"{'-':>9}")
    lines.append("-" * len(head))
    lines.append(f"{'average':<{width}}  " + "  ".join(avgs))
    total = sum(reps.values())
    lines.append(f"({total} runs)")
    return "\n".join(lines) + "\n"
