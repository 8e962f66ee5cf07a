"""Steady-state statistics, convergence checks, and batch aggregation."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import BatchSpec, ScenarioConfig, load_scenario
from .errors import ShortRun
from .svg import bar_chart, line_chart
from .world import SimLog, run_scenario

__all__ = [
    "steady_state_error",
    "convergence_ok",
    "SessionStats",
    "aggregate_sessions",
    "run_batch",
    "write_run_outputs",
]

# Aggregate statistics follow the summary figures: centroid in pixels,
# area error in normalized log units, angle error in degrees.
STAT_VARIABLES = ("ex_px", "ey_px", "esig", "eang_deg")


def steady_state_error(log: SimLog, window: float = 0.2) -> dict:
    """Mean absolute error per state variable over the final window fraction.

    Returns normalized and pixel centroid errors, the log-area error, and
    the angle error in degrees. Raises :class:`ShortRun` when the window
    holds fewer than 10 samples.
    """
    if not (0.0 < window <= 1.0):
        raise ValueError("window must be in (0, 1]")
    n = log.n_steps
    k = max(int(round(n * window)), 1)
    if k < 10:
        raise ShortRun(f"steady-state window has {k} samples; need at least 10")
    sl = slice(n - k, n)
    cols = log.columns
    ex = float(np.abs(cols["ex"][sl]).mean())
    ey = float(np.abs(cols["ey"][sl]).mean())
    alpha_x = log.meta.get("alpha_x", 1.0)
    alpha_y = log.meta.get("alpha_y", 1.0)
    return {
        "ex": ex,
        "ey": ey,
        "ex_px": ex * alpha_x,
        "ey_px": ey * alpha_y,
        "esig": float(np.abs(cols["esig"][sl]).mean()),
        "eang_deg": float(np.abs(cols["eang"][sl]).mean()),
    }


def convergence_ok(log: SimLog, cfg: ScenarioConfig) -> bool:
    """Check the scenario's steady-state thresholds and barrier safety."""
    if log.aborted:
        return False
    spec = cfg.convergence
    try:
        sse = steady_state_error(log, spec.window)
    except ShortRun:
        return False
    half_w = 0.5 * cfg.intrinsics.width / cfg.intrinsics.alpha_x
    cols = log.columns
    n = log.n_steps
    k = max(int(round(n * spec.window)), 1)
    tail = slice(n - k, n)
    barriers_safe = (cols["L1"] > 0).all() and (cols["L2"] > 0).all()
    barriers_tail = (
        cols["L1"][tail].min() >= 1.0 - spec.barrier_margin
        and cols["L2"][tail].min() >= 1.0 - spec.barrier_margin
    )
    return bool(
        sse["ex"] <= spec.centroid_frac * half_w
        and sse["ey"] <= spec.centroid_frac * half_w
        and sse["esig"] <= spec.sigma_tol
        and sse["eang_deg"] <= spec.angle_deg
        and barriers_safe
        and barriers_tail
    )


@dataclass
class SessionStats:
    """Across-session statistics of the steady-state errors."""

    variables: dict  # name -> {"mean", "min", "max", "std"}
    n_sessions: int
    n_converged: int

    def rows(self):
        for name in STAT_VARIABLES:
            v = self.variables[name]
            yield name, v["mean"], v["min"], v["max"], v["std"]


def aggregate_sessions(per_session: list) -> SessionStats:
    """Reduce per-session steady-state dicts into summary statistics."""
    if not per_session:
        raise ValueError("no sessions to aggregate")
    variables = {}
    for name in STAT_VARIABLES:
        vals = np.array([s[name] for s in per_session], dtype=float)
        variables[name] = {
            "mean": float(vals.mean()),
            "min": float(vals.min()),
            "max": float(vals.max()),
            "std": float(vals.std()),
        }
    return SessionStats(
        variables=variables, n_sessions=len(per_session), n_converged=0
    )


def write_run_outputs(log: SimLog, cfg: ScenarioConfig, out_dir, plots: bool = True):
    """Write the CSV, JSON sidecar, and (optionally) SVG plots for one run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / cfg.name
    log.to_csv(f"{base}.csv")
    log.write_sidecar(f"{base}.meta.json")
    if plots and log.n_steps > 1:
        ts = log.columns["t"]
        line_chart(
            f"{base}.errors.svg",
            ts,
            [
                ("centroid x error (norm.)", [("ex", log.columns["ex"])]),
                ("centroid y error (norm.)", [("ey", log.columns["ey"])]),
                ("log-area error", [("esig", log.columns["esig"])]),
                ("angle error (deg)", [("eang", log.columns["eang"])]),
            ],
        )
        line_chart(
            f"{base}.barriers.svg",
            ts,
            [
                ("visibility constraint L1", [("L1", log.columns["L1"])]),
                ("area constraint L2", [("L2", log.columns["L2"])]),
            ],
            height=320,
        )
    return f"{base}.csv"


def _run_session(args):
    scenario_path, session_name, seed_offset, out_dir, window = args
    cfg = load_scenario(scenario_path, seed_offset=seed_offset)
    cfg.name = session_name
    log = run_scenario(cfg)
    csv_path = write_run_outputs(log, cfg, out_dir, plots=False)
    converged = convergence_ok(log, cfg)
    try:
        sse = steady_state_error(log, window)
    except ShortRun:
        sse = None
    return {
        "session": session_name,
        "csv": str(csv_path),
        "converged": bool(converged),
        "aborted": log.aborted,
        "sse": sse,
    }


def run_batch(spec: BatchSpec, out_dir, jobs: int = 1, window: float = 0.2):
    """Run every session of a batch; write per-session CSVs plus aggregates.

    Individual aborts are recorded and do not stop the batch. Returns a
    summary dict with per-session results and the aggregate statistics.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (path, name, off, str(out_dir), window) for path, name, off in spec.sessions()
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_session, tasks))
    else:
        results = [_run_session(t) for t in tasks]

    usable = [r["sse"] for r in results if r["sse"] is not None]
    stats = aggregate_sessions(usable) if usable else None
    n_conv = sum(1 for r in results if r["converged"])
    if stats is not None:
        stats.n_converged = n_conv

        with open(out_dir / "aggregate.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["variable", "mean", "min", "max", "std"])
            for row in stats.rows():
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

        bar_chart(
            out_dir / "summary.svg",
            [
                (name, v["mean"], v["std"], v["min"], v["max"])
                for name, v in ((n, stats.variables[n]) for n in STAT_VARIABLES)
            ],
        )

    return {
        "sessions": results,
        "stats": stats,
        "n_sessions": len(results),
        "n_converged": n_conv,
    }
