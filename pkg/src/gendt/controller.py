"""Feedback decisions and the per-epoch forecast pipeline.

Per-epoch control is a three-level policy on the forecast error; production
health folds epoch errors into a cumulative total checked against a budget.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import codec, dsp
from .ensemble import PredictionMatrix, aggregate, error_stats, rmse
from .errors import GendtError
from .forecast import AllAttemptsFailed, EnsembleInputs, ForecastRequest, forecast_ensemble
from .ptog import MeasurementSeries, Ptog
from .windowing import EpochPoint, NoHistory, extract_window

if TYPE_CHECKING:
    from .config import RunConfig


class ControlError(GendtError):
    pass


class NonFiniteQ(ControlError):
    """The quantity of interest is NaN, infinite, or negative."""


class ControlDecision(enum.IntEnum):
    """Three-level policy outcome, ordered by severity."""

    CONTINUE = 0
    WARNING = 1
    STOP = 2

    @property
    def label(self) -> str:
        return _DECISION_LABELS[self]


_DECISION_LABELS = {
    ControlDecision.CONTINUE: "Continue",
    ControlDecision.WARNING: "Warning",
    ControlDecision.STOP: "Stop",
}

NO_ACTION = "no action"


@dataclass(frozen=True)
class ControlThresholds:
    t_low: float
    t_high: float
    t_health: float

    def __post_init__(self) -> None:
        if not 0 < self.t_low <= self.t_high:
            raise ControlError(
                f"thresholds must satisfy 0 < t_low <= t_high, got ({self.t_low}, {self.t_high})"
            )
        if self.t_health <= 0:
            raise ControlError(f"t_health must be > 0, got {self.t_health}")


@dataclass(frozen=True)
class HealthVerdict:
    value: str  # "Pass" | "Fail"
    cumulative: float


def decide(q: float, th: ControlThresholds) -> ControlDecision:
    """Continue below t_low, Warning inside the closed band, Stop above t_high."""
    if not math.isfinite(q) or q < 0:
        raise NonFiniteQ(f"quantity of interest must be finite and >= 0, got {q!r}")
    if q < th.t_low:
        return ControlDecision.CONTINUE
    if q <= th.t_high:
        return ControlDecision.WARNING
    return ControlDecision.STOP


def accumulate_health(prior: float, q: float, th: ControlThresholds) -> HealthVerdict:
    """Fold one epoch error into the running total; Fail only strictly above budget."""
    if prior < 0 or q < 0 or not (math.isfinite(prior) and math.isfinite(q)):
        raise ControlError(f"cumulative inputs must be finite and >= 0, got ({prior!r}, {q!r})")
    cumulative = prior + q
    return HealthVerdict("Fail" if cumulative > th.t_health else "Pass", cumulative)


@dataclass
class EpochReport:
    """Per-epoch record; to_dict() is the JSON schema used in replay reports."""

    run: int
    state: str
    history_runs: list[int]
    horizon: int
    attempts_used: int
    median: list[float]
    sd: list[float]
    truth: Optional[list[float]]
    q_rmse: Optional[float]
    err_avg: Optional[float]
    err_std: Optional[float]
    attempt_rmse: Optional[list[float]]
    decision: str
    cumulative_rmse: Optional[float]
    health: Optional[str]
    flags: list[str]
    timing: float
    downsample_factor: int
    # per-sample absolute errors; feeds pooled summaries, not serialized
    abs_errors: Optional[list[float]] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "run": self.run,
            "state": self.state,
            "history_runs": list(self.history_runs),
            "horizon": self.horizon,
            "attempts_used": self.attempts_used,
            "median": list(self.median),
            "sd": list(self.sd),
            "truth": None if self.truth is None else list(self.truth),
            "q_rmse": self.q_rmse,
            "err_avg": self.err_avg,
            "err_std": self.err_std,
            "attempt_rmse": None if self.attempt_rmse is None else list(self.attempt_rmse),
            "decision": self.decision,
            "cumulative_rmse": self.cumulative_rmse,
            "health": self.health,
            "flags": list(self.flags),
            "timing": self.timing,
            "downsample_factor": self.downsample_factor,
        }


def _preprocess_series(series: MeasurementSeries, config: "RunConfig") -> tuple[list[float], int]:
    fspec = dsp.FilterSpec(
        cutoff_hz=config.filter.cutoff_hz,
        sample_rate_hz=series.sample_rate_hz,
        order=config.filter.order,
        zero_phase=config.filter.zero_phase,
    )
    factor = dsp.resolve_downsample_factor(
        series.sample_rate_hz,
        factor=config.downsample.factor,
        target_rate_hz=config.downsample.target_rate_hz,
    )
    return dsp.preprocess(series, fspec, dsp.DownsampleSpec(factor)), factor


def run_epoch(
    ptog: Ptog,
    epoch: EpochPoint,
    config: "RunConfig",
    prior_cumulative: float = 0.0,
    reproducible: bool = False,
) -> EpochReport:
    """Execute the full pipeline for one epoch.

    Extract the window, preprocess each history series, concatenate oldest
    first, encode, run the forecast ensemble, aggregate, then score against
    the identically preprocessed ground truth when the graph carries it. The
    target run's own series is consulted only after the forecast is fixed
    (except for the oracle backend, which is defined to receive it).

    Raises NoHistory and AllAttemptsFailed; the replay loop records those as
    failed epochs and continues.
    """
    start = time.perf_counter()
    window = extract_window(ptog, epoch, config.history_depth)
    flags = ["short_history"] if window.short else []

    processed = []
    factor = 1
    for series in window.history:
        values, factor = _preprocess_series(series, config)
        processed.append(values)
    horizon = len(processed[-1])
    concatenated = [v for series_values in processed for v in series_values]

    sensor_string = codec.encode(concatenated, config.encoding)
    prompt = codec.build_prompt(sensor_string, config.prompt_template())
    request = ForecastRequest(
        prompt=prompt,
        temperature=config.resolved_temperature(),
        top_p=config.ensemble.top_p,
        attempts=config.ensemble.attempts,
        horizon=horizon,
        encoding=config.encoding,
    )

    truth_cache: dict[str, Optional[list[float]]] = {}

    def preprocessed_truth() -> Optional[list[float]]:
        if "truth" not in truth_cache:
            series = ptog.get_series(epoch.run, epoch.state)
            if series is None:
                truth_cache["truth"] = None
            else:
                values, _ = _preprocess_series(series, config)
                # quantized at the wire precision so forecasts and truth compare like with like
                truth_cache["truth"] = codec.quantize(values, config.encoding)
        return truth_cache["truth"]

    oracle_truth = None
    if config.backend.kind == "oracle":
        t = preprocessed_truth()
        oracle_truth = tuple(t) if t is not None else None
    inputs = EnsembleInputs(
        last_history=tuple(processed[-1]),
        epoch_key=(epoch.run.index, epoch.state.index),
        truth=oracle_truth,
    )
    attempts = forecast_ensemble(config.backend, request, inputs)
    rows = tuple(a.values for a in attempts if a.ok)
    estimate = aggregate(PredictionMatrix(rows, epoch))
    if len(rows) < len(attempts):
        flags.append("failed_attempts")

    truth = preprocessed_truth()
    if truth is not None:
        n = min(len(truth), len(estimate.median))
        if len(truth) != len(estimate.median):
            flags.append("length_truncated")
        truth_cmp = truth[:n]
        median_cmp = list(estimate.median[:n])
        q = rmse(truth_cmp, median_cmp)
        err_avg, err_std = error_stats(median_cmp, truth_cmp)
        decision = decide(q, config.thresholds).label
        verdict = accumulate_health(prior_cumulative, q, config.thresholds)
        attempt_rmse = [rmse(truth_cmp, list(r[:n])) for r in rows]
        abs_errors = np.abs(np.asarray(truth_cmp) - np.asarray(median_cmp)).tolist()
    else:
        flags.append("no_ground_truth")
        truth_cmp = None
        q = err_avg = err_std = None
        attempt_rmse = None
        abs_errors = None
        decision = NO_ACTION
        verdict = accumulate_health(prior_cumulative, 0.0, config.thresholds)

    elapsed_ms = 0.0 if reproducible else (time.perf_counter() - start) * 1000.0
    return EpochReport(
        run=epoch.run.index,
        state=epoch.state.label,
        history_runs=[s.run.index for s in window.history],
        horizon=horizon,
        attempts_used=len(rows),
        median=list(estimate.median),
        sd=list(estimate.sd),
        truth=truth_cmp,
        q_rmse=q,
        err_avg=err_avg,
        err_std=err_std,
        attempt_rmse=attempt_rmse,
        decision=decision,
        cumulative_rmse=verdict.cumulative,
        health=verdict.value,
        flags=flags,
        timing=elapsed_ms,
        downsample_factor=factor,
        abs_errors=abs_errors,
    )


def _failed_report(epoch: EpochPoint, reason: str, cumulative: float, health: str) -> EpochReport:
    return EpochReport(
        run=epoch.run.index,
        state=epoch.state.label,
        history_runs=[],
        horizon=0,
        attempts_used=0,
        median=[],
        sd=[],
        truth=None,
        q_rmse=None,
        err_avg=None,
        err_std=None,
        attempt_rmse=None,
        decision=NO_ACTION,
        cumulative_rmse=cumulative,
        health=health,
        flags=["epoch_failed", reason],
        timing=0.0,
        downsample_factor=0,
    )


@dataclass
class ReplayResult:
    reports: list[EpochReport]
    summary: dict
    halted: bool


def run_replay(
    ptog: Ptog,
    config: "RunConfig",
    reproducible: bool = False,
) -> ReplayResult:
    """Run every epoch in chronological order and fold health sequentially.

    Failed epochs (no history, or every attempt failed) are recorded and the
    loop continues. With config.halt_on_stop the loop stops at the first Stop
    decision, emulating a live control loop.
    """
    from .windowing import enumerate_epochs

    epochs = enumerate_epochs(ptog, config.min_history)
    reports: list[EpochReport] = []
    cumulative = 0.0
    current_run = None
    halted = False
    for epoch in epochs:
        if config.health_scope == "run" and epoch.run.index != current_run:
            cumulative = 0.0
            current_run = epoch.run.index
        try:
            report = run_epoch(
                ptog, epoch, config, prior_cumulative=cumulative, reproducible=reproducible
            )
        except (NoHistory, AllAttemptsFailed) as exc:
            health = "Fail" if cumulative > config.thresholds.t_health else "Pass"
            report = _failed_report(epoch, type(exc).__name__, cumulative, health)
        if report.q_rmse is not None:
            cumulative = report.cumulative_rmse
        reports.append(report)
        if config.halt_on_stop and report.decision == ControlDecision.STOP.label:
            halted = True
            break
    return ReplayResult(reports, _build_summary(ptog, reports, halted), halted)


def _population_stats(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _build_summary(ptog: Ptog, reports: list[EpochReport], halted: bool) -> dict:
    per_run = []
    for run in ptog.runs:
        run_reports = [r for r in reports if r.run == run.index]
        if not run_reports:
            continue
        pooled = [e for r in run_reports if r.abs_errors for e in r.abs_errors]
        err_avg, err_std = _population_stats(pooled) if pooled else (None, None)
        q_values = [r.q_rmse for r in run_reports if r.q_rmse is not None]
        per_run.append(
            {
                "run": run.index,
                "flank_wear_mm": ptog.run_metadata.get(run, {}).get("flank_wear_mm"),
                "err_avg": err_avg,
                "err_std": err_std,
                "mean_q_rmse": float(np.mean(q_values)) if q_values else None,
                "epochs": len(run_reports),
            }
        )
    evaluated = [r for r in reports if r.q_rmse is not None]
    session = {
        "epochs": len(reports),
        "evaluated": len(evaluated),
        "failed": sum(1 for r in reports if "epoch_failed" in r.flags),
        "avg_rmse": float(np.mean([r.q_rmse for r in evaluated])) if evaluated else None,
        "final_cumulative_rmse": reports[-1].cumulative_rmse if reports else 0.0,
        "health": reports[-1].health if reports else "Pass",
        "halted": halted,
    }
    return {"per_run": per_run, "session": session}
