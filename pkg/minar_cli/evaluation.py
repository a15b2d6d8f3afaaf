# minar-cli/minar_cli/evaluation.py
"""Monte-Carlo evaluation of the surveillance scheme.

Every replicate simulates one series with an outbreak, fits the chosen
approach to the set-up phase and monitors the remaining steps at each
significance level. Monitoring covers the times setup_length + 1 .. total_length
conditioning on the last set-up observation.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import DomainError, MinarError
from .estimation import FitOptions, fit
from .layout import ParameterLayout
from .model import MinarModel, OutbreakSpec, simulate, stationary_mean
from .surveillance import SurveillanceConfig, apply_rule, upper_bounds
from .utils import broadcast_sizes, make_rng, replicate_rng

logger = logging.getLogger(__name__)

APPROACH_STRUCTURES = {"multivariate": "full", "independent": "diagonal"}
APPROACH_ALIASES = {"trivariate": "multivariate"}
ArlConvention = Literal["censored", "conditional"]


class ExperimentSpec(BaseModel):
    model: Dict[str, Any]
    total_length: int = Field(200, ge=4)
    setup_length: int = Field(150, ge=2)
    outbreak_time: int = 170
    kappas: List[float] = [5.0, 8.0, 10.0]
    replicates: int = Field(1000, ge=1)
    alphas: List[float] = [0.10, 0.05, 0.01]
    approaches: List[str] = ["multivariate", "independent"]
    rule_fraction: float = Field(0.6, gt=0.0, le=1.0)
    base_seed: int = 2024
    burn_in: int = Field(100, ge=0)
    arl_convention: ArlConvention = "censored"

    @field_validator("model")
    @classmethod
    def check_model(cls, value: Dict[str, Any]) -> Dict[str, Any]:
        model = MinarModel.from_dict(value)
        if model.innovations.mode != "constant":
            raise ValueError("The generating model must have constant innovation means")
        return model.to_dict()

    @field_validator("kappas")
    @classmethod
    def check_kappas(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("At least one outbreak size is required")
        if any(not np.isfinite(k) or k < 0 for k in value):
            raise ValueError("Outbreak sizes must be finite and >= 0")
        return value

    @field_validator("alphas")
    @classmethod
    def check_alphas(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("At least one significance level is required")
        if any(not 0.0 < a < 1.0 for a in value):
            raise ValueError("Significance levels must lie in (0, 1)")
        return value

    @field_validator("approaches")
    @classmethod
    def check_approaches(cls, value: List[str]) -> List[str]:
        names = []
        for name in value:
            name = APPROACH_ALIASES.get(name.lower(), name.lower())
            if name not in APPROACH_STRUCTURES:
                raise ValueError(f"Unknown approach {name!r}, expected one of {sorted(APPROACH_STRUCTURES)}")
            if name not in names:
                names.append(name)
        if not names:
            raise ValueError("At least one approach is required")
        return names

    @model_validator(mode="after")
    def check_phases(self) -> "ExperimentSpec":
        if self.total_length - self.setup_length < 2:
            raise ValueError("The monitoring phase needs at least two steps")
        if not self.setup_length < self.outbreak_time <= self.total_length:
            raise ValueError(
                f"Outbreak time {self.outbreak_time} must lie in the monitoring phase "
                f"{self.setup_length + 1}..{self.total_length}"
            )
        return self

    @property
    def generating_model(self) -> MinarModel:
        return MinarModel.from_dict(self.model)

    @property
    def n(self) -> int:
        return int(self.model["n"])

    @property
    def monitoring_length(self) -> int:
        return self.total_length - self.setup_length

    @property
    def outbreak_position(self) -> int:
        """0-based index of the outbreak step within the monitoring window"""
        return self.outbreak_time - self.setup_length - 1


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    replicate: int
    approach: str
    kappa: float
    # (alphas, monitoring steps, n) and (alphas, monitoring steps)
    flags: Optional[np.ndarray] = None
    alarms: Optional[np.ndarray] = None
    failed: bool = False
    message: str = ""


@dataclass(frozen=True)
class MetricsSummary:
    approach: str
    kappa: float
    alpha: float
    replicates: int
    failed: int
    detection_rate: float
    false_alarm_rate: float
    arl: Tuple[float, ...]
    overall_arl: float


@dataclass(eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    results: List[ReplicateResult] = field(default_factory=list)

    def failures(self) -> List[ReplicateResult]:
        return [r for r in self.results if r.failed]

    def select(self, approach: str, kappa: float) -> List[ReplicateResult]:
        return [r for r in self.results if r.approach == approach and r.kappa == kappa and not r.failed]

    def alarm_log(self) -> pd.DataFrame:
        """One row per successful replicate, approach, outbreak size, level and monitoring step"""
        spec = self.spec
        times = np.arange(spec.setup_length + 1, spec.total_length + 1)
        columns = ["approach", "kappa", "alpha", "replicate", "t", "alarm"] + [f"flag_{i + 1}" for i in range(spec.n)]
        frames = []
        for result in self.results:
            if result.failed:
                continue
            for a, alpha in enumerate(spec.alphas):
                frame = pd.DataFrame(result.flags[a].astype(int), columns=columns[6:])
                frame.insert(0, "alarm", result.alarms[a].astype(int))
                frame.insert(0, "t", times)
                frame.insert(0, "replicate", result.replicate)
                frame.insert(0, "alpha", alpha)
                frame.insert(0, "kappa", result.kappa)
                frame.insert(0, "approach", result.approach)
                frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=columns)
        return pd.concat(frames, ignore_index=True)

    def failure_log(self) -> pd.DataFrame:
        rows = [
            {"approach": r.approach, "kappa": r.kappa, "replicate": r.replicate, "message": r.message}
            for r in self.failures()
        ]
        return pd.DataFrame(rows, columns=["approach", "kappa", "replicate", "message"])


def _monitor_window(model: MinarModel, window, alphas: Sequence[float], rule: SurveillanceConfig):
    bounds = upper_bounds(model, window, alphas, tol=rule.pmf_tolerance)
    flags = window.counts[1:][None, :, :] > bounds
    return flags, apply_rule(flags, rule)


def run_replicate(spec: ExperimentSpec, index: int) -> List[ReplicateResult]:
    """Fit each approach once on the common set-up phase, then monitor every outbreak size.

    Series for different outbreak sizes share the replicate seed, so they
    coincide up to the outbreak time.
    """
    model = spec.generating_model
    rule = SurveillanceConfig(rule_fraction=spec.rule_fraction)
    series = {
        kappa: simulate(
            model,
            spec.total_length,
            burn_in=spec.burn_in,
            outbreak=OutbreakSpec(spec.outbreak_time, broadcast_sizes([kappa], model.n)),
            rng=replicate_rng(spec.base_seed, index),
        )
        for kappa in spec.kappas
    }
    setup = series[spec.kappas[0]].take(0, spec.setup_length)

    results = []
    for approach in spec.approaches:
        layout = ParameterLayout(model.n, APPROACH_STRUCTURES[approach])
        try:
            fitted = fit(setup, layout, options=FitOptions(compute_se=False))
            if not fitted.converged:
                raise MinarError(f"fit did not converge: {fitted.message}")
        except MinarError as e:
            logger.warning(f"Replicate {index} ({approach}) failed: {e}")
            results += [ReplicateResult(index, approach, kappa, failed=True, message=str(e)) for kappa in spec.kappas]
            continue

        for kappa in spec.kappas:
            window = series[kappa].take(spec.setup_length - 1)
            flags, alarms = _monitor_window(fitted.model, window, spec.alphas, rule)
            results.append(ReplicateResult(index, approach, kappa, flags, alarms))
    return results


def run_experiment(
    spec: ExperimentSpec,
    workers: Optional[int] = None,
    callback: Optional[Callable[[int], None]] = None,
) -> ExperimentResult:
    """Run all replicates; results keep replicate order whatever the worker count"""
    result = ExperimentResult(spec)
    job = partial(run_replicate, spec)
    logger.info(f"Running {spec.replicates} replicates for {', '.join(spec.approaches)}")

    def collect(outputs) -> None:
        for done, replicate in enumerate(outputs, start=1):
            result.results.extend(replicate)
            if callback:
                callback(done)

    if workers == 1:
        collect(map(job, range(spec.replicates)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            chunksize = max(1, spec.replicates // (8 * (workers or 4)))
            collect(executor.map(job, range(spec.replicates), chunksize=chunksize))

    failed = len(result.failures())
    if failed:
        logger.warning(f"{failed} replicate fits failed and are excluded from the metrics")
    return result


def _check_alarms(alarms: np.ndarray, outbreak_position: int) -> np.ndarray:
    alarms = np.asarray(alarms, dtype=bool)
    if alarms.ndim < 2 or alarms.shape[0] == 0:
        raise DomainError("Metrics need at least one successful replicate")
    if not 0 <= outbreak_position < alarms.shape[1]:
        raise DomainError(f"Outbreak position {outbreak_position} outside the monitoring window")
    return alarms


def detection_rate(alarms: np.ndarray, outbreak_position: int) -> float:
    """Share of replicates alarming exactly at the outbreak step; alarms is (replicates, steps)"""
    alarms = _check_alarms(alarms, outbreak_position)
    return float(alarms[:, outbreak_position].mean())


def false_alarm_rate(alarms: np.ndarray, outbreak_position: int) -> float:
    """Alarms away from the outbreak step over replicates x (steps - 1)"""
    alarms = _check_alarms(alarms, outbreak_position)
    replicates, steps = alarms.shape
    false = np.delete(alarms, outbreak_position, axis=1)
    return float(false.sum()) / (replicates * (steps - 1))


def average_run_length(
    flags: np.ndarray,
    outbreak_position: int,
    convention: ArlConvention = "censored",
) -> Tuple[np.ndarray, float]:
    """Per-series mean count of steps before the first false flag, and their minimum.

    flags is (replicates, steps, n). Under "censored" replicates without a
    false flag count the full monitoring length; under "conditional" they are
    left out, and a series that never flags falsely gets NaN.
    """
    flags = np.array(_check_alarms(flags, outbreak_position), dtype=bool)
    if flags.ndim != 3:
        raise DomainError("Flags must be a (replicates, steps, n) array")
    if convention not in ("censored", "conditional"):
        raise DomainError(f"Unknown run-length convention {convention!r}")
    steps = flags.shape[1]
    flags[:, outbreak_position, :] = False
    flagged = flags.any(axis=1)
    first = np.where(flagged, flags.argmax(axis=1), steps)
    if convention == "censored":
        arl = first.mean(axis=0)
        return arl, float(arl.min())

    counts = flagged.sum(axis=0)
    totals = np.where(flagged, first, 0).sum(axis=0)
    arl = np.full(flags.shape[2], math.nan)
    np.divide(totals, counts, out=arl, where=counts > 0)
    overall = float(np.nanmin(arl)) if np.any(counts > 0) else math.nan
    return arl, overall


def summarize(result: ExperimentResult, arl_convention: Optional[ArlConvention] = None) -> List[MetricsSummary]:
    """Metrics per approach, outbreak size and level; arl_convention overrides the experiment's"""
    spec = result.spec
    convention = arl_convention or spec.arl_convention
    summaries = []
    for approach in spec.approaches:
        for kappa in spec.kappas:
            runs = result.select(approach, kappa)
            failed = sum(1 for r in result.failures() if r.approach == approach and r.kappa == kappa)
            if not runs:
                logger.warning(f"No successful replicates for {approach} at kappa={kappa}")
                summaries += [
                    MetricsSummary(approach, kappa, alpha, 0, failed, math.nan, math.nan,
                                   (math.nan,) * spec.n, math.nan)
                    for alpha in spec.alphas
                ]
                continue
            flags = np.stack([r.flags for r in runs], axis=1)
            alarms = np.stack([r.alarms for r in runs], axis=1)
            for a, alpha in enumerate(spec.alphas):
                arl, overall = average_run_length(flags[a], spec.outbreak_position, convention)
                summaries.append(
                    MetricsSummary(
                        approach=approach,
                        kappa=kappa,
                        alpha=alpha,
                        replicates=len(runs),
                        failed=failed,
                        detection_rate=detection_rate(alarms[a], spec.outbreak_position),
                        false_alarm_rate=false_alarm_rate(alarms[a], spec.outbreak_position),
                        arl=tuple(float(v) for v in arl),
                        overall_arl=overall,
                    )
                )
    return summaries


def table_report(
    summaries: Sequence[MetricsSummary],
    n: int,
    monitoring_length: int,
    arl_convention: ArlConvention = "censored",
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Run-length table and rate table (rates multiplied by 100)"""
    censored_at = monitoring_length if arl_convention == "censored" else None
    arl_columns = ["approach", "kappa", "alpha"] + [f"arl_{i + 1}" for i in range(n)] + [
        "arl", "censored_at", "replicates", "failed",
    ]
    rate_columns = ["approach", "kappa", "alpha", "dr", "far", "replicates", "failed"]
    arl_rows, rate_rows = [], []
    for s in summaries:
        arl_rows.append(
            [s.approach, s.kappa, s.alpha, *s.arl, s.overall_arl, censored_at, s.replicates, s.failed]
        )
        rate_rows.append(
            [s.approach, s.kappa, s.alpha, 100.0 * s.detection_rate, 100.0 * s.false_alarm_rate, s.replicates, s.failed]
        )
    return pd.DataFrame(arl_rows, columns=arl_columns), pd.DataFrame(rate_rows, columns=rate_columns)


def expected_outbreak_values(model: MinarModel, kappas: Sequence[float]) -> np.ndarray:
    """E(X_i) at the outbreak time, A mu + lambda + kappa, one row per outbreak size"""
    mu = stationary_mean(model)
    return np.array([mu + float(kappa) for kappa in kappas])


def simulate_maxima(
    model: MinarModel,
    T: int = 200,
    replicates: int = 10_000,
    exclude_time: Optional[int] = 170,
    seed: Optional[int] = None,
    burn_in: int = 100,
) -> np.ndarray:
    """(replicates, n) per-series maxima of outbreak-free series, skipping exclude_time"""
    if replicates < 1:
        raise DomainError(f"Replicate count must be >= 1, got {replicates}")
    rng = make_rng(seed)
    maxima = np.empty((replicates, model.n), dtype=np.int64)
    for r in range(replicates):
        series = simulate(model, T, burn_in=burn_in, rng=rng)
        counts = series.counts
        if exclude_time is not None and 1 <= exclude_time <= T:
            counts = np.delete(counts, exclude_time - series.origin, axis=0)
        maxima[r] = counts.max(axis=0)
    return maxima


def exceedance_probabilities(
    model: MinarModel,
    kappas: Sequence[float],
    replicates: int = 10_000,
    T: int = 200,
    outbreak_time: int = 170,
    seed: Optional[int] = None,
    maxima: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(len(kappas), n) estimates of P(max_{t != outbreak} x_it > mu_i + kappa)"""
    if not model.is_stationary:
        raise DomainError("Exceedance probabilities need a stationary model")
    if maxima is None:
        maxima = simulate_maxima(model, T, replicates, outbreak_time, seed)
    thresholds = expected_outbreak_values(model, kappas)
    return (maxima[None, :, :] > thresholds[:, None, :]).mean(axis=1)
