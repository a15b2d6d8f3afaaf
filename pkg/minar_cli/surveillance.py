# minar-cli/minar_cli/surveillance.py
"""Prediction-based monitoring of incoming counts against a frozen fitted model.

Each operational observation x_{t+1} is compared with the upper (1 - alpha)
quantile of its one-step-ahead marginal predictive distribution given the
observed x_t. A series flags when it exceeds its bound; the overall alarm
fires when at least ceil(fraction * n) series flag at the same time.
Conditioning always uses the observed counts, also after an alarm.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError
from .estimation import FittedModel
from .likelihood import PMF_TOLERANCE, ConditionalPmf, component_conditional_pmf
from .model import MinarModel, MultiCountSeries

logger = logging.getLogger(__name__)


class SurveillanceConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.01, gt=0.0, lt=1.0)
    rule_fraction: float = Field(0.6, gt=0.0, le=1.0)
    # predictive pmfs drop at most this much mass from the Poisson tail
    pmf_tolerance: float = Field(PMF_TOLERANCE, gt=0.0)

    @model_validator(mode="after")
    def check_tolerance(self) -> "SurveillanceConfig":
        if self.pmf_tolerance >= self.alpha:
            raise ValueError(f"pmf_tolerance {self.pmf_tolerance} must be below alpha {self.alpha}")
        return self

    def required_flags(self, n: int) -> int:
        return max(1, math.ceil(self.rule_fraction * n - 1e-9))


@dataclass(frozen=True, eq=False)
class SurveillanceReport:
    """Per operational step: observed counts, upper bounds, flags and the overall alarm"""

    times: np.ndarray
    observed: np.ndarray
    upper: np.ndarray
    flags: np.ndarray
    alarms: np.ndarray
    config: SurveillanceConfig

    @property
    def n(self) -> int:
        return self.observed.shape[1]

    @property
    def alarm_times(self) -> List[int]:
        return [int(t) for t in self.times[self.alarms]]

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times}
        for i in range(self.n):
            columns[f"x{i + 1}"] = self.observed[:, i]
        for i in range(self.n):
            columns[f"ub{i + 1}"] = self.upper[:, i]
        for i in range(self.n):
            columns[f"flag{i + 1}"] = self.flags[:, i].astype(int)
        columns["alarm"] = self.alarms.astype(int)
        return pd.DataFrame(columns)


def marginal_predictive_pmf(
    fit: FittedModel,
    x_t: Sequence[int],
    i: int,
    z_next: Optional[np.ndarray] = None,
    tol: float = PMF_TOLERANCE,
) -> ConditionalPmf:
    """Plug-in predictive distribution of X_{i,t+1} given x_t"""
    return component_conditional_pmf(i, x_t, fit.model, z_next, tol=tol)


def upper_bound(pmf: ConditionalPmf, alpha: float) -> int:
    """Smallest q with CDF(q) >= 1 - alpha"""
    cdf = pmf.cdf()
    q = int(np.searchsorted(cdf, 1.0 - alpha, side="left"))
    return min(q, pmf.support_max + 1)


def _check_operational(model: MinarModel, data: MultiCountSeries) -> Optional[np.ndarray]:
    if data.n != model.n:
        raise DomainError(f"Operational data has {data.n} series, the fitted model has {model.n}")
    if data.T < 2:
        raise DomainError("Operational data needs a leading conditioning row and at least one step")
    return data.covariate_matrix(model.innovations.covariate_names)


def upper_bounds(
    model: MinarModel,
    data: MultiCountSeries,
    alphas: Sequence[float],
    tol: float = PMF_TOLERANCE,
) -> np.ndarray:
    """(len(alphas), T-1, n) upper bounds for rows 1..T-1 conditioning on the row before"""
    covariates = _check_operational(model, data)
    alphas = [float(a) for a in alphas]
    for alpha in alphas:
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"Significance level must lie in (0, 1), got {alpha}")

    steps = data.T - 1
    bounds = np.empty((len(alphas), steps, model.n), dtype=np.int64)
    for t in range(steps):
        z_next = None if covariates is None else covariates[t + 1]
        for i in range(model.n):
            pmf = component_conditional_pmf(i, data.counts[t], model, z_next, tol=tol)
            for a, alpha in enumerate(alphas):
                bounds[a, t, i] = upper_bound(pmf, alpha)
    return bounds


def apply_rule(flags: np.ndarray, config: SurveillanceConfig) -> np.ndarray:
    """Overall alarms from per-series flags along the last axis"""
    return flags.sum(axis=-1) >= config.required_flags(flags.shape[-1])


def monitor(fit: FittedModel, data: MultiCountSeries, config: Optional[SurveillanceConfig] = None) -> SurveillanceReport:
    """Assess rows 1..T-1 of data; row 0 is the conditioning observation"""
    config = config or SurveillanceConfig()
    bounds = upper_bounds(fit.model, data, [config.alpha], tol=config.pmf_tolerance)[0]
    observed = np.array(data.counts[1:])
    flags = observed > bounds
    alarms = apply_rule(flags, config)
    report = SurveillanceReport(
        times=data.times[1:],
        observed=observed,
        upper=bounds,
        flags=flags,
        alarms=alarms,
        config=config,
    )
    logger.info(f"Monitored {observed.shape[0]} steps: {int(alarms.sum())} alarms at alpha={config.alpha}")
    return report
