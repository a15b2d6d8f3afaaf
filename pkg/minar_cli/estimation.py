# minar-cli/minar_cli/estimation.py
"""Conditional maximum likelihood fitting"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DataFormatError, DomainError
from .layout import ParameterLayout, from_unconstrained, to_unconstrained, unpack
from .likelihood import ZERO_MASS_PENALTY, conditional_log_likelihood, log_likelihood
from .model import MinarModel, MultiCountSeries

logger = logging.getLogger(__name__)

SEASONAL_PERIOD = 122.0


@dataclass(frozen=True)
class FitOptions:
    method: Literal["L-BFGS-B", "Nelder-Mead"] = "L-BFGS-B"
    max_iterations: int = 2000
    ftol: float = 1e-8
    gtol: float = 1e-5
    # projected gradient bound accepted when the line search stops early
    gradient_check: float = 1e-3
    compute_se: bool = True


@dataclass(frozen=True, eq=False)
class FittedModel:
    model: MinarModel
    theta: np.ndarray
    se: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    layout: ParameterLayout
    stationary: bool = True
    message: str = ""

    @property
    def names(self) -> List[str]:
        return self.layout.names()

    @property
    def se_available(self) -> bool:
        return bool(np.all(np.isfinite(self.se)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta.tolist(),
            "se": [None if not math.isfinite(v) else float(v) for v in self.se],
            "names": self.names,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "stationary": self.stationary,
            "message": self.message,
            "layout": self.layout.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FittedModel":
        try:
            layout = ParameterLayout.from_dict(data["layout"])
            theta = np.asarray(data["theta"], dtype=float)
            se = np.array([np.nan if v is None else v for v in data.get("se", [None] * theta.size)], dtype=float)
            model = unpack(theta, layout)
            return cls(
                model=model,
                theta=theta,
                se=se,
                loglik=float(data["loglik"]),
                converged=bool(data["converged"]),
                iterations=int(data.get("iterations", 0)),
                layout=layout,
                stationary=model.is_stationary,
                message=str(data.get("message", "")),
            )
        except KeyError as e:
            raise DataFormatError(f"Fit report is missing key {e}")
        except (TypeError, ValueError) as e:
            raise DataFormatError(f"Invalid fit report: {e}")


def default_init(data: MultiCountSeries, layout: ParameterLayout) -> np.ndarray:
    """alpha_ij = 0.1 delta_ij + 0.05, lambda_i = mean_i (1 - sum_j alpha_ij) clipped at 0.1"""
    n = layout.n
    if layout.structure == "full":
        A = 0.1 * np.eye(n) + 0.05
    elif layout.structure == "diagonal":
        A = 0.15 * np.eye(n)
    else:
        A = np.zeros((n, n))
    lam = np.maximum(data.counts.mean(axis=0) * (1.0 - A.sum(axis=1)), 0.1)

    alphas = [A[i, j] for i, j in layout.alpha_positions()]
    if layout.mode == "constant":
        return np.concatenate([alphas, lam])
    beta = np.zeros((n, layout.p + 1))
    beta[:, 0] = np.log(lam)
    return np.concatenate([alphas, beta.ravel()])


def _projected_gradient(eta: np.ndarray, jac: np.ndarray, bounds) -> np.ndarray:
    grad = np.array(jac, dtype=float)
    for k, (lo, hi) in enumerate(bounds):
        if lo is not None and eta[k] <= lo + 1e-8 and grad[k] > 0:
            grad[k] = 0.0
        if hi is not None and eta[k] >= hi - 1e-8 and grad[k] < 0:
            grad[k] = 0.0
    return grad


def _validate(data: MultiCountSeries, layout: ParameterLayout) -> None:
    if data.T < 2:
        raise DomainError("Fitting needs at least two time steps")
    if data.n != layout.n:
        raise DomainError(f"Data has {data.n} series, layout expects {layout.n}")
    data.covariate_matrix(layout.covariate_names)


def fit(
    data: MultiCountSeries,
    layout: ParameterLayout,
    init: Optional[Sequence[float]] = None,
    options: Optional[FitOptions] = None,
) -> FittedModel:
    """Maximize the conditional log-likelihood in the unconstrained parameterization"""
    options = options or FitOptions()
    _validate(data, layout)
    theta0 = default_init(data, layout) if init is None else np.asarray(init, dtype=float)
    eta0 = to_unconstrained(theta0, layout)

    def objective(eta: np.ndarray) -> float:
        return -log_likelihood(unpack(from_unconstrained(eta, layout), layout), data)

    bounds = layout.bounds()
    if options.method == "L-BFGS-B":
        result = minimize(
            objective,
            eta0,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": options.max_iterations, "ftol": options.ftol, "gtol": options.gtol},
        )
        gradient = _projected_gradient(result.x, result.jac, bounds)
        converged = bool(result.success) or float(np.max(np.abs(gradient), initial=0.0)) < options.gradient_check
    elif options.method == "Nelder-Mead":
        result = minimize(
            objective,
            eta0,
            method="Nelder-Mead",
            options={"maxiter": options.max_iterations, "fatol": options.ftol, "xatol": 1e-6, "adaptive": True},
        )
        converged = bool(result.success)
    else:
        raise DomainError(f"Unknown optimizer: {options.method}")

    theta = from_unconstrained(result.x, layout)
    model = unpack(theta, layout)
    loglik = log_likelihood(model, data)
    if loglik <= ZERO_MASS_PENALTY:
        converged = False
    message = str(result.message)

    if not converged:
        logger.warning(f"Fit did not converge after {result.nit} iterations: {message}")
    if not model.is_stationary:
        logger.warning(f"Fitted thinning matrix has spectral radius {model.spectral_radius:.4f} >= 1")
    logger.info(f"Fitted {layout.structure} layout: loglik={loglik:.4f}, iterations={result.nit}")

    fitted = FittedModel(
        model=model,
        theta=theta,
        se=np.full(layout.size, np.nan),
        loglik=loglik,
        converged=converged,
        iterations=int(result.nit),
        layout=layout,
        stationary=model.is_stationary,
        message=message,
    )
    if options.compute_se and converged:
        fitted = replace(fitted, se=standard_errors(fitted, data))
    return fitted


def _hessian(f: Callable[[Dict[int, float]], float], index: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Central-difference Hessian over the coordinates in index"""
    f0 = f({})
    hessian = np.zeros((index.size, index.size))
    for a, k in enumerate(index):
        hk = steps[k]
        hessian[a, a] = (f({k: hk}) - 2.0 * f0 + f({k: -hk})) / hk ** 2
        for b in range(a):
            l = index[b]
            hl = steps[l]
            value = (
                f({k: hk, l: hl}) - f({k: hk, l: -hl}) - f({k: -hk, l: hl}) + f({k: -hk, l: -hl})
            ) / (4.0 * hk * hl)
            hessian[a, b] = hessian[b, a] = value
    return hessian


def standard_errors(fit: FittedModel, data: MultiCountSeries) -> np.ndarray:
    """Square roots of the diagonal of the inverse observed information.

    The Hessian is taken by central differences in the reporting
    parameterization with step max(1e-4, 1e-4 |theta_k|). Parameters whose
    stencil leaves the parameter space get NaN and are left out of the
    Hessian; a non positive definite information gives NaN throughout.
    """
    layout = fit.layout
    theta = np.asarray(fit.theta, dtype=float)
    steps = np.maximum(1e-4, 1e-4 * np.abs(theta))
    se = np.full(layout.size, np.nan)

    interior = np.ones(layout.size, dtype=bool)
    alpha = layout.is_alpha()
    interior[alpha] = (theta[alpha] - steps[alpha] > 0.0) & (theta[alpha] + steps[alpha] < 1.0)
    lam = layout.is_lambda()
    interior[lam] = theta[lam] - steps[lam] > 0.0
    index = np.flatnonzero(interior)
    if index.size == 0:
        return se

    def f(offsets: Dict[int, float]) -> float:
        point = theta.copy()
        for k, delta in offsets.items():
            point[k] += delta
        value = conditional_log_likelihood(point, data, layout)
        if value <= ZERO_MASS_PENALTY:
            raise DomainError("Hessian stencil reached a zero-probability region")
        return value

    try:
        hessian = _hessian(f, index, steps)
    except DomainError as e:
        logger.warning(f"Standard errors unavailable: {e}")
        return se

    information = -hessian
    if not np.all(np.isfinite(information)):
        logger.warning("Observed information is not finite; standard errors unavailable")
        return se
    try:
        np.linalg.cholesky(information)
        covariance = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        logger.warning("Observed information is not positive definite; standard errors unavailable")
        return se
    variances = np.diag(covariance)
    se[index] = np.where(variances > 0.0, np.sqrt(np.abs(variances)), np.nan)
    return se


def design_names(with_weekday: bool = True) -> tuple:
    return ("weekday", "cos", "sin") if with_weekday else ("cos", "sin")


def build_design(
    times: Sequence[float],
    weekday: Optional[Sequence[float]] = None,
    period: float = SEASONAL_PERIOD,
) -> np.ndarray:
    """Columns [weekday, cos(2 pi t / period), sin(2 pi t / period)]"""
    if period <= 0:
        raise DomainError(f"Seasonal period must be > 0, got {period}")
    t = np.asarray(times, dtype=float).ravel()
    if np.any(t != np.round(t)):
        raise DomainError("Time indices must be integral")
    angle = 2.0 * np.pi * t / period
    columns = [np.cos(angle), np.sin(angle)]
    if weekday is not None:
        flags = np.asarray(weekday, dtype=float).ravel()
        if flags.size != t.size:
            raise DomainError(f"Got {flags.size} weekday flags for {t.size} time points")
        if not np.all(np.isin(flags, (0.0, 1.0))):
            raise DomainError("Weekday flags must be 0 or 1")
        columns.insert(0, flags)
    return np.column_stack(columns)


def with_design(
    data: MultiCountSeries,
    weekday_column: Optional[str] = None,
    period: float = SEASONAL_PERIOD,
) -> MultiCountSeries:
    """Replace a series' covariates by the seasonal design built from its time labels"""
    weekday = None
    if weekday_column is not None:
        weekday = data.covariate_matrix([weekday_column])[:, 0]
    design = build_design(data.times, weekday, period)
    return data.with_covariates(design, design_names(weekday is not None))
