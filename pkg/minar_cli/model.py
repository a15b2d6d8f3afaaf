# minar-cli/minar_cli/model.py
"""Process objects for the multivariate INAR(1) model with independent Poisson innovations.

X_t = A o X_{t-1} + eps_t where every alpha_ij o X_j is an independent binomial
thinning and eps_it ~ Poisson(lambda_it). The thinning part is the epidemic
component, the innovations are the endemic component.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Literal, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DomainError, NumericalError
from .utils import SeedLike, make_rng

logger = logging.getLogger(__name__)

STATIONARITY_MARGIN = 1e-9
COVARIANCE_TOLERANCE = 1e-12
COVARIANCE_MAX_ITERATIONS = 100_000

InnovationMode = Literal["constant", "regression"]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ThinningMatrix:
    """n x n matrix of thinning probabilities alpha_ij"""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] == 0:
            raise DomainError(f"Thinning matrix must be square and non-empty, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DomainError("Thinning probabilities must be finite")
        if np.any(entries < 0.0) or np.any(entries > 1.0):
            raise DomainError("Thinning probabilities must lie in [0, 1]")
        object.__setattr__(self, "entries", _readonly(entries))

    @classmethod
    def zeros(cls, n: int) -> "ThinningMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "ThinningMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def variance_factors(self) -> np.ndarray:
        """B with [B]_ij = alpha_ij (1 - alpha_ij)"""
        return self.entries * (1.0 - self.entries)

    def is_diagonal(self) -> bool:
        return bool(np.all(self.entries[~np.eye(self.n, dtype=bool)] == 0.0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ThinningMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)


@dataclass(frozen=True, eq=False)
class InnovationModel:
    """Poisson innovation means, constant or log-linear in covariates.

    Constant mode stores ``lam`` (length n). Regression mode stores ``beta``
    with shape (n, p + 1): column 0 is the intercept and column k the effect of
    covariate ``covariate_names[k - 1]``, so E(eps_it) = exp(beta_i0 + z_t' beta_i).
    """

    lam: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    covariate_names: tuple = ()

    def __post_init__(self):
        if (self.lam is None) == (self.beta is None):
            raise DomainError("Give exactly one of constant means or regression coefficients")
        names = tuple(str(name) for name in self.covariate_names)
        object.__setattr__(self, "covariate_names", names)
        if self.lam is not None:
            lam = np.array(self.lam, dtype=float).ravel()
            if lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
                raise DomainError("Constant innovation means must be finite and > 0")
            if names:
                raise DomainError("Constant innovation mode takes no covariates")
            object.__setattr__(self, "lam", _readonly(lam))
        else:
            beta = np.array(self.beta, dtype=float)
            if beta.ndim == 1:
                beta = beta[:, None]
            if beta.ndim != 2 or beta.shape[0] == 0:
                raise DomainError(f"Regression coefficients must be (n, p+1), got shape {beta.shape}")
            if beta.shape[1] != len(names) + 1:
                raise DomainError(
                    f"Expected {len(names) + 1} coefficients per series for covariates {names}, got {beta.shape[1]}"
                )
            if not np.all(np.isfinite(beta)):
                raise DomainError("Regression coefficients must be finite")
            object.__setattr__(self, "beta", _readonly(beta))

    @classmethod
    def constant(cls, lam: Sequence[float]) -> "InnovationModel":
        return cls(lam=np.asarray(lam, dtype=float))

    @classmethod
    def regression(cls, beta: np.ndarray, covariate_names: Sequence[str]) -> "InnovationModel":
        return cls(beta=np.asarray(beta, dtype=float), covariate_names=tuple(covariate_names))

    @property
    def mode(self) -> InnovationMode:
        return "constant" if self.lam is not None else "regression"

    @property
    def n(self) -> int:
        return self.lam.size if self.lam is not None else self.beta.shape[0]

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    def mean(self, z: Optional[np.ndarray] = None) -> np.ndarray:
        """Innovation means for one time step; z is the covariate row in regression mode"""
        if self.mode == "constant":
            return np.array(self.lam)
        if z is None:
            raise DomainError("Regression-mode innovations need a covariate row")
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.p:
            raise DomainError(f"Expected {self.p} covariates, got {z.size}")
        return np.exp(self.beta[:, 0] + self.beta[:, 1:] @ z)

    def means(self, covariates: Optional[np.ndarray], length: int) -> np.ndarray:
        """(length, n) matrix of innovation means"""
        if self.mode == "constant":
            return np.broadcast_to(self.lam, (length, self.n)).copy()
        if covariates is None:
            raise DomainError("Regression-mode innovations need covariates")
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim != 2 or covariates.shape[1] != self.p or covariates.shape[0] < length:
            raise DomainError(
                f"Need at least {length} covariate rows with {self.p} columns, got shape {covariates.shape}"
            )
        z = covariates[:length]
        with np.errstate(over="ignore"):
            return np.exp(self.beta[:, 0][None, :] + z @ self.beta[:, 1:].T)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InnovationModel):
            return NotImplemented
        if self.mode != other.mode or self.covariate_names != other.covariate_names:
            return False
        if self.mode == "constant":
            return np.array_equal(self.lam, other.lam)
        return np.array_equal(self.beta, other.beta)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"mode": self.mode}
        if self.mode == "constant":
            data["lambda"] = self.lam.tolist()
        else:
            data["beta"] = self.beta.tolist()
            data["covariates"] = list(self.covariate_names)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InnovationModel":
        mode = data.get("mode", "constant")
        if mode == "constant":
            if "lambda" not in data:
                raise DomainError("Constant innovations need a 'lambda' list")
            return cls.constant(data["lambda"])
        if mode == "regression":
            if "beta" not in data:
                raise DomainError("Regression innovations need a 'beta' matrix")
            return cls.regression(np.asarray(data["beta"], dtype=float), data.get("covariates", []))
        raise DomainError(f"Unknown innovation mode: {mode}")


@dataclass(frozen=True, eq=False)
class MinarModel:
    """Thinning matrix plus innovation model.

    Stationarity (spectral radius of A below 1) is enforced at construction
    unless ``require_stationary`` is False, which the optimizer uses for
    intermediate parameter values.
    """

    A: ThinningMatrix
    innovations: InnovationModel
    require_stationary: bool = True

    def __post_init__(self):
        if not isinstance(self.A, ThinningMatrix):
            object.__setattr__(self, "A", ThinningMatrix(self.A))
        if self.A.n != self.innovations.n:
            raise DomainError(
                f"Thinning matrix is {self.A.n}x{self.A.n} but innovations have dimension {self.innovations.n}"
            )
        if self.require_stationary and not self.is_stationary:
            raise DomainError(
                f"Model is not stationary: spectral radius {self.spectral_radius:.6f} >= 1"
            )

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.A)

    @property
    def is_stationary(self) -> bool:
        return self.spectral_radius < 1.0 - STATIONARITY_MARGIN

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MinarModel):
            return NotImplemented
        return self.A == other.A and self.innovations == other.innovations

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "A": self.A.entries.tolist(), "innovations": self.innovations.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], require_stationary: bool = True) -> "MinarModel":
        try:
            A = ThinningMatrix(np.asarray(data["A"], dtype=float))
            innovations = InnovationModel.from_dict(data["innovations"])
        except KeyError as e:
            raise DomainError(f"Model document is missing key {e}")
        except (TypeError, ValueError) as e:
            if isinstance(e, DomainError):
                raise
            raise DomainError(f"Invalid model document: {e}")
        if "n" in data and int(data["n"]) != A.n:
            raise DomainError(f"Declared n={data['n']} does not match a {A.n}x{A.n} matrix")
        return cls(A, innovations, require_stationary=require_stationary)


@dataclass(frozen=True, eq=False)
class MultiCountSeries:
    """T x n counts with optional aligned covariate columns"""

    counts: np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: tuple = ()
    origin: int = 1

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim == 1:
            raw = raw[:, None]
        if raw.ndim != 2:
            raise DomainError(f"Counts must be a T x n array, got shape {raw.shape}")
        if raw.size and (not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw))):
            raise DomainError("Counts must be integral")
        if np.any(raw < 0):
            raise DomainError("Counts must be non-negative")
        object.__setattr__(self, "counts", _readonly(raw.astype(np.int64)))

        names = tuple(str(name) for name in self.covariate_names)
        if self.covariates is None:
            if names:
                raise DomainError("Covariate names given without covariates")
        else:
            covariates = np.array(self.covariates, dtype=float)
            if covariates.ndim == 1:
                covariates = covariates[:, None]
            if covariates.shape[0] != raw.shape[0]:
                raise DomainError(
                    f"Covariate rows ({covariates.shape[0]}) must align with count rows ({raw.shape[0]})"
                )
            if not names:
                names = tuple(f"cov{k + 1}" for k in range(covariates.shape[1]))
            if len(names) != covariates.shape[1]:
                raise DomainError("One name per covariate column is required")
            object.__setattr__(self, "covariates", _readonly(covariates))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "origin", int(self.origin))

    @property
    def T(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return self.counts.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.origin, self.origin + self.T)

    def covariate_matrix(self, names: Sequence[str]) -> Optional[np.ndarray]:
        """Covariate columns in the requested order, None when no names are requested"""
        names = tuple(names)
        if not names:
            return None
        missing = [name for name in names if name not in self.covariate_names]
        if missing:
            raise DomainError(f"Series lacks covariate columns: {', '.join(missing)}")
        columns = [self.covariate_names.index(name) for name in names]
        return self.covariates[:, columns]

    def take(self, start: int, stop: Optional[int] = None) -> "MultiCountSeries":
        """Rows start..stop-1 (0-based) keeping their time labels"""
        stop = self.T if stop is None else stop
        if not 0 <= start <= stop <= self.T:
            raise DomainError(f"Row range [{start}, {stop}) outside series of length {self.T}")
        return MultiCountSeries(
            self.counts[start:stop],
            None if self.covariates is None else self.covariates[start:stop],
            self.covariate_names,
            self.origin + start,
        )

    def with_covariates(self, covariates: np.ndarray, names: Sequence[str]) -> "MultiCountSeries":
        return MultiCountSeries(self.counts, covariates, tuple(names), self.origin)


@dataclass(frozen=True, eq=False)
class OutbreakSpec:
    """Additional Poisson(kappa_i) cases injected at one time label"""

    time: int
    sizes: np.ndarray

    def __post_init__(self):
        sizes = np.array(self.sizes, dtype=float).ravel()
        if not np.all(np.isfinite(sizes)) or np.any(sizes < 0.0):
            raise DomainError("Outbreak sizes must be finite and >= 0")
        object.__setattr__(self, "sizes", _readonly(sizes))
        object.__setattr__(self, "time", int(self.time))


class BivariateMoments(NamedTuple):
    mu1: float
    mu2: float
    gamma11: float
    gamma22: float
    gamma12: float


def thin(count: int, alpha: float, rng: SeedLike = None) -> int:
    """Binomial thinning alpha o count"""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"Thinning probability must lie in [0, 1], got {alpha}")
    if count < 0:
        raise DomainError(f"Cannot thin a negative count: {count}")
    return int(make_rng(rng).binomial(int(count), alpha))


def spectral_radius(A) -> float:
    """Modulus of the dominant eigenvalue"""
    entries = A.entries if isinstance(A, ThinningMatrix) else np.asarray(A, dtype=float)
    if entries.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(entries))))


def _innovation_mean(model: MinarModel, z_ref: Optional[np.ndarray]) -> np.ndarray:
    if model.innovations.mode == "regression" and z_ref is None:
        raise DomainError("Stationary moments of a regression model need a reference covariate vector")
    return model.innovations.mean(z_ref)


def stationary_mean(model: MinarModel, z_ref: Optional[np.ndarray] = None) -> np.ndarray:
    """mu = (I - A)^-1 mu_eps"""
    mean_eps = _innovation_mean(model, z_ref)
    return np.linalg.solve(np.eye(model.n) - model.A.entries, mean_eps)


def autocovariance(
    model: MinarModel,
    h: int = 0,
    z_ref: Optional[np.ndarray] = None,
    tol: float = COVARIANCE_TOLERANCE,
    max_iter: int = COVARIANCE_MAX_ITERATIONS,
) -> np.ndarray:
    """gamma(h); gamma(0) by fixed-point iteration of gamma = A gamma A' + diag(B mu) + Sigma_eps"""
    if h < 0:
        raise DomainError(f"Lag must be >= 0, got {h}")
    A = model.A.entries
    mu = stationary_mean(model, z_ref)
    forcing = np.diag(model.A.variance_factors @ mu + _innovation_mean(model, z_ref))

    gamma = forcing.copy()
    for iteration in range(max_iter):
        updated = A @ gamma @ A.T + forcing
        if np.max(np.abs(updated - gamma)) < tol:
            gamma = updated
            break
        gamma = updated
    else:
        raise NumericalError(f"Autocovariance iteration did not converge in {max_iter} steps")

    if h == 0:
        return gamma
    return np.linalg.matrix_power(A, h) @ gamma


def bivariate_moments(A, lam: Sequence[float]) -> BivariateMoments:
    """Closed-form mean and lag-0 covariance of a bivariate model"""
    entries = A.entries if isinstance(A, ThinningMatrix) else np.asarray(A, dtype=float)
    if entries.shape != (2, 2):
        raise DomainError(f"Bivariate moments need a 2x2 matrix, got shape {entries.shape}")
    lam1, lam2 = (float(v) for v in lam)
    (a11, a12), (a21, a22) = entries

    denominator = (1 - a11) * (1 - a22) - a12 * a21
    if denominator <= 0:
        raise DomainError("Non-stationary bivariate model: (1-a11)(1-a22) - a12 a21 <= 0")
    mu1 = ((1 - a22) * lam1 + a12 * lam2) / denominator
    mu2 = ((1 - a11) * lam2 + a21 * lam1) / denominator

    # unknowns (gamma11, gamma22, gamma12)
    system = np.array([
        [1 - a11 ** 2, -(a12 ** 2), -2 * a11 * a12],
        [-(a21 ** 2), 1 - a22 ** 2, -2 * a22 * a21],
        [-a11 * a21, -a22 * a12, 1 - a11 * a22 - a12 * a21],
    ])
    rhs = np.array([
        (1 - a11 ** 2) * mu1 - a12 ** 2 * mu2,
        (1 - a22 ** 2) * mu2 - a21 ** 2 * mu1,
        0.0,
    ])
    gamma11, gamma22, gamma12 = np.linalg.solve(system, rhs)
    return BivariateMoments(mu1, mu2, float(gamma11), float(gamma22), float(gamma12))


def simulate(
    model: MinarModel,
    T: int,
    burn_in: int = 100,
    outbreak: Optional[OutbreakSpec] = None,
    covariates: Optional[np.ndarray] = None,
    rng: SeedLike = None,
    origin: int = 1,
) -> MultiCountSeries:
    """Forward simulation with optional outbreak injection.

    The initial state is drawn as independent Poissons at the stationary mean
    and evolved for ``burn_in`` discarded steps. In regression mode the first
    covariate row serves as reference for the initial state and the burn-in.
    """
    if T < 1:
        raise DomainError(f"Series length must be >= 1, got {T}")
    if burn_in < 0:
        raise DomainError(f"Burn-in must be >= 0, got {burn_in}")
    if not model.is_stationary:
        raise DomainError("Cannot simulate a non-stationary model")
    rng = make_rng(rng)
    n = model.n
    A = model.A.entries
    names = model.innovations.covariate_names

    if model.innovations.mode == "regression":
        if covariates is None:
            raise DomainError("Regression-mode simulation needs covariates")
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if covariates.shape[0] < T or covariates.shape[1] != len(names):
            raise DomainError(
                f"Need at least {T} covariate rows with {len(names)} columns, got shape {covariates.shape}"
            )
        covariates = covariates[:T]
        z_ref = covariates[0]
    else:
        covariates = None
        z_ref = None
    lam_path = model.innovations.means(covariates, T)

    outbreak_row = None
    if outbreak is not None:
        outbreak_row = outbreak.time - origin
        if not 0 <= outbreak_row < T:
            raise DomainError(f"Outbreak time {outbreak.time} outside simulated times {origin}..{origin + T - 1}")
        if outbreak.sizes.size != n:
            raise DomainError(f"Expected {n} outbreak sizes, got {outbreak.sizes.size}")

    x = rng.poisson(stationary_mean(model, z_ref))
    lam_ref = model.innovations.mean(z_ref)
    for _ in range(burn_in):
        x = rng.binomial(x[None, :], A).sum(axis=1) + rng.poisson(lam_ref)

    counts = np.empty((T, n), dtype=np.int64)
    for t in range(T):
        x = rng.binomial(x[None, :], A).sum(axis=1) + rng.poisson(lam_path[t])
        if t == outbreak_row:
            x = x + rng.poisson(outbreak.sizes)
        counts[t] = x

    return MultiCountSeries(counts, covariates, names if covariates is not None else (), origin)
