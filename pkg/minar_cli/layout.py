# minar-cli/minar_cli/layout.py
"""Parameter vectors for conditional maximum likelihood.

The reporting vector theta lists the free thinning probabilities row by row
(all of vec(A)' for ``full``, the diagonal for ``diagonal``, nothing for
``none``) followed by the innovation parameters: lambda_1..lambda_n in
constant mode, or beta_i0..beta_ip for each series in regression mode.

The optimizer works on an unconstrained vector: logit(alpha), log(lambda),
beta unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from .errors import DomainError
from .model import InnovationModel, MinarModel, ThinningMatrix

Structure = Literal["full", "diagonal", "none"]

# box for the transformed coordinates
LOGIT_BOUND = 25.0
LOG_LAMBDA_BOUNDS = (-25.0, 12.0)


@dataclass(frozen=True)
class ParameterLayout:
    n: int
    structure: Structure = "full"
    mode: Literal["constant", "regression"] = "constant"
    covariate_names: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"Dimension must be >= 1, got {self.n}")
        if self.structure not in ("full", "diagonal", "none"):
            raise DomainError(f"Unknown thinning structure: {self.structure}")
        if self.mode not in ("constant", "regression"):
            raise DomainError(f"Unknown innovation mode: {self.mode}")
        names = tuple(str(name) for name in self.covariate_names)
        if self.mode == "constant" and names:
            raise DomainError("Constant innovation mode takes no covariates")
        if self.mode == "regression" and not names:
            raise DomainError("Regression mode needs at least one covariate")
        object.__setattr__(self, "covariate_names", names)

    @classmethod
    def for_model(cls, model: MinarModel, structure: Structure = "full") -> "ParameterLayout":
        return cls(model.n, structure, model.innovations.mode, model.innovations.covariate_names)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    @property
    def n_alpha(self) -> int:
        return {"full": self.n * self.n, "diagonal": self.n, "none": 0}[self.structure]

    @property
    def n_innovation(self) -> int:
        return self.n if self.mode == "constant" else self.n * (self.p + 1)

    @property
    def size(self) -> int:
        return self.n_alpha + self.n_innovation

    def alpha_positions(self) -> List[Tuple[int, int]]:
        if self.structure == "full":
            return [(i, j) for i in range(self.n) for j in range(self.n)]
        if self.structure == "diagonal":
            return [(i, i) for i in range(self.n)]
        return []

    def names(self) -> List[str]:
        names = [f"alpha_{i + 1}_{j + 1}" for i, j in self.alpha_positions()]
        if self.mode == "constant":
            names += [f"lambda_{i + 1}" for i in range(self.n)]
        else:
            terms = ("intercept",) + self.covariate_names
            names += [f"beta_{i + 1}_{term}" for i in range(self.n) for term in terms]
        return names

    def is_alpha(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[: self.n_alpha] = True
        return mask

    def is_lambda(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        if self.mode == "constant":
            mask[self.n_alpha:] = True
        return mask

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        """Box for the unconstrained coordinates"""
        box: List[Tuple[Optional[float], Optional[float]]] = [(-LOGIT_BOUND, LOGIT_BOUND)] * self.n_alpha
        if self.mode == "constant":
            box += [LOG_LAMBDA_BOUNDS] * self.n_innovation
        else:
            box += [(None, None)] * self.n_innovation
        return box

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "structure": self.structure,
            "mode": self.mode,
            "covariates": list(self.covariate_names),
            "size": self.size,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ParameterLayout":
        return cls(int(data["n"]), data.get("structure", "full"), data.get("mode", "constant"),
                   tuple(data.get("covariates", ())))


def _check(theta: np.ndarray, layout: ParameterLayout) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != layout.size:
        raise DomainError(f"Layout expects {layout.size} parameters, got {theta.size}")
    return theta


def pack(model: MinarModel, layout: ParameterLayout) -> np.ndarray:
    """Reporting parameter vector of a model"""
    if model.n != layout.n:
        raise DomainError(f"Model dimension {model.n} does not match layout dimension {layout.n}")
    innovations = model.innovations
    if innovations.mode != layout.mode or innovations.covariate_names != layout.covariate_names:
        raise DomainError("Model innovations do not match the layout")
    A = model.A.entries
    if layout.structure == "diagonal" and not model.A.is_diagonal():
        raise DomainError("Diagonal layout cannot hold off-diagonal thinning probabilities")
    if layout.structure == "none" and np.any(A != 0.0):
        raise DomainError("Layout without thinning needs A = 0")

    alphas = np.array([A[i, j] for i, j in layout.alpha_positions()], dtype=float)
    if layout.mode == "constant":
        rest = np.array(innovations.lam)
    else:
        rest = np.array(innovations.beta).ravel()
    return np.concatenate([alphas, rest])


def unpack(theta: Sequence[float], layout: ParameterLayout, require_stationary: bool = False) -> MinarModel:
    """Model from a reporting parameter vector"""
    theta = _check(theta, layout)
    A = np.zeros((layout.n, layout.n))
    for value, (i, j) in zip(theta[: layout.n_alpha], layout.alpha_positions()):
        A[i, j] = value
    rest = theta[layout.n_alpha:]
    if layout.mode == "constant":
        innovations = InnovationModel.constant(rest)
    else:
        innovations = InnovationModel.regression(rest.reshape(layout.n, layout.p + 1), layout.covariate_names)
    return MinarModel(ThinningMatrix(A), innovations, require_stationary=require_stationary)


def to_unconstrained(theta: Sequence[float], layout: ParameterLayout) -> np.ndarray:
    theta = _check(theta, layout)
    eta = theta.copy()
    alpha = layout.is_alpha()
    with np.errstate(divide="ignore"):
        eta[alpha] = np.clip(logit(theta[alpha]), -LOGIT_BOUND, LOGIT_BOUND)
        lam = layout.is_lambda()
        eta[lam] = np.clip(np.log(theta[lam]), *LOG_LAMBDA_BOUNDS)
    return eta


def from_unconstrained(eta: Sequence[float], layout: ParameterLayout) -> np.ndarray:
    eta = _check(eta, layout)
    theta = eta.copy()
    alpha = layout.is_alpha()
    theta[alpha] = expit(eta[alpha])
    lam = layout.is_lambda()
    theta[lam] = np.exp(eta[lam])
    return theta
