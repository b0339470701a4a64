"""Domain types shared across the package.

All types are immutable value objects validated on construction, so any
instance passed around is known-good.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, gammaln

from .errors import DimensionMismatch, Empty, NonFiniteEntry
from .numerics import SpdMatrix


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """A feature matrix X (n rows, d columns) with a label vector Y (length n)."""

    X: np.ndarray
    Y: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def validate_dataset(X, Y) -> Dataset:
    """Validate raw arrays and wrap them in a :class:`Dataset`.

    Raises
    ------
    Empty
        if there are no rows or no feature columns.
    DimensionMismatch
        if X is not 2-D, Y is not 1-D, or their row counts differ.
    NonFiniteEntry
        if any entry is NaN or infinite.
    """
    x = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(Y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch(f"Y must be a vector, got shape {y.shape}")
    if x.ndim != 2:
        raise DimensionMismatch(f"X must be a matrix, got shape {x.shape}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise Empty(f"dataset has shape {x.shape}; need at least one row and column")
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"X has {x.shape[0]} rows but Y has length {y.shape[0]}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteEntry("X contains NaN or Inf")
    if not np.all(np.isfinite(y)):
        raise NonFiniteEntry("Y contains NaN or Inf")
    return Dataset(X=_freeze(x.copy()), Y=_freeze(y.copy()))


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise variance of the Gaussian likelihood."""

    sigma_sq: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma_sq) and self.sigma_sq > 0):
            raise ValueError(f"sigma_sq must be a positive real, got {self.sigma_sq}")


@dataclass(frozen=True)
class IsotropicPrior:
    """Zero-mean isotropic Gaussian prior with variance sigma_p_sq per coordinate."""

    sigma_p_sq: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma_p_sq) and self.sigma_p_sq > 0):
            raise ValueError(
                f"sigma_p_sq must be a positive real, got {self.sigma_p_sq}"
            )


@dataclass(frozen=True)
class PerturbationBudget:
    """L2 feature-perturbation radii: delta_train for fitting, delta_test for evaluation."""

    delta_train: float
    delta_test: float

    def __post_init__(self):
        for name in ("delta_train", "delta_test"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class DataDistributionSpec:
    """Population quantities the certificates consume.

    sigma_x_sq is the per-direction second moment of the features,
    E[(x'v)^2] = sigma_x_sq * ||v||^2; theta_star_norm_sq is the squared norm
    of the true parameter. Known exactly for synthetic data; plug-in estimates
    otherwise.
    """

    sigma_x_sq: float
    theta_star_norm_sq: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma_x_sq) and self.sigma_x_sq > 0):
            raise ValueError(f"sigma_x_sq must be positive, got {self.sigma_x_sq}")
        if not (math.isfinite(self.theta_star_norm_sq) and self.theta_star_norm_sq >= 0):
            raise ValueError(
                f"theta_star_norm_sq must be >= 0, got {self.theta_star_norm_sq}"
            )


@dataclass(frozen=True)
class ExponentialFamily:
    """A one-parameter exponential family in natural form.

    psi is the log-normalizer (strictly convex), psi_grad its derivative, and
    base_log_measure(y) the log of the base measure h(y), so the NLL of a
    point is psi(eta) - y*eta - base_log_measure(y).
    """

    name: str
    psi: Callable[[float], float]
    psi_grad: Callable[[float], float]
    base_log_measure: Callable[[float], float]


def gaussian_family(sigma_sq: float = 1.0) -> ExponentialFamily:
    """Gaussian with known variance; psi(eta) = eta^2 * sigma_sq / 2.

    The natural parameter of a linear model is eta = theta'x, which predicts
    mean sigma_sq * eta — so this family's NLL coincides with the squared-error
    NLL only at sigma_sq = 1.
    """
    if not (math.isfinite(sigma_sq) and sigma_sq > 0):
        raise ValueError(f"sigma_sq must be positive, got {sigma_sq}")
    return ExponentialFamily(
        name=f"gaussian(sigma_sq={sigma_sq:g})",
        psi=lambda eta: 0.5 * sigma_sq * eta * eta,
        psi_grad=lambda eta: sigma_sq * eta,
        base_log_measure=lambda y: -0.5 * y * y / sigma_sq
        - 0.5 * math.log(2.0 * math.pi * sigma_sq),
    )


def bernoulli_family() -> ExponentialFamily:
    return ExponentialFamily(
        name="bernoulli",
        psi=lambda eta: float(np.logaddexp(0.0, eta)),
        psi_grad=lambda eta: float(expit(eta)),
        base_log_measure=lambda y: 0.0,
    )


def poisson_family() -> ExponentialFamily:
    return ExponentialFamily(
        name="poisson",
        psi=lambda eta: math.exp(eta) if eta < 700 else math.inf,
        psi_grad=lambda eta: math.exp(eta) if eta < 700 else math.inf,
        base_log_measure=lambda y: float(-gammaln(y + 1.0)),
    )


BUILTIN_FAMILIES = {
    "gaussian": gaussian_family,
    "bernoulli": bernoulli_family,
    "poisson": poisson_family,
}


@dataclass(frozen=True)
class GaussianPosterior:
    """Exact Gaussian posterior: mean vector and precision matrix."""

    mean: np.ndarray
    precision: SpdMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 1 or mean.shape[0] != self.precision.dim:
            raise DimensionMismatch(
                f"mean has shape {mean.shape} but precision is "
                f"{self.precision.dim}x{self.precision.dim}"
            )
        if not np.all(np.isfinite(mean)):
            raise NonFiniteEntry("posterior mean contains NaN or Inf")
        object.__setattr__(self, "mean", _freeze(mean.copy()))

    @property
    def dim(self) -> int:
        return self.precision.dim

    def sample(self, n_draws: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n_draws vectors; rows are mean + L^{-T} z with precision = L L'."""
        from scipy.linalg import solve_triangular

        z = rng.standard_normal((self.dim, n_draws))
        shifted = solve_triangular(
            self.precision.chol_lower.T, z, lower=False, check_finite=False
        )
        return self.mean[None, :] + shifted.T


@dataclass(frozen=True)
class SampleSet:
    """Posterior draws from a sampler run, with its seed and diagnostics."""

    draws: np.ndarray
    seed: int
    accept_rate: float
    step_size: float

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim != 2:
            raise DimensionMismatch(f"draws must be (m, d), got shape {draws.shape}")
        if not np.all(np.isfinite(draws)):
            raise NonFiniteEntry("draws contain NaN or Inf")
        if not 0.0 <= self.accept_rate <= 1.0:
            raise ValueError(f"accept_rate must lie in [0,1], got {self.accept_rate}")
        object.__setattr__(self, "draws", _freeze(draws.copy()))

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]


class TheoremId(enum.Enum):
    """Which generalization certificate a report carries."""

    BAYES_STD = "BayesStd"
    BAYES_ADV = "BayesAdv"
    ROBUST_STD = "RobustStd"
    ROBUST_ADV_MATCHED = "RobustAdvMatched"
    ROBUST_ADV_GENERAL = "RobustAdvGeneral"


@dataclass(frozen=True)
class CertificateReport:
    """A computed certificate: the bound, its tail constants, and diagnostics.

    Instances are only produced when every precondition passed, so
    precondition_ok is True and the diagnostics record the checks performed.
    """

    bound_value: float
    cgf_c: float
    cgf_s_sq: float
    t: float
    beta: float
    theorem_id: TheoremId
    precondition_ok: bool
    diagnostics: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.precondition_ok:
            if not (0.0 < self.cgf_c < 1.0):
                raise ValueError(
                    f"cgf_c must lie in (0,1) for a valid report, got {self.cgf_c}"
                )
            if not math.isfinite(self.bound_value):
                raise ValueError(f"bound_value must be finite, got {self.bound_value}")

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id.value,
            "bound_value": self.bound_value,
            "c": self.cgf_c,
            "s_sq": self.cgf_s_sq,
            "t": self.t,
            "beta": self.beta,
            "precondition_ok": self.precondition_ok,
            "preconditions": list(self.diagnostics),
        }
