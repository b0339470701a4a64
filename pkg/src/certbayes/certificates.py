"""PAC-Bayes generalization certificates for the Bayes and robust posteriors.

Each certificate is a high-probability upper bound on a posterior's expected
(possibly adversarial) test risk, computed from the training data plus the
population quantities in :class:`DataDistributionSpec`. All bounds share the
same anatomy: data terms built from log-determinants and quadratic forms of
``k*I + a*Gram`` matrices, a log(1/beta)/n confidence term, and a sub-gamma
tail term s^2 / (2 (1 - c)) evaluated at tilt t = 1.

The d x d and n x n formulations of every data term are algebraically equal;
:func:`_gram_terms` picks whichever is smaller to factorize.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetMismatch, CgfRangeViolation, PreconditionViolated
from .model import (
    CertificateReport,
    DataDistributionSpec,
    Dataset,
    IsotropicPrior,
    NoiseModel,
    PerturbationBudget,
    TheoremId,
)
from .numerics import SpdMatrix, quad_form_inv, spd_logdet, spd_solve

__all__ = [
    "CgfKind",
    "CgfConstants",
    "PreconditionCheck",
    "cgf_standard",
    "cgf_adversarial",
    "neg_log_z_bayes",
    "neg_log_z_robust_upper",
    "validate_preconditions",
    "cert_bayes_standard",
    "cert_bayes_adversarial",
    "cert_robust_standard",
    "cert_robust_adversarial_matched",
    "cert_robust_adversarial_general",
]

DEFAULT_BETA = 0.05


class CgfKind(enum.Enum):
    STANDARD = "Standard"
    ADVERSARIAL = "Adversarial"


@dataclass(frozen=True)
class CgfConstants:
    """Sub-gamma scale c and variance proxy s^2 at tilt t, with their flavor."""

    c: float
    s_sq: float
    t: float
    kind: CgfKind

    def __post_init__(self):
        if not (0.0 < self.t * self.c < 1.0):
            raise ValueError(f"need 0 < t*c < 1, got t={self.t}, c={self.c}")
        if self.s_sq <= 0.0:
            raise ValueError(f"s_sq must be positive, got {self.s_sq}")

    @property
    def tail(self) -> float:
        """The bound's tail term s^2 / (2 (1 - c t)) evaluated with its own t."""
        return self.s_sq * self.t / (2.0 * (1.0 - self.c * self.t))


def _check_t(t: float, c: float) -> None:
    if not (0.0 < t and t * c < 1.0):
        raise CgfRangeViolation(
            f"tilt t must lie in (0, 1/c) = (0, {1.0 / c:g}), got t={t}"
        )


def cgf_standard(
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    d: int,
    t: float = 1.0,
) -> CgfConstants:
    """Sub-gamma constants of the standard NLL under the data distribution.

    c = sigma_p^2 sigma_x^2 / sigma^2,
    s^2 = (1/t) (c d - c t + 1 + sigma_x^2 ||theta*||^2 / sigma^2).
    """
    c = prior.sigma_p_sq * dist.sigma_x_sq / noise.sigma_sq
    _check_t(t, c)
    s_sq = (c * d - c * t + 1.0 + dist.sigma_x_sq * dist.theta_star_norm_sq / noise.sigma_sq) / t
    return CgfConstants(c=c, s_sq=s_sq, t=t, kind=CgfKind.STANDARD)


def cgf_adversarial(
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    d: int,
    delta_test: float,
    t: float = 1.0,
) -> CgfConstants:
    """Sub-gamma constants of the adversarial NLL at evaluation radius delta_test.

    c = 2 sigma_p^2 (sigma_x^2 + delta_test^2) / sigma^2,
    s^2 = (2/t) (c d - c t + 1 + sigma_x^2 ||theta*||^2 / sigma^2).
    """
    if delta_test < 0:
        raise ValueError(f"delta_test must be >= 0, got {delta_test}")
    c = 2.0 * prior.sigma_p_sq * (dist.sigma_x_sq + delta_test ** 2) / noise.sigma_sq
    _check_t(t, c)
    s_sq = (
        2.0
        * (c * d - c * t + 1.0 + dist.sigma_x_sq * dist.theta_star_norm_sq / noise.sigma_sq)
        / t
    )
    return CgfConstants(c=c, s_sq=s_sq, t=t, kind=CgfKind.ADVERSARIAL)


def _gram_terms(data: Dataset, k: float, a: float) -> tuple[float, float]:
    """log det(k I_d + a X'X) and Y'(k I_n + a X X')^{-1} Y.

    Uses whichever Gram matrix is smaller: the two log-determinants differ by
    (n - d) log k, and the quadratic form converts through
    Y'(k I_n + a X X')^{-1} Y = (Y'Y - a q'(k I_d + a X'X)^{-1} q) / k
    with q = X'Y.
    """
    x, y = data.X, data.Y
    n, d = data.n, data.d
    if d <= n:
        m = SpdMatrix.from_array(k * np.eye(d) + a * (x.T @ x))
        logdet_d = spd_logdet(m)
        q = x.T @ y
        quad_n = (float(y @ y) - a * float(q @ spd_solve(m, q))) / k
    else:
        m = SpdMatrix.from_array(k * np.eye(n) + a * (x @ x.T))
        logdet_d = spd_logdet(m) + (d - n) * math.log(k)
        quad_n = quad_form_inv(m, y)
    return logdet_d, quad_n


def _k_delta(data: Dataset, noise: NoiseModel, prior: IsotropicPrior, delta: float) -> float:
    return 2.0 * data.n * delta ** 2 * prior.sigma_p_sq / noise.sigma_sq + 1.0


def neg_log_z_bayes(data: Dataset, noise: NoiseModel, prior: IsotropicPrior) -> float:
    """Exact negative log normalizer of the Bayes posterior (constant-free loss).

    (1/2) log det(I + (sigma_p^2/sigma^2) X'X)
    + Y'(I + (sigma_p^2/sigma^2) X X')^{-1} Y / (2 sigma^2).
    """
    logdet_d, quad_n = _gram_terms(data, 1.0, prior.sigma_p_sq / noise.sigma_sq)
    return 0.5 * logdet_d + 0.5 * quad_n / noise.sigma_sq


def neg_log_z_robust_upper(
    data: Dataset, noise: NoiseModel, prior: IsotropicPrior, delta: float
) -> float:
    """Upper bound on the robust posterior's negative log normalizer.

    Integrates the quadratic upper envelope of the adversarial loss against
    the prior:

    (1/2) log det(k I + (2 sigma_p^2/sigma^2) X'X)
    + (k/sigma^2) Y'(k I + (2 sigma_p^2/sigma^2) X X')^{-1} Y,
    k = 2 n delta^2 sigma_p^2 / sigma^2 + 1.

    The quadratic-form coefficient k/sigma^2 is what the Gaussian integral
    gives; it makes the bound monotone in delta and an actual upper bound.
    At delta = 0 the factor-2 envelope slack remains — this does not collapse
    to :func:`neg_log_z_bayes`.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    k = _k_delta(data, noise, prior, delta)
    logdet_d, quad_n = _gram_terms(data, k, 2.0 * prior.sigma_p_sq / noise.sigma_sq)
    return 0.5 * logdet_d + k * quad_n / noise.sigma_sq


@dataclass(frozen=True)
class PreconditionCheck:
    name: str
    ok: bool
    detail: str

    def render(self) -> str:
        return f"{self.name}: {self.detail} [{'pass' if self.ok else 'FAIL'}]"


def _check(name: str, ok: bool, detail: str) -> PreconditionCheck:
    return PreconditionCheck(name=name, ok=bool(ok), detail=detail)


def validate_preconditions(
    theorem_id: TheoremId,
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    budget: Optional[PerturbationBudget],
    n: int,
    d: int,
    beta: float,
) -> list[PreconditionCheck]:
    """Evaluate every hypothesis of the requested certificate.

    Returns one check per condition with the inequality rendered numerically;
    certificate operations refuse to emit a bound when any check fails.
    """
    s2, p2, x2 = noise.sigma_sq, prior.sigma_p_sq, dist.sigma_x_sq
    checks = [
        _check("beta_in_range", 0.0 < beta <= 1.0, f"0 < beta={beta:g} <= 1"),
        _check("shape_positive", n >= 1 and d >= 1, f"n={n} >= 1 and d={d} >= 1"),
    ]

    def standard_scale():
        c = p2 * x2 / s2
        checks.append(
            _check(
                "cgf_scale_lt_one",
                c < 1.0,
                f"sigma_p_sq*sigma_x_sq/sigma_sq = {c:g} < 1",
            )
        )

    def adversarial_scale(dt: float):
        c = 2.0 * p2 * (x2 + dt ** 2) / s2
        checks.append(
            _check(
                "cgf_scale_lt_one",
                c < 1.0,
                f"2*sigma_p_sq*(sigma_x_sq + delta_test^2)/sigma_sq = {c:g} < 1",
            )
        )

    if theorem_id in (TheoremId.BAYES_STD, TheoremId.ROBUST_STD):
        standard_scale()
    elif theorem_id is TheoremId.BAYES_ADV:
        dt = budget.delta_test if budget is not None else 0.0
        adversarial_scale(dt)
        denom = s2 - 2.0 * n * dt ** 2 * p2
        checks.append(
            _check(
                "denominator_positive",
                denom > 0.0,
                f"sigma_sq - 2*n*delta_test^2*sigma_p_sq = {denom:g} > 0",
            )
        )
    elif theorem_id is TheoremId.ROBUST_ADV_MATCHED:
        dt = budget.delta_test if budget is not None else 0.0
        d_train = budget.delta_train if budget is not None else 0.0
        checks.append(
            _check(
                "matched_budget",
                dt == d_train,
                f"delta_test={dt:g} == delta_train={d_train:g}",
            )
        )
        adversarial_scale(dt)
    elif theorem_id is TheoremId.ROBUST_ADV_GENERAL:
        dt = budget.delta_test if budget is not None else 0.0
        d_train = budget.delta_train if budget is not None else 0.0
        adversarial_scale(dt)
        gap = dt ** 2 - d_train ** 2
        if gap > 0.0:
            denom = s2 - 2.0 * n * gap * p2
            checks.append(
                _check(
                    "denominator_positive",
                    denom > 0.0,
                    "sigma_sq - 2*n*(delta_test^2 - delta_train^2)*sigma_p_sq"
                    f" = {denom:g} > 0",
                )
            )
        else:
            checks.append(
                _check(
                    "denominator_positive",
                    True,
                    "auto-pass: delta_test <= delta_train makes the extra term"
                    " nonpositive",
                )
            )
    return checks


def _require(checks: list[PreconditionCheck]) -> tuple[str, ...]:
    failed = [c for c in checks if not c.ok]
    if failed:
        raise PreconditionViolated(
            "certificate preconditions violated: "
            + "; ".join(c.render() for c in failed),
            diagnostics=tuple(c.render() for c in checks),
        )
    return tuple(c.render() for c in checks)


def _report(
    theorem_id: TheoremId,
    bound: float,
    cgf: CgfConstants,
    beta: float,
    diagnostics: tuple[str, ...],
) -> CertificateReport:
    return CertificateReport(
        bound_value=float(bound),
        cgf_c=cgf.c,
        cgf_s_sq=cgf.s_sq,
        t=cgf.t,
        beta=beta,
        theorem_id=theorem_id,
        precondition_ok=True,
        diagnostics=diagnostics,
    )


def cert_bayes_standard(
    data: Dataset,
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    beta: float = DEFAULT_BETA,
) -> CertificateReport:
    """Certificate on the Bayes posterior's standard test risk.

    log det(W_d) / (2n) + Y'W_n^{-1}Y / (2 n sigma^2) + log(1/beta)/n + tail,
    with W_d = I + (sigma_p^2/sigma^2) X'X and standard constants at t = 1.
    """
    diags = _require(
        validate_preconditions(
            TheoremId.BAYES_STD, noise, prior, dist, None, data.n, data.d, beta
        )
    )
    cgf = cgf_standard(noise, prior, dist, data.d, t=1.0)
    logdet_d, quad_n = _gram_terms(data, 1.0, prior.sigma_p_sq / noise.sigma_sq)
    n = data.n
    bound = (
        0.5 * logdet_d / n
        + 0.5 * quad_n / (n * noise.sigma_sq)
        + math.log(1.0 / beta) / n
        + cgf.tail
    )
    return _report(TheoremId.BAYES_STD, bound, cgf, beta, diags)


def cert_bayes_adversarial(
    data: Dataset,
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    budget: PerturbationBudget,
    beta: float = DEFAULT_BETA,
) -> CertificateReport:
    """Certificate on the Bayes posterior's adversarial test risk at delta_test.

    Doubles the standard data terms and adds the mismatch term
    d delta_test^2 sigma_p^2 / (sigma^2 - 2 n delta_test^2 sigma_p^2);
    adversarial constants at t = 1.
    """
    diags = _require(
        validate_preconditions(
            TheoremId.BAYES_ADV, noise, prior, dist, budget, data.n, data.d, beta
        )
    )
    dt = budget.delta_test
    cgf = cgf_adversarial(noise, prior, dist, data.d, dt, t=1.0)
    logdet_d, quad_n = _gram_terms(data, 1.0, prior.sigma_p_sq / noise.sigma_sq)
    n = data.n
    extra = (
        data.d
        * dt ** 2
        * prior.sigma_p_sq
        / (noise.sigma_sq - 2.0 * n * dt ** 2 * prior.sigma_p_sq)
    )
    bound = (
        logdet_d / n
        + quad_n / (n * noise.sigma_sq)
        + math.log(1.0 / beta) / n
        + cgf.tail
        + extra
    )
    return _report(TheoremId.BAYES_ADV, bound, cgf, beta, diags)


def cert_robust_standard(
    data: Dataset,
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    budget: PerturbationBudget,
    beta: float = DEFAULT_BETA,
) -> CertificateReport:
    """Certificate on the robust posterior's standard test risk.

    Combines the robust-normalizer envelope (U matrices, doubled) with the
    exact Bayes normalizer taken at the inflated ridge (V matrices), using
    standard constants at t = 1:

    log det(U_d)/n + 2 Y'U_n^{-1}Y / (n k sigma^2)
    - log det(V_d)/(2n) - k Y'V_n^{-1}Y / (n sigma^2)
    + log(1/beta)/n + tail.
    """
    diags = _require(
        validate_preconditions(
            TheoremId.ROBUST_STD, noise, prior, dist, budget, data.n, data.d, beta
        )
    )
    cgf = cgf_standard(noise, prior, dist, data.d, t=1.0)
    k = _k_delta(data, noise, prior, budget.delta_train)
    ratio = prior.sigma_p_sq / noise.sigma_sq
    logdet_u, quad_u = _gram_terms(data, k, 2.0 * ratio)
    logdet_v, quad_v = _gram_terms(data, k, ratio)
    n = data.n
    bound = (
        logdet_u / n
        + 2.0 * quad_u / (n * k * noise.sigma_sq)
        - 0.5 * logdet_v / n
        - k * quad_v / (n * noise.sigma_sq)
        + math.log(1.0 / beta) / n
        + cgf.tail
    )
    return _report(TheoremId.ROBUST_STD, bound, cgf, beta, diags)


def cert_robust_adversarial_matched(
    data: Dataset,
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    budget: PerturbationBudget,
    beta: float = DEFAULT_BETA,
) -> CertificateReport:
    """Certificate on the robust posterior's adversarial risk when delta_test
    equals delta_train.

    log det(U_d)/(2n) + Y'U_n^{-1}Y / (n k sigma^2) + log(1/beta)/n + tail,
    adversarial constants at t = 1.
    """
    if budget.delta_test != budget.delta_train:
        raise BudgetMismatch(
            f"matched-budget certificate needs delta_test == delta_train, got "
            f"{budget.delta_test:g} != {budget.delta_train:g}"
        )
    diags = _require(
        validate_preconditions(
            TheoremId.ROBUST_ADV_MATCHED,
            noise,
            prior,
            dist,
            budget,
            data.n,
            data.d,
            beta,
        )
    )
    cgf = cgf_adversarial(noise, prior, dist, data.d, budget.delta_test, t=1.0)
    k = _k_delta(data, noise, prior, budget.delta_train)
    logdet_u, quad_u = _gram_terms(data, k, 2.0 * prior.sigma_p_sq / noise.sigma_sq)
    n = data.n
    bound = (
        0.5 * logdet_u / n
        + quad_u / (n * k * noise.sigma_sq)
        + math.log(1.0 / beta) / n
        + cgf.tail
    )
    return _report(TheoremId.ROBUST_ADV_MATCHED, bound, cgf, beta, diags)


def cert_robust_adversarial_general(
    data: Dataset,
    noise: NoiseModel,
    prior: IsotropicPrior,
    dist: DataDistributionSpec,
    budget: PerturbationBudget,
    beta: float = DEFAULT_BETA,
) -> CertificateReport:
    """Certificate on the robust posterior's adversarial risk for any delta_test.

    Doubles the matched-budget data terms and adds the budget-mismatch term
    (delta_test^2 - delta_train^2) sigma_p^2 d
    / (sigma^2 - 2 n (delta_test^2 - delta_train^2) sigma_p^2);
    adversarial constants at t = 1.
    """
    diags = _require(
        validate_preconditions(
            TheoremId.ROBUST_ADV_GENERAL,
            noise,
            prior,
            dist,
            budget,
            data.n,
            data.d,
            beta,
        )
    )
    cgf = cgf_adversarial(noise, prior, dist, data.d, budget.delta_test, t=1.0)
    k = _k_delta(data, noise, prior, budget.delta_train)
    logdet_u, quad_u = _gram_terms(data, k, 2.0 * prior.sigma_p_sq / noise.sigma_sq)
    n = data.n
    gap = budget.delta_test ** 2 - budget.delta_train ** 2
    extra = (
        gap
        * prior.sigma_p_sq
        * data.d
        / (noise.sigma_sq - 2.0 * n * gap * prior.sigma_p_sq)
    )
    bound = (
        logdet_u / n
        + 2.0 * quad_u / (n * k * noise.sigma_sq)
        + math.log(1.0 / beta) / n
        + cgf.tail
        + extra
    )
    return _report(TheoremId.ROBUST_ADV_GENERAL, bound, cgf, beta, diags)
