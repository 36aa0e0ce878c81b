"""
Metropolis-Hastings moves that add features. At observation n the features
active only at n (singletons) are the current configuration; a move proposes
κ_n fresh features to take their place and is accepted on the ratio of the
two marginal likelihoods, with the latent weights integrated out. Four
candidate functions choose κ_n: the plain prior, the prior with an annealed
penalty, a spike-and-slab on {0, 1} and zero.
"""

import logging
import math
from enum import Enum
from typing import NamedTuple

import numpy

from pydantic import (  # pylint: disable=no-name-in-module # isort: skip
    BaseModel,
    Field,
    root_validator,
    validator,
)

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import ContractViolation
from factor_regression.ibp import new_feature_count_prior
from factor_regression.model import Hyperparams, LatentState, NoiseMode

from factor_regression.gaussian import (  # isort: skip
    low_rank_gaussian_logpdf,
    sample_from_precision,
    sample_inverse_gamma,
)

logger = logging.getLogger(__name__)


class ProposalKind(str, Enum):
    """Candidate function used to propose the number of new features."""

    PLAIN_PRIOR = "plain_prior"
    SIMULATED_ANNEALING = "simulated_annealing"
    SPIKE_SLAB = "spike_slab"
    ZERO = "zero"


class ProposalStrategy(BaseModel):
    """How new features are proposed."""

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    kind: ProposalKind = ProposalKind.SIMULATED_ANNEALING
    spike_weight: float = Field(
        default=0.5,
        description="Probability of proposing no feature (spike_slab only)",
    )
    kappa_max: int = Field(
        default=5,
        description="Cap on the number of features proposed at once",
    )

    @validator("spike_weight")
    def _validate_spike_weight(  # pylint: disable=no-self-argument
        cls, value: float
    ) -> float:
        """The spike weight is a probability."""
        if not 0.0 <= value <= 1.0:
            raise ValueError("spike_weight must lie in [0, 1]")
        return value

    @root_validator(skip_on_failure=True)
    def _validate_kappa_max(cls, values: dict):  # pylint: disable=no-self-argument
        """Every kind except zero must be able to propose a feature."""
        if values.get("kind") != ProposalKind.ZERO and values.get("kappa_max", 1) < 1:
            raise ValueError("kappa_max must be at least 1")
        return values


class AnnealSchedule(BaseModel):
    """Geometric cooling T_i = max(T_floor, T0 · cool^i)."""

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    T0: float = Field(default=1000.0, description="Initial temperature")
    cool: float = Field(default=0.9, description="Multiplicative cooling factor")
    T_floor: float = Field(default=1e-3, description="Lowest temperature")

    @validator("cool")
    def _validate_cool(cls, value: float) -> float:  # pylint: disable=no-self-argument
        """Cooling must not heat the chain up."""
        if not 0.0 < value <= 1.0:
            raise ValueError("cool must lie in (0, 1]")
        return value

    @root_validator(skip_on_failure=True)
    def _validate_temperatures(cls, values: dict):  # pylint: disable=no-self-argument
        """T0 >= T_floor > 0."""
        floor = values.get("T_floor")
        start = values.get("T0")
        if floor is None or start is None:
            return values
        if not floor > 0:
            raise ValueError("T_floor must be strictly positive")
        if start < floor:
            raise ValueError("T0 must be at least T_floor")
        return values


class KappaProposal(NamedTuple):
    """Proposed number of new features with its proposal log-probability."""

    kappa: int
    log_prob: float


class BirthOutcome(BaseModel):  # pylint: disable=too-few-public-methods
    """What a single birth move did."""

    proposed: int = 0
    accepted: bool = False
    born: int = 0
    retired: int = 0
    log_ratio: float = 0.0


def temperature_at(schedule: AnnealSchedule, iteration: int) -> float:
    """max(T_floor, T0 · cool^iteration)."""
    if iteration < 0:
        raise ContractViolation("iteration must be zero or more")
    return max(schedule.T_floor, schedule.T0 * schedule.cool**iteration)


def propose_kappa(
    strategy: ProposalStrategy,
    alpha: float,
    n_total: int,
    rng: numpy.random.Generator,
) -> KappaProposal:
    """
    Draw κ_n. The prior kinds use Poisson(α/N) with the tail beyond
    kappa_max folded onto kappa_max.
    """
    if strategy.kind == ProposalKind.ZERO:
        return KappaProposal(0, 0.0)
    if strategy.kind == ProposalKind.SPIKE_SLAB:
        if rng.random() < strategy.spike_weight:
            return KappaProposal(0, _safe_log(strategy.spike_weight))
        return KappaProposal(1, _safe_log(1.0 - strategy.spike_weight))
    prior = new_feature_count_prior(alpha, n_total)
    kappa = min(int(rng.poisson(alpha / n_total)), strategy.kappa_max)
    if kappa < strategy.kappa_max:
        return KappaProposal(kappa, float(prior.logpmf(kappa)))
    return KappaProposal(kappa, float(prior.logsf(strategy.kappa_max - 1)))


def _safe_log(value: float) -> float:
    return math.log(value) if value > 0 else -math.inf


def singleton_features(state: LatentState, n: int) -> numpy.ndarray:
    """Features active at observation n and nowhere else."""
    return numpy.flatnonzero(state.S[:, n] & (state.S.sum(axis=1) == 1))


def _residue_without(
    state: LatentState, data: RegressionDataset, n: int, features: numpy.ndarray
) -> numpy.ndarray:
    """y_n - Q (s_n ⊙ z_n) with the given features switched off."""
    weights = numpy.where(state.S[:, n], state.Z[:, n], 0.0)
    weights[features] = 0.0
    return data.Y[:, n] - state.Q @ weights


def birth_acceptance_log_ratio(  # pylint: disable=too-many-arguments
    q_new: numpy.ndarray,
    p_new: numpy.ndarray,
    psi_z_new: numpy.ndarray,
    n: int,
    state: LatentState,
    data: RegressionDataset,
    temperature: float,
    strategy: ProposalStrategy,
) -> float:
    """
    log r = penalty + log N_r - log D_r with

        N_r = N(y_n | Q'P'x_n + residue, Ψ_y + Q' Ψ'_z Q'^T)
        D_r = N(y_n | Q_A P_A x_n + residue, Ψ_y + Q_A Ψ_z(A) Q_A^T)

    where A are the current singletons at n (often none, leaving
    N(y_n | residue, Ψ_y)) and the residue excludes them. The penalty is
    -κ_n/T for simulated annealing and 0 otherwise.
    """
    kappa = q_new.shape[1]
    singles = singleton_features(state, n)
    if kappa == 0 and singles.size == 0:
        raise ContractViolation("A move must propose or retire at least one feature")
    x_n = data.X[:, n]
    residue = _residue_without(state, data, n, singles)
    log_numerator = low_rank_gaussian_logpdf(
        residue - q_new @ (p_new @ x_n), state.psi_y, q_new, psi_z_new
    )
    q_old = state.Q[:, singles]
    log_denominator = low_rank_gaussian_logpdf(
        residue - q_old @ (state.P[singles] @ x_n),
        state.psi_y,
        q_old,
        state.psi_z[singles],
    )
    penalty = 0.0
    if strategy.kind == ProposalKind.SIMULATED_ANNEALING:
        penalty = -kappa / temperature
    return penalty + log_numerator - log_denominator


def sample_new_latents(  # pylint: disable=too-many-arguments
    q_new: numpy.ndarray,
    p_new: numpy.ndarray,
    psi_z_new: numpy.ndarray,
    residue: numpy.ndarray,
    x_n: numpy.ndarray,
    psi_y: numpy.ndarray,
    rng: numpy.random.Generator,
) -> numpy.ndarray:
    """
    Joint conditional draw of the κ_n new weights at one observation:
    precision diag(1/Ψ'_z) + Q'^T Ψ_y^{-1} Q', linear term
    Q'^T Ψ_y^{-1} residue + P'x_n / Ψ'_z.
    """
    weighted = q_new / psi_y[:, None]
    precision = numpy.diag(1.0 / psi_z_new) + q_new.T @ weighted
    linear = weighted.T @ residue + (p_new @ x_n) / psi_z_new
    draw, _mean = sample_from_precision(precision, linear, rng)
    return draw


def birth_move(  # pylint: disable=too-many-arguments,too-many-locals
    n: int,
    state: LatentState,
    data: RegressionDataset,
    hp: Hyperparams,
    strategy: ProposalStrategy,
    temperature: float,
    rng: numpy.random.Generator,
) -> BirthOutcome:
    """
    Propose κ_n new features at observation n in place of its singletons.
    On acceptance the singletons are switched off (the caller prunes them),
    the new rows are appended active only at n and their weights drawn from
    the joint conditional. On rejection the state is untouched.
    """
    proposal = propose_kappa(strategy, state.alpha, data.N, rng)
    if strategy.kind == ProposalKind.ZERO:
        return BirthOutcome()
    singles = singleton_features(state, n)
    kappa = proposal.kappa
    if kappa == 0 and singles.size == 0:
        return BirthOutcome()
    psi_q_new = sample_inverse_gamma(hp.c, hp.d, rng, size=kappa)
    psi_p_new = sample_inverse_gamma(hp.c, hp.d, rng, size=kappa)
    if hp.noise_mode == NoiseMode.ISOTROPIC and state.K > 0:
        psi_z_new = numpy.full(kappa, state.psi_z[0])
    elif hp.noise_mode == NoiseMode.ISOTROPIC:
        psi_z_new = numpy.full(kappa, float(sample_inverse_gamma(hp.a, hp.b, rng)))
    else:
        psi_z_new = sample_inverse_gamma(hp.a, hp.b, rng, size=kappa)
    q_new = rng.standard_normal((data.q, kappa)) * numpy.sqrt(psi_q_new)[None, :]
    p_new = rng.standard_normal((kappa, data.p)) * numpy.sqrt(psi_p_new)[:, None]
    log_ratio = birth_acceptance_log_ratio(
        q_new, p_new, psi_z_new, n, state, data, temperature, strategy
    )
    if rng.random() >= math.exp(min(0.0, log_ratio)):
        return BirthOutcome(proposed=kappa, log_ratio=log_ratio)

    residue = _residue_without(state, data, n, singles)
    state.S[singles, n] = False
    mask = numpy.zeros((kappa, data.N), dtype=bool)
    latent = numpy.zeros((kappa, data.N))
    if kappa:
        mask[:, n] = True
        latent[:, n] = sample_new_latents(
            q_new, p_new, psi_z_new, residue, data.X[:, n], state.psi_y, rng
        )
    state.append_features(mask, latent, q_new, p_new, psi_z_new, psi_q_new, psi_p_new)
    logger.debug(
        "Observation %d: accepted %d new features retiring %d (log r=%.3f)",
        n,
        kappa,
        singles.size,
        log_ratio,
    )
    return BirthOutcome(
        proposed=kappa,
        accepted=True,
        born=kappa,
        retired=int(singles.size),
        log_ratio=log_ratio,
    )
