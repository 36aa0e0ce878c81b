"""
One Gibbs sweep over every unknown of the model. The mask step is collapsed
over the latent weight of the entry being sampled; new features are handed to
the Metropolis-Hastings moves in factor_regression.proposals.

Sweep order: for each observation n, existing features in random order and
then the birth move, pruning dead features after each observation; then all
latent weights, Q column by column, the rows of P, the variances and α.
"""

import logging
import math
import time
from typing import Tuple

import numpy
from pydantic import BaseModel  # pylint: disable=no-name-in-module
from scipy.special import expit

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import ContractViolation
from factor_regression.ibp import harmonic_number, prior_ratio_existing, sample_alpha
from factor_regression.proposals import ProposalKind, ProposalStrategy, birth_move

from factor_regression.gaussian import (  # isort: skip
    low_rank_gaussian_logpdf,
    sample_from_precision,
    sample_inverse_gamma,
)
from factor_regression.model import (  # isort: skip
    AlphaMode,
    Hyperparams,
    LatentState,
    NoiseMode,
    residual_y,
    residual_z,
)

logger = logging.getLogger(__name__)


class SweepReport(BaseModel):  # pylint: disable=too-few-public-methods
    """Counts collected over one sweep."""

    flips_attempted: int = 0
    flips_accepted: int = 0
    births_proposed: int = 0
    births_accepted: int = 0
    features_born: int = 0
    features_died: int = 0
    post_sweep_K: int = 0
    sweep_seconds: float = 0.0


def _weights_without(state: LatentState, n: int, k: int) -> numpy.ndarray:
    weights = numpy.where(state.S[:, n], state.Z[:, n], 0.0)
    weights[k] = 0.0
    return weights


def collapsed_likelihood_active(
    n: int, k: int, state: LatentState, data: RegressionDataset
) -> float:
    """
    log N(y_n | q_k p_k x_n + [Q z_n]_{z_kn=0}, Ψ_y + q_k Ψ_z(k) q_k^T), the
    likelihood of y_n with s_kn = 1 and z_kn integrated out under its prior.
    """
    q_k = state.Q[:, [k]]
    mean = state.Q @ _weights_without(state, n, k) + q_k[:, 0] * float(
        state.P[k] @ data.X[:, n]
    )
    return low_rank_gaussian_logpdf(
        data.Y[:, n] - mean, state.psi_y, q_k, state.psi_z[[k]]
    )


def collapsed_likelihood_inactive(
    n: int, k: int, state: LatentState, data: RegressionDataset
) -> float:
    """log N(y_n | [Q z_n]_{z_kn=0}, Ψ_y), the likelihood of y_n with s_kn = 0."""
    mean = state.Q @ _weights_without(state, n, k)
    return low_rank_gaussian_logpdf(data.Y[:, n] - mean, state.psi_y)


def activation_log_odds(
    n: int, k: int, state: LatentState, data: RegressionDataset
) -> float:
    """log r = log r_l + log r_p for s_kn; ±inf on the prior's boundaries."""
    m_minus = int(state.S[k].sum()) - int(state.S[k, n])
    prior_ratio = prior_ratio_existing(m_minus, data.N)
    if prior_ratio == 0.0:
        return -math.inf
    if math.isinf(prior_ratio):
        return math.inf
    return (
        collapsed_likelihood_active(n, k, state, data)
        - collapsed_likelihood_inactive(n, k, state, data)
        + math.log(prior_ratio)
    )


def sample_mask_entry(
    n: int,
    k: int,
    state: LatentState,
    data: RegressionDataset,
    rng: numpy.random.Generator,
) -> bool:
    """
    Resample s_kn: active with probability r/(r+1). A newly activated entry
    gets its weight from the conditional posterior straight away.
    """
    log_odds = activation_log_odds(n, k, state, data)
    if math.isinf(log_odds):
        active = log_odds > 0
    else:
        active = bool(rng.random() < expit(log_odds))
    was_active = bool(state.S[k, n])
    state.S[k, n] = active
    if active and not was_active:
        state.Z[k, n] = sample_latent_weight(k, n, state, data, rng)
    return active


def latent_weight_moments(
    k: int, n: int, state: LatentState, data: RegressionDataset
) -> Tuple[float, float]:
    """
    Mean and variance of z_kn given everything else:
    Σ = (1/Ψ_z(k) + q_k^T Ψ_y^{-1} q_k)^{-1},
    μ = Σ [q_k^T Ψ_y^{-1} (y_n - [Q z_n]_{z_kn=0}) + p_k x_n / Ψ_z(k)].
    """
    q_k = state.Q[:, k]
    residue = data.Y[:, n] - state.Q @ _weights_without(state, n, k)
    variance = 1.0 / (1.0 / state.psi_z[k] + float(numpy.sum(q_k * q_k / state.psi_y)))
    mean = variance * (
        float(q_k @ (residue / state.psi_y))
        + float(state.P[k] @ data.X[:, n]) / state.psi_z[k]
    )
    return mean, variance


def sample_latent_weight(
    k: int,
    n: int,
    state: LatentState,
    data: RegressionDataset,
    rng: numpy.random.Generator,
) -> float:
    """Draw z_kn from its conditional posterior. s_kn must be active."""
    if not state.S[k, n]:
        raise ContractViolation(f"z_({k},{n}) is only defined when s_({k},{n}) = 1")
    mean, variance = latent_weight_moments(k, n, state, data)
    return float(mean + math.sqrt(variance) * rng.standard_normal())


def resample_latent_weights(
    state: LatentState, data: RegressionDataset, rng: numpy.random.Generator
) -> None:
    """
    Redraw every active z_kn. Feature rows go one after another; within a row
    the observations are conditionally independent and are drawn together.
    """
    weights = state.masked()
    fit = state.Q @ weights
    for k in range(state.K):
        active = numpy.flatnonzero(state.S[k])
        if active.size == 0:
            continue
        q_k = state.Q[:, k]
        residue = data.Y[:, active] - fit[:, active] + numpy.outer(q_k, weights[k, active])
        variance = 1.0 / (1.0 / state.psi_z[k] + float(numpy.sum(q_k * q_k / state.psi_y)))
        mean = variance * (
            (q_k / state.psi_y) @ residue
            + (state.P[k] @ data.X[:, active]) / state.psi_z[k]
        )
        draw = mean + math.sqrt(variance) * rng.standard_normal(active.size)
        fit[:, active] += numpy.outer(q_k, draw - weights[k, active])
        weights[k, active] = draw
        state.Z[k, active] = draw


def q_entry_moments(
    i: int,
    k: int,
    state: LatentState,
    data: RegressionDataset,
) -> Tuple[float, float]:
    """
    Mean and variance of q_k(i) given everything else, with z̃_k the masked
    row k of S ⊙ Z:
    Σ = Ψ_q(k) Ψ_y(i) / (Ψ_y(i) + Ψ_q(k) z̃_k z̃_k^T),
    μ = Ψ_q(k) (y_i - [QZ]_{q_ik=0}) z̃_k^T / (Ψ_y(i) + Ψ_q(k) z̃_k z̃_k^T).
    """
    weights = state.masked()
    row = weights[k]
    residue = data.Y[i] - state.Q[i] @ weights + state.Q[i, k] * row
    denominator = state.psi_y[i] + state.psi_q[k] * float(row @ row)
    variance = state.psi_q[k] * state.psi_y[i] / denominator
    mean = state.psi_q[k] * float(residue @ row) / denominator
    return mean, variance


def sample_q_entry(  # pylint: disable=too-many-arguments
    i: int,
    k: int,
    state: LatentState,
    data: RegressionDataset,
    rng: numpy.random.Generator,
) -> float:
    """Draw q_k(i) from its conditional posterior and store it."""
    mean, variance = q_entry_moments(i, k, state, data)
    value = float(mean + math.sqrt(variance) * rng.standard_normal())
    state.Q[i, k] = value
    return value


def resample_loads_q(
    state: LatentState, data: RegressionDataset, rng: numpy.random.Generator
) -> None:
    """
    Redraw Q element by element. Columns go one after another; the entries
    of a column sit in different response rows and are drawn together.
    """
    weights = state.masked()
    fit = state.Q @ weights
    for k in range(state.K):
        row = weights[k]
        old = state.Q[:, k].copy()
        residue = data.Y - fit + numpy.outer(old, row)
        denominator = state.psi_y + state.psi_q[k] * float(row @ row)
        variance = state.psi_q[k] * state.psi_y / denominator
        mean = state.psi_q[k] * (residue @ row) / denominator
        new = mean + numpy.sqrt(variance) * rng.standard_normal(data.q)
        fit += numpy.outer(new - old, row)
        state.Q[:, k] = new


def _p_row_system(
    k: int, state: LatentState, data: RegressionDataset
) -> Tuple[numpy.ndarray, numpy.ndarray]:
    active = numpy.flatnonzero(state.S[k])
    if active.size == 0:
        raise ContractViolation(f"Feature {k} is active nowhere")
    inputs = data.X[:, active]
    precision = numpy.eye(data.p) / state.psi_p[k] + inputs @ inputs.T / state.psi_z[k]
    linear = inputs @ state.Z[k, active] / state.psi_z[k]
    return precision, linear


def p_row_moments(
    k: int, state: LatentState, data: RegressionDataset
) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """
    Posterior mean and precision of p_k using only the columns where
    s_kn = 1: Λ = I/Ψ_p(k) + X_k X_k^T/Ψ_z(k), μ = Λ^{-1} X_k z_k^T/Ψ_z(k).
    """
    precision, linear = _p_row_system(k, state, data)
    return numpy.linalg.solve(precision, linear), precision


def sample_p_row(
    k: int,
    state: LatentState,
    data: RegressionDataset,
    rng: numpy.random.Generator,
) -> numpy.ndarray:
    """Draw p_k from its conjugate Gaussian posterior and store it."""
    precision, linear = _p_row_system(k, state, data)
    draw, _mean = sample_from_precision(precision, linear, rng)
    state.P[k] = draw
    return draw


def sample_variances(
    state: LatentState,
    data: RegressionDataset,
    hp: Hyperparams,
    rng: numpy.random.Generator,
) -> None:
    """
    Conjugate inverse-Gamma updates:
    Ψ_y(i) ~ IG(a + N/2, b + ½ Σ_n E_y(i,n)²),
    Ψ_z(k) ~ IG(a + m_k/2, b + ½ Σ_{n: s_kn=1} E_z(k,n)²),
    Ψ_q(k) ~ IG(c + q/2, d + ½ q_k^T q_k),
    Ψ_p(k) ~ IG(c + p/2, d + ½ p_k p_k^T).
    In isotropic mode Ψ_y and Ψ_z each get one pooled draw.
    """
    e_y = residual_y(state, data)
    squares_y = numpy.sum(e_y * e_y, axis=1)
    if hp.noise_mode == NoiseMode.ISOTROPIC:
        shared = sample_inverse_gamma(
            hp.a + data.q * data.N / 2.0, hp.b + 0.5 * float(squares_y.sum()), rng
        )
        state.psi_y = numpy.full(data.q, float(shared))
    else:
        state.psi_y = sample_inverse_gamma(
            hp.a + data.N / 2.0, hp.b + 0.5 * squares_y, rng, size=data.q
        )

    if state.K:
        counts = state.feature_counts()
        e_z = residual_z(state, data).values
        squares_z = numpy.sum(e_z * e_z, axis=1)
        if hp.noise_mode == NoiseMode.ISOTROPIC:
            shared = sample_inverse_gamma(
                hp.a + counts.sum() / 2.0, hp.b + 0.5 * float(squares_z.sum()), rng
            )
            state.psi_z = numpy.full(state.K, float(shared))
        else:
            state.psi_z = sample_inverse_gamma(
                hp.a + counts / 2.0, hp.b + 0.5 * squares_z, rng, size=state.K
            )
        state.psi_q = sample_inverse_gamma(
            hp.c + data.q / 2.0,
            hp.d + 0.5 * numpy.sum(state.Q * state.Q, axis=0),
            rng,
            size=state.K,
        )
        state.psi_p = sample_inverse_gamma(
            hp.c + data.p / 2.0,
            hp.d + 0.5 * numpy.sum(state.P * state.P, axis=1),
            rng,
            size=state.K,
        )


def update_alpha(
    state: LatentState,
    data: RegressionDataset,
    hp: Hyperparams,
    rng: numpy.random.Generator,
) -> None:
    """Resample α from Gamma(K + g, h + H_N) when it is not held fixed."""
    if hp.alpha_mode == AlphaMode.SAMPLED:
        state.alpha = sample_alpha(state.K, harmonic_number(data.N), hp.g, hp.h, rng)


def impute_missing_responses(
    state: LatentState, data: RegressionDataset, rng: numpy.random.Generator
) -> RegressionDataset:
    """
    Draw every missing y_n from N(Q (s_n ⊙ z_n), Ψ_y). The draws are then
    used as data by the rest of the sweep.
    """
    if not data.missing:
        return data
    columns = list(data.missing)
    responses = numpy.array(data.Y)
    mean = state.Q @ state.masked()[:, columns]
    responses[:, columns] = mean + numpy.sqrt(state.psi_y)[:, None] * rng.standard_normal(
        mean.shape
    )
    return data.with_responses(responses)


def sweep_mask(  # pylint: disable=too-many-arguments
    state: LatentState,
    data: RegressionDataset,
    hp: Hyperparams,
    strategy: ProposalStrategy,
    temperature: float,
    rng: numpy.random.Generator,
    report: SweepReport,
) -> None:
    """
    Observation by observation: existing features, then the birth move, then
    pruning. Singletons belong to the birth move unless the strategy is zero,
    in which case the existing-feature step retires them.
    """
    for n in range(data.N):
        for k in rng.permutation(state.K):
            singleton = state.S[k, n] and state.S[k].sum() == 1
            if singleton and strategy.kind != ProposalKind.ZERO:
                continue
            before = bool(state.S[k, n])
            after = sample_mask_entry(n, int(k), state, data, rng)
            report.flips_attempted += 1
            report.flips_accepted += int(before != after)
        outcome = birth_move(n, state, data, hp, strategy, temperature, rng)
        report.births_proposed += int(outcome.proposed > 0 or outcome.retired > 0)
        report.births_accepted += int(outcome.accepted)
        report.features_born += outcome.born
        report.features_died += state.prune_dead_features()


def gibbs_sweep(  # pylint: disable=too-many-arguments
    state: LatentState,
    data: RegressionDataset,
    hp: Hyperparams,
    strategy: ProposalStrategy,
    temperature: float,
    rng: numpy.random.Generator,
    sample_mask: bool = True,
) -> SweepReport:
    """
    Resample every unknown once. With sample_mask off the mask stays as it
    is and no features are born or pruned, which is the fixed-K model.
    """
    started = time.perf_counter()
    report = SweepReport()
    if sample_mask:
        sweep_mask(state, data, hp, strategy, temperature, rng, report)
    resample_latent_weights(state, data, rng)
    resample_loads_q(state, data, rng)
    for k in range(state.K):
        sample_p_row(k, state, data, rng)
    sample_variances(state, data, hp, rng)
    update_alpha(state, data, hp, rng)
    report.post_sweep_K = state.K
    report.sweep_seconds = time.perf_counter() - started
    logger.debug(
        "Sweep done: K=%d born=%d died=%d flips=%d/%d",
        report.post_sweep_K,
        report.features_born,
        report.features_died,
        report.flips_accepted,
        report.flips_attempted,
    )
    return report

