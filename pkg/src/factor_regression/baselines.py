"""
Comparison models. Full-rank regression (FRR) is a penalized least-squares
fit of Y = R X. Conditional factor regression (CFR) is the same Gibbs
machinery as the non-parametric model with the mask held at all ones, so K
never changes.
"""

import logging
from typing import List, Optional

import numpy
from scipy import linalg

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import ContractViolation, NumericalError
from factor_regression.gibbs import SweepReport, gibbs_sweep
from factor_regression.model import Hyperparams, LatentState, init_state
from factor_regression.proposals import ProposalKind, ProposalStrategy

logger = logging.getLogger(__name__)

FIXED_MASK_STRATEGY = ProposalStrategy(kind=ProposalKind.ZERO)


def default_ridge(data: RegressionDataset) -> float:
    """1e-6 · trace(X X^T) / p over the observed columns."""
    inputs = data.X[:, data.observed_columns]
    return 1e-6 * float(numpy.sum(inputs * inputs)) / data.p


def fit_frr(data: RegressionDataset, ridge: Optional[float] = None) -> numpy.ndarray:
    """
    R = Y X^T (X X^T + ridge·I)^{-1} over the observed columns. Columns with
    missing responses are left out of the normal equations.
    """
    if ridge is None:
        ridge = default_ridge(data)
    if ridge < 0:
        raise ContractViolation("ridge must be zero or more")
    columns = data.observed_columns
    if columns.size == 0:
        raise ContractViolation("FRR needs at least one observed column")
    inputs = data.X[:, columns]
    responses = data.Y[:, columns]
    gram = inputs @ inputs.T + ridge * numpy.eye(data.p)
    if ridge == 0 and numpy.linalg.matrix_rank(gram) < data.p:
        raise NumericalError("X X^T is singular; use a ridge greater than 0")
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError as err:
        raise NumericalError("X X^T is singular; use a ridge greater than 0") from err
    return linalg.cho_solve(factor, inputs @ responses.T).T


def frr_noise_variances(data: RegressionDataset, regressor: numpy.ndarray) -> numpy.ndarray:
    """Per-dimension residual variance of a full-rank fit on the observed columns."""
    columns = data.observed_columns
    residual = data.Y[:, columns] - regressor @ data.X[:, columns]
    variances = numpy.mean(residual * residual, axis=1)
    return numpy.maximum(variances, numpy.finfo(float).tiny)


def cfr_sweep(
    state: LatentState,
    data: RegressionDataset,
    hp: Hyperparams,
    rng: numpy.random.Generator,
) -> SweepReport:
    """One sweep of the fixed-K model."""
    return gibbs_sweep(
        state, data, hp, FIXED_MASK_STRATEGY, numpy.inf, rng, sample_mask=False
    )


def init_cfr_state(
    data: RegressionDataset,
    k_fixed: int,
    hp: Hyperparams,
    rng: numpy.random.Generator,
) -> LatentState:
    """Prior draw with an all-ones K = k_fixed mask."""
    if k_fixed < 1:
        raise ContractViolation("CFR needs k_fixed >= 1")
    return init_state(data, hp, k_fixed, rng, dense_mask=True)


def fit_cfr(
    data: RegressionDataset,
    k_fixed: int,
    hp: Hyperparams,
    iterations: int,
    rng: numpy.random.Generator,
) -> List[LatentState]:
    """Run a fixed-K chain and return a copy of the state after every sweep."""
    state = init_cfr_state(data, k_fixed, hp, rng)
    chain = []
    for _index in range(iterations):
        cfr_sweep(state, data, hp, rng)
        chain.append(state.copy())
    logger.debug("CFR chain of %d sweeps at K=%d", iterations, k_fixed)
    return chain
