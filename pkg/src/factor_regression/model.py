"""
Provides the conditional factor regression model: hyperparameters, the
sampler state, and the quantities every sampler shares (initialization,
residuals, joint likelihood and prediction).

    Y = Q (S ⊙ Z) + E_y,    S ⊙ Z = P X + E_z

Observations are columns throughout: X is p×N, Y is q×N, S and Z are K×N.
"""

import copy
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy

from pydantic import (  # pylint: disable=no-name-in-module # isort: skip
    BaseModel,
    Field,
    validator,
)

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import ContractViolation, NumericalError, StructuralError
from factor_regression.gaussian import LOG_2PI, sample_inverse_gamma

logger = logging.getLogger(__name__)


class NoiseMode(str, Enum):
    """Whether Ψ_y and Ψ_z have one entry per dimension or one shared value."""

    ISOTROPIC = "isotropic"
    DIAGONAL = "diagonal"


class AlphaMode(str, Enum):
    """Whether the IBP strength is held fixed or resampled every sweep."""

    FIXED = "fixed"
    SAMPLED = "sampled"


class Hyperparams(BaseModel):
    """
    Prior constants. Ψ_y and Ψ_z are IG(a, b); Ψ_q and Ψ_p are IG(c, d); α is
    Gamma(g, h). Gamma and inverse-Gamma use the shape/rate convention.
    """

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    a: float = Field(default=2.0, description="Noise variance shape")
    b: float = Field(default=1.0, description="Noise variance rate")
    c: float = Field(default=2.0, description="Load variance shape")
    d: float = Field(default=1.0, description="Load variance rate")
    g: float = Field(default=1.0, description="IBP strength shape")
    h: float = Field(default=1.0, description="IBP strength rate")
    noise_mode: NoiseMode = NoiseMode.DIAGONAL
    alpha_mode: AlphaMode = AlphaMode.SAMPLED
    alpha_value: float = Field(
        default=1.0,
        description="α used when alpha_mode is fixed",
    )

    @validator("a", "b", "c", "d", "g", "h", "alpha_value")
    def _validate_positive(cls, value: float) -> float:  # pylint: disable=no-self-argument
        """All prior constants must be strictly positive."""
        if not value > 0:
            raise ValueError("Prior constants must be strictly positive")
        return value


@dataclass(eq=False)
class LatentState:  # pylint: disable=too-many-instance-attributes
    """
    One full sampler state. S is the K×N binary mask, Z the K×N latent
    weights (entries where S is 0 are kept but carry no meaning), Q the q×K
    response loads, P the K×p input loads. psi_* are the diagonal variances
    and alpha the IBP strength.
    """

    S: numpy.ndarray
    Z: numpy.ndarray
    Q: numpy.ndarray
    P: numpy.ndarray
    psi_y: numpy.ndarray
    psi_z: numpy.ndarray
    psi_q: numpy.ndarray
    psi_p: numpy.ndarray
    alpha: float

    @property
    def K(self) -> int:  # pylint: disable=invalid-name
        """Number of active features."""
        return self.S.shape[0]

    def masked(self) -> numpy.ndarray:
        """The effective latent code S ⊙ Z."""
        return numpy.where(self.S, self.Z, 0.0)

    def feature_counts(self) -> numpy.ndarray:
        """m_k, the number of observations each feature is active in."""
        return self.S.sum(axis=1).astype(int)

    def copy(self) -> "LatentState":
        """A deep copy."""
        return copy.deepcopy(self)

    def remove_features(self, features: Sequence[int]) -> None:
        """Drop the given feature rows everywhere they appear."""
        keep = numpy.setdiff1d(numpy.arange(self.K), numpy.asarray(features, dtype=int))
        self.S = self.S[keep]
        self.Z = self.Z[keep]
        self.Q = self.Q[:, keep]
        self.P = self.P[keep]
        self.psi_z = self.psi_z[keep]
        self.psi_q = self.psi_q[keep]
        self.psi_p = self.psi_p[keep]

    def append_features(  # pylint: disable=too-many-arguments
        self,
        S: numpy.ndarray,
        Z: numpy.ndarray,
        Q: numpy.ndarray,
        P: numpy.ndarray,
        psi_z: numpy.ndarray,
        psi_q: numpy.ndarray,
        psi_p: numpy.ndarray,
    ) -> None:
        """Append new feature rows (and the matching Q columns)."""
        self.S = numpy.vstack([self.S, S.astype(bool)])
        self.Z = numpy.vstack([self.Z, Z])
        self.Q = numpy.hstack([self.Q, Q])
        self.P = numpy.vstack([self.P, P])
        self.psi_z = numpy.concatenate([self.psi_z, psi_z])
        self.psi_q = numpy.concatenate([self.psi_q, psi_q])
        self.psi_p = numpy.concatenate([self.psi_p, psi_p])

    def prune_dead_features(self) -> int:
        """Remove features with m_k = 0. Returns how many were removed."""
        dead = numpy.flatnonzero(~self.S.any(axis=1))
        if dead.size:
            self.remove_features(dead)
        return int(dead.size)

    def check(self, data: RegressionDataset, allow_dead: bool = False) -> None:
        """Raise if the state does not fit the data or breaks an invariant."""
        k = self.K
        expected = {
            "S": (k, data.N),
            "Z": (k, data.N),
            "Q": (data.q, k),
            "P": (k, data.p),
            "psi_y": (data.q,),
            "psi_z": (k,),
            "psi_q": (k,),
            "psi_p": (k,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise StructuralError(f"{name} has shape {actual}, expected {shape}")
        for name in ("psi_y", "psi_z", "psi_q", "psi_p"):
            if not numpy.all(getattr(self, name) > 0):
                raise ContractViolation(f"{name} must be strictly positive")
        if not self.alpha > 0:
            raise ContractViolation("alpha must be strictly positive")
        if not allow_dead and k and not numpy.all(self.S.any(axis=1)):
            raise ContractViolation("S has a feature that is active nowhere")

    def equals(self, other: "LatentState") -> bool:
        """Bit-for-bit equality of every field."""
        return all(
            numpy.array_equal(getattr(self, name), getattr(other, name))
            for name in ("S", "Z", "Q", "P", "psi_y", "psi_z", "psi_q", "psi_p")
        ) and self.alpha == other.alpha


class LatentResidual(NamedTuple):
    """E_z with the entries that carry no likelihood flagged."""

    values: numpy.ndarray
    excluded: numpy.ndarray


def _draw_noise_variances(
    size: int, hp: Hyperparams, rng: numpy.random.Generator
) -> numpy.ndarray:
    if hp.noise_mode == NoiseMode.ISOTROPIC:
        return numpy.full(size, sample_inverse_gamma(hp.a, hp.b, rng))
    return sample_inverse_gamma(hp.a, hp.b, rng, size=size)


def init_state(
    data: RegressionDataset,
    hp: Hyperparams,
    k_init: int,
    rng: numpy.random.Generator,
    dense_mask: bool = False,
) -> LatentState:
    """
    Draw a starting state. S is Bernoulli(0.5) on k_init rows with dead rows
    pruned (all ones when dense_mask is set, as the fixed-K model needs);
    every other unknown comes from its prior.
    """
    if k_init < 0:
        raise ContractViolation("k_init must be zero or more")
    if data.X.shape[1] != data.Y.shape[1]:
        raise StructuralError("X and Y must have the same number of columns")
    if hp.alpha_mode == AlphaMode.SAMPLED:
        alpha = float(rng.gamma(hp.g, 1.0 / hp.h))
    else:
        alpha = float(hp.alpha_value)
    psi_y = _draw_noise_variances(data.q, hp, rng)
    if dense_mask:
        mask = numpy.ones((k_init, data.N), dtype=bool)
    else:
        mask = rng.random((k_init, data.N)) < 0.5
        mask = mask[mask.any(axis=1)]
    k = mask.shape[0]
    psi_z = _draw_noise_variances(k, hp, rng)
    psi_q = sample_inverse_gamma(hp.c, hp.d, rng, size=k)
    psi_p = sample_inverse_gamma(hp.c, hp.d, rng, size=k)
    loads_q = rng.standard_normal((data.q, k)) * numpy.sqrt(psi_q)[None, :]
    loads_p = rng.standard_normal((k, data.p)) * numpy.sqrt(psi_p)[:, None]
    latent = loads_p @ data.X + rng.standard_normal((k, data.N)) * numpy.sqrt(psi_z)[
        :, None
    ]
    state = LatentState(
        S=mask,
        Z=latent,
        Q=loads_q,
        P=loads_p,
        psi_y=psi_y,
        psi_z=psi_z,
        psi_q=psi_q,
        psi_p=psi_p,
        alpha=alpha,
    )
    logger.debug("Initialized state with K=%d (k_init=%d)", k, k_init)
    return state


def residual_y(state: LatentState, data: RegressionDataset) -> numpy.ndarray:
    """E_y = Y - Q (S ⊙ Z), q×N."""
    return data.Y - state.Q @ state.masked()


def residual_z(state: LatentState, data: RegressionDataset) -> LatentResidual:
    """
    E_z = S ⊙ Z - P X, K×N. Entries where S is 0 are reported as 0 and
    flagged as excluded.
    """
    excluded = ~state.S
    values = numpy.where(excluded, 0.0, state.masked() - state.P @ data.X)
    return LatentResidual(values=values, excluded=excluded)


def joint_log_likelihood(state: LatentState, data: RegressionDataset) -> float:
    """
    Σ_n log N(y_n | Q(s_n⊙z_n), Ψ_y) + Σ_{k,n: s_kn=1} log N(z_kn | p_k x_n, Ψ_z(k))
    over the observed columns.
    """
    columns = data.observed_columns
    e_y = residual_y(state, data)[:, columns]
    y_terms = -0.5 * (
        data.q * LOG_2PI
        + numpy.sum(numpy.log(state.psi_y))
        + numpy.sum(e_y * e_y / state.psi_y[:, None], axis=0)
    )
    e_z = residual_z(state, data)
    active = ~e_z.excluded[:, columns]
    z_values = e_z.values[:, columns]
    z_entries = -0.5 * (
        LOG_2PI
        + numpy.log(state.psi_z)[:, None]
        + z_values * z_values / state.psi_z[:, None]
    )
    z_terms = numpy.sum(numpy.where(active, z_entries, 0.0), axis=0)
    per_column = y_terms + z_terms
    if not numpy.all(numpy.isfinite(per_column)):
        bad = int(columns[numpy.flatnonzero(~numpy.isfinite(per_column))[0]])
        raise NumericalError("Joint log-likelihood is not finite", index=(bad,))
    return float(numpy.sum(per_column))


def predict(state: LatentState, x: numpy.ndarray) -> numpy.ndarray:
    """
    ŷ = Q P x. x may be a length-p vector or a p×M matrix of inputs. The
    mask is not applied: a new observation has no sampled mask.
    """
    return state.Q @ (state.P @ numpy.asarray(x, dtype=float))


def predict_posterior_mean(
    states: Sequence[LatentState], x: numpy.ndarray
) -> numpy.ndarray:
    """Average of Q P x over several retained states."""
    if not states:
        raise ContractViolation("Posterior-mean prediction needs at least one state")
    return numpy.mean([predict(state, x) for state in states], axis=0)
