"""
Synthetic data that resembles, without exactly following, the model: X is
standard Gaussian, Z = P X plus Gaussian noise, S is an i.i.d. Bernoulli mask
and Y = Q (S ⊙ Z) plus diagonal Gaussian noise. Also provides the two
train/test schemes.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Tuple

import numpy

from pydantic import (  # pylint: disable=no-name-in-module # isort: skip
    BaseModel,
    Field,
    root_validator,
    validator,
)

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import ContractViolation

logger = logging.getLogger(__name__)

GROUND_TRUTH_FORMAT = "factor-regression-ground-truth"


class SynthConfig(BaseModel):  # pylint: disable=too-few-public-methods
    """Dimensions, sparsity and noise of a synthetic problem."""

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    p: int = Field(default=70, description="Input dimensionality")
    q: int = Field(default=50, description="Response dimensionality")
    k_true: int = Field(default=20, description="Number of generating factors")
    N: int = Field(default=1000, description="Number of observations")
    bernoulli_p: float = Field(default=0.5, description="Mask density")
    noise_y: float = Field(default=0.1, description="Response noise variance")
    noise_z: float = Field(default=0.1, description="Latent noise variance")
    load_scale: float = Field(
        default=1.0,
        description=(
            "Variance of the entries of Q; entries of P get load_scale / p so "
            "that each latent factor has variance close to load_scale"
        ),
    )
    seed: int = Field(default=0, description="Seed of the generating stream")
    identity_loads: bool = Field(
        default=False,
        description="Debug hook forcing Q = P = I (needs k_true = q = p)",
    )

    @validator("p", "q", "k_true", "N")
    def _validate_dimension(cls, value: int) -> int:  # pylint: disable=no-self-argument
        """Dimensions must be at least 1."""
        if value < 1:
            raise ValueError("Dimensions must be at least 1")
        return value

    @validator("bernoulli_p")
    def _validate_density(cls, value: float) -> float:  # pylint: disable=no-self-argument
        """Mask density lies in (0, 1]."""
        if not 0.0 < value <= 1.0:
            raise ValueError("bernoulli_p must lie in (0, 1]")
        return value

    @validator("noise_y", "noise_z", "load_scale")
    def _validate_variance(cls, value: float) -> float:  # pylint: disable=no-self-argument
        """Variances are strictly positive."""
        if not value > 0:
            raise ValueError("Variances must be strictly positive")
        return value

    @root_validator(skip_on_failure=True)
    def _validate_identity(cls, values: dict):  # pylint: disable=no-self-argument
        """Identity loads only make sense for square maps."""
        if values.get("identity_loads") and not (
            values.get("k_true") == values.get("q") == values.get("p")
        ):
            raise ValueError("identity_loads needs k_true = q = p")
        return values


@dataclass(eq=False)
class GroundTruth:  # pylint: disable=too-many-instance-attributes
    """Every random quantity the generator drew."""

    S_true: numpy.ndarray
    Z_true: numpy.ndarray
    Q_true: numpy.ndarray
    P_true: numpy.ndarray
    E_y: numpy.ndarray
    E_z: numpy.ndarray


def generate(cfg: SynthConfig) -> Tuple[RegressionDataset, GroundTruth]:
    """Draw a dataset and its ground truth. Bit-reproducible for a fixed seed."""
    rng = numpy.random.default_rng(cfg.seed)
    inputs = rng.standard_normal((cfg.p, cfg.N))
    loads_p = rng.standard_normal((cfg.k_true, cfg.p)) * numpy.sqrt(cfg.load_scale / cfg.p)
    loads_q = rng.standard_normal((cfg.q, cfg.k_true)) * numpy.sqrt(cfg.load_scale)
    if cfg.identity_loads:
        loads_p = numpy.eye(cfg.p)
        loads_q = numpy.eye(cfg.q)
    noise_z = rng.standard_normal((cfg.k_true, cfg.N)) * numpy.sqrt(cfg.noise_z)
    latent = loads_p @ inputs + noise_z
    mask = rng.random((cfg.k_true, cfg.N)) < cfg.bernoulli_p
    noise_y = rng.standard_normal((cfg.q, cfg.N)) * numpy.sqrt(cfg.noise_y)
    responses = loads_q @ numpy.where(mask, latent, 0.0) + noise_y
    truth = GroundTruth(
        S_true=mask,
        Z_true=latent,
        Q_true=loads_q,
        P_true=loads_p,
        E_y=noise_y,
        E_z=noise_z,
    )
    logger.debug("Generated synthetic data p=%d q=%d N=%d", cfg.p, cfg.q, cfg.N)
    return RegressionDataset(inputs, responses), truth


def save_ground_truth(path: Path, truth: GroundTruth, cfg: SynthConfig) -> None:
    """Write the ground truth beside a dataset, with the generating config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        numpy.savez(
            handle,
            format=numpy.array(GROUND_TRUTH_FORMAT),
            config=numpy.array(json.dumps(cfg.dict(), sort_keys=True)),
            S_true=truth.S_true,
            Z_true=truth.Z_true,
            Q_true=truth.Q_true,
            P_true=truth.P_true,
            E_y=truth.E_y,
            E_z=truth.E_z,
        )


def load_ground_truth(path: Path) -> Tuple[GroundTruth, SynthConfig]:
    """Read a ground-truth sidecar written by save_ground_truth."""
    with numpy.load(Path(path), allow_pickle=False) as archive:
        if str(archive["format"]) != GROUND_TRUTH_FORMAT:
            raise ContractViolation(f"{path} is not a ground-truth file")
        cfg = SynthConfig.parse_obj(json.loads(str(archive["config"])))
        truth = GroundTruth(
            **{
                name: numpy.array(archive[name])
                for name in ("S_true", "Z_true", "Q_true", "P_true", "E_y", "E_z")
            }
        )
    return truth, cfg


class SplitScheme(str, Enum):
    """How test observations are kept away from training."""

    IMPUTE = "impute_100"
    HOLDOUT = "holdout_100"


@dataclass(eq=False)
class DataSplit:
    """Train and test views plus the indices they came from."""

    scheme: SplitScheme
    train: RegressionDataset
    test: RegressionDataset
    train_indices: numpy.ndarray
    test_indices: numpy.ndarray


def split(
    dataset: RegressionDataset,
    scheme: SplitScheme,
    rng: numpy.random.Generator,
    test_size: int = 100,
) -> DataSplit:
    """
    Choose test_size observations at random. impute_100 keeps one training
    dataset with the test responses hidden as missing (zeroed until imputed);
    holdout_100 cuts the test columns out of training altogether.
    """
    if not 1 <= test_size < dataset.N:
        raise ContractViolation(
            f"test_size={test_size} must lie in [1, {dataset.N - 1}]"
        )
    order = rng.permutation(dataset.N)
    test_indices = numpy.sort(order[:test_size])
    train_indices = numpy.sort(order[test_size:])
    test = dataset.subset(test_indices)
    if SplitScheme(scheme) == SplitScheme.IMPUTE:
        responses = numpy.array(dataset.Y)
        responses[:, test_indices] = 0.0
        train = RegressionDataset(dataset.X, responses, test_indices.tolist())
    else:
        train = dataset.subset(train_indices)
    return DataSplit(
        scheme=SplitScheme(scheme),
        train=train,
        test=test,
        train_indices=train_indices,
        test_indices=test_indices,
    )
