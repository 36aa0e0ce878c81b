"""
Run configuration. A RunConfig describes one model on one dataset; a
RosterConfig shares the data and chain settings across a list of models and
expands into one RunConfig per model. Both are read from JSON files.
"""

import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

from pydantic import (  # pylint: disable=no-name-in-module # isort: skip
    BaseModel,
    Field,
    ValidationError,
    root_validator,
    validator,
)

from factor_regression.errors import ConfigError
from factor_regression.evaluation import PredictionMode
from factor_regression.model import Hyperparams
from factor_regression.proposals import AnnealSchedule, ProposalStrategy
from factor_regression.synth import SplitScheme, SynthConfig

logger = logging.getLogger(__name__)

OUTPUT_ENV_VAR = "FACTOR_REGRESSION_OUT"
DEFAULT_OUTPUT_DIR = "runs"


class ModelKind(str, Enum):
    """The three model families."""

    FRR = "frr"
    CFR = "cfr"
    NCFR = "ncfr"


class ModelSpec(BaseModel):
    """
    One named model. k_fixed is used by cfr only; ridge by frr only; the
    proposal strategy, anneal schedule and k_init by ncfr only.
    """

    name: str = Field(description="Name of the model; also its output directory")
    kind: ModelKind
    k_fixed: Optional[int] = Field(default=None, description="K of the fixed-K model")
    ridge: Optional[float] = Field(
        default=None, description="FRR ridge; None picks 1e-6 trace(X X^T)/p"
    )
    k_init: int = Field(default=10, description="Mask rows drawn at initialization")
    hp: Hyperparams = Field(default_factory=Hyperparams)
    strategy: ProposalStrategy = Field(default_factory=ProposalStrategy)
    schedule: AnnealSchedule = Field(default_factory=AnnealSchedule)

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    @validator("name")
    def _validate_name(cls, value: str) -> str:  # pylint: disable=no-self-argument
        """Names become directory names."""
        if not value or any(char in value for char in "/\\") or value.startswith("."):
            raise ValueError("name must be a plain directory name")
        return value

    @validator("k_init")
    def _validate_k_init(cls, value: int) -> int:  # pylint: disable=no-self-argument
        """An empty start is allowed."""
        if value < 0:
            raise ValueError("k_init must be zero or more")
        return value

    @root_validator(skip_on_failure=True)
    def _validate_kind(cls, values: dict):  # pylint: disable=no-self-argument
        """The fixed-K model needs its K."""
        kind = values.get("kind")
        k_fixed = values.get("k_fixed")
        if kind == ModelKind.CFR and (k_fixed is None or k_fixed < 1):
            raise ValueError("cfr models need k_fixed >= 1")
        ridge = values.get("ridge")
        if ridge is not None and ridge < 0:
            raise ValueError("ridge must be zero or more")
        return values


class RunConfig(BaseModel):
    """
    One model run. Exactly one of synth and dataset_path gives the data. The
    last retain states of each chain are kept; burn_in + retain may not
    exceed iterations.
    """

    model: ModelSpec
    synth: Optional[SynthConfig] = None
    dataset_path: Optional[str] = None
    scheme: SplitScheme = SplitScheme.HOLDOUT
    test_size: int = Field(default=100, description="Observations held out for testing")
    iterations: int = Field(default=2000, description="MCMC iterations per chain")
    burn_in: int = Field(default=0, description="Iterations never retained")
    retain: int = Field(default=100, description="Retained tail length")
    seed: int = Field(default=0, description="Root seed of every random stream")
    output_dir: str = DEFAULT_OUTPUT_DIR
    chains: int = 1
    prediction: PredictionMode = PredictionMode.BEST_SAMPLE
    checkpoint_every: int = Field(
        default=0, description="Write a checkpoint every this many iterations; 0 = end only"
    )

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    @validator("iterations", "retain", "chains")
    def _validate_positive(cls, value: int) -> int:  # pylint: disable=no-self-argument
        """Counts and sizes start at 1."""
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @validator("test_size")
    def _validate_test_size(cls, value: int) -> int:  # pylint: disable=no-self-argument
        """At least two test columns."""
        if value < 2:
            raise ValueError("must be at least 2")
        return value

    @validator("burn_in", "seed", "checkpoint_every")
    def _validate_nonnegative(cls, value: int) -> int:  # pylint: disable=no-self-argument
        """Offsets and seeds may be zero."""
        if value < 0:
            raise ValueError("must be zero or more")
        return value

    @root_validator(skip_on_failure=True)
    def _validate_run(cls, values: dict):  # pylint: disable=no-self-argument
        """One data source, and room for the retained tail."""
        if (values.get("synth") is None) == (values.get("dataset_path") is None):
            raise ValueError("exactly one of synth and dataset_path must be set")
        if values["burn_in"] + values["retain"] > values["iterations"]:
            raise ValueError("burn_in + retain must not exceed iterations")
        return values

    @property
    def model_dir(self) -> Path:
        """Directory holding every artifact of this run."""
        return Path(self.output_dir) / self.model.name


class RosterConfig(BaseModel):
    """Shared settings plus the models to run on them."""

    models: List[ModelSpec]
    synth: Optional[SynthConfig] = None
    dataset_path: Optional[str] = None
    scheme: SplitScheme = SplitScheme.HOLDOUT
    test_size: int = 100
    iterations: int = 2000
    burn_in: int = 0
    retain: int = 100
    seed: int = 0
    output_dir: str = DEFAULT_OUTPUT_DIR
    chains: int = 1
    prediction: PredictionMode = PredictionMode.BEST_SAMPLE
    checkpoint_every: int = 0

    class Config:  # pylint: disable=too-few-public-methods
        """Run the validators when a value is assigned."""

        validate_assignment = True

    @validator("models")
    def _validate_models(cls, value: List[ModelSpec]):  # pylint: disable=no-self-argument
        """At least one model, each with its own name."""
        if not value:
            raise ValueError("a roster needs at least one model")
        names = [model.name for model in value]
        if len(set(names)) != len(names):
            raise ValueError("model names must be unique")
        return value

    def runs(self) -> List[RunConfig]:
        """One RunConfig per model, sharing everything else."""
        shared = self.dict(exclude={"models"})
        return [RunConfig(model=model, **shared) for model in self.models]


AnyConfig = Union[RunConfig, RosterConfig]


def _first_key(err: ValidationError) -> str:
    errors = err.errors()
    if not errors:
        return "<config>"
    return ".".join(str(part) for part in errors[0].get("loc", ())) or "<config>"


def parse_config(payload: dict) -> AnyConfig:
    """
    Build a RosterConfig when the tree has a models list and a RunConfig
    otherwise. Validation problems surface as ConfigError naming the first
    offending key.
    """
    if not isinstance(payload, dict):
        raise ConfigError("<config>", "the config must be a key-value tree")
    try:
        if "models" in payload:
            roster = RosterConfig.parse_obj(payload)
            roster.runs()
            return roster
        return RunConfig.parse_obj(payload)
    except ValidationError as err:
        key = _first_key(err)
        raise ConfigError(key, err.errors()[0].get("msg", str(err))) from err


def load_config(path: Path) -> AnyConfig:
    """Read a JSON config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("--config", f"{path} does not exist")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError("--config", f"{path} is not valid JSON: {err}") from err
    return parse_config(payload)


def save_config(path: Path, config: AnyConfig) -> None:
    """Write the effective config so that load_config gives it back."""
    payload = json.loads(json.dumps(config.dict(), default=str))
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def apply_overrides(
    config: AnyConfig,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    chains: Optional[int] = None,
) -> AnyConfig:
    """
    Command line values win over the file. Without an explicit output
    directory the FACTOR_REGRESSION_OUT environment variable is used when set.
    """
    updates: dict = {}
    if seed is not None:
        updates["seed"] = seed
    if output_dir is None:
        output_dir = os.environ.get(OUTPUT_ENV_VAR) or None
    if output_dir is not None:
        updates["output_dir"] = str(output_dir)
    if chains is not None:
        updates["chains"] = chains
    if not updates:
        return config
    payload = config.dict()
    payload.update(updates)
    logger.debug("Config overrides: %s", updates)
    return parse_config(json.loads(json.dumps(payload, default=str)))
