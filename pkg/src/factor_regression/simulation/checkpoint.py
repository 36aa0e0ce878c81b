"""
Chain checkpoints. A checkpoint holds everything a chain needs to carry on
exactly where it stopped: the sampler state, the working responses (with the
current imputations), the retained tail and the state of the random stream.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy

from factor_regression.errors import CheckpointError
from factor_regression.model import LatentState

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "factor-regression-checkpoint"
CHECKPOINT_VERSION = 1
STATE_ARRAYS = ("S", "Z", "Q", "P", "psi_y", "psi_z", "psi_q", "psi_p")


@dataclass(eq=False)
class ChainCheckpoint:  # pylint: disable=too-many-instance-attributes
    """A chain frozen after `iteration` completed iterations."""

    model: str
    chain: int
    iteration: int
    state: LatentState
    working_Y: numpy.ndarray  # pylint: disable=invalid-name
    rng_state: dict
    tail: List[LatentState] = field(default_factory=list)


def _state_arrays(prefix: str, state: LatentState) -> Dict[str, numpy.ndarray]:
    arrays = {f"{prefix}{name}": getattr(state, name) for name in STATE_ARRAYS}
    arrays[f"{prefix}alpha"] = numpy.array(state.alpha)
    return arrays


def _read_state(prefix: str, archive) -> LatentState:
    values = {name: numpy.array(archive[f"{prefix}{name}"]) for name in STATE_ARRAYS}
    values["S"] = values["S"].astype(bool)
    return LatentState(alpha=float(archive[f"{prefix}alpha"]), **values)


def save_checkpoint(path: Path, checkpoint: ChainCheckpoint) -> None:
    """Write the checkpoint next to its target and move it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = _state_arrays("state_", checkpoint.state)
    for index, state in enumerate(checkpoint.tail):
        arrays.update(_state_arrays(f"tail_{index}_", state))
    staging = path.with_name(path.name + ".partial")
    with staging.open("wb") as handle:
        numpy.savez(
            handle,
            format=numpy.array(CHECKPOINT_FORMAT),
            version=numpy.array(CHECKPOINT_VERSION),
            model=numpy.array(checkpoint.model),
            chain=numpy.array(checkpoint.chain),
            iteration=numpy.array(checkpoint.iteration),
            rng_state=numpy.array(json.dumps(checkpoint.rng_state)),
            tail_count=numpy.array(len(checkpoint.tail)),
            working_Y=checkpoint.working_Y,
            **arrays,
        )
    os.replace(staging, path)
    logger.debug(
        "Checkpoint of %s chain %d at iteration %d written to %s",
        checkpoint.model,
        checkpoint.chain,
        checkpoint.iteration,
        path,
    )


def load_checkpoint(path: Path) -> ChainCheckpoint:
    """Read a checkpoint, refusing files of another format or version."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        archive = numpy.load(path, allow_pickle=False)
    except (OSError, ValueError) as err:
        raise CheckpointError(f"Checkpoint {path} cannot be read: {err}") from err
    with archive:
        if "format" not in archive.files or str(archive["format"]) != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path} is not a checkpoint")
        version = int(archive["version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path} has checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )
        return ChainCheckpoint(
            model=str(archive["model"]),
            chain=int(archive["chain"]),
            iteration=int(archive["iteration"]),
            state=_read_state("state_", archive),
            working_Y=numpy.array(archive["working_Y"]),
            rng_state=json.loads(str(archive["rng_state"])),
            tail=[
                _read_state(f"tail_{index}_", archive)
                for index in range(int(archive["tail_count"]))
            ],
        )
