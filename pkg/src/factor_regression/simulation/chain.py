"""
One MCMC chain, run as a small state machine
(see https://refactoring.guru/design-patterns/state). A chain is
initialized, samples one iteration per step until it reaches its target,
writes its checkpoint and finishes in a successful or an error state.
"""

import logging
from collections import deque
from pathlib import Path
from typing import Callable, Deque, Optional

import numpy

from factor_regression.dataset import RegressionDataset
from factor_regression.event import Event
from factor_regression.model import LatentState
from factor_regression.observer import Observable
from factor_regression.simulation.checkpoint import ChainCheckpoint, save_checkpoint
from factor_regression.simulation.config import RunConfig
from factor_regression.simulation.models import ChainResult, ChainResultStatus
from factor_regression.simulation.streams import chain_stream

from factor_regression.simulation.states import (  # isort: skip
    ChainBaseState,
    ChainStateUninitialized,
)

logger = logging.getLogger(__name__)


class Chain(Observable):
    """
    A single chain of a run. It maintains a context as self.context and a
    result as self.result. The result is None until the chain is complete.
    To complete the chain, call self.run().
    """

    def __init__(  # pylint: disable=too-many-arguments
        self,
        config: RunConfig,
        index: int,
        data: RegressionDataset,
        test: Optional[RegressionDataset],
        checkpoint_path: Path,
    ) -> None:
        super().__init__()
        self.context = ChainContext(
            config=config,
            index=index,
            data=data,
            test=test,
            checkpoint_path=Path(checkpoint_path),
            publish=self.notify_observers,
        )

    @classmethod
    def from_checkpoint(  # pylint: disable=too-many-arguments
        cls,
        config: RunConfig,
        checkpoint: ChainCheckpoint,
        data: RegressionDataset,
        test: Optional[RegressionDataset],
        checkpoint_path: Path,
        extra_iterations: int,
    ) -> "Chain":
        """A chain that carries on from a checkpoint for extra_iterations more."""
        chain = cls(config, checkpoint.chain, data, test, checkpoint_path)
        context = chain.context
        context.state = checkpoint.state
        context.working = data.with_responses(checkpoint.working_Y)
        context.rng.bit_generator.state = checkpoint.rng_state
        context.iteration = checkpoint.iteration
        context.target = checkpoint.iteration + extra_iterations
        context.tail.extend(checkpoint.tail)
        return chain

    @property
    def result(self) -> Optional[ChainResult]:
        """Return the result of the chain."""
        return self.context.result

    def run(self) -> Optional[ChainResult]:
        """Run the chain to its target iteration."""
        self.notify_observers(
            Event(
                tag="chain_start",
                data={
                    "chain": self.context.index,
                    "model": self.context.config.model.name,
                    "iteration": self.context.iteration,
                    "target": self.context.target,
                },
            )
        )
        self.context.transition_to(ChainStateUninitialized())
        while self.context.result is None:
            self.context.process()
        result = self.context.result
        if result.status == ChainResultStatus.SUCCESS:
            self.notify_observers(
                Event(tag="chain_end", data={"chain": self.context.index, "result": result})
            )
        else:
            self.notify_observers(
                Event(
                    tag="chain_error",
                    data={"chain": self.context.index, "message": result.message},
                )
            )
        return result


class ChainContext:  # pylint: disable=too-many-instance-attributes
    """
    The ChainContext holds everything a chain works on and delegates each
    step to its current state.
    """

    def __init__(  # pylint: disable=too-many-arguments
        self,
        config: RunConfig,
        index: int,
        data: RegressionDataset,
        test: Optional[RegressionDataset],
        checkpoint_path: Path,
        publish: Callable[[Event], None],
    ) -> None:
        self.config = config
        self.index = index
        self.data = data
        self.test = test
        self.checkpoint_path = checkpoint_path
        self.publish = publish
        self.rng = chain_stream(config.seed, index)
        self.state: Optional[LatentState] = None
        # Training responses with the missing columns at their latest draws.
        self.working: RegressionDataset = data
        self.iteration = 0
        self.target = config.iterations
        self.tail: Deque[LatentState] = deque(maxlen=config.retain)
        self.result: Optional[ChainResult] = None
        # What we think the result is until a final state makes it official.
        self.provisional_result: Optional[ChainResult] = None
        self._state: Optional[ChainBaseState] = None

    def transition_to(self, state: ChainBaseState):
        """
        The Context allows changing the State object at runtime.
        """
        self._state = state
        self._state.context = self

    def process(self):
        """
        The Context delegates part of its behavior to the current State object.
        """
        self._state.handle_process()

    def checkpoint(self) -> ChainCheckpoint:
        """Freeze the chain as it stands."""
        return ChainCheckpoint(
            model=self.config.model.name,
            chain=self.index,
            iteration=self.iteration,
            state=self.state.copy(),
            working_Y=numpy.array(self.working.Y),
            rng_state=self.rng.bit_generator.state,
            tail=list(self.tail),
        )

    def write_checkpoint(self) -> None:
        """Write the checkpoint file."""
        save_checkpoint(self.checkpoint_path, self.checkpoint())
