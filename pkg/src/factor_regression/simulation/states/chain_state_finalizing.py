"""This module contains the ChainStateFinalizing class."""

import logging

from factor_regression.errors import FactorRegressionError
from factor_regression.simulation import states

from factor_regression.simulation.models import (  # isort: skip
    ChainResult,
    ChainResultStatus,
)

logger = logging.getLogger(__name__)


class ChainStateFinalizing(states.ChainBaseState):
    """
    This state writes the checkpoint that later runs and reports read.
    """

    def handle_process(self) -> None:
        """Finalize the chain."""
        try:
            self.context.write_checkpoint()
        except (OSError, FactorRegressionError) as err:
            self.context.provisional_result = ChainResult(
                status=ChainResultStatus.FAILURE,
                message=f"Could not write the checkpoint: {err}",
                attributes={"chain": self.context.index},
            )
            self.context.transition_to(states.ChainStateError())
            return

        self.context.provisional_result = ChainResult(
            status=ChainResultStatus.SUCCESS,
            message="Chain completed.",
            attributes={
                "chain": self.context.index,
                "iterations": self.context.iteration,
                "k": self.context.state.K,
                "retained": len(self.context.tail),
                "checkpoint": str(self.context.checkpoint_path),
            },
        )
        self.context.transition_to(states.ChainStateSuccessful())
