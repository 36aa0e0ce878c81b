"""This module contains the ChainStateSuccessful class."""

import logging

from factor_regression.simulation import states

from factor_regression.simulation.models import (  # isort: skip
    ChainResult,
    ChainResultStatus,
)

logger = logging.getLogger(__name__)


class ChainStateSuccessful(states.ChainBaseState):
    """
    The Successful state is the final state of the chain.
    """

    def handle_process(self) -> None:
        logger.debug("Chain %d was successful.", self.context.index)
        self.context.result = self.context.provisional_result or ChainResult(
            status=ChainResultStatus.FAILURE,
            message="Chain succeeded without a result.",
        )
