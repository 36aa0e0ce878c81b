"""This module contains the ChainStateError class."""

import logging

from factor_regression.simulation import states

from factor_regression.simulation.models import (  # isort: skip
    ChainResult,
    ChainResultStatus,
)

logger = logging.getLogger(__name__)


class ChainStateError(states.ChainBaseState):
    """
    The Error state is the state of the chain when an error has occurred.
    """

    def handle_process(self) -> None:
        logger.debug("Chain %d has encountered an error.", self.context.index)
        self.context.result = self.context.provisional_result or ChainResult(
            status=ChainResultStatus.FAILURE,
            message="Chain failed without saying why.",
        )
