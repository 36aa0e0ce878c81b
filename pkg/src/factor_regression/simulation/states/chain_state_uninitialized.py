"""This module contains the ChainStateUninitialized class."""

import logging

from factor_regression.baselines import init_cfr_state
from factor_regression.errors import FactorRegressionError
from factor_regression.model import init_state
from factor_regression.simulation import states
from factor_regression.simulation.config import ModelKind

from factor_regression.simulation.models import (  # isort: skip
    ChainResult,
    ChainResultStatus,
)

logger = logging.getLogger(__name__)


class ChainStateUninitialized(states.ChainBaseState):
    """
    The Uninitialized state is the initial state of the chain. A fresh chain
    draws its starting state here; a resumed one already has it.
    """

    def fail(self, message: str) -> None:
        """Record a failure and move to the error state."""
        self.context.provisional_result = ChainResult(
            status=ChainResultStatus.FAILURE,
            message=message,
            attributes={"chain": self.context.index},
        )
        self.context.transition_to(states.ChainStateError())

    def handle_process(self) -> None:
        """This is where we initialize the chain."""
        logger.debug("Chain %d is initializing.", self.context.index)
        model = self.context.config.model
        if model.kind == ModelKind.FRR:
            self.fail("FRR is fitted directly and has no chain.")
            return
        if self.context.iteration > self.context.target:
            self.fail("The chain is already past its target iteration.")
            return

        try:
            if self.context.state is None:
                if model.kind == ModelKind.CFR:
                    self.context.state = init_cfr_state(
                        self.context.data, model.k_fixed, model.hp, self.context.rng
                    )
                else:
                    self.context.state = init_state(
                        self.context.data, model.hp, model.k_init, self.context.rng
                    )
            self.context.state.check(self.context.data)
        except FactorRegressionError as err:
            self.fail(f"Initialization failed: {err}")
            return

        self.context.transition_to(states.ChainStateSampling())
