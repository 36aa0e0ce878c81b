"""The base state for the Chain state machine."""

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from factor_regression.simulation.chain import ChainContext  # isort: skip


class ChainBaseState(ABC):
    """
    Every concrete state implements handle_process and keeps a backreference
    to the context so that it can move the context to the next state.
    """

    @property
    def context(
        self,
    ) -> "ChainContext":  # pylint: disable=missing-function-docstring
        """Return the context for this state."""
        return self._context

    @context.setter
    def context(
        self, context: "ChainContext"
    ) -> None:  # pylint: disable=missing-function-docstring
        self._context = context

    @abstractmethod
    def handle_process(self) -> None:
        """Every state sets this."""
        raise NotImplementedError
