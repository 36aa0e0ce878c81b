"""This module contains the states used by the Chain state machine."""

from .chain_base_state import ChainBaseState
from .chain_state_error import ChainStateError
from .chain_state_finalizing import ChainStateFinalizing
from .chain_state_sampling import ChainStateSampling
from .chain_state_successful import ChainStateSuccessful
from .chain_state_uninitialized import ChainStateUninitialized
