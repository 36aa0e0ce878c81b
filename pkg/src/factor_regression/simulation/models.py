"""This module contains the models used by the simulation package."""

from enum import Enum
from typing import Optional

from pydantic import BaseModel  # pylint: disable=no-name-in-module


class ChainResultStatus(str, Enum):
    """The status of a chain result."""

    SUCCESS = "success"
    FAILURE = "failure"


class ChainResult(BaseModel):  # pylint: disable=too-few-public-methods
    """The result of running one chain."""

    status: ChainResultStatus
    message: Optional[str] = None
    attributes: Optional[dict] = None
