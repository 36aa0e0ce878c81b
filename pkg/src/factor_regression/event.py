"""Data model for events"""
import datetime
import uuid

from pydantic import BaseModel, Field  # pylint: disable=no-name-in-module


class Event(BaseModel):  # pylint: disable=too-few-public-methods
    """
    Event object used to pass messages between a running chain (or
    experiment) and its observers. The tag says what happened; data carries
    the payload, usually a record model under a well known key.
    """

    id: uuid.UUID = Field(default_factory=uuid.uuid4)
    ts: datetime.datetime = Field(default_factory=datetime.datetime.now)
    tag: str
    data: dict
