"""
Observers for chains and experiments. A running chain is an Observable that
publishes events; the observers here turn those events into log lines and
record files.
"""

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import List

from factor_regression.event import Event
from factor_regression.records import append_record

logger = logging.getLogger(__name__)


class Observer(ABC):  # pylint: disable=too-few-public-methods
    """
    Observer class used to observe a chain or an experiment
    """

    @abstractmethod
    def update(self, event: Event):
        """
        Update the observer with the event
        """
        raise NotImplementedError


class Observable(ABC):
    """
    Observable class used to notify observers of events
    """

    def __init__(self):
        self._observers: List[Observer] = []

    def register_observer(self, observer: Observer):
        """
        Register an observer
        """
        self._observers.append(observer)

    def notify_observers(self, event: Event):
        """
        Notify all observers of an event
        """
        for observer in self._observers:
            observer.update(event)

    def unregister_observer(self, observer: Observer):
        """
        Unregister an observer
        """
        self._observers.remove(observer)


class LoggingObserver(Observer):  # pylint: disable=too-few-public-methods
    """
    Writes a log line per event. Per-iteration events go to DEBUG so that a
    long chain does not flood INFO.
    """

    def __init__(self, every: int = 100):
        self.every = max(1, every)

    def update(self, event: Event):
        if event.tag == "chain_iteration":
            record = event.data.get("trace")
            if record is not None and (record.iteration + 1) % self.every == 0:
                logger.info(
                    "chain %s iteration %d: K=%d loglik=%.3f T=%.4g",
                    event.data.get("chain"),
                    record.iteration,
                    record.k,
                    record.joint_log_likelihood,
                    record.temperature,
                )
            return
        if event.tag.endswith("_error"):
            logger.error("%s: %s", event.tag, event.data.get("message"))
            return
        logger.info("%s %s", event.tag, _summary(event.data))


class RecordFileObserver(Observer):  # pylint: disable=too-few-public-methods
    """
    Appends one record per matching event to a JSON-lines file. The record is
    taken from event.data[key] and must be a pydantic model.
    """

    def __init__(self, path: Path, tag: str, key: str, file_format: str):
        self.path = Path(path)
        self.tag = tag
        self.key = key
        self.file_format = file_format

    def update(self, event: Event):
        if event.tag != self.tag:
            return
        append_record(self.path, self.file_format, event.data[self.key])


def _summary(data: dict) -> str:
    return " ".join(
        f"{key}={value}"
        for key, value in data.items()
        if isinstance(value, (int, float, str))
    )
