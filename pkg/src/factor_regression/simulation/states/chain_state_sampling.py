"""This module contains the ChainStateSampling class."""

import logging
import math
import time

from factor_regression.baselines import cfr_sweep
from factor_regression.errors import FactorRegressionError
from factor_regression.event import Event
from factor_regression.evaluation import predictive_log_likelihood
from factor_regression.gibbs import gibbs_sweep, impute_missing_responses
from factor_regression.model import joint_log_likelihood
from factor_regression.proposals import temperature_at
from factor_regression.records import TimingRecord, TraceRecord
from factor_regression.simulation import states
from factor_regression.simulation.config import ModelKind

from factor_regression.simulation.models import (  # isort: skip
    ChainResult,
    ChainResultStatus,
)

logger = logging.getLogger(__name__)


class ChainStateSampling(states.ChainBaseState):
    """
    Each call runs one MCMC iteration: impute the missing responses, sweep,
    score, publish the records and retain the state once past burn-in. The
    temperature cools once per iteration.
    """

    def handle_process(self) -> None:
        context = self.context
        if context.iteration >= context.target:
            context.transition_to(states.ChainStateFinalizing())
            return

        try:
            trace, timing = self.step()
        except (FactorRegressionError, ArithmeticError, ValueError) as err:
            self.fail(f"Iteration {context.iteration} failed: {err}")
            return

        context.publish(
            Event(
                tag="chain_iteration",
                data={"chain": context.index, "trace": trace, "timing": timing},
            )
        )
        every = context.config.checkpoint_every
        if every and context.iteration % every == 0 and context.iteration < context.target:
            try:
                context.write_checkpoint()
            except OSError as err:
                self.fail(f"Checkpoint at iteration {context.iteration} failed: {err}")

    def fail(self, message: str) -> None:
        """Record the failure and move to the error state."""
        context = self.context
        logger.debug("Chain %d failed at iteration %d", context.index, context.iteration)
        context.provisional_result = ChainResult(
            status=ChainResultStatus.FAILURE,
            message=message,
            attributes={"chain": context.index, "iteration": context.iteration},
        )
        context.transition_to(states.ChainStateError())

    def step(self):
        """Run one iteration and return its trace and timing records."""
        context = self.context
        model = context.config.model
        iteration = context.iteration
        cpu_started = time.process_time()
        wall_started = time.perf_counter()

        if context.working.missing:
            context.working = impute_missing_responses(
                context.state, context.working, context.rng
            )
        if model.kind == ModelKind.CFR:
            temperature = math.inf
            report = cfr_sweep(context.state, context.working, model.hp, context.rng)
        else:
            temperature = temperature_at(model.schedule, iteration)
            report = gibbs_sweep(
                context.state,
                context.working,
                model.hp,
                model.strategy,
                temperature,
                context.rng,
            )
        timing = TimingRecord(
            iteration=iteration,
            cpu_seconds=time.process_time() - cpu_started,
            wall_seconds=time.perf_counter() - wall_started,
        )

        test_log_likelihood = None
        if context.test is not None:
            test_log_likelihood = predictive_log_likelihood(context.state, context.test)
        trace = TraceRecord(
            iteration=iteration,
            k=context.state.K,
            joint_log_likelihood=joint_log_likelihood(context.state, context.data),
            test_log_likelihood=test_log_likelihood,
            temperature=temperature,
            births_proposed=report.births_proposed,
            births_accepted=report.births_accepted,
            features_born=report.features_born,
            features_died=report.features_died,
        )
        if iteration >= context.config.burn_in:
            context.tail.append(context.state.copy())
        context.iteration += 1
        return trace, timing
