"""Unit tests for chains, checkpoints and experiments."""
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy

from factor_regression.errors import CheckpointError, ConfigError, NumericalError
from factor_regression.event import Event
from factor_regression.evaluation import read_comparison_table, read_metrics_report
from factor_regression.observer import Observer
from factor_regression.records import TRACE_FORMAT, TraceRecord, read_records
from factor_regression.simulation.chain import Chain, ChainContext
from factor_regression.simulation.models import ChainResultStatus
from factor_regression.simulation.streams import chain_stream, split_stream
from tests.factories import tiny_run_payload

from factor_regression.simulation.checkpoint import (  # isort: skip
    CHECKPOINT_VERSION,
    load_checkpoint,
)
from factor_regression.simulation.config import (  # isort: skip
    RosterConfig,
    RunConfig,
    load_config,
    parse_config,
)
from factor_regression.simulation.experiment import (  # isort: skip
    CHECKPOINT_FILE,
    COMPARISON_FILE,
    METRICS_FILE,
    TRACE_FILE,
    chain_dir,
    prepare_data,
    report,
    resume,
    run_chain,
    run_experiment,
    run_roster,
)

NCFR = {"name": "NCFR-SAMH", "kind": "ncfr", "k_init": 2}
CFR = {"name": "CFR2", "kind": "cfr", "k_fixed": 2}
FRR = {"name": "FRR", "kind": "frr"}


class MyObserver(Observer):  # pylint: disable=too-few-public-methods
    """Observer class used for testing."""

    def __init__(self):
        self.events = []

    def update(self, event: Event):
        """Update the observer with the event."""
        self.events.append(event)

    @property
    def tags(self):
        """The tags seen so far, in order."""
        return [event.tag for event in self.events]


def run_config(output_dir: Path, model: dict, **overrides) -> RunConfig:
    """A tiny run config writing under output_dir."""
    config = parse_config(tiny_run_payload(output_dir, model, **overrides))
    assert isinstance(config, RunConfig)
    return config


def read_trace(config: RunConfig, index: int = 0):
    """The trace records of chain index."""
    return read_records(
        chain_dir(config.model_dir, index) / TRACE_FILE, TRACE_FORMAT, TraceRecord
    )


class SimulationTestCase(unittest.TestCase):
    """Gives each test a scratch output directory."""

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with
        self.out = Path(self._directory.name)

    def tearDown(self):
        self._directory.cleanup()


class TestStreams(unittest.TestCase):
    """Unit tests for the seed splitting."""

    def test_streams_are_distinct(self):
        """Split and chain streams of one seed differ from each other."""
        draws = [
            split_stream(4).random(),
            chain_stream(4, 0).random(),
            chain_stream(4, 1).random(),
            chain_stream(5, 0).random(),
        ]
        self.assertEqual(len(set(draws)), 4)

    def test_streams_are_reproducible(self):
        """A stream depends only on the seed and the index."""
        self.assertEqual(chain_stream(4, 1).random(), chain_stream(4, 1).random())


class TestChain(SimulationTestCase):
    """Unit tests for the Chain state machine."""

    def make_chain(self, model: dict, **overrides) -> Chain:
        """A chain of a tiny run with an observer attached."""
        config = run_config(self.out, model, **overrides)
        data = prepare_data(config)
        chain = Chain(config, 0, data.train, data.test, self.out / CHECKPOINT_FILE)
        self.observer = MyObserver()  # pylint: disable=attribute-defined-outside-init
        chain.register_observer(self.observer)
        return chain

    def test_frr_has_no_chain(self):
        """FRR is refused by the chain."""
        chain = self.make_chain(FRR)
        chain.run()
        self.assertEqual(chain.result.status, ChainResultStatus.FAILURE)
        self.assertEqual(chain.result.message, "FRR is fitted directly and has no chain.")
        self.assertEqual(self.observer.tags, ["chain_start", "chain_error"])

    def test_chain_completes(self):
        """Every iteration is published and the checkpoint is written."""
        chain = self.make_chain(NCFR)
        result = chain.run()
        self.assertEqual(result.status, ChainResultStatus.SUCCESS)
        self.assertEqual(result.attributes["iterations"], 6)
        self.assertEqual(result.attributes["retained"], 3)
        self.assertEqual(
            self.observer.tags, ["chain_start"] + ["chain_iteration"] * 6 + ["chain_end"]
        )
        traces = [event.data["trace"] for event in self.observer.events[1:-1]]
        self.assertEqual([trace.iteration for trace in traces], list(range(6)))
        self.assertTrue(all(trace.test_log_likelihood is not None for trace in traces))
        checkpoint = load_checkpoint(self.out / CHECKPOINT_FILE)
        self.assertEqual(checkpoint.iteration, 6)
        self.assertEqual(len(checkpoint.tail), 3)
        self.assertTrue(checkpoint.state.equals(chain.context.state))

    def test_cfr_keeps_k(self):
        """The fixed-K chain never changes K and runs cold."""
        chain = self.make_chain(CFR)
        chain.run()
        traces = [event.data["trace"] for event in self.observer.events[1:-1]]
        self.assertTrue(all(trace.k == 2 for trace in traces))
        self.assertTrue(all(trace.temperature == float("inf") for trace in traces))

    def test_annealing_temperature(self):
        """The temperature follows the schedule, one step per iteration."""
        chain = self.make_chain(dict(NCFR, schedule={"T0": 100.0, "cool": 0.5}))
        chain.run()
        traces = [event.data["trace"] for event in self.observer.events[1:-1]]
        self.assertEqual(
            [trace.temperature for trace in traces], [100.0 * 0.5**i for i in range(6)]
        )

    @mock.patch(
        "factor_regression.simulation.states.chain_state_sampling.gibbs_sweep",
        side_effect=NumericalError("covariance is not positive definite"),
    )
    def test_sweep_error(self, _sweep):
        """A failing sweep ends the chain in the error state."""
        chain = self.make_chain(NCFR)
        result = chain.run()
        self.assertEqual(result.status, ChainResultStatus.FAILURE)
        self.assertEqual(
            result.message, "Iteration 0 failed: covariance is not positive definite"
        )
        self.assertEqual(self.observer.tags[-1], "chain_error")
        self.assertFalse((self.out / CHECKPOINT_FILE).exists())

    @mock.patch.object(ChainContext, "write_checkpoint")
    def test_periodic_checkpoints(self, write_checkpoint):
        """checkpoint_every=2 writes at iterations 2 and 4 plus the final one."""
        chain = self.make_chain(NCFR, checkpoint_every=2)
        chain.run()
        self.assertEqual(write_checkpoint.call_count, 3)

    @mock.patch.object(ChainContext, "write_checkpoint", side_effect=OSError("disk full"))
    def test_periodic_checkpoint_error(self, write_checkpoint):
        """A checkpoint that cannot be written ends the chain in the error state."""
        chain = self.make_chain(NCFR, checkpoint_every=2)
        result = chain.run()
        self.assertEqual(write_checkpoint.call_count, 1)
        self.assertEqual(result.status, ChainResultStatus.FAILURE)
        self.assertEqual(result.message, "Checkpoint at iteration 2 failed: disk full")
        self.assertEqual(self.observer.tags[-1], "chain_error")
        self.assertEqual(self.observer.tags.count("chain_iteration"), 2)


class TestExperiment(SimulationTestCase):
    """Runs of whole models."""

    def test_frr(self):
        """FRR is fitted directly and reported."""
        config = run_config(self.out, FRR)
        metrics = run_experiment(config)
        self.assertEqual(metrics.model, "FRR")
        self.assertEqual(len(metrics.nlse_per_dim), 3)
        self.assertIsNone(metrics.k_mode)
        self.assertEqual(read_metrics_report(config.model_dir / METRICS_FILE), metrics)

    def test_events(self):
        """A single chain run shows its chain events to the experiment's observers."""
        observer = MyObserver()
        run_experiment(run_config(self.out, NCFR), [observer])
        self.assertEqual(observer.tags[0], "experiment_start")
        self.assertEqual(observer.tags[-1], "experiment_end")
        self.assertEqual(observer.tags.count("chain_iteration"), 6)

    def test_same_seed_same_trace(self):
        """Identical config and seed give identical traces."""
        first = run_config(self.out / "a", NCFR)
        second = run_config(self.out / "b", NCFR)
        run_experiment(first)
        run_experiment(second)
        self.assertEqual(read_trace(first), read_trace(second))
        self.assertEqual(
            (first.model_dir / "chain_0" / TRACE_FILE).read_bytes(),
            (second.model_dir / "chain_0" / TRACE_FILE).read_bytes(),
        )

    def test_other_seed_other_trace(self):
        """The seed matters."""
        first = run_config(self.out / "a", NCFR)
        second = run_config(self.out / "b", NCFR, seed=12)
        run_experiment(first)
        run_experiment(second)
        self.assertNotEqual(read_trace(first), read_trace(second))

    def test_failed_chain(self):
        """A chain failure surfaces as a RuntimeError after an experiment_error."""
        observer = MyObserver()
        with mock.patch(
            "factor_regression.simulation.states.chain_state_sampling.gibbs_sweep",
            side_effect=NumericalError("bad"),
        ):
            with self.assertRaises(RuntimeError):
                run_experiment(run_config(self.out, NCFR), [observer])
        self.assertIn("experiment_error", observer.tags)

    def test_zero_strategy_is_bounded(self):
        """K never exceeds k_init when no features are born."""
        zero = dict(NCFR, name="NCFR-ZMH3", k_init=3, strategy={"kind": "zero"})
        config = run_config(self.out, zero)
        run_experiment(config)
        self.assertTrue(all(record.k <= 3 for record in read_trace(config)))

    def test_impute_scheme(self):
        """Under impute the chain sees every column with the test ones hidden."""
        config = run_config(self.out, NCFR, scheme="impute_100")
        data = prepare_data(config)
        self.assertEqual(data.train.N, 30)
        self.assertEqual(len(data.train.missing), 6)
        metrics = run_experiment(config)
        self.assertEqual(len(metrics.train_nlse_per_dim), 3)
        checkpoint = load_checkpoint(chain_dir(config.model_dir, 0) / CHECKPOINT_FILE)
        hidden = list(data.train.missing)
        self.assertFalse(numpy.all(checkpoint.working_Y[:, hidden] == 0.0))

    def test_test_size_too_large(self):
        """The test set must leave training data."""
        config = run_config(self.out, NCFR, test_size=30)
        with self.assertRaises(ConfigError):
            run_experiment(config)

    def test_chains_are_independent(self):
        """Chain 1 of a two-chain run equals chain 1 run on its own."""
        pooled = run_config(self.out / "pooled", NCFR, chains=2)
        metrics = run_experiment(pooled)
        self.assertEqual(metrics.retained, 6)
        alone = run_config(self.out / "alone", NCFR)
        data = prepare_data(alone)
        result = run_chain(alone, 1, data.train, data.test)
        self.assertEqual(result.status, ChainResultStatus.SUCCESS)
        self.assertEqual(read_trace(pooled, 1), read_trace(alone, 1))
        self.assertNotEqual(read_trace(pooled, 0), read_trace(pooled, 1))


class TestResume(SimulationTestCase):
    """Unit tests for resuming from a checkpoint."""

    def test_split_run_matches_straight_run(self):
        """Four iterations plus four more equal eight in one go."""
        straight = run_config(self.out / "straight", NCFR, iterations=8)
        straight_metrics = run_experiment(straight)
        split = run_config(self.out / "split", NCFR, iterations=4)
        run_experiment(split)
        checkpoint = chain_dir(split.model_dir, 0) / CHECKPOINT_FILE
        split_metrics = resume(checkpoint, 4)
        self.assertEqual(read_trace(split), read_trace(straight))
        self.assertEqual(len(read_trace(split)), 8)
        self.assertTrue(
            load_checkpoint(checkpoint).state.equals(
                load_checkpoint(chain_dir(straight.model_dir, 0) / CHECKPOINT_FILE).state
            )
        )
        self.assertEqual(split_metrics.nlse_per_dim, straight_metrics.nlse_per_dim)
        self.assertEqual(split_metrics.k_last100, straight_metrics.k_last100)

    def test_records_after_the_checkpoint_are_dropped(self):
        """A trace longer than the checkpoint is cut back before resuming."""
        config = run_config(self.out, NCFR, iterations=4, checkpoint_every=2)
        run_experiment(config)
        early = run_config(self.out / "early", NCFR, iterations=4, checkpoint_every=2)
        fail_after = _write_until(2)
        with mock.patch(
            "factor_regression.simulation.chain.ChainContext.write_checkpoint",
            autospec=True,
        ) as write_checkpoint:
            write_checkpoint.side_effect = fail_after
            with self.assertRaises(RuntimeError):
                run_experiment(early)
        early_dir = chain_dir(early.model_dir, 0)
        self.assertEqual(load_checkpoint(early_dir / CHECKPOINT_FILE).iteration, 2)
        self.assertEqual(len(read_trace(early)), 4)
        resume(early_dir / CHECKPOINT_FILE, 2)
        self.assertEqual(read_trace(early), read_trace(config))
        self.assertEqual(load_checkpoint(early_dir / CHECKPOINT_FILE).iteration, 4)

    def test_bad_checkpoints(self):
        """Missing files and other versions are refused."""
        with self.assertRaises(CheckpointError):
            resume(self.out / "missing.npz", 2)
        config = run_config(self.out, NCFR)
        run_experiment(config)
        path = chain_dir(config.model_dir, 0) / CHECKPOINT_FILE
        with numpy.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
        arrays["version"] = numpy.array(CHECKPOINT_VERSION + 1)
        with path.open("wb") as handle:
            numpy.savez(handle, **arrays)
        with self.assertRaises(CheckpointError):
            load_checkpoint(path)
        with self.assertRaises(CheckpointError):
            resume(path, 2)

    def test_extra_iterations(self):
        """At least one more iteration is needed."""
        config = run_config(self.out, NCFR)
        run_experiment(config)
        with self.assertRaises(ConfigError):
            resume(chain_dir(config.model_dir, 0) / CHECKPOINT_FILE, 0)


def _write_until(last_iteration: int):
    """write_checkpoint that works up to last_iteration and then fails."""
    original = ChainContext.write_checkpoint

    def write(context):
        if context.iteration > last_iteration:
            raise OSError("disk full")
        original(context)

    return write


class TestReport(SimulationTestCase):
    """Unit tests for report and run_roster."""

    def test_report_matches_run(self):
        """Re-summarizing a model gives the run's metrics."""
        config = run_config(self.out, CFR)
        metrics = run_experiment(config)
        self.assertEqual(report(config.model_dir), [metrics])

    def test_roster(self):
        """One comparison row per model."""
        payload = tiny_run_payload(self.out, NCFR)
        del payload["model"]
        payload["models"] = [FRR, CFR, NCFR]
        roster = parse_config(payload)
        self.assertIsInstance(roster, RosterConfig)
        metrics = run_roster(roster)
        rows = read_comparison_table(self.out / COMPARISON_FILE)
        self.assertEqual([row["model"] for row in rows], ["FRR", "CFR2", "NCFR-SAMH"])
        self.assertEqual(len(metrics), 3)
        self.assertIsInstance(load_config(self.out / "roster.json"), RosterConfig)
        self.assertEqual(
            sorted(item.model for item in report(self.out)),
            ["CFR2", "FRR", "NCFR-SAMH"],
        )

    def test_nothing_to_report(self):
        """An empty directory has no runs."""
        with self.assertRaises(CheckpointError):
            report(self.out)


@unittest.skipUnless(
    os.environ.get("FACTOR_REGRESSION_SLOW") == "1", "set FACTOR_REGRESSION_SLOW=1"
)
class TestDeskScale(SimulationTestCase):
    """
    The desk-scale comparison: p=20, q=15, k_true=5, N=300 and 2000
    iterations. Takes several minutes.
    """

    def test_desk_roster(self):
        """NCFR-SAMH beats the misspecified CFR and FRR and finds about k_true factors."""
        roster = load_config(Path(__file__).resolve().parent.parent / "configs" / "desk.json")
        roster.output_dir = str(self.out)
        by_name = {metrics.model: metrics for metrics in run_roster(roster)}
        samh = by_name["NCFR-SAMH"]
        self.assertLessEqual(samh.nlse_summary.median, by_name["CFR2"].nlse_summary.median)
        self.assertLessEqual(samh.nlse_summary.median, by_name["FRR"].nlse_summary.median)
        self.assertGreaterEqual(samh.k_mode, 5)
        self.assertLessEqual(samh.k_mode, 8)
        self.assertTrue(all(k <= 8 for k in by_name["NCFR-ZMH8"].k_last100))
        self.assertGreaterEqual(samh.train_test_delta, 0.0)
