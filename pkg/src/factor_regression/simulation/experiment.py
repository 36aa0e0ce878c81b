"""
Runs models end to end: builds the data split, fits FRR directly or runs the
chains of CFR and NCFR (in a process pool when there is more than one),
then reduces the per-chain files into the metrics report. Chains share no
mutable state; every file a chain writes lives in its own directory.
"""

import logging
import multiprocessing
import time
from datetime import datetime
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy

from factor_regression.baselines import fit_frr, frr_noise_variances
from factor_regression.dataset import RegressionDataset, load_dataset, save_dataset
from factor_regression.errors import CheckpointError, ConfigError
from factor_regression.event import Event
from factor_regression.observer import Observable, Observer, RecordFileObserver
from factor_regression.simulation.chain import Chain
from factor_regression.simulation.checkpoint import load_checkpoint
from factor_regression.simulation.models import ChainResult, ChainResultStatus
from factor_regression.simulation.streams import split_stream
from factor_regression.synth import DataSplit, generate, split

from factor_regression.evaluation import (  # isort: skip
    MetricsReport,
    RunArtifacts,
    summarize,
    summarize_frr,
    write_comparison_table,
    write_metrics_report,
    write_nlse_table,
)
from factor_regression.records import (  # isort: skip
    TIMING_FORMAT,
    TRACE_FORMAT,
    TimingRecord,
    TraceRecord,
    read_records,
    truncate_records,
)
from factor_regression.simulation.config import (  # isort: skip
    ModelKind,
    RosterConfig,
    RunConfig,
    load_config,
    save_config,
)

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
TRAIN_FILE = "train.npz"
TEST_FILE = "test.npz"
TRACE_FILE = "trace.jsonl"
TIMING_FILE = "timing.jsonl"
CHECKPOINT_FILE = "checkpoint.npz"
FRR_FILE = "frr.npz"
METRICS_FILE = "metrics.json"
NLSE_FILE = "nlse.csv"
COMPARISON_FILE = "comparison.csv"


def chain_dir(model_dir: Path, index: int) -> Path:
    """Directory of chain index."""
    return Path(model_dir) / f"chain_{index}"


def prepare_data(config: RunConfig) -> DataSplit:
    """Generate or load the dataset and split it under the run's scheme."""
    if config.synth is not None:
        dataset, _truth = generate(config.synth)
    else:
        dataset = load_dataset(Path(config.dataset_path))
    if not 2 <= config.test_size < dataset.N:
        raise ConfigError("test_size", f"must lie in [2, {dataset.N - 1}]")
    return split(dataset, config.scheme, split_stream(config.seed), config.test_size)


def chain_observers(directory: Path) -> List[Observer]:
    """The observers that write a chain's trace and timing files."""
    return [
        RecordFileObserver(directory / TRACE_FILE, "chain_iteration", "trace", TRACE_FORMAT),
        RecordFileObserver(
            directory / TIMING_FILE, "chain_iteration", "timing", TIMING_FORMAT
        ),
    ]


def run_chain(
    config: RunConfig,
    index: int,
    train: RegressionDataset,
    test: Optional[RegressionDataset],
    observers: Sequence[Observer] = (),
) -> ChainResult:
    """
    Run chain index from scratch, replacing whatever an earlier run left in
    its directory. Module level so that a process pool can call it.
    """
    directory = chain_dir(config.model_dir, index)
    directory.mkdir(parents=True, exist_ok=True)
    for name in (TRACE_FILE, TIMING_FILE, CHECKPOINT_FILE):
        (directory / name).unlink(missing_ok=True)
    chain = Chain(config, index, train, test, directory / CHECKPOINT_FILE)
    for observer in [*chain_observers(directory), *observers]:
        chain.register_observer(observer)
    return chain.run()


def _run_chain_args(args: Tuple) -> ChainResult:
    return run_chain(*args)


def collect_artifacts(config: RunConfig) -> RunArtifacts:
    """
    Reduce the per-chain files of a finished run: the retained tails of
    every chain in chain order, and the trace and timing records of each
    chain's last retain iterations.
    """
    model_dir = config.model_dir
    train = load_dataset(model_dir / TRAIN_FILE)
    test = load_dataset(model_dir / TEST_FILE)
    tail = []
    trace: List[TraceRecord] = []
    timing: List[TimingRecord] = []
    for index in range(config.chains):
        directory = chain_dir(model_dir, index)
        checkpoint = load_checkpoint(directory / CHECKPOINT_FILE)
        records = read_records(directory / TRACE_FILE, TRACE_FORMAT, TraceRecord)
        times = read_records(directory / TIMING_FILE, TIMING_FORMAT, TimingRecord)
        if len(records) != checkpoint.iteration:
            raise CheckpointError(
                f"{directory} holds {len(records)} trace records for "
                f"{checkpoint.iteration} iterations"
            )
        tail.extend(checkpoint.tail)
        trace.extend(
            record for record in records[-config.retain :] if record.iteration >= config.burn_in
        )
        timing.extend(
            record for record in times[-config.retain :] if record.iteration >= config.burn_in
        )
    return RunArtifacts(
        model=config.model.name, train=train, test=test, tail=tail, trace=trace, timing=timing
    )


def summarize_run(config: RunConfig) -> MetricsReport:
    """Build the report of a finished run from its files and write it out."""
    model_dir = config.model_dir
    if config.model.kind == ModelKind.FRR:
        report = _summarize_frr_files(config)
    else:
        artifacts = collect_artifacts(config)
        report = summarize(
            artifacts, config.prediction, tail_length=max(1, len(artifacts.trace))
        )
    write_metrics_report(model_dir / METRICS_FILE, report)
    write_nlse_table(model_dir / NLSE_FILE, report)
    return report


def _summarize_frr_files(config: RunConfig) -> MetricsReport:
    model_dir = config.model_dir
    path = model_dir / FRR_FILE
    if not path.exists():
        raise CheckpointError(f"FRR fit {path} does not exist")
    with numpy.load(path, allow_pickle=False) as archive:
        regressor = numpy.array(archive["regressor"])
        noise = numpy.array(archive["noise"])
        timing = TimingRecord(
            iteration=0,
            cpu_seconds=float(archive["cpu_seconds"]),
            wall_seconds=float(archive["wall_seconds"]),
        )
    return summarize_frr(
        config.model.name,
        regressor,
        noise,
        load_dataset(model_dir / TRAIN_FILE),
        load_dataset(model_dir / TEST_FILE),
        timing,
    )


class Experiment(Observable):
    """
    One model run. Observers registered here see the experiment events and,
    when the run has a single chain, every chain event as well.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        super().__init__()

    def run(self) -> MetricsReport:
        """Run the model and return its metrics report."""
        start_time = datetime.now()
        config = self.config
        self.notify_observers(
            Event(
                tag="experiment_start",
                data={"model": config.model.name, "chains": config.chains},
            )
        )
        model_dir = config.model_dir
        model_dir.mkdir(parents=True, exist_ok=True)
        save_config(model_dir / CONFIG_FILE, config)
        data = prepare_data(config)
        save_dataset(model_dir / TRAIN_FILE, data.train)
        save_dataset(model_dir / TEST_FILE, data.test)

        if config.model.kind == ModelKind.FRR:
            self._fit_frr(data)
        else:
            self._run_chains(data)

        report = summarize_run(config)
        self.notify_observers(
            Event(
                tag="experiment_end",
                data={
                    "model": config.model.name,
                    "nlse_median": report.nlse_summary.median,
                    "seconds": (datetime.now() - start_time).total_seconds(),
                },
            )
        )
        return report

    def _fit_frr(self, data: DataSplit) -> None:
        cpu_started = time.process_time()
        wall_started = time.perf_counter()
        regressor = fit_frr(data.train, self.config.model.ridge)
        noise = frr_noise_variances(data.train, regressor)
        with (self.config.model_dir / FRR_FILE).open("wb") as handle:
            numpy.savez(
                handle,
                regressor=regressor,
                noise=noise,
                cpu_seconds=numpy.array(time.process_time() - cpu_started),
                wall_seconds=numpy.array(time.perf_counter() - wall_started),
            )

    def _run_chains(self, data: DataSplit) -> None:
        config = self.config
        if config.chains == 1:
            results = [run_chain(config, 0, data.train, data.test, self._observers)]
        else:
            args = [(config, index, data.train, data.test) for index in range(config.chains)]
            with multiprocessing.Pool(min(config.chains, multiprocessing.cpu_count())) as pool:
                results = pool.map(_run_chain_args, args)
        self._check_results(results)

    def _check_results(self, results: Iterable[ChainResult]) -> None:
        for result in results:
            if result.status == ChainResultStatus.SUCCESS:
                continue
            self.notify_observers(
                Event(tag="experiment_error", data={"message": result.message})
            )
            raise RuntimeError(result.message)


def run_experiment(config: RunConfig, observers: Sequence[Observer] = ()) -> MetricsReport:
    """Run one model with the given observers attached."""
    experiment = Experiment(config)
    for observer in observers:
        experiment.register_observer(observer)
    return experiment.run()


def run_roster(roster: RosterConfig, observers: Sequence[Observer] = ()) -> List[MetricsReport]:
    """Run every model of a roster in order and write the comparison table."""
    reports = [run_experiment(config, observers) for config in roster.runs()]
    output_dir = Path(roster.output_dir)
    save_config(output_dir / "roster.json", roster)
    write_comparison_table(output_dir / COMPARISON_FILE, reports)
    return reports


def resume(
    checkpoint_path: Path, extra_iterations: int, observers: Sequence[Observer] = ()
) -> MetricsReport:
    """
    Continue a chain from its checkpoint for extra_iterations more. Records
    written after the checkpoint are dropped first so the trace continues
    without gaps or repeats. Returns the refreshed report of the model.
    """
    if extra_iterations < 1:
        raise ConfigError("extra_iterations", "must be at least 1")
    checkpoint_path = Path(checkpoint_path)
    checkpoint = load_checkpoint(checkpoint_path)
    directory = checkpoint_path.parent
    model_dir = directory.parent
    config = load_config(model_dir / CONFIG_FILE)
    if not isinstance(config, RunConfig):
        raise CheckpointError(f"{model_dir / CONFIG_FILE} is not a run config")
    config.output_dir = str(model_dir.parent)
    if config.model.name != checkpoint.model:
        raise CheckpointError(
            f"Checkpoint belongs to {checkpoint.model}, not {config.model.name}"
        )
    truncate_records(directory / TRACE_FILE, TRACE_FORMAT, TraceRecord, checkpoint.iteration)
    truncate_records(
        directory / TIMING_FILE, TIMING_FORMAT, TimingRecord, checkpoint.iteration
    )
    chain = Chain.from_checkpoint(
        config,
        checkpoint,
        load_dataset(model_dir / TRAIN_FILE),
        load_dataset(model_dir / TEST_FILE),
        checkpoint_path,
        extra_iterations,
    )
    for observer in [*chain_observers(directory), *observers]:
        chain.register_observer(observer)
    result = chain.run()
    if result.status != ChainResultStatus.SUCCESS:
        raise RuntimeError(result.message)
    logger.info(
        "Resumed %s chain %d to iteration %d",
        config.model.name,
        checkpoint.chain,
        checkpoint.iteration + extra_iterations,
    )
    return summarize_run(config)


def report(path: Path) -> List[MetricsReport]:
    """
    Re-summarize finished runs. path is either a model directory or an
    output directory holding several of them; with more than one model the
    comparison table is rewritten too.
    """
    path = Path(path)
    model_dirs: List[Path] = []
    if (path / CONFIG_FILE).exists():
        model_dirs = [path]
    elif path.is_dir():
        model_dirs = sorted(
            child for child in path.iterdir() if (child / CONFIG_FILE).exists()
        )
    if not model_dirs:
        raise CheckpointError(f"No finished runs found under {path}")
    reports = []
    for model_dir in model_dirs:
        config = load_config(model_dir / CONFIG_FILE)
        if not isinstance(config, RunConfig):
            raise CheckpointError(f"{model_dir / CONFIG_FILE} is not a run config")
        # The directory may have been moved since the run.
        config.output_dir = str(model_dir.parent)
        reports.append(summarize_run(config))
    if len(model_dirs) > 1:
        write_comparison_table(path / COMPARISON_FILE, reports)
    return reports
