"""Unit tests for the metrics and the run reports."""

import tempfile
import unittest
from pathlib import Path

import numpy
from scipy import stats

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import CheckpointError, ContractViolation, StructuralError
from factor_regression.records import TimingRecord, TraceRecord
from factor_regression.synth import SynthConfig, generate
from tests.factories import empty_state, make_dataset, make_state

from factor_regression.evaluation import (  # isort: skip
    COMPARISON_COLUMNS,
    PredictionMode,
    RunArtifacts,
    frr_predictive_log_likelihood,
    nlse,
    predictive_log_likelihood,
    read_comparison_table,
    read_metrics_report,
    select_best_sample,
    summarize,
    summarize_frr,
    summarize_nlse,
    write_comparison_table,
    write_metrics_report,
    write_nlse_table,
)
from factor_regression.model import (  # isort: skip
    LatentState,
    joint_log_likelihood,
    predict,
    predict_posterior_mean,
)


class TestNlse(unittest.TestCase):
    """Unit tests for nlse and summarize_nlse."""

    def setUp(self):
        self.rng = numpy.random.default_rng(0)
        self.truth = self.rng.standard_normal((4, 20))

    def test_perfect_prediction(self):
        """Predicting the truth gives zero."""
        numpy.testing.assert_array_equal(nlse(self.truth, self.truth), numpy.zeros(4))

    def test_mean_prediction(self):
        """Predicting the per-dimension mean gives one."""
        mean = numpy.repeat(self.truth.mean(axis=1, keepdims=True), 20, axis=1)
        numpy.testing.assert_allclose(nlse(mean, self.truth), numpy.ones(4))

    def test_direct_formula(self):
        """Squared error over the spread about the mean."""
        guess = self.rng.standard_normal((4, 20))
        expected = numpy.sum((guess - self.truth) ** 2, axis=1) / (
            20 * numpy.var(self.truth, axis=1)
        )
        numpy.testing.assert_allclose(nlse(guess, self.truth), expected)

    def test_column_order_does_not_matter(self):
        """Permuting observations leaves the errors unchanged."""
        guess = self.rng.standard_normal((4, 20))
        order = self.rng.permutation(20)
        numpy.testing.assert_allclose(
            nlse(guess[:, order], self.truth[:, order]), nlse(guess, self.truth)
        )

    def test_zero_variance(self):
        """A constant dimension is undefined and logged."""
        truth = numpy.array(self.truth)
        truth[2] = 3.0
        with self.assertLogs("factor_regression.evaluation", level="WARNING"):
            values = nlse(numpy.zeros_like(truth), truth)
        self.assertTrue(numpy.isnan(values[2]))
        self.assertTrue(numpy.all(numpy.isfinite(values[[0, 1, 3]])))

    def test_shape_and_size(self):
        """Shapes must agree and at least two columns are needed."""
        with self.assertRaises(StructuralError):
            nlse(numpy.zeros((4, 19)), self.truth)
        with self.assertRaises(ContractViolation):
            nlse(self.truth[:, :1], self.truth[:, :1])

    def test_summary_skips_undefined(self):
        """Quartiles are taken over the finite values."""
        summary = summarize_nlse([1.0, numpy.nan, 2.0, 3.0, 4.0, 5.0])
        self.assertEqual(summary.median, 3.0)
        self.assertEqual(summary.q1, 2.0)
        self.assertEqual(summary.q3, 4.0)
        self.assertTrue(numpy.isnan(summarize_nlse([numpy.nan]).median))


class TestPredictiveLogLikelihood(unittest.TestCase):
    """Unit tests for the predictive log-likelihoods."""

    def setUp(self):
        self.rng = numpy.random.default_rng(1)
        self.data = make_dataset(self.rng, p=3, q=4, N=8)

    def test_matches_dense_gaussian(self):
        """Same value as a full q×q covariance."""
        state = make_state(self.data, 3, self.rng)
        covariance = numpy.diag(state.psi_y) + state.Q @ numpy.diag(state.psi_z) @ state.Q.T
        mean = state.Q @ state.P @ self.data.X
        expected = sum(
            stats.multivariate_normal.logpdf(self.data.Y[:, n], mean[:, n], covariance)
            for n in range(self.data.N)
        )
        self.assertAlmostEqual(
            predictive_log_likelihood(state, self.data), expected, places=8
        )

    def test_no_features(self):
        """With K = 0 only the response noise remains."""
        state = empty_state(self.data, psi_y=2.0)
        expected = numpy.sum(stats.norm.logpdf(self.data.Y, scale=numpy.sqrt(2.0)))
        self.assertAlmostEqual(
            predictive_log_likelihood(state, self.data), expected, places=8
        )

    def test_full_rank_fit(self):
        """Diagonal Gaussian around R x."""
        regressor = self.rng.standard_normal((4, 3))
        noise = numpy.array([0.5, 1.0, 1.5, 2.0])
        expected = numpy.sum(
            stats.norm.logpdf(
                self.data.Y,
                loc=regressor @ self.data.X,
                scale=numpy.sqrt(noise)[:, None],
            )
        )
        self.assertAlmostEqual(
            frr_predictive_log_likelihood(regressor, noise, self.data), expected, places=8
        )

    def test_true_parameters_beat_shuffled_responses(self):
        """The generating parameters score the real pairing above a shuffled one."""
        wins = 0
        seeds = range(100)
        for seed in seeds:
            cfg = SynthConfig(p=5, q=4, k_true=2, N=30, bernoulli_p=1.0, seed=seed)
            data, truth = generate(cfg)
            state = LatentState(
                S=truth.S_true,
                Z=truth.Z_true,
                Q=truth.Q_true,
                P=truth.P_true,
                psi_y=numpy.full(cfg.q, cfg.noise_y),
                psi_z=numpy.full(cfg.k_true, cfg.noise_z),
                psi_q=numpy.ones(cfg.k_true),
                psi_p=numpy.ones(cfg.k_true),
                alpha=1.0,
            )
            order = numpy.random.default_rng(seed).permutation(cfg.N)
            shuffled = RegressionDataset(data.X, data.Y[:, order])
            wins += predictive_log_likelihood(state, data) > predictive_log_likelihood(
                state, shuffled
            )
        self.assertGreaterEqual(wins, 99)


class TestSelectBestSample(unittest.TestCase):
    """Unit tests for select_best_sample."""

    def setUp(self):
        self.rng = numpy.random.default_rng(2)
        self.data = make_dataset(self.rng, p=3, q=4, N=10)

    def test_single_state(self):
        """A tail of one gives that state."""
        state = make_state(self.data, 2, self.rng)
        self.assertIs(select_best_sample([state], self.data), state)

    def test_highest_likelihood_wins(self):
        """The state with the largest joint log-likelihood is picked."""
        tail = [make_state(self.data, 2, self.rng) for _ in range(5)]
        values = [joint_log_likelihood(state, self.data) for state in tail]
        best = select_best_sample(tail, self.data)
        self.assertIs(best, tail[int(numpy.argmax(values))])

    def test_tie_goes_to_the_latest(self):
        """Equal likelihoods resolve to the later state."""
        first = make_state(self.data, 2, self.rng)
        second = first.copy()
        self.assertIs(select_best_sample([first, second], self.data), second)

    def test_empty_tail(self):
        """Nothing to choose from."""
        with self.assertRaises(ContractViolation):
            select_best_sample([], self.data)


def make_artifacts(rng: numpy.random.Generator, tail_size: int = 3) -> RunArtifacts:
    """A fake finished run with a tail, a trace and timings."""
    train = make_dataset(rng, p=3, q=4, N=12)
    test = make_dataset(rng, p=3, q=4, N=6)
    tail = [make_state(train, 2, rng) for _ in range(tail_size)]
    trace = [
        TraceRecord(
            iteration=index,
            k=2 + index % 2,
            joint_log_likelihood=-10.0 - index,
            test_log_likelihood=-20.0 - index,
            temperature=1.0,
        )
        for index in range(5)
    ]
    timing = [
        TimingRecord(iteration=index, cpu_seconds=0.1 * index, wall_seconds=0.2 * index)
        for index in range(5)
    ]
    return RunArtifacts("NCFR-Test", train, test, tail, trace, timing)


class TestSummarize(unittest.TestCase):
    """Unit tests for summarize and summarize_frr."""

    def setUp(self):
        self.rng = numpy.random.default_rng(3)
        self.artifacts = make_artifacts(self.rng)

    def test_best_sample_report(self):
        """NLSE of the best sample and the trace tail."""
        report = summarize(self.artifacts, tail_length=3)
        best = select_best_sample(self.artifacts.tail, self.artifacts.train)
        expected = nlse(predict(best, self.artifacts.test.X), self.artifacts.test.Y)
        numpy.testing.assert_allclose(report.nlse_per_dim, expected)
        self.assertEqual(report.k_last100, [2, 3, 2])
        self.assertEqual(report.k_mode, 2)
        self.assertEqual(report.pred_loglik_last100, [-22.0, -23.0, -24.0])
        numpy.testing.assert_allclose(report.seconds_per_iter_last100, [0.2, 0.3, 0.4])
        self.assertEqual(report.retained, 3)
        self.assertEqual(report.prediction, PredictionMode.BEST_SAMPLE)
        self.assertAlmostEqual(
            report.best_log_likelihood, joint_log_likelihood(best, self.artifacts.train)
        )
        self.assertAlmostEqual(
            report.train_test_delta,
            float(numpy.mean(numpy.array(report.nlse_per_dim) - report.train_nlse_per_dim)),
        )

    def test_posterior_mean_report(self):
        """Averaged predictions over the whole tail."""
        report = summarize(self.artifacts, PredictionMode.POSTERIOR_MEAN)
        expected = nlse(
            predict_posterior_mean(self.artifacts.tail, self.artifacts.test.X),
            self.artifacts.test.Y,
        )
        numpy.testing.assert_allclose(report.nlse_per_dim, expected)
        self.assertEqual(report.prediction, PredictionMode.POSTERIOR_MEAN)

    def test_missing_columns_are_not_trained_on(self):
        """Train NLSE is taken over the observed columns only."""
        train = self.artifacts.train
        hidden = RegressionDataset(train.X, train.Y, [0, 1])
        self.artifacts.train = hidden
        report = summarize(self.artifacts, tail_length=3)
        best = select_best_sample(self.artifacts.tail, hidden)
        columns = hidden.observed_columns
        expected = nlse(predict(best, hidden.X[:, columns]), hidden.Y[:, columns])
        numpy.testing.assert_allclose(report.train_nlse_per_dim, expected)

    def test_frr_report(self):
        """A full-rank fit reports one timing and one predictive value."""
        regressor = self.rng.standard_normal((4, 3))
        noise = numpy.ones(4)
        timing = TimingRecord(iteration=0, cpu_seconds=0.5, wall_seconds=0.6)
        report = summarize_frr(
            "FRR", regressor, noise, self.artifacts.train, self.artifacts.test, timing
        )
        numpy.testing.assert_allclose(
            report.nlse_per_dim,
            nlse(regressor @ self.artifacts.test.X, self.artifacts.test.Y),
        )
        self.assertEqual(report.seconds_per_iter_last100, [0.5])
        self.assertEqual(len(report.pred_loglik_last100), 1)
        self.assertIsNone(report.k_mode)
        self.assertEqual(report.k_last100, [])


class TestReportFiles(unittest.TestCase):
    """Unit tests for the metrics and table files."""

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with
        self.directory = Path(self._directory.name)
        self.report = summarize(make_artifacts(numpy.random.default_rng(4)), tail_length=5)

    def tearDown(self):
        self._directory.cleanup()

    def test_metrics_round_trip(self):
        """The report survives JSON."""
        path = self.directory / "metrics.json"
        write_metrics_report(path, self.report)
        self.assertEqual(read_metrics_report(path), self.report)

    def test_metrics_errors(self):
        """Missing files and foreign JSON are refused."""
        with self.assertRaises(CheckpointError):
            read_metrics_report(self.directory / "nothing.json")
        path = self.directory / "other.json"
        path.write_text('{"format": "other"}', encoding="utf-8")
        with self.assertRaises(CheckpointError):
            read_metrics_report(path)

    def test_comparison_table(self):
        """One row per model under the fixed columns."""
        path = self.directory / "comparison.csv"
        second = self.report.copy(update={"model": "CFR2", "k_mode": None})
        write_comparison_table(path, [self.report, second])
        self.assertTrue(path.read_text(encoding="utf-8").startswith("# "))
        rows = read_comparison_table(path)
        self.assertEqual([row["model"] for row in rows], ["NCFR-Test", "CFR2"])
        self.assertEqual(list(rows[0]), COMPARISON_COLUMNS)
        self.assertEqual(rows[0]["k_mode"], str(self.report.k_mode))
        self.assertEqual(rows[1]["k_mode"], "")
        self.assertAlmostEqual(
            float(rows[0]["nlse_median"]), self.report.nlse_summary.median
        )

    def test_nlse_table(self):
        """One row per response dimension."""
        path = self.directory / "nlse.csv"
        write_nlse_table(path, self.report)
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[1], "dimension,test_nlse,train_nlse")
        self.assertEqual(len(lines), 2 + len(self.report.nlse_per_dim))
