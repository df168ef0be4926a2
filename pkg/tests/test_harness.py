import math

import numpy as np
import pytest

import tensorfill as tf
from tensorfill import IterationBudget, MethodConfig
from tensorfill.exceptions import CalibrationError, ContractViolation
from tensorfill.harness import (
    ExperimentSpec,
    budget_from_timings,
    build_results_document,
    calibrate_speed_match,
    declare_winner,
    format_cell,
    merge_correctness_flags,
    psnr_from_mse,
    records_from_document,
    render_table_csv,
    run_experiment,
    summarize,
    summary_stats,
    trial_samples,
    welch_t_test,
)

from conftest import correlated_training_set


def t_density(x, dof):
    return (math.gamma((dof + 1) / 2) / (math.sqrt(dof * math.pi) * math.gamma(dof / 2))
            * (1 + x * x / dof) ** (-(dof + 1) / 2))


def two_sided_p_by_quadrature(t, dof, n=200_001):
    """Simpson integration of the t density over [-|t|, |t|]."""
    hi = abs(t)
    xs = np.linspace(-hi, hi, n)
    ys = np.array([t_density(x, dof) for x in xs])
    h = (2 * hi) / (n - 1)
    inner = h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-2:2].sum())
    return 1.0 - inner


class TestWelch:
    def test_identical_samples(self):
        res = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.t_stat == 0.0
        assert res.p_value == 1.0
        assert not res.significant_at_95

    def test_hand_computed_fixture(self):
        res = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert res.t_stat == pytest.approx(-1.0, abs=1e-12)
        assert res.dof == pytest.approx(8.0, abs=1e-12)

    def test_p_against_quadrature_oracle(self):
        res = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        want = two_sided_p_by_quadrature(res.t_stat, res.dof)
        assert res.p_value == pytest.approx(0.3466, abs=5e-4)
        assert res.p_value == pytest.approx(want, abs=5e-4)

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = rng.normal(0, 1, size=int(rng.integers(2, 30)))
            b = rng.normal(0.5, 2, size=int(rng.integers(2, 30)))
            ab = welch_t_test(a, b)
            ba = welch_t_test(b, a)
            assert ab.t_stat == -ba.t_stat
            assert ab.p_value == ba.p_value

    def test_degenerate_variance(self):
        res = welch_t_test([1.0, 1.0, 1.0], [2.0, 2.0, 2.0])
        assert res.p_value == 0.0
        assert res.degenerate

    def test_too_few_samples(self):
        with pytest.raises(ContractViolation):
            welch_t_test([1.0], [1.0, 2.0])


class TestSummaries:
    def test_constant_values(self):
        assert summary_stats([50.0, 50.0, 50.0]) == (50.0, 0.0)

    def test_two_values(self):
        mean, std = summary_stats([52.0, 54.0])
        assert mean == 53.0
        assert std == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            summary_stats([])

    def test_format_cell_table_layout(self):
        assert format_cell(52.57, 0.77) == "52.57% / 0.77%"

    def test_psnr(self):
        assert psnr_from_mse(0.0, 1.0) == math.inf
        assert psnr_from_mse(1.0, 10.0) == pytest.approx(20.0)


class TestWinner:
    def test_identical_samples_no_winner(self):
        samples = {"a": [1.0, 2.0, 3.0], "b": [1.0, 2.0, 3.0]}
        assert declare_winner(samples) is None

    def test_table_separation_declares_winner(self):
        rng = np.random.default_rng(1)
        samples = {
            "silrtc": list(rng.normal(34.56, 0.8, 100)),
            "halrtc": list(rng.normal(53.63, 0.8, 100)),
            "fcp": list(rng.normal(36.06, 0.8, 100)),
            "altec": list(rng.normal(41.23, 0.8, 100)),
        }
        assert declare_winner(samples) == "halrtc"

    def test_top_mean_must_beat_every_rival(self):
        rng = np.random.default_rng(2)
        base = rng.normal(50.0, 1.0, 60)
        samples = {
            "a": list(base + 0.05),            # top mean, overlaps b heavily
            "b": list(rng.normal(50.0, 1.0, 60)),
            "c": list(rng.normal(40.0, 1.0, 60)),
        }
        res = welch_t_test(samples["a"], samples["b"])
        assert res.p_value >= 0.05  # sanity: a does not separate from b
        assert declare_winner(samples) is None

    def test_reorder_invariant(self):
        rng = np.random.default_rng(3)
        samples = {
            "x": list(rng.normal(60, 0.5, 50)),
            "y": list(rng.normal(50, 0.5, 50)),
            "z": list(rng.normal(40, 0.5, 50)),
        }
        rev = dict(reversed(list(samples.items())))
        assert declare_winner(samples) == declare_winner(rev) == "x"

    def test_requires_two_methods(self):
        with pytest.raises(ContractViolation):
            declare_winner({"only": [1.0, 2.0]})


def _small_tensors(n=2, dims=(6, 6, 4), seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        u = rng.uniform(0.2, 1.2, (dims[0], 2))
        v = rng.uniform(0.2, 1.2, (dims[1], 2))
        w = rng.uniform(0.2, 1.2, (dims[2], 2))
        data = np.einsum("ir,jr,kr->ijk", u, v, w).astype(np.float32)
        out.append((f"img{i:03d}", tf.FeatureTensor(data)))
    return out


class TestRunExperiment:
    def test_record_counting_contract(self):
        spec = ExperimentSpec(methods=(MethodConfig("none"),), p_loss_grid=(0.2,),
                              trials_per_tensor=3, master_seed=1)
        records = run_experiment(spec, _small_tensors(1))
        assert len(records) == 3
        assert sorted(r.trial_index for r in records) == [0, 1, 2]

    def test_vanishing_loss_rate_gives_zero_mse(self):
        spec = ExperimentSpec(methods=(MethodConfig("none"), MethodConfig("halrtc")),
                              p_loss_grid=(1e-12,), trials_per_tensor=2, master_seed=1)
        records = run_experiment(spec, _small_tensors(1))
        for r in records:
            assert r.missing_count == 0
            assert r.missing_mse == 0.0

    def test_determinism_bitwise(self):
        spec = ExperimentSpec(methods=(MethodConfig("none"), MethodConfig("fcp")),
                              p_loss_grid=(0.25,), trials_per_tensor=3, master_seed=7)
        a = run_experiment(spec, _small_tensors(2))
        b = run_experiment(spec, _small_tensors(2))
        assert [r.missing_mse for r in a] == [r.missing_mse for r in b]

    def test_paired_masks_across_methods(self):
        spec = ExperimentSpec(methods=(MethodConfig("none"), MethodConfig("silrtc"),
                                       MethodConfig("fcp")),
                              p_loss_grid=(0.3,), trials_per_tensor=4, master_seed=3)
        records = run_experiment(spec, _small_tensors(2))
        cells = {}
        for r in records:
            cells.setdefault((r.tensor_id, r.p_loss, r.trial_index), set()).add(
                (r.observed_count, r.missing_count))
        assert all(len(v) == 1 for v in cells.values())

    def test_failed_method_is_flagged_not_fatal(self):
        bad_weights = tf.train_altec(correlated_training_set(0, dims=(6, 6, 3)),
                                     ridge_lambda=1e-6)  # 3 channels, tensors have 4
        spec = ExperimentSpec(methods=(MethodConfig("none"),
                                       MethodConfig("altec", weights=bad_weights)),
                              p_loss_grid=(0.2,), trials_per_tensor=2, master_seed=5)
        records = run_experiment(spec, _small_tensors(1))
        failed = [r for r in records if r.failed]
        assert len(failed) == 2
        assert all(r.method == "altec" for r in failed)
        assert all("channel" in (r.error or "") for r in failed)

    def test_worker_pool_matches_serial(self, monkeypatch):
        spec = ExperimentSpec(methods=(MethodConfig("none"), MethodConfig("fcp")),
                              p_loss_grid=(0.2, 0.3), trials_per_tensor=2, master_seed=9)
        serial = run_experiment(spec, _small_tensors(2))
        monkeypatch.setenv("TM_THREADS", "4")
        parallel = run_experiment(spec, _small_tensors(2))
        assert [(r.tensor_id, r.method, r.p_loss, r.trial_index, r.missing_mse) for r in serial] == \
               [(r.tensor_id, r.method, r.p_loss, r.trial_index, r.missing_mse) for r in parallel]


class TestSpeedMatch:
    def test_budget_arithmetic(self):
        assert budget_from_timings(0.010, 0.002).iters == 5
        assert budget_from_timings(0.010, 0.025).iters == 1

    def test_zero_iteration_time_rejected(self):
        with pytest.raises(CalibrationError):
            budget_from_timings(0.010, 0.0)

    def test_live_calibration_reproducible(self):
        rng = np.random.default_rng(0)
        probe = tf.FeatureTensor(np.abs(rng.standard_normal((10, 10, 32))).astype(np.float32))
        train = [tf.FeatureTensor(np.abs(rng.standard_normal((10, 10, 32))).astype(np.float32))
                 for _ in range(2)]
        weights = tf.train_altec(train, ridge_lambda=1e-4)
        reference = MethodConfig("altec", weights=weights)
        target = MethodConfig("silrtc")
        budgets = [calibrate_speed_match(reference, target, probe, p_loss=0.3, n_probes=7).iters
                   for _ in range(3)]
        assert all(b >= 1 for b in budgets)
        assert max(budgets) - min(budgets) <= 1


class TestResultsDocument:
    def _doc(self):
        spec = ExperimentSpec(methods=(MethodConfig("none"), MethodConfig("fcp"),
                                       MethodConfig("halrtc")),
                              p_loss_grid=(0.3,), trials_per_tensor=3, master_seed=11)
        records = run_experiment(spec, _small_tensors(2, seed=4))
        return spec, records, build_results_document(spec, records)

    def test_document_structure(self):
        spec, records, doc = self._doc()
        assert doc["schema_version"] == 1
        assert doc["metric_mode"] == "psnr"
        assert len(doc["records"]) == len(records)
        assert {w["p_loss"] for w in doc["winners"]} == {0.3}
        pairs = {(w["method_a"], w["method_b"]) for w in doc["welch"]}
        assert pairs == {("fcp", "halrtc")}

    def test_records_roundtrip(self):
        _, records, doc = self._doc()
        back = records_from_document(doc)
        assert [(r.tensor_id, r.method, r.trial_index) for r in back] == \
               [(r.tensor_id, r.method, r.trial_index) for r in records]

    def test_summarize_requires_group(self):
        _, records, _ = self._doc()
        with pytest.raises(ContractViolation):
            summarize(records, "silrtc", 0.3)

    def test_csv_renders_accuracy_cells(self):
        # synthetic accuracy-mode records whose NC stats mirror a table row;
        # three trials at mu and mu +/- sigma give exact mean and n-1 deviation
        counts = [5180, 5257, 5334]  # of 10,000: 51.80 / 52.57 / 53.34 percent
        records = []
        for trial, n_correct in enumerate(counts):
            for i in range(10_000):
                correct = i < n_correct
                records.append(tf.harness.TrialRecord(
                    tensor_id=f"img{i}", method="halrtc", p_loss=0.3, trial_index=trial,
                    missing_mse=0.0, psnr=None, observed_count=1, missing_count=0,
                    wall_time_ms=0.0, correct_tc=correct, correct_nc=correct))
        spec = ExperimentSpec(methods=(MethodConfig("halrtc"),), p_loss_grid=(0.3,),
                              trials_per_tensor=3)
        doc = build_results_document(spec, records, nl_accuracy=56.20)
        csv_text = render_table_csv([doc])
        header, row = csv_text.strip().splitlines()
        cols = dict(zip(header.split(","), row.split(",")))
        assert cols["mu_nc"] == "52.57"
        assert cols["sigma_nc"] == "0.77"
        assert cols["mu_nl"] == "56.20"
        summary = summarize(records, "halrtc", 0.3, nl_accuracy=56.20)
        assert format_cell(summary.mu_nc, summary.sigma_nc) == "52.57% / 0.77%"

    def test_summarize_invariant_under_record_order(self):
        _, records, _ = self._doc()
        forward = summarize(records, "fcp", 0.3)
        backward = summarize(list(reversed(records)), "fcp", 0.3)
        assert forward == backward

    def test_flag_merge(self):
        _, records, _ = self._doc()
        flags = {"entries": [{"tensor_id": r.tensor_id, "method": r.method,
                              "p_loss": r.p_loss, "trial_index": r.trial_index,
                              "correct": True} for r in records]}
        merged = merge_correctness_flags(records, flags)
        assert all(r.correct_tc for r in merged)
        samples = trial_samples(merged, "fcp", 0.3, "accuracy")
        assert samples == [100.0, 100.0, 100.0]
