import filecmp
import json

import numpy as np
import pytest

from geobary.errors import ContractError
from geobary.harness.config import ExperimentConfig, bilinear_grid, load_config, parse_overrides
from geobary.harness.experiments import (
    RECORD_COLUMNS,
    Prop1Violation,
    SweepRecord,
    make_layout,
    run_bound_report,
    run_consistency_sweep,
    run_interpolation,
    worker_count,
)


def small_sweep(tmp_path, name="out", **kw):
    values = dict(N=[150, 300], trials=3, n=5, m=5, epsilon=0.1, figures=False, output=str(tmp_path / name))
    values.update(kw)
    return ExperimentConfig(**values)


class TestConfig:
    def test_defaults_are_valid(self):
        c = ExperimentConfig()
        assert c.spec().kind == "sphere" and c.lambda_grid() == [[0.5, 0.5]]

    def test_bilinear_grid(self):
        grid = bilinear_grid(4)
        assert len(grid) == 16
        np.testing.assert_allclose(np.sum(grid, axis=1), 1.0)
        assert grid[0] == [1, 0, 0, 0] and grid[-1] == [0, 0, 0, 1]

    def test_overrides(self):
        values = parse_overrides(["--N", "[100, 200]", "--epsilon", "0.2", "--shared-support", "true"])
        assert values == {"N": [100, 200], "epsilon": 0.2, "shared_support": True}
        with pytest.raises(ContractError):
            parse_overrides(["--nope", "1"])
        with pytest.raises(ContractError):
            parse_overrides(["--N"])

    def test_file_and_override(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("S: 3\nn: 4\ntrials: 2\n")
        c = load_config(path, {"trials": 5})
        assert (c.S, c.n, c.trials) == (3, 4, 5)
        path.write_text("S: 3\ncolour: red\n")
        with pytest.raises(ContractError):
            load_config(path)
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "missing.yaml")

    @pytest.mark.parametrize(
        "bad",
        [
            {"N": [100, 100]},
            {"trials": 0},
            {"lambdas": [[0.5, 0.6]]},
            {"lambdas": "bilinear4"},
            {"manifold": "torus"},
            {"shapes": ["wobble"]},
        ],
    )
    def test_invalid(self, bad):
        with pytest.raises(ContractError):
            ExperimentConfig(**bad)

    def test_digest(self):
        assert ExperimentConfig().digest() == ExperimentConfig().digest()
        assert ExperimentConfig().digest() != ExperimentConfig(seed=1).digest()

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("GEOBARY_THREADS", "3")
        assert worker_count() == 3
        assert worker_count(tasks=2) == 2
        monkeypatch.setenv("GEOBARY_THREADS", "0")
        assert worker_count() >= 1
        assert worker_count(1) == 1


class TestLayout:
    def test_marginals_and_costs(self):
        c = ExperimentConfig(manifold="hemisphere", S=4, n=30, shared_support=True, lambdas="bilinear4")
        layout = make_layout(c)
        assert len(layout.marginals) == 4
        for b, cost in zip(layout.marginals, layout.costs):
            assert abs(b.sum() - 1) <= 1e-12 and np.all(b >= 0)
            assert np.all(np.diag(cost) <= 1e-20)
        # the four bumps sit in different places
        assert len({int(np.argmax(b)) for b in layout.marginals}) == 4


class TestInterpolation:
    def test_corner_weights_recover_marginals(self, tmp_path):
        c = ExperimentConfig(
            manifold="square", S=4, n=6, shared_support=True, lambdas="corners", epsilon=0.005,
            bandwidth=0.2, N=[400], figures=False, output=str(tmp_path),
        )
        result = run_interpolation(c)
        layout = make_layout(c)
        for s, a in enumerate(result.true):
            assert 0.5 * np.abs(a - layout.marginals[s]).sum() <= 0.05

    def test_mirror_symmetry(self, tmp_path):
        # 3x3 grid support and two bumps mirrored by x -> 1 - x
        c = ExperimentConfig(
            manifold="square", S=2, n=9, shared_support=True, centers=[[0.2, 0.3], [0.8, 0.3]],
            bandwidth=0.3, lambdas=[[0.3, 0.7], [0.7, 0.3]], epsilon=0.05, N=[300], figures=False,
            output=str(tmp_path),
        )
        x = make_layout(c).x
        mirror = [int(np.argmin(np.abs(x - [1 - p[0], p[1]]).sum(axis=1))) for p in x]
        a, b = run_interpolation(c).true
        np.testing.assert_allclose(a[mirror], b, atol=1e-7)

    def test_outputs_are_reproducible(self, tmp_path):
        kw = dict(
            manifold="hemisphere", S=4, n=20, shared_support=True, lambdas="bilinear4", epsilon=0.05,
            N=[500], figures=True,
        )
        first = run_interpolation(ExperimentConfig(output=str(tmp_path / "a"), **kw))
        run_interpolation(ExperimentConfig(output=str(tmp_path / "b"), **kw))
        assert len([f for f in first.files if f.startswith("weights_")]) == 32
        for name in first.files:
            assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name
        weights = np.loadtxt(tmp_path / "a" / "weights_05_graph.txt")
        assert weights.shape == (20,) and abs(weights.sum() - 1) <= 1e-9
        json.loads((tmp_path / "a" / "interpolation.vl.json").read_text())


class TestSweep:
    def test_records(self, tmp_path):
        result = run_consistency_sweep(small_sweep(tmp_path), workers=1)
        assert [(r.N, r.trial) for r in result.records] == [(N, t) for N in (150, 300) for t in range(3)]
        for r in result.records:
            assert r.bary_gap_sq >= 0 and r.obj_gap <= r.prop1_bound + 1e-8
        header = (tmp_path / "out" / "records.csv").read_text().splitlines()[0]
        assert header == ",".join(RECORD_COLUMNS)
        assert "wall_time" not in header
        summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
        assert len(summary) == 3 and summary[0].startswith("N,trials,resampled,status,mean_bary_gap_sq")

    def test_bypass(self, tmp_path):
        result = run_consistency_sweep(small_sweep(tmp_path, bypass=True), workers=1)
        assert all(r.bary_gap_sq <= 1e-12 and r.obj_gap == 0 for r in result.records)

    def test_worker_count_does_not_change_output(self, tmp_path):
        run_consistency_sweep(small_sweep(tmp_path, "one"), workers=1)
        run_consistency_sweep(small_sweep(tmp_path, "two"), workers=2)
        for name in ("records.csv", "summary.csv"):
            assert filecmp.cmp(tmp_path / "one" / name, tmp_path / "two" / name, shallow=False)

    def test_disconnected_graphs_abort_level(self, tmp_path):
        result = run_consistency_sweep(small_sweep(tmp_path, radius_c=0.05), workers=1)
        assert set(result.aborted) == {150, 300}
        assert "disconnected" in result.aborted[150]
        assert result.records == [] and {r["status"] for r in result.summary} == {"aborted"}

    def test_prop1_is_enforced(self):
        with pytest.raises(Prop1Violation):
            SweepRecord(10, 0, 0, 0.1, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0)

    def test_single_weight_vector(self, tmp_path):
        with pytest.raises(ContractError):
            run_consistency_sweep(small_sweep(tmp_path, lambdas="corners"), workers=1)


class TestBounds:
    def config(self, tmp_path, **kw):
        values = dict(S=2, bound_n=5, trials=4, epsilons=[0.1], deltas=[0.0, 1e-2, 1e-1], figures=True,
                      output=str(tmp_path))
        values.update(kw)
        return ExperimentConfig(**values)

    def test_rows(self, tmp_path):
        report = run_bound_report(self.config(tmp_path), workers=1)
        assert len(report.rows) == 3 * 3 * 4
        assert report.prop1_pass_rate == 1.0
        for r in report.rows:
            if r["delta"] == 0:
                assert r["obj_gap"] == 0 and r["bary_gap_sq"] == 0 and r["prop1_bound"] == 0
            if r["shape"] == "shift":
                assert r["obj_gap"] == pytest.approx(r["delta"], abs=1e-8)
                assert r["bary_gap_sq"] <= 1e-12
        assert (tmp_path / "bounds.png").exists()

    def test_exact_transport(self, tmp_path):
        report = run_bound_report(self.config(tmp_path, bound_n=3, trials=2, epsilons=[0.0]), workers=1)
        assert report.prop1_pass_rate == 1.0
        with pytest.raises(ContractError):
            run_bound_report(self.config(tmp_path, bound_n=8, trials=1, epsilons=[0.0]), workers=1)
