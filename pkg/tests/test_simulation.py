import json

import numpy as np
import pytest

from mfpca import (
    SimulationConfig,
    draw_cuts,
    eigenvalue_errors,
    exponential_eigenvalues,
    run_error_study,
    run_npc_study,
    simulate_dataset,
)


class TestDrawCuts:
    def test_single_feature_has_no_cuts(self, rng):
        assert draw_cuts(1, 1.0, rng).size == 0

    def test_five_features_sorted_in_range(self, rng):
        cuts = draw_cuts(5, 1.0, rng)
        assert cuts.shape == (4,)
        assert np.all((cuts > 0) & (cuts < 1))
        assert np.all(np.diff(cuts) > 0)

    def test_segment_guard_holds(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            cuts = draw_cuts(5, 1.0, rng, min_segment_fraction=0.02)
            segments = np.diff(np.concatenate(([0.0], cuts, [1.0])))
            assert segments.min() >= 0.02

    def test_deterministic_under_fixed_seed(self):
        a = draw_cuts(5, 1.0, np.random.default_rng(7))
        b = draw_cuts(5, 1.0, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_guard_must_be_feasible(self, rng):
        with pytest.raises(ValueError, match="room"):
            draw_cuts(5, 1.0, rng, min_segment_fraction=0.25)


class TestSimulateDataset:
    def test_first_eigenvalue_value(self):
        config = SimulationConfig(n_obs=10, n_points=25, base_seed=0)
        assert np.isclose(config.true_eigenvalues()[0], np.exp(-1.0))
        assert np.isclose(exponential_eigenvalues(1)[0], 0.36787944117144233)

    def test_same_seed_and_rep_bit_identical(self):
        config = SimulationConfig(n_obs=25, n_points=25, base_seed=11)
        a = simulate_dataset(config, 3)
        b = simulate_dataset(config, 3)
        assert np.array_equal(a.cuts, b.cuts)
        assert a.signs == b.signs
        for fa, fb in zip(a.sample.features, b.sample.features):
            assert np.array_equal(fa.values, fb.values)

    def test_different_reps_differ(self):
        config = SimulationConfig(n_obs=25, n_points=25, base_seed=11)
        a = simulate_dataset(config, 0)
        b = simulate_dataset(config, 1)
        assert not np.array_equal(a.sample.features[0].values, b.sample.features[0].values)

    def test_basis_is_orthonormal(self):
        config = SimulationConfig(n_obs=10, n_points=50, base_seed=5)
        data = simulate_dataset(config, 0)
        gram = data.basis.gram()
        assert np.abs(gram - np.eye(config.n_components)).max() <= 1e-8

    def test_projection_variances_approach_truth(self):
        # law of large numbers on the true-basis projections
        config = SimulationConfig(n_obs=10000, n_points=50, base_seed=123)
        data = simulate_dataset(config, 0)
        weights = [w.weights for w in data.basis.weights]
        projections = np.zeros((config.n_obs, 5))
        for j, feat in enumerate(data.sample.features):
            projections += feat.values @ (weights[j] * data.basis.blocks[j][:5]).T
        empirical = projections.var(axis=0, ddof=1)
        assert np.allclose(empirical, data.eigenvalues[:5], rtol=0.05)

    def test_shapes(self):
        config = SimulationConfig(n_obs=25, n_points=50, base_seed=2)
        data = simulate_dataset(config, 0)
        assert data.sample.n_features == 5
        assert data.sample.features[0].values.shape == (25, 50)
        assert data.eigenvalues.shape == (50,)


class TestEigenvalueErrors:
    def test_exact_recovery(self):
        nu = exponential_eigenvalues(10)
        assert np.abs(eigenvalue_errors(nu, nu, 10)).max() == 0.0

    def test_total_miss(self):
        nu = exponential_eigenvalues(5)
        assert np.allclose(eigenvalue_errors(nu, np.zeros(5), 5), 1.0)

    def test_double_estimate(self):
        nu = exponential_eigenvalues(5)
        assert np.allclose(eigenvalue_errors(nu, 2 * nu, 5), 1.0)

    def test_count_validation(self):
        nu = exponential_eigenvalues(5)
        with pytest.raises(ValueError, match="count"):
            eigenvalue_errors(nu, nu, 6)


class TestErrorStudy:
    def test_smoke_single_replication(self):
        report = run_error_study(
            n_values=(25,), s_values=(25,), truncations=(5,),
            replications=1, base_seed=0, m_max=25,
        )
        table = report.error_cells[(25, 25, 5)]
        assert table.shape == (25, 5)
        rows = report.rows()
        assert len(rows) == 25 * 5
        assert {r["quantile"] for r in rows} == {"min", "q1", "median", "q3", "max"}

    def test_m_max_bound(self):
        with pytest.raises(ValueError, match="m_max"):
            run_error_study(
                n_values=(25,), s_values=(25,), truncations=(4,),
                replications=1, m_max=25,
            )

    def test_single_truncation_exact_arm_count(self):
        report = run_error_study(
            n_values=(25,), s_values=(25,), truncations=(5, 10),
            replications=2, base_seed=1, m_max=25, keep_replications=True,
        )
        assert len(report.replications) == 4  # 2 reps x 2 arms
        assert {r.truncations for r in report.replications} == {(5,) * 5, (10,) * 5}

    def test_deterministic_across_thread_counts(self, tmp_path):
        kwargs = dict(
            n_values=(25,), s_values=(25,), truncations=(5,),
            replications=4, base_seed=3, m_max=25,
        )
        sequential = run_error_study(n_jobs=1, **kwargs)
        threaded = run_error_study(n_jobs=2, **kwargs)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        sequential.write_csv(a)
        threaded.write_csv(b)
        assert a.read_bytes() == b.read_bytes()


class TestNpcStudy:
    def test_counts_sum_to_replications(self):
        report = run_npc_study(
            n_values=(25,), s_values=(25, 50), alphas=(70.0, 95.0),
            replications=5, base_seed=0,
        )
        for cell in report.npc_cells.values():
            for counter in cell.values():
                assert sum(counter.values()) == 5

    def test_true_counts_from_exponential_law(self):
        report = run_npc_study(
            n_values=(25,), s_values=(25,), alphas=(50.0, 70.0, 90.0, 95.0, 99.0),
            replications=1, base_seed=0,
        )
        assert report.true_npc == {50.0: 2, 70.0: 3, 90.0: 5, 95.0: 6, 99.0: 10}

    def test_selected_truncations_recorded(self):
        report = run_npc_study(
            n_values=(25,), s_values=(25,), alphas=(90.0,),
            replications=2, base_seed=0, keep_replications=True,
        )
        for res in report.replications:
            assert res.alpha == 90.0
            assert len(res.truncations) == 5
            assert all(1 <= m <= res.rank_bound for m in res.truncations)
            assert res.npc >= 1

    def test_small_sample_underestimates_at_alpha_50(self):
        # the fifty-percent level drops below the true two components more
        # often than not on small samples
        report = run_npc_study(
            n_values=(25,), s_values=(25,), alphas=(50.0,),
            replications=40, base_seed=42,
        )
        counts = report.npc_cells[(25, 25)][50.0]
        assert max(counts, key=counts.get) == 1
        assert report.true_npc[50.0] == 2

    def test_deterministic_across_thread_counts(self, tmp_path):
        kwargs = dict(
            n_values=(25,), s_values=(25,), alphas=(70.0, 99.0),
            replications=4, base_seed=5,
        )
        sequential = run_npc_study(n_jobs=1, **kwargs)
        threaded = run_npc_study(n_jobs=2, **kwargs)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        sequential.write_json(a)
        threaded.write_json(b)
        assert a.read_bytes() == b.read_bytes()

    def test_json_layout(self, tmp_path):
        report = run_npc_study(
            n_values=(25,), s_values=(25,), alphas=(70.0,),
            replications=2, base_seed=0,
        )
        path = tmp_path / "npc.json"
        report.write_json(path)
        payload = json.loads(path.read_text())
        assert payload["kind"] == "npc-selection"
        assert "N=25" in payload["results"]
        assert "S=25" in payload["results"]["N=25"]
        counts = payload["results"]["N=25"]["S=25"]["alpha=70"]
        assert sum(counts.values()) == 2

    def test_csv_header_lines(self, tmp_path):
        report = run_npc_study(
            n_values=(25,), s_values=(25,), alphas=(70.0,),
            replications=1, base_seed=0,
        )
        path = tmp_path / "npc.csv"
        report.write_csv(path, header_lines=["mfpca test run seed=0"])
        text = path.read_text().splitlines()
        assert text[0] == "# mfpca test run seed=0"
        assert text[1] == "N,S,alpha,npc,count,true_npc"
