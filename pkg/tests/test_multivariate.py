import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from mfpca import (
    MultivariateFPCA,
    MultivariateFunctionalSample,
    SampledGrid,
    ScoreMatrix,
    TruncationSpec,
    UnivariateFPCA,
    assemble_scores,
    center,
    eigendecompose_covariance,
    estimate_covariance,
    exponential_eigenvalues,
    mfpca_combine,
    multivariate_scores,
    score_covariance,
    trapezoid_weights,
    truncate_reliable,
    uni_scores,
    variance_report,
)
from oracles import align_rows_to, stacked_grid_pca


def fit_pipeline(arrays, grids=None, n_components=None):
    model = MultivariateFPCA(n_components=n_components, grids=grids)
    return model.fit(arrays)


class TestTruncationSpec:
    def test_totals(self):
        spec = TruncationSpec(per_feature=(5, 5, 5, 5, 5))
        assert spec.total == 25
        assert spec.reliable == 5

    def test_mixed(self):
        spec = TruncationSpec(per_feature=(2, 4))
        assert spec.total == 6
        assert spec.reliable == 2

    def test_rejects_zero(self):
        with pytest.raises(ValueError, match="at least 1"):
            TruncationSpec(per_feature=(3, 0))


class TestAssembleScores:
    def test_single_feature_identity(self, rng):
        mat = rng.standard_normal((6, 3))
        scores = assemble_scores([mat])
        assert np.array_equal(scores.values, mat)
        assert scores.blocks == ((0, 0), (0, 1), (0, 2))

    def test_block_layout(self, rng):
        scores = assemble_scores(
            [rng.standard_normal((4, 2)), rng.standard_normal((4, 3))]
        )
        assert scores.values.shape == (4, 5)
        assert scores.blocks == ((0, 0), (0, 1), (1, 0), (1, 1), (1, 2))
        assert scores.feature_slice(1) == slice(2, 5)

    def test_row_mismatch(self, rng):
        with pytest.raises(ValueError, match="rows"):
            assemble_scores([rng.standard_normal((4, 2)), rng.standard_normal((5, 2))])


class TestScoreCovariance:
    def test_diagonal_case(self, rng):
        n_obs = 30
        lam = np.array([3.0, 1.5, 0.5])
        q, _ = np.linalg.qr(rng.standard_normal((n_obs, 3)))
        xi = q * np.sqrt((n_obs - 1) * lam)
        z = score_covariance(assemble_scores([xi]))
        assert np.allclose(z, np.diag(lam), atol=1e-12)

    def test_duplicated_column_is_singular(self, rng):
        col = rng.standard_normal((10, 1))
        z = score_covariance(assemble_scores([np.hstack([col, col])]))
        assert np.linalg.matrix_rank(z) == 1

    def test_positive_semidefinite(self, rng):
        xi = rng.standard_normal((15, 6))
        z = score_covariance(assemble_scores([xi]))
        direct = xi.T @ xi / 14.0
        assert np.allclose(z, direct, atol=1e-12)
        assert np.linalg.eigvalsh(z).min() >= -1e-12

    def test_requires_two_rows(self, rng):
        scores = assemble_scores([rng.standard_normal((1, 3))])
        with pytest.raises(ValueError, match="at least 2"):
            score_covariance(scores)


def _decomposed_feature(values, grid, n_components):
    sample_grid = grid if isinstance(grid, SampledGrid) else SampledGrid(grid)
    sample = MultivariateFunctionalSample.from_arrays([values], grids=[sample_grid])
    _, centered = center(sample)
    feat = centered.features[0]
    weights = trapezoid_weights(feat.grid)
    system = eigendecompose_covariance(
        estimate_covariance(feat), weights, n_components,
        max_rank=min(feat.n_obs - 1, feat.grid.size),
    )
    return system, uni_scores(feat, system), feat


class TestMfpcaCombine:
    def test_single_feature_degeneracy(self, rng):
        grid = SampledGrid.uniform(40)
        values = rng.standard_normal((25, 40))
        system, scores, _ = _decomposed_feature(values, grid, 10)
        combined = mfpca_combine([system], assemble_scores([scores]))
        lam = system.eigenvalues
        assert np.allclose(combined.eigenvalues, lam, rtol=1e-8)
        for m in range(10):
            block = combined.eigenfunctions[0][m]
            ref = system.eigenfunctions[m]
            sign = np.sign(np.dot(block, ref))
            assert np.abs(block - sign * ref).max() <= 1e-6

    def test_score_scaling_homogeneity(self, rng):
        grid = SampledGrid.uniform(30)
        values = rng.standard_normal((20, 30))
        system, scores, _ = _decomposed_feature(values, grid, 8)
        base = mfpca_combine([system], assemble_scores([scores]))
        scaled = mfpca_combine([system], assemble_scores([3.0 * scores]))
        assert np.allclose(scaled.eigenvalues, 9.0 * base.eigenvalues, rtol=1e-10)
        for m in range(8):
            dot = np.abs(np.dot(scaled.coefficients[:, m], base.coefficients[:, m]))
            assert np.isclose(dot, 1.0, atol=1e-8)

    def test_structural_mismatch_rejected(self, rng):
        grid = SampledGrid.uniform(30)
        values = rng.standard_normal((20, 30))
        system, scores, _ = _decomposed_feature(values, grid, 8)
        with pytest.raises(ValueError, match="layout"):
            mfpca_combine([system], assemble_scores([scores[:, :5]]))

    def test_eigenfunctions_orthonormal_in_product_space(self, rng):
        grids = [SampledGrid.uniform(35), SampledGrid.uniform(20)]
        arrays = [rng.standard_normal((18, 35)), rng.standard_normal((18, 20))]
        model = fit_pipeline(arrays, grids=grids)
        system = model.system_
        gram = np.zeros((system.n_components, system.n_components))
        for block, w in zip(system.eigenfunctions, system.weights):
            gram += (block * w.weights) @ block.T
        assert np.abs(gram - np.eye(system.n_components)).max() <= 1e-6

    def test_trace_conservation(self, rng):
        grids = [SampledGrid.uniform(26), SampledGrid.uniform(31)]
        arrays = [rng.standard_normal((15, 26)), rng.standard_normal((15, 31))]
        model = fit_pipeline(arrays, grids=grids, n_components=(6, 9))
        retained = sum(s.eigenvalues.sum() for s in model.uni_systems_)
        assert np.isclose(model.eigenvalues_.sum(), retained, rtol=1e-8)

    def test_coefficients_orthonormal(self, rng):
        grids = [SampledGrid.uniform(22), SampledGrid.uniform(27)]
        arrays = [rng.standard_normal((12, 22)), rng.standard_normal((12, 27))]
        model = fit_pipeline(arrays, grids=grids)
        c = model.coefficients_
        assert np.abs(c.T @ c - np.eye(c.shape[1])).max() <= 1e-10


class TestMultivariateScores:
    def test_row_equal_to_coefficient_vector(self, rng):
        grid = SampledGrid.uniform(25)
        values = rng.standard_normal((15, 25))
        system, scores, _ = _decomposed_feature(values, grid, 6)
        combined = mfpca_combine([system], assemble_scores([scores]))
        xi = np.vstack([combined.coefficients[:, 0], np.zeros(6)])
        rho = multivariate_scores(
            ScoreMatrix(values=xi, truncation=combined.truncation), combined
        )
        assert np.allclose(rho[0], np.eye(6)[0], atol=1e-10)
        assert np.abs(rho[1]).max() == 0.0

    def test_sample_covariance_is_spectrum(self, rng):
        grids = [SampledGrid.uniform(24), SampledGrid.uniform(18)]
        arrays = [rng.standard_normal((30, 24)), rng.standard_normal((30, 18))]
        model = fit_pipeline(arrays, grids=grids, n_components=(5, 4))
        rho = model.scores_
        z = rho.T @ rho / (rho.shape[0] - 1)
        scale = model.eigenvalues_[0]
        assert np.abs(z - np.diag(model.eigenvalues_)).max() <= 1e-8 * scale


class TestVarianceReport:
    def test_single_component(self):
        report = variance_report(np.array([1.0]), alphas=(10.0, 50.0, 100.0))
        assert np.allclose(report.component_pve, [100.0])
        assert all(v == 1 for v in report.npc.values())

    def test_exponential_decay_paper_counts(self):
        values = exponential_eigenvalues(50)
        report = variance_report(values, alphas=(50.0, 70.0, 90.0, 95.0, 99.0))
        assert [report.npc[a] for a in (50.0, 70.0, 90.0, 95.0, 99.0)] == [2, 3, 5, 6, 10]

    def test_exponential_decay_first_share(self):
        values = exponential_eigenvalues(50)
        report = variance_report(values, alphas=(50.0,))
        # direct summation of the geometric series
        expected = 100.0 * values[0] / values.sum()
        assert abs(report.component_pve[0] - expected) < 1e-12
        assert abs(report.component_pve[0] - 39.3469) < 0.01

    def test_cumulative_ends_at_hundred(self, rng):
        values = np.sort(rng.uniform(0.0, 5.0, 20))[::-1]
        report = variance_report(values, alphas=(90.0,))
        assert report.cumulative_pve[-1] == 100.0

    def test_clamps_roundoff_negatives(self):
        report = variance_report(np.array([2.0, 1.0, -1e-16]), alphas=(99.0,))
        assert report.component_pve[-1] == 0.0

    def test_rejects_genuine_negatives(self):
        with pytest.raises(ValueError, match="nonnegative"):
            variance_report(np.array([2.0, -0.5]), alphas=(50.0,))

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError, match="zero"):
            variance_report(np.zeros(4), alphas=(50.0,))

    @given(
        st.lists(st.floats(0.0, 100.0), min_size=1, max_size=30).filter(
            lambda v: sum(v) > 1e-6
        ),
        st.lists(st.floats(0.5, 100.0), min_size=2, max_size=6),
    )
    def test_npc_monotone_in_alpha(self, values, alphas):
        spectrum = np.sort(np.array(values))[::-1]
        report = variance_report(spectrum, alphas=alphas)
        ordered = sorted(alphas)
        counts = [report.npc[float(a)] for a in ordered]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


class TestTruncateReliable:
    def test_uniform_truncation(self, rng):
        grids = [SampledGrid.uniform(20)] * 5
        arrays = [rng.standard_normal((30, 20)) for _ in range(5)]
        model = fit_pipeline(arrays, grids=grids, n_components=5)
        assert model.truncation_.total == 25
        reduced = truncate_reliable(model.system_)
        assert reduced.n_components == 5

    def test_single_feature_noop(self, rng):
        grid = [SampledGrid.uniform(20)]
        model = fit_pipeline([rng.standard_normal((12, 20))], grids=grid, n_components=7)
        reduced = truncate_reliable(model.system_)
        assert reduced.n_components == 7

    def test_min_rule(self, rng):
        grids = [SampledGrid.uniform(20), SampledGrid.uniform(25)]
        arrays = [rng.standard_normal((30, 20)), rng.standard_normal((30, 25))]
        model = fit_pipeline(arrays, grids=grids, n_components=(2, 4))
        reduced = truncate_reliable(model.system_)
        assert reduced.n_components == 2
        assert np.array_equal(reduced.eigenvalues, model.eigenvalues_[:2])


class TestStackedGridOracle:
    """Full-rank two-step decomposition against the direct weighted PCA."""

    def _compare(self, arrays, grids, seed_note=""):
        model = fit_pipeline(arrays, grids=grids)
        sample = MultivariateFunctionalSample.from_arrays(arrays, grids=grids)
        _, centered = center(sample)
        weight_vectors = [
            trapezoid_weights(f.grid).weights for f in centered.features
        ]
        oracle_values, oracle_blocks = stacked_grid_pca(
            [f.values for f in centered.features], weight_vectors
        )
        count = min(model.eigenvalues_.size, oracle_values.size)
        scale = max(oracle_values[0], 1e-12)
        assert (
            np.abs(model.eigenvalues_[:count] - oracle_values[:count]).max()
            <= 1e-6 * scale
        ), seed_note
        # eigenfunctions and scores are only well determined away from zero
        # eigenvalues and ties
        floor = 1e-6 * scale
        stacked = np.hstack([f.values for f in centered.features])
        w_flat = np.concatenate(weight_vectors)
        for m in range(count):
            if oracle_values[m] <= floor:
                break
            gap_ok = (m == 0 or oracle_values[m - 1] - oracle_values[m] > floor) and (
                oracle_values[m] - (oracle_values[m + 1] if m + 1 < oracle_values.size else 0.0)
                > floor
            )
            if not gap_ok:
                continue
            ours = np.concatenate([b[m] for b in model.eigenfunctions_])
            reference = np.concatenate([b[m] for b in oracle_blocks])
            aligned = align_rows_to(reference[None, :], ours[None, :])[0]
            assert np.abs(aligned - reference).max() <= 1e-6, f"{seed_note} m={m}"
            # the m-th multivariate scores are projections onto that component
            oracle_scores = stacked @ (w_flat * reference)
            sign = 1.0 if np.dot(reference, ours) >= 0 else -1.0
            score_scale = max(np.abs(oracle_scores).max(), scale)
            assert (
                np.abs(sign * model.scores_[:, m] - oracle_scores).max()
                <= 1e-6 * score_scale
            ), f"{seed_note} scores m={m}"

    def test_twenty_random_instances(self):
        rng = np.random.default_rng(2718)
        for case in range(20):
            p = int(rng.integers(1, 4))
            n_obs = int(rng.integers(8, 31))
            grids = []
            arrays = []
            for _ in range(p):
                n_points = int(rng.integers(5, 41))
                grids.append(SampledGrid.uniform(n_points))
                arrays.append(rng.standard_normal((n_obs, n_points)))
            self._compare(arrays, grids, seed_note=f"case={case}")

    def test_p1_pipeline_equals_univariate(self, rng):
        grid = SampledGrid.uniform(33)
        values = rng.standard_normal((21, 33))
        model = fit_pipeline([values], grids=[grid])
        uni = UnivariateFPCA(grid=grid).fit(values)
        lam = uni.eigenvalues_
        assert np.all(
            np.abs(model.eigenvalues_ - lam) <= 1e-8 * np.maximum(lam, lam[0] * 1e-8)
        )
        for m in range(lam.size):
            block = model.eigenfunctions_[0][m]
            ref = uni.eigenfunctions_[m]
            sign = np.sign(np.dot(block, ref))
            assert np.abs(block - sign * ref).max() <= 1e-6


class TestMultivariateFPCAEstimator:
    def test_sklearn_protocol(self):
        model = MultivariateFPCA(n_components=(2, 3))
        cloned = clone(model)
        assert cloned.get_params()["n_components"] == (2, 3)

    def test_transform_matches_training_scores(self, rng):
        grids = [SampledGrid.uniform(28), SampledGrid.uniform(19)]
        arrays = [rng.standard_normal((16, 28)), rng.standard_normal((16, 19))]
        model = fit_pipeline(arrays, grids=grids, n_components=(4, 3))
        assert np.allclose(model.transform(arrays), model.scores_, atol=1e-12)

    def test_pve_policy_selects_per_feature(self, rng):
        grids = [SampledGrid.uniform(30), SampledGrid.uniform(30)]
        strong = rng.standard_normal((40, 30)) * 5.0
        weak = rng.standard_normal((40, 30))
        model = MultivariateFPCA(pve=90.0, grids=grids).fit([strong, weak])
        assert model.truncation_.per_feature == tuple(
            len(lam[np.cumsum(lam) / lam.sum() < 0.9]) + 1
            for lam in model.uni_full_eigenvalues_
        )

    def test_broadcast_int_truncation(self, rng):
        grids = [SampledGrid.uniform(15), SampledGrid.uniform(18)]
        arrays = [rng.standard_normal((12, 15)), rng.standard_normal((12, 18))]
        model = fit_pipeline(arrays, grids=grids, n_components=4)
        assert model.truncation_.per_feature == (4, 4)

    def test_truncation_bound_error_message(self, rng):
        grids = [SampledGrid.uniform(15)]
        arrays = [rng.standard_normal((8, 15))]
        with pytest.raises(ValueError, match=r"min\(N - 1, S\)"):
            fit_pipeline(arrays, grids=grids, n_components=9)

    def test_variance_report_shortcut(self, rng):
        grids = [SampledGrid.uniform(20), SampledGrid.uniform(20)]
        arrays = [rng.standard_normal((10, 20)), rng.standard_normal((10, 20))]
        model = fit_pipeline(arrays, grids=grids, n_components=(3, 3))
        report = model.variance_report(alphas=(50.0, 90.0))
        assert report.npc[50.0] <= report.npc[90.0]
        assert report.cumulative_pve[-1] == 100.0
