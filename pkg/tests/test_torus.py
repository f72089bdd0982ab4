"""Torus graph models: statistics, generators, fitting, and edge decisions."""

import csv

import numpy as np
import pytest

from ncbayes.gibbs import GibbsConfig
from ncbayes.rng import as_generator
from ncbayes.torus import (
    EdgeDecisionReport,
    TorusGraphParams,
    chain_truth,
    cycle5_params,
    detect_edges_ci,
    detect_edges_median,
    edge_pairs,
    er_params,
    fit_torus_ncbayes,
    generate_cycle_rejection,
    generate_er_gibbs,
    generate_vm_chain,
    graph_metrics,
    load_phase_csv,
    save_phase_csv,
    torus_design,
    torus_layout,
    torus_model,
    torus_suff_stat,
    true_edge_mask,
    vm_conditional,
    write_dot,
    write_edge_csv,
    write_interval_csv,
)


class TestStatistics:
    def test_edge_pair_order(self):
        assert edge_pairs(3) == [(0, 1), (0, 2), (1, 2)]
        assert len(edge_pairs(6)) == 15
        assert edge_pairs(1) == []

    def test_statistic_length(self):
        for d in (1, 2, 4):
            x = np.full(d, 0.5)
            assert torus_suff_stat(x).shape == (2 * d * d + 1,)

    def test_hand_evaluated_statistics(self):
        # x = (pi/2, 0): nodes (0, 1) and (1, 0); difference and sum both pi/2
        z = torus_suff_stat(np.array([np.pi / 2, 0.0]))
        np.testing.assert_allclose(
            z, [0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0], atol=1e-12
        )

    def test_design_batch_shape(self):
        X = as_generator(0).uniform(0, 2 * np.pi, (11, 3))
        assert torus_design(X).shape == (11, 19)

    def test_angles_outside_range_warn_and_wrap(self):
        with pytest.warns(UserWarning):
            z = torus_design(np.array([[7.0, -1.0]]))
        zin = torus_design(np.array([[7.0 % (2 * np.pi), -1.0 % (2 * np.pi)]]))
        np.testing.assert_allclose(z, zin, atol=1e-12)

    def test_model_dimension(self):
        model = torus_model(4)
        assert model.dim_param == 32
        assert model.design(np.zeros((2, 4))).shape == (2, 33)

    def test_density_invariant_under_full_turns(self):
        params = TorusGraphParams(
            phi_node=as_generator(1).normal(size=(3, 2)),
            phi_edge=as_generator(2).normal(size=(3, 4)),
        )
        x = np.array([[0.3, 1.2, 4.0]])
        shifted = x + 2 * np.pi * np.array([[1.0, -1.0, 2.0]])
        np.testing.assert_allclose(
            params.unnorm_log_density(x),
            params.unnorm_log_density(shifted),
            atol=1e-10,
        )


class TestParams:
    def test_flat_round_trip(self):
        params = TorusGraphParams(
            phi_node=as_generator(3).normal(size=(4, 2)),
            phi_edge=as_generator(4).normal(size=(6, 4)),
            beta=-1.5,
        )
        back = TorusGraphParams.from_flat(params.flat, beta=params.beta)
        np.testing.assert_array_equal(back.phi_node, params.phi_node)
        np.testing.assert_array_equal(back.phi_edge, params.phi_edge)
        assert back.beta == params.beta
        assert params.gamma.shape == (33,)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            TorusGraphParams(phi_node=np.zeros((3, 2)), phi_edge=np.zeros((2, 4)))
        with pytest.raises(ValueError):
            TorusGraphParams.from_flat(np.zeros(7))

    def test_layout_grouped(self):
        lay = torus_layout(3, grouped=True)
        np.testing.assert_array_equal(lay.local_idx, np.arange(6))
        np.testing.assert_array_equal(
            lay.group_idx, 6 + np.arange(12).reshape(3, 4)
        )
        assert lay.beta_idx == 18
        assert lay.beta_var == 1e3

    def test_layout_ungrouped(self):
        lay = torus_layout(3, grouped=False)
        np.testing.assert_array_equal(lay.local_idx, np.arange(18))
        assert lay.group_idx is None


class TestChainTruth:
    def test_exact_coefficients(self):
        params = chain_truth(4)
        expect_node = np.zeros((4, 2))
        expect_node[0] = [np.sqrt(3.0), 1.0]
        np.testing.assert_allclose(params.phi_node, expect_node, rtol=1e-12)
        pairs = edge_pairs(4)
        for e, (j, k) in enumerate(pairs):
            if k == j + 1:
                np.testing.assert_allclose(
                    params.phi_edge[e], [np.sqrt(3.0), -1.0, 0.0, 0.0], rtol=1e-12
                )
            else:
                np.testing.assert_array_equal(params.phi_edge[e], np.zeros(4))

    def test_first_node_only_marginal(self):
        params = chain_truth(6, mu=0.7, kappa=1.3)
        assert np.all(params.phi_node[1:] == 0.0)
        np.testing.assert_allclose(
            params.phi_node[0], [1.3 * np.cos(0.7), 1.3 * np.sin(0.7)]
        )

    def test_nonconsecutive_edges_absent(self):
        mask = true_edge_mask(chain_truth(5))
        pairs = edge_pairs(5)
        np.testing.assert_array_equal(mask, [k == j + 1 for j, k in pairs])

    def test_chain_conditional_skips_nonneighbors(self):
        # third angle given the rest must not depend on the first one
        params = chain_truth(3)
        x = np.array([0.4, 2.0, 5.0])
        a1, b1 = vm_conditional(params, x, 2)
        x[0] = 3.3
        a2, b2 = vm_conditional(params, x, 2)
        assert (a1, b1) == (a2, b2)


class TestVmConditional:
    def test_matches_least_squares_fit(self):
        # U(phi) with the other angles fixed is c + a cos(phi) + b sin(phi)
        gen = as_generator(9)
        params = TorusGraphParams(
            phi_node=gen.normal(size=(4, 2)), phi_edge=gen.normal(size=(6, 4))
        )
        x = gen.uniform(0, 2 * np.pi, 4)
        grid = np.linspace(0.0, 2 * np.pi, 60, endpoint=False)
        for k in range(4):
            pts = np.tile(x, (60, 1))
            pts[:, k] = grid
            u = params.unnorm_log_density(pts)
            design = np.column_stack([np.cos(grid), np.sin(grid), np.ones(60)])
            coef, *_ = np.linalg.lstsq(design, u, rcond=None)
            a, b = vm_conditional(params, x, k)
            assert a == pytest.approx(coef[0], abs=1e-8)
            assert b == pytest.approx(coef[1], abs=1e-8)


class TestGenerators:
    def test_vm_chain_shapes_and_range(self):
        X = generate_vm_chain(4, 50, seed=3)
        assert X.shape == (50, 4)
        assert np.all((X >= 0) & (X < 2 * np.pi))
        np.testing.assert_array_equal(X, generate_vm_chain(4, 50, seed=3))
        with pytest.raises(ValueError):
            generate_vm_chain(1, 10)

    def test_vm_chain_couples_consecutive_angles(self):
        X = generate_vm_chain(3, 4000, seed=1)
        # circular correlation proxy: mean cos of the lag difference
        diff = X[:, 1] - X[:, 0] - np.pi / 6
        assert np.mean(np.cos(diff)) > 0.5

    def test_cycle5_edges(self):
        mask = true_edge_mask(cycle5_params())
        pairs = edge_pairs(5)
        want = {(0, 2), (0, 3), (1, 3), (1, 4), (2, 4)}
        np.testing.assert_array_equal(mask, [p in want for p in pairs])
        assert mask.sum() == 5
        params = cycle5_params(strength=0.45)
        np.testing.assert_array_equal(
            params.phi_edge[mask], np.full((5, 4), 0.45)
        )

    def test_cycle_rejection_deterministic(self):
        Xa, ra = generate_cycle_rejection(150, seed=5)
        Xb, rb = generate_cycle_rejection(150, seed=5)
        np.testing.assert_array_equal(Xa, Xb)
        assert ra == rb
        assert Xa.shape == (150, 5)
        assert 0.0 < ra <= 1.0
        assert np.all((Xa >= 0) & (Xa < 2 * np.pi))

    def test_er_params_structure(self):
        params = er_params(30, 0.1, seed=0)
        mask = true_edge_mask(params)
        assert params.phi_edge.shape == (435, 4)
        assert 0 < mask.sum() < 435
        np.testing.assert_array_equal(
            params.phi_edge[mask],
            np.tile([0.3, 0.3, 0.0, 0.0], (mask.sum(), 1)),
        )
        np.testing.assert_array_equal(
            true_edge_mask(er_params(30, 0.1, seed=0)), mask
        )
        with pytest.raises(ValueError):
            er_params(1, 0.1)
        with pytest.raises(ValueError):
            er_params(5, 1.5)

    def test_er_gibbs_shapes_and_determinism(self):
        Xa, pa = generate_er_gibbs(d=6, edge_prob=0.3, n=40, burn=50, seed=2)
        Xb, pb = generate_er_gibbs(d=6, edge_prob=0.3, n=40, burn=50, seed=2)
        assert Xa.shape == (40, 6)
        np.testing.assert_array_equal(Xa, Xb)
        np.testing.assert_array_equal(pa.phi_edge, pb.phi_edge)
        assert np.all((Xa >= 0) & (Xa < 2 * np.pi))

    def test_er_gibbs_accepts_explicit_params(self):
        params = cycle5_params()
        X, back = generate_er_gibbs(n=30, burn=30, seed=4, params=params)
        assert back is params
        assert X.shape == (30, 5)


def _draws_from_params(params: TorusGraphParams, k: int = 64) -> np.ndarray:
    """Constant draws equal to the generating coefficients plus intercept."""
    return np.tile(params.gamma, (k, 1))


class TestEdgeDecisions:
    def _draws(self, comp_values, d=2, k=101):
        """Draws whose single edge block has per-component values broadcast
        over draws; comp_values is (4,) or (k, 4)."""
        A = np.zeros((k, 2 * d * d))
        A[:, 2 * d :] = np.asarray(comp_values, float)
        return A

    def test_median_rule_detects_above_threshold(self):
        rep = detect_edges_median(self._draws([0.15, 0.0, 0.0, 0.0]))
        np.testing.assert_array_equal(rep.decisions, [True])
        assert rep.strengths[0] == pytest.approx(0.15)
        np.testing.assert_allclose(rep.medians, [[0.15, 0.0, 0.0, 0.0]])

    def test_median_rule_is_strict_at_threshold(self):
        rep = detect_edges_median(self._draws([0.100, 0.0, 0.0, 0.0]))
        np.testing.assert_array_equal(rep.decisions, [False])

    def test_median_rule_uses_absolute_value(self):
        rep = detect_edges_median(self._draws([0.0, -0.2, 0.0, 0.0]))
        np.testing.assert_array_equal(rep.decisions, [True])

    def test_median_rule_ignores_node_block(self):
        A = np.zeros((11, 8))
        A[:, :4] = 5.0  # strong node terms only
        rep = detect_edges_median(A)
        np.testing.assert_array_equal(rep.decisions, [False])

    def test_median_rule_accepts_intercept_column(self):
        A = self._draws([0.3, 0.0, 0.0, 0.0])
        with_b = np.hstack([A, np.full((A.shape[0], 1), -2.0)])
        np.testing.assert_array_equal(
            detect_edges_median(with_b).decisions,
            detect_edges_median(A).decisions,
        )

    def test_median_rule_validation(self):
        with pytest.raises(ValueError):
            detect_edges_median(self._draws([0.2, 0, 0, 0]), threshold=0.0)
        with pytest.raises(ValueError):
            detect_edges_median(np.zeros((5, 7)))  # 6 after intercept, not 2 d^2

    def test_ci_rule_excludes_zero(self, rng):
        vals = np.zeros((400, 4))
        vals[:, 2] = rng.normal(1.0, 0.1, 400)   # clearly positive
        vals[:, 3] = rng.normal(0.0, 0.5, 400)   # straddles zero
        rep = detect_edges_ci(self._draws(vals, k=400), level=0.90)
        np.testing.assert_array_equal(rep.decisions, [True])

    def test_ci_rule_no_detection_when_centered(self, rng):
        vals = rng.normal(0.0, 0.3, (400, 4))
        rep = detect_edges_ci(self._draws(vals, k=400), level=0.90)
        np.testing.assert_array_equal(rep.decisions, [False])

    def test_ci_rule_level_validation(self):
        with pytest.raises(ValueError):
            detect_edges_ci(self._draws([0.2, 0, 0, 0]), level=1.0)

    def test_rule_metadata(self):
        rep = detect_edges_median(self._draws([0.2, 0, 0, 0]), threshold=0.07)
        assert rep.rule == "median-threshold"
        assert rep.value == 0.07
        assert rep.pairs == [(0, 1)]
        rep = detect_edges_ci(self._draws([0.2, 0, 0, 0]), level=0.8)
        assert rep.rule == "ci-level"


class TestGraphMetrics:
    def _report(self, decisions):
        dec = np.asarray(decisions, bool)
        E = dec.size
        return EdgeDecisionReport(
            d=3, rule="median-threshold", value=0.1, decisions=dec,
            strengths=np.zeros(E), medians=np.zeros((E, 4)),
        )

    def test_confusion_oracle(self):
        m = graph_metrics(self._report([1, 1, 0]), np.array([1, 0, 0], bool))
        assert m.recall == pytest.approx(1.0)
        assert m.precision == pytest.approx(0.5)
        assert m.accuracy == pytest.approx(2.0 / 3.0)
        assert np.isnan(m.cp_phi)

    def test_all_wrong(self):
        m = graph_metrics(self._report([0, 0, 1]), np.array([1, 1, 0], bool))
        assert m.recall == 0.0
        assert m.precision == 0.0
        assert m.accuracy == 0.0

    def test_vacuous_precision(self):
        m = graph_metrics(self._report([0, 0, 0]), np.zeros(3, bool))
        assert m.precision == 1.0
        assert np.isnan(m.recall)
        assert m.accuracy == 1.0

    def test_no_detection_with_true_edges_gives_nan_precision(self):
        m = graph_metrics(self._report([0, 0, 0]), np.array([1, 0, 0], bool))
        assert np.isnan(m.precision)
        assert m.recall == 0.0

    def test_mismatched_sizes(self):
        with pytest.raises(ValueError):
            graph_metrics(self._report([0, 1]), np.zeros(3, bool))

    def test_coverage_of_constant_draws_is_full(self):
        params = cycle5_params()
        draws = _draws_from_params(params)
        rep = detect_edges_median(draws)
        m = graph_metrics(
            rep, true_edge_mask(params), draws=draws, true_params=params
        )
        assert m.cp_phi == pytest.approx(100.0)


class TestWriters:
    def test_edge_csv(self, tmp_out):
        params = cycle5_params()
        rep = detect_edges_median(_draws_from_params(params))
        path = tmp_out / "edges.csv"
        write_edge_csv(path, rep)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert set(rows[0]) == {"j", "k", "strength", "decision"}
        # second canonical pair is (1, 3) once 1-indexed, a true edge
        assert rows[1]["j"] == "1" and rows[1]["k"] == "3"
        assert rows[1]["decision"] == "1"

    def test_edge_csv_labels(self, tmp_out):
        params = cycle5_params()
        rep = detect_edges_median(_draws_from_params(params))
        path = tmp_out / "edges.csv"
        write_edge_csv(path, rep, labels=["a", "b", "c", "d", "e"])
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["j"] == "a" and rows[0]["k"] == "b"

    def test_dot_output(self, tmp_out):
        params = cycle5_params()
        rep = detect_edges_median(_draws_from_params(params))
        path = tmp_out / "graph.dot"
        write_dot(path, rep)
        text = path.read_text()
        assert text.startswith("graph torus {")
        assert text.rstrip().endswith("}")
        assert text.count(" -- ") == 5
        assert '"1" -- "3"' in text

    def test_interval_csv_four_rows_per_detected_edge(self, tmp_out):
        params = cycle5_params()
        draws = _draws_from_params(params)
        rep = detect_edges_median(draws)
        path = tmp_out / "intervals.csv"
        write_interval_csv(path, draws, rep)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 20
        assert set(rows[0]) == {"j", "k", "component", "median", "lo", "hi"}
        assert [r["component"] for r in rows[:4]] == ["1", "2", "3", "4"]

    def test_phase_csv_round_trip(self, tmp_out):
        X = as_generator(11).uniform(0, 2 * np.pi, (7, 3))
        path = tmp_out / "phase.csv"
        save_phase_csv(path, X, channels=["c1", "c2", "c3"])
        back, channels = load_phase_csv(path)
        np.testing.assert_allclose(back, X, atol=1e-8)
        assert channels == ["c1", "c2", "c3"]

    def test_phase_csv_without_sidecar(self, tmp_out):
        path = tmp_out / "phase.csv"
        save_phase_csv(path, np.zeros((3, 2)))
        back, channels = load_phase_csv(path)
        assert back.shape == (3, 2)
        assert channels is None

    def test_phase_sidecar_mismatch(self, tmp_out):
        path = tmp_out / "phase.csv"
        save_phase_csv(path, np.zeros((3, 2)), channels=["only-one"])
        with pytest.raises(ValueError):
            load_phase_csv(path)


class TestFit:
    def test_smoke_all_prior_modes(self):
        data = generate_vm_chain(3, 60, seed=6)
        for mode in ("gaussian", "horseshoe", "grouped", "regularized-grouped"):
            draws, trace = fit_torus_ncbayes(
                data, mode, GibbsConfig(50, 20, seed=1), m=60
            )
            assert draws.draws.shape == (30, 19)
            assert np.all(np.isfinite(draws.draws))
            assert trace is None  # not recorded

    def test_shrinkage_trace_recorded(self):
        data = generate_vm_chain(3, 40, seed=7)
        _, trace = fit_torus_ncbayes(
            data, "grouped", GibbsConfig(30, 10, seed=2), record_shrinkage=True
        )
        assert trace.tau2.shape == (30,)
        assert trace.lam2.shape == (30, 6)
        assert trace.u2.shape == (30, 3)

    def test_tau_fixed_requires_shrinkage(self):
        data = generate_vm_chain(3, 30, seed=8)
        with pytest.raises(ValueError):
            fit_torus_ncbayes(data, "gaussian", GibbsConfig(20, 5), tau_fixed=True)

    def test_bad_mode_and_noise_update(self):
        data = generate_vm_chain(3, 30, seed=8)
        with pytest.raises(ValueError):
            fit_torus_ncbayes(data, "spike-slab", GibbsConfig(20, 5))
        with pytest.raises(ValueError):
            fit_torus_ncbayes(data, "gaussian", GibbsConfig(20, 5), noise_update="maybe")

    def test_adaptive_noise_update_runs(self):
        data = generate_vm_chain(3, 40, seed=9)
        draws, _ = fit_torus_ncbayes(
            data, "horseshoe", GibbsConfig(120, 40, seed=3), noise_update="on"
        )
        assert draws.ess_events is not None
        assert draws.refreshed

    def test_determinism(self):
        data = generate_vm_chain(3, 40, seed=10)
        a, _ = fit_torus_ncbayes(data, "grouped", GibbsConfig(40, 10, seed=4))
        b, _ = fit_torus_ncbayes(data, "grouped", GibbsConfig(40, 10, seed=4))
        np.testing.assert_array_equal(a.draws, b.draws)
