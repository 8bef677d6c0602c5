import csv
import io
import json

import numpy as np
import pytest

from oracles import brute_force_matched_distance, dense_gaussian_blur, least_squares_step
from radialnets import inverse
from radialnets.activation import DerivativeUnavailable, heaviside, sigmoid
from radialnets.fields import Grid, GridMismatch, SampledField
from radialnets.inverse import (Diverged, GaussNewtonTrace, IterationRecord, LinearOperator,
                                PinvResult, RankCollapse, apply_operator, assemble_jacobian,
                                convergence_order, forward_map, gauss_newton,
                                independence_diagnostic, matched_param_error, pinv_step)
from radialnets.networks import RQNN, eval_network, random_rqnn, rqnn_from_centers

SIG = sigmoid()
GRID = Grid.cell_centered(-3.0, 3.0, (64,))


def problem(seed=0, N=2, offset=1e-3):
    rng = np.random.default_rng(seed)
    p_true = random_rqnn(rng, 1, N, spread=1.0)
    delta = rng.normal(size=p_true.n_star)
    p0 = p_true.with_flat(p_true.flatten() + offset * delta / np.linalg.norm(delta))
    return p_true, p0


def operators(grid):
    return [LinearOperator.identity(grid), LinearOperator.cumulative_integration(grid),
            LinearOperator.gaussian_blur(grid, 0.2)]


class TestOperators:
    def test_linearity(self):
        rng = np.random.default_rng(0)
        for F in operators(GRID):
            a, b = rng.normal(size=64), rng.normal(size=64)
            np.testing.assert_allclose(F.apply_values(2.5 * a - b),
                                       2.5 * F.apply_values(a) - F.apply_values(b), atol=1e-13)

    def test_identity_exact(self):
        v = np.random.default_rng(1).normal(size=64)
        np.testing.assert_array_equal(LinearOperator.identity(GRID).apply_values(v), v)

    def test_integration_of_one(self):
        h = GRID.spacing[0]
        out = LinearOperator.cumulative_integration(GRID).apply_values(np.ones(64))
        x = GRID.axes()[0]
        np.testing.assert_allclose(out, x + 3.0 + h / 2, rtol=1e-13)

    def test_integration_2d_runs_along_first_axis(self):
        g = Grid.cell_centered([0, 0], [1, 1], (4, 3))
        v = np.arange(12.0).reshape(4, 3)
        out = LinearOperator.cumulative_integration(g).apply_values(v)
        np.testing.assert_allclose(out, np.cumsum(v, axis=0) * 0.25)

    def test_blur_against_dense_convolution(self):
        g = Grid.cell_centered(0.0, 10.0, (200,))
        v = np.random.default_rng(2).normal(size=200)
        F = LinearOperator.gaussian_blur(g, 3 * g.spacing[0])
        np.testing.assert_allclose(F.apply_values(v), dense_gaussian_blur(v, 3.0), atol=1e-13)

    def test_blur_preserves_mass(self):
        g = Grid.cell_centered(-10.0, 10.0, (400,))
        f = SampledField.sample(g, lambda x: np.exp(-x[..., 0] ** 2))
        blurred = apply_operator(LinearOperator.gaussian_blur(g, 0.5), f)
        assert blurred.integral() == pytest.approx(f.integral(), rel=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            LinearOperator("fourier", GRID, GRID)
        with pytest.raises(ValueError):
            LinearOperator.gaussian_blur(GRID, 0.0)
        with pytest.raises(ValueError):
            LinearOperator.user_matrix(np.eye(3), GRID)

    def test_user_matrix(self):
        small = Grid.cell_centered(0, 1, (3,))
        M = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(
            LinearOperator.user_matrix(M, small).apply_values([1.0, 0.0, -1.0]), [-2, -2, -2])

    def test_grid_mismatch(self):
        other = SampledField.zeros(Grid.cell_centered(-3, 3, (65,)))
        with pytest.raises(GridMismatch):
            apply_operator(LinearOperator.identity(GRID), other)


class TestForwardMap:
    def test_constant_network(self):
        net = RQNN(alpha=np.ones(1), w=np.zeros((1, 1)), xi=np.zeros(1), theta=np.zeros(1))
        np.testing.assert_array_equal(
            forward_map(LinearOperator.identity(GRID), net, SIG).values, 0.5)
        h = GRID.spacing[0]
        np.testing.assert_allclose(
            forward_map(LinearOperator.cumulative_integration(GRID), net, SIG).values,
            0.5 * h * np.arange(1, 65), rtol=1e-14)

    def test_heaviside_rejected(self):
        p, _ = problem()
        with pytest.raises(DerivativeUnavailable):
            forward_map(LinearOperator.identity(GRID), p, heaviside())


class TestJacobian:
    @pytest.mark.parametrize("op", range(3))
    def test_against_finite_differences(self, op):
        F = operators(GRID)[op]
        p, _ = problem(seed=3)
        J = assemble_jacobian(F, p, SIG)
        flat, step = p.flatten(), 1e-6
        fd = np.empty_like(J)
        for s in range(flat.size):
            e = np.zeros_like(flat)
            e[s] = step
            hi = F.apply_values(eval_network(p.with_flat(flat + e), SIG, GRID.nodes()))
            lo = F.apply_values(eval_network(p.with_flat(flat - e), SIG, GRID.nodes()))
            fd[:, s] = (hi - lo) / (2 * step)
        assert np.linalg.norm(J - fd) / np.linalg.norm(fd) <= 1e-5

    def test_full_rank_generic(self):
        p = random_rqnn(np.random.default_rng(4), 1, 3)
        diag = independence_diagnostic(assemble_jacobian(LinearOperator.identity(GRID), p, SIG))
        assert diag["rank_at_tol"] == 12

    def test_duplicated_neuron_is_rank_deficient(self):
        p = rqnn_from_centers([1.0, 1.0], [[0.2], [0.2]], [-1.0, -1.0], [1.0, 1.0])
        diag = independence_diagnostic(assemble_jacobian(LinearOperator.identity(GRID), p, SIG))
        assert diag["rank_at_tol"] == 4
        assert diag["sigma_min"] <= 1e-12 * diag["sigma_max"]


class TestPinv:
    def test_matches_lstsq(self):
        rng = np.random.default_rng(5)
        J, r = rng.normal(size=(30, 6)), rng.normal(size=30)
        res = pinv_step(J, r)
        np.testing.assert_allclose(res.step, least_squares_step(J, r), atol=1e-12)
        assert res.rank == 6

    def test_normal_equations(self):
        rng = np.random.default_rng(6)
        J, r = rng.normal(size=(40, 8)), rng.normal(size=40)
        s = pinv_step(J, r).step
        np.testing.assert_allclose(J.T @ (J @ s - r), 0.0, atol=1e-11)

    def test_moore_penrose_axioms(self):
        rng = np.random.default_rng(7)
        J = rng.normal(size=(10, 3)) @ rng.normal(size=(3, 6))  # rank 3
        P = np.column_stack([pinv_step(J, e).step for e in np.eye(10)])
        np.testing.assert_allclose(J @ P @ J, J, atol=1e-12)
        np.testing.assert_allclose(P @ J @ P, P, atol=1e-12)
        np.testing.assert_allclose(J @ P, (J @ P).T, atol=1e-12)
        np.testing.assert_allclose(P @ J, (P @ J).T, atol=1e-12)
        assert pinv_step(J, np.ones(10)).rank == 3

    def test_minimum_norm(self):
        # the step is orthogonal to the null space
        J = np.array([[1.0, 1.0]])
        np.testing.assert_allclose(pinv_step(J, [2.0]).step, [1.0, 1.0])

    def test_zero_matrix(self):
        res = pinv_step(np.zeros((4, 2)), np.ones(4))
        assert res.rank_zero
        np.testing.assert_array_equal(res.step, 0.0)

    def test_diagnostic_examples(self):
        d = independence_diagnostic(np.eye(3))
        assert (d["sigma_min"], d["sigma_max"], d["condition"], d["rank_at_tol"]) == (1, 1, 1, 3)
        d = independence_diagnostic(np.outer([1.0, 2.0], [3.0, 4.0]))
        assert d["rank_at_tol"] == 1 and d["condition"] > 1e14


class TestMatchedError:
    @pytest.mark.parametrize("N", [4, 7])
    def test_against_brute_force(self, N):
        rng = np.random.default_rng(N)
        a, b = random_rqnn(rng, 2, N), random_rqnn(rng, 2, N)
        rows = lambda p: np.column_stack([p.alpha, p.w, p.xi, p.theta])  # noqa: E731
        assert matched_param_error(a, b) == pytest.approx(
            brute_force_matched_distance(rows(a), rows(b)), rel=1e-12)

    def test_relabelled_copy(self):
        p = random_rqnn(np.random.default_rng(9), 2, 5)
        perm = [3, 0, 4, 1, 2]
        q = RQNN(alpha=p.alpha[perm], w=p.w[perm], xi=p.xi[perm], theta=p.theta[perm])
        assert matched_param_error(p, q) == 0.0

    def test_shape_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            matched_param_error(random_rqnn(rng, 1, 2), random_rqnn(rng, 1, 3))


class TestGaussNewton:
    def test_start_at_truth(self):
        p, _ = problem()
        F = LinearOperator.identity(GRID)
        trace = gauss_newton(F, SIG, forward_map(F, p, SIG), p, p_true=p)
        assert len(trace.records) == 1 and trace.converged
        assert trace.final.residual_norm == 0.0 and trace.final.param_error == 0.0

    @pytest.mark.parametrize("kind", ["identity", "cumulative-integration"])
    def test_quadratic_convergence(self, kind):
        F = operators(GRID)[["identity", "cumulative-integration"].index(kind)]
        p_true, p0 = problem()
        trace = gauss_newton(F, SIG, forward_map(F, p_true, SIG), p0, p_true=p_true)
        assert trace.converged and len(trace.records) <= 7
        e = trace.column("param_error")
        assert e[-1] <= 1e-10
        # e_{k+1} <= C e_k^2 while e_{k+1} is still above roundoff
        big = e[1:] > 1e-10
        assert np.all(e[1:][big] <= 10.0 * e[:-1][big] ** 2)
        q, _, pairs = convergence_order(e)
        assert pairs >= 2 and q >= 1.8

    def test_relabelling_invariance(self):
        F = LinearOperator.identity(GRID)
        p_true, p0 = problem(seed=1)
        swap = lambda p: RQNN(alpha=p.alpha[::-1], w=p.w[::-1], xi=p.xi[::-1],  # noqa: E731
                              theta=p.theta[::-1])
        y = forward_map(F, p_true, SIG)
        a = gauss_newton(F, SIG, y, p0, p_true=p_true)
        b = gauss_newton(F, SIG, y, swap(p0), p_true=swap(p_true))
        ra, rb = a.column("residual_norm"), b.column("residual_norm")
        assert len(ra) == len(rb)
        keep = ra > 1e-10
        np.testing.assert_allclose(ra[keep], rb[keep], rtol=1e-6)

    def test_non_attainable_stagnates(self):
        F = LinearOperator.identity(GRID)
        p_true, p0 = problem(seed=2)
        y = forward_map(F, p_true, SIG)
        noise = np.random.default_rng(0).normal(size=64)
        noise *= 1e-3 / SampledField(GRID, noise).l2_norm()
        trace = gauss_newton(F, SIG, y + SampledField(GRID, noise), p0, max_iter=10,
                             p_true=p_true)
        assert not trace.converged and trace.reason == "max_iter reached"
        res = trace.column("residual_norm")
        assert 0.5e-3 <= res[-1] <= 1e-3
        np.testing.assert_allclose(res[-3:], res[-1], rtol=1e-6)

    def test_rank_collapse(self):
        p = rqnn_from_centers([1.0, 1.0], [[0.2], [0.2]], [-1.0, -1.0], [1.0, 1.0])
        target = random_rqnn(np.random.default_rng(0), 1, 2)
        F = LinearOperator.identity(GRID)
        with pytest.raises(RankCollapse) as info:
            gauss_newton(F, SIG, forward_map(F, target, SIG), p)
        assert info.value.trace.reason == "rank collapse"
        assert len(info.value.trace.records) == 1

    def test_divergence_detected(self, monkeypatch):
        # a step of -p doubles every parameter, so the residual keeps growing
        monkeypatch.setattr(inverse, "pinv_step", lambda J, r, tol: PinvResult(
            -current["flat"], 8, 1.0, 1.0))
        F = LinearOperator.identity(GRID)
        p_true, p0 = problem()
        current = {"flat": p0.flatten()}
        real_forward = inverse.forward_map

        def tracking(F, p, act, grid=None):
            current["flat"] = p.flatten()
            return real_forward(F, p, act, grid)

        monkeypatch.setattr(inverse, "forward_map", tracking)
        with pytest.raises(Diverged) as info:
            gauss_newton(F, SIG, forward_map(F, p_true, SIG), p0, max_iter=30)
        assert info.value.trace.reason == "diverged"
        assert len(info.value.trace.records) < 30

    def test_non_finite_start(self):
        p, _ = problem()
        bad = p.with_flat(np.full(p.n_star, np.nan))
        F = LinearOperator.identity(GRID)
        with pytest.raises(ValueError):
            gauss_newton(F, SIG, forward_map(F, p, SIG), bad)

    def test_data_grid_checked(self):
        p, _ = problem()
        with pytest.raises(GridMismatch):
            gauss_newton(LinearOperator.identity(GRID), SIG,
                         SampledField.zeros(Grid.cell_centered(-3, 3, (32,))), p)


class TestTrace:
    def run(self):
        F = LinearOperator.identity(GRID)
        p_true, p0 = problem()
        return gauss_newton(F, SIG, forward_map(F, p_true, SIG), p0, p_true=p_true)

    def test_csv(self, tmp_path):
        trace = self.run()
        trace.write(tmp_path / "t.csv", tmp_path / "t.json")
        rows = list(csv.DictReader(io.StringIO((tmp_path / "t.csv").read_text())))
        assert len(rows) == len(trace.records)
        assert [int(r["iteration"]) for r in rows] == list(range(len(rows)))
        assert float(rows[0]["residual_norm"]) == trace.records[0].residual_norm

    def test_json(self):
        trace = self.run()
        doc = json.loads(trace.to_json())
        assert doc["converged"] is True
        np.testing.assert_array_equal(doc["records"][-1]["p"], trace.final.p)

    def test_consecutive_iterations(self):
        trace = GaussNewtonTrace()
        rec = IterationRecord(1, np.zeros(4), 0.0, 0.0, 1.0, 1.0, 0.0, True)
        with pytest.raises(ValueError):
            trace.append(rec)


class TestConvergenceOrder:
    def test_exact_quadratic(self):
        e = [1e-1, 1e-2, 1e-4, 1e-8]
        q, C, pairs = convergence_order(e)
        assert pairs == 3
        assert q == pytest.approx(2.0, rel=1e-10) and C == pytest.approx(1.0, rel=1e-8)

    def test_stops_at_rounding_plateau(self):
        # the last ratio (1e-2) is larger than the previous one (1e-6)
        q, _, pairs = convergence_order([1e-3, 1e-6, 1e-12, 1e-14])
        assert pairs == 2 and q == pytest.approx(2.0, rel=1e-10)

    def test_floor_and_too_short(self):
        q, _, pairs = convergence_order([1e-3, 1e-6, 1e-15, 1e-16])
        assert pairs == 1 and np.isnan(q)
        assert convergence_order([1.0, 2.0])[2] == 0
