import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import in_ball
from radialnets.activation import DerivativeUnavailable, heaviside, sigmoid
from radialnets.networks import (ALNN, CUNN, DNN4, FAMILIES, GQNN, MCNN, RQNN, SBQNN,
                                 DimensionMismatch, ZeroCurvature, check_rqnn_constraint,
                                 complete_square, eval_network, fd_gradient, grad_dnn_w11,
                                 grad_rqnn, params_from_json, params_to_json, random_dnn4,
                                 random_rqnn, relative_error)

SIG = sigmoid()


def make_family(name, rng, n, N):
    alpha, w, theta = rng.normal(size=N), rng.normal(size=(N, n)), rng.normal(size=N)
    if name == "ALNN":
        return ALNN(alpha, w, theta)
    if name == "GQNN":
        return GQNN(alpha, w, theta, A=rng.normal(size=(N, n, n)))
    if name == "MCNN":
        return MCNN(alpha, w, theta, xi=rng.normal(size=N), fixed_A=rng.normal(size=(N, n, n)))
    if name == "RQNN":
        return RQNN(alpha, w, theta, xi=rng.normal(size=N))
    if name == "SBQNN":
        return SBQNN(alpha, w, theta)
    if name == "CUNN":
        return CUNN(alpha, w, theta)
    return random_dnn4(rng, N, N + 1)


N_STAR = {"ALNN": lambda n, N: (n + 2) * N, "GQNN": lambda n, N: (n * n + n + 2) * N,
          "MCNN": lambda n, N: (n + 3) * N, "RQNN": lambda n, N: (n + 3) * N,
          "SBQNN": lambda n, N: (n + 2) * N, "CUNN": lambda n, N: (n + 2) * N}


class TestEvaluation:
    def test_alnn_constant(self):
        net = ALNN([1.0], [[0.0, 0.0]], [0.0])
        x = np.random.default_rng(0).normal(size=(10, 2))
        np.testing.assert_array_equal(eval_network(net, SIG, x), 0.5)

    def test_rqnn_origin(self):
        net = RQNN([2.0], [[0.0]], [1.0], xi=[-1.0])
        assert eval_network(net, SIG, 0.0) == 2 * SIG(1.0)

    def test_gqnn_ball_indicator(self):
        # decision r^2 - |x|^2 is nonnegative exactly on the closed ball
        r = 0.7
        net = GQNN([3.0], [[0.0, 0.0]], [r * r], A=[-np.eye(2)])
        x = np.random.default_rng(1).uniform(-1, 1, size=(2000, 2))
        inside = in_ball(x, [0, 0], r)
        np.testing.assert_array_equal(eval_network(net, heaviside(), x), np.where(inside, 3.0, 0.0))

    def test_gqnn_positive_definite_form_as_written(self):
        # A = I, theta = -r^2 fires outside the ball: s(|x|^2 - r^2)
        r = 0.5
        net = GQNN([1.0], [[0.0, 0.0]], [-r * r], A=[np.eye(2)])
        x = np.random.default_rng(2).uniform(-1, 1, size=(500, 2))
        outside = ~in_ball(x, [0, 0], r)
        np.testing.assert_array_equal(eval_network(net, heaviside(), x) == 1.0,
                                      outside | np.isclose(np.sum(x * x, -1), r * r))

    def test_dimension_mismatch(self):
        net = random_rqnn(np.random.default_rng(0), 2, 3)
        with pytest.raises(DimensionMismatch):
            eval_network(net, SIG, np.zeros(3))

    def test_sbqnn_sign_at_zero(self):
        net = SBQNN([1.0], [[5.0, -2.0]], [0.0])
        assert eval_network(net, SIG, np.array([0.0, 0.0])) == 0.5
        x = np.array([-1.5, 2.0])
        assert eval_network(net, SIG, x) == pytest.approx(SIG(5 * -(1.5 ** 2) - 2 * 4.0))

    def test_cunn(self):
        net = CUNN([2.0], [[1.0, -1.0]], [0.5])
        x = np.array([0.5, 1.0])
        assert eval_network(net, SIG, x) == pytest.approx(2 * SIG(0.125 - 1.0 + 0.5))

    def test_gqnn_a_zero_is_alnn(self):
        rng = np.random.default_rng(4)
        a = make_family("ALNN", rng, 3, 5)
        g = GQNN(a.alpha, a.w, a.theta, A=np.zeros((5, 3, 3)))
        x = rng.normal(size=(200, 3))
        np.testing.assert_allclose(eval_network(g, SIG, x), eval_network(a, SIG, x), atol=1e-15)

    def test_mcnn_identity_is_rqnn(self):
        rng = np.random.default_rng(5)
        r = make_family("RQNN", rng, 2, 4)
        m = MCNN(r.alpha, r.w, r.theta, xi=r.xi, fixed_A=np.broadcast_to(np.eye(2), (4, 2, 2)))
        x = rng.normal(size=(200, 2))
        np.testing.assert_allclose(eval_network(m, SIG, x), eval_network(r, SIG, x), atol=1e-15)

    def test_gqnn_symmetrised(self):
        A = np.array([[[1.0, 4.0], [0.0, 2.0]]])
        net = GQNN([1.0], [[0.0, 0.0]], [0.0], A=A)
        np.testing.assert_array_equal(net.A[0], [[1.0, 2.0], [2.0, 2.0]])

    @pytest.mark.parametrize("name", ["ALNN", "GQNN", "MCNN", "RQNN", "SBQNN", "CUNN"])
    def test_permutation_invariance(self, name):
        rng = np.random.default_rng(6)
        net = make_family(name, rng, 2, 6)
        x = rng.normal(size=(50, 2))
        perm = rng.permutation(6)
        np.testing.assert_allclose(eval_network(net.permute(perm), SIG, x),
                                   eval_network(net, SIG, x), rtol=1e-14, atol=1e-15)


class TestLayout:
    @pytest.mark.parametrize("name", sorted(N_STAR))
    @pytest.mark.parametrize("n,N", [(1, 1), (2, 3), (3, 4)])
    def test_n_star_formula(self, name, n, N):
        net = make_family(name, np.random.default_rng(n * 10 + N), n, N)
        assert net.n_star == N_STAR[name](n, N) == net.flatten().size

    def test_dnn4_length(self):
        net = random_dnn4(np.random.default_rng(0), 3, 5)
        assert net.n_star == 24 == net.flatten().size

    def test_rqnn_block_order(self):
        net = RQNN([1.0, 2.0], [[3.0, 4.0], [5.0, 6.0]], [9.0, 10.0], xi=[7.0, 8.0])
        np.testing.assert_array_equal(net.flatten(), [1, 2, 3, 4, 5, 6, 7, 8, 9, 10])

    @pytest.mark.parametrize("name", ["ALNN", "GQNN", "MCNN", "RQNN", "SBQNN", "CUNN", "DNN4"])
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 3), N=st.integers(0, 4))
    @settings(max_examples=25, deadline=None)
    def test_flatten_round_trip(self, name, seed, n, N):
        net = make_family(name, np.random.default_rng(seed), n, N)
        assert net.with_flat(net.flatten()) == net
        if name != "DNN4":
            fixed = {"fixed_A": net.fixed_A} if name == "MCNN" else {}
            again = FAMILIES[name].unflatten(net.flatten(), n, N, **fixed)
            np.testing.assert_array_equal(again.flatten(), net.flatten())

    def test_unflatten_wrong_length(self):
        with pytest.raises(DimensionMismatch):
            RQNN.unflatten(np.zeros(7), 1, 2)

    @pytest.mark.parametrize("name", ["ALNN", "GQNN", "MCNN", "RQNN", "SBQNN", "CUNN", "DNN4"])
    def test_json_round_trip(self, name):
        net = make_family(name, np.random.default_rng(8), 2, 3)
        doc = json.loads(json.dumps(params_to_json(net)))
        assert doc["family"] == name
        assert params_from_json(doc) == net


class TestGradients:
    def test_zero_alpha(self):
        net = RQNN([0.0], [[0.3, -0.2]], [0.5], xi=[-1.0])
        x = np.array([0.4, 0.1])
        g = grad_rqnn(net, SIG, x)
        nu = 0.3 * 0.4 - 0.2 * 0.1 - (0.16 + 0.01) + 0.5
        assert g[0] == pytest.approx(SIG(nu), rel=1e-15)
        np.testing.assert_array_equal(g[1:], 0.0)

    def test_origin(self):
        net = random_rqnn(np.random.default_rng(1), 2, 3)
        g = grad_rqnn(net, SIG, np.zeros(2))
        np.testing.assert_array_equal(g[3:9], 0.0)
        np.testing.assert_array_equal(g[9:12], 0.0)

    def test_rqnn_matches_fd(self):
        rng = np.random.default_rng(2)
        errs = []
        for _ in range(50):
            net = random_rqnn(rng, 2, 3)
            x = rng.uniform(-1.5, 1.5, size=2)
            errs.append(relative_error(grad_rqnn(net, SIG, x), fd_gradient(net, SIG, x)))
        assert max(errs) <= 1e-6

    def test_rqnn_batch_shape(self):
        net = random_rqnn(np.random.default_rng(3), 3, 2)
        g = grad_rqnn(net, SIG, np.zeros((4, 5, 3)))
        assert g.shape == (4, 5, 12)

    def test_heaviside_rejected(self):
        net = random_rqnn(np.random.default_rng(0), 1, 1)
        with pytest.raises(DerivativeUnavailable):
            grad_rqnn(net, heaviside(), 0.3)
        with pytest.raises(DerivativeUnavailable):
            grad_dnn_w11(random_dnn4(np.random.default_rng(0), 2, 2), heaviside(), 0.3)

    def test_dnn_trivial_zeros(self):
        net = random_dnn4(np.random.default_rng(4), 2, 2)
        assert grad_dnn_w11(net, SIG, 0.0) == 0.0
        net0 = DNN4([0.0, 1.0], net.w1, net.theta1, net.alpha2, net.w2, net.theta2)
        assert grad_dnn_w11(net0, SIG, 0.8) == 0.0

    def test_dnn_matches_fd(self):
        rng = np.random.default_rng(5)
        errs = []
        for _ in range(50):
            net = random_dnn4(rng, 2, 2)
            x = float(rng.uniform(-2, 2))
            fd = fd_gradient(net, SIG, x)[net.N1 + net.N2]
            errs.append(relative_error(grad_dnn_w11(net, SIG, x), fd))
        assert max(errs) <= 1e-6


class TestCanonicalForm:
    def test_examples(self):
        f = complete_square(np.zeros(2), 1.0, -1.0)
        np.testing.assert_array_equal(f.center, 0.0)
        assert f.kappa == -1.0
        g = complete_square(np.array([2.0, 0.0]), 1.0, 1.0)
        np.testing.assert_array_equal(g.center, [-1.0, 0.0])
        assert g.kappa == 0.0

    def test_zero_curvature(self):
        with pytest.raises(ZeroCurvature):
            complete_square(np.ones(2), 0.0, 1.0)

    @given(w=arrays(float, 3, elements=st.floats(-5, 5)),
           xi=st.floats(0.1, 5).flatmap(lambda v: st.sampled_from([v, -v])),
           theta=st.floats(-5, 5), seed=st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_two_sided_evaluation(self, w, xi, theta, seed):
        form = complete_square(w, xi, theta)
        x = np.random.default_rng(seed).uniform(-3, 3, size=(100, 3))
        direct = xi * np.sum(x * x, -1) + x @ w + theta
        scale = 1 + np.max(np.abs(direct)) + np.sum(w * w) / abs(xi)
        np.testing.assert_allclose(form.nu(x), direct, atol=1e-12 * scale)

    def test_constraint_examples(self):
        net = RQNN([1.0, 1.0, 1.0, 1.0], [[0.0], [0.0], [3.0], [1.0]], [-1.0, 1.0, 0.0, 2.0],
                   xi=[1.0, 1.0, -4.0, 0.0])
        res = check_rqnn_constraint(net)
        assert [r.passes for r in res] == [True, False, False, True]
        assert res[1].kappa == 1.0
        assert res[3].affine and not res[0].affine
