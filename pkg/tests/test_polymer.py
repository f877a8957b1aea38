import itertools
import math

import numpy as np
import pytest

from polymerlab import environment as E
from polymerlab import polymer as P
from polymerlab import walk as W

GAUSS = E.EnvModel(E.GAUSSIAN)


def tiny_walk(K=3, p0=0.4):
    return W.build_walk(1.5, W.constant_L(1.0), p0, tail_cut=K)


def enumerate_paths(field, walk, beta, N, allowed=None):
    """Brute-force oracle: every path of the truncated walk, Gibbs-weighted."""
    lam = E.lambda_(field.env, beta) if beta else 0.0
    ks = np.arange(-walk.K, walk.K + 1)
    zhat = 0.0
    endpoint = {}
    for steps in itertools.product(range(len(ks)), repeat=N):
        x, wgt = 0, 1.0
        for n, si in enumerate(steps, start=1):
            x += int(ks[si])
            if allowed is not None and not allowed(n, x):
                wgt = 0.0
                break
            wgt *= walk.kernel[si] * math.exp(beta * field.omega(n, x) - lam)
        if wgt:
            zhat += wgt
            endpoint[x] = endpoint.get(x, 0.0) + wgt
    return zhat, endpoint


class TestStep:
    def test_init_state(self):
        st = P.init_state()
        assert st.n == 0 and st.log_zhat == 0.0 and st.leaked_mass == 0.0
        assert st.rho.tolist() == [1.0] and st.window == (0, 0)

    def test_single_step_closed_form(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 11, 0)
        beta = 0.9
        lam = E.lambda_(GAUSS, beta)
        st = P.step(P.init_state(), f, w, beta)
        xs = np.arange(-w.K, w.K + 1)
        direct = sum(w.kernel[k + w.K] * math.exp(beta * f.omega(1, k) - lam) for k in xs)
        assert abs(math.exp(st.log_zhat) - direct) < 1e-14

    def test_beta_zero_gives_free_marginal(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 3, 0)
        st = P.run(f, w, 0.0, 5, leak_budget=1.0)
        rho = np.array([1.0])
        for _ in range(5):
            rho = np.convolve(rho, w.kernel)
        assert abs(st.log_zhat) < 1e-13
        assert np.max(np.abs(st.rho - rho / rho.sum())) < 1e-13

    def test_enumeration_oracle(self):
        w = tiny_walk()
        beta = 0.7
        for seed in range(3):
            f = E.EnvField(GAUSS, seed, 0)
            z_o, ep_o = enumerate_paths(f, w, beta, 3)
            st = P.run(f, w, beta, 3, leak_budget=1.0)
            assert abs(st.log_zhat - math.log(z_o)) < 1e-12
            xs, rho = P.endpoint_law(st)
            tot = sum(ep_o.values())
            for x, m in zip(xs, rho):
                assert abs(m - ep_o.get(int(x), 0.0) / tot) < 1e-12

    def test_constrained_enumeration_oracle(self):
        w = tiny_walk(K=2)
        beta = 0.5
        c = P.PathConstraint("global-window", r=3)
        f = E.EnvField(GAUSS, 8, 0)
        z_o, _ = enumerate_paths(f, w, beta, 3, allowed=lambda n, x: abs(x) < 3)
        st = P.run(f, w, beta, 3, constraint=c, leak_budget=1.0)
        assert abs(st.log_zhat - math.log(z_o)) < 1e-12

    def test_constraint_never_increases_zhat(self):
        w = tiny_walk()
        for seed in range(5):
            f = E.EnvField(GAUSS, seed, 0)
            free = P.run(f, w, 1.1, 6, leak_budget=1.0)
            boxed = P.run(f, w, 1.1, 6, constraint=P.PathConstraint("global-window", r=4),
                          leak_budget=1.0)
            assert boxed.log_zhat <= free.log_zhat + 1e-12

    def test_inactive_constraint_identical(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 21, 0)
        free = P.run(f, w, 0.8, 4, leak_budget=1.0)
        boxed = P.run(f, w, 0.8, 4, leak_budget=1.0,
                      constraint=P.PathConstraint("global-window", r=w.K * 4 + 1))
        assert free.log_zhat == boxed.log_zhat

    def test_leak_budget_enforced(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 2, 0)
        with pytest.raises(P.LeakBudgetError):
            P.run(f, w, 0.5, 50, leak_budget=0.0, trim_rel=1e-3)

    def test_run_is_iterated_step(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 14, 0)
        st = P.init_state()
        for _ in range(5):
            st = P.step(st, f, w, 0.8, leak_budget=1.0)
        direct = P.run(f, w, 0.8, 5, leak_budget=1.0)
        assert st.log_zhat == direct.log_zhat
        assert np.array_equal(st.rho, direct.rho)

    def test_large_beta_single_step_concentrates(self):
        # at N = 1 the endpoint law is proportional to q(x) e^(beta w(1,x));
        # at large beta it collapses onto the maximizing site
        w = tiny_walk()
        f = E.EnvField(GAUSS, 17, 0)
        beta = 60.0
        st = P.step(P.init_state(), f, w, beta, leak_budget=1.0)
        xs, rho = P.endpoint_law(st)
        support = np.arange(-w.K, w.K + 1)
        scores = np.log(w.kernel) + beta * f.omega_row(1, support)
        best_site = int(support[np.argmax(scores)])
        assert int(xs[np.argmax(rho)]) == best_site
        assert rho.max() > 0.99

    def test_endpoint_shift_invariance(self):
        # adding a constant to omega at the last time rescales every site
        # weight equally, so the endpoint law and its argmax cannot move
        w = tiny_walk()
        base = E.EnvField(GAUSS, 13, 0)

        class Shifted:
            env = GAUSS

            def omega_row(self, n, xs):
                v = base.omega_row(n, xs)
                return v + 2.5 if n == 4 else v

        st0 = P.run(base, w, 0.9, 4, leak_budget=1.0)
        st1 = P.run(Shifted(), w, 0.9, 4, leak_budget=1.0)
        assert np.max(np.abs(st0.rho - st1.rho)) < 1e-12
        assert int(np.argmax(st0.rho)) == int(np.argmax(st1.rho))


class TestOverlap:
    def test_beta_zero_single_step(self):
        w = tiny_walk(p0=0.5)
        st = P.init_state()
        val = P.overlap(st, w)
        assert abs(val - float(np.dot(w.kernel, w.kernel))) < 1e-14

    def test_range(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 4, 0)
        st = P.run(f, w, 1.3, 7, leak_budget=1.0)
        v = P.overlap(st, w)
        assert 0.0 < v <= 1.0

    @pytest.mark.parametrize("beta", [0.0, 0.8])
    def test_mc_matches_exact(self, beta):
        # beta = 0 reduces to a plain MC of the free collision probability
        w = tiny_walk()
        f = E.EnvField(GAUSS, 6, 0)
        st = P.run(f, w, beta, 15, leak_budget=1.0)
        exact = P.overlap(st, w)
        mc = P.two_replica_overlap_mc(f, w, beta, 16, 200_000, seed=5)
        assert abs(mc.estimate - exact) < 3 * mc.se

    def test_single_sample_degenerate(self):
        w = tiny_walk()
        f = E.EnvField(GAUSS, 6, 0)
        mc = P.two_replica_overlap_mc(f, w, 0.5, 4, 1)
        assert mc.degenerate and math.isnan(mc.se)


class TestBatchEngine:
    def test_matches_single_replica(self):
        w = W.build_walk(1.5, W.constant_L(1.0), 0.5, tail_tolerance=5e-2)
        res = P.run_replicas(w, GAUSS, 0.9, 8, 17, range(6), record_traces=True)
        for i in range(6):
            f = E.EnvField(GAUSS, 17, i)
            st, tr = P.run(f, w, 0.9, 8, record=True, leak_budget=1.0)
            assert abs(res.log_zhat[i] - st.log_zhat) < 1e-9
            assert np.allclose(res.overlap_trace[i], tr.overlap, atol=1e-12)
            assert np.allclose(res.max_mass_trace[i], tr.max_mass, atol=1e-12)
            assert np.array_equal(res.argmax_trace[i], tr.argmax_x)

    def test_batch_partition_thread_invariance(self):
        w = W.build_walk(1.5, W.constant_L(1.0), 0.5, tail_tolerance=5e-2)
        a = P.run_replicas(w, GAUSS, 0.7, 8, 5, range(40), batch_size=16, threads=1)
        b = P.run_replicas(w, GAUSS, 0.7, 8, 5, range(40), batch_size=16, threads=4)
        assert np.array_equal(a.log_zhat, b.log_zhat)

    def test_checkpoints(self):
        w = tiny_walk()
        res = P.run_replicas(w, GAUSS, 0.6, 8, 9, range(4), checkpoints=(4, 8))
        assert np.array_equal(res.checkpoints[8], res.log_zhat)
        partial = P.run_replicas(w, GAUSS, 0.6, 4, 9, range(4))
        assert np.allclose(res.checkpoints[4], partial.log_zhat, atol=1e-12)

    @pytest.mark.parametrize("env", [
        GAUSS,
        E.EnvModel(E.RADEMACHER),
        E.tabulated([-1.0, 0.0, 2.0], [0.3, 0.4, 0.3]),
    ], ids=["gaussian", "rademacher", "tabulated"])
    def test_martingale_mean_with_exact_variance(self, env):
        from polymerlab.diagnostics import zhat_second_moment
        w = W.build_walk(1.5, W.constant_L(1.0), 0.5, tail_tolerance=1e-2)
        res = P.run_replicas(w, env, 0.4, 32, 23, range(1500))
        z = np.exp(res.log_zhat)
        se = math.sqrt((math.exp(zhat_second_moment(w, env, 0.4, 32)) - 1.0) / 1500)
        assert abs(z.mean() - 1.0) < 3 * se

    def test_free_marginal_helper(self):
        w = tiny_walk()
        lo, rho = P.free_marginal(w, 4)
        direct = np.array([1.0])
        for _ in range(4):
            direct = np.convolve(direct, w.kernel)
        assert lo == -4 * w.K
        assert np.max(np.abs(rho - direct)) < 1e-14


class TestPathConstraintValidation:
    def test_bad_kinds(self):
        with pytest.raises(ValueError):
            P.PathConstraint("nonsense")
        with pytest.raises(ValueError):
            P.PathConstraint("global-window", r=0)
        with pytest.raises(ValueError):
            P.PathConstraint("half-time-block", lo=3, hi=3)
