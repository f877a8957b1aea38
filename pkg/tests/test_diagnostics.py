import math

import numpy as np
import pytest

from polymerlab import diagnostics as D
from polymerlab import environment as E
from polymerlab import walk as W

GAUSS = E.EnvModel(E.GAUSSIAN)


def walk15(tol=1e-2):
    return W.build_walk(1.5, W.constant_L(1.0), 0.5, tail_tolerance=tol)


def walk08(tol=5e-2):
    return W.build_walk(0.8, W.constant_L(1.0), 0.3, tail_tolerance=tol)


class TestFreeEnergy:
    def test_beta_zero_exact(self):
        fe = D.free_energy(GAUSS, walk15(), 0.0, 64, 10, 1)
        assert fe.p_hat == 0.0 and fe.se == 0.0

    def test_jensen_nonpositive(self):
        for beta in (0.3, 0.8):
            fe = D.free_energy(GAUSS, walk15(), beta, 48, 60, 2)
            assert fe.p_hat <= 3 * fe.se

    def test_replicas_guard(self):
        with pytest.raises(ValueError):
            D.free_energy(GAUSS, walk15(), 0.5, 8, 1, 0)

    def test_seed_sharing_agreement(self):
        # same-seed and fresh-seed estimates agree within 3 joint SE
        w = walk15()
        a = D.free_energy(GAUSS, w, 0.6, 32, 120, 5)
        b = D.free_energy(GAUSS, w, 0.6, 32, 120, 2001)
        joint = math.hypot(a.se, b.se)
        assert abs(a.p_hat - b.p_hat) < 3 * joint


class TestFractionalMoment:
    def test_N_zero_exact(self):
        fm = D.fractional_moment(GAUSS, walk15(), 0.7, 0.5, [0, 16, 32], 40, 3)
        assert fm.means[0] == 1.0 and fm.ses[0] == 0.0

    def test_jensen_bound(self):
        fm = D.fractional_moment(GAUSS, walk15(), 0.7, 0.5, [8, 16, 32], 60, 4)
        assert np.all(fm.means <= 1.0 + 3 * fm.ses)

    def test_decay_at_strong_disorder(self):
        fm = D.fractional_moment(GAUSS, walk15(), 2.0, 0.5, [16, 32, 64], 200, 5)
        assert fm.rate + D.Z99 * fm.rate_se < 0.0

    def test_theta_validated(self):
        with pytest.raises(ValueError):
            D.fractional_moment(GAUSS, walk15(), 0.5, 1.2, [8], 10, 0)


class TestRecursionTrace:
    def test_closed_form_product_zero_tails(self):
        b = np.arange(1.0, 21.0)
        u = D.fractional_moment_recursion_trace(0.5, 2.0, b, np.zeros(20))
        expected = np.exp(-1.0 * np.cumsum(1.0 / b))
        assert np.max(np.abs(u[1:] - expected)) < 1e-12

    def test_constant_b_geometric(self):
        u = D.fractional_moment_recursion_trace(0.5, 3.0, [4.0] * 10, [0.0] * 10)
        ratio = u[1:] / u[:-1]
        assert np.max(np.abs(ratio - math.exp(-3.0 / 8.0))) < 1e-12

    def test_divergent_inverse_sum_drives_to_eps(self):
        # b_n = a_n log n for alpha=1.5 keeps sum 1/b_n divergent, so the
        # envelope decays to eps
        w = walk15()
        seq = W.scaling_sequence(w, 4000)
        ns = np.arange(2, 4001)
        b = seq.values[1:] * np.log(ns)
        t = np.full(len(b), 1e-6)
        u = D.fractional_moment_recursion_trace(0.5, 2.0, b, t)
        eps = 2.0 * 1e-6**0.5
        assert u[-1] - eps < 0.05 * (1.0 - eps)
        assert np.sum(1.0 / b) > 2.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            D.fractional_moment_recursion_trace(0.5, -1.0, [1.0], [0.0])
        with pytest.raises(ValueError):
            D.fractional_moment_recursion_trace(0.5, 1.0, [0.0], [0.0])


class TestOverlapRatio:
    def test_beta_zero_all_flagged(self):
        rs = D.overlap_log_ratio(GAUSS, walk15(), 0.0, [8], 10, 0)
        assert rs.excluded[8] == 10
        assert len(rs.ratios[8]) == 0

    def test_ratios_positive(self):
        rs = D.overlap_log_ratio(GAUSS, walk15(), 2.0, [16, 32], 30, 1)
        for N in (16, 32):
            assert np.all(rs.ratios[N] > 0)


class TestCriteria:
    def test_weak_inapplicable_recurrent(self):
        res = D.weak_disorder_criterion(GAUSS, walk15(), 0.5)
        assert res.verdict == "inapplicable"

    def test_weak_beta_zero_always_holds_transient(self):
        res = D.weak_disorder_criterion(GAUSS, walk08(), 0.0, horizon=1 << 10)
        assert res.verdict == "holds"

    def test_weak_gaussian_threshold_algebra(self):
        # gaussian: lambda(2b) - 2 lambda(b) = b^2, so the criterion is
        # b^2 < -log pi_p, with threshold sqrt(-log pi_p)
        w = walk08()
        pi = W.intersection_probability(w, 1 << 10)
        thr = math.sqrt(-math.log(pi.value))
        below = D.weak_disorder_criterion(GAUSS, w, 0.5 * thr, pi_estimate=pi)
        above = D.weak_disorder_criterion(GAUSS, w, 2.0 * thr, pi_estimate=pi)
        assert below.verdict == "holds"
        assert above.verdict == "fails"

    def test_strong_beta_zero_fails(self):
        res = D.strong_disorder_criterion(GAUSS, walk15(), 0.0)
        assert res.verdict == "fails"

    def test_strong_gaussian_threshold_and_low_temperature(self):
        w = walk15()
        ent = W.walk_entropy(w)
        thr = math.sqrt(2.0 * ent.value)
        assert D.strong_disorder_criterion(GAUSS, w, 0.9 * thr).verdict == "fails"
        assert D.strong_disorder_criterion(GAUSS, w, 2.0 * thr).verdict == "holds"

    def test_mutual_exclusion_on_grid(self):
        w = walk08()
        pi = W.intersection_probability(w, 1 << 10)
        for beta in np.linspace(0.0, 3.0, 13):
            weak = D.weak_disorder_criterion(GAUSS, w, beta, pi_estimate=pi)
            strong = D.strong_disorder_criterion(GAUSS, w, beta)
            assert not (weak.verdict == "holds" and strong.verdict == "holds")


class TestScaledEndpointDistance:
    def test_beta_zero_exact_zero(self):
        ds = D.scaled_endpoint_distance(GAUSS, walk15(), 0.0, 32, 5, 0)
        assert ds.mean == 0.0

    def test_range(self):
        ds = D.scaled_endpoint_distance(GAUSS, walk15(), 0.8, 32, 20, 1)
        assert np.all(ds.per_replica >= 0.0) and np.all(ds.per_replica <= 1.0)

    def test_decreasing_in_weak_disorder(self):
        # two-point monotonicity at a beta inside the weak-disorder region
        w = walk08()
        pi = W.intersection_probability(w, 1 << 10)
        beta = 0.5 * math.sqrt(-math.log(pi.value))
        d128 = D.scaled_endpoint_distance(GAUSS, w, beta, 128, 30, 37)
        d512 = D.scaled_endpoint_distance(GAUSS, w, beta, 512, 30, 37)
        assert d512.mean < d128.mean


class TestSecondMomentOracle:
    def test_beta_zero_is_one(self):
        assert D.zhat_second_moment(walk15(), GAUSS, 0.0, 16) == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_two_walk_enumeration(self):
        # independent oracle: enumerate the pair walk (S1, S2) directly
        w = W.build_walk(1.5, W.constant_L(1.0), 0.4, tail_cut=1)
        beta, N = 0.8, 3
        gamma2 = math.exp(E.lambda_(GAUSS, 2 * beta) - 2 * E.lambda_(GAUSS, beta))
        kernel = w.kernel
        ks = [-1, 0, 1]
        import itertools
        total = 0.0
        for s1 in itertools.product(range(3), repeat=N):
            for s2 in itertools.product(range(3), repeat=N):
                wgt = 1.0
                x1 = x2 = 0
                for a, b in zip(s1, s2):
                    x1 += ks[a]
                    x2 += ks[b]
                    wgt *= kernel[a] * kernel[b]
                    if x1 == x2:
                        wgt *= gamma2
                total += wgt
        assert abs(D.zhat_second_moment(w, GAUSS, beta, N) - math.log(total)) < 1e-12


class TestPhaseScan:
    def test_empty_grid(self):
        cfg = D.ScanConfig(alphas=(), betas=(), N=16, replicas=4)
        assert D.phase_scan(cfg) == []

    def test_determinism(self):
        cfg = D.ScanConfig(alphas=(1.5,), betas=(0.5,), N=16, replicas=8,
                           fm_grid=(8, 16), master_seed=5)
        a = D.phase_scan(cfg)
        b = D.phase_scan(cfg)
        assert a[0].p_hat == b[0].p_hat and a[0].fm_rate == b[0].fm_rate

    def test_p_hat_monotone_in_beta_with_shared_seeds(self):
        # seed sharing across beta within an alpha slice makes the
        # monotone trend visible above the MC noise
        cfg = D.ScanConfig(alphas=(1.5,), betas=(0.0, 0.4, 0.8, 1.2), N=48,
                           replicas=48, fm_grid=(24, 48), master_seed=21)
        rows = D.phase_scan(cfg)
        for a, b in zip(rows, rows[1:]):
            assert b.p_hat <= a.p_hat + 3 * max(a.p_se or 0.0, b.p_se)

    def test_verdicts_and_columns(self):
        cfg = D.ScanConfig(alphas=(0.8, 1.5), betas=(0.0, 0.2, 2.5), N=24, replicas=16,
                           fm_grid=(12, 24), master_seed=9, pi_horizon=1 << 10)
        rows = D.phase_scan(cfg)
        assert len(rows) == 6
        by_key = {(r.alpha, r.beta): r for r in rows}
        assert by_key[(0.8, 0.2)].verdict == "weak-consistent"
        assert by_key[(1.5, 2.5)].verdict == "very-strong-consistent"
        for r in rows:
            assert r.error == ""
