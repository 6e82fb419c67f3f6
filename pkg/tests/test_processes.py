"""Unit tests for the process generators and their exact structure."""

from fractions import Fraction

import numpy as np
import pytest

from cltlab.processes import (
    DavydovChain,
    DensityGrid,
    ExpandingMap,
    FiniteKernel,
    FunctionOfLinear,
    IIDBaseline,
    InnovationLaw,
    LinearProcess,
    ProcessError,
    ProcessSpec,
    apply_h,
    davydov_kernel,
    davydov_schedule,
    invariant_density,
    iterate_map,
    long_run_variance,
    mds_functional,
    partial_sums_batch,
    sample_chain,
    sample_linear_process,
)


class TestInnovationLaw:
    def test_variances(self):
        assert InnovationLaw("gaussian").variance == 1.0
        assert InnovationLaw("rademacher").variance == 1.0
        assert InnovationLaw("uniform").variance == 1.0
        # [DERIVED] |eps| = U^{-1/q} has E eps^2 = q/(q-2)
        assert InnovationLaw("symmetric_pareto", q=3.0).variance == pytest.approx(3.0)

    def test_pareto_moments(self):
        law = InnovationLaw("symmetric_pareto", q=3.0)
        assert law.has_moment(2.5)
        assert not law.has_moment(3.0)

    def test_empirical_moments(self):
        rng = np.random.default_rng(0)
        for law in (
            InnovationLaw("gaussian"),
            InnovationLaw("rademacher"),
            InnovationLaw("uniform"),
            InnovationLaw("symmetric_pareto", q=6.0),
        ):
            x = law.sample(rng, 200000)
            assert abs(x.mean()) < 4 * x.std() / np.sqrt(x.size)
            assert x.var() == pytest.approx(law.variance, rel=0.15)

    def test_rejects_bad(self):
        with pytest.raises(ProcessError):
            InnovationLaw("cauchy")
        with pytest.raises(ProcessError):
            InnovationLaw("symmetric_pareto", q=1.5)


class TestDavydovSchedule:
    def test_small_i_is_half(self):
        assert davydov_schedule(2.5, 0.1, 0) == 0.5
        assert davydov_schedule(2.5, 0.1, 1) == 0.5

    def test_formula_value(self):
        # [DERIVED] direct formula evaluation at i = 100
        expect = 1.0 - (1.25 / 100.0) * (1.0 + 1.1 / np.log(100.0))
        assert davydov_schedule(2.5, 0.1, 100) == pytest.approx(expect, abs=1e-15)

    def test_limit_one(self):
        assert davydov_schedule(2.5, 0.1, 10**6) > 0.999

    def test_always_valid_probability(self):
        for i in range(0, 2000):
            a = davydov_schedule(2.5, 0.1, i)
            assert 0.5 <= a < 1.0


class TestDavydovKernel:
    def test_rows_and_center(self):
        k = davydov_kernel(lambda i: 0.5, 10)
        assert np.allclose(k.matrix.sum(axis=1), 1.0)
        zero = k.index_of(0)
        assert k.matrix[zero, zero] == 0.0  # no holding at 0
        assert k.matrix[zero, zero + 1] == 0.5

    def test_stationary_matches_power_iteration(self):
        # [DERIVED] power-iteration oracle
        k = davydov_kernel(lambda i: 0.5, 12)
        v = np.full(k.size, 1.0 / k.size)
        for _ in range(10**4):
            v = v @ k.matrix
        assert np.max(np.abs(v - k.stationary)) < 1e-10

    def test_boundary_redirected(self):
        k = davydov_kernel(lambda i: 0.5, 8)
        top = k.index_of(8)
        assert k.matrix[top, k.index_of(0)] == 1.0

    def test_symmetry(self):
        k = davydov_kernel(lambda i: davydov_schedule(2.5, 0.1, i), 50)
        pi = k.stationary
        flipped = pi[::-1]
        assert np.allclose(pi, flipped, atol=1e-14)

    def test_rejects_bad_rule(self):
        with pytest.raises(ProcessError):
            davydov_kernel(lambda i: 0.6, 10)  # a_0 != 1/2
        with pytest.raises(ProcessError):
            davydov_kernel(lambda i: 0.5 if i == 0 else 0.4, 10)


class TestMdsFunctional:
    def test_f1_values(self):
        k = davydov_kernel(lambda i: 0.5, 10)
        f = mds_functional("f1", k)
        z = k.index_of(0)
        assert f[z] == 0.0
        assert f[z + 1] == 1.0 and f[z - 1] == -1.0
        assert np.all(f[z + 2 :] == 0.0)

    def test_f2_values(self):
        k = davydov_kernel(lambda i: 0.5, 10)
        f = mds_functional("f2", k)
        z = k.index_of(0)
        assert f[z] == 1.0
        assert f[z + 1] == 0.0
        assert f[z + 2] == pytest.approx(1.0 - 1.0 / 0.5)

    def test_zero_conditional_mean_interior(self):
        rule = lambda i: davydov_schedule(2.7, 0.3, i)
        k = davydov_kernel(rule, 30)
        for kind in ("f1", "f2"):
            f = mds_functional(kind, k, rule)
            interior = np.abs(k.states) < 30
            assert np.max(np.abs(k.apply(f)[interior])) <= 1e-12


class TestSampleChain:
    def test_path_in_state_set(self):
        k = davydov_kernel(lambda i: 0.5, 6)
        path = sample_chain(k, 500, seed=9)
        assert np.all(np.isin(path, k.states))

    def test_replay(self):
        k = davydov_kernel(lambda i: 0.5, 6)
        a = sample_chain(k, 200, seed=3)
        b = sample_chain(k, 200, seed=3)
        assert np.array_equal(a, b)

    def test_frequencies_match_stationary(self):
        k = davydov_kernel(lambda i: 0.5, 6)
        path = sample_chain(k, 200000, seed=1)
        for s in (-1, 0, 1):
            freq = np.mean(path == s)
            p = k.stationary[k.index_of(s)]
            assert abs(freq - p) < 4 * np.sqrt(p * (1 - p) / path.size) + 2e-3


class TestLinearProcess:
    def test_identity_coefficients(self):
        lp = LinearProcess(lambda j: 1.0 if j == 0 else 0.0, truncation=3)
        x = sample_linear_process(lp, 50, seed=0)
        # a = delta_0 means X_k = eps_k: variance ~ 1
        assert x.var() < 3.0

    def test_geometric_autocovariance(self):
        # [DERIVED] a_j = rho^j (j >= 0): Cov(X_0, X_1) = rho/(1-rho^2)
        rho = 0.5
        lp = LinearProcess(lambda j: rho**j if j >= 0 else 0.0, truncation=60)
        x = sample_linear_process(lp, 200000, seed=4)
        c1 = np.mean(x[:-1] * x[1:])
        assert c1 == pytest.approx(rho / (1 - rho**2), abs=0.03)

    def test_seeds_differ(self):
        lp = LinearProcess(lambda j: 1.0 if j == 0 else 0.0, truncation=2)
        assert not np.array_equal(
            sample_linear_process(lp, 20, seed=0), sample_linear_process(lp, 20, seed=1)
        )

    def test_tail_tolerance_enforced(self):
        with pytest.raises(ProcessError):
            LinearProcess(lambda j: 1.0 / (1 + abs(j)), truncation=8).coefficients()


class TestApplyH:
    def test_identity_recentres(self):
        lp = LinearProcess(lambda j: 1.0 if j == 0 else 0.0, truncation=2)
        x = sample_linear_process(lp, 1000, seed=7)
        res = apply_h(x, "identity", 1.0, 0.0, base=lp, seed=7, draws=10**5)
        assert abs(res["centering"]) < 5 * res["centering_stderr"] + 1e-2
        assert np.allclose(res["values"], x - res["centering"])

    def test_constant_h_gives_zeros(self):
        res = apply_h(np.ones(100), lambda x: np.zeros_like(x) + 2.0, 1.0, 0.0)
        assert np.allclose(res["values"], 0.0)

    def test_abs_power_centering_reproducible(self):
        # [DERIVED] independent MC run agrees within 4 joint stderr
        lp = LinearProcess(lambda j: 1.0 if j == 0 else 0.0, truncation=2)
        x = sample_linear_process(lp, 100, seed=0)
        r1 = apply_h(x, "abs_power", 0.8, 0.0, base=lp, seed=1, draws=2 * 10**5)
        r2 = apply_h(x, "abs_power", 0.8, 0.0, base=lp, seed=2, draws=2 * 10**5)
        joint = np.hypot(r1["centering_stderr"], r2["centering_stderr"])
        assert abs(r1["centering"] - r2["centering"]) < 4 * joint

    def test_modulus_violation_rejected(self):
        with pytest.raises(ProcessError):
            # a jump function has unbounded modulus ratio as t -> 0
            apply_h(np.ones(10), lambda x: (x > 0).astype(float), 1.0, 0.0)


class TestExpandingMaps:
    def test_beta2_rational_orbit_exact(self):
        em = ExpandingMap("beta", beta=2.0)
        orbit = iterate_map(em, Fraction(1, 3), 6)
        assert np.allclose(orbit, [1 / 3, 2 / 3] * 3 + [1 / 3])

    def test_orbit_stays_in_unit_interval(self):
        em = ExpandingMap("beta", beta=np.sqrt(5.0))
        orbit = iterate_map(em, 0.37, 500)
        assert np.all((orbit >= 0) & (orbit < 1))

    def test_gauss_fixed_point(self):
        # [DERIVED] x = 1/x - 1 has root sqrt(2) - 1
        em = ExpandingMap("gauss", a=1.0)
        orbit = iterate_map(em, np.sqrt(2.0) - 1.0, 8)
        assert np.allclose(orbit, np.sqrt(2.0) - 1.0, atol=1e-9)

    def test_doubling_density_is_lebesgue(self):
        d = invariant_density(ExpandingMap("beta", beta=2.0))
        assert np.allclose(d.values, 1.0)

    def test_gauss_density_invariant(self):
        # [DERIVED] transfer-operator quadrature residual
        em = ExpandingMap("gauss", a=1.0)
        d = invariant_density(em)
        x = d.x[1:-1]
        lf = np.zeros_like(x)
        for m in range(1, 2000):
            y = 1.0 / (x + m)
            lf += y**2 / ((1.0 + y) * np.log(2.0))
        # y^2 f(y) telescopes, so the branch tail sums exactly
        lf += 1.0 / ((x + 2000.0) * np.log(2.0))
        resid = np.trapezoid(np.abs(lf - d.values[1:-1]), x)
        assert resid < 1e-6

    def test_density_normalized(self):
        for em in (
            ExpandingMap("beta", beta=1.8),
            ExpandingMap("piecewise_affine", breakpoints=(0.0, 0.4, 1.0), slopes=(2.5, 5.0 / 3.0), offsets=(0.0, -2.0 / 3.0)),
        ):
            d = invariant_density(em)
            assert np.all(d.values >= -1e-12)
            assert np.trapezoid(d.values, d.x) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_contracting_slopes(self):
        with pytest.raises(ProcessError):
            ExpandingMap("piecewise_affine", breakpoints=(0.0, 0.5, 1.0), slopes=(0.5, 2.0), offsets=(0.0, -1.0))


class TestPartialSumsBatch:
    def test_iid_unit_normal(self):
        spec = ProcessSpec(IIDBaseline(), seed=5)
        tb = partial_sums_batch(spec, [1, 64], 2000)
        v = tb.values(64)
        assert abs(v.mean()) < 4 / np.sqrt(v.size)
        assert v.var() == pytest.approx(1.0, rel=0.15)

    def test_n_equals_one_is_marginal(self):
        spec = ProcessSpec(IIDBaseline(InnovationLaw("rademacher")), seed=5)
        tb = partial_sums_batch(spec, [1], 200)
        assert set(np.unique(tb.values(1))) == {-1.0, 1.0}

    def test_replay_determinism(self):
        spec = ProcessSpec(DavydovChain(2.5, 0.1, "f1", n_max=60), seed=11)
        a = partial_sums_batch(spec, [32, 64], 300)
        b = partial_sums_batch(spec, [32, 64], 300)
        for n in (32, 64):
            assert np.array_equal(a.values(n), b.values(n))

    def test_replicates_independent_of_batch_size(self):
        # first replicates coincide when M grows: per-replicate streams
        spec = ProcessSpec(IIDBaseline(), seed=2)
        small = partial_sums_batch(spec, [16], 100)
        large = partial_sums_batch(spec, [16], 300)
        assert np.array_equal(small.values(16), large.values(16)[:100])

    def test_memory_guard(self):
        spec = ProcessSpec(IIDBaseline(), seed=0)
        with pytest.raises(ProcessError):
            partial_sums_batch(spec, [2**20], 10**4, budget=10**6)

    def test_grid_must_increase(self):
        spec = ProcessSpec(IIDBaseline(), seed=0)
        with pytest.raises(ProcessError):
            partial_sums_batch(spec, [64, 64], 100)

    def test_doubling_map_variance(self):
        # [DERIVED] f(x) = x on the doubling map: Cov_k = 2^{-k}/12, so
        # sigma^2 = 1/12 + 2 * (1/12) = 1/4
        spec = ProcessSpec(ExpandingMap("beta", beta=2.0), seed=8)
        tb = partial_sums_batch(spec, [256], 4000)
        assert tb.values(256).var() == pytest.approx(0.25, rel=0.15)

    def test_stationarity_across_lags(self):
        # marginal of X_1 vs X_50: two-sample Kolmogorov gap small
        spec = ProcessSpec(DavydovChain(2.5, 0.1, "f1", n_max=60), seed=3)
        kernel, f = spec.family.build()
        path = sample_chain(kernel, 5000, seed=3)
        idx = np.searchsorted(kernel.states, path)
        x1 = f[idx][1:1000]
        x50 = f[idx][50:1049]
        from cltlab.metrics import EmpiricalDistribution, kolmogorov

        gap = kolmogorov(EmpiricalDistribution(x1), EmpiricalDistribution(x50))
        assert gap < 4.0 / np.sqrt(1000) + 0.05


class TestLongRunVariance:
    def test_iid(self):
        assert long_run_variance(ProcessSpec(IIDBaseline()))["sigma2"] == 1.0

    def test_davydov_f1_is_marginal_variance(self):
        # [DERIVED] cross covariances vanish by the zero-conditional-mean
        # property, so sigma^2 = sum_s pi(s) f1(s)^2
        spec = ProcessSpec(DavydovChain(2.5, 0.1, "f1", n_max=80), seed=0)
        kernel, f = spec.family.build()
        lv = long_run_variance(spec)
        assert lv["sigma2"] == pytest.approx(float(kernel.stationary @ (f * f)), abs=1e-10)

    def test_linear_two_coefficients(self):
        # [DERIVED] a = (1, 1): A = 2, Var eps = 1 -> sigma^2 = 4, and
        # Var(S_n)/n = 4 - 2/n exactly
        lp = LinearProcess(lambda j: 1.0 if j in (0, 1) else 0.0, truncation=4)
        lv = long_run_variance(ProcessSpec(lp))
        assert lv["sigma2"] == pytest.approx(4.0)
        assert lv["sigma_n2"](64) == pytest.approx(4.0 - 2.0 / 64.0, abs=1e-12)

    def test_sigma_n2_converges_to_sigma2(self):
        lp = LinearProcess(lambda j: 0.5**j if 0 <= j <= 40 else 0.0, truncation=45)
        lv = long_run_variance(ProcessSpec(lp))
        assert lv["sigma_n2"](2**14) == pytest.approx(lv["sigma2"], rel=1e-2)

    def test_doubling_map_quarter(self):
        lv = long_run_variance(ProcessSpec(ExpandingMap("beta", beta=2.0)))
        assert lv["sigma2"] == pytest.approx(0.25, abs=2e-3)

    def test_function_of_linear_batch_means(self):
        lp = LinearProcess(lambda j: 1.0 if j == 0 else 0.0, truncation=2)
        fol = FunctionOfLinear(lp, "identity", 1.0, 0.0, centering_draws=10**5)
        lv = long_run_variance(ProcessSpec(fol))
        assert lv["method"] == "batch-means"
        assert lv["sigma2"] == pytest.approx(1.0, rel=0.3)


class TestFiniteKernelValidation:
    def test_rejects_bad_rows(self):
        with pytest.raises(ProcessError):
            FiniteKernel(np.array([0, 1]), np.array([[0.5, 0.4], [0.5, 0.5]]), np.array([0.5, 0.5]))

    def test_rejects_wrong_stationary(self):
        k = np.array([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ProcessError):
            FiniteKernel(np.array([0, 1]), k, np.array([0.9, 0.1]))

    def test_rejects_reducible(self):
        k = np.eye(2)
        with pytest.raises(ProcessError):
            FiniteKernel(np.array([0, 1]), k, np.array([0.5, 0.5]))
