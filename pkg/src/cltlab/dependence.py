"""Exact dependence coefficients on finite kernels, covariance-inequality
verification, projective-condition series, and the coboundary/martingale
decomposition of linear processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from . import rng as rngmod
from .metrics import envelope_norm_discrete
from .processes import FiniteKernel, LinearProcess, ProcessError

EXACT_ENUM_CAP = 22  # state count up to which the event sup is enumerated


class DependenceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# alpha coefficient


def alpha1_exact(kernel: FiniteKernel, n: int, restarts: int = 64, seed: int = 0) -> dict:
    """Strong mixing coefficient between Y_0 and Y_n on the finite chain.

    Exact subset enumeration up to 22 states; above that an alternating
    maximization lower bound and a total-variation upper bound.
    """
    if n < 1:
        raise DependenceError("n must be >= 1")
    pi = kernel.stationary
    kn = np.linalg.matrix_power(kernel.matrix, n)
    d = pi[:, None] * kn - np.outer(pi, pi)  # joint minus product
    size = kernel.size
    if size <= EXACT_ENUM_CAP:
        best = 0.0
        total = 1 << (size - 1)  # complements give the same value
        chunk = 1 << 16
        cols = np.arange(size - 1)
        for start in range(0, total, chunk):
            idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
            mask = ((idx[:, None] >> cols[None, :]) & 1).astype(float)
            v = mask @ d[:-1, :]
            best = max(best, float(np.maximum(v, 0.0).sum(axis=1).max()))
        return {"value": best, "lower": best, "upper": best, "method": "exact"}
    # alternating maximization from random starts (lower bound)
    gen = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        a = gen.random(size) < 0.5
        for _ in range(200):
            b = (a @ d) > 0
            a_new = (d @ b) > 0
            if np.array_equal(a_new, a):
                break
            a = a_new
        best = max(best, abs(float(d[np.ix_(a, b)].sum())))
    upper = 0.25 * float(np.abs(d).sum())
    return {"lower": best, "upper": upper, "method": "lower-heuristic"}


def alpha1_bruteforce(kernel: FiniteKernel, n: int) -> float:
    """Literal sup over all event pairs; exponential cost, testing only."""
    pi = kernel.stationary
    kn = np.linalg.matrix_power(kernel.matrix, n)
    d = pi[:, None] * kn - np.outer(pi, pi)
    size = kernel.size
    best = 0.0
    for ia in range(1 << size):
        a = [(ia >> s) & 1 for s in range(size)]
        row = np.array(a, dtype=float) @ d
        for ib in range(1 << size):
            b = np.array([(ib >> s) & 1 for s in range(size)], dtype=float)
            best = max(best, abs(float(row @ b)))
    return best


# ---------------------------------------------------------------------------
# phi coefficients


def _threshold_indicators(values: np.ndarray) -> np.ndarray:
    """Columns are 1_{v <= x} for each distinct threshold x."""
    xs = np.unique(values)
    return (values[:, None] <= xs[None, :]).astype(float)


def _dobrushin(kernel: np.ndarray) -> float:
    """Dobrushin contraction coefficient max_{s,s'} TV(K(s,.), K(s',.))."""
    k = kernel
    diffs = 0.5 * np.abs(k[:, None, :] - k[None, :, :]).sum(axis=2)
    return float(diffs.max())


def phi_coeff(
    kernel: FiniteKernel,
    n: int,
    k: int = 1,
    f: Optional[np.ndarray] = None,
    gap_cap: int = 64,
) -> dict:
    """Uniform-dependence coefficient phi_{k,Y}(n) of the observable chain.

    The defining sup over starting indices i_1 >= n is attained at i_1 = n
    because the per-threshold gap is nonincreasing in the lead time; only the
    inner gap i_2 - i_1 needs a cap, whose tail is certified against
    2 * phi_1(gap_cap + 1).
    """
    if n < 1:
        raise DependenceError("n must be >= 1")
    if k not in (1, 2):
        raise DependenceError("k must be 1 or 2")
    values = kernel.states.astype(float) if f is None else np.asarray(f, dtype=float)
    pi = kernel.stationary
    ind = _threshold_indicators(values)
    g = ind - (pi @ ind)[None, :]  # centered threshold functions, per column
    kn = np.linalg.matrix_power(kernel.matrix, n)

    def phi1_at(power_matrix):
        gap = power_matrix @ g  # E(g(Y_i) | Y_0 = s); stationary mean is 0
        return float(np.abs(gap).max())

    phi1 = phi1_at(kn)
    if k == 1:
        return {"value": phi1, "method": "exact"}
    best = phi1
    kd = kernel.matrix.copy()
    for _ in range(1, gap_cap + 1):
        # w[s, x2] = E(g_{x2}(Y_d) | Y_d-start = s)
        w = kd @ g
        # products over threshold pairs: vec[s] = g_{x1}(s) * w(s, x2)
        prod = g[:, :, None] * w[:, None, :]  # (S, T, T)
        cond = np.einsum("ij,jkl->ikl", kn, prod)
        mean = np.einsum("j,jkl->kl", pi, prod)
        best = max(best, float(np.abs(cond - mean[None, :, :]).max()))
        kd = kd @ kernel.matrix
    # tail beyond the gap cap: |E(g1 g2 | Y_0) - E(g1 g2)| <= 2 phi_1(d)
    tail_matrix = np.linalg.matrix_power(kernel.matrix, gap_cap + 1)
    tail = 2.0 * phi1_at(tail_matrix)
    method = "exact" if tail <= best + 1e-15 else "lower-heuristic"
    return {"value": best, "method": method, "gap_tail_bound": tail}


def phi1_bruteforce(kernel: FiniteKernel, n: int, f: Optional[np.ndarray] = None) -> float:
    """Direct definition scan of sup_{x, y0} |P(Y_n <= x | y0) - P(Y_n <= x)|."""
    values = kernel.states.astype(float) if f is None else np.asarray(f, dtype=float)
    kn = np.linalg.matrix_power(kernel.matrix, n)
    pi = kernel.stationary
    best = 0.0
    for x in np.unique(values):
        ind = (values <= x).astype(float)
        base = float(pi @ ind)
        for s in range(kernel.size):
            best = max(best, abs(float(kn[s] @ ind) - base))
    return best


@dataclass(frozen=True)
class DependenceProfile:
    """alpha_1 / phi_1 / phi_2 sequences over lead times with method tags."""

    n_values: tuple
    alpha1: tuple
    phi1: tuple
    phi2: tuple
    methods: tuple  # per-entry tags (alpha, phi1, phi2)

    def __post_init__(self):
        arrs = {"alpha1": self.alpha1, "phi1": self.phi1, "phi2": self.phi2}
        for name, arr in arrs.items():
            a = np.asarray(arr)
            if np.any((a < -1e-15) | (a > 1.0 + 1e-12)):
                raise DependenceError(f"{name} entries must lie in [0, 1]")
        if np.any(np.asarray(self.phi1) > np.asarray(self.phi2) + 1e-12):
            raise DependenceError("phi1 must not exceed phi2")
        for name, arr in arrs.items():
            exact = [v for v, m in zip(arr, self.methods) if m == "exact"]
            if np.any(np.diff(exact) > 1e-12):
                raise DependenceError(f"exact {name} entries must be nonincreasing")


def dependence_profile(kernel: FiniteKernel, n_values, f=None, gap_cap: int = 64) -> DependenceProfile:
    al, p1, p2, tags = [], [], [], []
    for n in n_values:
        a = alpha1_exact(kernel, n)
        r1 = phi_coeff(kernel, n, k=1, f=f, gap_cap=gap_cap)
        r2 = phi_coeff(kernel, n, k=2, f=f, gap_cap=gap_cap)
        al.append(a.get("value", a["lower"]))
        p1.append(r1["value"])
        p2.append(r2["value"])
        tag = "exact" if a["method"] == r2["method"] == "exact" else "lower-heuristic"
        tags.append(tag)
    return DependenceProfile(tuple(n_values), tuple(al), tuple(p1), tuple(p2), tuple(tags))


# ---------------------------------------------------------------------------
# covariance product bounds


def _upper_quantile(law_points: np.ndarray, law_probs: np.ndarray):
    """Q(u) = smallest t with P(|X| > t) <= u, as a step function of u."""
    a = np.abs(law_points)
    order = np.argsort(-a)
    a, w = a[order], law_probs[order]
    cw = np.cumsum(w)

    def q(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = u < cw[-1] - 1e-15
        idx = np.searchsorted(cw, u[inside], side="right")
        idx = np.minimum(idx, a.size - 1)
        out[inside] = a[idx]
        # for u >= 1 the factor vanishes by convention
        out[u >= 1.0] = 0.0
        return out

    return q


def _signed_quantile(law_points: np.ndarray, law_probs: np.ndarray):
    order = np.argsort(law_points)
    pts, w = law_points[order], law_probs[order]
    cw = np.cumsum(w)

    def finv(u):
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(cw, u - 1e-15, side="left"), 0, pts.size - 1)
        return pts[idx]

    return finv


@dataclass(frozen=True)
class FiniteLaw:
    points: np.ndarray
    probs: np.ndarray

    def d_function(self):
        finv = _signed_quantile(self.points, self.probs)

        def d(u):
            u = np.asarray(u, dtype=float)
            out = np.maximum(finv(1.0 - u) - finv(u), 0.0)
            out[u >= 1.0] = 0.0
            return out

        return d

    def q_function(self):
        return _upper_quantile(self.points, self.probs)

    def norm(self, p: float) -> float:
        return float((self.probs @ np.abs(self.points) ** p) ** (1.0 / p))


def covariance_product_bound(
    laws: Sequence[FiniteLaw],
    phis: Sequence[float],
    p_list: Optional[Sequence[float]] = None,
) -> dict:
    """The three product bounds on |E prod (X_i - E X_i)|.

    D-form: int prod D_i(u/phi_i) du; Q-form: 2^k int prod Q_i(u/phi_i) du;
    Holder form: 2^k prod phi_i^{1/p_i} ||X_i||_{p_i} (needs sum 1/p_i = 1).
    A zero phi_i makes its factor vanish, hence a zero bound.  The integrands
    are step functions of u on finite laws, so the integrals are exact: the
    product is constant between breakpoints u = phi_i * (cumulative level).
    """
    k = len(laws)
    if k < 2 or len(phis) != k:
        raise DependenceError("need k >= 2 laws and matching phis")
    phis = np.asarray(phis, dtype=float)
    if np.any(phis < 0) or np.any(phis > 1):
        raise DependenceError("phi values must lie in [0, 1]")
    if np.any(phis == 0.0):
        out = {"d_form": 0.0, "q_form": 0.0}
    else:
        cuts = [np.array([0.0, 1.0])]
        for law, phi in zip(laws, phis):
            lev = np.cumsum(law.probs[np.argsort(law.points)])
            lev_abs = np.cumsum(law.probs[np.argsort(-np.abs(law.points))])
            levels = np.concatenate((lev, 1.0 - lev, lev_abs))
            cuts.append(np.clip(phi * levels, 0.0, 1.0))
        grid = np.unique(np.concatenate(cuts))
        mids = 0.5 * (grid[:-1] + grid[1:])
        widths = np.diff(grid)
        d_prod = np.ones(mids.size)
        q_prod = np.ones(mids.size)
        for law, phi in zip(laws, phis):
            v = mids / phi
            d_prod *= law.d_function()(v)
            q_prod *= law.q_function()(v)
        out = {
            "d_form": float(d_prod @ widths),
            "q_form": float(2.0**k * (q_prod @ widths)),
        }
    if p_list is not None:
        if abs(sum(1.0 / p for p in p_list) - 1.0) > 1e-9:
            raise DependenceError("Holder exponents must satisfy sum 1/p_i = 1")
        h = 2.0**k
        for law, phi, p in zip(laws, phis, p_list):
            h *= phi ** (1.0 / p) * law.norm(p)
        out["holder_form"] = float(h)
    return out


def _phi_i_exact(kernel: FiniteKernel, f_list, t_list, i: int) -> float:
    """phi(sigma(X_i), X_{j != i}) for X_j = f_j(Y_{t_j}) on the stationary
    chain, exact over the threshold level sets.

    Past and future factors split by the Markov property; the past is
    propagated through the time-reversed kernel.
    """
    pi = kernel.stationary
    kmat = kernel.matrix
    rev = (kmat * pi[:, None]).T / pi[:, None]  # R(s, s') = pi(s')K(s', s)/pi(s)
    kcount = len(f_list)
    fvals = [np.asarray(fj, dtype=float) for fj in f_list]
    # centered indicator sets per variable: h = 1_{f > x} - P(f > x)
    h_sets = []
    for fv in fvals:
        ind = (fv[:, None] > np.unique(fv)[None, :]).astype(float)
        h_sets.append(ind - (pi @ ind)[None, :])
    others = [j for j in range(kcount) if j != i]
    combos = [()]
    for j in others:
        combos = [c + (t,) for c in combos for t in range(h_sets[j].shape[1])]
    # group states by the value of f_i (atoms of sigma(X_i))
    _, group_idx = np.unique(fvals[i], return_inverse=True)
    ngroups = group_idx.max() + 1
    group_pi = np.zeros(ngroups)
    np.add.at(group_pi, group_idx, pi)
    best = 0.0
    for combo in combos:
        h = {j: h_sets[j][:, combo[pos]] for pos, j in enumerate(others)}
        # forward: fw(s) = E(prod_{j > i} h_j(Y_{t_j}) | Y_{t_i} = s)
        fw = np.ones(kernel.size)
        for j in range(kcount - 1, i, -1):
            fw = np.linalg.matrix_power(kmat, t_list[j] - t_list[j - 1]) @ (h[j] * fw)
        # backward through the reversed kernel:
        # w(s) = E(prod_{j < i} h_j(Y_{t_j}) | Y_{t_i} = s)
        w = None
        for j in range(0, i):
            w = h[j] if w is None else h[j] * w
            w = np.linalg.matrix_power(rev, t_list[j + 1] - t_list[j]) @ w
        bw = np.ones(kernel.size) if w is None else w
        g_cond = bw * fw
        g_mean = float(pi @ g_cond)
        cond_atoms = np.zeros(ngroups)
        np.add.at(cond_atoms, group_idx, pi * g_cond)
        cond_atoms /= group_pi
        best = max(best, float(np.abs(cond_atoms - g_mean).max()))
    return best


def check_covariance_inequality(kernel: FiniteKernel, f_list, t_list, corollary_factor: bool = False) -> dict:
    """Exact both sides of the product-covariance inequality on a chain.

    lhs = |E prod (f_j(Y_{t_j}) - E f_j)| by kernel-power linear algebra;
    rhs from covariance_product_bound with the exact phi^{(i)}; the optional
    corollary path multiplies the Q-form by 2^{k-1} for functionals that are
    only piecewise monotone.
    """
    t_list = list(t_list)
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise DependenceError("lags must be strictly increasing")
    k = len(f_list)
    if k < 2 or len(t_list) != k:
        raise DependenceError("need k >= 2 functionals with matching lags")
    pi = kernel.stationary
    fvals = [np.asarray(fj, dtype=float) for fj in f_list]
    centered = [fv - float(pi @ fv) for fv in fvals]
    # lhs: backward recursion v = E(prod_{j >= i} X_j | Y_{t_i})
    v = centered[-1]
    for j in range(k - 2, -1, -1):
        v = centered[j] * (np.linalg.matrix_power(kernel.matrix, t_list[j + 1] - t_list[j]) @ v)
    lhs = abs(float(pi @ v))
    phis = [min(_phi_i_exact(kernel, fvals, t_list, i), 1.0) for i in range(k)]
    laws = [FiniteLaw(c, pi) for c in centered]
    bounds = covariance_product_bound(laws, phis, p_list=[float(k)] * k)
    factor = 2.0 ** (k - 1) if corollary_factor else 1.0
    rhs = {key: factor * val if key != "d_form" else val for key, val in bounds.items()}
    applicable = [rhs["q_form"], rhs["holder_form"]] + ([] if corollary_factor else [rhs["d_form"]])
    ok = lhs <= min(applicable) * (1.0 + 1e-9) + 1e-15
    return {"lhs": lhs, "rhs_forms": rhs, "phis": phis, "ok": bool(ok)}


# ---------------------------------------------------------------------------
# conditional second moments and condition series


def conditional_second_moment(kernel: FiniteKernel, f: np.ndarray, n: int, cap: int = 10**6) -> np.ndarray:
    """E(S_n^2 | Y_0 = s) for S_n = sum_{i<=n} f(Y_i), exact by the
    first-step recursion T_{m+1} = K(f^2 + 2 f h_m + T_m)."""
    if n < 1 or n > cap:
        raise DependenceError("n out of range")
    f = np.asarray(f, dtype=float)
    t = np.zeros(kernel.size)
    h = np.zeros(kernel.size)
    f2 = f * f
    for _ in range(n):
        t = kernel.apply(f2 + 2.0 * f * h + t)
        h = kernel.apply(f + h)
    return t


@dataclass(frozen=True)
class ConditionReport:
    condition_id: str
    n_values: tuple
    terms: tuple
    partial_sums: tuple
    verdict: str  # converged | diverging | inconclusive
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.terms, dtype=float)
        if np.any(t < -1e-12):
            raise DependenceError("series terms must be nonnegative")
        ps = np.asarray(self.partial_sums, dtype=float)
        finite = np.isfinite(ps)
        if np.any(np.diff(ps[finite]) < -1e-12):
            raise DependenceError("partial sums must be nondecreasing")


def _verdict(n_values, terms) -> tuple[str, dict]:
    """Three-valued convergence call from a log-log slope of the terms."""
    t = np.asarray(terms, dtype=float)
    n = np.asarray(n_values, dtype=float)
    if np.any(~np.isfinite(t)):
        return "diverging", {"reason": "infinite term"}
    pos = t > 1e-300
    if not pos.any():
        return "converged", {"reason": "all terms zero"}
    n, t = n[pos], t[pos]
    if n.size < 4:
        return "inconclusive", {"reason": "too few positive terms"}
    half = n.size // 2
    x, y = np.log(n[half:]), np.log(t[half:])
    slope = float(np.polyfit(x, y, 1)[0])
    gamma = -slope
    diag = {"decay_exponent": gamma}
    if gamma >= 1.05:
        return "converged", diag
    if gamma <= 0.95:
        return "diverging", diag
    return "inconclusive", diag


def _report(cid, n_values, terms, extra=None) -> ConditionReport:
    verdict, diag = _verdict(n_values, terms)
    if extra:
        diag.update(extra)
    ps = tuple(np.cumsum(terms))
    return ConditionReport(cid, tuple(n_values), tuple(terms), ps, verdict, diag)


def _chain_f(spec) -> tuple[FiniteKernel, np.ndarray]:
    from .processes import DavydovChain, ProcessSpec

    fam = spec.family if isinstance(spec, ProcessSpec) else spec
    if isinstance(fam, DavydovChain):
        from .processes import _davydov_cache

        return _davydov_cache(fam)
    if isinstance(fam, tuple) and isinstance(fam[0], FiniteKernel):
        return fam
    raise DependenceError("spec does not describe a finite chain")


def _lp_norm_discrete(values: np.ndarray, probs: np.ndarray, p: float) -> float:
    return float((probs @ np.abs(values) ** p) ** (1.0 / p))


def _chain_sigma2(kernel: FiniteKernel, f: np.ndarray) -> float:
    from .processes import _chain_long_run

    return _chain_long_run(kernel, f)[0]


def series_C1_C2(spec, p: float, n_terms: int, outer: int = 1000, seed: int = 0) -> dict:
    """Terms of the two normalized-conditional-variance series: the envelope
    norm weighted by n^{-(2-p/2)} and the L^{p/2} norm weighted by n^{-2/p}.

    Chains are exact; linear processes use outer Monte Carlo over pasts with
    the inner conditional expectation in closed form.
    """
    from .processes import DavydovChain, IIDBaseline, ProcessSpec

    fam = spec.family if isinstance(spec, ProcessSpec) else spec
    ns = list(range(1, n_terms + 1))
    if isinstance(fam, IIDBaseline):
        zero = [0.0] * n_terms
        return {
            "C1": _report("C1", ns, zero),
            "C2": _report("C2", ns, zero),
        }
    if isinstance(fam, LinearProcess):
        return _series_c1c2_linear(fam, p, ns, outer, seed)
    kernel, f = _chain_f(spec)
    f = f - float(kernel.stationary @ f)
    sigma2 = _chain_sigma2(kernel, f)
    pi = kernel.stationary
    t = np.zeros(kernel.size)
    h = np.zeros(kernel.size)
    f2 = f * f
    c1, c2 = [], []
    for n in ns:
        t = kernel.apply(f2 + 2.0 * f * h + t)
        h = kernel.apply(f + h)
        dev = t / n - sigma2
        c1.append(n ** (-(2.0 - p / 2.0)) * envelope_norm_discrete(dev, pi, p))
        c2.append(n ** (-2.0 / p) * _lp_norm_discrete(dev, pi, p / 2.0) ** 1.0)
    return {"C1": _report("C1", ns, c1), "C2": _report("C2", ns, c2)}


def _series_c1c2_linear(fam: LinearProcess, p: float, ns, outer: int, seed: int) -> dict:
    a = fam.coefficients()
    t = fam.truncation
    var_eps = fam.innovation.variance
    sigma2 = float(a.sum()) ** 2 * var_eps
    gen = rngmod.stream(seed, rngmod.ROLE_CALIBRATION, 0, 0)
    past = fam.innovation.sample(gen, outer * t).reshape(outer, t)  # eps_{1-t}..eps_0
    c1, c2 = [], []
    uw = np.full(outer, 1.0 / outer)
    for n in ns:
        # c_j(n) = sum_{k=1..n} a_{k-j}; past indices j = 1-t..0
        cs = np.concatenate(([0.0], np.cumsum(a)))
        j_past = np.arange(1 - t, 1)
        lo = np.maximum(1 - j_past, -t)
        hi = np.minimum(n - j_past, t)
        c_past = np.where(hi >= lo, cs[np.clip(hi + t + 1, 0, 2 * t + 1)] - cs[np.clip(lo + t, 0, 2 * t + 1)], 0.0)
        j_fut = np.arange(1, n + t + 1)
        lo = np.maximum(1 - j_fut, -t)
        hi = np.minimum(n - j_fut, t)
        c_fut = np.where(hi >= lo, cs[np.clip(hi + t + 1, 0, 2 * t + 1)] - cs[np.clip(lo + t, 0, 2 * t + 1)], 0.0)
        future_var = var_eps * float((c_fut**2).sum())
        pvals = past @ c_past
        dev = (pvals**2 + future_var) / n - sigma2
        c1.append(n ** (-(2.0 - p / 2.0)) * envelope_norm_discrete(dev, uw, p))
        c2.append(n ** (-2.0 / p) * _lp_norm_discrete(dev, uw, p / 2.0))
    return {"C1": _report("C1", ns, c1, {"outer": outer, "inner": "closed-form"}),
            "C2": _report("C2", ns, c2, {"outer": outer, "inner": "closed-form"})}


def series_projective(spec, which: str, p: float, n_terms: int, mc: int = 10**5, seed: int = 0) -> ConditionReport:
    """Term sequences of the projective conditions: convergence of the
    adapted/anticipative series in L^p, and the conditional-variance series
    centered at the finite-n variance."""
    from .processes import ProcessSpec

    fam = spec.family if isinstance(spec, ProcessSpec) else spec
    ns = list(range(1, n_terms + 1))
    if isinstance(fam, LinearProcess):
        return _series_projective_linear(fam, which, p, ns, mc, seed)
    kernel, f = _chain_f(spec)
    pi = kernel.stationary
    fc = f - float(pi @ f)
    if which == "Cond1cob":
        terms = []
        v = fc.copy()
        for n in ns:
            v = kernel.apply(v) if n > 1 else kernel.apply(fc)
            terms.append(_lp_norm_discrete(v, pi, p))
        # anticipative half vanishes for adapted chain observables
        return _report("Cond1cob", ns, terms, {"anticipative_terms": 0.0})
    if which == "Condcobp3adap":
        # g_n(s) = sum_{k >= n} E(X_k | Y_0 = s), geometric tail summed out
        tails = []
        v = kernel.apply(fc)
        total = np.zeros(kernel.size)
        k = 1
        while k < 10**5:
            total += v
            v = kernel.apply(v)
            if np.max(np.abs(v)) < 1e-15 and k > max(ns):
                break
            k += 1
        g = total
        terms = []
        v = kernel.apply(fc)
        for n in ns:
            terms.append((1.0 / n) * _lp_norm_discrete(g, pi, 3.0))
            g = g - v
            v = kernel.apply(v)
        return _report("Condcobp3adap", ns, terms, {"anticipative_terms": 0.0})
    if which in ("Cond2cob", "Cond2cobp3"):
        q = p / 2.0 if which == "Cond2cob" else 1.5
        weight = (lambda n: n ** (-2.0 + p / 2.0)) if which == "Cond2cob" else (lambda n: n**-0.5)
        t = np.zeros(kernel.size)
        h = np.zeros(kernel.size)
        f2 = fc * fc
        terms = []
        for n in ns:
            t = kernel.apply(f2 + 2.0 * fc * h + t)
            h = kernel.apply(fc + h)
            sigma_n2 = float(pi @ t) / n
            terms.append(weight(n) * _lp_norm_discrete(t / n - sigma_n2, pi, q))
        return _report(which, ns, terms)
    raise DependenceError(f"unknown condition id: {which}")


def _series_projective_linear(fam: LinearProcess, which: str, p: float, ns, mc: int, seed: int) -> ConditionReport:
    a = fam.coefficients()
    t = fam.truncation
    gen = rngmod.stream(seed, rngmod.ROLE_CALIBRATION, 1, 0)
    eps = fam.innovation.sample(gen, mc * (t + 1)).reshape(mc, t + 1)

    def lp_of_coeffs(w, q):
        if np.allclose(w, 0.0):
            return 0.0
        vals = eps[:, : w.size] @ w
        return float(np.mean(np.abs(vals) ** q) ** (1.0 / q))

    if which == "Cond1cob":
        terms, anti = [], []
        for n in ns:
            w_ad = np.array([a[j + t] if abs(j) <= t else 0.0 for j in range(n, n + t + 1)])
            terms.append(lp_of_coeffs(w_ad, p))
            w_an = np.array([a[-j + t] if abs(j) <= t else 0.0 for j in range(n + 1, n + t + 2)])
            anti.append(lp_of_coeffs(w_an, p))
        both = [x + y for x, y in zip(terms, anti)]
        return _report("Cond1cob", ns, both, {"adapted": terms, "anticipative": anti})
    if which == "Condcobp3adap":
        tail = np.concatenate((np.cumsum(a[::-1])[::-1], [0.0]))  # T_i over i = -t..t+1
        terms = []
        for n in ns:
            # coefficient of eps_m (m <= 0) is T_{n-m} = sum_{j >= n-m} a_j
            w = np.array([tail[min(n + m_ + t, 2 * t + 1)] for m_ in range(0, t + 1)])
            terms.append((1.0 / n) * lp_of_coeffs(w, 3.0))
        return _report("Condcobp3adap", ns, terms)
    raise DependenceError(f"condition {which} not available for linear processes")


def series_condalpha1(q_func: Callable[[float], float], alpha_values, p: float) -> dict:
    """The two integral series driven by the strong-mixing coefficients: the
    log-weighted Q^2 integral with weight k^{-(2-p/2)}, and the Q^p integral
    to the 2/p with weight k^{-2/p}."""
    alpha_values = np.asarray(alpha_values, dtype=float)
    if np.any((alpha_values < 0) | (alpha_values > 1)):
        raise DependenceError("alpha values must lie in [0, 1]")
    ks = list(range(1, alpha_values.size + 1))
    t1, t2 = [], []
    for k, al in zip(ks, alpha_values):
        if al == 0.0:
            t1.append(0.0)
            t2.append(0.0)
            continue
        i1, _ = quad(
            lambda u: max(1.0, np.log(1.0 / u)) ** ((p - 2.0) / 2.0) * q_func(u) ** 2,
            0.0,
            al,
            limit=300,
        )
        i2, _ = quad(lambda u: q_func(u) ** p, 0.0, al, limit=300)
        if not np.isfinite(i2):
            t2.append(np.inf)
        else:
            t2.append(k ** (-2.0 / p) * i2 ** (2.0 / p))
        t1.append(k ** (-(2.0 - p / 2.0)) * (i1 if np.isfinite(i1) else np.inf))
    return {
        "log_weighted": _report("condalpha1-a", ks, t1),
        "p_norm": _report("condalpha1-b", ks, t2),
    }


def series_condphi(phi2_values, p: float, s: float) -> ConditionReport:
    """Terms i^{(p-4)/2 + (s-2)/(s-1)} phi_2(i)^{(s-2)/s}."""
    phi2_values = np.asarray(phi2_values, dtype=float)
    if s < p:
        raise DependenceError("requires s >= p")
    ks = list(range(1, phi2_values.size + 1))
    expo = (p - 4.0) / 2.0 + (s - 2.0) / (s - 1.0)
    terms = [k**expo * ph ** ((s - 2.0) / s) for k, ph in zip(ks, phi2_values)]
    return _report("condphi", ks, terms, {"index_exponent": expo})


# ---------------------------------------------------------------------------
# A_n / B_n and the coboundary decomposition


def an_bn(coeff_rule: Callable[[int], float], n: int, support: int = 4096, tail_tol: float = 1e-12) -> dict:
    """A_n (squared window sums of the recentred coefficients, by the
    three-block identity) and the tail-sum majorant B_n with A_n <= 4 B_n.
    Includes the two one-sided square-tail sums of the classical martingale
    approximation condition."""
    l = support
    a = np.array([coeff_rule(j) for j in range(-l, l + 1)])
    probe = np.abs(np.array([coeff_rule(j) for j in list(range(l + 1, l + 129)) + list(range(-l - 128, -l))]))
    certified = float((probe**2).sum()) <= tail_tol and float(probe.sum() ** 2) <= tail_tol
    cs = np.concatenate(([0.0], np.cumsum(a)))

    def window(lo, hi):  # sum a_l over lo..hi clipped to the support
        lo = max(lo, -l)
        hi = min(hi, l)
        if hi < lo:
            return 0.0
        return float(cs[hi + l + 1] - cs[lo + l])

    # block 1: j in 1..n
    b1 = sum(((window(-l, -j) + window(n + 1 - j, l)) ** 2 for j in range(1, n + 1)))
    # blocks 2 and 3: windows sliding off either end
    b2 = sum((window(i, n + i - 1) ** 2 for i in range(1, l + 1)))
    b3 = sum((window(-i - n + 1, -i) ** 2 for i in range(1, l + 1)))
    a_n = b1 + b2 + b3
    absa = np.abs(a)
    t_tail = np.concatenate((np.cumsum(absa[::-1])[::-1], [0.0]))  # T_i from index i
    big_t = lambda i: float(t_tail[min(i + l, 2 * l + 1)]) if i >= -l else float(t_tail[0])
    q_tail = np.concatenate(([0.0], np.cumsum(absa)))
    big_q = lambda i: float(q_tail[max(-i + l + 1, 0)])  # sum |a_l|, l <= -i
    b_n = sum(big_t(k) ** 2 + big_q(k) ** 2 for k in range(1, n + 1))
    heyde_a = sum(window(m, l) ** 2 for m in range(1, l + 1))
    heyde_b = sum(window(-l, -m) ** 2 for m in range(1, l + 1))
    return {
        "A_n": a_n,
        "B_n": b_n,
        "heyde_tails": (heyde_a, heyde_b),
        "tail_certified": certified,
    }


@dataclass(frozen=True)
class CoboundaryDecomposition:
    """Martingale-plus-coboundary split of a linear process.

    The increments are D_i = A eps_i; the boundary terms Z_i are finite
    sums in the truncated coefficients, so the identity
    S_n = M_n + Z_1 - Z_{n+1} holds to rounding error.
    """

    spec: LinearProcess
    big_a: float
    tolerance: float = 1e-8

    def d_sequence(self, eps: np.ndarray) -> np.ndarray:
        return self.big_a * np.asarray(eps, dtype=float)

    def z_value(self, i: int, eps: np.ndarray, origin: int) -> float:
        """Z_i from innovations indexed eps[m + origin] = eps_m."""
        a = self.spec.coefficients()
        t = self.spec.truncation
        tail_t = np.concatenate((np.cumsum(a[::-1])[::-1], [0.0]))  # T_k = sum_{j>=k} a_j
        tail_q = np.concatenate(([0.0], np.cumsum(a)))  # Q_k = sum_{j<=-k} a_j at index
        total = 0.0
        for m in range(i - t, i):  # past: T_{i-m} with 1 <= i-m <= t
            total += float(tail_t[(i - m) + t]) * eps[m + origin]
        for m in range(i, i + t):  # future: -Q_{m-i+1}
            total -= float(tail_q[t - (m - i + 1) + 1]) * eps[m + origin]
        return total

    def identity_check(self, n: int, seed: int, replicate: int = 0) -> dict:
        t = self.spec.truncation
        gen = rngmod.stream(seed, rngmod.ROLE_INNOVATION, replicate, n)
        eps = self.spec.innovation.sample(gen, n + 4 * t + 2)
        origin = 2 * t  # eps[m + origin] = eps_m for m in 1-2t .. n+2t+2-2t
        a = self.spec.coefficients()
        x = np.array([float(a @ eps[k - t + origin : k + t + 1 + origin][::-1]) for k in range(1, n + 1)])
        s = np.cumsum(x)
        m = self.big_a * np.cumsum(eps[origin + 1 : origin + n + 1])
        resid = np.array(
            [abs(s[k - 1] - m[k - 1] - self.z_value(1, eps, origin) + self.z_value(k + 1, eps, origin)) for k in range(1, n + 1)]
        )
        return {"max_residual": float(resid.max()), "ok": bool(resid.max() <= self.tolerance)}


def coboundary(spec: LinearProcess) -> CoboundaryDecomposition:
    a = spec.coefficients()
    return CoboundaryDecomposition(spec, float(a.sum()))


# ---------------------------------------------------------------------------
# envelope contraction


def envelope_contraction_check(kernel: FiniteKernel, g: np.ndarray, p: float) -> dict:
    """Conditional expectation contracts the envelope norm: for X = g(Y_0,
    Y_1) and the conditioning sigma-field generated by Y_0, the norm of
    E(X | Y_0) never exceeds the norm of X.  Both norms are exact on the
    finite joint law."""
    g = np.asarray(g, dtype=float)
    if g.shape != (kernel.size, kernel.size):
        raise DependenceError("g must be a states x states value matrix")
    pi = kernel.stationary
    joint = pi[:, None] * kernel.matrix
    mask = joint > 0
    rhs = envelope_norm_discrete(g[mask], joint[mask], p)
    cond = (kernel.matrix * g).sum(axis=1)
    lhs = envelope_norm_discrete(cond, pi, p)
    return {"lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs * (1.0 + 1e-9) + 1e-15)}
