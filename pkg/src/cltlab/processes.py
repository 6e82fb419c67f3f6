"""Reproducible generators for the example processes: a slowly mixing
integer chain, (functions of) two-sided linear processes, expanding interval
maps, and an iid baseline — with their exact auxiliary structure (kernels,
stationary laws, invariant densities, long-run variances).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import rng as rngmod

DEFAULT_BATCH_BUDGET = 2**31  # elements of M * max(n) allowed per batch call
REPLICATE_CHUNK = 2048


class ProcessError(ValueError):
    pass


# ---------------------------------------------------------------------------
# innovations


@dataclass(frozen=True)
class InnovationLaw:
    """Centered innovation law with closed-form variance.

    kinds: gaussian, rademacher, uniform (on [-sqrt(3), sqrt(3)]), and
    symmetric_pareto with tail index q (moments of order < q only).
    """

    kind: str
    q: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "rademacher", "uniform", "symmetric_pareto"):
            raise ProcessError(f"unknown innovation kind: {self.kind}")
        if self.kind == "symmetric_pareto":
            if self.q is None or self.q <= 2.0:
                raise ProcessError("symmetric_pareto needs tail index q > 2")

    @property
    def variance(self) -> float:
        if self.kind in ("gaussian", "rademacher", "uniform"):
            return 1.0
        return self.q / (self.q - 2.0)

    def has_moment(self, order: float) -> bool:
        if self.kind == "symmetric_pareto":
            return order < self.q
        return True

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return gen.standard_normal(size)
        if self.kind == "rademacher":
            return 2.0 * (gen.random(size) < 0.5) - 1.0
        if self.kind == "uniform":
            return np.sqrt(3.0) * (2.0 * gen.random(size) - 1.0)
        u = gen.random((2, size))
        mag = u[0] ** (-1.0 / self.q)
        sign = np.where(u[1] < 0.5, -1.0, 1.0)
        return sign * mag


# ---------------------------------------------------------------------------
# finite Markov kernels


@dataclass(frozen=True)
class FiniteKernel:
    """Row-stochastic kernel on integer states with its stationary law."""

    states: np.ndarray
    matrix: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.matrix, dtype=float)
        s = np.asarray(self.states, dtype=int)
        pi = np.asarray(self.stationary, dtype=float)
        if k.shape != (s.size, s.size):
            raise ProcessError("matrix shape must match the state count")
        if np.any(k < -1e-15):
            raise ProcessError("negative transition probability")
        if np.max(np.abs(k.sum(axis=1) - 1.0)) > 1e-12:
            raise ProcessError("rows must sum to 1 within 1e-12")
        if np.max(np.abs(pi @ k - pi)) > 1e-12:
            raise ProcessError("stationary vector residual exceeds 1e-12")
        ncomp, _ = connected_components(csr_matrix(k > 0), connection="strong")
        if ncomp != 1:
            raise ProcessError("kernel is not irreducible")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "matrix", k)
        object.__setattr__(self, "stationary", pi)

    @property
    def size(self) -> int:
        return self.states.size

    def index_of(self, state: int) -> int:
        idx = int(np.searchsorted(self.states, state))
        if idx >= self.size or self.states[idx] != state:
            raise ProcessError(f"state {state} not in kernel")
        return idx

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(Kf)(s) = sum_j K(s, j) f(j)."""
        return self.matrix @ np.asarray(f, dtype=float)

    def power_apply(self, f: np.ndarray, n: int) -> np.ndarray:
        v = np.asarray(f, dtype=float)
        for _ in range(n):
            v = self.matrix @ v
        return v


def _solve_stationary(k: np.ndarray) -> np.ndarray:
    n = k.shape[0]
    a = k.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    pi = np.maximum(pi, 0.0)
    pi = pi @ k  # one power-iteration refinement
    return pi / pi.sum()


def davydov_schedule(p: float, eps: float, i: int) -> float:
    """Up-step probability a_i: 1/2 below the crossover index i0 and
    1 - (p/2i)(1 + (1+eps)/log i) above it."""
    if not (2.0 < p <= 3.0):
        raise ProcessError("p must lie in (2, 3]")
    if eps <= 0:
        raise ProcessError("eps must be positive")
    if i < 0:
        raise ProcessError("i must be >= 0")
    if i == 0:
        return 0.5
    i0 = _schedule_crossover(p, eps)
    if i < i0:
        return 0.5
    return 1.0 - (p / (2.0 * i)) * (1.0 + (1.0 + eps) / np.log(i))


def _schedule_crossover(p: float, eps: float) -> int:
    """Smallest i >= 2 at which the schedule formula stays >= 1/2."""
    for i in range(2, 10**6):
        if 1.0 - (p / (2.0 * i)) * (1.0 + (1.0 + eps) / np.log(i)) >= 0.5:
            return i
    raise ProcessError("schedule never reaches 1/2")


def davydov_kernel(a_rule: Callable[[int], float], n_max: int) -> FiniteKernel:
    """Truncated kernel of the drift-to-zero integer chain.

    From state n > 0 the chain moves to n+1 with probability a_n and drops
    to 0 otherwise (mirrored for n < 0); from 0 it moves to +-1 with equal
    probability.  Boundary rows at +-n_max are redirected wholly to 0.
    """
    if n_max < 4:
        raise ProcessError("n_max must be >= 4")
    a = np.array([a_rule(i) for i in range(n_max)])
    if abs(a[0] - 0.5) > 1e-12:
        raise ProcessError("a_0 must equal 1/2")
    if np.any(a[1:] < 0.5) or np.any(a[1:] >= 1.0):
        raise ProcessError("need 1/2 <= a_n < 1 for n >= 1")
    states = np.arange(-n_max, n_max + 1)
    size = states.size
    zero = n_max  # index of state 0
    k = np.zeros((size, size))
    k[zero, zero + 1] = 0.5
    k[zero, zero - 1] = 0.5
    for n in range(1, n_max):
        k[zero + n, zero + n + 1] = a[n]
        k[zero + n, zero] = 1.0 - a[n]
        k[zero - n, zero - n - 1] = a[n]
        k[zero - n, zero] = 1.0 - a[n]
    k[zero + n_max, zero] = 1.0
    k[zero - n_max, zero] = 1.0
    # recurrence diagnostic: sum of prefix products of a_k over the truncated
    # range should be visibly summable (ratio test on the last terms)
    prods = np.cumprod(a[1:])
    if prods.size >= 8 and prods[-1] > 0.5 * prods[prods.size // 2]:
        warnings.warn("prefix products of a_n are not visibly summable on the truncated range", RuntimeWarning)
    pi = _solve_stationary(k)
    return FiniteKernel(states, k, pi)


def mds_functional(kind: str, kernel: FiniteKernel, a_rule: Optional[Callable[[int], float]] = None) -> np.ndarray:
    """State functions with zero conditional mean under the chain kernel.

    f1 is +-1 at +-1 and zero elsewhere; f2 is 1 at 0, 0 at +-1, and
    1 - 1/a_n at +-(n+1).
    """
    states = kernel.states
    n_max = int(states.max())
    zero = kernel.index_of(0)
    f = np.zeros(kernel.size)
    if kind == "f1":
        f[zero + 1] = 1.0
        f[zero - 1] = -1.0
    elif kind == "f2":
        if a_rule is None:
            # recover a_n from the kernel itself
            a_rule = lambda n: kernel.matrix[zero + n, zero + n + 1] if n >= 1 else 0.5
        f[zero] = 1.0
        for n in range(1, n_max):
            v = 1.0 - 1.0 / a_rule(n)
            f[zero + n + 1] = v
            f[zero - n - 1] = v
    else:
        raise ProcessError(f"unknown functional kind: {kind}")
    interior = np.abs(states) < n_max
    resid = np.max(np.abs(kernel.apply(f)[interior]))
    if resid > 1e-12:
        raise ProcessError(f"conditional-mean residual {resid:.2e} exceeds 1e-12 on interior states")
    return f


def sample_chain(kernel: FiniteKernel, n: int, seed: int, replicate: int = 0) -> np.ndarray:
    """One stationary path of length n+1 (Y_0 ~ pi, then n kernel steps)."""
    gen_init = rngmod.stream(seed, rngmod.ROLE_INIT, replicate, n)
    gen_step = rngmod.stream(seed, rngmod.ROLE_STEP, replicate, n)
    cum_pi = np.cumsum(kernel.stationary)
    row_cum = np.cumsum(kernel.matrix, axis=1)
    idx = int(np.searchsorted(cum_pi, gen_init.random()))
    path = np.empty(n + 1, dtype=int)
    path[0] = kernel.states[idx]
    u = gen_step.random(n)
    for t in range(n):
        idx = int(np.searchsorted(row_cum[idx], u[t]))
        path[t + 1] = kernel.states[idx]
    return path


# ---------------------------------------------------------------------------
# process specifications


@dataclass(frozen=True)
class DavydovChain:
    p: float
    eps: float
    functional: str = "f1"  # f1 | f2
    n_max: int = 400

    def a_rule(self) -> Callable[[int], float]:
        return lambda i: davydov_schedule(self.p, self.eps, i)

    def build(self) -> tuple[FiniteKernel, np.ndarray]:
        kernel = davydov_kernel(self.a_rule(), self.n_max)
        f = mds_functional(self.functional, kernel, self.a_rule())
        return kernel, f


@dataclass(frozen=True)
class LinearProcess:
    """Two-sided moving average X_k = sum_j a_j eps_{k-j}, truncated to
    |j| <= truncation."""

    coeff_rule: Callable[[int], float]
    innovation: InnovationLaw = InnovationLaw("gaussian")
    truncation: int = 64
    tail_tol: float = 1e-10

    def coefficients(self) -> np.ndarray:
        t = self.truncation
        a = np.array([self.coeff_rule(j) for j in range(-t, t + 1)])
        probe = np.array([self.coeff_rule(j) for j in list(range(t + 1, t + 257)) + list(range(-t - 256, -t))])
        if np.sum(probe**2) > self.tail_tol:
            raise ProcessError("coefficient tail above the l2 truncation tolerance")
        return a


@dataclass(frozen=True)
class FunctionOfLinear:
    base: LinearProcess
    h_rule: Union[str, Callable[[np.ndarray], np.ndarray]]
    gamma: float
    alpha: float
    centering_draws: int = 10**7

    def h(self) -> Callable[[np.ndarray], np.ndarray]:
        if callable(self.h_rule):
            return self.h_rule
        if self.h_rule == "identity":
            return lambda x: np.asarray(x, dtype=float)
        if self.h_rule == "abs_power":
            g = self.gamma
            return lambda x: np.abs(x) ** g
        raise ProcessError(f"unknown h_rule: {self.h_rule}")


@dataclass(frozen=True)
class ExpandingMap:
    """Uniformly expanding interval map with an observable.

    kind: beta (T(x) = beta x mod 1), gauss (T(x) = a(1/x - 1) mod 1),
    piecewise_affine (full branches, T(x) = slope_k x + offset_k mod 1).
    """

    kind: str
    beta: float = 2.0
    a: float = 1.0
    breakpoints: tuple = ()
    slopes: tuple = ()
    offsets: tuple = ()
    observable: Union[str, Callable[[np.ndarray], np.ndarray]] = "identity"
    burn_in: int = 1000

    def __post_init__(self):
        if self.kind not in ("beta", "gauss", "piecewise_affine"):
            raise ProcessError(f"unknown map kind: {self.kind}")
        if self.kind == "beta" and self.beta <= 1.0:
            raise ProcessError("beta must exceed 1")
        if self.kind == "gauss" and self.a <= 0.0:
            raise ProcessError("a must be positive")
        if self.kind == "piecewise_affine":
            if len(self.slopes) == 0 or len(self.breakpoints) != len(self.slopes) + 1:
                raise ProcessError("need k slopes and k+1 breakpoints")
            if any(abs(s) <= 1.0 for s in self.slopes):
                raise ProcessError("slopes must exceed 1 in modulus")
            if abs(self.breakpoints[0]) > 1e-15 or abs(self.breakpoints[-1] - 1.0) > 1e-15:
                raise ProcessError("breakpoints must span [0, 1]")

    def f(self) -> Callable[[np.ndarray], np.ndarray]:
        if callable(self.observable):
            return self.observable
        if self.observable == "identity":
            return lambda x: np.asarray(x, dtype=float)
        raise ProcessError(f"unknown observable: {self.observable}")


@dataclass(frozen=True)
class IIDBaseline:
    law: InnovationLaw = InnovationLaw("gaussian")


Family = Union[DavydovChain, LinearProcess, FunctionOfLinear, ExpandingMap, IIDBaseline]


@dataclass(frozen=True)
class ProcessSpec:
    family: Family
    seed: int = 0
    p_moment: float = 3.0

    def __post_init__(self):
        if not (2.0 < self.p_moment <= 3.0):
            raise ProcessError("p_moment must lie in (2, 3]")


# ---------------------------------------------------------------------------
# linear processes


def sample_linear_process(spec: LinearProcess, n: int, seed: int, replicate: int = 0) -> np.ndarray:
    """X_1..X_n from the truncated convolution of the replicate's innovation
    stream; X_k = sum_{j=-t}^{t} a_j eps_{k-j} by correlating against the
    reversed coefficient kernel."""
    return _linear_path_values(spec, n, seed, replicate)


def _linear_batch(spec: LinearProcess, n: int, seed: int, replicates: range) -> np.ndarray:
    out = np.empty((len(replicates), n))
    for row, rep in enumerate(replicates):
        out[row] = _linear_path_values(spec, n, seed, rep)
    return out


def apply_h(
    base_values: np.ndarray,
    h_rule,
    gamma: float,
    alpha: float,
    base: Optional[LinearProcess] = None,
    seed: int = 0,
    draws: int = 10**7,
) -> dict:
    """Centered observables h(V_k) - E h(V).

    The centering constant is a Monte Carlo estimate over fresh draws of the
    stationary marginal when the base process is supplied, otherwise the
    sample mean of the inputs.  The declared modulus bound
    w_h(t, M) <= C t^gamma M^alpha is spot-checked on a grid.
    """
    fol = FunctionOfLinear(base if base is not None else LinearProcess(lambda j: 1.0 if j == 0 else 0.0), h_rule, gamma, alpha)
    h = fol.h()
    _check_modulus(h, gamma, alpha)
    vals = h(np.asarray(base_values, dtype=float))
    if base is not None:
        center, stderr = _centering_constant(base, h, seed, draws)
    else:
        center = float(np.mean(vals))
        stderr = float(np.std(vals) / np.sqrt(vals.size))
    return {"values": vals - center, "centering": center, "centering_stderr": stderr}


def _check_modulus(h, gamma: float, alpha: float) -> None:
    """Reject h whose continuity modulus blows past t^gamma M^alpha."""
    for m in (1.0, 2.0, 4.0):
        x = np.linspace(-m, m, 4001)
        hx = h(x)
        ratios = []
        for k in (1, 4, 16, 64):
            t = k * (x[1] - x[0])
            w = float(np.max(np.abs(hx[k:] - hx[:-k])))
            ratios.append(w / (t**gamma * m**alpha))
        # for a valid bound the ratio stays bounded as t -> 0; a growing
        # small-t ratio means the true exponent is below the declared gamma
        if ratios[0] > 8.0 * max(ratios[-1], 1e-12):
            raise ProcessError("modulus bound violated on the check grid")


def _centering_constant(base: LinearProcess, h, seed: int, draws: int) -> tuple[float, float]:
    a = base.coefficients()
    total = 0.0
    total2 = 0.0
    done = 0
    chunk = max(1, int(2**22 // a.size))
    gen = rngmod.stream(seed, rngmod.ROLE_CENTERING, 0, 0)
    while done < draws:
        m = min(chunk, draws - done)
        eps = base.innovation.sample(gen, m * a.size).reshape(m, a.size)
        v = h(eps @ a)
        total += float(v.sum())
        total2 += float((v**2).sum())
        done += m
    mean = total / draws
    var = max(total2 / draws - mean**2, 0.0)
    return mean, float(np.sqrt(var / draws))


# ---------------------------------------------------------------------------
# expanding maps


@dataclass(frozen=True)
class DensityGrid:
    """Probability density sampled on a uniform grid over [0, 1]."""

    x: np.ndarray
    values: np.ndarray

    def mean_of(self, f) -> float:
        return float(np.trapezoid(f(self.x) * self.values, self.x))

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        cdf = np.concatenate(([0.0], np.cumsum((self.values[1:] + self.values[:-1]) / 2.0 * np.diff(self.x))))
        cdf /= cdf[-1]
        return np.interp(gen.random(size), cdf, self.x)

    def at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.values)


def _map_branches(spec: ExpandingMap):
    """Full affine branches (slope, offset, interval) for beta and
    piecewise-affine maps."""
    if spec.kind == "beta":
        b = spec.beta
        k = int(np.ceil(b))
        branches = []
        for m in range(k):
            lo, hi = m / b, min((m + 1) / b, 1.0)
            branches.append((b, -float(m), lo, hi))
        return branches
    if spec.kind == "piecewise_affine":
        return [
            (float(s), float(o), float(lo), float(hi))
            for s, o, lo, hi in zip(spec.slopes, spec.offsets, spec.breakpoints[:-1], spec.breakpoints[1:])
        ]
    raise ProcessError("branch decomposition only for affine-branch maps")


def _forward(spec: ExpandingMap, x):
    x = np.asarray(x, dtype=np.longdouble)
    if spec.kind == "beta":
        y = spec.beta * x
        return np.asarray(y - np.floor(y), dtype=np.longdouble)
    if spec.kind == "gauss":
        with np.errstate(divide="ignore"):
            y = spec.a * (1.0 / x - 1.0)
        y = np.where(x == 0, 0.0, y)
        return np.asarray(y - np.floor(y), dtype=np.longdouble)
    s = np.zeros_like(x)
    for slope, off, lo, hi in _map_branches(spec):
        mask = (x >= lo) & (x < hi)
        y = slope * x[mask] + off
        s[mask] = y - np.floor(y)
    return s


def iterate_map(spec: ExpandingMap, x0, n: int) -> np.ndarray:
    """Orbit x0, T x0, ..., T^n x0.

    For beta maps with integer beta and rational x0 (a Fraction) the orbit
    is exact; otherwise it is an extended-precision pseudo-orbit, which for
    expanding maps shadows a true orbit but not the one started at x0.
    """
    exact = (
        spec.kind == "beta"
        and isinstance(x0, Fraction)
        and abs(spec.beta - round(spec.beta)) < 1e-15
    )
    if exact:
        b = int(round(spec.beta))
        orbit = [x0]
        x = x0
        for _ in range(n):
            x = (b * x) % 1
            orbit.append(x)
        return np.array([float(v) for v in orbit])
    x = np.longdouble(x0)
    orbit = np.empty(n + 1, dtype=np.longdouble)
    orbit[0] = x
    for t in range(n):
        x = _forward(spec, x)
        orbit[t + 1] = x
    return np.asarray(orbit, dtype=float)


def invariant_density(spec: ExpandingMap, grid_size: int = 2**12, tol: float = 1e-10) -> DensityGrid:
    """Invariant density of the map.

    beta = integer: Lebesgue (constant 1).  gauss with a = 1: the classical
    1/((1+x) log 2) law.  Otherwise the fixed point of the transfer operator
    by power iteration on a uniform grid.
    """
    x = np.linspace(0.0, 1.0, grid_size + 1)
    if spec.kind == "beta" and abs(spec.beta - round(spec.beta)) < 1e-15:
        return DensityGrid(x, np.ones_like(x))
    if spec.kind == "gauss":
        if abs(spec.a - 1.0) > 1e-15:
            raise ProcessError("gauss-family density implemented for a = 1 only")
        return DensityGrid(x, 1.0 / ((1.0 + x) * np.log(2.0)))
    # transfer-operator power iteration: (Lh)(x) = sum h(y)/|T'(y)| over preimages
    branches = _map_branches(spec)
    h = np.ones_like(x)
    for it in range(10**5):
        new = np.zeros_like(x)
        for slope, off, lo, hi in branches:
            y = (x - off) / slope
            y = y - np.floor(y)  # fold the mod-1 offset back into the branch
            valid = (y >= lo - 1e-12) & (y <= hi + 1e-12)
            contrib = np.interp(np.clip(y, lo, hi), x, h) / abs(slope)
            new += np.where(valid, contrib, 0.0)
        new /= np.trapezoid(new, x)
        if np.max(np.abs(new - h)) < tol:
            return DensityGrid(x, new)
        h = new
    raise ProcessError("transfer-operator power iteration did not converge")


def transfer_duality_residual(spec: ExpandingMap, h, f, panels: int = 64, nodes: int = 16) -> float:
    """Residual of the adjoint identity int (Kh) f dmu = int h (f o T) dmu
    for the transfer operator K of an affine-branch map.

    Both sides are computed by composite Gauss-Legendre panels split at the
    branch endpoints; for integer beta and polynomial h, f the quadrature is
    exact to rounding.
    """
    branches = _map_branches(spec)
    rho = invariant_density(spec)
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)

    def integrate(fn, lo, hi):
        edges = np.linspace(lo, hi, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * np.diff(edges)
        pts = mid[:, None] + half[:, None] * gl_x[None, :]
        return float((half[:, None] * gl_w[None, :] * fn(pts.ravel()).reshape(pts.shape)).sum())

    def kh(x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for slope, off, lo, hi in branches:
            y = (x - off) / slope
            y = y - np.floor(y)
            valid = (y >= lo - 1e-12) & (y <= hi + 1e-12)
            total += np.where(valid, h(np.clip(y, lo, hi)) * rho.at(y) / abs(slope), 0.0)
        return total / np.maximum(rho.at(x), 1e-300)

    lhs = integrate(lambda x: kh(x) * f(x) * rho.at(x), 0.0, 1.0)
    rhs = 0.0
    for slope, off, lo, hi in branches:
        rhs += integrate(lambda x: h(x) * f((slope * x + off) - np.floor(slope * x + off)) * rho.at(x), lo, hi)
    return abs(lhs - rhs)


def _dual_step(spec: ExpandingMap, x: np.ndarray, u: np.ndarray, density: DensityGrid) -> np.ndarray:
    """One step of the time-reversed chain: draw a preimage of each x with
    the invariant-density weights.  The reversed chain has the same law of
    partial sums as the forward orbit."""
    if spec.kind == "gauss":
        # closed-form inverse cdf of the branch index for a = 1
        m = np.ceil((1.0 + x) / (1.0 - u) - x - 1.0)
        m = np.maximum(m, 1.0)
        return 1.0 / (x + m)
    branches = _map_branches(spec)
    ys = np.empty((len(branches), x.size))
    ws = np.empty((len(branches), x.size))
    for i, (slope, off, lo, hi) in enumerate(branches):
        y = (x - off) / slope
        y = y - np.floor(y)
        valid = (y >= lo - 1e-12) & (y <= hi + 1e-12)
        y = np.clip(y, lo, hi)
        ys[i] = y
        ws[i] = np.where(valid, density.at(y) / abs(slope), 0.0)
    cum = np.cumsum(ws, axis=0)
    cum /= cum[-1]
    pick = (u[None, :] > cum).sum(axis=0)
    return ys[pick, np.arange(x.size)]


# ---------------------------------------------------------------------------
# trajectory batches


STEP_BLOCK = 4096  # per-step uniforms are drawn in blocks of this many steps


@dataclass(frozen=True)
class TrajectoryBatch:
    """Normalized partial sums n^{-1/2} S_n for each n on a grid, M
    replicates each.

    Every grid point reads the same per-replicate path (common random
    numbers), so distance curves share their sampling noise across n and
    slope fits see the rate, not the noise.  Streams are keyed by
    (seed, role, replicate), making the batch bit-identical under any
    replicate chunking or thread count."""

    n_grid: tuple
    m: int
    sums: dict  # n -> array of M values
    seed: int

    def __post_init__(self):
        for n, v in self.sums.items():
            if not np.all(np.isfinite(v)):
                raise ProcessError(f"non-finite normalized sum at n={n}")

    def values(self, n: int) -> np.ndarray:
        return self.sums[n]


def _davydov_sums(chain: DavydovChain, n_grid, seed: int, replicates: range) -> np.ndarray:
    kernel, f = _davydov_cache(chain)
    zero = kernel.index_of(0)
    size = kernel.size
    up_prob = np.zeros(size)
    up_target = np.full(size, zero, dtype=int)
    for i, s in enumerate(kernel.states):
        if s == 0:
            continue
        nxt = s + 1 if s > 0 else s - 1
        if abs(nxt) <= kernel.states.max():
            j = kernel.index_of(nxt)
            up_prob[i] = kernel.matrix[i, j]
            up_target[i] = j
    cum_pi = np.cumsum(kernel.stationary)
    m = len(replicates)
    n_top = n_grid[-1]
    marks = {n: col for col, n in enumerate(n_grid)}
    idx = np.empty(m, dtype=int)
    gens = []
    for row, rep in enumerate(replicates):
        idx[row] = np.searchsorted(cum_pi, rngmod.stream(seed, rngmod.ROLE_INIT, rep, 0).random())
        gens.append(rngmod.stream(seed, rngmod.ROLE_STEP, rep, 0))
    out = np.empty((m, len(n_grid)))
    total = np.zeros(m)
    for start in range(0, n_top, STEP_BLOCK):
        block = min(STEP_BLOCK, n_top - start)
        u_steps = np.stack([g.random(block) for g in gens])
        for t in range(block):
            u = u_steps[:, t]
            at_zero = idx == zero
            nxt = np.where(u < up_prob[idx], up_target[idx], zero)
            nxt = np.where(at_zero, np.where(u < 0.5, zero + 1, zero - 1), nxt)
            idx = nxt
            total += f[idx]
            n_done = start + t + 1
            if n_done in marks:
                out[:, marks[n_done]] = total / np.sqrt(n_done)
    return out


_DAVYDOV_CACHE: dict = {}


def _davydov_cache(chain: DavydovChain):
    key = (chain.p, chain.eps, chain.functional, chain.n_max)
    if key not in _DAVYDOV_CACHE:
        _DAVYDOV_CACHE[key] = chain.build()
    return _DAVYDOV_CACHE[key]


def _expanding_sums(spec: ExpandingMap, n_grid, seed: int, replicates: range) -> np.ndarray:
    density = invariant_density(spec)
    f = spec.f()
    mu_f = density.mean_of(f)
    m = len(replicates)
    n_top = n_grid[-1]
    marks = {n: col for col, n in enumerate(n_grid)}
    x = np.empty(m)
    gens = []
    for row, rep in enumerate(replicates):
        x[row] = density.draw(rngmod.stream(seed, rngmod.ROLE_INIT, rep, 0), 1)[0]
        gens.append(rngmod.stream(seed, rngmod.ROLE_STEP, rep, 0))
    out = np.empty((m, len(n_grid)))
    total = f(x) - mu_f
    if 1 in marks:
        out[:, marks[1]] = total
    is_dyadic = spec.kind == "beta" and abs(spec.beta - 2.0) < 1e-15
    for start in range(0, n_top - 1, STEP_BLOCK):
        block = min(STEP_BLOCK, n_top - 1 - start)
        u_steps = np.stack([g.random(block) for g in gens])
        for t in range(block):
            if is_dyadic:
                x = 0.5 * (x + (u_steps[:, t] < 0.5))
            else:
                x = _dual_step(spec, x, u_steps[:, t], density)
            total += f(x) - mu_f
            n_done = start + t + 2
            if n_done in marks:
                out[:, marks[n_done]] = total / np.sqrt(n_done)
    return out


def _iid_sums(fam: IIDBaseline, n_grid, seed: int, replicates: range) -> np.ndarray:
    marks = np.asarray(n_grid)
    out = np.empty((len(replicates), marks.size))
    for row, rep in enumerate(replicates):
        gen = rngmod.stream(seed, rngmod.ROLE_INNOVATION, rep, 0)
        cs = np.cumsum(fam.law.sample(gen, marks[-1]))
        out[row] = cs[marks - 1] / np.sqrt(marks)
    return out


def _linear_path_values(fam: LinearProcess, n_top: int, seed: int, rep: int) -> np.ndarray:
    a = fam.coefficients()
    t = fam.truncation
    gen = rngmod.stream(seed, rngmod.ROLE_INNOVATION, rep, 0)
    eps = fam.innovation.sample(gen, n_top + 2 * t)
    return np.convolve(eps, a[::-1], mode="valid")


def _linear_sums(fam: LinearProcess, n_grid, seed: int, replicates: range) -> np.ndarray:
    marks = np.asarray(n_grid)
    out = np.empty((len(replicates), marks.size))
    for row, rep in enumerate(replicates):
        cs = np.cumsum(_linear_path_values(fam, int(marks[-1]), seed, rep))
        out[row] = cs[marks - 1] / np.sqrt(marks)
    return out


def _function_of_linear_sums(fam: FunctionOfLinear, n_grid, seed: int, replicates: range, center: float) -> np.ndarray:
    marks = np.asarray(n_grid)
    out = np.empty((len(replicates), marks.size))
    h = fam.h()
    for row, rep in enumerate(replicates):
        vals = h(_linear_path_values(fam.base, int(marks[-1]), seed, rep)) - center
        cs = np.cumsum(vals)
        out[row] = cs[marks - 1] / np.sqrt(marks)
    return out


_CENTER_CACHE: dict = {}


def partial_sums_batch(
    spec: ProcessSpec,
    n_grid,
    m: int,
    seed: Optional[int] = None,
    budget: int = DEFAULT_BATCH_BUDGET,
) -> TrajectoryBatch:
    """M replicates of n^{-1/2} S_n for each n, each replicate reading one
    common path from its counter-based stream keyed by (seed, replicate)."""
    n_grid = tuple(int(v) for v in n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise ProcessError("n_grid must be strictly increasing and positive")
    if m < 100:
        raise ProcessError("need at least 100 replicates")
    if m * max(n_grid) > budget:
        raise ProcessError(f"batch of {m} x {max(n_grid)} exceeds the memory budget")
    seed = spec.seed if seed is None else seed
    fam = spec.family
    center = 0.0
    if isinstance(fam, FunctionOfLinear):
        key = (id(fam.base.coeff_rule), fam.base.truncation, str(fam.h_rule), fam.gamma, seed)
        if key not in _CENTER_CACHE:
            _CENTER_CACHE[key] = _centering_constant(fam.base, fam.h(), seed, fam.centering_draws)
        center = _CENTER_CACHE[key][0]
    parts = []
    for start in range(0, m, REPLICATE_CHUNK):
        reps = range(start, min(start + REPLICATE_CHUNK, m))
        if isinstance(fam, IIDBaseline):
            parts.append(_iid_sums(fam, n_grid, seed, reps))
        elif isinstance(fam, DavydovChain):
            parts.append(_davydov_sums(fam, n_grid, seed, reps))
        elif isinstance(fam, LinearProcess):
            parts.append(_linear_sums(fam, n_grid, seed, reps))
        elif isinstance(fam, FunctionOfLinear):
            parts.append(_function_of_linear_sums(fam, n_grid, seed, reps, center))
        elif isinstance(fam, ExpandingMap):
            parts.append(_expanding_sums(fam, n_grid, seed, reps))
        else:
            raise ProcessError(f"unsupported family: {type(fam).__name__}")
    table = np.concatenate(parts, axis=0)
    sums = {n: table[:, col] for col, n in enumerate(n_grid)}
    return TrajectoryBatch(n_grid, m, sums, seed)


# ---------------------------------------------------------------------------
# long-run variances


def _chain_long_run(kernel: FiniteKernel, f: np.ndarray, lag_cap: int = 4096, tol: float = 1e-14):
    pi = kernel.stationary
    fc = f - float(pi @ f)
    var0 = float(pi @ (fc * fc))
    covs = [var0]
    v = fc.copy()
    for _ in range(lag_cap):
        v = kernel.apply(v)
        c = float(pi @ (fc * v))
        covs.append(c)
        if abs(c) < tol * max(var0, 1e-300) and len(covs) > 8:
            break
    covs = np.array(covs)
    sigma2 = float(covs[0] + 2.0 * covs[1:].sum())

    def sigma_n2(n: int) -> float:
        k = np.arange(1, min(n, covs.size - 1) + 0)
        kk = np.arange(1, covs.size)
        w = np.maximum(1.0 - kk / n, 0.0)
        return float(covs[0] + 2.0 * np.sum(w * covs[1:]))

    return sigma2, sigma_n2


def long_run_variance(spec: ProcessSpec) -> dict:
    """sigma^2 = lim Var(S_n)/n and the exact finite-n variance function,
    by the closed form available for each family."""
    fam = spec.family
    if isinstance(fam, IIDBaseline):
        v = fam.law.variance
        return {"sigma2": v, "sigma_n2": lambda n: v, "method": "closed-form"}
    if isinstance(fam, DavydovChain):
        kernel, f = _davydov_cache(fam)
        sigma2, sigma_n2 = _chain_long_run(kernel, f)
        return {"sigma2": sigma2, "sigma_n2": sigma_n2, "method": "kernel-power"}
    if isinstance(fam, LinearProcess):
        a = fam.coefficients()
        t = fam.truncation
        var_eps = fam.innovation.variance
        big_a = float(a.sum())
        sigma2 = big_a**2 * var_eps

        def sigma_n2(n: int) -> float:
            # Var(S_n)/n = Var(eps)/n * sum_j (sum_{k=1..n} a_{k-j})^2
            cs = np.concatenate(([0.0], np.cumsum(a)))  # over j index -t..t
            total = 0.0
            for j in range(1 - t, n + t + 1):
                lo = max(1 - j, -t)
                hi = min(n - j, t)
                if hi < lo:
                    continue
                total += (cs[hi + t + 1] - cs[lo + t]) ** 2
            return var_eps * total / n

        return {"sigma2": sigma2, "sigma_n2": sigma_n2, "method": "closed-form"}
    if isinstance(fam, ExpandingMap):
        density = invariant_density(fam)
        f = fam.f()
        mu_f = density.mean_of(f)
        x = density.x
        fc = f(x) - mu_f
        w = density.values
        var0 = float(np.trapezoid(fc * fc * w, x))
        covs = [var0]
        # dual-kernel power iteration on the grid: (Kh)(x) = E[h(prev) | x]
        h = fc.copy()
        for _ in range(200):
            h = _dual_kernel_apply(fam, x, h, density)
            c = float(np.trapezoid(fc * h * w, x))
            covs.append(c)
            if abs(c) < 1e-13 * max(var0, 1e-300):
                break
        covs = np.array(covs)
        sigma2 = float(covs[0] + 2.0 * covs[1:].sum())

        def sigma_n2(n: int) -> float:
            kk = np.arange(1, covs.size)
            return float(covs[0] + 2.0 * np.sum(np.maximum(1.0 - kk / n, 0.0) * covs[1:]))

        return {"sigma2": sigma2, "sigma_n2": sigma_n2, "method": "kernel-power"}
    if isinstance(fam, FunctionOfLinear):
        # no closed form: batch-means estimate on one long path
        n_total, n_batch = 2**18, 2**12
        base = sample_linear_process(fam.base, n_total, spec.seed)
        res = apply_h(base, fam.h_rule, fam.gamma, fam.alpha, base=fam.base, seed=spec.seed, draws=10**6)
        v = res["values"].reshape(-1, n_batch)
        means = v.sum(axis=1) / np.sqrt(n_batch)
        sigma2 = float(np.var(means))
        stderr = float(sigma2 * np.sqrt(2.0 / (means.size - 1)))
        return {
            "sigma2": sigma2,
            "sigma_n2": lambda n: sigma2,
            "method": "batch-means",
            "stderr": stderr,
        }
    raise ProcessError(f"unsupported family: {type(fam).__name__}")


def _dual_kernel_apply(spec: ExpandingMap, x: np.ndarray, h: np.ndarray, density: DensityGrid) -> np.ndarray:
    """(Kh)(x) = sum over preimages y of x of w(y) h(y), the conditional
    expectation of the reversed chain (equals the transfer operator acting
    on h f_mu, divided by f_mu)."""
    if spec.kind == "gauss":
        out = np.zeros_like(x)
        wsum = np.zeros_like(x)
        for m_idx in range(1, 400):
            y = 1.0 / (x + m_idx)
            w = (1.0 + x) * (1.0 / (x + m_idx) - 1.0 / (x + m_idx + 1.0))
            out += w * np.interp(y, x, h)
            wsum += w
        return out / wsum
    branches = _map_branches(spec)
    out = np.zeros_like(x)
    wsum = np.zeros_like(x)
    for slope, off, lo, hi in branches:
        y = (x - off) / slope
        y = y - np.floor(y)
        valid = (y >= lo - 1e-12) & (y <= hi + 1e-12)
        y = np.clip(y, lo, hi)
        w = np.where(valid, density.at(y) / abs(slope), 0.0)
        out += w * np.interp(y, x, h)
        wsum += w
    return out / np.maximum(wsum, 1e-300)
