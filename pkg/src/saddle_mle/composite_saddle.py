"""Row-wise composite CGFs, the saddle-point equation and density approximation.

Row ``i`` of ``y = G x + eta`` has CGF

    K_i(t) = K_eta(t) + sum_j k_ij(t * x_j)

and by the chain rule ``K_i^(p)(t) = K_eta^(p)(t) + sum_j x_j^p k_ij^(p)(t x_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .errors import DomainError, InvalidOrder, NoConvergence, TooManyComponents
from .noise_kernels import (
    CLIPPED_EXPONENTIAL,
    FLOATING_POINT,
    GAUSSIAN_ELEMENT,
    UNIFORM_ROUNDING,
    AdditiveNoise,
    ElementKernel,
    KernelGrid,
    additive_eval,
    kernel_domain,
    kernel_eval,
)

DEFAULT_TOL = 1e-10
MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class UncertainDesign:
    """Observed design ``H`` with per-entry noise kernels and additive noise."""

    kernels: KernelGrid
    additive: AdditiveNoise

    def __post_init__(self):
        if len(self.kernels.shape) != 2:
            raise ValueError("design must be a 2-d grid")
        m, n = self.kernels.shape
        if not m > n >= 1:
            raise ValueError(f"need an over-determined design (m > n), got {m}x{n}")

    @property
    def H(self):
        return self.kernels.mean

    @property
    def shape(self):
        return self.kernels.shape

    @property
    def m(self):
        return self.kernels.shape[0]

    @property
    def n(self):
        return self.kernels.shape[1]

    @property
    def sigma(self):
        return self.additive.sigma

    @classmethod
    def rounding(cls, H, delta, sigma):
        H = np.asarray(H, dtype=float)
        if not delta > 0:
            raise ValueError("delta must be > 0")
        grid = KernelGrid(H, delta, 1.0, 0.0, 1.0, 0.0, variant=UNIFORM_ROUNDING)
        return cls(grid, AdditiveNoise(sigma))

    @classmethod
    def floating_point(cls, H, D, sigma):
        H = np.asarray(H, dtype=float)
        grid = KernelGrid(H, np.asarray(D, dtype=float), 1.0, 0.0, 1.0, 0.0, variant=FLOATING_POINT)
        return cls(grid, AdditiveNoise(sigma))

    @classmethod
    def clipping(cls, H, rate, threshold, sigma, clipped=None):
        """Clipped-Laplace design; clip flags default to ``|H| == threshold``."""
        H = np.asarray(H, dtype=float)
        if not (rate > 0 and threshold > 0):
            raise ValueError("rate and threshold must be > 0")
        if np.any(np.abs(H) > threshold * (1 + 1e-12)):
            raise ValueError("observed entries exceed the clipping threshold")
        if clipped is None:
            clipped = np.abs(H) == threshold
        clipped = np.asarray(clipped, dtype=float)
        sign = np.where(H < 0, -1.0, 1.0)
        if np.any(np.abs(np.abs(H[clipped == 1]) - threshold) > 1e-12 * threshold):
            raise ValueError("clipped entries must sit on the threshold")
        grid = KernelGrid(H, 0.0, float(rate), clipped, sign, 0.0, variant=CLIPPED_EXPONENTIAL)
        return cls(grid, AdditiveNoise(sigma))

    @classmethod
    def gaussian(cls, H, rho, sigma):
        H = np.asarray(H, dtype=float)
        if rho < 0:
            raise ValueError("rho must be >= 0")
        grid = KernelGrid(H, 0.0, 1.0, 0.0, 1.0, float(rho), variant=GAUSSIAN_ELEMENT)
        return cls(grid, AdditiveNoise(sigma))


@dataclass(frozen=True, eq=False)
class SaddleSolution:
    """Per-row saddle points with cached curvature terms."""

    t: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    residual: np.ndarray
    iterations: int = 0


# --------------------------------------------------------------------------
# Row CGFs


def row_terms(design, x, t, orders, dx_orders=(), rows=None, check=True):
    """Vectorised row CGF derivatives.

    Returns ``(K, dK)`` where ``K[p]`` is the length-``len(t)`` vector of
    ``K_i^(p)(t_i)`` and ``dK[p]`` the matrix of partials ``d K_i^(p) / d x_j``
    with ``t`` held fixed.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    u = t[:, None] * x[None, :]
    need = set(orders)
    for q in dx_orders:
        need |= {q + 1} if q == 0 else {q, q + 1}
    need = tuple(sorted(need))
    vals = dict(zip(need, design.kernels.evaluate(u, need, rows=rows, check=check)))
    K = {}
    for p in orders:
        xp = x**p if p else np.ones_like(x)
        K[p] = additive_eval(design.additive, t, p) + vals[p] @ xp
    dK = {}
    for q in dx_orders:
        if q == 0:
            dK[0] = t[:, None] * vals[1]
        elif q == 1:
            dK[1] = vals[1] + u * vals[2]
        else:
            dK[2] = 2.0 * x[None, :] * vals[2] + t[:, None] * (x * x)[None, :] * vals[3]
    return K, dK


def _check_row_domain(design, i, x, t):
    lo, hi = t_domain(design, i, x)
    if not lo < t < hi:
        u = t * np.asarray(x, dtype=float)
        bad = design.kernels.take_rows([i]).out_of_domain(u[None, :])[0]
        j = int(np.argmax(bad))
        raise DomainError(f"t={t!r} puts entry ({i}, {j}) outside its kernel domain", index=(i, j))


def row_cgf(design, i, x, t, order):
    """``order``-th t-derivative of row ``i``'s composite CGF at ``t``."""
    _check_row_domain(design, i, x, t)
    K, _ = row_terms(design, x, np.array([float(t)]), (order,), rows=[i], check=False)
    return float(K[order][0])


def row_cgf_dx(design, i, x, t, order):
    """Gradient in ``x`` of ``K_i^(order)(t)`` holding ``t`` fixed."""
    if order not in (0, 1, 2):
        raise InvalidOrder(f"x-derivative order must be 0..2, got {order!r}")
    _check_row_domain(design, i, x, t)
    _, dK = row_terms(design, x, np.array([float(t)]), (), (order,), rows=[i], check=False)
    return dK[order][0].copy()


def t_domains(design, x):
    """Vector form of :func:`t_domain` for all rows."""
    x = np.asarray(x, dtype=float)
    m = design.m
    lo = np.full(m, -math.inf)
    hi = np.full(m, math.inf)
    g = design.kernels
    if not g._has_clip:
        return lo, hi
    sx = g.sign * x[None, :]
    on = g.clipped == 1
    with np.errstate(divide="ignore"):
        bound = g.rate / sx
    up = on & (sx > 0)
    down = on & (sx < 0)
    hi = np.min(np.where(up, bound, math.inf), axis=1)
    lo = np.max(np.where(down, bound, -math.inf), axis=1)
    return lo, hi


def t_domain(design, i, x):
    """Largest open interval around 0 on which every ``t * x_j`` is admissible."""
    lo, hi = t_domains(design, x)
    return float(lo[i]), float(hi[i])


# --------------------------------------------------------------------------
# Saddle-point equation


def _midpoint(a, b):
    # Bisection that works on a log scale when the bracket spans many decades.
    mid = 0.5 * (a + b)
    aa, ab = np.abs(a), np.abs(b)
    small, large = np.minimum(aa, ab), np.maximum(aa, ab)
    same = a * b >= 0
    geo = same & (large > 16.0 * np.maximum(small, 1e-300)) & (large > 1.0)
    if geo.any():
        sgn = np.where(a + b < 0, -1.0, 1.0)
        mid = np.where(geo, sgn * np.sqrt(np.maximum(small, 1e-300) * large), mid)
    straddle = (~same) & (large > 16.0 * small) & (large > 1.0)
    return np.where(straddle, 0.0, mid)


def safeguarded_newton(fun, y, t0, lo, hi, tol=DEFAULT_TOL, max_iter=MAX_ITER):
    """Solve ``K'(t) = y`` for a batch of increasing functions.

    Parameters
    ----------
    fun : callable
        ``fun(t, idx) -> (K'(t), K''(t))`` for the entries ``idx`` of the batch.
    y : ndarray
        Targets.
    t0 : ndarray
        Initial guesses; moved inside the domain if needed.
    lo, hi : ndarray
        Open domain of each function.  ``K'`` must tend to ``-inf``/``+inf``
        at a finite lower/upper end.

    Returns
    -------
    t, k2, residual, iterations
    """
    y = np.asarray(y, dtype=float)
    size = y.shape[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (size,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (size,))
    if np.any(~(lo < 0) | ~(hi > 0)):
        raise DomainError("saddle-point domain does not contain 0")
    with np.errstate(invalid="ignore"):
        lo_c = np.where(np.isfinite(lo), lo + 1e-12 * (1 + np.abs(lo)), lo)
        hi_c = np.where(np.isfinite(hi), hi - 1e-12 * (1 + np.abs(hi)), hi)
    t = np.clip(np.asarray(t0, dtype=float) + np.zeros(size), lo_c, hi_c)
    t = np.where(np.isfinite(t), t, 0.0)
    a = lo_c.copy()
    b = hi_c.copy()
    scale = tol * (1.0 + np.abs(y))
    k2 = np.full(size, np.nan)
    res = np.full(size, np.nan)
    f_prev = np.full(size, math.inf)
    active = np.arange(size)
    it = 0
    while active.size:
        if it >= max_iter:
            raise NoConvergence(
                f"saddle solve did not converge for {active.size} row(s) in {max_iter} iterations",
                bracket=(a[active].copy(), b[active].copy()),
                rows=active.copy(),
            )
        it += 1
        ta = t[active]
        kp, kpp = fun(ta, active)
        f = kp - y[active]
        res[active] = f
        k2[active] = kpp
        conv = np.abs(f) <= scale[active]
        neg = f < 0
        a[active] = np.where(neg, ta, a[active])
        b[active] = np.where(neg, b[active], ta)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            tn = ta - f / kpp
        aa, bb = a[active], b[active]
        ok = np.isfinite(tn) & (tn > aa) & (tn < bb)
        # Bisect when Newton is not halving the residual and a finite bracket exists.
        finite = np.isfinite(aa) & np.isfinite(bb)
        ok &= ~(finite & (np.abs(f) > 0.5 * f_prev[active]))
        with np.errstate(invalid="ignore", over="ignore"):
            fb = np.where(finite, _midpoint(aa, bb), 0.0)
        # One-sided bracket: step outward geometrically.
        up = ~np.isfinite(bb)
        down = ~np.isfinite(aa)
        fb = np.where(up, ta + np.maximum(1.0, 2.0 * np.abs(ta)), fb)
        fb = np.where(down, ta - np.maximum(1.0, 2.0 * np.abs(ta)), fb)
        tn = np.where(ok, tn, fb)
        width = bb - aa
        stuck = finite & (width <= 4 * np.finfo(float).eps * np.maximum(np.abs(aa), np.abs(bb)))
        if np.any(stuck & ~conv):
            rows = active[stuck & ~conv]
            raise NoConvergence(
                f"bracket collapsed before reaching tolerance for {rows.size} row(s)",
                bracket=(a[rows].copy(), b[rows].copy()),
                rows=rows,
            )
        f_prev[active] = np.abs(f)
        keep = ~conv
        # converged rows still take their in-bracket Newton step as a polish
        t[active[keep | ok]] = tn[keep | ok]
        active = active[keep]
    return t, k2, res, it


def _row_fun(design, x):
    def fun(t, idx):
        K, _ = row_terms(design, x, t, (1, 2), rows=idx, check=False)
        return K[1], K[2]

    return fun


def solve_saddle_all(design, x, y, tol=DEFAULT_TOL, warm=None, max_iter=MAX_ITER):
    """Solve every row's saddle-point equation ``K_i'(t_i) = y_i``.

    ``warm`` may be a previous :class:`SaddleSolution` whose ``t`` seeds the
    iteration.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (design.n,) or y.shape != (design.m,):
        raise ValueError("x / y dimensions do not match the design")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    lo, hi = t_domains(design, x)
    t0 = np.zeros(design.m) if warm is None else np.asarray(warm.t, dtype=float)
    t, _, _, iters = safeguarded_newton(_row_fun(design, x), y, t0, lo, hi, tol, max_iter)
    K, _ = row_terms(design, x, t, (1, 2, 3), check=False)
    return SaddleSolution(t=t, k2=K[2], k3=K[3], residual=K[1] - y, iterations=iters)


def solve_saddle(design, i, x, y_i, tol=DEFAULT_TOL, t0=0.0, max_iter=MAX_ITER):
    """Single-row saddle solve; returns ``(t_i, K''_i(t_i), K'''_i(t_i))``."""
    x = np.asarray(x, dtype=float)
    lo, hi = t_domain(design, i, x)
    rows = np.array([i])

    def fun(t, idx):
        K, _ = row_terms(design, x, t, (1, 2), rows=rows[idx], check=False)
        return K[1], K[2]

    t, _, _, _ = safeguarded_newton(fun, np.array([float(y_i)]), np.array([t0]), lo, hi, tol, max_iter)
    K, _ = row_terms(design, x, t, (2, 3), rows=rows, check=False)
    return float(t[0]), float(K[2][0]), float(K[3][0])


# --------------------------------------------------------------------------
# Scalar CGFs and the density approximation


class RowCGF:
    """CGF of ``g_i^T x + eta_i`` as a scalar function of ``t``."""

    def __init__(self, design, i, x):
        self.design = design
        self.i = int(i)
        self.x = np.asarray(x, dtype=float)

    def __call__(self, t, order):
        return row_cgf(self.design, self.i, self.x, t, order)

    def domain(self):
        return t_domain(self.design, self.i, self.x)


class SumCGF:
    """CGF of a sum of independent entries, each given by an :class:`ElementKernel`."""

    def __init__(self, kernels, additive=None):
        self.kernels = list(kernels)
        self.additive = additive
        if not self.kernels and additive is None:
            raise ValueError("empty sum")

    def __call__(self, t, order):
        total = additive_eval(self.additive, t, order) if self.additive else 0.0
        return total + sum(kernel_eval(k, t, order) for k in self.kernels)

    def domain(self):
        lo, hi = -math.inf, math.inf
        for k in self.kernels:
            a, b = kernel_domain(k)
            lo, hi = max(lo, a), min(hi, b)
        return lo, hi


def saddle_point(cgf, alpha, tol=DEFAULT_TOL, t0=0.0):
    """Root ``t0`` of ``K'(t) = alpha`` for a scalar CGF accessor."""
    lo, hi = cgf.domain()

    def fun(t, idx):
        return np.array([cgf(float(t[0]), 1)]), np.array([cgf(float(t[0]), 2)])

    t, _, _, _ = safeguarded_newton(fun, np.array([float(alpha)]), np.array([t0]), lo, hi, tol)
    return float(t[0])


def saddle_density(cgf, alpha, tol=DEFAULT_TOL):
    """Saddle-point approximation ``(2 pi K''(t0))^(-1/2) exp(K(t0) - t0 alpha)``."""
    t0 = saddle_point(cgf, alpha, tol)
    return math.exp(cgf(t0, 0) - t0 * alpha) / math.sqrt(2.0 * math.pi * cgf(t0, 2))


# --------------------------------------------------------------------------
# Component distributions and the quadrature oracle


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError("normal sd must be > 0")

    gaussian = True

    def kernel(self):
        return ElementKernel.gaussian_element(self.mean, self.sd)

    @property
    def variance(self):
        return self.sd**2

    @property
    def support(self):
        return (-math.inf, math.inf)

    def pdf(self, x):
        return stats.norm.pdf(x, self.mean, self.sd)


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform needs lo < hi")

    gaussian = False

    def kernel(self):
        return ElementKernel.uniform_rounding(0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo))

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self):
        return (self.hi - self.lo) ** 2 / 12.0

    @property
    def support(self):
        return (self.lo, self.hi)

    def pdf(self, x):
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be > 0")

    gaussian = False

    def kernel(self):
        return ElementKernel.clipped_exponential(0.0, self.rate, 1, 1)

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def variance(self):
        return 1.0 / self.rate**2

    @property
    def support(self):
        return (0.0, math.inf)

    def pdf(self, x):
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)


def sum_cgf(components):
    """:class:`SumCGF` for a list of component distributions."""
    return SumCGF([c.kernel() for c in components])


MAX_ORACLE_COMPONENTS = 3


def convolution_oracle_pdf(components, alpha):
    """Density of a sum of independent components by nested adaptive quadrature.

    Gaussian components are merged analytically; at most three non-Gaussian
    components are allowed because the cost grows exponentially.
    """
    gauss = [c for c in components if c.gaussian]
    other = [c for c in components if not c.gaussian]
    if not components:
        raise ValueError("no components")
    if len(other) > MAX_ORACLE_COMPONENTS:
        raise TooManyComponents(
            f"quadrature oracle supports at most {MAX_ORACLE_COMPONENTS} non-Gaussian components"
        )
    normal = None
    if gauss:
        normal = Normal(sum(g.mean for g in gauss), math.sqrt(sum(g.variance for g in gauss)))
    return float(_conv_pdf(other, normal, float(alpha)))


def _kinks(comps):
    # Points where the density of a sum of the given components is not smooth.
    pts = [0.0]
    for c in comps:
        lo, hi = c.support
        pts = [p + e for p in pts for e in (lo, hi) if math.isfinite(e)] or pts
    return pts


def _conv_pdf(other, normal, alpha):
    if not other:
        return normal.pdf(alpha)
    if len(other) == 1 and normal is None:
        return other[0].pdf(alpha)
    first, rest = other[0], other[1:]
    lo, hi = first.support
    if normal is None:
        # only the part of first's support that keeps alpha - s in rest's support
        rlo = sum(c.support[0] for c in rest)
        rhi = sum(c.support[1] for c in rest)
        lo, hi = max(lo, alpha - rhi), min(hi, alpha - rlo)
        if not lo < hi:
            return 0.0
    points = sorted({alpha - k for k in _kinks(rest) if lo < alpha - k < hi}) if normal is None else None

    def integrand(s):
        return float(first.pdf(s)) * _conv_pdf(rest, normal, alpha - s)

    if math.isinf(hi):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400)
        return val
    val, _ = integrate.quad(integrand, lo, hi, points=points or None, epsabs=1e-13, epsrel=1e-11, limit=400)
    return val
