"""Scalar cumulant generating functions for design-matrix entries.

Every supported entry is an observed value ``H`` plus independent noise, so
its CGF has the form ``k(u) = H*u + (noise CGF)(u)``.  Four noise families
are supported:

* uniform rounding on ``(H - delta, H + delta)``
* floating-point truncation, a uniform with per-entry half-width ``D``
* clipped Laplace entries: ``+/-Exponential(rate)`` when clipped, none otherwise
* Gaussian with standard deviation ``rho``

:class:`KernelGrid` stores the parameters of a whole matrix of entries as
arrays.  Each entry's CGF is evaluated as the sum of a uniform, an exponential
and a Gaussian part, with unused parts switched off by zero parameters, so a
grid may mix families freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import bernoulli

from .errors import DomainError, InvalidOrder

UNIFORM_ROUNDING = "UniformRounding"
FLOATING_POINT = "FloatingPoint"
CLIPPED_EXPONENTIAL = "ClippedExponential"
GAUSSIAN_ELEMENT = "GaussianElement"
VARIANTS = (UNIFORM_ROUNDING, FLOATING_POINT, CLIPPED_EXPONENTIAL, GAUSSIAN_ELEMENT)

# |v| below this uses the power series of the uniform CGF pieces.  Above it the
# closed forms lose at most ~1e-12 relative to cancellation (order 3 is worst).
SERIES_CUTOFF = 0.25
_N_TERMS = 8

# coth(v) - 1/v = sum_k c_k v^(2k-1),  c_k = 4^k B_2k / (2k)!
_B = bernoulli(2 * _N_TERMS)
_C = np.array([4.0**k * _B[2 * k] / math.factorial(2 * k) for k in range(1, _N_TERMS + 1)])
_K = np.arange(1, _N_TERMS + 1, dtype=float)
# Coefficients in powers of v^2 for each derivative order.
_SERIES = (
    _C / (2 * _K),                          # L0 = sum c_k v^2k / 2k
    _C,                                     # L1 = v * sum c_k v^(2k-2)
    _C * (2 * _K - 1),                      # L2 = sum c_k (2k-1) v^(2k-2)
    _C[1:] * (2 * _K[1:] - 1) * (2 * _K[1:] - 2),  # L3 = v * sum_{k>=2} ... v^(2k-4)
)


def _horner(coefs, z):
    out = np.full_like(z, coefs[-1])
    for c in coefs[-2::-1]:
        out = out * z + c
    return out


def _uniform_series(v, order):
    z = v * v
    if order == 0:
        return z * _horner(_SERIES[0], z)
    if order == 1:
        return v * _horner(_SERIES[1], z)
    if order == 2:
        return _horner(_SERIES[2], z)
    return v * _horner(_SERIES[3], z)


def _uniform_closed_many(v, orders):
    a = np.abs(v)
    out = {}
    if 0 in orders:
        # ln(sinh v / v) without overflow for large |v|
        out[0] = a - math.log(2.0) + np.log1p(-np.exp(-2.0 * a)) - np.log(a)
    if any(p > 0 for p in orders):
        coth = 1.0 / np.tanh(v)
    if 1 in orders:
        out[1] = coth - 1.0 / v
    if 2 in orders or 3 in orders:
        csch2 = (2.0 * np.exp(-a) / -np.expm1(-2.0 * a)) ** 2
        if 2 in orders:
            out[2] = 1.0 / (v * v) - csch2
        if 3 in orders:
            out[3] = -2.0 / v**3 + 2.0 * coth * csch2
    return out


def uniform_log_mgf_parts(v, orders):
    """Derivatives of ``ln(sinh(v)/v)`` in ``v`` for each requested order.

    The removable singularity at ``v = 0`` is handled by a power series for
    ``|v| < SERIES_CUTOFF``.  Returns a dict keyed by order.
    """
    v = np.asarray(v, dtype=float)
    small = np.abs(v) < SERIES_CUTOFF
    if small.all():
        return {p: _uniform_series(v, p) for p in orders}
    if not small.any():
        return _uniform_closed_many(v, orders)
    out = {p: np.empty_like(v) for p in orders}
    vs, vb = v[small], v[~small]
    big = _uniform_closed_many(vb, orders)
    for p in orders:
        out[p][small] = _uniform_series(vs, p)
        out[p][~small] = big[p]
    return out


def uniform_log_mgf_part(v, order):
    """Order-th derivative of ``ln(sinh(v)/v)``; see :func:`uniform_log_mgf_parts`."""
    return uniform_log_mgf_parts(v, (order,))[order]


def _check_order(order):
    if order not in (0, 1, 2, 3):
        raise InvalidOrder(f"derivative order must be 0..3, got {order!r}")


@dataclass(frozen=True)
class ElementKernel:
    """CGF of a single design entry.

    Use the named constructors rather than building one directly.
    """

    variant: str
    mean: float
    half_width: float = 0.0
    rate: float = 1.0
    clipped: int = 0
    sign: int = 1
    rho: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if not np.isfinite(self.mean):
            raise ValueError("kernel mean must be finite")
        if self.variant == UNIFORM_ROUNDING and not self.half_width > 0:
            raise ValueError("rounding half-width delta must be > 0")
        if self.half_width < 0:
            raise ValueError("half-width must be >= 0")
        if self.variant == CLIPPED_EXPONENTIAL:
            if not self.rate > 0:
                raise ValueError("exponential rate must be > 0")
            if self.clipped not in (0, 1) or self.sign not in (-1, 1):
                raise ValueError("clip flag must be 0/1 and sign +/-1")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")

    @classmethod
    def uniform_rounding(cls, mean, delta):
        return cls(UNIFORM_ROUNDING, float(mean), half_width=float(delta))

    @classmethod
    def floating_point(cls, mean, half_width):
        return cls(FLOATING_POINT, float(mean), half_width=float(half_width))

    @classmethod
    def clipped_exponential(cls, mean, rate, clipped, sign, threshold=None):
        """Entry observed through ``sign(G) * min(|G|, threshold)``.

        ``threshold`` is only used to validate that clipped entries sit on it.
        """
        clipped, sign = int(clipped), int(sign)
        if threshold is not None and clipped:
            if not math.isclose(abs(mean), threshold, rel_tol=1e-12, abs_tol=0.0):
                raise ValueError("clipped entry must have |mean| equal to the threshold")
            if sign != int(np.sign(mean)):
                raise ValueError("clipped entry sign must match sign(mean)")
        return cls(CLIPPED_EXPONENTIAL, float(mean), rate=float(rate), clipped=clipped, sign=sign)

    @classmethod
    def gaussian_element(cls, mean, rho):
        return cls(GAUSSIAN_ELEMENT, float(mean), rho=float(rho))


@dataclass(frozen=True)
class AdditiveNoise:
    """Gaussian additive noise ``eta ~ N(0, sigma^2)``."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"additive noise sigma must be > 0, got {self.sigma!r}")


def additive_eval(noise, t, order):
    """Order-th derivative of the additive-noise CGF ``sigma^2 t^2 / 2``."""
    _check_order(order)
    s2 = noise.sigma**2
    t = np.asarray(t, dtype=float)
    if order == 0:
        out = 0.5 * s2 * t * t
    elif order == 1:
        out = s2 * t
    elif order == 2:
        out = np.full_like(t, s2)
    else:
        out = np.zeros_like(t)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class KernelGrid:
    """Per-entry CGF parameters for an ``m x n`` design, stored as arrays.

    Attributes
    ----------
    mean : ndarray
        Observed matrix ``H``.
    half_width : ndarray
        Uniform half-widths (``delta`` or ``D_ij``); zero disables the part.
    rate : ndarray
        Exponential rates; only read where ``clipped`` is set.
    clipped : ndarray
        0/1 clip indicators ``A``.
    sign : ndarray
        Signs ``S`` of clipped entries.
    rho : ndarray
        Gaussian standard deviations.
    variant : str
        Family label, or ``"mixed"``.
    """

    mean: np.ndarray
    half_width: np.ndarray
    rate: np.ndarray
    clipped: np.ndarray
    sign: np.ndarray
    rho: np.ndarray
    variant: str = "mixed"
    _has_uniform: bool = field(init=False, repr=False)
    _has_clip: bool = field(init=False, repr=False)
    _has_gauss: bool = field(init=False, repr=False)

    def __post_init__(self):
        shape = np.shape(self.mean)
        for name in ("mean", "half_width", "rate", "clipped", "sign", "rho"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shape)
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.isfinite(self.mean)):
            raise ValueError("observed matrix must be finite")
        if np.any(self.half_width < 0) or np.any(self.rho < 0):
            raise ValueError("half-widths and rho must be >= 0")
        if not np.all(np.isin(self.clipped, (0.0, 1.0))):
            raise ValueError("clip indicators must be 0 or 1")
        clipped = self.clipped == 1
        if np.any(self.rate[clipped] <= 0) or np.any(np.abs(self.sign[clipped]) != 1):
            raise ValueError("clipped entries need rate > 0 and sign +/-1")
        object.__setattr__(self, "_has_uniform", bool(np.any(self.half_width > 0)))
        object.__setattr__(self, "_has_clip", bool(np.any(clipped)))
        object.__setattr__(self, "_has_gauss", bool(np.any(self.rho > 0)))

    @property
    def shape(self):
        return self.mean.shape

    @classmethod
    def from_elements(cls, elements):
        """Build a grid from a nested list of :class:`ElementKernel`."""
        rows = [list(r) for r in elements]
        get = lambda a: np.array([[getattr(k, a) for k in r] for r in rows], dtype=float)
        variants = {k.variant for r in rows for k in r}
        return cls(
            mean=get("mean"),
            half_width=get("half_width"),
            rate=get("rate"),
            clipped=get("clipped"),
            sign=get("sign"),
            rho=get("rho"),
            variant=variants.pop() if len(variants) == 1 else "mixed",
        )

    def element(self, i, j):
        """Return entry ``(i, j)`` as an :class:`ElementKernel`."""
        variant = self.variant
        if variant == "mixed":
            if self.clipped[i, j] or self.rate[i, j] != 1.0:
                variant = CLIPPED_EXPONENTIAL
            elif self.rho[i, j] > 0:
                variant = GAUSSIAN_ELEMENT
            else:
                variant = FLOATING_POINT
        return ElementKernel(
            variant,
            float(self.mean[i, j]),
            half_width=float(self.half_width[i, j]),
            rate=float(self.rate[i, j]),
            clipped=int(self.clipped[i, j]),
            sign=int(self.sign[i, j]),
            rho=float(self.rho[i, j]),
        )

    def take_rows(self, rows):
        return KernelGrid(
            self.mean[rows],
            self.half_width[rows],
            self.rate[rows],
            self.clipped[rows],
            self.sign[rows],
            self.rho[rows],
            variant=self.variant,
        )

    def out_of_domain(self, u):
        """Boolean mask of entries whose argument ``u`` violates ``S*u < rate``."""
        u = np.asarray(u, dtype=float)
        if not self._has_clip:
            return np.zeros(np.broadcast_shapes(u.shape, self.shape), dtype=bool)
        return (self.clipped == 1) & ~(self.sign * u < self.rate)

    def eval(self, u, order, check=True):
        """Elementwise ``order``-th derivative of each entry's CGF at ``u``."""
        _check_order(order)
        return self.evaluate(u, (order,), check=check)[0]

    def evaluate(self, u, orders, rows=None, check=True):
        """Evaluate several derivative orders at once, sharing intermediates.

        ``rows`` optionally restricts the grid to a subset of rows, in which
        case ``u`` must have shape ``(len(rows), n)``.
        """
        for p in orders:
            _check_order(p)
        u = np.asarray(u, dtype=float)
        pick = (lambda a: a) if rows is None else (lambda a: a[rows])
        mean = pick(self.mean)
        if check and self._has_clip:
            bad = (pick(self.clipped) == 1) & ~(pick(self.sign) * u < pick(self.rate))
            if bad.any():
                idx = tuple(int(a[0]) for a in np.nonzero(bad))
                raise DomainError(f"argument outside kernel domain at entry {idx}", index=idx)
        shape = np.broadcast_shapes(u.shape, mean.shape)
        outs = {}
        for p in orders:
            if p == 0:
                outs[p] = mean * u
            elif p == 1:
                outs[p] = np.array(np.broadcast_to(mean, shape))
            else:
                outs[p] = np.zeros(shape)
        if self._has_uniform:
            d = pick(self.half_width)
            parts = uniform_log_mgf_parts(d * u, orders)
            for p in orders:
                outs[p] = outs[p] + (parts[p] if p == 0 else d**p * parts[p])
        if self._has_clip:
            a = pick(self.clipped)
            s = pick(self.sign)
            rate = pick(self.rate)
            on = a == 1
            w = np.where(on, rate - s * u, 1.0)
            for p in orders:
                if p == 0:
                    outs[p] = outs[p] - a * np.log(w / np.where(on, rate, 1.0))
                elif p == 1:
                    outs[p] = outs[p] + a * s / w
                elif p == 2:
                    outs[p] = outs[p] + a / (w * w)
                else:
                    outs[p] = outs[p] + 2.0 * a * s / w**3
        if self._has_gauss:
            r2 = pick(self.rho) ** 2
            for p in orders:
                if p == 0:
                    outs[p] = outs[p] + 0.5 * r2 * u * u
                elif p == 1:
                    outs[p] = outs[p] + r2 * u
                elif p == 2:
                    outs[p] = outs[p] + r2
        return tuple(outs[p] for p in orders)


def _as_grid(kernel):
    return KernelGrid.from_elements([[kernel]])


def kernel_eval(kernel, u, order):
    """Order-th derivative of a single entry's CGF at scalar ``u``.

    Raises
    ------
    DomainError
        If ``u`` is outside :func:`kernel_domain`.
    InvalidOrder
        If ``order`` is not in 0..3.
    """
    _check_order(order)
    lo, hi = kernel_domain(kernel)
    if not lo < u < hi:
        raise DomainError(f"u={u!r} outside kernel domain ({lo}, {hi})")
    return float(_as_grid(kernel).eval(np.array([[float(u)]]), order, check=False)[0, 0])


def kernel_domain(kernel):
    """Open interval of arguments on which the entry's CGF is finite."""
    if kernel.variant == CLIPPED_EXPONENTIAL and kernel.clipped:
        if kernel.sign > 0:
            return (-math.inf, kernel.rate)
        return (-kernel.rate, math.inf)
    return (-math.inf, math.inf)
