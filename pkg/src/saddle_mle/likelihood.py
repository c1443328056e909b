"""Approximate log-likelihood and its gradient by implicit differentiation.

With ``t_i`` solving ``K_i'(t_i) = y_i`` the log-likelihood (constant
``-(m/2) ln 2 pi`` dropped) is

    l(x) = sum_i [K_i(t_i) - 0.5 ln K_i''(t_i) - t_i y_i].

Treating ``t`` as an independent variable constrained by
``q(x, t) = K'(t) - y = 0`` gives

    grad l = dl/dx - (dl/dt) (dq/dt)^-1 (dq/dx),

where ``dq/dt = diag(K'')`` so the inverse is elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .composite_saddle import DEFAULT_TOL, SaddleSolution, row_terms, solve_saddle_all
from .errors import DegenerateVariance


@dataclass(frozen=True, eq=False)
class LogLikelihoodEval:
    value: float
    gradient: np.ndarray | None
    saddle: SaddleSolution
    x: np.ndarray


def evaluate(design, y, x, gradient=True, tol=DEFAULT_TOL, warm=None):
    """Value and (optionally) gradient of the approximate log-likelihood."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sol = solve_saddle_all(design, x, y, tol=tol, warm=warm)
    t = sol.t
    dx_orders = (0, 1, 2) if gradient else ()
    K, dK = row_terms(design, x, t, (0, 1, 2, 3), dx_orders, check=False)
    k2 = K[2]
    value = float(np.sum(K[0] - 0.5 * np.log(k2) - t * y))
    grad = None
    if gradient:
        dl_dx = np.sum(dK[0] - 0.5 * dK[2] / k2[:, None], axis=0)
        # full form; the K' - y part vanishes only at an exact saddle
        dl_dt = K[1] - 0.5 * K[3] / k2 - y
        grad = dl_dx - (dl_dt / k2) @ dK[1]
    return LogLikelihoodEval(value=value, gradient=grad, saddle=sol, x=x)


def log_likelihood(design, y, x, tol=DEFAULT_TOL, warm=None):
    """Approximate log-likelihood at ``x`` (gradient left as ``None``)."""
    return evaluate(design, y, x, gradient=False, tol=tol, warm=warm)


def log_likelihood_gradient(design, y, x, tol=DEFAULT_TOL, warm=None):
    """Gradient of the approximate log-likelihood at ``x``."""
    return evaluate(design, y, x, gradient=True, tol=tol, warm=warm).gradient


def _total_variance(sigma, rho, x):
    v = sigma**2 + rho**2 * float(np.dot(x, x))
    if not v > 0:
        raise DegenerateVariance("sigma^2 + rho^2 |x|^2 is zero")
    return v


def gaussian_log_likelihood(H, y, sigma, rho, x):
    """Exact Gaussian-design log-likelihood, constants dropped."""
    H, y, x = (np.asarray(a, dtype=float) for a in (H, y, x))
    v = _total_variance(sigma, rho, x)
    r = y - H @ x
    return -0.5 * (float(r @ r) / v + y.shape[0] * np.log(v))


def gaussian_gradient(H, y, sigma, rho, x):
    """Gradient of :func:`gaussian_log_likelihood`."""
    H, y, x = (np.asarray(a, dtype=float) for a in (H, y, x))
    v = _total_variance(sigma, rho, x)
    r = H @ x - y
    return (rho**2 * (float(r @ r) / v - y.shape[0]) * x - H.T @ r) / v
