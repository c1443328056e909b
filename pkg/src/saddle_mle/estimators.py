"""OLS and TLS baselines and the approximate-ML fitting driver."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import LineSearchFailure, RankDeficient, SaddleMLEError, TlsDegenerate
from .likelihood import evaluate

OLS, TLS, AML = "OLS", "TLS", "AML"


@dataclass
class Estimate:
    """Fitted parameter vector plus solver diagnostics.

    ``objective`` is the final log-likelihood for AML and the residual norm
    ``|A x - y|`` for the baselines.
    """

    x_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    method: str
    grad_norm: float = float("nan")
    message: str = ""
    n_evals: int = 0
    history: list = field(default_factory=list, repr=False)


def ols(A, y):
    """Least-squares solution through a thin QR factorisation."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = A.shape
    if m < n:
        raise RankDeficient(f"need m >= n, got {m}x{n}")
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    if d.min() <= np.finfo(float).eps * max(m, n) * max(d.max(), 1e-300):
        raise RankDeficient("design matrix is rank deficient")
    x = solve_triangular(R, Q.T @ y)
    return Estimate(x, float(np.linalg.norm(A @ x - y)), 0, True, OLS)


def tls(A, y, max_cond=1e12):
    """Total least squares via ``(A^T A - s^2 I)^-1 A^T y``.

    ``s`` is the smallest singular value of ``[A, y]``.

    Raises
    ------
    TlsDegenerate
        When ``s`` is not strictly below the smallest singular value of ``A``
        or the shifted normal matrix has condition number above ``max_cond``.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = A.shape
    if m < n + 1:
        raise RankDeficient(f"need m > n, got {m}x{n}")
    s_aug = np.linalg.svd(np.column_stack([A, y]), compute_uv=False)[-1]
    s_a = np.linalg.svd(A, compute_uv=False)[-1]
    if not s_aug < s_a * (1 - 1e-12):
        raise TlsDegenerate("smallest singular value of [A, y] is not below that of A")
    M = A.T @ A - s_aug**2 * np.eye(n)
    if not np.linalg.cond(M) < max_cond:
        raise TlsDegenerate("shifted normal matrix is numerically singular")
    x = np.linalg.solve(M, A.T @ y)
    return Estimate(x, float(np.linalg.norm(A @ x - y)), 0, True, TLS)


@dataclass(frozen=True)
class FitOptions:
    """Settings for :func:`aml_fit`.

    ``init`` is ``"ols"``, ``"tls"``, ``"zero"`` or an explicit start vector.
    ``ftol`` stops the run (unconverged) once the objective stalls.
    """

    gtol: float = 1e-6
    max_iters: int = 500
    memory: int = 10
    init: object = "ols"
    ftol: float = 0.0
    c1: float = 1e-4
    c2: float = 0.9
    max_linesearch: int = 40

    def __post_init__(self):
        if not (self.gtol > 0 and self.max_iters > 0 and self.memory > 0):
            raise ValueError("gtol, max_iters and memory must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if isinstance(self.init, str) and self.init.lower() not in ("ols", "tls", "zero"):
            raise ValueError(f"unknown init {self.init!r}")


def initial_point(design, y, init):
    if not isinstance(init, str):
        x0 = np.asarray(init, dtype=float)
        if x0.shape != (design.n,):
            raise ValueError("custom init has the wrong length")
        return x0.copy()
    init = init.lower()
    if init == "zero":
        return np.zeros(design.n)
    if init == "tls":
        try:
            return tls(design.H, y).x_hat
        except TlsDegenerate:
            pass
    return ols(design.H, y).x_hat


class _Objective:
    """Negative log-likelihood with warm-started saddle solves.

    Evaluation failures (saddle errors, non-finite values) map to ``+inf``.
    """

    def __init__(self, design, y, on_evaluate=None):
        self.design = design
        self.y = np.asarray(y, dtype=float)
        self.warm = None
        self.n_evals = 0
        self.on_evaluate = on_evaluate

    def __call__(self, x):
        self.n_evals += 1
        try:
            ev = evaluate(self.design, self.y, x, warm=self.warm)
        except SaddleMLEError:
            value, grad = np.inf, None
        else:
            value, grad = -ev.value, -ev.gradient
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                value, grad = np.inf, None
            else:
                self.warm = ev.saddle
        if self.on_evaluate is not None:
            self.on_evaluate(np.array(x, copy=True), value)
        return value, grad


def _interpolate(a_lo, f_lo, d_lo, a_hi, f_hi):
    # Minimiser of the quadratic through (a_lo, f_lo, d_lo) and (a_hi, f_hi),
    # kept away from the interval ends; bisection when undefined.
    width = a_hi - a_lo
    if np.isfinite(f_hi):
        denom = 2.0 * (f_hi - f_lo - d_lo * width)
        if denom > 0:
            a = a_lo - d_lo * width * width / denom
            lo, hi = sorted((a_lo + 0.1 * width, a_hi - 0.1 * width))
            return min(max(a, lo), hi)
    return a_lo + 0.5 * width


def _wolfe_search(fun, x, f0, g0, p, alpha0, opts):
    """Strong-Wolfe line search; returns ``(alpha, f, g)`` or raises."""
    d0 = float(g0 @ p)

    def phi(a):
        f, g = fun(x + a * p)
        return f, g, (float(g @ p) if g is not None else np.nan)

    def zoom(a_lo, f_lo, d_lo, g_lo, a_hi, f_hi, budget):
        for _ in range(budget):
            a = _interpolate(a_lo, f_lo, d_lo, a_hi, f_hi)
            f, g, d = phi(a)
            if not np.isfinite(f) or f > f0 + opts.c1 * a * d0 or f >= f_lo:
                a_hi, f_hi = a, f
            else:
                if abs(d) <= -opts.c2 * d0:
                    return a, f, g
                if d * (a_hi - a_lo) >= 0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, d_lo, g_lo = a, f, d, g
        if a_lo > 0 and f_lo < f0:
            return a_lo, f_lo, g_lo
        raise LineSearchFailure("zoom phase exhausted without sufficient decrease")

    a_prev, f_prev, d_prev, g_prev = 0.0, f0, d0, g0
    a = alpha0
    for i in range(opts.max_linesearch):
        f, g, d = phi(a)
        if not np.isfinite(f):
            # infeasible or failed evaluation: backtrack
            return zoom(a_prev, f_prev, d_prev, g_prev, a, np.inf, opts.max_linesearch - i - 1)
        if f > f0 + opts.c1 * a * d0 or (i > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, g_prev, a, f, opts.max_linesearch - i - 1)
        if abs(d) <= -opts.c2 * d0:
            return a, f, g
        if d >= 0:
            return zoom(a, f, d, g, a_prev, f_prev, opts.max_linesearch - i - 1)
        a_prev, f_prev, d_prev, g_prev = a, f, d, g
        a *= 2.0
    raise LineSearchFailure("line search did not terminate")


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, yv, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * yv
    if pairs:
        s, yv, _ = pairs[-1]
        q *= (s @ yv) / (yv @ yv)
    for (s, yv, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (yv @ q)
        q += (a - b) * s
    return q


def minimize_lbfgs(fun, x0, opts=FitOptions()):
    """Minimise ``fun(x) -> (f, g)`` with L-BFGS and a strong-Wolfe line search.

    Returns ``(x, f, g, iterations, converged, message, history)`` where
    ``history`` lists the objective at every accepted iterate.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    if not np.isfinite(f):
        raise SaddleMLEError("objective is not finite at the initial point")
    pairs = deque(maxlen=opts.memory)
    history = [f]
    message = "iteration limit reached"
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        if np.max(np.abs(g)) <= opts.gtol:
            converged, message, it = True, "gradient tolerance reached", it - 1
            break
        p = -_two_loop(g, list(pairs))
        if not g @ p < 0:
            pairs.clear()
            p = -g
        alpha0 = 1.0 if pairs else min(1.0, 1.0 / np.linalg.norm(g))
        try:
            alpha, f_new, g_new = _wolfe_search(fun, x, f, g, p, alpha0, opts)
        except LineSearchFailure as exc:
            if pairs:
                # retry once along steepest descent with a fresh memory
                pairs.clear()
                continue
            message = f"line search failure: {exc}"
            break
        s = alpha * p
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            pairs.append((s, yv, 1.0 / sy))
        x = x + s
        f_old, f, g = f, f_new, g_new
        history.append(f)
        if abs(f_old - f) <= opts.ftol * max(1.0, abs(f)):
            converged = bool(np.max(np.abs(g)) <= opts.gtol)
            message = "gradient tolerance reached" if converged else "objective stalled"
            break
    else:
        converged = bool(np.max(np.abs(g)) <= opts.gtol)
        if converged:
            message = "gradient tolerance reached"
    return x, f, g, it, converged, message, history


def aml_fit(design, y, opts=FitOptions(), on_evaluate=None):
    """Maximise the approximate log-likelihood with L-BFGS.

    The objective handed to the optimiser is ``-l(x)``.  ``on_evaluate``, if
    given, is called as ``on_evaluate(x, -l(x))`` for every trial point.
    """
    y = np.asarray(y, dtype=float)
    x0 = initial_point(design, y, opts.init)
    objective = _Objective(design, y, on_evaluate)
    x, f, g, it, converged, message, history = minimize_lbfgs(objective, x0, opts)
    return Estimate(
        x_hat=x,
        objective=-f,
        iterations=it,
        converged=converged,
        method=AML,
        grad_norm=float(np.max(np.abs(g))),
        message=message,
        n_evals=objective.n_evals,
        history=[-h for h in history],
    )
