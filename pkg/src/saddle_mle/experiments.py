"""Problem generators and Monte Carlo comparison of AML, OLS and TLS."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .composite_saddle import UncertainDesign
from .errors import EmptyGroup, SaddleMLEError, TlsDegenerate, ZeroTruth
from .estimators import FitOptions, aml_fit, ols, tls

ROUNDING = "Rounding"
FLOATING_POINT = "FloatingPoint"
EXP_CLIPPING = "ExpClipping"
GAUSSIAN_DESIGN = "GaussianDesign"
MODELS = (ROUNDING, FLOATING_POINT, EXP_CLIPPING, GAUSSIAN_DESIGN)

TRIAL_HEADER = (
    "model", "m", "n", "trial", "seed", "err_ols", "err_tls", "err_aml",
    "tls_degenerate", "aml_converged", "t_ols", "t_tls", "t_aml",
)


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one simulated problem family.

    Defaults: uniform(0, 10) entries rounded to
    integers; normal times ``10**k`` with ``k`` in 0..3 kept to two significant
    digits; Laplace(rate 2) entries clipped at 2; ``N(0, 100)`` means with
    ``rho^2 = 4``; additive noise ``sigma = 0.1``.
    """

    model: str
    m: int
    n: int
    sigma: float = 0.1
    seed: int = 0
    # Rounding
    low: float = 0.0
    high: float = 10.0
    delta: float = 0.5
    # FloatingPoint
    digits: int = 2
    max_exponent: int = 3
    # ExpClipping
    rate: float = 2.0
    threshold: float = 2.0
    # GaussianDesign
    mean_variance: float = 100.0
    rho: float = 2.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if not (isinstance(self.m, (int, np.integer)) and isinstance(self.n, (int, np.integer))):
            raise ValueError("m and n must be integers")
        if not self.m > self.n >= 1:
            raise ValueError(f"need m > n >= 1, got m={self.m}, n={self.n}")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not (self.high > self.low and self.delta > 0):
            raise ValueError("rounding needs high > low and delta > 0")
        if not (self.digits >= 1 and self.max_exponent >= 0):
            raise ValueError("floating point needs digits >= 1 and max_exponent >= 0")
        if not (self.rate > 0 and self.threshold > 0):
            raise ValueError("clipping needs rate > 0 and threshold > 0")
        if not (self.mean_variance > 0 and self.rho >= 0):
            raise ValueError("gaussian design needs mean_variance > 0 and rho >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class Problem:
    design: UncertainDesign
    y: np.ndarray
    x_tru: np.ndarray
    g_true: np.ndarray
    noise: np.ndarray

    def __iter__(self):
        return iter((self.design, self.y, self.x_tru, self.g_true))


def _streams(seed):
    # Independent named streams for the design, the truth and the additive noise.
    children = np.random.SeedSequence(int(seed)).spawn(3)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def round_significant(g, digits):
    """Round to ``digits`` significant figures, ties away from zero.

    Returns ``(H, D)`` where ``D`` is half a unit in the last kept digit of ``H``.
    """
    g = np.asarray(g, dtype=float)
    a = np.abs(g)
    with np.errstate(divide="ignore"):
        e = np.floor(np.log10(np.where(a > 0, a, 1.0)))
    scale = 10.0 ** (e - digits + 1)
    q = np.floor(a / scale + 0.5)
    # a/scale can land just under a power of ten after floating-point division
    bump = q >= 10.0**digits
    e = np.where(bump, e + 1, e)
    scale = 10.0 ** (e - digits + 1)
    q = np.where(bump, np.floor(a / scale + 0.5), q)
    H = np.sign(g) * q * scale
    D = np.where(a > 0, 0.5 * scale, 0.0)
    return H, D


def clip_observation(g, threshold):
    """``sign(g) * min(|g|, threshold)`` with clip flags and signs."""
    g = np.asarray(g, dtype=float)
    clipped = np.abs(g) >= threshold
    H = np.where(clipped, np.sign(g) * threshold, g)
    return H, clipped


def generate_problem(spec):
    """Draw ``(design, y, x_tru, g_true)`` for one trial; also carries the noise draw."""
    rg_design, rg_truth, rg_noise = _streams(spec.seed)
    m, n = spec.m, spec.n
    if spec.model == ROUNDING:
        g = rg_design.uniform(spec.low, spec.high, size=(m, n))
        H = np.floor(g / (2 * spec.delta) + 0.5) * (2 * spec.delta)
        design = UncertainDesign.rounding(H, spec.delta, spec.sigma)
    elif spec.model == FLOATING_POINT:
        k = rg_design.integers(0, spec.max_exponent + 1, size=(m, n))
        g = rg_design.standard_normal((m, n)) * 10.0**k
        H, D = round_significant(g, spec.digits)
        design = UncertainDesign.floating_point(H, D, spec.sigma)
    elif spec.model == EXP_CLIPPING:
        g = rg_design.laplace(0.0, 1.0 / spec.rate, size=(m, n))
        H, clipped = clip_observation(g, spec.threshold)
        design = UncertainDesign.clipping(H, spec.rate, spec.threshold, spec.sigma, clipped=clipped)
    else:
        H = rg_design.normal(0.0, math.sqrt(spec.mean_variance), size=(m, n))
        g = H + spec.rho * rg_design.standard_normal((m, n))
        design = UncertainDesign.gaussian(H, spec.rho, spec.sigma)
    x_tru = rg_truth.standard_cauchy(n)
    noise = spec.sigma * rg_noise.standard_normal(m)
    y = g @ x_tru + noise
    return Problem(design, y, x_tru, g, noise)


def relative_error(x_est, x_tru):
    """``|x_est - x_tru| / |x_tru|`` in the Euclidean norm."""
    x_tru = np.asarray(x_tru, dtype=float)
    den = np.linalg.norm(x_tru)
    if den == 0:
        raise ZeroTruth("reference vector is zero")
    return float(np.linalg.norm(np.asarray(x_est, dtype=float) - x_tru) / den)


@dataclass
class TrialRecord:
    model: str
    m: int
    n: int
    trial: int
    seed: int
    err_ols: float
    err_tls: float
    err_aml: float
    tls_degenerate: bool
    aml_converged: bool
    t_ols: float
    t_tls: float
    t_aml: float
    input_digests: tuple = field(default=(), repr=False, compare=False)


def _digest(H, y):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(H).tobytes())
    h.update(np.ascontiguousarray(y).tobytes())
    return h.hexdigest()


def trial_seed(seed, value, trial):
    """64-bit per-trial seed from ``(seed, grid value, trial index)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(value), int(trial)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(spec, trial=0, fit_options=FitOptions()):
    """Fit OLS, TLS and AML on one generated problem."""
    problem = generate_problem(spec)
    design, y, x_tru = problem.design, problem.y, problem.x_tru
    H = design.H
    digests = []

    t = time.perf_counter()
    digests.append(_digest(H, y))
    x_ols = ols(H, y).x_hat
    t_ols = time.perf_counter() - t

    t = time.perf_counter()
    digests.append(_digest(H, y))
    try:
        x_tls = tls(H, y).x_hat
        degenerate = False
    except TlsDegenerate:
        x_tls, degenerate = x_ols, True
    t_tls = time.perf_counter() - t

    t = time.perf_counter()
    digests.append(_digest(design.H, y))
    try:
        est = aml_fit(design, y, fit_options)
        x_aml, converged = est.x_hat, est.converged
    except SaddleMLEError:
        x_aml, converged = x_ols, False
    t_aml = time.perf_counter() - t

    return TrialRecord(
        model=spec.model,
        m=spec.m,
        n=spec.n,
        trial=int(trial),
        seed=int(spec.seed),
        err_ols=relative_error(x_ols, x_tru),
        err_tls=relative_error(x_tls, x_tru),
        err_aml=relative_error(x_aml, x_tru),
        tls_degenerate=degenerate,
        aml_converged=bool(converged),
        t_ols=t_ols,
        t_tls=t_tls,
        t_aml=t_aml,
        input_digests=tuple(digests),
    )


def _run_jobs(jobs, fit_options, workers):
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_trial, spec, k, fit_options) for spec, k in jobs]
            records = [f.result() for f in futures]
    else:
        records = [run_trial(spec, k, fit_options) for spec, k in jobs]
    records.sort(key=lambda r: (r.m, r.n, r.trial))
    return records


def run_sweep(base, sweep, values, trials, seed, fit_options=FitOptions(), workers=1):
    """Repeat trials over a grid of row counts (``"rows"``) or column counts (``"cols"``)."""
    if sweep not in ("rows", "cols"):
        raise ValueError("sweep must be 'rows' or 'cols'")
    jobs = []
    for v in values:
        shape = {"m": int(v)} if sweep == "rows" else {"n": int(v)}
        point = replace(base, **shape)
        for k in range(int(trials)):
            jobs.append((replace(point, seed=trial_seed(seed, v, k)), k))
    return _run_jobs(jobs, fit_options, workers)


def run_square_study(spec, trials, seed=None, fit_options=FitOptions(), workers=1):
    """Many trials at a single ``(m, n)``, by default 55 x 50."""
    seed = spec.seed if seed is None else seed
    jobs = [(replace(spec, seed=trial_seed(seed, spec.m, k)), k) for k in range(int(trials))]
    return _run_jobs(jobs, fit_options, workers)


def _quartiles(a):
    q1, q2, q3 = np.percentile(a, [25, 50, 75])
    return float(q1), float(q2), float(q3)


SUMMARY_HEADER = (
    "model", "m", "n", "trials",
    "median_ols", "median_tls", "median_aml",
    "q1_ols", "q3_ols", "q1_tls", "q3_tls", "q1_aml", "q3_aml",
    "median_ratio_aml_ols", "median_ratio_aml_tls",
    "tls_degenerate", "aml_unconverged",
)


def summarize(records):
    """Per-grid-point medians, quartiles and median AML error ratios.

    Returns a list of dicts keyed by :data:`SUMMARY_HEADER`, one per
    ``(model, m, n)`` group.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.model, r.m, r.n), []).append(r)
    if not groups:
        raise EmptyGroup("no records to summarise")
    rows = []
    for (model, m, n), recs in sorted(groups.items()):
        errs = {k: np.array([getattr(r, f"err_{k}") for r in recs]) for k in ("ols", "tls", "aml")}
        with np.errstate(divide="ignore", invalid="ignore"):
            r_ols = errs["aml"] / errs["ols"]
            r_tls = errs["aml"] / errs["tls"]
        row = {"model": model, "m": m, "n": n, "trials": len(recs)}
        for k in ("ols", "tls", "aml"):
            q1, q2, q3 = _quartiles(errs[k])
            row[f"median_{k}"], row[f"q1_{k}"], row[f"q3_{k}"] = q2, q1, q3
        row["median_ratio_aml_ols"] = float(np.median(r_ols))
        row["median_ratio_aml_tls"] = float(np.median(r_tls))
        row["tls_degenerate"] = sum(r.tls_degenerate for r in recs)
        row["aml_unconverged"] = sum(not r.aml_converged for r in recs)
        rows.append({k: row[k] for k in SUMMARY_HEADER})
    return rows


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trials_csv(records, timings=True):
    """Trial records as CSV text.  Without ``timings`` the time columns are blank."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_HEADER)
    for r in records:
        d = asdict(r)
        if not timings:
            d.update(t_ols="", t_tls="", t_aml="")
        w.writerow([_fmt(d[k]) if d[k] != "" else "" for k in TRIAL_HEADER])
    return buf.getvalue()


def summary_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in SUMMARY_HEADER])
    return buf.getvalue()
