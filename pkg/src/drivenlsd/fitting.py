"""Least-squares contour fits, width extraction and power-law regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import tssil
from .errors import InsufficientDataError, ParameterError, WindowError

LORENTZIAN = "lorentzian7"
WEAK = "weak8"
STRONG = "strong10"
KINDS = (LORENTZIAN, WEAK, STRONG)

_PARAM_NAMES = {LORENTZIAN: ("gamma0",), WEAK: ("a1", "a2"), STRONG: ("d1", "d2")}

N_RESTARTS = 5
MAX_EVALS = 10_000
REL_TOL = 1e-8


def shape(kind: str, omega, params) -> np.ndarray:
    """Unit-amplitude contour of the given kind."""
    if kind == LORENTZIAN:
        return tssil.lorentzian(omega, params[0])
    if kind == WEAK:
        return tssil.weak_contour(omega, params[0], params[1])
    if kind == STRONG:
        return tssil.strong_contour_d(omega, params[0], params[1])
    raise ParameterError(f"unknown contour kind {kind!r}; expected one of {KINDS}")


def _canonical(kind: str, params) -> tuple[float, ...]:
    params = tuple(float(x) for x in params)
    if kind == WEAK:
        return tuple(sorted(params, reverse=True))
    return params


@dataclass
class ContourFit:
    kind: str
    params: tuple[float, ...]
    amplitude: float
    residual: float
    width: float
    converged: bool
    objective: float = math.nan
    evaluations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def named_params(self) -> dict[str, float]:
        return dict(zip(_PARAM_NAMES[self.kind], self.params))

    def __call__(self, omega) -> np.ndarray:
        return self.amplitude * shape(self.kind, omega, self.params)

    def peak_height(self) -> float:
        if self.kind == STRONG:
            w_peak = tssil.strong_peak_position(*self.params)
        else:
            w_peak = 0.0
        return float(self(w_peak))


def _golden_max(f: Callable, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def extract_width(
    contour: Callable,
    window: float | None = None,
    grid_points: int = 6001,
) -> float:
    """Twice the right-slope half-width of the positive-frequency peak.

    The peak is located on ``omega >= 0`` by a grid scan refined with a
    golden-section search; the half-maximum crossing to its right is found by
    bisection.  Without ``window`` the scan grid is logarithmic from 1e-8 to
    1e8, which makes the result independent of the contour's scale.
    """
    if window is None:
        grid = np.concatenate([[0.0], np.geomspace(1e-8, 1e8, grid_points)])
    else:
        if not window > 0:
            raise ParameterError(f"window must be > 0, got {window!r}")
        grid = np.linspace(0.0, window, grid_points)

    def f(w):
        return float(np.asarray(contour(np.asarray(w, dtype=float))))

    values = np.asarray(contour(grid), dtype=float)
    if not np.all(np.isfinite(values)) or values.max() <= 0:
        raise WindowError("contour must be finite and positive on the scan grid")
    i = int(np.argmax(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    w_peak = _golden_max(f, lo, hi, tol=1e-12 * max(hi, 1e-300))
    if f(grid[i]) >= f(w_peak):
        w_peak = float(grid[i])
    half = f(w_peak) / 2

    beyond = np.nonzero((grid > w_peak) & (values < half))[0]
    if beyond.size == 0:
        raise WindowError("no half-maximum crossing to the right of the peak within the search window")
    j = int(beyond[0])
    left = max(w_peak, grid[j - 1]) if j > 0 else w_peak
    right = grid[j]
    w_half = optimize.brentq(lambda w: f(w) - half, left, right, xtol=1e-15 * right, rtol=1e-15, maxiter=500)
    return 2.0 * (w_half - w_peak)


def _width_of(kind: str, params) -> float:
    if kind == STRONG:
        d1, d2 = params
        scale = max(abs(d1), d2)
    else:
        scale = max(params)
    return extract_width(lambda w: shape(kind, w, params), window=None) if scale > 0 else 0.0


def fit_contour(
    samples,
    kind: str,
    initial_guess,
    uniform_weights: bool = False,
    restarts: int = N_RESTARTS,
    seed: int = 0,
) -> ContourFit:
    """Weighted least-squares fit of ``amplitude * contour(omega)`` to LSD samples.

    ``samples`` is an ``(n, 3)`` array-like of ``(omega, rho, weight)``.  The
    amplitude enters linearly and is profiled out exactly; the shape
    parameters are searched in log space by Nelder-Mead, restarted from
    perturbed copies of the initial guess.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown contour kind {kind!r}; expected one of {KINDS}")
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ParameterError("samples must have shape (n, 3): omega, rho, weight")
    omega, rho, weight = data.T
    if uniform_weights:
        weight = np.where(weight > 0, 1.0, 0.0)
    keep = weight > 0
    omega, rho, weight = omega[keep], rho[keep], weight[keep]
    n_params = len(_PARAM_NAMES[kind]) + 1
    if omega.size < max(8, n_params + 1):
        raise InsufficientDataError(f"need at least {max(8, n_params + 1)} weighted samples, got {omega.size}")
    guess = np.asarray(initial_guess, dtype=float)
    if guess.shape != (n_params - 1,) or np.any(guess <= 0):
        raise ParameterError(f"initial guess for {kind} must be {n_params - 1} positive numbers, got {initial_guess!r}")

    norm = float(np.sum(weight * rho**2)) or 1.0

    def profile(log_params):
        params = np.exp(log_params)
        f = shape(kind, omega, params)
        denom = float(np.sum(weight * f * f))
        if not np.isfinite(denom) or denom <= 0:
            return math.inf, 0.0
        amp = max(float(np.sum(weight * rho * f)) / denom, 0.0)
        obj = float(np.sum(weight * (rho - amp * f) ** 2)) / norm
        return obj, amp

    def objective(log_params):
        return profile(log_params)[0]

    rng = np.random.default_rng(seed)
    starts = [np.log(guess)] + [np.log(guess) + rng.normal(0.0, 0.5, guess.size) for _ in range(restarts - 1)]
    best = None
    total_evals = 0
    any_converged = False
    for x0 in starts:
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-11, "fatol": REL_TOL * 1e-8, "maxfev": MAX_EVALS, "adaptive": guess.size > 1},
        )
        # polish from the best vertex; Nelder-Mead can stall on flat valleys
        res2 = optimize.minimize(
            objective,
            res.x,
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-20, "maxfev": MAX_EVALS},
        )
        total_evals += res.nfev + res2.nfev
        any_converged |= bool(res.success or res2.success)
        cand = res2 if res2.fun <= res.fun else res
        if best is None or cand.fun < best.fun:
            best = cand

    obj, amp = profile(best.x)
    params = _canonical(kind, np.exp(best.x))
    fitted = amp * shape(kind, omega, params)
    fit = ContourFit(
        kind=kind,
        params=params,
        amplitude=amp,
        residual=math.nan,
        width=math.nan,
        converged=any_converged and np.isfinite(obj) and amp > 0,
        objective=obj,
        evaluations=total_evals,
    )
    peak = fit.peak_height()
    rms = math.sqrt(float(np.sum(weight * (rho - fitted) ** 2)) / float(np.sum(weight)))
    fit.residual = rms / peak if peak > 0 else math.inf
    if fit.converged:
        try:
            fit.width = _width_of(kind, params)
        except WindowError:
            fit.converged = False
    return fit


@dataclass(frozen=True)
class PowerLawFit:
    coefficient: float
    exponent: float
    r_squared: float
    n_points: int

    def __iter__(self):
        return iter((self.coefficient, self.exponent, self.r_squared))

    def __call__(self, x):
        return self.coefficient * np.asarray(x, dtype=float) ** self.exponent


def fit_power_law(points) -> PowerLawFit:
    """OLS of ``log y`` on ``log x``; returns ``y ~ coefficient * x**exponent``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ParameterError("points must have shape (n, 2)")
    if pts.shape[0] < 3:
        raise InsufficientDataError(f"power-law fit needs >= 3 points, got {pts.shape[0]}")
    x, y = pts.T
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise ParameterError("power-law fit requires strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = intercept + slope * lx
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(math.exp(intercept)), float(slope), r2, int(x.size))


def fit_proportional(x, y) -> float:
    """Least-squares slope of ``y = c * x`` through the origin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise InsufficientDataError("no points to fit")
    return float(np.dot(x, y) / np.dot(x, x))
