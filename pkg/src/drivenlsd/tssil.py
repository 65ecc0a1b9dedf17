"""Driven two-state system whose upper level decays with width ``gamma0``.

Closed-form spectral contours of the probe state: the field-free Lorentzian,
the overdamped (weak-field) contour with coefficients ``a1, a2`` and the
underdamped (strong-field) contour with ``d1, d2``.  The strong-field contour
is kept with its printed normalization (total weight 1/4); pass
``normalized=True`` for the unit-weight version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import ParameterError, RegimeError

WEAK = "weak"
STRONG = "strong"


@dataclass(frozen=True)
class TssilParams:
    gamma0: float
    rabi: float

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ParameterError(f"gamma0 must be > 0, got {self.gamma0!r}")
        if not self.rabi >= 0:
            raise ParameterError(f"rabi must be >= 0, got {self.rabi!r}")

    @property
    def drive_ratio(self) -> float:
        """``2 rabi / gamma0``; the regime boundary sits at 1."""
        return 2 * self.rabi / self.gamma0

    @property
    def regime(self) -> str:
        return WEAK if self.drive_ratio < 1 else STRONG


def lorentzian(omega, gamma0: float):
    if not gamma0 > 0:
        raise ParameterError(f"gamma0 must be > 0, got {gamma0!r}")
    omega = np.asarray(omega, dtype=float)
    return gamma0 / (2 * np.pi) / (omega**2 + gamma0**2 / 4)


def weak_coefficients(p: TssilParams) -> tuple[float, float]:
    """Roots ``a1 >= a2 >= 0`` with ``a1 + a2 = gamma0`` and ``a1 a2 = rabi**2``."""
    if p.regime != WEAK:
        raise RegimeError(f"weak-field coefficients need 2*rabi/gamma0 < 1, got {p.drive_ratio:g}")
    root = math.sqrt((p.gamma0 / 2 - p.rabi) * (p.gamma0 / 2 + p.rabi))
    a1 = p.gamma0 / 2 + root
    # a1 * a2 = rabi**2 avoids cancellation for weak drive
    a2 = p.rabi**2 / a1
    return a1, a2


def weak_contour(omega, a1: float, a2: float):
    omega = np.asarray(omega, dtype=float)
    pref = a1 * a2 * (a1 + a2) / (8 * np.pi)
    return pref / ((omega**2 + a1**2 / 4) * (omega**2 + a2**2 / 4))


def strong_coefficients(p: TssilParams) -> tuple[float, float]:
    if p.regime != STRONG:
        raise RegimeError(f"strong-field coefficients need 2*rabi/gamma0 >= 1, got {p.drive_ratio:g}")
    d1 = math.sqrt(max((p.rabi - p.gamma0 / 2) * (p.rabi + p.gamma0 / 2), 0.0))
    return d1, p.gamma0 / 2


def strong_contour_d(omega, d1: float, d2: float, normalized: bool = False):
    omega = np.asarray(omega, dtype=float)
    val = d2 * (d2**2 + d1**2) / np.pi / ((4 * omega**2 + d2**2 - d1**2) ** 2 + 4 * d2**2 * d1**2)
    return 4 * val if normalized else val


def strong_contour(omega, p: TssilParams, normalized: bool = False):
    d1, d2 = strong_coefficients(p)
    return strong_contour_d(omega, d1, d2, normalized=normalized)


def strong_peak_position(d1: float, d2: float) -> float:
    """Positive-side maximum of the strong-field contour (0 when single-peaked)."""
    return math.sqrt(d1**2 - d2**2) / 2 if d1 > d2 else 0.0


def contour(p: TssilParams, normalized: bool = True):
    """Regime-appropriate contour as a callable of omega.

    Raises at ``rabi == 0``, where the weak contour collapses to a delta function.
    """
    if p.regime == WEAK:
        a1, a2 = weak_coefficients(p)
        if a2 == 0:
            raise RegimeError("rabi = 0: the probe-state contour is a delta function")
        return lambda w: weak_contour(w, a1, a2)
    d1, d2 = strong_coefficients(p)
    return lambda w: strong_contour_d(w, d1, d2, normalized=normalized)


def predicted_width(p: TssilParams) -> float:
    """Width read off the model contour with the right-slope half-width rule."""
    from .fitting import extract_width

    if p.rabi == 0:
        return 0.0
    return extract_width(contour(p), window=10 * (p.gamma0 + p.rabi), grid_points=10_000)


def tail_halfwidth(p: TssilParams, fraction: float = 1e-3) -> float:
    """Smallest ``X`` with at most ``fraction`` of the unit-normalized weight outside ``[-X, X]``."""
    if p.rabi == 0:
        raise RegimeError("rabi = 0: the probe-state contour is a delta function")
    f = contour(p, normalized=True)
    if p.regime == WEAK:
        a1, a2 = weak_coefficients(p)

        def outside(x):
            def tail(a):
                return 1 - 2 / np.pi * math.atan(2 * x / a)

            if math.isclose(a1, a2, rel_tol=1e-9):
                return 2 * integrate.quad(f, x, np.inf, limit=200)[0]
            return (a1 * tail(a2) - a2 * tail(a1)) / (a1 - a2)

    else:

        def outside(x):
            return 2 * integrate.quad(f, x, np.inf, limit=200)[0]

    hi = p.gamma0 + p.rabi
    while outside(hi) > fraction:
        hi *= 2
    lo = 0.0
    return optimize.brentq(lambda x: outside(x) - fraction, lo, hi, xtol=1e-12 * hi)


def tabulate(omega, p: TssilParams) -> dict[str, np.ndarray]:
    """Field-free Lorentzian plus the regime contour (printed and unit normalization) on ``omega``."""
    omega = np.asarray(omega, dtype=float)
    out = {"omega": omega, "lorentzian": lorentzian(omega, p.gamma0)}
    if p.regime == WEAK:
        a1, a2 = weak_coefficients(p)
        out["weak"] = weak_contour(omega, a1, a2) if a2 > 0 else np.zeros_like(omega)
    else:
        out["strong"] = strong_contour(omega, p)
        out["strong_normalized"] = strong_contour(omega, p, normalized=True)
    return out
