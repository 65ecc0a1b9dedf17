"""Fast oracle and invariant checks runnable without the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import integrate

from . import tssil
from .ensemble import ModelParams, sample_realization
from .floquet import diagonalize, floquet_operator, stroboscopic_correlation, unitarity_defect
from .spectral import LsdAccumulator, ipr


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _unitarity() -> tuple[bool, str]:
    p = ModelParams(n_states=201, v_rms=1.0, rabi=5.0)
    worst = max(unitarity_defect(floquet_operator(sample_realization(p, i), p)) for i in range(3))
    return worst < 1e-9, f"max |U^H U - I| = {worst:.2e}"


def _completeness() -> tuple[bool, str]:
    p = ModelParams(n_states=101, v_rms=1.0, rabi=3.0)
    worst = 0.0
    for i in range(3):
        r = sample_realization(p, i)
        spec = diagonalize(floquet_operator(r, p), r, p.t_period)
        worst = max(worst, abs(spec.weights_g.sum() - 1), abs(spec.weights_k0.sum() - 1))
    return worst < 1e-10, f"max |sum W - 1| = {worst:.2e}"


def _correlation() -> tuple[bool, str]:
    p = ModelParams(n_states=51, v_rms=1.0, rabi=2.0)
    r = sample_realization(p, 0)
    u = floquet_operator(r, p)
    spec = diagonalize(u, r, p.t_period)
    psi = np.zeros(p.dim, dtype=complex)
    psi[r.g_index] = 1
    worst = 0.0
    for n in range(1, 65):
        psi = u @ psi
        worst = max(worst, abs(stroboscopic_correlation(spec, n) - psi[r.g_index]))
    return worst < 1e-10, f"max |C(nT) - <g|U^n|g>| = {worst:.2e} for n <= 64"


def _small_oracle() -> tuple[bool, str]:
    p = ModelParams(n_states=3, v_rms=1.0, rabi=1.5, pieces=4, band=2, seed=1)
    r = sample_realization(p, 0)
    tau = p.t_period / p.pieces
    ref = np.eye(r.dim, dtype=complex)
    for m in range(1, p.pieces + 1):
        h = r.h0.copy()
        amp = p.rabi * math.sin(2 * math.pi * m / p.pieces)
        h[0, r.k0_index] += amp
        h[r.k0_index, 0] += amp
        ref = scipy.linalg.expm(-1j * h * tau) @ ref
    err = float(np.max(np.abs(floquet_operator(r, p) - ref)))
    return err < 1e-8, f"N=3, M=4 max elementwise deviation = {err:.2e}"


def _tssil_algebra() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        g = 10 ** rng.uniform(-2, 2)
        w = rng.uniform(0, 0.499) * g
        a1, a2 = tssil.weak_coefficients(tssil.TssilParams(g, w))
        worst = max(worst, abs((a1 + a2) / g - 1), abs(a1 * a2 / w**2 - 1) if w > 0 else 0.0)
    return worst < 1e-12, f"max relative identity error = {worst:.2e}"


def _tssil_norms() -> tuple[bool, str]:
    a1, a2 = tssil.weak_coefficients(tssil.TssilParams(2.0, 0.5))
    weak = sum(integrate.quad(lambda x: tssil.weak_contour(x, a1, a2), lo, hi, limit=400)[0]
               for lo, hi in ((-np.inf, 0), (0, np.inf)))
    p = tssil.TssilParams(2.0, 4.0)
    strong = sum(integrate.quad(lambda x: tssil.strong_contour(x, p), lo, hi, limit=400)[0]
                 for lo, hi in ((-np.inf, 0), (0, np.inf)))
    ok = abs(weak - 1) < 1e-6 and abs(strong - 0.25) < 1e-6
    return ok, f"integral weak = {weak:.9f}, strong = {strong:.9f}"


def _field_off() -> tuple[bool, str]:
    p = ModelParams(n_states=41, v_rms=1.0, rabi=0.0, realizations=8)
    acc = LsdAccumulator.empty(5.0, 201)
    for i in range(p.realizations):
        r = sample_realization(p, i)
        spec = diagonalize(floquet_operator(r, p), r, p.t_period)
        acc.add(spec.quasienergies, spec.weights_g)
    xi = ipr(acc)
    bins = int(np.count_nonzero(acc.numerator > 1e-9 * acc.count))
    return abs(xi - 1) < 1e-6 and bins == 1, f"xi = {xi:.12f}, occupied weight bins = {bins}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "unitarity": _unitarity,
    "completeness": _completeness,
    "stroboscopic correlation": _correlation,
    "small-instance oracle": _small_oracle,
    "two-state coefficient identities": _tssil_algebra,
    "contour normalizations": _tssil_norms,
    "field-off limit": _field_off,
}


def run_selftest() -> list[Check]:
    results = []
    for name, func in CHECKS.items():
        try:
            ok, detail = func()
        except Exception as exc:  # noqa: BLE001 - report, do not abort the remaining checks
            ok, detail = False, f"{exc.__class__.__name__}: {exc}"
        results.append(Check(name, bool(ok), detail))
    return results
