"""Disorder-averaged local spectral density, participation ratios and the
field-free reference of ``|0>``.

The LSD is the ratio of two disorder-averaged histograms, the overlap weight
per bin over the number of quasienergies per bin, divided by the mean level
spacing.  The inverse participation ratio averages ``sum_j W_j**2`` over the
ensemble first and inverts afterwards.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fitting, tssil
from .ensemble import ModelParams, sample_realization, golden_rule_gamma0, spectrum_extent
from .errors import EmptyAccumulatorError, ParameterError, SpanError
from .floquet import FloquetSpectrum

DEFAULT_BINS = 201
MAX_BINS = 20_001
OVERFLOW_LIMIT = 0.01
TAIL_FRACTION = 1e-3
BINS_PER_WIDTH = 8
SPAN_PER_WIDTH = 8


@dataclass
class LsdAccumulator:
    bin_edges: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    ipr_sum: float = 0.0
    count: int = 0
    overflow: float = 0.0

    @classmethod
    def empty(cls, span: float, bins: int = DEFAULT_BINS) -> LsdAccumulator:
        if not span > 0:
            raise ParameterError(f"span must be > 0, got {span!r}")
        if bins < 1:
            raise ParameterError(f"bins must be >= 1, got {bins!r}")
        return cls(
            bin_edges=np.linspace(-span, span, bins + 1),
            numerator=np.zeros(bins),
            denominator=np.zeros(bins),
        )

    @property
    def span(self) -> float:
        return float(self.bin_edges[-1])

    @property
    def bins(self) -> int:
        return self.numerator.size

    @property
    def bin_width(self) -> float:
        return 2 * self.span / self.bins

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def overflow_fraction(self) -> float:
        return self.overflow / self.count if self.count else 0.0

    def add(self, energies: np.ndarray, weights: np.ndarray) -> LsdAccumulator:
        """Add one realization's (energy, weight) pairs."""
        energies = np.asarray(energies, dtype=float)
        weights = np.asarray(weights, dtype=float)
        idx = np.floor((energies + self.span) / self.bin_width).astype(np.int64)
        # the upper edge belongs to the last bin
        idx[energies == self.span] = self.bins - 1
        inside = (idx >= 0) & (idx < self.bins)
        self.numerator += np.bincount(idx[inside], weights=weights[inside], minlength=self.bins)
        self.denominator += np.bincount(idx[inside], minlength=self.bins)
        self.overflow += float(np.sum(weights[~inside]))
        self.ipr_sum += float(np.sum(weights**2))
        self.count += 1
        return self

    def merge(self, other: LsdAccumulator) -> LsdAccumulator:
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ParameterError("cannot merge accumulators with different bins")
        self.numerator += other.numerator
        self.denominator += other.denominator
        self.ipr_sum += other.ipr_sum
        self.count += other.count
        self.overflow += other.overflow
        return self

    def check_overflow(self, limit: float = OVERFLOW_LIMIT) -> None:
        if self.overflow_fraction > limit:
            raise SpanError(
                f"{100 * self.overflow_fraction:.2f}% of the weight fell outside "
                f"[-{self.span:g}, {self.span:g}]; increase the span"
            )


@dataclass
class LsdSamples:
    omega: np.ndarray
    rho: np.ndarray
    counts: np.ndarray

    def as_fit_samples(self) -> np.ndarray:
        return np.column_stack([self.omega, self.rho, self.counts])

    def __len__(self) -> int:
        return self.omega.size


def accumulate(acc: LsdAccumulator, spec: FloquetSpectrum, which: str = "g") -> LsdAccumulator:
    return acc.add(spec.quasienergies, spec.weights(which))


def finalize_lsd(acc: LsdAccumulator, delta_omega: float) -> LsdSamples:
    if acc.count == 0:
        raise EmptyAccumulatorError("no realizations accumulated")
    occupied = acc.denominator > 0
    rho = acc.numerator[occupied] / acc.denominator[occupied] / delta_omega
    return LsdSamples(omega=acc.centers[occupied], rho=rho, counts=acc.denominator[occupied].copy())


def ipr(acc: LsdAccumulator) -> float:
    if acc.count == 0:
        raise EmptyAccumulatorError("no realizations accumulated")
    if acc.ipr_sum <= 0:
        raise EmptyAccumulatorError("participation sum is zero; weights are not normalized")
    return acc.count / acc.ipr_sum


def apparent_width(width: float, delta_omega: float) -> float:
    """Width the ratio-of-histograms LSD shows for a Lorentzian of ``width``.

    The probe state's own quasienergy lands in the denominator histogram; once
    its peak density exceeds the level density ``1/delta_omega`` the ratio
    saturates, and a Lorentzian of FWHM ``w`` shows up as a Lorentzian of FWHM
    ``sqrt(w**2 + 2 w delta_omega / pi)``.
    """
    return math.sqrt(width**2 + 2 * width * delta_omega / math.pi)


def layout(
    shape_width: float,
    tail: float,
    extent: float,
    delta_omega: float,
    bins: int | None = None,
    span: float | None = None,
) -> tuple[float, int]:
    """Choose ``(span, bins)`` for a lineshape of the given expected width.

    The span covers the model tail (``tail``: half-width holding all but
    ``TAIL_FRACTION`` of the weight) but never exceeds the spectrum
    ``extent``; bins resolve the apparent width with ``BINS_PER_WIDTH`` bins.
    An odd bin count keeps a bin centred on zero.
    """
    visible = apparent_width(shape_width, delta_omega) if shape_width > 0 else delta_omega
    if span is None:
        span = min(extent, max(tail, SPAN_PER_WIDTH * visible))
    if bins is None:
        want = math.ceil(2 * span / (visible / BINS_PER_WIDTH))
        bins = min(max(DEFAULT_BINS, want), MAX_BINS)
        bins += 1 - bins % 2
    return float(span), int(bins)


@dataclass
class FieldFreeReference:
    gamma0: float
    xi0: float
    delta_omega: float
    fit_residual: float
    perturbative_bound: bool = False
    fit: fitting.ContourFit | None = None
    samples: LsdSamples | None = field(default=None, repr=False)
    accumulator: LsdAccumulator | None = field(default=None, repr=False)

    @property
    def regime(self) -> str:
        return "perturbative" if self.gamma0 < self.delta_omega else "non-perturbative"


def _field_free_one(params: ModelParams, index: int) -> tuple[np.ndarray, np.ndarray]:
    r = sample_realization(params, index)
    evals, evecs = np.linalg.eigh(r.band_block)
    return evals, evecs[params.half_width, :] ** 2


def map_realizations(func, params: ModelParams, workers: int | None = None):
    """Apply ``func(params, index)`` to every realization, results in index order."""
    indices = range(params.realizations)
    if workers is None or workers <= 1:
        return (func(params, i) for i in indices)
    pool = ThreadPoolExecutor(max_workers=workers)

    def gen():
        with pool:
            yield from pool.map(lambda i: func(params, i), indices)

    return gen()


def field_free_reference(
    params: ModelParams,
    bins: int | None = None,
    span: float | None = None,
    workers: int | None = None,
) -> FieldFreeReference:
    """Lorentzian width and participation ratio of ``|0>`` over the eigenstates of ``H0``."""
    delta_omega = params.delta
    gamma_gr = golden_rule_gamma0(params)
    extent = spectrum_extent(params)
    if gamma_gr > 0:
        tail = gamma_gr / (math.pi * TAIL_FRACTION)
        span, bins = layout(gamma_gr, tail, extent, delta_omega, bins=bins, span=span)
    else:
        span = span or delta_omega
        bins = bins or DEFAULT_BINS
    acc = LsdAccumulator.empty(span, bins)
    for energies, weights in map_realizations(_field_free_one, params, workers):
        acc.add(energies, weights)

    samples = finalize_lsd(acc, delta_omega)
    xi0 = ipr(acc)
    bound = acc.bin_width
    fit = None
    if params.v_rms > 0 and len(samples) >= 8:
        guess = apparent_width(gamma_gr, delta_omega)
        fit = fitting.fit_contour(samples.as_fit_samples(), fitting.LORENTZIAN, [guess])
    if fit is None or not fit.converged or fit.params[0] < bound:
        return FieldFreeReference(
            gamma0=bound,
            xi0=xi0,
            delta_omega=delta_omega,
            fit_residual=fit.residual if fit is not None else math.nan,
            perturbative_bound=True,
            fit=fit,
            samples=samples,
            accumulator=acc,
        )
    return FieldFreeReference(
        gamma0=fit.params[0],
        xi0=xi0,
        delta_omega=delta_omega,
        fit_residual=fit.residual,
        fit=fit,
        samples=samples,
        accumulator=acc,
    )


def driven_layout(
    params: ModelParams,
    gamma0: float,
    bins: int | None = None,
    span: float | None = None,
) -> tuple[float, int]:
    """Histogram layout for the driven LSD of ``|g>`` sized from the two-state model."""
    extent = min(spectrum_extent(params) + params.rabi, params.omega_f / 2)
    if params.rabi == 0:
        return layout(0.0, params.delta, extent, params.delta, bins=bins, span=span)
    p = tssil.TssilParams(gamma0, params.rabi)
    width = tssil.predicted_width(p)
    tail = tssil.tail_halfwidth(p, TAIL_FRACTION)
    if p.regime == tssil.STRONG:
        d1, d2 = tssil.strong_coefficients(p)
        width = min(width, tssil.strong_peak_position(d1, d2) or width)
    return layout(width, tail, extent, params.delta, bins=bins, span=span)
