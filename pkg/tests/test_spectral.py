import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivenlsd import spectral, tssil
from drivenlsd.ensemble import ModelParams, sample_realization
from drivenlsd.errors import EmptyAccumulatorError, ParameterError, SpanError
from drivenlsd.floquet import FloquetSpectrum, floquet_spectrum
from drivenlsd.spectral import LsdAccumulator, accumulate, finalize_lsd, ipr


def spectrum(energies, weights):
    energies = np.asarray(energies, dtype=float)
    return FloquetSpectrum(energies, np.asarray(weights, dtype=float), np.zeros_like(energies), 2 * math.pi / 1000)


def test_single_weight_hits_one_bin():
    acc = LsdAccumulator.empty(10.0, 201)
    accumulate(acc, spectrum([0.0, 3.0, -7.0], [1.0, 0.0, 0.0]))
    assert np.count_nonzero(acc.numerator) == 1
    assert acc.numerator[100] == 1.0
    assert acc.denominator.sum() == 3
    assert ipr(acc) == 1.0


def test_linearity():
    spec = spectrum([0.1, -2.0, 4.5], [0.5, 0.3, 0.2])
    once = accumulate(LsdAccumulator.empty(5.0, 11), spec)
    twice = accumulate(accumulate(LsdAccumulator.empty(5.0, 11), spec), spec)
    assert np.allclose(twice.numerator, 2 * once.numerator)
    assert np.allclose(twice.denominator, 2 * once.denominator)
    assert twice.ipr_sum == pytest.approx(2 * once.ipr_sum)
    assert twice.count == 2 * once.count


def test_flat_weights():
    n = 41
    energies = np.linspace(-9.5, 9.5, n)
    acc = accumulate(LsdAccumulator.empty(10.0, 21), spectrum(energies, np.full(n, 1 / n)))
    samples = finalize_lsd(acc, 0.5)
    assert np.allclose(samples.rho, 1 / (n * 0.5))
    assert ipr(acc) == pytest.approx(n)


def test_average_then_invert():
    acc = LsdAccumulator.empty(1.0, 3)
    acc.add([0.0], [1.0])
    acc.add([-0.5, 0.5], [0.5, 0.5])  # participation sum 1/2
    assert ipr(acc) == pytest.approx(4 / 3)


def test_overflow_is_tracked_and_checked():
    acc = LsdAccumulator.empty(1.0, 5)
    acc.add([0.0, 2.0], [0.98, 0.02])
    assert acc.overflow_fraction == pytest.approx(0.02)
    with pytest.raises(SpanError):
        acc.check_overflow()
    acc.check_overflow(limit=0.05)


def test_upper_edge_belongs_to_last_bin():
    acc = LsdAccumulator.empty(1.0, 4)
    acc.add([1.0, -1.0], [0.5, 0.5])
    assert acc.numerator[-1] == 0.5 and acc.numerator[0] == 0.5
    assert acc.overflow == 0


def test_empty_accumulator_errors():
    acc = LsdAccumulator.empty(1.0, 3)
    with pytest.raises(EmptyAccumulatorError):
        finalize_lsd(acc, 1.0)
    with pytest.raises(EmptyAccumulatorError):
        ipr(acc)


def test_bad_layout():
    with pytest.raises(ParameterError):
        LsdAccumulator.empty(0.0, 3)
    with pytest.raises(ParameterError):
        LsdAccumulator.empty(1.0, 0)
    with pytest.raises(ParameterError):
        LsdAccumulator.empty(1.0, 3).merge(LsdAccumulator.empty(2.0, 3))


def test_completeness_of_finalized_lsd():
    rng = np.random.default_rng(0)
    acc = LsdAccumulator.empty(5.0, 51)
    for _ in range(50):
        e = rng.uniform(-5, 5, 200)
        w = rng.exponential(size=200)
        acc.add(e, w / w.sum())
    # numerator per bin = rho * delta * denominator; summing recovers the weight
    s = finalize_lsd(acc, 0.05)
    total = np.sum(s.rho * 0.05 * s.counts) / acc.count
    assert total == pytest.approx(1 - acc.overflow_fraction, abs=1e-12)


def test_synthetic_lorentzian_comb():
    gamma0, spacing = 2.0, 0.01
    acc = LsdAccumulator.empty(10.0, 201)
    rng = np.random.default_rng(1)
    for _ in range(20):
        comb = np.arange(-60, 60, spacing) + rng.uniform(0, spacing)
        w = tssil.lorentzian(comb, gamma0) * spacing
        acc.add(comb, w)
    s = finalize_lsd(acc, spacing)
    ref = tssil.lorentzian(s.omega, gamma0)
    rms = math.sqrt(np.mean((s.rho - ref) ** 2)) / ref.max()
    assert rms < 0.02


def test_merge_in_order_matches_serial():
    rng = np.random.default_rng(7)
    data = [(rng.uniform(-3, 3, 30), rng.dirichlet(np.ones(30))) for _ in range(8)]
    serial = LsdAccumulator.empty(3.0, 31)
    for e, w in data:
        serial.add(e, w)
    parts = [LsdAccumulator.empty(3.0, 31) for _ in range(4)]
    for i, (e, w) in enumerate(data):
        parts[i // 2].add(e, w)
    merged = parts[0]
    for p in parts[1:]:
        merged.merge(p)
    assert np.allclose(merged.numerator, serial.numerator, rtol=1e-14)
    assert merged.count == serial.count
    assert ipr(merged) == pytest.approx(ipr(serial), rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(perm_seed=st.integers(0, 10_000))
def test_ipr_permutation_invariant(perm_seed):
    rng = np.random.default_rng(3)
    data = [rng.dirichlet(np.ones(10)) for _ in range(12)]
    order = np.random.default_rng(perm_seed).permutation(len(data))

    def build(seq):
        acc = LsdAccumulator.empty(1.0, 5)
        for w in seq:
            acc.add(np.zeros(10), w)
        return ipr(acc)

    assert build([data[i] for i in order]) == pytest.approx(build(data), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 40))
def test_finalized_lsd_nonnegative_and_ipr_bounded(seed, n):
    rng = np.random.default_rng(seed)
    acc = LsdAccumulator.empty(2.0, 9)
    for _ in range(3):
        acc.add(rng.uniform(-2, 2, n), rng.dirichlet(np.ones(n)))
    assert np.all(finalize_lsd(acc, 1.0).rho >= 0)
    assert 1 - 1e-12 <= ipr(acc) <= n + 1e-9


# --- layout -----------------------------------------------------------------


def test_apparent_width_limits():
    assert spectral.apparent_width(100.0, 1.0) == pytest.approx(100.0, rel=0.01)
    assert spectral.apparent_width(1e-4, 1.0) == pytest.approx(math.sqrt(2e-4 / math.pi), rel=1e-3)


def test_layout_resolves_narrow_lines():
    span, bins = spectral.layout(0.01, 5.0, 100.0, 1.0)
    assert bins % 2 == 1
    bin_width = 2 * span / bins
    assert bin_width <= spectral.apparent_width(0.01, 1.0) / spectral.BINS_PER_WIDTH * 1.0001
    assert span == 5.0


def test_layout_respects_extent_and_overrides():
    assert spectral.layout(10.0, 1e4, 50.0, 1.0)[0] == 50.0
    assert spectral.layout(10.0, 1e4, 50.0, 1.0, bins=11, span=3.0) == (3.0, 11)
    assert spectral.layout(1e-9, 1e4, 1e4, 1.0)[1] == spectral.MAX_BINS


# --- field-free reference ---------------------------------------------------


def test_field_free_zero_coupling():
    ref = spectral.field_free_reference(ModelParams(n_states=21, v_rms=0.0, realizations=16))
    assert ref.xi0 == pytest.approx(1.0, abs=1e-12)
    assert ref.perturbative_bound
    assert ref.regime == "perturbative"


def test_field_free_nonperturbative():
    p = ModelParams(n_states=201, v_rms=1.8, realizations=64)
    ref = spectral.field_free_reference(p)
    assert ref.gamma0 > ref.delta_omega
    assert ref.fit_residual < 0.10
    assert 1 <= ref.xi0 <= p.n_states
    assert ref.regime == "non-perturbative"
    assert not ref.perturbative_bound


def test_field_free_symmetry():
    p = ModelParams(n_states=101, v_rms=1.0, realizations=128)
    acc = spectral.field_free_reference(p, bins=41, span=20.0).accumulator
    rho = acc.numerator / np.maximum(acc.denominator, 1)
    counts = np.maximum(acc.denominator, 1)
    diff = rho - rho[::-1]
    # binomial-ish standard error of a mean weight per bin
    se = np.sqrt(np.maximum(rho, 1e-12) / counts + np.maximum(rho[::-1], 1e-12) / counts[::-1])
    assert np.mean(np.abs(diff)) < 3 * np.mean(se)


def test_field_free_matches_floquet_route():
    p = ModelParams(n_states=31, v_rms=1.0, rabi=0.0, seed=5)
    r = sample_realization(p, 0)
    spec = floquet_spectrum(r, p)
    evals, evecs = np.linalg.eigh(r.band_block)
    keep = spec.weights_k0 > 1e-14
    fl = sorted(zip(spec.quasienergies[keep], spec.weights_k0[keep]))
    ev = sorted(zip(evals, evecs[p.half_width] ** 2))
    ev = [x for x in ev if x[1] > 1e-14]
    assert len(fl) == len(ev)
    assert np.allclose(np.array(fl), np.array(ev), atol=1e-9)


def test_parallel_reference_is_bitwise_equal():
    p = ModelParams(n_states=41, v_rms=1.0, realizations=24)
    a = spectral.field_free_reference(p, workers=1)
    b = spectral.field_free_reference(p, workers=3)
    assert np.array_equal(a.accumulator.numerator, b.accumulator.numerator)
    assert a.xi0 == b.xi0 and a.gamma0 == b.gamma0
