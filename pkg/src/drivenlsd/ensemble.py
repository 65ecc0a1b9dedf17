"""Band random matrices with disordered diagonal.

The Hilbert space is ``|g>`` (row 0) followed by the ``N = 2K + 1`` band
states ``|k>``, ``k = -K..K`` (rows ``1..N``).  ``hbar = 1`` throughout, so
energies and angular frequencies share units.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ParameterError

DEFAULT_PIECES = 32
DEFAULT_DRIVE_FACTOR = 10.0
DEFAULT_REALIZATIONS = 256


@dataclass(frozen=True)
class ModelParams:
    """Static description of one ensemble point.

    ``band`` defaults to ``K`` (wide band).  ``drive_factor`` sets the drive
    frequency ``omega_f = drive_factor * N * delta``.
    """

    n_states: int
    delta: float = 1.0
    v_rms: float = 0.0
    band: int | None = None
    rabi: float = 0.0
    pieces: int = DEFAULT_PIECES
    drive_factor: float = DEFAULT_DRIVE_FACTOR
    seed: int = 0
    realizations: int = DEFAULT_REALIZATIONS

    def __post_init__(self):
        n = self.n_states
        if not isinstance(n, (int, np.integer)) or n < 3 or n % 2 != 1:
            raise ParameterError(f"n_states must be an odd integer >= 3, got {n!r}")
        if self.band is None:
            object.__setattr__(self, "band", (n - 1) // 2)
        if not isinstance(self.band, (int, np.integer)) or self.band < 1:
            raise ParameterError(f"band must be an integer >= 1, got {self.band!r}")
        if not self.delta > 0:
            raise ParameterError(f"delta must be > 0, got {self.delta!r}")
        if not self.v_rms >= 0:
            raise ParameterError(f"v_rms must be >= 0, got {self.v_rms!r}")
        if not self.rabi >= 0:
            raise ParameterError(f"rabi must be >= 0, got {self.rabi!r}")
        if not isinstance(self.pieces, (int, np.integer)) or self.pieces < 2:
            raise ParameterError(f"pieces must be an integer >= 2, got {self.pieces!r}")
        if not self.drive_factor > 2:
            raise ParameterError(f"drive_factor must be > 2, got {self.drive_factor!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.realizations, (int, np.integer)) or self.realizations < 1:
            raise ParameterError(f"realizations must be >= 1, got {self.realizations!r}")
        # whole unperturbed band inside half a quasienergy zone
        if not self.omega_f / 2 > self.half_width * self.delta:
            raise ParameterError("drive frequency too low: omega_f/2 must exceed K*delta")

    @property
    def half_width(self) -> int:
        """K, with N = 2K + 1."""
        return (self.n_states - 1) // 2

    @property
    def dim(self) -> int:
        return self.n_states + 1

    @property
    def omega_f(self) -> float:
        return self.drive_factor * self.n_states * self.delta

    @property
    def t_period(self) -> float:
        return 2 * math.pi / self.omega_f

    @property
    def coupling_halfwidth(self) -> float:
        """Half-width V = sqrt(3) v of the uniform coupling distribution."""
        return math.sqrt(3.0) * self.v_rms

    def with_(self, **changes) -> ModelParams:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Realization:
    h0: np.ndarray
    diag_energies: np.ndarray
    e_g: float
    g_index: int = 0
    k0_index: int = 0

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def band_block(self) -> np.ndarray:
        """The N x N block of ``h0`` acting on the ``|k>`` states."""
        return self.h0[1:, 1:]


def drive_frequency(params: ModelParams) -> tuple[float, float]:
    """Return ``(omega_f, T_f)``."""
    return params.omega_f, params.t_period


def realization_rng(seed: int, realization_index: int) -> np.random.Generator:
    """Independent generator keyed only by (seed, realization_index)."""
    if realization_index < 0:
        raise ParameterError(f"realization_index must be >= 0, got {realization_index}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(realization_index)]))


def band_mask(n_states: int, band: int) -> np.ndarray:
    """Boolean mask of the coupled off-diagonal pairs, ``0 < |k'-k| < band``."""
    idx = np.arange(n_states)
    dist = np.abs(idx[:, None] - idx[None, :])
    return (dist > 0) & (dist < band)


def sample_realization(params: ModelParams, realization_index: int) -> Realization:
    n = params.n_states
    k = params.half_width
    rng = realization_rng(params.seed, realization_index)

    diag = rng.uniform(-k * params.delta, k * params.delta, size=n)
    diag[k] = 0.0

    block = np.diag(diag)
    vmax = params.coupling_halfwidth
    for offset in range(1, min(params.band, n)):
        vals = rng.uniform(-vmax, vmax, size=n - offset)
        rows = np.arange(n - offset)
        block[rows, rows + offset] = vals
        block[rows + offset, rows] = vals

    h0 = np.zeros((n + 1, n + 1))
    h0[1:, 1:] = block
    e_g = -params.omega_f
    h0[0, 0] = e_g
    return Realization(h0=h0, diag_energies=diag, e_g=e_g, g_index=0, k0_index=k + 1)


def golden_rule_gamma0(params: ModelParams) -> float:
    """Fermi golden-rule estimate of the field-free width of ``|0>``.

    ``|0>`` couples to ``2(b-1)`` states spread uniformly over ``[-K delta, K delta]``.
    """
    return 2 * math.pi * params.v_rms**2 * _coupled_density(params)


def coupling_for_gamma0(params: ModelParams, gamma0: float) -> float:
    """Invert :func:`golden_rule_gamma0` for ``v_rms``."""
    if params.band < 2:
        raise ParameterError("band must be >= 2 for |0> to couple to anything")
    return math.sqrt(gamma0 / (2 * math.pi * _coupled_density(params)))


def _coupled_density(params: ModelParams) -> float:
    n_coupled = min(2 * (params.band - 1), params.n_states - 1)
    return n_coupled / (2 * params.half_width * params.delta)


def spectrum_extent(params: ModelParams) -> float:
    """Generous bound on |E| for the eigenvalues of the band block."""
    b = min(params.band, params.n_states)
    return params.half_width * params.delta + 3 * params.v_rms * math.sqrt(2 * max(b - 1, 0))
