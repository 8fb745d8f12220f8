"""Harmonic phasor series (HPS) transforms and frequency-coupling-matrix algebra.

A real periodic signal is represented one-sidedly as

    s(t) = Re sum_{n=0}^{N} S_n exp(j n w t)

with complex coefficients ``S_n`` and a real DC entry ``S_0``.  A linearised
device couples harmonic perturbations through a pair of matrices acting on a
coefficient vector and its conjugate,

    dI = Y1 @ dV + Y2 @ conj(dV)

which is the phase-dependent generalisation of an ordinary admittance matrix:
as the phase of a single input harmonic rotates, the apparent admittance
traces a circle centred on the Y1 entry with radius ``|Y2 entry|``.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np
import numpy.typing as npt

__all__ = [
    "PeriodicSignal",
    "HarmonicVector",
    "CouplingMatrixPair",
    "DifferentialOperator",
    "hps_forward",
    "hps_inverse",
    "apply_fcm",
    "toeplitz_fcm",
    "hps_convolve",
    "memoryless_linearize",
    "split_real_imag",
    "pack_pair_from_block",
    "invert_fcm",
    "differential_operator",
]

_DC_IMAG_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class PeriodicSignal:
    """One period of a uniformly sampled real waveform.

    ``samples[k]`` is the value at ``t = k * sample_interval``; the sample at
    ``t = period`` is the wrap-around of sample 0 and is not stored.
    """

    samples: npt.NDArray[np.float64]
    sample_interval: float
    period: float

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("samples must be a 1-D array with at least 2 entries")
        if self.sample_interval <= 0 or self.period <= 0:
            raise ValueError("sample_interval and period must be positive")
        if not np.isclose(samples.size * self.sample_interval, self.period, rtol=1e-9, atol=0.0):
            raise ValueError(
                f"samples.size * sample_interval = {samples.size * self.sample_interval!r} "
                f"does not equal period = {self.period!r}"
            )

    @property
    def times(self) -> npt.NDArray[np.float64]:
        return np.arange(self.samples.size) * self.sample_interval

    @property
    def omega(self) -> float:
        """Fundamental angular frequency in rad/s."""
        return 2.0 * np.pi / self.period

    def max_order(self) -> int:
        """Largest truncation order satisfying the Nyquist guard."""
        return self.samples.size // 2 - 1


@dataclasses.dataclass(frozen=True)
class HarmonicVector:
    """HPS coefficients ``S_0 .. S_N``; the DC entry of a real signal is real."""

    coefficients: npt.NDArray[np.complex128]
    fundamental_frequency: float

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=complex)
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("coefficients must be a 1-D array with at least 1 entry")
        scale = max(1.0, float(np.max(np.abs(coeffs))))
        if abs(coeffs[0].imag) > _DC_IMAG_TOL * scale:
            raise ValueError(f"DC coefficient must be real, got {coeffs[0]!r}")
        coeffs = coeffs.copy()
        coeffs[0] = coeffs[0].real
        object.__setattr__(self, "coefficients", coeffs)
        if self.fundamental_frequency <= 0:
            raise ValueError("fundamental_frequency must be positive")

    @property
    def order(self) -> int:
        return self.coefficients.size - 1

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.fundamental_frequency


@dataclasses.dataclass(frozen=True)
class CouplingMatrixPair:
    """The (Y1, Y2) matrix pair of a linearised device.

    ``y2 == 0`` is the phase-independent (Cauchy-Riemann) case of a linear
    time-invariant device.  ``dc_voltage_column`` carries the policy flag
    attached when the DC input column has no finite meaning.
    """

    y1: npt.NDArray[np.complex128]
    y2: npt.NDArray[np.complex128]
    base_input: HarmonicVector | None = None
    base_output: HarmonicVector | None = None
    dc_voltage_column: str | None = None

    def __post_init__(self) -> None:
        y1 = np.asarray(self.y1, dtype=complex)
        y2 = np.asarray(self.y2, dtype=complex)
        if y1.ndim != 2 or y1.shape[0] != y1.shape[1]:
            raise ValueError("y1 must be a square matrix")
        if y1.shape != y2.shape:
            raise ValueError(f"y1 and y2 must share a shape, got {y1.shape} and {y2.shape}")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)

    @property
    def order(self) -> int:
        return self.y1.shape[0] - 1


def hps_forward(signal: PeriodicSignal, order: int) -> HarmonicVector:
    """Transform a sampled period into HPS coefficients up to ``order``.

    Coefficient ``n`` is ``(2 - delta[n]) / T * integral(s(t) exp(-j n w t))``
    evaluated by the trapezoidal rule on the uniform grid, which for periodic
    integrands reduces to the mean over the stored samples and is exact for
    band-limited signals respecting the Nyquist guard.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    n_samples = signal.samples.size
    if n_samples < 2 * (order + 1):
        raise ValueError(
            f"order {order} needs at least {2 * (order + 1)} samples per period "
            f"(Nyquist guard); signal has {n_samples}"
        )
    phase = np.exp(-1j * signal.omega * signal.times)
    coeffs = np.empty(order + 1, dtype=complex)
    rotator = np.ones(n_samples, dtype=complex)
    for n in range(order + 1):
        weight = 1.0 if n == 0 else 2.0
        coeffs[n] = weight * np.mean(signal.samples * rotator)
        rotator *= phase
    coeffs[0] = coeffs[0].real
    return HarmonicVector(coeffs, signal.omega)


def hps_inverse(coeffs: HarmonicVector, sample_count: int) -> PeriodicSignal:
    """Reconstruct one period of ``Re sum V_n exp(j n w t)`` on a uniform grid."""
    order = coeffs.order
    if sample_count < 2 * (order + 1):
        raise ValueError(
            f"sample_count {sample_count} is below the Nyquist guard "
            f"{2 * (order + 1)} for order {order}"
        )
    period = coeffs.period
    t = np.arange(sample_count) * (period / sample_count)
    samples = np.zeros(sample_count)
    for n, c in enumerate(coeffs.coefficients):
        samples += np.real(c * np.exp(1j * n * coeffs.fundamental_frequency * t))
    return PeriodicSignal(samples, period / sample_count, period)


def apply_fcm(pair: CouplingMatrixPair, dv: HarmonicVector) -> HarmonicVector:
    """Evaluate ``Y1 @ dv + Y2 @ conj(dv)``."""
    if dv.order != pair.order:
        raise ValueError(f"dimension mismatch: pair order {pair.order}, vector order {dv.order}")
    v = dv.coefficients
    out = pair.y1 @ v + pair.y2 @ np.conj(v)
    return HarmonicVector(out, dv.fundamental_frequency)


def toeplitz_fcm(yv_coeffs: HarmonicVector) -> CouplingMatrixPair:
    """Build the coupling pair of a memoryless device from its slope coefficients.

    ``yv_coeffs`` holds the HPS coefficients ``Y_n`` of the time-varying slope
    evaluated along the base waveform.  Y1 is Toeplitz-with-conjugates and Y2
    is a Hankel layout; both carry an overall 1/2, a halved first row, and Y1
    doubles its diagonal to ``2 Y_0``.  Harmonics above the truncation order
    are dropped.
    """
    y = yv_coeffs.coefficients
    n_tot = y.size
    y_at = lambda k: y[k] if k < n_tot else 0.0  # noqa: E731 - local shorthand
    y1 = np.zeros((n_tot, n_tot), dtype=complex)
    y2 = np.zeros((n_tot, n_tot), dtype=complex)
    for n in range(n_tot):
        for m in range(n_tot):
            if m == 0:
                y1[n, m] = y_at(n)
                y2[n, m] = y_at(n)
            elif n == 0:
                y1[n, m] = np.conj(y_at(m)) / 2.0
                y2[n, m] = y_at(m) / 2.0
            else:
                if n == m:
                    y1[n, m] = 2.0 * y_at(0)
                elif n > m:
                    y1[n, m] = y_at(n - m)
                else:
                    y1[n, m] = np.conj(y_at(m - n))
                y2[n, m] = y_at(n + m)
    return CouplingMatrixPair(0.5 * y1, 0.5 * y2)


def hps_convolve(yv_coeffs: HarmonicVector, dv: HarmonicVector) -> HarmonicVector:
    """Harmonic-domain product of a slope waveform with a perturbation.

    Term-by-term evaluation of the one-sided convolution

        dI_n = 1/2 sum_{m=0}^{n} dV_{n-m} Y_m
             + 1/(2 + 2 delta[n]) sum_{m>=0} (dV_{n+m} conj(Y_m) + conj(dV_m) Y_{n+m})

    with terms beyond the stored truncation order dropped.
    """
    if yv_coeffs.order != dv.order:
        raise ValueError("yv_coeffs and dv must share a truncation order")
    y = yv_coeffs.coefficients
    v = dv.coefficients
    n_tot = v.size
    out = np.zeros(n_tot, dtype=complex)
    for n in range(n_tot):
        acc = 0.0 + 0.0j
        for m in range(n + 1):
            acc += 0.5 * v[n - m] * y[m]
        tail = 0.0 + 0.0j
        for m in range(n_tot - n):
            tail += v[n + m] * np.conj(y[m]) + np.conj(v[m]) * y[n + m]
        denom = 4.0 if n == 0 else 2.0
        out[n] = acc + tail / denom
    return HarmonicVector(out, dv.fundamental_frequency)


def memoryless_linearize(
    slope_fn: Callable[[npt.NDArray[np.float64], npt.NDArray[np.float64]], npt.NDArray[np.float64]],
    v_base: PeriodicSignal,
    order: int,
) -> CouplingMatrixPair:
    """Linearise ``i = y(v, t)`` about a base waveform.

    ``slope_fn(v, t)`` must be the analytic partial derivative dy/dv; it is
    sampled along the base, transformed, and expanded into the coupling pair.
    """
    slope = np.asarray(slope_fn(v_base.samples, v_base.times), dtype=float)
    slope_signal = PeriodicSignal(slope, v_base.sample_interval, v_base.period)
    pair = toeplitz_fcm(hps_forward(slope_signal, order))
    return CouplingMatrixPair(
        pair.y1, pair.y2, base_input=hps_forward(v_base, order), base_output=None
    )


def split_real_imag(pair: CouplingMatrixPair) -> npt.NDArray[np.float64]:
    """Real block matrix acting on stacked ``[dV_re; dV_im]`` coordinates.

    The block form reproduces :func:`apply_fcm` exactly:

        [dI_re]   [Re(Y1 + Y2)   -Im(Y1 - Y2)] [dV_re]
        [dI_im] = [Im(Y1 + Y2)    Re(Y1 - Y2)] [dV_im]
    """
    y1, y2 = pair.y1, pair.y2
    return np.block(
        [
            [np.real(y1 + y2), -np.imag(y1 - y2)],
            [np.imag(y1 + y2), np.real(y1 - y2)],
        ]
    )


def pack_pair_from_block(block: npt.NDArray[np.float64]) -> CouplingMatrixPair:
    """Inverse of :func:`split_real_imag` (the two are a bijection)."""
    size = block.shape[0]
    if block.shape != (size, size) or size % 2:
        raise ValueError("block matrix must be square with even size")
    n = size // 2
    a = block[:n, :n]
    b = block[:n, n:]
    c = block[n:, :n]
    d = block[n:, n:]
    y1 = 0.5 * (a + d) + 0.5j * (c - b)
    y2 = 0.5 * (a - d) + 0.5j * (c + b)
    return CouplingMatrixPair(y1, y2)


def _reduced_indices(order: int) -> npt.NDArray[np.intp]:
    """Stacked real/imag indices with the DC-imaginary coordinate removed."""
    keep = np.ones(2 * (order + 1), dtype=bool)
    keep[order + 1] = False
    return np.flatnonzero(keep)


def invert_fcm(pair: CouplingMatrixPair, cond_limit: float = 1e12) -> CouplingMatrixPair:
    """Invert the coupling relation on the space of physical harmonic vectors.

    The DC-imaginary coordinate is not a degree of freedom of a real signal,
    so the real block matrix is inverted with that row and column removed and
    the result re-packed with zeros there.  Composing the forward and inverse
    actions is the identity on every :class:`HarmonicVector`.
    """
    order = pair.order
    block = split_real_imag(pair)
    idx = _reduced_indices(order)
    reduced = block[np.ix_(idx, idx)]
    cond = np.linalg.cond(reduced)
    if not np.isfinite(cond) or cond > cond_limit:
        raise np.linalg.LinAlgError(
            f"coupling block matrix is singular or ill-conditioned (cond ~ {cond:.3e})"
        )
    inv_reduced = np.linalg.inv(reduced)
    full = np.zeros_like(block)
    full[np.ix_(idx, idx)] = inv_reduced
    inv_pair = pack_pair_from_block(full)
    return CouplingMatrixPair(
        inv_pair.y1, inv_pair.y2, base_input=pair.base_output, base_output=pair.base_input
    )


@dataclasses.dataclass(frozen=True)
class DifferentialOperator:
    """Diagonal harmonic-domain d/dt operator and its pseudo-inverse.

    ``matrix_diagonal`` is ``diag(0, jw, j2w, ...)``.  The DC entry of the
    inverse is unbounded and represented by the ``dc_unbounded`` flag (never by
    a floating infinity); ``inverse_diagonal[0]`` is stored as 0 and callers
    must branch on the flag when DC flux matters.
    """

    order: int
    omega: float
    dc_unbounded: bool = True

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ValueError("order must be non-negative")
        if self.omega <= 0:
            raise ValueError("omega must be positive")

    @property
    def matrix_diagonal(self) -> npt.NDArray[np.complex128]:
        return 1j * self.omega * np.arange(self.order + 1)

    @property
    def inverse_diagonal(self) -> npt.NDArray[np.complex128]:
        inv = np.zeros(self.order + 1, dtype=complex)
        n = np.arange(1, self.order + 1)
        inv[1:] = 1.0 / (1j * self.omega * n)
        return inv

    def differentiate(self, v: HarmonicVector) -> HarmonicVector:
        return HarmonicVector(self.matrix_diagonal * v.coefficients, v.fundamental_frequency)

    def integrate(self, v: HarmonicVector, dc_value: float = 0.0) -> HarmonicVector:
        """Apply the pseudo-inverse; the free DC level must be supplied."""
        out = self.inverse_diagonal * v.coefficients
        out[0] = dc_value
        return HarmonicVector(out, v.fundamental_frequency)


def differential_operator(order: int, omega: float) -> DifferentialOperator:
    """Construct the harmonic-domain differentiation operator."""
    return DifferentialOperator(order, omega)
