"""Analytic harmonic-domain linearisation of the hysteresis operator.

About a periodic base current, the flux response to a perturbation in one
harmonic coefficient is assembled term by term: the common-mode partials take
the perturbation waveform at the present instant and at the global extremum
instants, while each staircase vertex contributes shape-surface partials
weighted by the perturbation value at the instant its coordinate was created
(the live coordinate uses the present instant).  Projecting these directional
derivatives on the harmonic basis fills the flux coupling pair (P1, P2);
inverting and composing with the integral operator yields the Norton
admittance pair (Y1, Y2).

All sample-level sensitivities are collected once into a sparse matrix, so the
2(N+1) perturbation directions reuse the same staircase walk.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import numpy.typing as npt
from scipy import sparse

from .hps import (
    CouplingMatrixPair,
    DifferentialOperator,
    HarmonicVector,
    PeriodicSignal,
    hps_forward,
    hps_inverse,
    invert_fcm,
    pack_pair_from_block,
    split_real_imag,
    _reduced_indices,
)
from .preisach import HysteresisModel, StaircaseMemory, evaluate, simulate, staircase_trajectory

__all__ = [
    "BasePoint",
    "validate_base",
    "directional_derivative",
    "linearize_preisach",
    "fcm_from_preisach",
    "solve_base_from_voltage",
    "DC_POLICIES",
]

logger = logging.getLogger(__name__)

DC_POLICIES = ("dc-excluded", "dc-free-flux")


@dataclasses.dataclass(frozen=True)
class BasePoint:
    """A validated base operating waveform with its staircase history.

    ``wipe_straddles`` lists, per straddled sample interval, the estimated
    in-between instant at which a surviving extremum pair was erased; the
    integrand is smooth on either side but jumps there, so harmonic quadrature
    splits those intervals.
    """

    current: PeriodicSignal
    trajectory: tuple[StaircaseMemory, ...]
    start_index: int
    minima_indices: tuple[int, ...]
    maxima_indices: tuple[int, ...]
    wipe_straddles: tuple[tuple[int, float], ...]
    solve_iterations: int | None = None
    solve_residuals: tuple[float, ...] | None = None

    @property
    def omega(self) -> float:
        return self.current.omega


def validate_base(i_b: PeriodicSignal) -> BasePoint:
    """Check the base waveform against the linearisability conditions.

    Rejects constant signals (a), plateau extrema (a/b), repeated extremum
    values (b/c ambiguity), and tied global extrema (d).  Records interior
    extrema and the sample intervals straddling wipe instants.
    """
    s = i_b.samples
    n = s.size
    if np.all(s == s[0]):
        raise ValueError("condition a violated: base current is constant")
    prev = np.roll(s, 1)
    nxt = np.roll(s, -1)
    if np.any((s == prev)):
        raise ValueError("condition a violated: base current has plateau samples")
    maxima = np.flatnonzero((s > prev) & (s > nxt))
    minima = np.flatnonzero((s < prev) & (s < nxt))
    extremum_values = np.concatenate([s[maxima], s[minima]])
    if np.unique(extremum_values).size != extremum_values.size:
        raise ValueError(
            "condition b/c violated: two historical extrema share a value"
        )
    if np.flatnonzero(s == np.max(s)).size > 1 or np.flatnonzero(s == np.min(s)).size > 1:
        raise ValueError("condition d violated: tied global extrema")

    trajectory = staircase_trajectory(i_b)
    start = int(np.argmin(s))
    straddles: list[tuple[int, float]] = []
    dt = i_b.sample_interval
    for step in range(1, n):
        idx = (start + step) % n
        prev_idx = (start + step - 1) % n
        m_prev, m_now = trajectory[prev_idx], trajectory[idx]
        if m_now.newest != m_prev.newest:
            continue  # global-extremum handover, smooth by periodicity
        reversal = m_now.direction != m_prev.direction
        expected = len(m_prev.inner) + (1 if reversal else 0)
        if len(m_now.inner) < expected:
            threshold = m_prev.inner[-2] if len(m_prev.inner) >= 2 else m_prev.inner[-1]
            lo, hi = s[prev_idx], s[idx]
            frac = (threshold - lo) / (hi - lo) if hi != lo else 0.5
            frac = min(max(float(frac), 0.0), 1.0)
            straddles.append((idx, frac * dt))
    return BasePoint(
        current=i_b,
        trajectory=tuple(trajectory),
        start_index=start,
        minima_indices=tuple(int(k) for k in minima),
        maxima_indices=tuple(int(k) for k in maxima),
        wipe_straddles=tuple(straddles),
    )


def _time_to_index(t: float, dt: float, n: int) -> int:
    return int(round(t / dt)) % n


def _sensitivity_matrix(model: HysteresisModel, base: BasePoint) -> sparse.csr_matrix:
    """Rows map a perturbation waveform (sampled) to the flux derivative."""
    n = base.current.samples.size
    dt = base.current.sample_interval
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def add(row: int, t: float | None, coeff: float, live_col: int) -> None:
        col = live_col if t is None else _time_to_index(t, dt, n)
        rows.append(row)
        cols.append(col)
        vals.append(coeff)

    for idx, mem in enumerate(base.trajectory):
        if mem.beta_m_time is None or mem.alpha_m_time is None:
            raise ValueError("trajectory memories must carry extremum times")
        i_now = mem.current_value
        dc_di, dc_dbm, dc_dam = model.common_mode.partials(i_now, mem.beta_m, mem.alpha_m)
        add(idx, None, dc_di, idx)
        add(idx, mem.beta_m_time, dc_dbm, idx)
        add(idx, mem.alpha_m_time, dc_dam, idx)
        walk = mem._walk()
        for j, ((beta, alpha), eps, (t_b, t_a)) in enumerate(walk):
            factor = eps if j == 0 else 2.0 * eps
            add(idx, t_b, factor * model.shape.d_beta(beta, alpha), idx)
            add(idx, t_a, factor * model.shape.d_alpha(beta, alpha), idx)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def directional_derivative(
    model: HysteresisModel, base: BasePoint, w: PeriodicSignal
) -> PeriodicSignal:
    """Flux derivative along the perturbation direction ``w``, sampled in time.

    ``w`` must be sampled on the base grid.  At wipe-straddling intervals the
    returned samples are one-sided limits; harmonic projection splits those
    intervals (see :func:`linearize_preisach`).
    """
    if w.samples.size != base.current.samples.size:
        raise ValueError("perturbation direction must be sampled on the base grid")
    f = _sensitivity_matrix(model, base) @ w.samples
    return PeriodicSignal(f, base.current.sample_interval, base.current.period)


def _project_harmonics(
    f: npt.NDArray[np.float64],
    base: BasePoint,
    order: int,
) -> npt.NDArray[np.complex128]:
    """(2 - delta[n])/T * integral f(t) exp(-j n w t) dt with split cells.

    The base quadrature is the periodic trapezoid (here: the sample mean).
    Every interval that straddles a wipe instant is re-integrated as two
    one-sided rectangles split at the estimated crossing time.
    """
    n = f.size
    dt = 1.0 / n  # work in normalised time; the 1/T cancels
    t_norm = np.arange(n) * dt
    out = np.empty(order + 1, dtype=complex)
    for k in range(order + 1):
        phase = np.exp(-2j * np.pi * k * t_norm)
        total = np.mean(f * phase)
        for idx, offset in base.wipe_straddles:
            prev_idx = (idx - 1) % n
            frac = offset * n / base.current.period  # fraction of one interval
            g_prev = f[prev_idx] * phase[prev_idx]
            g_now = f[idx] * phase[idx]
            standard = 0.5 * dt * (g_prev + g_now)
            split = frac * dt * g_prev + (1.0 - frac) * dt * g_now
            total += split - standard
        out[k] = (1.0 if k == 0 else 2.0) * total
    return out


def linearize_preisach(
    model: HysteresisModel, base: BasePoint, order: int
) -> CouplingMatrixPair:
    """Flux coupling pair (P1, P2) of the operator about the base point.

    For every input harmonic m the two perturbation directions cos(m w t) and
    -sin(m w t) are pushed through the directional derivative and projected on
    the harmonic basis; the column pair combines them into the complex
    coupling matrices.
    """
    n = base.current.samples.size
    if n < 2 * (order + 1):
        raise ValueError(
            f"base sampling ({n}) violates the Nyquist guard for order {order}"
        )
    omega = base.omega
    t = base.current.times
    sens = _sensitivity_matrix(model, base)
    p1 = np.zeros((order + 1, order + 1), dtype=complex)
    p2 = np.zeros_like(p1)
    for m in range(order + 1):
        f_cos = sens @ np.cos(m * omega * t)
        d_cos = _project_harmonics(f_cos, base, order)
        if m == 0:
            p1[:, 0] = 0.5 * d_cos
            p2[:, 0] = 0.5 * d_cos
            continue
        f_sin = sens @ (-np.sin(m * omega * t))
        d_sin = _project_harmonics(f_sin, base, order)
        p1[:, m] = 0.5 * d_cos - 0.5j * d_sin
        p2[:, m] = 0.5 * d_cos + 0.5j * d_sin
    base_in = hps_forward(base.current, order)
    base_out = hps_forward(simulate(model, base.current), order)
    return CouplingMatrixPair(p1, p2, base_input=base_in, base_output=base_out)


def _inverse_integral_block(order: int, omega: float) -> npt.NDArray[np.float64]:
    """Real block form of the integral operator with the DC column excluded."""
    n = order + 1
    block = np.zeros((2 * n, 2 * n))
    for k in range(1, n):
        block[k, n + k] = 1.0 / (k * omega)  # flux_re from volt_im
        block[n + k, k] = -1.0 / (k * omega)  # flux_im from volt_re
    return block


def fcm_from_preisach(
    p_pair: CouplingMatrixPair,
    omega: float,
    dc_policy: str = "dc-excluded",
) -> CouplingMatrixPair:
    """Norton admittance pair from the flux coupling pair.

    Inverts the flux relation, then composes with the integral operator.  The
    DC-voltage column is unbounded (a periodic steady state admits no DC
    voltage across an inductive port) and is returned as zeros carrying the
    policy flag.  ``dc-excluded`` pins the DC flux perturbation to zero;
    ``dc-free-flux`` eliminates it by holding the DC current stationary.
    """
    if dc_policy not in DC_POLICIES:
        raise ValueError(f"unknown dc_policy {dc_policy!r}; choose from {DC_POLICIES}")
    order = p_pair.order
    f_pair = invert_fcm(p_pair)
    idx = _reduced_indices(order)
    f_block = split_real_imag(f_pair)
    d_block = _inverse_integral_block(order, omega)

    if dc_policy == "dc-free-flux":
        # Choose the free DC flux so the DC current does not move, then fold
        # that choice back into the map (a rank-one Schur elimination).
        f_red = f_block[np.ix_(idx, idx)]
        pivot = f_red[0, 0]
        if abs(pivot) < 1e-14 * max(1.0, float(np.max(np.abs(f_red)))):
            raise np.linalg.LinAlgError(
                "dc-free-flux elimination failed: DC current is insensitive to DC flux"
            )
        m_red = f_red - np.outer(f_red[:, 0], f_red[0, :]) / pivot
        f_eff = np.zeros_like(f_block)
        f_eff[np.ix_(idx, idx)] = m_red
        y_block = f_eff @ d_block
    else:
        y_block = f_block @ d_block

    y_pair = pack_pair_from_block(y_block)
    return CouplingMatrixPair(
        y_pair.y1,
        y_pair.y2,
        base_input=p_pair.base_output,
        base_output=p_pair.base_input,
        dc_voltage_column=f"{dc_policy}: DC-voltage column unbounded, reported as zero",
    )


def solve_base_from_voltage(
    model: HysteresisModel,
    v_base: HarmonicVector,
    order: int,
    max_iter: int = 30,
    tol: float = 1e-9,
    dc_policy: str = "dc-excluded",
    n_samples: int | None = None,
) -> BasePoint:
    """Newton iteration in harmonic space for the base current under a voltage.

    The target flux harmonics are the integrated voltage; the DC flux level is
    fixed by the policy (zero for ``dc-excluded``; for ``dc-free-flux`` it is
    eliminated against a zero-DC-current equation).  Each step simulates the
    operator, measures the harmonic residual, and updates through the current
    flux coupling pair.
    """
    if dc_policy not in DC_POLICIES:
        raise ValueError(f"unknown dc_policy {dc_policy!r}; choose from {DC_POLICIES}")
    omega = v_base.fundamental_frequency
    if n_samples is None:
        n_samples = max(512, 20 * (order + 1))
    op = DifferentialOperator(order, omega)
    v_coeffs = np.zeros(order + 1, dtype=complex)
    v_coeffs[: v_base.coefficients.size] = v_base.coefficients
    lam_target = op.integrate(HarmonicVector(v_coeffs, omega), dc_value=0.0)

    idx = _reduced_indices(order)

    def to_reduced(hv: npt.NDArray[np.complex128]) -> npt.NDArray[np.float64]:
        return np.concatenate([hv.real, hv.imag])[idx]

    def from_reduced(x: npt.NDArray[np.float64]) -> npt.NDArray[np.complex128]:
        full = np.zeros(2 * (order + 1))
        full[idx] = x
        n = order + 1
        return full[:n] + 1j * full[n:]

    # initial guess: linear inductor at the small-signal centre-line slope
    probe = 1e-3 * model.gamma_max
    slope = model.common_mode.partials(0.0, -probe, probe)[0]
    if not np.isfinite(slope) or slope <= 0:
        slope = 1.0
    x = to_reduced(lam_target.coefficients / slope)

    target_red = to_reduced(lam_target.coefficients)
    residuals: list[float] = []
    base: BasePoint | None = None
    for iteration in range(1, max_iter + 1):
        i_t = hps_inverse(HarmonicVector(from_reduced(x), omega), n_samples)
        base = validate_base(i_t)
        lam_t = simulate(model, i_t)
        lam_red = to_reduced(hps_forward(lam_t, order).coefficients)
        r = lam_red - target_red
        if dc_policy == "dc-free-flux":
            r[0] = x[0]  # demand zero DC current instead of pinned DC flux
        res_norm = float(np.max(np.abs(r)))
        residuals.append(res_norm)
        if res_norm < tol:
            return dataclasses.replace(
                base, solve_iterations=iteration, solve_residuals=tuple(residuals)
            )
        p_pair = linearize_preisach(model, base, order)
        jac = split_real_imag(p_pair)[np.ix_(idx, idx)]
        if dc_policy == "dc-free-flux":
            jac = jac.copy()
            jac[0, :] = 0.0
            jac[0, 0] = 1.0
        step = np.linalg.solve(jac, r)
        # damp steps that would leave the trained current range
        for _ in range(8):
            candidate = x - step
            i_peek = hps_inverse(HarmonicVector(from_reduced(candidate), omega), n_samples)
            if np.max(np.abs(i_peek.samples)) <= model.gamma_max:
                break
            step *= 0.5
        else:
            raise ValueError(
                "Newton update keeps exceeding the trained current range "
                f"+/-{model.gamma_max} A (drive too large for the model?)"
            )
        x = x - step
    raise RuntimeError(
        f"voltage solve did not converge in {max_iter} iterations; "
        f"residual history: {[f'{r:.3e}' for r in residuals]}"
    )
