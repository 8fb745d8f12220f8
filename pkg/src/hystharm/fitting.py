"""Identify a hysteresis model from symmetric major-loop test recordings.

The pipeline per test amplitude: integrate voltage to flux linkage, remove
drift, cycle-average, make the current exactly symmetric with a near-identity
quadratic map, split the loop into rising and dropping branches, and fit each
branch with a constrained cubic spline.  Across amplitudes the branch splines
join into bicubic surfaces whose half-difference and half-sum give the
differential and common-mode components.  The differential component is
apportioned between the two half planes of the shape surface by an odd
splitting weight ``m(i / gamma_m)``, chosen from feasibility measures so the
distributed relay weight stays non-negative wherever the data permits.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt

from .hps import PeriodicSignal
from .preisach import (
    AssembledCommonMode,
    CommonMode,
    Curve,
    DeviationSurface,
    HysteresisModel,
    ShapeFunction,
)
from .surfaces import BranchSplineFit, Surface2D, assemble_surface, fit_branch_spline
from .surfaces import surface_linear_combination

__all__ = [
    "LoopBranchData",
    "MeasureCurve",
    "FitReport",
    "clean_waveforms",
    "symmetrize_current",
    "split_major_loop",
    "diff_common_split",
    "condition3_residual",
    "lambda_s_from_shape",
    "m0_measure",
    "approximate_measures",
    "select_splitting",
    "splitting_weight",
    "build_shape_function",
    "build_common_mode",
    "fit_hysteresis_model",
    "SymmetricSurface",
    "SplineShape",
]

logger = logging.getLogger(__name__)

_TINY_GAMMA = 1e-12


# ---------------------------------------------------------------------------
# waveform preparation


def clean_waveforms(
    v_raw: npt.NDArray[np.float64],
    i_raw: npt.NDArray[np.float64],
    sample_interval: float,
    period: float,
) -> tuple[PeriodicSignal, PeriodicSignal]:
    """Reduce a multi-cycle recording to one period of current and flux.

    Voltage is integrated trapezoidally to equivalent flux linkage.  Linear
    drift is removed from both series by regressing the per-cycle extrema, so
    minima and maxima align across cycles.  Starting at the first current
    minimum, all following full cycles are averaged sample-wise.  The flux DC
    level is not observable from the terminal voltage; the averaged flux is
    returned zero-mean.
    """
    v_raw = np.asarray(v_raw, dtype=float)
    i_raw = np.asarray(i_raw, dtype=float)
    if v_raw.shape != i_raw.shape or v_raw.ndim != 1:
        raise ValueError("voltage and current must be 1-D arrays of equal length")
    n_per = int(round(period / sample_interval))
    if abs(n_per * sample_interval - period) > 1e-9 * period:
        raise ValueError("period must be an integer number of sample intervals")
    n_cycles = v_raw.size // n_per
    if n_cycles < 2:
        raise ValueError(
            f"recording holds {n_cycles} full cycle(s); at least 2 are required"
        )
    n_use = n_cycles * n_per
    t = np.arange(n_use) * sample_interval
    v = v_raw[:n_use]
    i = i_raw[:n_use].copy()

    flux = np.empty(n_use)
    flux[0] = 0.0
    np.cumsum(0.5 * (v[1:] + v[:-1]) * sample_interval, out=flux[1:])

    def remove_drift(x):
        cyc = x.reshape(n_cycles, n_per)
        tc = t.reshape(n_cycles, n_per)
        hi_idx = np.argmax(cyc, axis=1)
        lo_idx = np.argmin(cyc, axis=1)
        rows = np.arange(n_cycles)
        slope_hi = np.polyfit(tc[rows, hi_idx], cyc[rows, hi_idx], 1)[0]
        slope_lo = np.polyfit(tc[rows, lo_idx], cyc[rows, lo_idx], 1)[0]
        return x - 0.5 * (slope_hi + slope_lo) * t

    i = remove_drift(i)
    flux = remove_drift(flux)

    start = int(np.argmin(i[:n_per]))
    n_avg = (n_use - start) // n_per
    idx = start + np.arange(n_avg)[:, None] * n_per + np.arange(n_per)[None, :]
    i_avg = i[idx].mean(axis=0)
    flux_avg = flux[idx].mean(axis=0)
    flux_avg -= flux_avg.mean()
    return (
        PeriodicSignal(i_avg, sample_interval, period),
        PeriodicSignal(flux_avg, sample_interval, period),
    )


def symmetrize_current(
    current: PeriodicSignal,
) -> tuple[PeriodicSignal, tuple[float, float, float]]:
    """Apply the near-identity map f(i) = a i^2 + b i + c making the peaks match.

    The coefficients are chosen so min f(i) = -max f(i) and the DC component of
    f(i(t)) vanishes, with b pinned to 1 (the map must stay near the identity).
    Returns the mapped signal and (a, b, c) for audit.
    """
    x = current.samples
    i_min, i_max = float(np.min(x)), float(np.max(x))
    if i_max == i_min:
        raise ValueError("constant current cannot be symmetrised")
    mean_sq = float(np.mean(x**2))
    mean = float(np.mean(x))
    mat = np.array([[i_max**2 + i_min**2, 2.0], [mean_sq, 1.0]])
    rhs = np.array([-(i_max + i_min), -mean])
    det = np.linalg.det(mat)
    if abs(det) < 1e-14 * max(1.0, i_max**2 + i_min**2):
        logger.warning(
            "quadratic symmetrisation is degenerate; falling back to a pure offset"
        )
        a, b, c = 0.0, 1.0, -0.5 * (i_max + i_min)
    else:
        a, c = np.linalg.solve(mat, rhs)
        b = 1.0
        if np.min(2.0 * a * x + b) <= 0.0:
            logger.warning(
                "quadratic symmetrisation is not monotone over the data; "
                "falling back to a pure offset"
            )
            a, b, c = 0.0, 1.0, -0.5 * (i_max + i_min)
    mapped = a * x**2 + b * x + c
    return PeriodicSignal(mapped, current.sample_interval, current.period), (
        float(a),
        float(b),
        float(c),
    )


@dataclasses.dataclass(frozen=True)
class LoopBranchData:
    """One symmetric major loop split into rising and dropping branches."""

    test_index: int
    gamma_m: float
    rising_i: npt.NDArray[np.float64]
    rising_lambda: npt.NDArray[np.float64]
    dropping_i: npt.NDArray[np.float64]
    dropping_lambda: npt.NDArray[np.float64]
    closure_residual: float = 0.0

    def __post_init__(self) -> None:
        if self.gamma_m <= 0:
            raise ValueError("gamma_m must be positive")
        for name in ("rising_i", "rising_lambda", "dropping_i", "dropping_lambda"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.rising_i.shape != self.rising_lambda.shape:
            raise ValueError("rising arrays must match in length")
        if self.dropping_i.shape != self.dropping_lambda.shape:
            raise ValueError("dropping arrays must match in length")


def split_major_loop(
    current: PeriodicSignal, flux: PeriodicSignal, test_index: int = 0
) -> LoopBranchData:
    """Split one period into the rising and dropping branch point sets.

    Expects the period to start at the global current minimum (the cleaning
    step arranges this).  Ties in the global extrema are rejected since the
    branch reindexing by current is then ambiguous.
    """
    x = current.samples
    lam = flux.samples
    i_min, i_max = float(np.min(x)), float(np.max(x))
    min_locs = np.flatnonzero(x == i_min)
    max_locs = np.flatnonzero(x == i_max)
    if min_locs.size > 1 or max_locs.size > 1:
        raise ValueError(
            f"multiple equal global extrema (minima at {min_locs.tolist()}, "
            f"maxima at {max_locs.tolist()}); branches are ambiguous"
        )
    start = int(min_locs[0])
    if start != 0:
        x = np.roll(x, -start)
        lam = np.roll(lam, -start)
    top = int(np.argmax(x))
    rising_i = x[: top + 1]
    rising_lam = lam[: top + 1]
    dropping_i = np.concatenate([x[top:], x[:1]])
    dropping_lam = np.concatenate([lam[top:], lam[:1]])
    if np.any(np.diff(rising_i) < 0) or np.any(np.diff(dropping_i) > 0):
        logger.warning("branch samples are not monotone in current (noisy data?)")
    closure = abs(rising_lam[0] - dropping_lam[-1]) + abs(rising_lam[-1] - dropping_lam[0])
    gamma_m = max(abs(i_min), abs(i_max))
    return LoopBranchData(
        test_index=test_index,
        gamma_m=gamma_m,
        rising_i=rising_i,
        rising_lambda=rising_lam,
        dropping_i=dropping_i,
        dropping_lambda=dropping_lam,
        closure_residual=float(closure),
    )


# ---------------------------------------------------------------------------
# surfaces in physical-current coordinates


class SymmetricSurface:
    """A (zeta, gamma) surface queried in physical coordinates (i, gamma)."""

    def __init__(self, surface: Surface2D) -> None:
        self.surface = surface

    def _zeta(self, i: float, gamma: float) -> float:
        return min(max(i / gamma, -1.0), 1.0)

    def value(self, i: float, gamma: float) -> float:
        if gamma <= _TINY_GAMMA:
            return 0.0
        return self.surface.value(self._zeta(i, gamma), gamma)

    def d_i(self, i: float, gamma: float) -> float:
        if gamma <= _TINY_GAMMA:
            return 0.0
        return self.surface.d_zeta(self._zeta(i, gamma), gamma) / gamma

    def d_gamma_total(self, i: float, gamma: float) -> float:
        """d/dgamma at fixed physical current i."""
        if gamma <= _TINY_GAMMA:
            return 0.0
        z = self._zeta(i, gamma)
        return -(z / gamma) * self.surface.d_zeta(z, gamma) + self.surface.d_gamma(z, gamma)

    def d2_i_gamma(self, i: float, gamma: float) -> float:
        if gamma <= _TINY_GAMMA:
            return 0.0
        z = self._zeta(i, gamma)
        s_zg = self.surface.d2_zeta_gamma(z, gamma)
        s_zz = self.surface.d2_zeta(z, gamma)
        s_z = self.surface.d_zeta(z, gamma)
        return (s_zg - (z * s_zz + s_z) / gamma) / gamma

    def even_part(self, i: float, gamma: float) -> float:
        return 0.5 * (self.value(i, gamma) + self.value(-i, gamma))

    def odd_part(self, i: float, gamma: float) -> float:
        return 0.5 * (self.value(i, gamma) - self.value(-i, gamma))


def diff_common_split(
    lambda_r: Surface2D, lambda_d: Surface2D
) -> tuple[Surface2D, Surface2D]:
    """Half-difference and half-sum of the branch surfaces, coefficient-wise."""
    lam_s = surface_linear_combination(lambda_d, lambda_r, 0.5, -0.5)
    lam_c = surface_linear_combination(lambda_d, lambda_r, 0.5, 0.5)
    return lam_s, lam_c


# ---------------------------------------------------------------------------
# congruency and feasibility diagnostics


def condition3_residual(
    lambda_s3: Callable[[float, float, float], float],
    quadruples: npt.NDArray[np.float64],
) -> npt.NDArray[np.float64]:
    """Congruency residual of a three-argument differential component.

    For each ordered quadruple g1 <= g2 <= g3 <= g4 evaluates

        lam_s(g2, g1, g3) - lam_s(g2, g1, g4) + lam_s(g3, g1, g4) - lam_s(g3, g2, g4)

    which vanishes identically when lam_s derives from any shape surface.
    """
    quadruples = np.atleast_2d(np.asarray(quadruples, dtype=float))
    if quadruples.shape[1] != 4:
        raise ValueError("quadruples must have four columns")
    if np.any(np.diff(quadruples, axis=1) < 0):
        raise ValueError("each quadruple must be ordered g1 <= g2 <= g3 <= g4")
    out = np.empty(quadruples.shape[0])
    for n, (g1, g2, g3, g4) in enumerate(quadruples):
        out[n] = (
            lambda_s3(g2, g1, g3)
            - lambda_s3(g2, g1, g4)
            + lambda_s3(g3, g1, g4)
            - lambda_s3(g3, g2, g4)
        )
    return out


def lambda_s_from_shape(shape: ShapeFunction) -> Callable[[float, float, float], float]:
    """Differential component generated by a shape surface (identity check)."""

    def lam_s(i: float, beta_m: float, alpha_m: float) -> float:
        return shape.value(beta_m, i) + shape.value(i, alpha_m) - shape.value(beta_m, alpha_m)

    return lam_s


@dataclasses.dataclass(frozen=True)
class MeasureCurve:
    """A feasibility or bounding measure sampled over its abscissa."""

    abscissa: npt.NDArray[np.float64]
    values: npt.NDArray[np.float64]
    label: str
    skipped: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "abscissa", np.asarray(self.abscissa, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def _abs_quadratic_integral(p0: float, p1: float, p2: float, width: float) -> float:
    """Exact integral of |p0 + p1 x + p2 x^2| over [0, width]."""

    def antideriv(x):
        return p0 * x + 0.5 * p1 * x**2 + p2 * x**3 / 3.0

    cuts = [0.0, width]
    if p2 != 0.0:
        disc = p1 * p1 - 4.0 * p2 * p0
        if disc > 0.0:
            sq = np.sqrt(disc)
            for r in ((-p1 - sq) / (2 * p2), (-p1 + sq) / (2 * p2)):
                if 0.0 < r < width:
                    cuts.append(float(r))
    elif p1 != 0.0:
        r = -p0 / p1
        if 0.0 < r < width:
            cuts.append(float(r))
    cuts = sorted(set(cuts))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        sign = 1.0 if (p0 + p1 * mid + p2 * mid**2) >= 0.0 else -1.0
        total += sign * (antideriv(b) - antideriv(a))
    return total


def m0_measure(
    lambda_s: Surface2D, gamma_samples: npt.NDArray[np.float64]
) -> MeasureCurve:
    """Feasibility measure of the internal-minor-loops condition.

        m0(g) = -1/2 integral_{-g}^{g} |d2 lam_s / di dgamma| dbeta
                - d lam_se / di (g, g)

    Negative values mean no splitting choice can keep the relay weight
    non-negative.  The absolute value is handled exactly: per spline cell the
    mixed partial is quadratic in zeta, so its zero crossings are inserted as
    extra integration cuts and each piece is integrated in closed form.
    """
    gamma_samples = np.asarray(gamma_samples, dtype=float)
    zk = lambda_s.zeta_knots
    gk = lambda_s.gamma_knots
    sym = SymmetricSurface(lambda_s)
    values = np.zeros_like(gamma_samples)
    for n, gamma in enumerate(gamma_samples):
        if gamma <= _TINY_GAMMA:
            values[n] = 0.0
            continue
        l = min(max(int(np.searchsorted(gk, gamma, side="right") - 1), 0), gk.size - 2)
        dg = gamma - gk[l]
        dg_pow = dg ** np.arange(4)
        h_idx = np.arange(4)
        total = 0.0
        for k in range(zk.size - 1):
            a_cell = lambda_s.coeffs[:, :, k, l]
            a1 = float(a_cell[1] @ dg_pow)
            a2 = float(a_cell[2] @ dg_pow)
            a3 = float(a_cell[3] @ dg_pow)
            dpow = np.concatenate([[0.0], dg ** np.arange(3)]) * h_idx
            a1g = float(a_cell[1] @ dpow)
            a2g = float(a_cell[2] @ dpow)
            a3g = float(a_cell[3] @ dpow)
            zk0 = zk[k]
            p0 = (a1g - (2 * a2 * zk0 + a1) / gamma) / gamma
            p1 = (2 * a2g - (2 * a2 + 6 * a3 * zk0 + 2 * a2) / gamma) / gamma
            p2 = (3 * a3g - 9 * a3 / gamma) / gamma
            total += _abs_quadratic_integral(p0, p1, p2, float(zk[k + 1] - zk[k]))
        dse_di = 0.5 * (sym.d_i(gamma, gamma) - sym.d_i(-gamma, gamma))
        values[n] = -0.5 * gamma * total - dse_di
    return MeasureCurve(gamma_samples, values, "m0")


def approximate_measures(
    lambda_s: Surface2D,
    zeta_grid: npt.NDArray[np.float64],
    gamma_grid: npt.NDArray[np.float64],
    denom_floor: float = 1e-12,
) -> tuple[MeasureCurve, MeasureCurve, MeasureCurve]:
    """Lower bounds m1, m2, m3 on the splitting weight, maximised over gamma.

    Samples where the even differential component (or the shifted variants in
    m2/m3) fall below ``denom_floor`` are excluded and counted as skipped
    rather than producing infinities.
    """
    zeta_grid = np.asarray(zeta_grid, dtype=float)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    sym = SymmetricSurface(lambda_s)
    m1 = np.zeros_like(zeta_grid)
    m2 = np.zeros_like(zeta_grid)
    m3 = np.zeros_like(zeta_grid)
    skipped = [0, 0, 0]
    for nz, zeta in enumerate(zeta_grid):
        for gamma in gamma_grid:
            if gamma <= _TINY_GAMMA:
                continue
            i = zeta * gamma
            se = sym.even_part(i, gamma)
            so = sym.odd_part(i, gamma)
            big_se = se + sym.value(0.0, abs(i)) - sym.value(0.0, gamma)
            if se > denom_floor:
                m1[nz] = max(m1[nz], abs(so) / se)
            else:
                skipped[0] += 1
            if se - so > denom_floor:
                m2[nz] = max(m2[nz], abs(big_se - so) / (se - so))
            else:
                skipped[1] += 1
            if se + so > denom_floor:
                m3[nz] = max(m3[nz], abs(big_se + so) / (se + so))
            else:
                skipped[2] += 1
    return (
        MeasureCurve(zeta_grid, m1, "m1", skipped[0]),
        MeasureCurve(zeta_grid, m2, "m2", skipped[1]),
        MeasureCurve(zeta_grid, m3, "m3", skipped[2]),
    )


def _mhat_denominator(a: float) -> float:
    return 1.0 - a * np.exp(-a) - np.exp(-a)


def mhat(zeta, a: float):
    """Splitting weight template on [0, 1]: 0 at 0, 1 at 1, flat at 1."""
    return (1.0 - a * zeta * np.exp(-a) - np.exp(-a * zeta)) / _mhat_denominator(a)


def mhat_prime(zeta, a: float):
    return a * (np.exp(-a * zeta) - np.exp(-a)) / _mhat_denominator(a)


def mhat_second(zeta, a: float):
    return -(a**2) * np.exp(-a * zeta) / _mhat_denominator(a)


def splitting_weight(zeta: float, a: float) -> tuple[float, float, float]:
    """Odd extension of the template: (m, m', m'') at signed zeta."""
    if zeta >= 0.0:
        return float(mhat(zeta, a)), float(mhat_prime(zeta, a)), float(mhat_second(zeta, a))
    return (
        -float(mhat(-zeta, a)),
        float(mhat_prime(-zeta, a)),
        -float(mhat_second(-zeta, a)),
    )


def select_splitting(
    measures: Sequence[MeasureCurve],
    a_candidates: Sequence[float] = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0),
    slack: float = 1e-12,
) -> tuple[float, MeasureCurve]:
    """Smallest candidate a whose template dominates every measure curve.

    Raises when a measure exceeds 1 (no feasible splitting exists at all) or
    when no candidate dominates, reporting the worst violation.
    """
    zeta = measures[0].abscissa
    bound = np.zeros_like(zeta)
    for m in measures:
        if not np.array_equal(m.abscissa, zeta):
            raise ValueError("measure curves must share an abscissa grid")
        worst = float(np.max(m.values)) if m.values.size else 0.0
        if worst > 1.0 + 1e-9:
            raise ValueError(
                f"measure {m.label} exceeds 1 (max {worst:.6f}); "
                f"violating margin {worst - 1.0:.3e}, no feasible splitting"
            )
        bound = np.maximum(bound, m.values)
    best_violation = np.inf
    for a in sorted(a_candidates):
        violation = float(np.max(bound - mhat(zeta, a)))
        if violation <= slack:
            return float(a), MeasureCurve(zeta, np.asarray(mhat(zeta, a)), f"mhat(a={a:g})")
        best_violation = min(best_violation, violation)
    raise ValueError(
        f"no candidate splitting parameter dominates the measures; "
        f"smallest violation {best_violation:.3e}"
    )


# ---------------------------------------------------------------------------
# model construction


class SplineShape(ShapeFunction):
    """Shape surface built from the fitted differential component.

    The two half planes on either side of the anti-diagonal carry
    ``(1 +/- m) lam_s / 2`` with the odd splitting weight; first partials are
    continuous across the seam by construction of the weight template.
    """

    def __init__(self, lambda_s: Surface2D, a: float) -> None:
        self.sym = SymmetricSurface(lambda_s)
        self.a = float(a)
        self.gamma_max = lambda_s.gamma_max

    def _upper(self, beta: float, alpha: float) -> bool:
        return -beta <= alpha

    def value(self, beta, alpha):
        if self._upper(beta, alpha):
            if alpha <= _TINY_GAMMA:
                return 0.0
            m, _, _ = splitting_weight(beta / alpha, self.a)
            return 0.5 * (1.0 + m) * self.sym.value(beta, alpha)
        g = -beta
        if g <= _TINY_GAMMA:
            return 0.0
        m, _, _ = splitting_weight(alpha / g, self.a)
        return 0.5 * (1.0 - m) * self.sym.value(alpha, g)

    def d_beta(self, beta, alpha):
        if self._upper(beta, alpha):
            if alpha <= _TINY_GAMMA:
                return 0.0
            m, mp, _ = splitting_weight(beta / alpha, self.a)
            lam = self.sym.value(beta, alpha)
            return 0.5 * (mp / alpha * lam + (1.0 + m) * self.sym.d_i(beta, alpha))
        g = -beta
        if g <= _TINY_GAMMA:
            return 0.0
        m, mp, _ = splitting_weight(alpha / g, self.a)
        lam = self.sym.value(alpha, g)
        return 0.5 * (
            -mp * (alpha / beta**2) * lam - (1.0 - m) * self.sym.d_gamma_total(alpha, g)
        )

    def d_alpha(self, beta, alpha):
        if self._upper(beta, alpha):
            if alpha <= _TINY_GAMMA:
                return 0.0
            m, mp, _ = splitting_weight(beta / alpha, self.a)
            lam = self.sym.value(beta, alpha)
            return 0.5 * (
                -mp * (beta / alpha**2) * lam + (1.0 + m) * self.sym.d_gamma_total(beta, alpha)
            )
        g = -beta
        if g <= _TINY_GAMMA:
            return 0.0
        m, mp, _ = splitting_weight(alpha / g, self.a)
        lam = self.sym.value(alpha, g)
        return 0.5 * (-mp / g * lam + (1.0 - m) * self.sym.d_i(alpha, g))

    def d2_beta_alpha(self, beta, alpha):
        if self._upper(beta, alpha):
            if alpha <= _TINY_GAMMA:
                return 0.0
            z = beta / alpha
            m, mp, mpp = splitting_weight(z, self.a)
            lam = self.sym.value(beta, alpha)
            lam_i = self.sym.d_i(beta, alpha)
            lam_g = self.sym.d_gamma_total(beta, alpha)
            lam_ig = self.sym.d2_i_gamma(beta, alpha)
            return 0.5 * (
                mpp * (-beta / alpha**2) * lam / alpha
                - mp * lam / alpha**2
                + mp / alpha * lam_g
                + mp * (-beta / alpha**2) * lam_i
                + (1.0 + m) * lam_ig
            )
        g = -beta
        if g <= _TINY_GAMMA:
            return 0.0
        z = alpha / g
        m, mp, mpp = splitting_weight(z, self.a)
        lam = self.sym.value(alpha, g)
        lam_i = self.sym.d_i(alpha, g)
        lam_g = self.sym.d_gamma_total(alpha, g)
        lam_ig = self.sym.d2_i_gamma(alpha, g)
        return 0.5 * (
            mpp / beta * (alpha / beta**2) * lam
            - mp * lam / beta**2
            - mp * (alpha / beta**2) * lam_i
            - mp / beta * lam_g
            - (1.0 - m) * lam_ig
        )


def build_shape_function(lambda_s: Surface2D, a: float) -> SplineShape:
    """Shape surface from the differential component and a splitting parameter."""
    return SplineShape(lambda_s, a)


class CenterLineCurve(Curve):
    """Odd part of the common mode at the largest tested amplitude."""

    def __init__(self, lambda_c: Surface2D) -> None:
        self.surface = lambda_c
        self.gamma_max = lambda_c.gamma_max

    def _zeta(self, i: float) -> float:
        return min(max(i / self.gamma_max, -1.0), 1.0)

    def value(self, i):
        z = self._zeta(i)
        g = self.gamma_max
        return 0.5 * (self.surface.value(z, g) - self.surface.value(-z, g))

    def derivative(self, i):
        z = self._zeta(i)
        g = self.gamma_max
        return 0.5 * (self.surface.d_zeta(z, g) + self.surface.d_zeta(-z, g)) / g


class SplineDeviation(DeviationSurface):
    """Common mode minus the centre line, in (offset, half-range) arguments."""

    def __init__(self, lambda_c: Surface2D, center: CenterLineCurve) -> None:
        self.sym = SymmetricSurface(lambda_c)
        self.center = center

    def value(self, u, g):
        if g <= _TINY_GAMMA:
            return 0.0
        return self.sym.value(u, g) - self.center.value(u)

    def d_u(self, u, g):
        if g <= _TINY_GAMMA:
            return 0.0
        return self.sym.d_i(u, g) - self.center.derivative(u)

    def d_g(self, u, g):
        if g <= _TINY_GAMMA:
            return 0.0
        return self.sym.d_gamma_total(u, g)


def build_common_mode(
    lambda_c: Surface2D, shape: ShapeFunction
) -> tuple[CommonMode, CenterLineCurve, SplineDeviation]:
    """Common-mode model: centre line, deviation surface, and shape correction."""
    center = CenterLineCurve(lambda_c)
    deviation = SplineDeviation(lambda_c, center)
    return AssembledCommonMode(center, deviation, shape), center, deviation


# ---------------------------------------------------------------------------
# end-to-end fit


@dataclasses.dataclass
class FitReport:
    """Numbers worth keeping from a fit run."""

    gamma_values: list[float]
    rising_residuals: list[float]
    dropping_residuals: list[float]
    kkt_residuals: list[float]
    closure_residuals: list[float]
    symmetrize_coeffs: list[tuple[float, float, float]]
    selected_a: float | None = None
    measure_maxima: dict[str, float] = dataclasses.field(default_factory=dict)
    measure_skipped: dict[str, int] = dataclasses.field(default_factory=dict)
    m0_min: float | None = None
    warnings: list[str] = dataclasses.field(default_factory=list)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class FittedSurfaces:
    lambda_r: Surface2D
    lambda_d: Surface2D
    lambda_s: Surface2D
    lambda_c: Surface2D


def fit_hysteresis_model(
    branches: Sequence[LoopBranchData],
    n_zeta_cells: int = 300,
    a_candidates: Sequence[float] = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0),
    n_measure_zeta: int = 200,
    n_measure_gamma: int = 200,
) -> tuple[HysteresisModel, FittedSurfaces, FitReport]:
    """Branch data at several amplitudes to a full hysteresis model.

    Runs: per-amplitude constrained branch fits, surface assembly, the
    differential/common split, feasibility and bounding measures, splitting
    parameter selection, and shape plus common-mode construction.
    """
    branches = sorted(branches, key=lambda b: b.gamma_m)
    if len(branches) == 1:
        logger.warning("single-amplitude dataset: the surface has one amplitude cell")
    gammas = [b.gamma_m for b in branches]
    if np.any(np.diff(gammas) <= 0):
        raise ValueError("test amplitudes must be distinct")
    zeta_knots = np.linspace(-1.0, 1.0, n_zeta_cells + 1)
    gamma_knots = np.concatenate([[0.0], gammas])

    rising_rows = [np.zeros((4, n_zeta_cells))]
    dropping_rows = [np.zeros((4, n_zeta_cells))]
    report = FitReport([], [], [], [], [], [])
    for b in branches:
        lam_bottom = float(b.rising_lambda[0])
        lam_top = float(b.rising_lambda[-1])
        fit_r = fit_branch_spline(
            b.rising_i / b.gamma_m, b.rising_lambda, zeta_knots, (lam_bottom, lam_top)
        )
        fit_d = fit_branch_spline(
            b.dropping_i / b.gamma_m, b.dropping_lambda, zeta_knots, (lam_bottom, lam_top)
        )
        rising_rows.append(fit_r.coeffs)
        dropping_rows.append(fit_d.coeffs)
        report.gamma_values.append(b.gamma_m)
        report.rising_residuals.append(fit_r.residual)
        report.dropping_residuals.append(fit_d.residual)
        report.kkt_residuals.append(max(fit_r.kkt_residual, fit_d.kkt_residual))
        report.closure_residuals.append(b.closure_residual)

    lambda_r = assemble_surface(rising_rows, zeta_knots, gamma_knots)
    lambda_d = assemble_surface(dropping_rows, zeta_knots, gamma_knots)
    lambda_s, lambda_c = diff_common_split(lambda_r, lambda_d)

    gamma_max = float(gamma_knots[-1])
    gamma_probe = np.linspace(gamma_max / n_measure_gamma, gamma_max, n_measure_gamma)
    m0 = m0_measure(lambda_s, gamma_probe)
    report.m0_min = float(np.min(m0.values))
    if report.m0_min < 0:
        report.warnings.append(
            f"m0 dips to {report.m0_min:.3e}: the internal-minor-loops condition "
            "cannot hold everywhere for this data"
        )

    zeta_probe = np.linspace(0.0, 1.0, n_measure_zeta)
    measures = approximate_measures(lambda_s, zeta_probe, gamma_probe)
    for m in measures:
        report.measure_maxima[m.label] = float(np.max(m.values))
        report.measure_skipped[m.label] = m.skipped
    a, _ = select_splitting(measures, a_candidates)
    report.selected_a = a

    shape = build_shape_function(lambda_s, a)
    common, _, _ = build_common_mode(lambda_c, shape)
    model = HysteresisModel(
        shape=shape, common_mode=common, gamma_max=gamma_max, splitting_a=a
    )
    surfaces = FittedSurfaces(lambda_r, lambda_d, lambda_s, lambda_c)
    return model, surfaces, report
