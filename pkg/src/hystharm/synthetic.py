"""Closed-form model components for tests, demos, and benchmark targets."""

from __future__ import annotations

import numpy as np

from .preisach import (
    AssembledCommonMode,
    CommonMode,
    Curve,
    DeviationSurface,
    HysteresisModel,
    ShapeFunction,
    ZeroCommonMode,
)

__all__ = [
    "ZeroShape",
    "QuadraticShape",
    "ZeroCurve",
    "LinearCurve",
    "TanhSaturationCurve",
    "QuadraticDeviation",
    "quadratic_model",
    "center_line_model",
    "transformer_like_model",
]


class ZeroShape(ShapeFunction):
    def __init__(self, gamma_max: float) -> None:
        self.gamma_max = gamma_max

    def value(self, beta, alpha):
        return 0.0

    def d_beta(self, beta, alpha):
        return 0.0

    def d_alpha(self, beta, alpha):
        return 0.0

    def d2_beta_alpha(self, beta, alpha):
        return 0.0


class QuadraticShape(ShapeFunction):
    """h = k (alpha - beta) (2 L - (alpha - beta)); constant weight mu = 2k."""

    def __init__(self, k: float, length: float, gamma_max: float) -> None:
        self.k = k
        self.length = length
        self.gamma_max = gamma_max

    def value(self, beta, alpha):
        u = alpha - beta
        return self.k * u * (2.0 * self.length - u)

    def d_beta(self, beta, alpha):
        u = alpha - beta
        return -self.k * (2.0 * self.length - 2.0 * u)

    def d_alpha(self, beta, alpha):
        u = alpha - beta
        return self.k * (2.0 * self.length - 2.0 * u)

    def d2_beta_alpha(self, beta, alpha):
        return 2.0 * self.k


class ZeroCurve(Curve):
    def value(self, x):
        return 0.0

    def derivative(self, x):
        return 0.0


class LinearCurve(Curve):
    def __init__(self, slope: float) -> None:
        self.slope = slope

    def value(self, x):
        return self.slope * x

    def derivative(self, x):
        return self.slope


class PolynomialCurve(Curve):
    """Ascending-power polynomial curve; band-limited along sinusoidal drives."""

    def __init__(self, coeffs) -> None:
        self.poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
        self.dpoly = self.poly.deriv()

    def value(self, x):
        return self.poly(x)

    def derivative(self, x):
        return self.dpoly(x)


class TanhSaturationCurve(Curve):
    """Saturating centre line lam_sat tanh(i / i_knee) + l_air i."""

    def __init__(self, lambda_sat: float, i_knee: float, l_air: float = 0.0) -> None:
        self.lambda_sat = lambda_sat
        self.i_knee = i_knee
        self.l_air = l_air

    def value(self, x):
        return self.lambda_sat * np.tanh(x / self.i_knee) + self.l_air * x

    def derivative(self, x):
        return self.lambda_sat / (self.i_knee * np.cosh(x / self.i_knee) ** 2) + self.l_air


class QuadraticDeviation(DeviationSurface):
    """Smooth even deviation c2 * u^2 * g / g_ref, zero at zero half-range."""

    def __init__(self, c2: float, g_ref: float) -> None:
        self.c2 = c2
        self.g_ref = g_ref

    def value(self, u, g):
        return self.c2 * u * u * g / self.g_ref

    def d_u(self, u, g):
        return 2.0 * self.c2 * u * g / self.g_ref

    def d_g(self, u, g):
        return self.c2 * u * u / self.g_ref


def quadratic_model(
    k: float = 1.0,
    length: float = 10.0,
    gamma_max: float = 1.0,
    common_mode: CommonMode | None = None,
) -> HysteresisModel:
    """Pure quadratic-shape model; common mode defaults to zero."""
    return HysteresisModel(
        shape=QuadraticShape(k, length, gamma_max),
        common_mode=common_mode if common_mode is not None else ZeroCommonMode(),
        gamma_max=gamma_max,
    )


def center_line_model(center_line: Curve, gamma_max: float) -> HysteresisModel:
    """Saturation-only model: zero shape, flux follows the centre line."""
    shape = ZeroShape(gamma_max)
    return HysteresisModel(
        shape=shape,
        common_mode=AssembledCommonMode(center_line, None, shape),
        gamma_max=gamma_max,
    )


def transformer_like_model(
    lambda_sat: float = 1.0,
    i_knee: float = 0.5,
    l_air: float = 0.08,
    k: float = 0.002,
    length: float = 10.0,
    gamma_max: float = 3.0,
    deviation_c2: float = 0.0,
) -> HysteresisModel:
    """Saturating centre line with a constant-weight loop on top.

    The positive loop weight (mu = 2k > 0) keeps minor loops internal, and the
    centre line dominates so flux is strictly increasing in current along every
    branch, which makes the model invertible and voltage-drivable.  Strict
    monotonicity needs the slope floor ``l_air > 4 k gamma_max`` because the
    loop term can pull the branch slope down by that much in deep saturation.
    """
    shape = QuadraticShape(k, length, gamma_max)
    center = TanhSaturationCurve(lambda_sat, i_knee, l_air)
    deviation = (
        QuadraticDeviation(deviation_c2, gamma_max) if deviation_c2 else None
    )
    return HysteresisModel(
        shape=shape,
        common_mode=AssembledCommonMode(center, deviation, shape),
        gamma_max=gamma_max,
        splitting_a=None,
    )
