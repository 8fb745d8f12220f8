import numpy as np
import pytest

from hystharm.hps import PeriodicSignal, hps_forward, hps_inverse
from hystharm.preisach import simulate
from hystharm.surfaces import Surface2D


def polynomial_surface(zeta_poly, gamma_poly, zeta_knots, gamma_knots):
    """Surface2D for a separable polynomial zeta_poly(z) * gamma_poly(g).

    Both factors are ascending-power coefficient sequences of degree <= 3, so
    the product is represented exactly on every cell.
    """
    zeta_knots = np.asarray(zeta_knots, dtype=float)
    gamma_knots = np.asarray(gamma_knots, dtype=float)
    zp = np.polynomial.Polynomial(zeta_poly)
    gp = np.polynomial.Polynomial(gamma_poly)
    coeffs = np.zeros((4, 4, zeta_knots.size - 1, gamma_knots.size - 1))
    for k, zk in enumerate(zeta_knots[:-1]):
        z_local = zp(np.polynomial.Polynomial([zk, 1.0])).coef
        for l, gl in enumerate(gamma_knots[:-1]):
            g_local = gp(np.polynomial.Polynomial([gl, 1.0])).coef
            for g, cz in enumerate(z_local):
                for h, cg in enumerate(g_local):
                    coeffs[g, h, k, l] = cz * cg
    return Surface2D(zeta_knots, gamma_knots, coeffs)


@pytest.fixture
def quadratic_lambda_s_surface():
    """lam_s = 2 k (gamma^2 - i^2) = 2 k gamma^2 (1 - zeta^2) with k = 1."""

    def build(k=1.0, zeta_cells=20, gamma_knots=(0.0, 0.4, 0.9, 1.5, 2.0)):
        return polynomial_surface(
            [2.0 * k, 0.0, -2.0 * k],
            [0.0, 0.0, 1.0],
            np.linspace(-1, 1, zeta_cells + 1),
            np.asarray(gamma_knots),
        )

    return build


def synthetic_recording(model, gamma, n_cycles=12, n_per=2000, period=0.02, rng=None,
                        noise_sigma=0.0, drift=0.0):
    """Multi-cycle (voltage, current) recording of a current-driven model.

    The terminal voltage is the central-difference time derivative of the
    simulated flux, so trapezoidal re-integration recovers the flux to O(dt^2).
    """
    dt = period / n_per
    t = np.arange(n_per) * dt
    current = PeriodicSignal(gamma * np.sin(2 * np.pi / period * t), dt, period)
    flux = simulate(model, current)
    lam = flux.samples
    v = (np.roll(lam, -1) - np.roll(lam, 1)) / (2 * dt)
    v_rec = np.tile(v, n_cycles)
    i_rec = np.tile(current.samples, n_cycles)
    lam_rec = np.tile(lam, n_cycles)
    t_rec = np.arange(n_per * n_cycles) * dt
    if drift:
        v_rec = v_rec + drift  # constant voltage bias integrates to a flux ramp
    if noise_sigma and rng is not None:
        v_rec = v_rec + noise_sigma * np.std(v) * rng.standard_normal(v_rec.size)
        i_rec = i_rec + noise_sigma * np.std(i_rec) * rng.standard_normal(i_rec.size)
    return v_rec, i_rec, lam_rec, t_rec, dt


def band_limited_signal(rng, order, n_samples, period, scale=1.0):
    coeffs = scale * (rng.standard_normal(order + 1) + 1j * rng.standard_normal(order + 1))
    coeffs[0] = coeffs[0].real
    from hystharm.hps import HarmonicVector

    return hps_inverse(HarmonicVector(coeffs, 2 * np.pi / period), n_samples)


def relative_flux_rms(flux_a, flux_b):
    scale = 0.5 * (np.max(flux_b) - np.min(flux_b))
    return float(np.sqrt(np.mean((flux_a - flux_b) ** 2)) / scale)
