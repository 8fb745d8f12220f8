import numpy as np
import pytest

from hystharm.surfaces import (
    Surface2D,
    assemble_surface,
    fit_branch_spline,
    surface_linear_combination,
)


def eval_row(row, zeta_knots, zeta):
    k = min(max(np.searchsorted(zeta_knots, zeta, side="right") - 1, 0), len(zeta_knots) - 2)
    return np.polyval(row[::-1, k], zeta - zeta_knots[k])


class TestBranchSplineFit:
    def test_cubic_polynomial_recovered_exactly(self):
        poly = lambda z: 0.3 - 1.2 * z + 0.7 * z**2 + 0.4 * z**3  # noqa: E731
        zeta = np.linspace(-1, 1, 400)
        knots = np.linspace(-1, 1, 21)
        fit = fit_branch_spline(zeta, poly(zeta), knots, (poly(-1), poly(1)))
        assert fit.residual < 1e-9
        assert fit.kkt_residual < 1e-9
        for z in np.linspace(-1, 1, 57):
            assert fit.value(z) == pytest.approx(poly(z), abs=1e-10)

    def test_straight_line_on_every_cell(self):
        zeta = np.linspace(-1, 1, 200)
        y = 2.0 * zeta - 0.5
        knots = np.linspace(-1, 1, 11)
        fit = fit_branch_spline(zeta, y, knots, (-2.5, 1.5))
        assert np.allclose(fit.coeffs[1], 2.0, atol=1e-9)
        assert np.allclose(fit.coeffs[2:], 0.0, atol=1e-9)

    def test_noisy_fit_beats_constrained_global_cubic(self):
        rng = np.random.default_rng(5)
        zeta = np.linspace(-1, 1, 500)
        truth = np.tanh(2.0 * zeta)
        y = truth + 0.01 * rng.standard_normal(zeta.size)
        knots = np.linspace(-1, 1, 16)
        end_lo, end_hi = y[0], y[-1]
        fit = fit_branch_spline(zeta, y, knots, (end_lo, end_hi))

        # best single cubic subject to the same terminal interpolation (KKT by hand)
        v = np.vander(zeta, 4, increasing=True)
        g = v.T @ v
        c = -(v.T @ y)
        a = np.vander(np.array([-1.0, 1.0]), 4, increasing=True)
        kkt = np.block([[2 * g, a.T], [a, np.zeros((2, 2))]])
        sol = np.linalg.solve(kkt, np.concatenate([-2 * c, [end_lo, end_hi]]))
        cubic_residual = np.linalg.norm(v @ sol[:4] - y)
        assert fit.residual <= cubic_residual + 1e-12

    def test_terminal_interpolation_exact(self):
        rng = np.random.default_rng(9)
        zeta = np.sort(rng.uniform(-1, 1, 300))
        y = np.sin(2 * zeta) + 0.02 * rng.standard_normal(300)
        knots = np.linspace(-1, 1, 13)
        fit = fit_branch_spline(zeta, y, knots, (0.111, -0.222))
        assert fit.value(-1.0) == pytest.approx(0.111, abs=1e-10)
        assert fit.value(1.0) == pytest.approx(-0.222, abs=1e-10)

    def test_c2_continuity_at_knots(self):
        rng = np.random.default_rng(21)
        zeta = np.linspace(-1, 1, 600)
        y = np.cos(3 * zeta) + 0.05 * rng.standard_normal(zeta.size)
        knots = np.linspace(-1, 1, 25)
        fit = fit_branch_spline(zeta, y, knots, (y[0], y[-1]))
        co = fit.coeffs
        for k in range(knots.size - 2):
            w = knots[k + 1] - knots[k]
            val_left = np.polyval(co[::-1, k], w)
            slope_left = np.polyval(np.polyder(co[::-1, k]), w)
            curv_left = np.polyval(np.polyder(co[::-1, k], 2), w)
            assert val_left == pytest.approx(co[0, k + 1], abs=1e-9)
            assert slope_left == pytest.approx(co[1, k + 1], abs=1e-9)
            assert curv_left == pytest.approx(2 * co[2, k + 1], abs=1e-9)

    def test_rank_deficiency_rejected(self):
        # two samples cannot pin down a 10-cell spline
        zeta = np.array([-0.5, 0.5])
        y = np.array([1.0, 2.0])
        knots = np.linspace(-1, 1, 11)
        with pytest.raises(np.linalg.LinAlgError):
            fit_branch_spline(zeta, y, knots, (0.0, 0.0))


def fitted_rows(fn, zeta_knots, gammas):
    """Fit one branch spline per amplitude from dense samples of fn(i, gamma)."""
    rows = [np.zeros((4, zeta_knots.size - 1))]
    zeta = np.linspace(-1, 1, 50 * (zeta_knots.size - 1))
    for g in gammas[1:]:
        y = fn(zeta * g, g)
        fit = fit_branch_spline(zeta, y, zeta_knots, (y[0], y[-1]))
        rows.append(fit.coeffs)
    return rows


class TestAssembleSurface:
    zeta_knots = np.linspace(-1, 1, 13)
    gamma_knots = np.array([0.0, 0.5, 1.0, 1.6, 2.2])

    def test_identical_rows_give_gamma_constant_surface(self):
        # identical curve at every tested amplitude: surface constant in gamma
        fn = lambda i, g: np.cos(0.8 * i / max(g, 1e-12)) - np.cos(0.8)  # noqa: E731
        rows = fitted_rows(fn, self.zeta_knots, self.gamma_knots)
        rows = [rows[1]] + rows[1:]  # replace the zero row to make all rows equal
        surf = assemble_surface(rows, self.zeta_knots, self.gamma_knots)
        for zeta in np.linspace(-1, 1, 9):
            vals = [surf.value(zeta, g) for g in np.linspace(0.0, 2.2, 15)]
            assert np.max(vals) - np.min(vals) < 1e-8

    def test_rows_linear_in_gamma_interpolated_exactly(self):
        fn = lambda i, g: g * (1.0 - (i / max(g, 1e-12)) ** 2)  # noqa: E731
        rows = fitted_rows(fn, self.zeta_knots, self.gamma_knots)
        surf = assemble_surface(rows, self.zeta_knots, self.gamma_knots)
        for zeta in np.linspace(-0.9, 0.9, 7):
            for g in np.linspace(0.1, 2.2, 11):
                assert surf.value(zeta, g) == pytest.approx(
                    g * (1 - zeta**2), abs=1e-7
                )

    def test_row_interpolation_at_knots(self):
        fn = lambda i, g: g**2 * (1.0 - (i / max(g, 1e-12)) ** 2) * (  # noqa: E731
            1.0 + 0.3 * np.sin(i)
        )
        rows = fitted_rows(fn, self.zeta_knots, self.gamma_knots)
        surf = assemble_surface(rows, self.zeta_knots, self.gamma_knots)
        for l, g in enumerate(self.gamma_knots):
            for zeta in np.linspace(-1, 1, 23):
                assert surf.value(zeta, float(g)) == pytest.approx(
                    eval_row(rows[l], self.zeta_knots, zeta), abs=1e-10
                )

    def test_c2_continuity_both_directions(self):
        fn = lambda i, g: g * np.exp(-((i / max(g, 1e-12)) ** 2)) * np.cos(i)  # noqa: E731
        rows = fitted_rows(fn, self.zeta_knots, self.gamma_knots)
        surf = assemble_surface(rows, self.zeta_knots, self.gamma_knots)
        eps = 1e-9
        derivs = [
            surf.value,
            surf.d_zeta,
            surf.d_gamma,
            surf.d2_zeta,
            surf.d2_gamma,
            surf.d2_zeta_gamma,
        ]
        for zk in self.zeta_knots[1:-1]:
            for fn_d in derivs:
                lo = fn_d(zk - eps, 1.3)
                hi = fn_d(zk + eps, 1.3)
                assert abs(hi - lo) < 1e-6 * max(1.0, abs(lo))
        for gk in self.gamma_knots[1:-1]:
            for fn_d in derivs:
                lo = fn_d(0.37, gk - eps)
                hi = fn_d(0.37, gk + eps)
                assert abs(hi - lo) < 1e-6 * max(1.0, abs(lo))

    def test_linear_combination(self):
        fn = lambda i, g: g * (1.0 - (i / max(g, 1e-12)) ** 2)  # noqa: E731
        rows = fitted_rows(fn, self.zeta_knots, self.gamma_knots)
        surf = assemble_surface(rows, self.zeta_knots, self.gamma_knots)
        half = surface_linear_combination(surf, surf, 0.75, -0.25)
        assert half.value(0.3, 1.1) == pytest.approx(0.5 * surf.value(0.3, 1.1))

    def test_coefficient_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            Surface2D(np.linspace(-1, 1, 5), np.linspace(0, 1, 3), np.zeros((4, 4, 3, 3)))
