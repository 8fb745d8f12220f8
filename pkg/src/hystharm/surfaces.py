"""Constrained cubic-spline surfaces over (zeta, gamma) coordinates.

Branch flux curves are fitted per test amplitude as 1-D cubic splines in the
normalised current ``zeta = i / gamma_m`` on [-1, 1], then joined across the
amplitude axis into a single bicubic surface.  Both solves are
equality-constrained least squares handled exactly through their KKT linear
systems: continuity conditions and terminal interpolation are equalities, so
no iterative QP machinery is needed and results are deterministic.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.interpolate import BSpline, CubicSpline, PPoly
from scipy.sparse.linalg import splu

__all__ = [
    "Surface2D",
    "BranchSplineFit",
    "fit_branch_spline",
    "assemble_surface",
    "surface_linear_combination",
]

logger = logging.getLogger(__name__)

_GAUSS4 = np.polynomial.legendre.leggauss(4)


def _cell_index(knots: npt.NDArray[np.float64], x: float) -> int:
    k = int(np.searchsorted(knots, x, side="right") - 1)
    return min(max(k, 0), knots.size - 2)


@dataclasses.dataclass(frozen=True)
class Surface2D:
    """Piecewise-bicubic surface with C2 continuity across both knot families.

    ``coeffs[g, h, k, l]`` multiplies ``(zeta - zeta_k)**g (gamma - gamma_l)**h``
    on cell (k, l); powers are ascending.
    """

    zeta_knots: npt.NDArray[np.float64]
    gamma_knots: npt.NDArray[np.float64]
    coeffs: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        zk = np.asarray(self.zeta_knots, dtype=float)
        gk = np.asarray(self.gamma_knots, dtype=float)
        cf = np.asarray(self.coeffs, dtype=float)
        if zk.ndim != 1 or gk.ndim != 1 or zk.size < 2 or gk.size < 2:
            raise ValueError("knot vectors must be 1-D with at least two entries")
        if np.any(np.diff(zk) <= 0) or np.any(np.diff(gk) <= 0):
            raise ValueError("knot vectors must be strictly increasing")
        if cf.shape != (4, 4, zk.size - 1, gk.size - 1):
            raise ValueError(
                f"coefficient tensor shape {cf.shape} does not match knots "
                f"(expected (4, 4, {zk.size - 1}, {gk.size - 1}))"
            )
        object.__setattr__(self, "zeta_knots", zk)
        object.__setattr__(self, "gamma_knots", gk)
        object.__setattr__(self, "coeffs", cf)

    @property
    def gamma_max(self) -> float:
        return float(self.gamma_knots[-1])

    def _local(self, zeta: float, gamma: float):
        k = _cell_index(self.zeta_knots, zeta)
        l = _cell_index(self.gamma_knots, gamma)
        return k, l, zeta - self.zeta_knots[k], gamma - self.gamma_knots[l]

    def _eval(self, zeta: float, gamma: float, dz_order: int, dg_order: int) -> float:
        k, l, dz, dg = self._local(zeta, gamma)
        total = 0.0
        for g in range(dz_order, 4):
            fz = 1.0
            for r in range(dz_order):
                fz *= g - r
            zpow = dz ** (g - dz_order)
            for h in range(dg_order, 4):
                fg = 1.0
                for r in range(dg_order):
                    fg *= h - r
                total += self.coeffs[g, h, k, l] * fz * fg * zpow * dg ** (h - dg_order)
        return total

    def value(self, zeta: float, gamma: float) -> float:
        return self._eval(zeta, gamma, 0, 0)

    def d_zeta(self, zeta: float, gamma: float) -> float:
        return self._eval(zeta, gamma, 1, 0)

    def d_gamma(self, zeta: float, gamma: float) -> float:
        return self._eval(zeta, gamma, 0, 1)

    def d2_zeta(self, zeta: float, gamma: float) -> float:
        return self._eval(zeta, gamma, 2, 0)

    def d2_gamma(self, zeta: float, gamma: float) -> float:
        return self._eval(zeta, gamma, 0, 2)

    def d2_zeta_gamma(self, zeta: float, gamma: float) -> float:
        return self._eval(zeta, gamma, 1, 1)

    def row_polys(self, l: int, at_upper_edge: bool = False) -> npt.NDArray[np.float64]:
        """1-D per-cell coefficients of the surface along a gamma knot line."""
        if at_upper_edge:
            dg = self.gamma_knots[l + 1] - self.gamma_knots[l]
            powers = dg ** np.arange(4)
            return np.einsum("ghk,h->gk", self.coeffs[:, :, :, l], powers)
        return self.coeffs[:, 0, :, l].copy()


def surface_linear_combination(
    a: Surface2D, b: Surface2D, wa: float, wb: float
) -> Surface2D:
    """Coefficient-wise ``wa * a + wb * b`` on matching grids."""
    if not np.array_equal(a.zeta_knots, b.zeta_knots) or not np.array_equal(
        a.gamma_knots, b.gamma_knots
    ):
        raise ValueError("surfaces must share knot grids")
    return Surface2D(a.zeta_knots, a.gamma_knots, wa * a.coeffs + wb * b.coeffs)


@dataclasses.dataclass(frozen=True)
class BranchSplineFit:
    """Result of a constrained 1-D branch fit: per-cell cubic coefficients."""

    zeta_knots: npt.NDArray[np.float64]
    coeffs: npt.NDArray[np.float64]  # (4, n_cells), ascending powers
    residual: float
    kkt_residual: float

    def value(self, zeta: float) -> float:
        k = _cell_index(self.zeta_knots, zeta)
        dz = zeta - self.zeta_knots[k]
        return float(np.polyval(self.coeffs[::-1, k], dz))


def _solve_kkt(g_mat, c_vec, a_mat, b_vec):
    """Solve min x'Gx/2 + c'x  s.t.  Ax = b through the stationarity system."""
    n = c_vec.size
    m = b_vec.size
    kkt = sparse.bmat([[g_mat, a_mat.T], [a_mat, None]], format="csc")
    rhs = np.concatenate([-c_vec, b_vec])
    try:
        sol = splu(kkt).solve(rhs)
    except RuntimeError as exc:  # singular factorization
        raise np.linalg.LinAlgError(f"KKT system is rank deficient: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("KKT system is rank deficient (non-finite solution)")
    residual = kkt @ sol - rhs
    scale = max(1.0, float(np.linalg.norm(rhs)))
    rel = float(np.linalg.norm(residual)) / scale
    if rel > 1e-8:
        raise np.linalg.LinAlgError(
            f"KKT solve failed: relative residual {rel:.3e} (likely rank deficiency)"
        )
    return sol[:n], rel


def fit_branch_spline(
    zeta_samples: npt.NDArray[np.float64],
    lambda_samples: npt.NDArray[np.float64],
    zeta_knots: npt.NDArray[np.float64],
    endpoint_values: tuple[float, float],
) -> BranchSplineFit:
    """Least-squares C2 cubic spline with exact terminal interpolation.

    Minimises the squared sample misfit over per-cell cubic coefficients
    subject to value/slope/curvature continuity at interior knots and to the
    spline passing exactly through ``endpoint_values`` at zeta = -1 and +1,
    which is what makes fitted rising and dropping branches close into a loop.
    """
    zeta_samples = np.asarray(zeta_samples, dtype=float)
    lambda_samples = np.asarray(lambda_samples, dtype=float)
    zeta_knots = np.asarray(zeta_knots, dtype=float)
    n_cells = zeta_knots.size - 1
    n_var = 4 * n_cells

    per_cell = zeta_samples.size / n_cells
    if per_cell < 4:
        logger.warning(
            "only %.1f samples per knot interval on average; at least 4 recommended",
            per_cell,
        )

    rows = np.arange(zeta_samples.size)
    cells = np.clip(np.searchsorted(zeta_knots, zeta_samples, side="right") - 1, 0, n_cells - 1)
    dz = zeta_samples - zeta_knots[cells]
    data = np.stack([np.ones_like(dz), dz, dz**2, dz**3], axis=1)
    col_idx = (4 * cells)[:, None] + np.arange(4)[None, :]
    p_mat = sparse.csr_matrix(
        (data.ravel(), (np.repeat(rows, 4), col_idx.ravel())),
        shape=(zeta_samples.size, n_var),
    )
    g_mat = (p_mat.T @ p_mat).tocsc()
    c_vec = -(p_mat.T @ lambda_samples)

    cons_rows: list[tuple[int, int, float]] = []
    b_list: list[float] = []
    widths = np.diff(zeta_knots)
    row = 0
    for k in range(n_cells - 1):
        w = widths[k]
        # value, slope, curvature continuity at the interior knot
        for g in range(4):
            cons_rows.append((row, 4 * k + g, w**g))
        cons_rows.append((row, 4 * (k + 1), -1.0))
        b_list.append(0.0)
        row += 1
        for g in range(1, 4):
            cons_rows.append((row, 4 * k + g, g * w ** (g - 1)))
        cons_rows.append((row, 4 * (k + 1) + 1, -1.0))
        b_list.append(0.0)
        row += 1
        for g in range(2, 4):
            cons_rows.append((row, 4 * k + g, g * (g - 1) * w ** (g - 2)))
        cons_rows.append((row, 4 * (k + 1) + 2, -2.0))
        b_list.append(0.0)
        row += 1
    cons_rows.append((row, 0, 1.0))
    b_list.append(endpoint_values[0])
    row += 1
    w_last = widths[-1]
    for g in range(4):
        cons_rows.append((row, 4 * (n_cells - 1) + g, w_last**g))
    b_list.append(endpoint_values[1])
    row += 1

    r_idx, c_idx, vals = zip(*cons_rows)
    a_mat = sparse.csr_matrix((vals, (r_idx, c_idx)), shape=(row, n_var)).tocsc()
    x, kkt_rel = _solve_kkt(g_mat, c_vec, a_mat, np.array(b_list))
    residual = float(np.linalg.norm(p_mat @ x - lambda_samples))
    coeffs = x.reshape(n_cells, 4).T
    return BranchSplineFit(zeta_knots, coeffs, residual, kkt_rel)


def _clamped_knots(knots: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.concatenate([[knots[0]] * 3, knots, [knots[-1]] * 3])


def _greville(t: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.array([t[j + 1 : j + 4].mean() for j in range(t.size - 4)])


def _bspline_coeffs_of_ppoly(
    knots: npt.NDArray[np.float64], cells: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """B-spline coefficients of a C2 piecewise cubic given per-cell coefficients.

    Exact because the function already lives in the spline space: it is
    collocated at the Greville points, whose design matrix is nonsingular.
    """
    t = _clamped_knots(knots)
    pts = _greville(t)
    dm = BSpline.design_matrix(pts, t, 3).toarray()
    cell_idx = np.clip(np.searchsorted(knots, pts, side="right") - 1, 0, knots.size - 2)
    dz = pts - knots[cell_idx]
    vals = (
        cells[0, cell_idx]
        + cells[1, cell_idx] * dz
        + cells[2, cell_idx] * dz**2
        + cells[3, cell_idx] * dz**3
    )
    return np.linalg.solve(dm, vals)


def _gram_matrix(knots: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Gram matrix of the clamped cubic B-spline basis over its span."""
    t = _clamped_knots(knots)
    n_basis = knots.size + 2
    gram = np.zeros((n_basis, n_basis))
    gx, gw = _GAUSS4
    for a, b in zip(knots[:-1], knots[1:]):
        half = 0.5 * (b - a)
        nodes = a + half * (gx + 1.0)
        dm = BSpline.design_matrix(nodes, t, 3).toarray()
        gram += (dm.T * (half * gw)) @ dm
    return gram


def assemble_surface(
    rows: list[npt.NDArray[np.float64]],
    zeta_knots: npt.NDArray[np.float64],
    gamma_knots: npt.NDArray[np.float64],
) -> Surface2D:
    """Join per-amplitude branch splines into one C2 bicubic surface.

    ``rows[l]`` holds the (4, n_zeta_cells) coefficients fitted at amplitude
    ``gamma_knots[l]``; row 0 is the zero spline (no drive, no flux).  The
    free coefficients between knot lines minimise the squared deviation of the
    surface from the amplitude-wise linear interpolation of its bounding rows,
    subject to interpolating every row exactly and to prescribed edge curves
    at zeta = +/-1 (the amplitude-interpolated loop tips), all solved as one
    KKT system.
    """
    zeta_knots = np.asarray(zeta_knots, dtype=float)
    gamma_knots = np.asarray(gamma_knots, dtype=float)
    n_rows = gamma_knots.size
    if len(rows) != n_rows:
        raise ValueError(f"got {len(rows)} rows for {n_rows} amplitude knots")
    for l, r in enumerate(rows):
        if r.shape != (4, zeta_knots.size - 1):
            raise ValueError(f"row {l} has shape {r.shape}, inconsistent with the zeta knots")

    n_zbasis = zeta_knots.size + 2
    n_gbasis = gamma_knots.size + 2
    t_gamma = _clamped_knots(gamma_knots)

    # Row splines expressed in the zeta B-spline basis.
    c_rows = np.stack([_bspline_coeffs_of_ppoly(zeta_knots, r) for r in rows], axis=1)

    # Edge curves through the loop tips, C2 in gamma.
    tips_lo = np.array([r[0, 0] for r in rows])
    w_last = zeta_knots[-1] - zeta_knots[-2]
    tips_hi = np.array([np.polyval(r[::-1, -1], w_last) for r in rows])
    edge_lo = CubicSpline(gamma_knots, tips_lo, bc_type="natural")
    edge_hi = CubicSpline(gamma_knots, tips_hi, bc_type="natural")
    e_lo = _bspline_coeffs_of_ppoly(gamma_knots, np.flipud(edge_lo.c))
    e_hi = _bspline_coeffs_of_ppoly(gamma_knots, np.flipud(edge_hi.c))

    m_zeta = _gram_matrix(zeta_knots)
    m_gamma = _gram_matrix(gamma_knots)

    # b[j, q] = integral of psi_q times the piecewise-linear interpolant of row
    # coefficients c_rows[j, :]
    gx, gw = _GAUSS4
    b_mat = np.zeros((n_zbasis, n_gbasis))
    for l in range(n_rows - 1):
        a, b = gamma_knots[l], gamma_knots[l + 1]
        half = 0.5 * (b - a)
        nodes = a + half * (gx + 1.0)
        weights = half * gw
        dm = BSpline.design_matrix(nodes, t_gamma, 3).toarray()
        frac = (nodes - a) / (b - a)
        lin = np.outer(c_rows[:, l], 1.0 - frac) + np.outer(c_rows[:, l + 1], frac)
        b_mat += lin @ (dm * weights[:, None])

    h_mat = sparse.kron(sparse.csc_matrix(m_zeta), sparse.csc_matrix(m_gamma), format="csc")
    c_vec = -2.0 * (m_zeta @ b_mat).ravel()

    def var(j: int, q: int) -> int:
        return j * n_gbasis + q

    cons_rows: list[tuple[int, int, float]] = []
    b_list: list[float] = []
    row = 0
    psi_at_knots = BSpline.design_matrix(gamma_knots, t_gamma, 3).toarray()
    for j in range(1, n_zbasis - 1):
        for l in range(n_rows):
            for q in np.flatnonzero(psi_at_knots[l]):
                cons_rows.append((row, var(j, int(q)), psi_at_knots[l, q]))
            b_list.append(c_rows[j, l])
            row += 1
    for q in range(n_gbasis):
        cons_rows.append((row, var(0, q), 1.0))
        b_list.append(e_lo[q])
        row += 1
        cons_rows.append((row, var(n_zbasis - 1, q), 1.0))
        b_list.append(e_hi[q])
        row += 1

    r_idx, c_idx, vals = zip(*cons_rows)
    a_mat = sparse.csr_matrix(
        (vals, (r_idx, c_idx)), shape=(row, n_zbasis * n_gbasis)
    ).tocsc()
    x, _ = _solve_kkt(2.0 * h_mat, c_vec, a_mat, np.array(b_list))
    coeff_grid = x.reshape(n_zbasis, n_gbasis)

    return Surface2D(zeta_knots, gamma_knots, _tensor_to_cells(coeff_grid, zeta_knots, gamma_knots))


def _tensor_to_cells(
    coeff_grid: npt.NDArray[np.float64],
    zeta_knots: npt.NDArray[np.float64],
    gamma_knots: npt.NDArray[np.float64],
) -> npt.NDArray[np.float64]:
    """Expand tensor-product B-spline coefficients into per-cell polynomials."""
    t_zeta = _clamped_knots(zeta_knots)
    t_gamma = _clamped_knots(gamma_knots)
    n_zbasis, n_gbasis = coeff_grid.shape
    n_zc = zeta_knots.size - 1
    n_gc = gamma_knots.size - 1

    # gamma direction first: per zeta-basis function, polynomial in each cell
    gamma_polys = np.empty((n_zbasis, 4, n_gc))
    for j in range(n_zbasis):
        pp = PPoly.from_spline(BSpline(t_gamma, coeff_grid[j], 3), extrapolate=False)
        gamma_polys[j] = _ppoly_cells(pp, gamma_knots)

    out = np.empty((4, 4, n_zc, n_gc))
    for h in range(4):
        for l in range(n_gc):
            pp = PPoly.from_spline(BSpline(t_zeta, gamma_polys[:, h, l], 3), extrapolate=False)
            out[:, h, :, l] = _ppoly_cells(pp, zeta_knots)
    return out


def _ppoly_cells(pp: PPoly, knots: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Ascending-power per-cell coefficients of a PPoly on the given cells."""
    out = np.empty((4, knots.size - 1))
    for k in range(knots.size - 1):
        idx = int(np.searchsorted(pp.x, knots[k], side="right") - 1)
        idx = min(max(idx, 0), pp.c.shape[1] - 1)
        shift = knots[k] - pp.x[idx]
        poly = np.polynomial.Polynomial(pp.c[::-1, idx])
        if shift != 0.0:
            poly = poly(np.polynomial.Polynomial([shift, 1.0]))
        co = poly.coef
        out[: co.size, k] = co
        out[co.size :, k] = 0.0
    return out
