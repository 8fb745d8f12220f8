"""Time-periodic Preisach hysteresis operator in shape-function form.

The operator maps a periodic coil current to equivalent flux linkage (Vs).
Within one period the input is confined to its own global extrema
``[beta_m, alpha_m]``; history resets every time either extremum is reached,
so the staircase memory never has to reach further back than one period.

Flux is evaluated as a signed sum of shape-function values at the staircase
vertices plus a common-mode term,

    lam = c(i, beta_m, alpha_m) + e0 h(beta_m, alpha_m)
          + 2 sum_j e_j h(beta_j, alpha_j)

where the vertex orientations ``e_j`` alternate and the final vertex carries
the live input value.  A brute-force double-integral oracle over the relay
plane is provided as an independent cross-check of the summation.
"""

from __future__ import annotations

import abc
import dataclasses
import logging
from typing import Callable, Literal, Sequence

import numpy as np
import numpy.typing as npt

from .hps import PeriodicSignal

__all__ = [
    "ShapeFunction",
    "Curve",
    "DeviationSurface",
    "CommonMode",
    "ZeroCommonMode",
    "AssembledCommonMode",
    "HysteresisModel",
    "StaircaseMemory",
    "initial_memory",
    "memory_update",
    "evaluate",
    "staircase_trajectory",
    "simulate",
    "mu_eta_from_shape",
    "integral_oracle",
    "invert_branch",
]

logger = logging.getLogger(__name__)


class ShapeFunction(abc.ABC):
    """Everett-style shape surface h(beta_m, alpha_m) with analytic partials.

    Defined on the half plane ``beta <= alpha`` within ``[-gamma_max, gamma_max]``
    and vanishing on the diagonal, ``h(g, g) = 0``.
    """

    gamma_max: float

    @abc.abstractmethod
    def value(self, beta: float, alpha: float) -> float: ...

    @abc.abstractmethod
    def d_beta(self, beta: float, alpha: float) -> float: ...

    @abc.abstractmethod
    def d_alpha(self, beta: float, alpha: float) -> float: ...

    @abc.abstractmethod
    def d2_beta_alpha(self, beta: float, alpha: float) -> float:
        """Second mixed partial; the distributed weight density mu."""


class Curve(abc.ABC):
    """Scalar curve with an analytic first derivative."""

    @abc.abstractmethod
    def value(self, x: float) -> float: ...

    @abc.abstractmethod
    def derivative(self, x: float) -> float: ...


class DeviationSurface(abc.ABC):
    """Common-mode deviation from the centre line, arguments (offset, half-range)."""

    @abc.abstractmethod
    def value(self, u: float, g: float) -> float: ...

    @abc.abstractmethod
    def d_u(self, u: float, g: float) -> float: ...

    @abc.abstractmethod
    def d_g(self, u: float, g: float) -> float: ...


class CommonMode(abc.ABC):
    """The c(i, beta_m, alpha_m) term of the operator."""

    @abc.abstractmethod
    def value(self, i: float, beta_m: float, alpha_m: float) -> float: ...

    @abc.abstractmethod
    def partials(self, i: float, beta_m: float, alpha_m: float) -> tuple[float, float, float]:
        """Return (dc/di, dc/dbeta_m, dc/dalpha_m)."""


class ZeroCommonMode(CommonMode):
    def value(self, i, beta_m, alpha_m):
        return 0.0

    def partials(self, i, beta_m, alpha_m):
        return (0.0, 0.0, 0.0)


class AssembledCommonMode(CommonMode):
    """Centre line plus shifted/scaled deviation plus the shape correction.

        c = lam_cl(i) + lam_dc(i - (bm + am)/2, (am - bm)/2) + h(bm, i) - h(i, am)

    Built so a model driven symmetrically reproduces the common mode of the
    test data it was fitted from.
    """

    def __init__(
        self,
        center_line: Curve,
        deviation: DeviationSurface | None,
        shape: ShapeFunction,
    ) -> None:
        self.center_line = center_line
        self.deviation = deviation
        self.shape = shape

    def value(self, i, beta_m, alpha_m):
        out = self.center_line.value(i)
        if self.deviation is not None:
            u = i - 0.5 * (beta_m + alpha_m)
            g = 0.5 * (alpha_m - beta_m)
            out += self.deviation.value(u, g)
        out += self.shape.value(beta_m, i) - self.shape.value(i, alpha_m)
        return out

    def partials(self, i, beta_m, alpha_m):
        d_i = self.center_line.derivative(i)
        d_bm = 0.0
        d_am = 0.0
        if self.deviation is not None:
            u = i - 0.5 * (beta_m + alpha_m)
            g = 0.5 * (alpha_m - beta_m)
            du = self.deviation.d_u(u, g)
            dg = self.deviation.d_g(u, g)
            d_i += du
            d_bm += -0.5 * du - 0.5 * dg
            d_am += -0.5 * du + 0.5 * dg
        d_i += self.shape.d_alpha(beta_m, i) - self.shape.d_beta(i, alpha_m)
        d_bm += self.shape.d_beta(beta_m, i)
        d_am += -self.shape.d_alpha(i, alpha_m)
        return (d_i, d_bm, d_am)


@dataclasses.dataclass(frozen=True)
class HysteresisModel:
    """Immutable time-periodic Preisach model.

    ``shape`` carries the hysteretic half of the operator, ``common_mode`` the
    reversible half.  ``splitting_a`` records the splitting-function parameter
    selected during fitting (None for synthetic models).
    """

    shape: ShapeFunction
    common_mode: CommonMode
    gamma_max: float
    splitting_a: float | None = None

    def check_range(self, value: float) -> None:
        if abs(value) > self.gamma_max * (1 + 1e-12):
            raise ValueError(
                f"current {value!r} A exceeds the trained range +/-{self.gamma_max!r} A"
            )


Direction = Literal["rising", "dropping"]


@dataclasses.dataclass(frozen=True)
class StaircaseMemory:
    """Surviving extremum history of a time-periodic input.

    ``newest`` records which of the two global extrema occurred most recently;
    ``inner`` holds the surviving interior reversal values in temporal order,
    strictly nested and alternating (a maximum first when ``newest == 'min'``).
    Optional ``*_time`` fields carry the instants the extrema occurred, needed
    by the harmonic-domain linearisation.
    """

    beta_m: float
    alpha_m: float
    newest: Literal["min", "max"]
    inner: tuple[float, ...]
    current_value: float
    direction: Direction
    beta_m_time: float | None = None
    alpha_m_time: float | None = None
    inner_times: tuple[float, ...] = ()
    current_time: float | None = None

    def __post_init__(self) -> None:
        if not self.beta_m <= self.alpha_m:
            raise ValueError("beta_m must not exceed alpha_m")
        if self.newest not in ("min", "max"):
            raise ValueError(f"invalid newest: {self.newest!r}")
        if self.direction not in ("rising", "dropping"):
            raise ValueError(f"invalid direction: {self.direction!r}")
        lo, hi = self.beta_m, self.alpha_m
        kind = "max" if self.newest == "min" else "min"
        for v in self.inner:
            if not lo < v < hi:
                raise ValueError(f"inner extremum {v!r} violates staircase nesting")
            if kind == "max":
                hi = v
                kind = "min"
            else:
                lo = v
                kind = "max"
        expected = "max" if self.direction == "rising" else "min"
        if kind != expected:
            raise ValueError(
                f"direction {self.direction!r} inconsistent with memory parity"
            )
        if not lo <= self.current_value <= hi:
            raise ValueError(
                f"current value {self.current_value!r} outside live bracket [{lo!r}, {hi!r}]"
            )
        if self.inner_times and len(self.inner_times) != len(self.inner):
            raise ValueError("inner_times must match inner in length")

    @property
    def live_bracket(self) -> tuple[float, float]:
        """Extrema bounding the live point before the next wipe."""
        lo, hi = self.beta_m, self.alpha_m
        kind = "max" if self.newest == "min" else "min"
        for v in self.inner:
            if kind == "max":
                hi, kind = v, "min"
            else:
                lo, kind = v, "max"
        return lo, hi

    @property
    def vertices(self) -> tuple[tuple[float, float], ...]:
        """Staircase corner pairs rho_0 .. rho_{N-1}, live vertex last."""
        return tuple(p for p, _, _ in self._walk())

    @property
    def orientations(self) -> tuple[int, ...]:
        return tuple(e for _, e, _ in self._walk())

    @property
    def vertex_times(self) -> tuple[tuple[float | None, float | None], ...]:
        """Per-vertex (beta-time, alpha-time); the live coordinate reports None."""
        return tuple(t for _, _, t in self._walk())

    def _walk(self):
        eps0 = 1 if self.newest == "min" else -1
        t_b, t_a = self.beta_m_time, self.alpha_m_time
        out = [((self.beta_m, self.alpha_m), eps0, (t_b, t_a))]
        beta, alpha = self.beta_m, self.alpha_m
        kind = "max" if self.newest == "min" else "min"
        eps = eps0
        times = self.inner_times if self.inner_times else (None,) * len(self.inner)
        for v, tv in zip(self.inner, times):
            eps = -eps
            if kind == "max":
                alpha, t_a = v, tv
                kind = "min"
            else:
                beta, t_b = v, tv
                kind = "max"
            out.append(((beta, alpha), eps, (t_b, t_a)))
        eps = -eps
        if self.direction == "rising":
            out.append(((beta, self.current_value), eps, (t_b, None)))
        else:
            out.append(((self.current_value, alpha), eps, (None, t_a)))
        return out


def initial_memory(
    beta_m: float,
    alpha_m: float,
    beta_m_time: float | None = None,
    alpha_m_time: float | None = None,
) -> StaircaseMemory:
    """Memory at the instant of the global minimum: history is just {rho_0}."""
    return StaircaseMemory(
        beta_m=beta_m,
        alpha_m=alpha_m,
        newest="min",
        inner=(),
        current_value=beta_m,
        direction="rising",
        beta_m_time=beta_m_time,
        alpha_m_time=alpha_m_time,
        current_time=beta_m_time,
    )


def memory_update(
    mem: StaircaseMemory, next_i: float, time: float | None = None
) -> StaircaseMemory:
    """Advance the staircase to the next input value.

    Reversals append a vertex; passing beyond a surviving extremum wipes the
    enclosed pair; reaching a global extremum resets the history.  Plateaus
    (``next_i == current``) leave the memory untouched.
    """
    if not mem.beta_m <= next_i <= mem.alpha_m:
        raise ValueError(
            f"input {next_i!r} leaves the periodic range [{mem.beta_m!r}, {mem.alpha_m!r}]"
        )
    if next_i == mem.current_value:
        return mem

    inner = list(mem.inner)
    times = list(mem.inner_times) if mem.inner_times else [None] * len(inner)
    direction: Direction = mem.direction
    rising_now = next_i > mem.current_value
    if rising_now and direction == "dropping":
        inner.append(mem.current_value)
        times.append(mem.current_time)
        direction = "rising"
    elif not rising_now and direction == "rising":
        inner.append(mem.current_value)
        times.append(mem.current_time)
        direction = "dropping"

    if direction == "rising":
        while len(inner) >= 2 and next_i >= inner[-2]:
            del inner[-2:], times[-2:]
        if next_i == mem.alpha_m:
            return StaircaseMemory(
                beta_m=mem.beta_m,
                alpha_m=mem.alpha_m,
                newest="max",
                inner=(),
                current_value=next_i,
                direction="dropping",
                beta_m_time=mem.beta_m_time,
                alpha_m_time=time,
                current_time=time,
            )
    else:
        while len(inner) >= 2 and next_i <= inner[-2]:
            del inner[-2:], times[-2:]
        if next_i == mem.beta_m:
            return StaircaseMemory(
                beta_m=mem.beta_m,
                alpha_m=mem.alpha_m,
                newest="min",
                inner=(),
                current_value=next_i,
                direction="rising",
                beta_m_time=time,
                alpha_m_time=mem.alpha_m_time,
                current_time=time,
            )

    return StaircaseMemory(
        beta_m=mem.beta_m,
        alpha_m=mem.alpha_m,
        newest=mem.newest,
        inner=tuple(inner),
        current_value=next_i,
        direction=direction,
        beta_m_time=mem.beta_m_time,
        alpha_m_time=mem.alpha_m_time,
        inner_times=tuple(times),
        current_time=time,
    )


def evaluate(model: HysteresisModel, mem: StaircaseMemory) -> float:
    """Flux linkage for the given memory state, in Vs."""
    i = mem.current_value
    total = model.common_mode.value(i, mem.beta_m, mem.alpha_m)
    walk = mem._walk()
    (beta0, alpha0), eps0, _ = walk[0]
    total += eps0 * model.shape.value(beta0, alpha0)
    for (beta, alpha), eps, _ in walk[1:]:
        total += 2.0 * eps * model.shape.value(beta, alpha)
    return total


def staircase_trajectory(current: PeriodicSignal) -> list[StaircaseMemory]:
    """Memory state at every sample of one period, aligned with the input.

    The walk starts at the sample of the global minimum (ties resolved to the
    earliest occurrence, with a warning since linearisation validity is then
    not guaranteed) and wraps around the period.
    """
    samples = current.samples
    t = current.times
    n = samples.size
    beta_m = float(np.min(samples))
    alpha_m = float(np.max(samples))
    min_locs = np.flatnonzero(samples == beta_m)
    max_locs = np.flatnonzero(samples == alpha_m)
    if min_locs.size > 1 or max_locs.size > 1:
        logger.warning(
            "tied global extrema (min at %s, max at %s); taking the earliest",
            min_locs.tolist(),
            max_locs.tolist(),
        )
    start = int(min_locs[0])
    # The stored alpha_m occurred within the previous period.
    t_alpha_prev = float(t[int(max_locs[0])]) - (
        current.period if max_locs[0] < start else 0.0
    )
    mem = initial_memory(beta_m, alpha_m, beta_m_time=float(t[start]), alpha_m_time=t_alpha_prev)
    trajectory: list[StaircaseMemory | None] = [None] * n
    trajectory[start] = mem
    for step in range(1, n):
        idx = (start + step) % n
        time = float(t[idx]) + (current.period if idx < start else 0.0)
        mem = memory_update(mem, float(samples[idx]), time=time)
        trajectory[idx] = mem
    return trajectory  # type: ignore[return-value]


def simulate(model: HysteresisModel, current: PeriodicSignal) -> PeriodicSignal:
    """Drive the operator with one period of current; returns aligned flux."""
    samples = current.samples
    beta_m = float(np.min(samples))
    alpha_m = float(np.max(samples))
    model.check_range(max(abs(beta_m), abs(alpha_m)))
    if beta_m == alpha_m:
        c = model.common_mode.value(beta_m, beta_m, beta_m)
        return PeriodicSignal(
            np.full_like(samples, c), current.sample_interval, current.period
        )
    flux = np.empty_like(samples)
    for idx, mem in enumerate(staircase_trajectory(current)):
        flux[idx] = evaluate(model, mem)
    return PeriodicSignal(flux, current.sample_interval, current.period)


def mu_eta_from_shape(
    model: HysteresisModel,
    beta_grid: npt.NDArray[np.float64],
    alpha_grid: npt.NDArray[np.float64],
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Sample the weight density mu(beta, alpha) and diagonal density eta(alpha).

    Both come from analytic shape-function partials, never finite differences.
    Entries below the diagonal are NaN.  Rejects grids outside the trained
    range.
    """
    beta_grid = np.asarray(beta_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    limit = model.gamma_max * (1 + 1e-12)
    if np.max(np.abs(beta_grid)) > limit or np.max(np.abs(alpha_grid)) > limit:
        raise ValueError("grid extends outside the model domain")
    mu = np.full((beta_grid.size, alpha_grid.size), np.nan)
    for ib, b in enumerate(beta_grid):
        for ia, a in enumerate(alpha_grid):
            if b <= a:
                mu[ib, ia] = model.shape.d2_beta_alpha(float(b), float(a))
    eta = np.array([model.shape.d_beta(float(a), float(a)) for a in alpha_grid])
    return mu, eta


def _gauss_nodes(a: float, b: float, order: int = 24):
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _interface_height(mem: StaircaseMemory, beta: npt.NDArray[np.float64]):
    """Top of the switched-up region in each relay column, by direct replay."""
    events: list[tuple[str, float]] = []
    if mem.newest == "min":
        events.append(("max", mem.alpha_m))
        events.append(("min", mem.beta_m))
    else:
        events.append(("min", mem.beta_m))
        events.append(("max", mem.alpha_m))
    kind = "max" if mem.newest == "min" else "min"
    for v in mem.inner:
        events.append((kind, v))
        kind = "min" if kind == "max" else "max"
    events.append(("max" if mem.direction == "rising" else "min", mem.current_value))

    height = np.full_like(beta, -np.inf)
    for kind, v in events:
        if kind == "max":
            height = np.maximum(height, v)
        else:
            height = np.where(beta >= v, beta, height)
    return np.maximum(height, beta)


def integral_oracle(
    mu: Callable[[npt.NDArray[np.float64], npt.NDArray[np.float64]], npt.NDArray[np.float64]],
    eta: Callable[[npt.NDArray[np.float64]], npt.NDArray[np.float64]] | None,
    mem: StaircaseMemory,
) -> float:
    """Brute-force relay-plane integral of the hysteretic flux contribution.

    Integrates ``mu`` over the switched-up region minus the switched-down
    region defined by the staircase (plus the diagonal line density), i.e. the
    quantity ``evaluate(...) - common mode``.  The up/down split is derived by
    direct relay bookkeeping, independently of the shape-function summation.
    """
    beta_m, alpha_m = mem.beta_m, mem.alpha_m
    if beta_m == alpha_m:
        return 0.0

    # Split the outer integral wherever the interface height kinks or jumps:
    # at every surviving extremum and at the live value.
    breakpoints = {beta_m, alpha_m, mem.current_value}
    breakpoints.update(mem.inner)
    edges = sorted(breakpoints)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        nodes, weights = _gauss_nodes(lo, hi)
        heights = _interface_height(mem, nodes)
        for b, wb, top in zip(nodes, weights, heights):
            up = 0.0
            if top > b:
                xs, ws = _gauss_nodes(b, min(top, alpha_m))
                up = float(np.sum(ws * mu(np.full_like(xs, b), xs)))
            down = 0.0
            if top < alpha_m:
                xs, ws = _gauss_nodes(max(top, b), alpha_m)
                down = float(np.sum(ws * mu(np.full_like(xs, b), xs)))
            total += wb * (up - down)

    if eta is not None:
        i = mem.current_value
        if i > beta_m:
            xs, ws = _gauss_nodes(beta_m, i)
            total += float(np.sum(ws * eta(xs)))
        if i < alpha_m:
            xs, ws = _gauss_nodes(i, alpha_m)
            total -= float(np.sum(ws * eta(xs)))
    return total


def _branch_slope(model: HysteresisModel, mem: StaircaseMemory) -> float:
    d_i, _, _ = model.common_mode.partials(mem.current_value, mem.beta_m, mem.alpha_m)
    (beta, alpha), eps, _ = mem._walk()[-1]
    if mem.direction == "rising":
        return d_i + 2.0 * eps * model.shape.d_alpha(beta, alpha)
    return d_i + 2.0 * eps * model.shape.d_beta(beta, alpha)


def invert_branch(
    model: HysteresisModel,
    mem: StaircaseMemory,
    target_lambda: float,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """Current producing ``target_lambda`` from the given memory state.

    Requires flux strictly increasing in current along the branch.  Uses
    Newton steps from the analytic branch slope, safeguarded by bisection on
    ``[beta_m, alpha_m]``; wiping along the way is handled by the memory
    update, so the branch function is continuous across prior extrema.
    """

    def f(x: float) -> tuple[float, StaircaseMemory]:
        m = memory_update(mem, x)
        return evaluate(model, m), m

    lo, hi = mem.beta_m, mem.alpha_m
    f_lo, _ = f(lo)
    f_hi, _ = f(hi)
    if not (f_lo - tol <= target_lambda <= f_hi + tol):
        bound = "upper" if target_lambda > f_hi else "lower"
        edge = hi if target_lambda > f_hi else lo
        raise ValueError(
            f"target flux {target_lambda!r} Vs is outside the branch range "
            f"[{f_lo!r}, {f_hi!r}]; {bound} saturation bound at i = {edge!r} A"
        )
    x = min(max(mem.current_value, lo), hi)
    for _ in range(max_iter):
        fx, m_x = f(x)
        err = fx - target_lambda
        if abs(err) < tol:
            return x
        if err > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        slope = _branch_slope(model, m_x)
        if slope > 0:
            step = x - err / slope
        else:
            step = 0.5 * (lo + hi)
        if not lo <= step <= hi:
            step = 0.5 * (lo + hi)
        if step == x:
            step = 0.5 * (lo + hi)
            if step == x:
                return x
        x = step
    raise RuntimeError(
        f"branch inversion did not reach |err| < {tol!r} within {max_iter} iterations"
    )


def congruent_offset(
    model: HysteresisModel, mem_a: StaircaseMemory, mem_b: StaircaseMemory, points: Sequence[float]
) -> npt.NDArray[np.float64]:
    """Difference of the two branch functions over shared points (diagnostic)."""
    out = np.empty(len(points))
    for k, x in enumerate(points):
        out[k] = evaluate(model, memory_update(mem_a, float(x))) - evaluate(
            model, memory_update(mem_b, float(x))
        )
    return out
