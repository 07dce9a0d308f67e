"""
Deterministic large-n limit of the weighted SIR process.

H_S(x) = (1 - theta) E(x^rho)
H_V(x) = E rho - (1 - theta) E(rho x^rho) + log(x) / (p lambda)

psi solves psi' = -p lambda psi H_V(psi), psi_0 = 1, and the limit
susceptible fraction and infective weight density are H_S(psi_t) and
H_V(psi_t). The same curves are produced three ways: from psi, from the
per-class ODE, and by the explicit time change u -> A_u.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import IntegrationWarning, quad, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from epidemic_lln.decorators import require_positive
from epidemic_lln.exceptions import DomainError, HorizonExceededError, InvalidDistributionError, SolverError
from epidemic_lln.models import LimitParams, WeightDistribution
from epidemic_lln.weights import generalized_moment, moment

logger = logging.getLogger(__name__)

# Below this infective density the epidemic counts as extinct
EXTINCTION_LEVEL = 1e-12
DEFAULT_TOL = 1e-9
GRID_POINTS = 401
# Knot placement for the time-change quadrature
_MAX_HALVINGS = 48
_SUBKNOTS = 8

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class LimitSolution:
    """Limit curves on a time grid; fields a method does not produce are None."""
    times: np.ndarray
    q: np.ndarray
    psi: Optional[np.ndarray] = None
    s_by_class: Optional[np.ndarray] = None  # (T, K)
    v: Optional[np.ndarray] = None
    hs: Optional[np.ndarray] = None
    hv: Optional[np.ndarray] = None

    @property
    def s_total(self) -> Optional[np.ndarray]:
        return None if self.s_by_class is None else self.s_by_class.sum(axis=1)

    def linked_psi(self, theta: float, mu: np.ndarray) -> np.ndarray:
        """
        (s_t(i) / ((1 - theta) mu_i))^(1/q_i) per class; NaN where q_i = 0.

        Every column equals psi_t when the per-class curves are consistent.
        """
        if self.s_by_class is None:
            raise ValueError("solution carries no per-class curves")
        base = self.s_by_class / ((1.0 - theta) * np.asarray(mu))
        out = np.full(base.shape, np.nan)
        positive = self.q > 0.0
        out[:, positive] = np.power(base[:, positive], 1.0 / self.q[positive])
        return out

    def to_frame(self) -> pd.DataFrame:
        T = self.times.shape[0]
        missing = np.full(T, np.nan)
        data = {
            "t": self.times,
            "psi": self.psi if self.psi is not None else missing,
            "hs": self.hs if self.hs is not None else missing,
            "hv": self.hv if self.hv is not None else missing,
        }
        for j in range(self.q.shape[0]):
            data[f"s_{j + 1}"] = self.s_by_class[:, j] if self.s_by_class is not None else missing
        data["v"] = self.v if self.v is not None else missing
        return pd.DataFrame(data)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g", na_rep="nan", lineterminator="\n")


@dataclass(frozen=True, eq=False)
class ClassicalSolution:
    """s, v and r = integral of v for the classical SIR limit."""
    times: np.ndarray
    s: np.ndarray
    v: np.ndarray
    r: np.ndarray


def _grid(t_end: float, times: Optional[Sequence[float]]) -> np.ndarray:
    if not t_end > 0.0:
        raise DomainError("t_end must be > 0")
    if times is None:
        return np.linspace(0.0, t_end, GRID_POINTS)
    grid = np.asarray(times, dtype=float)
    if grid.size == 0 or grid[0] < 0.0 or grid[-1] > t_end or np.any(np.diff(grid) <= 0.0):
        raise DomainError("times must be increasing and lie in [0, t_end]")
    return grid


def _hs(lp: LimitParams, x: ArrayLike) -> ArrayLike:
    return (1.0 - lp.theta) * generalized_moment(lp.dist, x, False)


def _hv(lp: LimitParams, x: ArrayLike) -> ArrayLike:
    return moment(lp.dist, 1) - (1.0 - lp.theta) * generalized_moment(lp.dist, x, True) + np.log(x) / lp.rate


@require_positive("x")
def h_s(lp: LimitParams, x: ArrayLike) -> ArrayLike:
    """H_S(x) = (1 - theta) E(x^rho), x > 0."""
    return _hs(lp, x)


@require_positive("x")
def h_v(lp: LimitParams, x: ArrayLike) -> ArrayLike:
    """
    H_V(x) = E rho - (1 - theta) E(rho x^rho) + log(x) / (p lambda), x > 0.

    Defined for every x > 0; negative below the extinction root.
    """
    return _hv(lp, x)


def _hv_in_u(lp: LimitParams, u: float) -> float:
    """H_V(exp(-p lambda u))"""
    return float(_hv(lp, math.exp(-lp.rate * u)))


def extinction_time_change(lp: LimitParams) -> float:
    """
    Root u* of u -> H_V(exp(-p lambda u)), i.e. the time-change parameter at
    which the epidemic dies out.

    H_V(exp(-p lambda u)) <= E rho - u, so the root lies in (0, E rho].
    """
    upper = moment(lp.dist, 1)
    grid = np.linspace(0.0, upper, 1025)
    values = np.array([_hv_in_u(lp, u) for u in grid])
    sign_change = np.flatnonzero(values[1:] <= 0.0)
    if sign_change.size == 0:
        raise SolverError("H_V has no root below the initial state")
    k = int(sign_change[0]) + 1
    if values[k] == 0.0:
        return float(grid[k])
    return float(brentq(lambda u: _hv_in_u(lp, u), grid[k - 1], grid[k], xtol=1e-15, rtol=4 * np.finfo(float).eps))


def extinction_root(lp: LimitParams) -> float:
    """psi_inf: the largest root of H_V in (0, 1]."""
    return math.exp(-lp.rate * extinction_time_change(lp))


def final_size(lp: LimitParams) -> float:
    """Limit final susceptible fraction H_S(psi_inf)."""
    return float(_hs(lp, extinction_root(lp)))


def _integrate(rhs, y0: np.ndarray, t_end: float, tol: float, extinct) -> "object":
    extinct.terminal = True
    extinct.direction = -1
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=tol, atol=tol,
                    dense_output=True, events=extinct)
    if sol.status == -1:
        t_reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise SolverError(f"integration failed at t={t_reached}: {sol.message}",
                          t_reached=t_reached, status=sol.status)
    return sol


def _evaluate(sol, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Dense output on the grid, frozen after a terminal extinction event."""
    t_stop = float(sol.t[-1])
    y = sol.sol(np.minimum(grid, t_stop))
    frozen = grid > t_stop
    return np.atleast_2d(y), frozen


def solve_psi(lp: LimitParams, t_end: float, tol: float = DEFAULT_TOL,
              times: Optional[Sequence[float]] = None) -> LimitSolution:
    """
    Integrate psi' = -p lambda psi H_V(psi), psi_0 = 1, with an adaptive
    8th-order Runge-Kutta pair (absolute and relative tolerance ``tol``).

    Returns:
        LimitSolution with psi, hs = H_S(psi) and hv = H_V(psi)

    Raises:
        SolverError: step-size control failed
    """
    grid = _grid(t_end, times)
    rate = lp.rate

    def rhs(t, y):
        x = max(y[0], np.finfo(float).tiny)
        return [-rate * x * _hv(lp, x)]

    def extinct(t, y):
        return _hv(lp, max(y[0], np.finfo(float).tiny)) - EXTINCTION_LEVEL

    sol = _integrate(rhs, np.array([1.0]), t_end, tol, extinct)
    y, frozen = _evaluate(sol, grid)
    psi = y[0]
    psi[0] = 1.0 if grid[0] == 0.0 else psi[0]
    hv = np.asarray(_hv(lp, psi), dtype=float)
    hv[frozen] = 0.0
    hs = np.asarray(_hs(lp, psi), dtype=float)
    logger.debug(f"solve_psi: {sol.t.size} steps, psi({grid[-1]:.4g}) = {psi[-1]:.12g}")
    return LimitSolution(times=grid, q=lp.dist.q_array, psi=psi, hs=hs, hv=hv)


def solve_component_ode(lp: LimitParams, t_end: float, tol: float = DEFAULT_TOL,
                        times: Optional[Sequence[float]] = None) -> LimitSolution:
    """
    Integrate the per-class system

        s(i)' = -p lambda v q_i s(i)
        v'    = -v + p lambda v sum_i q_i^2 s(i)

    from s_0(i) = (1 - theta) mu_i, v_0 = theta E rho.

    Returns:
        LimitSolution with s_by_class, v, hs = sum_i s(i) and hv = v
    """
    grid = _grid(t_end, times)
    rate = lp.rate
    q = lp.dist.q_array
    K = q.shape[0]
    y0 = np.concatenate([(1.0 - lp.theta) * lp.dist.mu_array, [lp.theta * moment(lp.dist, 1)]])

    def rhs(t, y):
        s, v = y[:K], y[K]
        return np.concatenate([-rate * v * q * s, [-v + rate * v * np.dot(q * q, s)]])

    def extinct(t, y):
        return y[K] - EXTINCTION_LEVEL

    sol = _integrate(rhs, y0, t_end, tol, extinct)
    y, frozen = _evaluate(sol, grid)
    s_by = y[:K].T.copy()
    v = y[K].copy()
    v[frozen] = 0.0
    return LimitSolution(times=grid, q=q, s_by_class=s_by, v=v, hs=s_by.sum(axis=1), hv=v)


def _quad_piece(integrand, a: float, b: float, eps: float) -> float:
    """int_a^b of integrand. A large error estimate or an IntegrationWarning is logged at DEBUG."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        piece, err = quad(integrand, a, b, epsabs=eps, epsrel=eps, limit=200)
    notes = []
    for w in caught:
        if issubclass(w.category, IntegrationWarning):
            notes.append(str(w.message).strip().splitlines()[0])
        else:
            warnings.warn(w.message, w.category)
    if err > eps or notes:
        logger.debug(f"quadrature on [{a:.12g}, {b:.12g}]: error estimate {err:.3g} (eps {eps:.3g})"
                     + (f", {'; '.join(notes)}" if notes else ""))
    return piece


def _time_change_knots(lp: LimitParams, t_end: float, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Knots (u_k, A_{u_k}) with A_u = int_0^u dr / H_V(exp(-p lambda r)),
    clustered geometrically towards the root u*, until A reaches t_end.
    """
    u_star = extinction_time_change(lp)
    integrand = lambda r: 1.0 / _hv_in_u(lp, r)
    eps = 0.1 * tol
    u_knots, a_knots = [0.0], [0.0]
    u_prev, a_prev = 0.0, 0.0
    for k in range(1, _MAX_HALVINGS + 1):
        u_next = u_star * (1.0 - 0.5 ** k)
        if _hv_in_u(lp, u_next) < EXTINCTION_LEVEL:
            break
        for u in np.linspace(u_prev, u_next, _SUBKNOTS + 1)[1:]:
            u_prev, a_prev = float(u), a_prev + _quad_piece(integrand, u_prev, u, eps)
            u_knots.append(u_prev)
            a_knots.append(a_prev)
        if a_prev >= t_end:
            logger.debug(f"time change: {len(u_knots)} knots, u* = {u_star:.12g}")
            return np.asarray(u_knots), np.asarray(a_knots)
    raise HorizonExceededError(
        f"time change resolves t up to {a_prev:.6g} < t_end = {t_end}", t_max=a_prev)


def solve_time_change(lp: LimitParams, t_end: float, tol: float = DEFAULT_TOL,
                      times: Optional[Sequence[float]] = None) -> LimitSolution:
    """
    Limit curves through the explicit time change.

    With psi = exp(-p lambda u): v(A_u) = H_V(psi), s(A_u, i) =
    (1 - theta) mu_i psi^{q_i}, and A_u is obtained by adaptive quadrature
    then inverted at the requested times (monotone cubic guess, bracketed
    root refinement).

    Raises:
        HorizonExceededError: t_end lies beyond the reachable horizon
            (A_u diverges as u approaches the extinction root)
    """
    grid = _grid(t_end, times)
    u_knots, a_knots = _time_change_knots(lp, t_end, tol)
    guess = PchipInterpolator(a_knots, u_knots)
    integrand = lambda r: 1.0 / _hv_in_u(lp, r)
    eps = 0.1 * tol

    u_of_t = np.zeros(grid.shape[0])
    for idx, t in enumerate(grid):
        if t == 0.0:
            continue
        i = min(int(np.searchsorted(a_knots, t, side="right")) - 1, a_knots.shape[0] - 2)
        lo, hi = u_knots[i], u_knots[i + 1]

        def residual(u, i=i, t=t):
            return a_knots[i] + _quad_piece(integrand, u_knots[i], u, eps) - t

        u0 = float(np.clip(guess(t), lo, hi))
        if abs(residual(u0)) <= eps:
            u_of_t[idx] = u0
            continue
        # A' = 1/H_V, so an error du in u is an error du/H_V in t
        xtol = max(eps * _hv_in_u(lp, hi), 1e-300)
        u_of_t[idx] = brentq(residual, lo, hi, xtol=xtol)

    psi = np.exp(-lp.rate * u_of_t)
    s_by = (1.0 - lp.theta) * lp.dist.mu_array * np.power(psi[:, None], lp.dist.q_array)
    hv = np.asarray(_hv(lp, psi), dtype=float)
    return LimitSolution(times=grid, q=lp.dist.q_array, psi=psi, s_by_class=s_by, v=hv.copy(),
                         hs=np.asarray(_hs(lp, psi), dtype=float), hv=hv)


def limit_curves(lp: LimitParams, t_end: float, tol: float = DEFAULT_TOL,
                 times: Optional[Sequence[float]] = None) -> LimitSolution:
    """psi, H_S(psi), H_V(psi) from solve_psi joined with s(i), v from the per-class ODE."""
    scalar = solve_psi(lp, t_end, tol, times)
    component = solve_component_ode(lp, t_end, tol, times)
    return LimitSolution(times=scalar.times, q=scalar.q, psi=scalar.psi, hs=scalar.hs, hv=scalar.hv,
                         s_by_class=component.s_by_class, v=component.v)


def classical_limit(theta: float, lam: float, t_end: float, tol: float = DEFAULT_TOL,
                    times: Optional[Sequence[float]] = None) -> ClassicalSolution:
    """
    Classical SIR limit on the complete graph:
    s' = -lambda s v, v' = lambda s v - v, r' = v, from (1 - theta, theta, 0).
    """
    if not 0.0 < theta < 1.0:
        raise DomainError("theta must lie strictly in (0,1)")
    if not lam > 0.0:
        raise DomainError("lambda must be > 0")
    grid = _grid(t_end, times)

    def rhs(t, y):
        s, v, _ = y
        return [-lam * s * v, lam * s * v - v, v]

    def extinct(t, y):
        return y[1] - EXTINCTION_LEVEL

    sol = _integrate(rhs, np.array([1.0 - theta, theta, 0.0]), t_end, tol, extinct)
    y, frozen = _evaluate(sol, grid)
    v = y[1].copy()
    v[frozen] = 0.0
    return ClassicalSolution(times=grid, s=y[0].copy(), v=v, r=y[2].copy())


def lambda_critical(dist: WeightDistribution, p: float) -> float:
    """lambda_c = 1 / (p E rho^2)."""
    if not 0.0 < p <= 1.0:
        raise DomainError("p must lie in (0,1]")
    second = moment(dist, 2)
    if second <= 0.0:
        raise InvalidDistributionError("E rho^2 = 0: lambda_c is undefined for a degenerate law")
    return 1.0 / (p * second)
