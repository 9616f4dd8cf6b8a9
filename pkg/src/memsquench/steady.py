"""Radial steady states by shooting, and the pull-in threshold lambda*.

On a steady state the nonlocal factor is a constant, so the problem is
the local one  Laplacian(w) + mu (1 - w)^-2 = 0  in disguise, with
lambda = mu (1 + alpha I)^2.  The local problem is solved by rescaling:
integrate

    w'' + (N - 1)/s w' + (1 - w)^-2 = 0,   w(0) = 1 - delta,  w'(0) = 0

outward to its first zero s = R.  Then w(r) = w_hat(R r) solves the
ball problem with mu = R^2; on the interval (0, 1) the half-width is
1/2 and mu = 4 R^2.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .errors import FoldNotBracketedError, ShootingError
from .model import INTERVAL, volume_unit_ball

log = logging.getLogger(__name__)

BRANCH_COLUMNS = ("delta", "mu", "I", "lambda", "sup_w")


@dataclass(frozen=True)
class SteadyBranchPoint:
    delta: float
    mu: float
    integral_I: float
    lam: float
    profile_x: np.ndarray
    profile: np.ndarray

    @property
    def sup_w(self) -> float:
        return 1.0 - self.delta

    def row(self):
        return (self.delta, self.mu, self.integral_I, self.lam, self.sup_w)


@dataclass(frozen=True)
class ShotResult:
    mu: float
    integral_I: float
    R: float
    sol: object  # dense output of the IVP in s, or None for delta = 1

    def w(self, x, geometry: str) -> np.ndarray:
        """Steady profile at physical points x."""
        x = np.asarray(x, float)
        if self.sol is None:
            return np.zeros_like(x)
        s = 2.0 * self.R * np.abs(x - 0.5) if geometry == INTERVAL else self.R * x
        return np.where(s >= self.R, 0.0, self._w_hat(np.minimum(s, self.R)))

    def _w_hat(self, s):
        s = np.atleast_1d(s)
        out = np.empty_like(s)
        s0 = self.sol.t_min
        inner = s < s0
        if np.any(~inner):
            out[~inner] = self.sol(s[~inner])[0]
        if np.any(inner):
            w0, c = self.sol.series
            out[inner] = w0 - c * s[inner] ** 2
        return out


def _rhs(N):
    def f(s, y):
        w, dw, _ = y
        gap = 1.0 - w
        return [dw, -(N - 1) / s * dw - gap ** -2,
                s ** (N - 1) / gap]
    return f


def shoot(delta: float, N: int = 1, geometry: str = INTERVAL,
          rtol: float = 1e-11, atol: float = 1e-13) -> ShotResult:
    """Solve the rescaled IVP for core gap ``delta``; return mu, I, R and the solution."""
    if not 0.0 < delta <= 1.0:
        raise ShootingError(f"delta must lie in (0, 1], got {delta}")
    if geometry == INTERVAL and N != 1:
        raise ShootingError("interval geometry is one-dimensional")
    if delta == 1.0:
        return ShotResult(0.0, 1.0 if geometry == INTERVAL else volume_unit_ball(N), 0.0, None)
    w0 = 1.0 - delta
    c = 1.0 / (2.0 * N * delta ** 2)
    # series start clears the removable singularity at s = 0
    s0 = 1e-4 * delta ** 1.5
    y0 = [w0 - c * s0 ** 2, -2.0 * c * s0, s0 ** N / (N * delta)]
    hit = lambda s, y: y[0]
    hit.terminal = True
    hit.direction = -1
    s_max = math.sqrt(2.0 * N) + 1.0
    sol = solve_ivp(_rhs(N), (s0, s_max), y0, method="DOP853", rtol=rtol, atol=atol,
                    events=hit, dense_output=True)
    if sol.status != 1 or not sol.t_events[0].size:
        raise ShootingError(f"no zero crossing for delta={delta}: {sol.message}")
    R = float(sol.t_events[0][0])
    J = float(sol.y_events[0][0][2])
    if geometry == INTERVAL:
        mu = 4.0 * R ** 2
        I = J / R
    else:
        mu = R ** 2
        I = N * volume_unit_ball(N) * J / R ** N
    dense = sol.sol
    dense.t_min = s0
    dense.series = (w0, c)
    return ShotResult(mu, I, R, dense)


def shoot_profile(delta: float, N: int = 1, geometry: str = INTERVAL, n_out: int = 201):
    """Returns (mu, integral_I, profile) with the profile on a uniform grid of n_out nodes."""
    shot = shoot(delta, N, geometry)
    x = np.linspace(0.0, 1.0, n_out)
    return shot.mu, shot.integral_I, shot.w(x, geometry)


def branch_point(delta: float, alpha: float, N: int = 1, geometry: str = INTERVAL,
                 n_out: int = 201) -> SteadyBranchPoint:
    shot = shoot(delta, N, geometry)
    x = np.linspace(0.0, 1.0, n_out)
    lam = shot.mu * (1.0 + alpha * shot.integral_I) ** 2
    return SteadyBranchPoint(delta, shot.mu, shot.integral_I, lam, x, shot.w(x, geometry))


def default_delta_grid(n: int = 60) -> np.ndarray:
    """Decreasing, logarithmically spaced core gaps in [1e-3, 1)."""
    return np.logspace(-3.0, math.log10(0.999), n)[::-1]


def trace_branch(alpha: float, N: int = 1, geometry: str = INTERVAL, delta_grid=None,
                 n_out: int = 201):
    """Evaluate branch points over ``delta_grid``; failed points are logged and skipped.

    Returns (points, gaps) where gaps lists the deltas that failed.
    """
    grid = default_delta_grid() if delta_grid is None else np.asarray(delta_grid, float)
    points, gaps = [], []
    for d in grid:
        try:
            points.append(branch_point(float(d), alpha, N, geometry, n_out))
        except ShootingError as exc:
            log.warning("branch point delta=%g failed: %s", d, exc)
            gaps.append(float(d))
    return points, gaps


def _lam(delta, alpha, N, geometry):
    shot = shoot(delta, N, geometry)
    return shot.mu * (1.0 + alpha * shot.integral_I) ** 2


def lambda_star(points, alpha: float, N: int = 1, geometry: str = INTERVAL):
    """Supremum of lambda along the branch, refined by golden-section search in delta.

    Returns (lambda_star, delta_at_fold).  A single point, or a monotone
    branch, gives the largest sampled lambda with a warning.
    """
    if not points:
        raise FoldNotBracketedError("empty branch")
    deltas = np.array([p.delta for p in points])
    lams = np.array([p.lam for p in points])
    order = np.argsort(deltas)
    deltas, lams = deltas[order], lams[order]
    i = int(np.argmax(lams))
    if i == 0 or i == len(lams) - 1:
        warnings.warn("fold not bracketed by the delta grid", RuntimeWarning)
        return float(lams[i]), float(deltas[i])
    res = minimize_scalar(lambda d: -_lam(d, alpha, N, geometry), method="golden",
                          bracket=(deltas[i - 1], deltas[i], deltas[i + 1]),
                          options={"xtol": 1e-10})
    return float(-res.fun), float(res.x)


def find_lower_branch(lam: float, alpha: float, N: int = 1, geometry: str = INTERVAL,
                      delta_fold: float | None = None) -> SteadyBranchPoint:
    """Minimal (stable) steady state for ``lam`` below lambda*: root of lambda(delta) = lam."""
    if delta_fold is None:
        pts, _ = trace_branch(alpha, N, geometry, np.linspace(0.999, 0.02, 50))
        _, delta_fold = lambda_star(pts, alpha, N, geometry)
    if _lam(delta_fold, alpha, N, geometry) < lam:
        raise FoldNotBracketedError(f"lambda={lam} exceeds lambda* of this branch")
    d = brentq(lambda d: _lam(d, alpha, N, geometry) - lam, delta_fold, 1.0,
               xtol=1e-14, rtol=1e-14)
    return branch_point(d, alpha, N, geometry)
