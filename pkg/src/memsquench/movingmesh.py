"""Monitor function, Sundman time rescaling and the discrete MMPDE.

Mesh nodes follow the relaxed equidistribution law

    -x_{tau xi xi} = (g / epsilon) (M x_xi)_xi,

with monitor M = (1 - u)^-2 and time rescaling dt/dtau = g = 1/max(M).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import MeshTanglingError, SingularStateError


def raw_monitor(u: np.ndarray) -> np.ndarray:
    gap = 1.0 - np.asarray(u, dtype=float)
    if np.any(gap <= 0.0):
        raise SingularStateError("monitor undefined where u >= 1")
    return gap ** -2


def smooth(values: np.ndarray, passes: int) -> np.ndarray:
    """``passes`` sweeps of (m[i-1] + 2 m[i] + m[i+1]) / 4; end values are kept."""
    m = np.array(values, dtype=float)
    for _ in range(passes):
        inner = 0.25 * (m[:-2] + 2.0 * m[1:-1] + m[2:])
        m[1:-1] = inner
    return m


@lru_cache(maxsize=32)
def smoothing_matrix(n: int, passes: int) -> np.ndarray:
    """Dense matrix S with smooth(m, passes) == S @ m (banded, half-width passes)."""
    S = np.eye(n)
    for _ in range(passes):
        S[1:-1] = 0.25 * (S[:-2] + 2.0 * S[1:-1] + S[2:])
    S.setflags(write=False)
    return S


def monitor(u, passes: int = 2) -> np.ndarray:
    """Smoothed nodal monitor values."""
    return smooth(raw_monitor(u), passes)


def g_of_state(u) -> float:
    """Time-rescaling factor 1/||M||_inf = (1 - max u)^2 of the raw monitor."""
    return float((1.0 - np.max(u)) ** 2)


def mmpde_flux_divergence(X: np.ndarray, M: np.ndarray, dxi: float) -> np.ndarray:
    """Interior values of delta_xi(M delta_xi X) with face-averaged M; zero at the ends."""
    dX = np.diff(X)
    if np.any(dX <= 0.0):
        raise MeshTanglingError("mesh nodes not strictly increasing")
    face = 0.5 * (M[1:] + M[:-1])
    flux = face * dX / dxi
    out = np.zeros_like(X)
    out[1:-1] = (flux[1:] - flux[:-1]) / dxi
    return out


def mmpde_operator(X, M, g: float, epsilon: float) -> np.ndarray:
    """Right-hand side (g/epsilon) delta_xi(M delta_xi X); boundary rows are zero (pinned)."""
    X = np.asarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    dxi = 1.0 / (X.size - 1)
    return (g / epsilon) * mmpde_flux_divergence(X, M, dxi)


def cell_masses(X, M) -> np.ndarray:
    """Trapezoidal int_{X_i}^{X_i+1} M dx per cell; equal at an equidistributed mesh."""
    X = np.asarray(X)
    M = np.asarray(M)
    return 0.5 * (M[1:] + M[:-1]) * np.diff(X)


def equidistribute(u_of_x, n: int, passes: int = 2, a: float = 0.0, b: float = 1.0,
                   relax: float = 0.5, tol: float = 1e-12, max_iter: int = 500) -> np.ndarray:
    """Mesh of n nodes on [a, b] with equal cell masses of the smoothed monitor of u_of_x.

    This is the steady state of the MMPDE for data frozen in x, found by
    damped fixed-point iteration: the face-averaged monitor is piecewise
    constant per cell, so its cumulative mass is inverted exactly.
    """
    X = np.linspace(a, b, n)
    levels = np.linspace(0.0, 1.0, n)
    for _ in range(max_iter):
        M = monitor(u_of_x(X), passes)
        mass = np.r_[0.0, np.cumsum(cell_masses(X, M))]
        target = np.interp(levels * mass[-1], mass, X)
        target[0], target[-1] = a, b
        step = relax * (target - X)
        X = X + step
        if np.max(np.abs(step)) < tol * (b - a):
            break
    if np.any(np.diff(X) <= 0.0):
        raise MeshTanglingError("equidistribution produced a tangled mesh")
    return X
