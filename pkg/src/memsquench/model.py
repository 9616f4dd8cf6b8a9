"""The continuous problem: parameters, geometry, initial data, nonlocal term.

    u_t = Laplacian(u) + lambda / ((1 - u)^2 (1 + alpha * int (1 - u)^-1)^2)

on either the unit interval (Dirichlet at both ends) or the radial unit
ball (u_r(0) = 0, u(1) = 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import movingmesh, quadrature
from .errors import ConfigError, SingularStateError
from .quadrature import MeshState

INTERVAL = "interval"
BALL = "ball"
GEOMETRIES = (INTERVAL, BALL)


def volume_unit_ball(N: int) -> float:
    """Volume of the unit ball in R^N, pi^(N/2) / Gamma(N/2 + 1)."""
    if N < 1:
        raise ValueError("dimension must be >= 1")
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


@dataclass(frozen=True)
class InitialData:
    """Initial-data descriptor: ``zero``, ``bump`` (amplitude a) or ``table``."""

    kind: str = "zero"
    amplitude: float = 0.0
    table_x: tuple = ()
    table_u: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "InitialData":
        """Parse ``zero``, ``bump:a`` or ``file:path`` (CSV with header x,u)."""
        text = text.strip()
        if text == "zero":
            return cls()
        if text.startswith("bump:"):
            try:
                a = float(text[5:])
            except ValueError:
                raise ConfigError(f"bad bump amplitude in {text!r}") from None
            return cls("bump", a)
        if text.startswith("file:"):
            path = Path(text[5:])
            try:
                data = np.genfromtxt(path, delimiter=",", names=True)
            except OSError as exc:
                raise ConfigError(f"cannot read initial data {path}: {exc}") from None
            if data.dtype.names is None or not {"x", "u"} <= set(data.dtype.names):
                raise ConfigError(f"{path}: expected header 'x,u'")
            return cls("table", table_x=tuple(np.atleast_1d(data["x"])),
                       table_u=tuple(np.atleast_1d(data["u"])))
        raise ConfigError(f"unknown initial data {text!r}")

    def describe(self) -> str:
        if self.kind == "bump":
            return f"bump:{self.amplitude:g}"
        if self.kind == "table":
            return f"table[{len(self.table_x)}]"
        return "zero"

    def evaluate(self, x: np.ndarray, geometry: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "bump":
            # symmetric, decreasing away from the centre, zero on the boundary
            if geometry == INTERVAL:
                u = self.amplitude * np.sin(np.pi * x)
            else:
                u = self.amplitude * np.cos(0.5 * np.pi * x)
            u[-1] = 0.0
            if geometry == INTERVAL:
                u[0] = 0.0
            return u
        if self.kind == "table":
            return np.interp(x, np.asarray(self.table_x), np.asarray(self.table_u))
        raise ConfigError(f"unknown initial data kind {self.kind!r}")


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to define one simulation."""

    lam: float = 10.0
    alpha: float = 1.0
    dim: int = 1
    geometry: str = INTERVAL
    initial_data: InitialData = field(default_factory=InitialData)
    mesh_size: int = 141
    epsilon: float = 1e-4
    smoothing_passes: int = 2
    v_stop: float = 1e-4
    steady_tol: float = 1e-6
    t_max: float = 100.0

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.alpha >= 0.0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry must be one of {GEOMETRIES}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError("dim must be a positive integer")
        if self.geometry == INTERVAL and self.dim != 1:
            raise ConfigError("interval geometry requires dim=1")
        if self.mesh_size < 8:
            raise ConfigError("mesh_size must be >= 8")
        if self.epsilon <= 0.0:
            raise ConfigError("epsilon must be positive")
        if self.smoothing_passes < 0:
            raise ConfigError("smoothing_passes must be >= 0")
        if not 0.0 < self.v_stop < 1.0:
            raise ConfigError("v_stop must lie in (0, 1)")
        if self.steady_tol <= 0.0 or self.t_max <= 0.0:
            raise ConfigError("steady_tol and t_max must be positive")

    @property
    def radial(self) -> bool:
        return self.geometry == BALL

    @property
    def omega(self) -> float:
        return volume_unit_ball(self.dim)

    @property
    def domain_measure(self) -> float:
        """|Omega|: 1 for the interval, omega_N for the ball."""
        return 1.0 if self.geometry == INTERVAL else self.omega

    def weight(self, X: np.ndarray) -> np.ndarray | None:
        """Nodal integration weight for domain integrals (None = plain dx)."""
        if self.geometry == INTERVAL:
            return None
        return quadrature.radial_weight(X, self.dim, self.omega)

    def with_(self, **kw) -> "ProblemSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class SolutionState:
    """One snapshot of the discrete solution."""

    tau: float
    t: float
    mesh: MeshState
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.shape != self.mesh.X.shape:
            raise ValueError("u and mesh have different lengths")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def X(self) -> np.ndarray:
        return self.mesh.X

    @property
    def max_u(self) -> float:
        return float(self.u.max())

    @property
    def gap(self) -> float:
        return 1.0 - self.max_u


@dataclass(frozen=True)
class NonlocalCoefficients:
    integral_I: float
    k: float
    f: float


def check_initial_data(u: np.ndarray, X: np.ndarray, geometry: str, atol: float = 1e-12):
    if np.any(u < -atol) or np.any(u >= 1.0):
        raise ConfigError("initial data must satisfy 0 <= u0 < 1")
    if abs(u[-1]) > atol or (geometry == INTERVAL and abs(u[0]) > atol):
        raise ConfigError("initial data must vanish on the Dirichlet boundary")
    if geometry == BALL and np.any(np.diff(u) > 1e-12):
        raise ConfigError("radial initial data must be non-increasing in r")


def initial_state(spec: ProblemSpec, adapt_mesh: bool = True) -> SolutionState:
    """State at t = 0.  Non-zero data start on a mesh already equidistributed
    for their monitor, so the mesh does not sweep through the profile early on."""
    mesh = MeshState.uniform(spec.mesh_size)
    if adapt_mesh and spec.initial_data.kind != "zero":
        evaluate = lambda x: np.clip(spec.initial_data.evaluate(x, spec.geometry), 0.0, None)
        try:
            mesh = MeshState(movingmesh.equidistribute(evaluate, spec.mesh_size + 1,
                                                       spec.smoothing_passes))
        except SingularStateError:
            raise ConfigError("initial data must satisfy 0 <= u0 < 1") from None
    u = spec.initial_data.evaluate(mesh.X, spec.geometry)
    check_initial_data(u, mesh.X, spec.geometry)
    u = np.clip(u, 0.0, None)
    u[-1] = 0.0
    if spec.geometry == INTERVAL:
        u[0] = 0.0
    return SolutionState(0.0, 0.0, mesh, u)


def integral_I(u: np.ndarray, mesh: MeshState, spec: ProblemSpec) -> float:
    """int_Omega (1 - u)^-1 dx with the geometry's weight."""
    gap = 1.0 - np.asarray(u)
    if np.any(gap <= 0.0):
        raise SingularStateError("1 - u <= 0: integrand of I is singular")
    return quadrature.integrate(1.0 / gap, mesh, spec.weight(mesh.X))


def coefficients_from_I(I: float, spec: ProblemSpec) -> NonlocalCoefficients:
    k = 1.0 / (1.0 + spec.alpha * I) ** 2
    return NonlocalCoefficients(I, k, spec.lam * k)


def nonlocal_coefficients(state: SolutionState, spec: ProblemSpec) -> NonlocalCoefficients:
    return coefficients_from_I(integral_I(state.u, state.mesh, spec), spec)


def reaction_term(state: SolutionState, coeffs: NonlocalCoefficients,
                  v_stop: float | None = None) -> np.ndarray:
    """Nodal F_i = f (1 - u_i)^-2."""
    gap = 1.0 - state.u
    floor = 0.0 if v_stop is None else 0.5 * v_stop
    if np.any(gap <= floor):
        raise SingularStateError("reaction term evaluated at a quenched node")
    return coeffs.f / gap ** 2
