"""Integration of nodal data on a moving mesh.

Integrals over the physical domain are pulled back to the uniform
computational coordinate xi in [0, 1]:

    int_0^1 v(x) w(x) dx = int_0^1 v(x(xi)) w(x(xi)) x_xi dxi

and evaluated with composite Simpson in xi.  The metric x_xi comes from
second-order finite differences of the node positions.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import MeshTanglingError, QuadratureError


@dataclass(frozen=True)
class MeshState:
    """Physical node positions X_0 < ... < X_M, images of a uniform xi grid."""

    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 1 or X.size < 3:
            raise QuadratureError("mesh needs at least 3 nodes")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def M(self) -> int:
        return self.X.size - 1

    @property
    def dxi(self) -> float:
        return 1.0 / self.M

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    @classmethod
    def uniform(cls, M: int, a: float = 0.0, b: float = 1.0) -> "MeshState":
        return cls(np.linspace(a, b, M + 1))

    def check_monotone(self):
        if np.any(np.diff(self.X) <= 0.0):
            i = int(np.argmin(np.diff(self.X)))
            raise MeshTanglingError(f"mesh tangled at cell {i}")


@lru_cache(maxsize=32)
def metric_matrix(M: int) -> sp.csr_matrix:
    """Sparse D with D @ X = x_xi (centered inside, one-sided 2nd order at ends)."""
    h2 = 2.0 / M  # 2*dxi
    rows, cols, vals = [], [], []
    for i in range(1, M):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-1.0 / h2, 1.0 / h2]
    rows += [0, 0, 0, M, M, M]
    cols += [0, 1, 2, M, M - 1, M - 2]
    vals += [-3.0 / h2, 4.0 / h2, -1.0 / h2, 3.0 / h2, -4.0 / h2, 1.0 / h2]
    D = sp.csr_matrix((vals, (rows, cols)), shape=(M + 1, M + 1))
    return D


def metric_term(mesh: MeshState) -> np.ndarray:
    """Nodal x_xi values; raises if any is non-positive (tangled mesh)."""
    m = metric_matrix(mesh.M) @ mesh.X
    if np.any(m <= 0.0):
        raise MeshTanglingError("non-positive metric term x_xi")
    return m


@lru_cache(maxsize=32)
def _simpson_weights(M: int) -> np.ndarray:
    # Composite Simpson in xi; odd M closes with a 3/8 panel on the last three cells.
    if M < 2:
        raise QuadratureError("need at least two cells")
    h = 1.0 / M
    w = np.zeros(M + 1)
    n_simpson = M if M % 2 == 0 else M - 3
    if n_simpson > 0:
        w[0:n_simpson + 1:2] = 2.0
        w[1:n_simpson:2] = 4.0
        w[0] = w[n_simpson] = 1.0
        w *= h / 3.0
    if M % 2 == 1:
        if M < 3:
            raise QuadratureError("odd M below 3 not supported")
        k = n_simpson
        w[k:k + 4] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    w.setflags(write=False)
    return w


def simpson_weights(M: int) -> np.ndarray:
    return _simpson_weights(int(M))


def radial_weight(X: np.ndarray, dim: int, omega: float) -> np.ndarray:
    """Surface-measure weight N*omega_N*r^(N-1) for radial integrals."""
    if dim == 1:
        return np.full_like(X, dim * omega)
    return dim * omega * X ** (dim - 1)


def radial_weight_derivative(X: np.ndarray, dim: int, omega: float) -> np.ndarray:
    if dim == 1:
        return np.zeros_like(X)
    return dim * omega * (dim - 1) * X ** (dim - 2)


def quadrature_weights(mesh: MeshState, weight: np.ndarray | None = None) -> np.ndarray:
    """Nodal weights q with sum(q * v) = int v(x) w(x) dx."""
    mesh.check_monotone()
    q = simpson_weights(mesh.M) * metric_term(mesh)
    if weight is not None:
        q = q * weight
    return q


def integrate(values, mesh: MeshState, weight: np.ndarray | None = None) -> float:
    """Integrate nodal ``values`` (times optional nodal ``weight``) over the mesh."""
    values = np.asarray(values, dtype=float)
    if values.shape != mesh.X.shape:
        raise QuadratureError("values and mesh differ in length")
    return float(quadrature_weights(mesh, weight) @ values)
