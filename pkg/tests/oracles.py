"""Independent reference solutions used only by the tests."""
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import diags


def closed_form_branch(delta):
    """Interval steady branch in closed form: returns (mu, I) for core gap delta.

    First integral of w'' = -(1-w)^-2 gives w'^2 = 2/(1-w) - 2/delta, which
    integrates in elementary functions for the half-width R and for J = int 1/(1-w).
    """
    L = math.log((1.0 + math.sqrt(1.0 - delta)) / math.sqrt(delta))
    R = math.sqrt(delta / 2.0) * (math.sqrt(1.0 - delta) + delta * L)
    J = math.sqrt(2.0 * delta) * L
    return 4.0 * R * R, J / R


def fixed_mesh_solution(lam, alpha, n_cells, t_eval, rtol=1e-10, atol=1e-12):
    """Uniform-mesh method of lines on (0, 1), integrated with BDF.

    Returns (x, U) with U[j] the solution at t_eval[j].
    """
    x = np.linspace(0.0, 1.0, n_cells + 1)
    h = x[1] - x[0]
    n = n_cells - 1
    lap = diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h ** 2
    lap = lap.tocsr()
    w = np.full(n, h)  # trapezoid, boundary nodes contribute 1/(1-0) = 1

    def rhs(t, v):
        gap = 1.0 - v
        I = w @ (1.0 / gap) + h
        return lap @ v + lam / (gap ** 2 * (1.0 + alpha * I) ** 2)

    sol = solve_ivp(rhs, (0.0, float(t_eval[-1])), np.zeros(n), method="BDF",
                    t_eval=t_eval, rtol=rtol, atol=atol, jac_sparsity=None)
    U = np.zeros((len(t_eval), n_cells + 1))
    U[:, 1:-1] = sol.y.T
    return x, U
