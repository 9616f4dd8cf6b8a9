"""Implicit moving-mesh integrator in rescaled time tau.

Unknowns per node i are (u_i, X_i), stored interleaved so that the local
part of the Newton Jacobian is banded.  The nonlocal factor f(I) and the
time rescaling g(max u) couple every row; both enter the Jacobian as
rank-one terms and are folded in with the Woodbury identity on top of
banded solves.

Each tau step is backward Euler.  Steps are controlled by step doubling:
a full step is compared with two half steps, and the two half steps are
what gets accepted, so every accepted row satisfies dt = g * dtau.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from . import quadrature
from .errors import IntegratorError, MeshTanglingError, SingularStateError
from .model import INTERVAL, ProblemSpec, SolutionState, initial_state
from .movingmesh import g_of_state, smooth, smoothing_matrix
from .quadrature import MeshState

log = logging.getLogger(__name__)

SERIES_COLUMNS = ("t", "tau", "max_u", "g", "I", "k", "E", "dtau")


@dataclass
class StepControl:
    dtau: float = 1e-4
    dtau_min: float = 1e-14
    dtau_max: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iters: int = 12
    error_tol: float = 1e-6
    mesh_tol: float = 5e-2
    max_du: float = 1e-2
    jacobian: str = "rank1"  # "rank1" (Woodbury correction) or "lagged"
    freeze_mesh: bool = False
    max_steps: int = 400_000
    frame_every: int = 25
    frame_gap_ratio: float = 10 ** -0.1

    def __post_init__(self):
        if not 0 < self.dtau_min <= self.dtau <= self.dtau_max:
            raise ValueError("need 0 < dtau_min <= dtau <= dtau_max")
        if self.newton_tol <= 0 or self.error_tol <= 0 or self.max_du <= 0:
            raise ValueError("tolerances must be positive")
        if self.jacobian not in ("rank1", "lagged"):
            raise ValueError("jacobian must be 'rank1' or 'lagged'")


@dataclass
class DaeSystem:
    """A(tau, y) dy/dtau = b(tau, y) for y = (t, u_0..u_M, X_0..X_M).

    Rows for pinned boundary values have a zero row in ``A`` and the
    algebraic residual (value - boundary value, negated) in ``b``.
    """

    y: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    g: float
    f: float
    integral_I: float

    @property
    def M(self) -> int:
        return (self.y.size - 1) // 2 - 1

    def blocks(self):
        n = self.M + 1
        return (slice(0, 1), slice(1, 1 + n), slice(1 + n, 1 + 2 * n))


class Discretization:
    """Spatial discretisation of one ProblemSpec; caches mesh-size dependent operators."""

    def __init__(self, spec: ProblemSpec, freeze_mesh: bool = False):
        self.spec = spec
        self.M = spec.mesh_size
        self.n = self.M + 1
        self.dxi = 1.0 / self.M
        self.radial = spec.radial
        self.N = spec.dim
        self.passes = spec.smoothing_passes
        self.freeze_mesh = freeze_mesh
        self.S = smoothing_matrix(self.n, self.passes)
        self.D = quadrature.metric_matrix(self.M)
        self.DT = self.D.T.tocsr()
        self.sw = quadrature.simpson_weights(self.M)
        self.kl = 2 * self.passes + 3
        self.ku = max(3, 2 * self.passes + 1)

    # -- pieces shared by residual, Jacobian and assemble ------------------

    def weight(self, X):
        if not self.radial:
            return np.ones_like(X)
        return quadrature.radial_weight(X, self.N, self.spec.omega)

    def integral(self, u, X):
        gap = 1.0 - u
        m = self.D @ X
        return float(np.sum(self.sw * m * self.weight(X) / gap))

    def terms(self, u, X):
        """Physical-time right-hand side pieces at the state (u, X)."""
        gap = 1.0 - u
        if np.any(gap <= 0.0):
            raise SingularStateError("u reached 1")
        dX = np.diff(X)
        if np.any(dX <= 0.0):
            raise MeshTanglingError("mesh tangled")
        spec = self.spec
        I = self.integral(u, X)
        f = spec.lam / (1.0 + spec.alpha * I) ** 2
        g = float(np.min(gap)) ** 2
        phi2 = gap ** -2
        a = dX[:-1]
        b = dX[1:]
        s = a + b
        D1 = (u[2:] - u[:-2]) / s
        p = (u[2:] - u[1:-1]) / b
        q = (u[1:-1] - u[:-2]) / a
        D2 = 2.0 * (p - q) / s
        L = np.zeros(self.n)  # u_t at fixed x
        L[1:-1] = D2 + f * phi2[1:-1]
        if self.radial:
            L[1:-1] += (self.N - 1) * D1 / X[1:-1]
            L[0] = 2.0 * self.N * (u[1] - u[0]) / X[1] ** 2 + f * phi2[0]
        Mon = smooth(phi2, self.passes)
        face = 0.5 * (Mon[1:] + Mon[:-1])
        flux = face * dX / self.dxi
        Q = np.zeros(self.n)
        Q[1:-1] = (flux[1:] - flux[:-1]) / self.dxi
        return dict(gap=gap, I=I, f=f, g=g, phi2=phi2, a=a, b=b, s=s, D1=D1,
                    p=p, q=q, D2=D2, L=L, Mon=Mon, face=face, Q=Q)

    def physical_rate(self, u, X) -> np.ndarray:
        """u_t at fixed physical x (zero on Dirichlet nodes)."""
        return self.terms(u, X)["L"]

    # -- implicit Euler residual and Jacobian ------------------------------

    def residual(self, u, X, un, Xn, h, T=None):
        T = self.terms(u, X) if T is None else T
        eps = self.spec.epsilon
        g = T["g"]
        Ru = np.empty(self.n)
        V = (X[1:-1] - Xn[1:-1]) / h
        Ru[1:-1] = (u[1:-1] - un[1:-1]) / h - V * T["D1"] - g * T["L"][1:-1]
        if self.radial:
            Ru[0] = (u[0] - un[0]) / h - g * T["L"][0]
        else:
            Ru[0] = u[0]
        Ru[-1] = u[-1]
        RX = np.empty(self.n)
        RX[0] = X[0]
        RX[-1] = X[-1] - 1.0
        W = X - Xn
        if self.freeze_mesh:
            RX[1:-1] = W[1:-1] / h
        else:
            RX[1:-1] = (-(W[2:] - 2.0 * W[1:-1] + W[:-2]) / (h * self.dxi ** 2)
                        - (g / eps) * T["Q"][1:-1])
        R = np.empty(2 * self.n)
        R[0::2] = Ru
        R[1::2] = RX
        return R

    def jacobian(self, u, X, un, Xn, h, T):
        """Banded local Jacobian plus the rank-two global couplings (U, V)."""
        n, kl, ku = self.n, self.kl, self.ku
        nv = 2 * n
        ab = np.zeros((kl + ku + 1, nv))

        def put(rows, cols, vals):
            ab[ku + rows - cols, cols] = vals

        spec = self.spec
        eps = spec.epsilon
        g, f = T["g"], T["f"]
        gap = T["gap"]
        phi3 = gap ** -3
        a, b, s, D1, D2, p, q = (T[k] for k in ("a", "b", "s", "D1", "D2", "p", "q"))
        i = np.arange(1, n - 1)
        ru, rx = 2 * i, 2 * i + 1
        cu = lambda j: 2 * j
        cx = lambda j: 2 * j + 1

        V = (X[1:-1] - Xn[1:-1]) / h
        dD1_up, dD1_um = 1.0 / s, -1.0 / s
        dD1_Xp, dD1_Xm = -D1 / s, D1 / s
        dD2_up = 2.0 / (s * b)
        dD2_um = 2.0 / (s * a)
        dD2_u0 = -2.0 / s * (1.0 / a + 1.0 / b)
        dD2_Xp = -D2 / s - 2.0 * p / (s * b)
        dD2_Xm = D2 / s - 2.0 * q / (s * a)
        dD2_X0 = 2.0 / s * (p / b + q / a)
        if self.radial:
            c = (self.N - 1) / X[1:-1]
            drad_X0 = -(self.N - 1) * D1 / X[1:-1] ** 2
        else:
            c = 0.0
            drad_X0 = 0.0
        put(ru, cu(i), 1.0 / h - g * (dD2_u0 + 2.0 * f * phi3[1:-1]))
        put(ru, cu(i + 1), -V * dD1_up - g * (dD2_up + c * dD1_up))
        put(ru, cu(i - 1), -V * dD1_um - g * (dD2_um + c * dD1_um))
        put(ru, cx(i), -D1 / h - g * (dD2_X0 + drad_X0))
        put(ru, cx(i + 1), -V * dD1_Xp - g * (dD2_Xp + c * dD1_Xp))
        put(ru, cx(i - 1), -V * dD1_Xm - g * (dD2_Xm + c * dD1_Xm))
        last = n - 1
        one = np.array([1.0])
        if self.radial:
            N = self.N
            X1 = X[1]
            put(np.array([0]), np.array([0]),
                np.array([1.0 / h - g * (-2.0 * N / X1 ** 2 + 2.0 * f * phi3[0])]))
            put(np.array([0]), np.array([2]), np.array([-g * 2.0 * N / X1 ** 2]))
            put(np.array([0]), np.array([3]),
                np.array([g * 4.0 * N * (u[1] - u[0]) / X1 ** 3]))
        else:
            put(np.array([0]), np.array([0]), one)
        put(np.array([2 * last]), np.array([2 * last]), one)
        put(np.array([1]), np.array([1]), one)
        put(np.array([2 * last + 1]), np.array([2 * last + 1]), one)

        if self.freeze_mesh:
            put(rx, cx(i), np.full(i.size, 1.0 / h))
        else:
            face = T["face"]
            dx2 = self.dxi ** 2
            ge = g / eps
            put(rx, cx(i - 1), -1.0 / (h * dx2) - ge * face[:-1] / dx2)
            put(rx, cx(i + 1), -1.0 / (h * dx2) - ge * face[1:] / dx2)
            put(rx, cx(i), 2.0 / (h * dx2) + ge * (face[:-1] + face[1:]) / dx2)
            # dQ_i/dM_l, then chain through the smoothing matrix to u
            Cq = sp.csr_matrix(
                (np.concatenate([-a, b - a, b]) / (2.0 * dx2),
                 (np.concatenate([i, i, i]), np.concatenate([i - 1, i, i + 1]))),
                shape=(n, n))
            G = np.asarray(Cq @ self.S) * (2.0 * phi3)[None, :]
            w = self.passes + 1
            for off in range(-w, w + 1):
                j = i + off
                ok = (j >= 0) & (j < n)
                put(rx[ok], cu(j[ok]), -ge * G[i[ok], j[ok]])

        # rank-two couplings: J = J_loc + a_f grad(f)^T + a_g grad(g)^T
        L = T["L"]
        a_f = np.zeros(nv)
        a_g = np.zeros(nv)
        a_f[ru] = -g * T["phi2"][1:-1]
        a_g[ru] = -L[1:-1]
        if self.radial:
            a_f[0] = -g * T["phi2"][0]
            a_g[0] = -L[0]
        if not self.freeze_mesh:
            a_g[rx] = -T["Q"][1:-1] / eps
        grad_f = np.zeros(nv)
        wX = self.weight(X)
        m = self.D @ X
        phi1 = 1.0 / gap
        dfdI = -2.0 * spec.alpha * spec.lam / (1.0 + spec.alpha * T["I"]) ** 3
        grad_f[0::2] = dfdI * self.sw * m * wX * T["phi2"]
        gX = self.DT @ (self.sw * phi1 * wX)
        if self.radial:
            gX = gX + self.sw * phi1 * m * quadrature.radial_weight_derivative(
                X, self.N, spec.omega)
        grad_f[1::2] = dfdI * gX
        grad_g = np.zeros(nv)
        kmax = int(np.argmin(gap))
        grad_g[2 * kmax] = -2.0 * gap[kmax]
        Uc = np.column_stack([a_f, a_g])
        Vc = np.column_stack([grad_f, grad_g])
        return ab, Uc, Vc

    def solve(self, ab, Uc, Vc, rhs, lagged=False):
        if lagged:
            return solve_banded((self.kl, self.ku), ab, rhs, check_finite=False)
        Z = solve_banded((self.kl, self.ku), ab, np.column_stack([rhs, Uc]),
                         check_finite=False)
        z0, ZU = Z[:, 0], Z[:, 1:]
        cap = np.eye(Uc.shape[1]) + Vc.T @ ZU
        return z0 - ZU @ np.linalg.solve(cap, Vc.T @ z0)

    # -- one backward Euler step -------------------------------------------

    def scaled_size(self, du, dX, u, X):
        gap = 1.0 - u
        cells = np.diff(X)
        cmin = np.minimum(np.r_[cells[0], cells], np.r_[cells, cells[-1]])
        # positions near x = 1/2 carry ~1e-16 absolute roundoff; tiny cells
        # would otherwise put the relative noise floor above newton_tol
        cmin = np.maximum(cmin, 1e-6)
        return max(float(np.max(np.abs(du) / gap)), float(np.max(np.abs(dX) / cmin)))

    def newton(self, un, Xn, h, control: StepControl, guess=None):
        """Solve one implicit Euler step; returns (u, X) or None on failure."""
        u, X = (un.copy(), Xn.copy()) if guess is None else (guess[0].copy(), guess[1].copy())
        lagged = control.jacobian == "lagged"
        for _ in range(control.newton_max_iters):
            try:
                T = self.terms(u, X)
            except (SingularStateError, MeshTanglingError):
                return None
            R = self.residual(u, X, un, Xn, h, T)
            ab, Uc, Vc = self.jacobian(u, X, un, Xn, h, T)
            try:
                d = self.solve(ab, Uc, Vc, -R, lagged)
            except (np.linalg.LinAlgError, ValueError):
                return None
            if not np.all(np.isfinite(d)):
                return None
            du, dX = d[0::2], d[1::2]
            theta = 1.0
            for _ in range(30):
                un_try = u + theta * du
                Xn_try = X + theta * dX
                if np.max(un_try) < 1.0 and np.all(np.diff(Xn_try) > 0.0):
                    break
                theta *= 0.5
            else:
                return None
            size = theta * self.scaled_size(du, dX, u, X)
            u, X = un_try, Xn_try
            # the pinned end nodes hold only to solver roundoff; restore them exactly
            X[0], X[-1] = Xn[0], Xn[-1]
            if size < control.newton_tol and theta == 1.0:
                return u, X
        return None

    # -- DAE view ----------------------------------------------------------

    def assemble(self, state: SolutionState) -> DaeSystem:
        u, X = np.asarray(state.u, float), np.asarray(state.X, float)
        T = self.terms(u, X)
        n = self.n
        nt = 1 + 2 * n
        g = T["g"]
        rows, cols, vals = [0], [0], [1.0]
        b = np.zeros(nt)
        b[0] = g
        iu = lambda j: 1 + j
        ix = lambda j: 1 + n + j
        inner = range(1, n - 1)
        for j in inner:
            rows += [iu(j), iu(j)]
            cols += [iu(j), ix(j)]
            vals += [1.0, -T["D1"][j - 1]]
            b[iu(j)] = g * T["L"][j]
            if self.freeze_mesh:
                continue
            rows += [ix(j)] * 3
            cols += [ix(j - 1), ix(j), ix(j + 1)]
            vals += [-1.0 / self.dxi ** 2, 2.0 / self.dxi ** 2, -1.0 / self.dxi ** 2]
            b[ix(j)] = g / self.spec.epsilon * T["Q"][j]
        if self.radial:
            rows.append(iu(0))
            cols.append(iu(0))
            vals.append(1.0)
            b[iu(0)] = g * T["L"][0]
        else:
            b[iu(0)] = -u[0]
        b[iu(n - 1)] = -u[-1]
        b[ix(0)] = -X[0]
        b[ix(n - 1)] = 1.0 - X[-1]
        A = sp.csr_matrix((vals, (rows, cols)), shape=(nt, nt))
        y = np.concatenate([[state.t], u, X])
        return DaeSystem(y, A, b, g, T["f"], T["I"])


def assemble(state: SolutionState, spec: ProblemSpec, freeze_mesh: bool = False) -> DaeSystem:
    return Discretization(spec, freeze_mesh).assemble(state)


@dataclass
class RunResult:
    outcome: str  # "quench" | "steady" | "t_max" | "failed"
    frames: list
    series: dict
    spec: ProblemSpec
    message: str = ""
    steps: int = 0
    rejected: int = 0

    @property
    def final(self) -> SolutionState:
        return self.frames[-1]


class Stepper:
    """Adaptive step-doubling driver around Discretization.newton."""

    def __init__(self, spec: ProblemSpec, control: StepControl | None = None):
        self.spec = spec
        self.control = control or StepControl()
        self.disc = Discretization(spec, self.control.freeze_mesh)
        self._prev = None  # (u, X, dtau) of the previous accepted sub-step

    def _guess(self, u, X, h):
        if self._prev is None:
            return None
        pu, pX, ph = self._prev
        r = h / ph
        gu = u + r * (u - pu)
        gX = X + r * (X - pX)
        if np.max(gu) >= 1.0 or np.any(np.diff(gX) <= 0.0):
            return None
        gu[-1] = 0.0
        if not self.disc.radial:
            gu[0] = 0.0
        gX[0], gX[-1] = X[0], X[-1]
        return gu, gX

    def error_norm(self, uF, XF, uH, XH):
        c = self.control
        gap = 1.0 - uH
        T = self.disc.terms(uH, XH)
        ux = np.zeros_like(uH)
        ux[1:-1] = T["D1"]
        e_u = float(np.max(np.abs((uH - uF) - ux * (XH - XF)) / gap))
        cells = np.diff(XH)
        cmin = np.minimum(np.r_[cells[0], cells], np.r_[cells, cells[-1]])
        e_x = float(np.max(np.abs(XH - XF) / cmin))
        return max(e_u / c.error_tol, e_x / c.mesh_tol)

    def step(self, state: SolutionState, dtau: float):
        """Attempt one doubled step of size dtau.

        Returns (substates, accepted, dtau_next); ``substates`` holds the two
        accepted half-step states (empty when rejected).
        """
        c = self.control
        disc = self.disc
        u0 = np.asarray(state.u, float)
        X0 = np.asarray(state.X, float)
        h = dtau
        full = disc.newton(u0, X0, h, c, self._guess(u0, X0, h))
        half1 = disc.newton(u0, X0, 0.5 * h, c, self._guess(u0, X0, 0.5 * h)) if full else None
        half2 = None
        if half1 is not None:
            g1 = 2.0 * half1[0] - u0, 2.0 * half1[1] - X0
            ok = np.max(g1[0]) < 1.0 and np.all(np.diff(g1[1]) > 0.0)
            half2 = disc.newton(half1[0], half1[1], 0.5 * h, c, g1 if ok else None)
        if full is None or half2 is None:
            return [], False, 0.5 * h
        err = self.error_norm(full[0], full[1], half2[0], half2[1])
        du = float(np.max(half2[0]) - np.max(u0))
        fac = 0.9 / math.sqrt(max(err, 1e-12))
        fac = min(2.0, max(0.2, fac))
        if du > c.max_du:
            return [], False, h * min(0.5, 0.9 * c.max_du / du)
        if err > 1.0:
            return [], False, h * min(0.9, fac)
        states = []
        t, tau = state.t, state.tau
        for uu, XX in (half1, half2):
            t += 0.5 * h * g_of_state(uu)
            tau += 0.5 * h
            states.append(SolutionState(tau, t, MeshState(XX), uu))
        self._prev = (half1[0], half1[1], 0.5 * h)
        return states, True, min(c.dtau_max, h * fac)


def series_row(state: SolutionState, spec: ProblemSpec, dtau: float, disc: Discretization):
    from .analysis import energy

    u, X = np.asarray(state.u), np.asarray(state.X)
    I = disc.integral(u, X)
    k = 1.0 / (1.0 + spec.alpha * I) ** 2
    return (state.t, state.tau, state.max_u, g_of_state(u), I, k,
            energy(state, spec), dtau)


def run(spec: ProblemSpec, control: StepControl | None = None,
        state: SolutionState | None = None, stop_max_u: float | None = None) -> RunResult:
    """Integrate until quench, steady state, t > t_max, or max u > stop_max_u."""
    control = control or StepControl()
    stepper = Stepper(spec, control)
    disc = stepper.disc
    state = state or initial_state(spec)
    frames = [state]
    rows = [series_row(state, spec, 0.0, disc)]
    next_gap = state.gap * control.frame_gap_ratio
    dtau = control.dtau
    outcome, message = None, ""
    steps = rejected = 0
    since_frame = 0
    while outcome is None:
        if steps + rejected >= control.max_steps:
            outcome, message = "failed", "step budget exhausted"
            break
        dtau = min(dtau, control.dtau_max)
        if dtau < control.dtau_min:
            raise IntegratorError(
                f"step size fell below dtau_min at t={state.t:.6g}, max u={state.max_u:.6g}",
                last_state=state)
        subs, ok, dtau = stepper.step(state, dtau)
        if not ok:
            rejected += 1
            continue
        for sub in subs:
            steps += 1
            since_frame += 1
            sub.mesh.check_monotone()
            rows.append(series_row(sub, spec, sub.tau - state.tau, disc))
            state = sub
            keep = since_frame >= control.frame_every
            if state.gap <= next_gap:
                keep = True
                while next_gap >= state.gap:
                    next_gap *= control.frame_gap_ratio
            if state.gap < spec.v_stop:
                outcome = "quench"
            elif state.t > spec.t_max:
                outcome = "t_max"
            elif stop_max_u is not None and state.max_u > stop_max_u:
                outcome = "stopped"
            elif np.max(np.abs(disc.physical_rate(state.u, state.X))) < spec.steady_tol:
                outcome = "steady"
            if keep or outcome is not None:
                frames.append(state)
                since_frame = 0
            if outcome is not None:
                break
    series = {name: np.array([r[j] for r in rows]) for j, name in enumerate(SERIES_COLUMNS)}
    log.info("run finished: %s after %d steps (%d rejected), t=%.6g",
             outcome, steps, rejected, state.t)
    return RunResult(outcome, frames, series, spec, message, steps, rejected)
