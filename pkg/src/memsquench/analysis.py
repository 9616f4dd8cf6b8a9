"""Post-processing of trajectories: energy, quench time, rates and bound checks."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import quadrature
from .errors import InsufficientSamplesError, SingularStateError, WindowEmptyError
from .model import INTERVAL, ProblemSpec, SolutionState, integral_I


def gradient(state: SolutionState) -> np.ndarray:
    """Nodal u_x as u_xi / x_xi (centred inside, one-sided at the ends)."""
    D = quadrature.metric_matrix(state.mesh.M)
    return (D @ state.u) / quadrature.metric_term(state.mesh)


def energy(state: SolutionState, spec: ProblemSpec) -> float:
    """Lyapunov functional 1/2 int |grad u|^2 + (lambda/alpha) / (1 + alpha I).

    Not defined for alpha = 0 (returns nan).
    """
    if spec.alpha == 0.0:
        return math.nan
    w = spec.weight(state.X)
    grad2 = quadrature.integrate(gradient(state) ** 2, state.mesh, w)
    I = integral_I(state.u, state.mesh, spec)
    return 0.5 * grad2 + spec.lam / spec.alpha / (1.0 + spec.alpha * I)


def _fit(x, y):
    """Least-squares slope/intercept with 95% half-width on the slope."""
    res = stats.linregress(x, y)
    n = len(x)
    hw = float(stats.t.ppf(0.975, n - 2) * res.stderr) if n > 2 else math.inf
    return float(res.slope), float(res.intercept), hw


def estimate_quench_time(t, max_u, min_samples: int = 10) -> float:
    """Extrapolate T_q from (1 - max u)^3 = s (T_q - t) over the last decade of the gap."""
    t = np.asarray(t, float)
    v = 1.0 - np.asarray(max_u, float)
    if np.count_nonzero(v < 1e-2) < min_samples:
        raise InsufficientSamplesError(
            f"need >= {min_samples} samples with 1 - max u < 1e-2")
    sel = v <= 10.0 * v.min()
    if np.count_nonzero(sel) < 3:
        sel = np.zeros_like(v, dtype=bool)
        sel[np.argsort(v)[:min_samples]] = True
    t0 = t[sel].max()
    y = v[sel] ** 3
    # relative weighting keeps the intercept accurate at the smallest gaps
    slope, intercept = np.polyfit(t[sel] - t0, y, 1, w=1.0 / y)
    if slope >= 0.0:
        raise InsufficientSamplesError("gap^3 is not decreasing over the fit window")
    return float(t0 - intercept / slope)


def fit_temporal_exponent(t, max_u, T_q: float, window=(1e-3, 1e-2)):
    """Slope of ln(1 - max u) against ln(T_q - t) for gaps inside ``window``."""
    t = np.asarray(t, float)
    v = 1.0 - np.asarray(max_u, float)
    lo, hi = window
    sel = (v >= lo) & (v <= hi) & (T_q - t > 0.0)
    if np.count_nonzero(sel) < 3:
        raise WindowEmptyError(f"fewer than 3 samples with gap in [{lo:g}, {hi:g}]")
    slope, _, hw = _fit(np.log(T_q - t[sel]), np.log(v[sel]))
    return slope, hw


def fit_spatial_exponent(frame: SolutionState, x_q: float, inner_cells: int = 3,
                         outer: float = 0.25):
    """Slope of ln(1 - u(x)) against ln|x - x_q| on the final profile.

    Nodes within ``inner_cells`` cells of x_q (counted along the mesh) and
    nodes farther than ``outer`` from x_q are excluded.
    """
    X = np.asarray(frame.X)
    v = 1.0 - np.asarray(frame.u)
    iq = int(np.argmin(np.abs(X - x_q)))
    idx = np.arange(X.size)
    r = np.abs(X - x_q)
    sel = (np.abs(idx - iq) > inner_cells) & (r <= outer) & (r > 0.0)
    if np.count_nonzero(sel) < 3:
        raise WindowEmptyError("spatial fit window holds fewer than 3 nodes")
    slope, _, hw = _fit(np.log(r[sel]), np.log(v[sel]))
    return slope, hw


def lower_bound_constant(spec: ProblemSpec) -> tuple[float, float]:
    """(C, C_hat) with C = 1/(1 + alpha |Omega|)^2 and C_hat = (3 lambda C)^(1/3)."""
    C = 1.0 / (1.0 + spec.alpha * spec.domain_measure) ** 2
    return C, (3.0 * spec.lam * C) ** (1.0 / 3.0)


def check_lower_bound(t, max_u, T_q: float, spec: ProblemSpec, slack: float = 1e-10):
    """Check 1 - max u(t) <= C_hat (T_q - t)^(1/3) at every sample.

    Returns (passed, worst_margin) where margin = C_hat (T_q - t)^(1/3) - (1 - max u).
    """
    _, C_hat = lower_bound_constant(spec)
    t = np.asarray(t, float)
    v = 1.0 - np.asarray(max_u, float)
    rem = T_q - t
    bound = np.where(rem > 0.0, C_hat * np.cbrt(np.maximum(rem, 0.0)), -np.inf)
    margin = bound - v
    worst = float(np.min(margin))
    return bool(worst >= -slack), worst


def barrier_constant(frame: SolutionState, x_q: float, k: float) -> float:
    """min over nodes with r > 0 of (1 - u) / r^k, r = |x - x_q|."""
    r = np.abs(np.asarray(frame.X) - x_q)
    v = 1.0 - np.asarray(frame.u)
    sel = r > 0.0
    return float(np.min(v[sel] / r[sel] ** k))


def check_barrier(frames, k: float = 0.75, x_q: float | None = None, collapse: float = 0.5):
    """Check that c(t) = min (1-u)/r^k does not collapse below ``collapse`` * c(t_1).

    t_1 is the first frame with max u > 1/2.  Returns (passed, inf_c).
    """
    if x_q is None:
        x_q = quench_location(frames[-1])[0]
    c = np.array([barrier_constant(fr, x_q, k) for fr in frames])
    maxu = np.array([fr.max_u for fr in frames])
    after = np.nonzero(maxu > 0.5)[0]
    ref = c[after[0]] if after.size else c[0]
    later = c[after[0]:] if after.size else c
    inf_c = float(np.min(later))
    return bool(inf_c >= collapse * ref), inf_c


def norm_monitor(frames, m: float, spec: ProblemSpec) -> np.ndarray:
    """Per-frame weighted L^m norms of (1 - u)^-1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    out = []
    for fr in frames:
        gap = 1.0 - np.asarray(fr.u)
        if np.any(gap <= 0.0):
            raise SingularStateError("frame has u >= 1")
        out.append(quadrature.integrate(gap ** -m, fr.mesh, spec.weight(fr.X)) ** (1.0 / m))
    return np.array(out)


def quench_location(frame: SolutionState, v_stop: float = 1e-4, radius_cells: float = 5.0):
    """Return (x_q, single_point).

    x_q is the node of largest u.  The single-point check requires
    u < 1 - 10 v_stop at every node farther than ``radius_cells`` nominal
    cell widths (|Omega| / M on the computational grid) from x_q.
    """
    X = np.asarray(frame.X)
    u = np.asarray(frame.u)
    iq = int(np.argmax(u))
    x_q = float(X[iq])
    width = (X[-1] - X[0]) / (X.size - 1)
    far = np.abs(X - x_q) > radius_cells * width
    single = bool(np.all(u[far] < 1.0 - 10.0 * v_stop))
    return x_q, single


def detect_flattening(t, max_u, threshold: float = 0.2, stop_gap: float = 0.1):
    """Look for a transient plateau in d(max u)/dt.

    The early peak rate is the largest rate before the rate first starts
    to fall.  The plateau is the smallest rate seen after that peak and
    before the rate climbs back above the peak.  Returns (found, ratio,
    peak_rate, plateau_rate) with ratio = plateau / peak.
    """
    t = np.asarray(t, float)
    m = np.asarray(max_u, float)
    keep = (1.0 - m) > stop_gap
    t, m = t[keep], m[keep]
    dt = np.diff(t)
    ok = dt > 0
    rate = np.diff(m)[ok] / dt[ok]
    if rate.size < 3:
        return False, math.nan, math.nan, math.nan
    peak_i = 0
    while peak_i + 1 < rate.size and rate[peak_i + 1] >= rate[peak_i]:
        peak_i += 1
    peak = rate[peak_i]
    rest = rate[peak_i + 1:]
    above = np.nonzero(rest > peak)[0]
    stop = above[0] if above.size else rest.size
    if stop == 0:
        return False, math.nan, peak, math.nan
    plateau = float(np.min(rest[:stop]))
    reaccel = above.size > 0
    ratio = plateau / peak
    return bool(ratio < threshold and reaccel), ratio, float(peak), plateau


@dataclass
class QuenchReport:
    outcome: str
    T_q: float = math.nan
    x_q: float = math.nan
    p_time: float = math.nan
    p_time_hw: float = math.nan
    p_space: float = math.nan
    p_space_hw: float = math.nan
    C_hat: float = math.nan
    H_sup: float = math.nan
    E_0: float = math.nan
    bound_checks: list = field(default_factory=list)  # (name, passed, margin)
    notes: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.bound_checks)

    def as_flat(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("bound_checks", "notes")}
        for name, ok, margin in self.bound_checks:
            d[f"check.{name}"] = "pass" if ok else "fail"
            d[f"check.{name}.margin"] = margin
        for i, note in enumerate(self.notes):
            d[f"note.{i}"] = note
        return d

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.txt", "w") as fh:
            for key, val in self.as_flat().items():
                fh.write(f"{key}={val}\n")
        with open(out / "report.json", "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=float)
        with open(out / "checks.txt", "w") as fh:
            fh.write(f"{'check':<24}{'result':<8}margin\n")
            for name, ok, margin in self.bound_checks:
                fh.write(f"{name:<24}{'PASS' if ok else 'FAIL':<8}{margin:.6g}\n")


def analyze(frames, series: dict, spec: ProblemSpec, outcome: str,
            barrier_k: float = 0.75) -> QuenchReport:
    """Build a QuenchReport from a finished run."""
    I = np.asarray(series["I"])
    rep = QuenchReport(outcome, H_sup=float(np.max(1.0 + spec.alpha * I)))
    rep.C_hat = lower_bound_constant(spec)[1]
    if spec.geometry == INTERVAL:
        rep.notes.append("lower-bound constant uses C = 1/(1+alpha)^2 for the unit interval")
    E = np.asarray(series["E"])
    rep.E_0 = float(E[0])
    if np.all(np.isfinite(E)) and E.size > 1:
        dE = float(np.max(np.diff(E)))
        rep.bound_checks.append(("energy_decrease", dE <= 1e-8, -dE))
    if outcome != "quench":
        return rep
    t, mu = np.asarray(series["t"]), np.asarray(series["max_u"])
    final = frames[-1]
    rep.x_q, single = quench_location(final, spec.v_stop)
    rep.bound_checks.append(("single_point", single, 0.0))
    try:
        rep.T_q = estimate_quench_time(t, mu)
    except InsufficientSamplesError as exc:
        rep.notes.append(f"T_q: {exc}")
        return rep
    try:
        rep.p_time, rep.p_time_hw = fit_temporal_exponent(
            t, mu, rep.T_q, (10 * spec.v_stop, 100 * spec.v_stop))
    except WindowEmptyError as exc:
        rep.notes.append(f"p_time: {exc}")
    try:
        rep.p_space, rep.p_space_hw = fit_spatial_exponent(final, rep.x_q)
    except WindowEmptyError as exc:
        rep.notes.append(f"p_space: {exc}")
    ok, margin = check_lower_bound(t, mu, rep.T_q, spec)
    rep.bound_checks.append(("lower_bound", ok, margin))
    ok, inf_c = check_barrier(frames, barrier_k, rep.x_q)
    rep.bound_checks.append((f"barrier_k{barrier_k:g}", ok, inf_c))
    return rep
