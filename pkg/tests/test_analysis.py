import math

import numpy as np
import pytest

import properties
from memsquench import analysis
from memsquench.errors import InsufficientSamplesError, WindowEmptyError
from memsquench.model import InitialData, ProblemSpec, SolutionState, initial_state
from memsquench.quadrature import MeshState


def _frame(u, X=None):
    X = np.linspace(0, 1, len(u)) if X is None else X
    return SolutionState(0.0, 0.0, MeshState(X), np.asarray(u))


def test_estimator_recovers_synthetic_exponents():
    properties.estimator_recovers_power_law()


def test_quench_time_from_cube_law():
    T = 0.53
    s = np.geomspace(1e-12, 1e-1, 300)[::-1]
    t = T - s
    v = (2.0 * s) ** (1 / 3)
    assert analysis.estimate_quench_time(t, 1 - v) == pytest.approx(T, abs=1e-12)
    with pytest.raises(InsufficientSamplesError):
        analysis.estimate_quench_time(t[:5], 1 - v[:5])


def test_temporal_window_empty():
    with pytest.raises(WindowEmptyError):
        analysis.fit_temporal_exponent([0, 1], [0.1, 0.2], 2.0)


def test_spatial_exponent_synthetic():
    x = np.linspace(0, 1, 401)
    v = 1e-4 + np.abs(x - 0.5) ** (2 / 3)
    p, hw = analysis.fit_spatial_exponent(_frame(1 - v, x), 0.5)
    assert p == pytest.approx(2 / 3, abs=5e-3)


def test_energy_of_known_profile():
    # u = a sin(pi x): 1/2 int u_x^2 = a^2 pi^2 / 4
    a = 0.1
    spec = ProblemSpec(lam=2.0, alpha=1.0, mesh_size=400)
    x = np.linspace(0, 1, 401)
    fr = _frame(a * np.sin(np.pi * x), x)
    # int_0^1 dx / (1 - a sin(pi x)) in closed form
    I = 2.0 / (math.pi * math.sqrt(1 - a * a)) * (math.pi / 2 + math.asin(a))
    E = analysis.energy(fr, spec)
    assert E == pytest.approx(a * a * math.pi ** 2 / 4 + 2.0 / (1 + I), rel=1e-5)
    assert math.isnan(analysis.energy(fr, spec.with_(alpha=0.0)))


def test_lower_bound_check_and_subsampling():
    spec = ProblemSpec(lam=10.0)
    C, C_hat = analysis.lower_bound_constant(spec)
    assert C == 0.25 and C_hat == pytest.approx(7.5 ** (1 / 3))
    T = 1.0
    t = np.linspace(0, 0.999, 200)
    v = 0.5 * C_hat * (T - t) ** (1 / 3)
    assert analysis.check_lower_bound(t, 1 - v, T, spec)[0]
    assert analysis.check_lower_bound(t[::9], 1 - v[::9], T, spec)[0]
    v_bad = 2.0 * C_hat * (T - t) ** (1 / 3)
    assert not analysis.check_lower_bound(t, 1 - v_bad, T, spec)[0]


def test_barrier_on_zero_frames():
    frames = [_frame(np.zeros(11))] * 3
    ok, c = analysis.check_barrier(frames, 0.75, x_q=0.0)
    assert ok and c >= 1.0


def test_norm_monitor_zero_state():
    spec = ProblemSpec()
    s = initial_state(spec)
    assert analysis.norm_monitor([s], 2, spec)[0] == pytest.approx(1.0)
    ball = ProblemSpec(geometry="ball", dim=2)
    assert analysis.norm_monitor([initial_state(ball)], 2, ball)[0] == pytest.approx(math.sqrt(math.pi))
    with pytest.raises(ValueError):
        analysis.norm_monitor([s], 0.5, spec)


def test_quench_location_single_and_double():
    x = np.linspace(0, 1, 201)
    one = 1 - (1e-4 + np.abs(x - 0.5) ** (2 / 3))
    x_q, single = analysis.quench_location(_frame(one, x))
    assert x_q == 0.5 and single
    two = 1 - (5e-5 + np.minimum(np.abs(x - 0.3), np.abs(x - 0.7)) ** (2 / 3))
    assert not analysis.quench_location(_frame(two, x))[1]


def test_flattening_detector():
    t = np.linspace(0, 3, 3001)
    m = 0.3 * np.tanh(3 * t) + 0.02 * t + 2.0 * np.maximum(t - 2.5, 0) ** 2
    found, ratio, peak, plateau = analysis.detect_flattening(t, m)
    assert found and ratio < 0.2
    assert not analysis.detect_flattening(t, 0.3 * np.tanh(3 * t))[0]


def test_report_round_trip(tmp_path):
    rep = analysis.QuenchReport("quench", T_q=0.5, bound_checks=[("x", True, 1.0), ("y", False, -1.0)])
    rep.write(tmp_path)
    text = (tmp_path / "report.txt").read_text()
    assert "T_q=0.5" in text and "check.y=fail" in text
    assert not rep.all_passed
    assert (tmp_path / "report.json").exists() and (tmp_path / "checks.txt").exists()
