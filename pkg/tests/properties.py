"""Seeded property checks shared by the unit suites and the acceptance gate."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from memsquench import quadrature
from memsquench.analysis import fit_temporal_exponent
from memsquench.model import ProblemSpec, coefficients_from_I
from memsquench.quadrature import MeshState


@given(n=st.integers(8, 300), degree=st.integers(0, 3),
       coeffs=st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def quadrature_exact_on_cubics(n, degree, coeffs):
    """Simpson (with the 3/8 closing panel for odd n) integrates cubics exactly."""
    c = np.array(coeffs[:degree + 1])
    mesh = MeshState.uniform(n)
    x = mesh.X
    vals = np.polyval(c[::-1], x)
    exact = sum(ci / (i + 1) for i, ci in enumerate(c))
    assert abs(quadrature.integrate(vals, mesh) - exact) <= 1e-10 * (1 + np.abs(c).sum())


@given(n=st.integers(8, 200), seed=st.integers(0, 2 ** 31 - 1),
       amp=st.floats(0.0, 0.999))
def monotone_mesh_has_positive_metric(n, seed, amp):
    """Any perturbation moving nodes by less than half the neighbouring cell keeps x_xi > 0."""
    rng = np.random.default_rng(seed)
    X = np.linspace(0.0, 1.0, n + 1)
    h = np.diff(X)
    shift = amp * 0.5 * np.minimum(h[:-1], h[1:]) * rng.uniform(-1, 1, n - 1)
    X[1:-1] += shift
    mesh = MeshState(X)
    mesh.check_monotone()
    # one-sided end formulas can lose positivity on strongly graded meshes;
    # the centred interior ones cannot
    assert np.all(quadrature.metric_term(mesh)[1:-1] > 0.0)


@given(p=st.floats(0.25, 0.5), T=st.floats(0.1, 10.0), scale=st.floats(0.2, 1.5))
def estimator_recovers_power_law(p, T, scale):
    s = np.geomspace(1e-8, 1e-1, 400)
    t = T - s
    v = scale * s ** p
    slope, _ = fit_temporal_exponent(t, 1.0 - v, T, window=(v.min(), v.max()))
    assert abs(slope - p) < 1e-3


@given(I=st.floats(0.0, 1e6), alpha=st.floats(0.0, 10.0), lam=st.floats(0.0, 100.0))
def nonlocal_identity(I, alpha, lam):
    co = coefficients_from_I(I, ProblemSpec(lam=lam, alpha=alpha))
    assert abs(co.k * (1.0 + alpha * I) ** 2 - 1.0) < 1e-12
    assert abs(co.f - lam * co.k) <= 1e-12 * max(1.0, lam)


ALL = (quadrature_exact_on_cubics, monotone_mesh_has_positive_metric,
       estimator_recovers_power_law, nonlocal_identity)
