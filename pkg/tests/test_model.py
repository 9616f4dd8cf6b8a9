import math

import numpy as np
import pytest

import properties
from memsquench import movingmesh
from memsquench.errors import ConfigError, SingularStateError
from memsquench.model import (InitialData, ProblemSpec, SolutionState, coefficients_from_I,
                              initial_state, integral_I, nonlocal_coefficients, reaction_term,
                              volume_unit_ball)
from memsquench.quadrature import MeshState


def test_unit_ball_volumes():
    assert volume_unit_ball(1) == pytest.approx(2.0)
    assert volume_unit_ball(2) == pytest.approx(math.pi)
    assert volume_unit_ball(3) == pytest.approx(4.0 * math.pi / 3.0)


def test_nonlocal_identity_property():
    properties.nonlocal_identity()


def test_zero_state_integral_is_domain_measure():
    for spec in (ProblemSpec(), ProblemSpec(geometry="ball", dim=2, alpha=2.0, lam=71.0)):
        s = initial_state(spec)
        assert integral_I(s.u, s.mesh, spec) == pytest.approx(spec.domain_measure, rel=1e-12)


def test_zero_state_coefficients():
    s = initial_state(ProblemSpec(lam=10.0, alpha=1.0))
    co = nonlocal_coefficients(s, ProblemSpec(lam=10.0, alpha=1.0))
    assert co.k == pytest.approx(0.25)
    assert co.f == pytest.approx(2.5)
    np.testing.assert_allclose(reaction_term(s, co), 2.5)


def test_reaction_term_rejects_quenched_node():
    mesh = MeshState.uniform(10)
    u = np.zeros(11)
    u[5] = 1.0
    with pytest.raises(SingularStateError):
        reaction_term(SolutionState(0.0, 0.0, mesh, u), coefficients_from_I(1.0, ProblemSpec()))


@pytest.mark.parametrize("kw", [dict(lam=-1.0), dict(alpha=-0.5), dict(geometry="square"),
                                dict(dim=2), dict(mesh_size=4), dict(epsilon=0.0),
                                dict(v_stop=1.5)])
def test_invalid_spec(kw):
    with pytest.raises(ConfigError):
        ProblemSpec(**kw)


def test_lambda_zero_is_allowed():
    assert ProblemSpec(lam=0.0).lam == 0.0


def test_parse_initial_data(tmp_path):
    assert InitialData.parse("zero").kind == "zero"
    b = InitialData.parse("bump:0.5")
    assert (b.kind, b.amplitude) == ("bump", 0.5)
    path = tmp_path / "u0.csv"
    np.savetxt(path, np.column_stack([[0, 0.5, 1], [0, 0.3, 0]]), delimiter=",",
               header="x,u", comments="")
    t = InitialData.parse(f"file:{path}")
    np.testing.assert_allclose(t.evaluate(np.array([0.25]), "interval"), [0.15])
    for bad in ("bump:x", "file:/nonexistent.csv", "spline"):
        with pytest.raises(ConfigError):
            InitialData.parse(bad)


def test_initial_data_out_of_range():
    with pytest.raises(ConfigError):
        initial_state(ProblemSpec(initial_data=InitialData("bump", 1.2)))


def test_bump_starts_on_equidistributed_mesh():
    spec = ProblemSpec(lam=6.0, initial_data=InitialData("bump", 0.9))
    s = initial_state(spec)
    np.testing.assert_allclose(s.u, 0.9 * np.sin(np.pi * s.X), atol=1e-15)
    masses = movingmesh.cell_masses(s.X, movingmesh.monitor(s.u, spec.smoothing_passes))
    assert masses.max() / masses.min() < 1 + 1e-8
    assert np.diff(s.X).min() < 0.5 / spec.mesh_size


def test_zero_data_uniform_mesh():
    s = initial_state(ProblemSpec(mesh_size=20))
    np.testing.assert_array_equal(s.X, np.linspace(0, 1, 21))
    assert s.max_u == 0.0
