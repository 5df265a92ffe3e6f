import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from savflow import problems
from savflow.diagnostics import (DRAG_PREFACTOR, Recorder, aggregate_in_time, drag_lift, energy,
                                 energy_identity_check, enstrophy, error_norms, poincare_bound,
                                 pressure_drop, sav_bound_check, snapshot_errors, stability_ledger)
from savflow.mesh import CYLINDER, CYLINDER_RADIUS, build_channel_cylinder, build_unit_square
from savflow.spaces import DirichletBc, FeFunction, FeSpace, interpolate, l2_project_curl
from savflow.solver import ProblemSetup, SavParameters, SavSolver


@pytest.fixture(scope="module")
def square():
    m = build_unit_square(4)
    return m, FeSpace(m, 2), FeSpace(m, 1)


@pytest.fixture(scope="module")
def channel():
    m = build_channel_cylinder(0.1, 0.018)
    return m, FeSpace(m, 2), FeSpace(m, 1)


def test_zero_field(square):
    _, V, _ = square
    u = FeFunction.zeros(V, vector=True)
    assert energy(u) == 0.0 and enstrophy(u, 0.3) == 0.0


def test_rigid_rotation_enstrophy(square):
    _, V, _ = square
    u = interpolate(lambda x, y: (-y, x), V)
    assert math.isclose(enstrophy(u, 0.01), 2 * 0.01, rel_tol=1e-12)


def test_manufactured_energy_at_start():
    errs = []
    for n in (8, 16):
        u = interpolate(lambda x, y: problems.mms_velocity(x, y, 0.0), FeSpace(build_unit_square(n), 2))
        errs.append(abs(energy(u) - 0.5))
    assert errs[1] < 1e-4 and errs[0] / errs[1] > 6


def _homogeneous_run(mesh, steps=3, sav=True):
    force = lambda x, y, t: (np.sin(3 * y) * (1 + t), x * y)
    setup = ProblemSetup.taylor_hood(mesh, [DirichletBc(sorted(mesh.markers))], force)
    params = SavParameters(nu=0.05, dt=0.05, t_end=steps * 0.05, alpha1=0.02, alpha2=0.1, sav_enabled=sav)
    solver = SavSolver(setup, params)
    rec = Recorder(setup, params)
    states = []
    records = solver.run([lambda old, new, rep: states.append((old, new, rep))], recorder=rec)
    return setup, params, records, states, rec


@pytest.mark.parametrize("sav", [True, False])
def test_energy_identity_holds_each_step(square, sav):
    setup, params, records, _, rec = _homogeneous_run(square[0], sav=sav)
    assert len(rec.ledgers) == 3
    for r in records[1:]:
        assert r.energy_identity_residual <= 1e-9


def test_energy_identity_negative_control(square):
    setup, params, _, states, _ = _homogeneous_run(square[0])
    old, new, rep = states[-1]
    u = new.u_curr.flat.copy()
    bumped = FeFunction(new.u_curr.space, u + 1e-3 * np.random.default_rng(0).standard_normal(u.shape))
    good = energy_identity_check(new.u_curr, old.u_curr, old.u_prev, rep.s_next, params.dt, params.nu,
                                 params.alpha1, params.alpha2, setup.force, new.time)
    bad = energy_identity_check(bumped, old.u_curr, old.u_prev, rep.s_next, params.dt, params.nu,
                                params.alpha1, params.alpha2, setup.force, new.time)
    assert good.relative_residual < 1e-9
    assert bad.relative_residual > 1e-5


def test_identity_of_zero_solution(square):
    _, V, L = square
    z = FeFunction.zeros(V, vector=True)
    led = energy_identity_check(z, z, z, FeFunction.zeros(L), 0.1, 1.0, 0.1, 0.1, None, 0.1)
    assert led.residual == 0.0 and led.relative_residual == 0.0


def test_energy_identity_not_applied_to_inhomogeneous_data(square):
    m = square[0]
    setup = ProblemSetup.taylor_hood(m, problems.mms_boundary(), problems.mms_force(1.0),
                                     lambda x, y: problems.mms_velocity(x, y, 0.0))
    params = SavParameters(nu=1.0, dt=0.01, t_end=0.01, alpha1=0.01)
    records = SavSolver(setup, params).run()
    assert records[-1].energy_identity_residual is None


def test_sav_bound(square):
    _, V, L = square
    u = interpolate(lambda x, y: (-y, x), V)
    assert abs(sav_bound_check(l2_project_curl(u, L), u)) < 1e-12
    z = FeFunction.zeros(V, vector=True)
    assert sav_bound_check(l2_project_curl(z, L), z) == 0.0


@given(st.integers(0, 2 ** 31 - 1))
def test_sav_bound_random(seed):
    m = build_unit_square(3)
    V, L = FeSpace(m, 2), FeSpace(m, 1)
    u = FeFunction(V, np.random.default_rng(seed).standard_normal((2, V.n_dofs)))
    assert sav_bound_check(l2_project_curl(u, L), u) >= -1e-12


def test_stability_ledger_trivial(square):
    m = square[0]
    setup = ProblemSetup.taylor_hood(m, [DirichletBc([1])])
    params = SavParameters(nu=1.0, dt=0.1, t_end=0.3, alpha1=0.1)
    records = SavSolver(setup, params).run()
    assert stability_ledger(records, params, poincare_bound(m)) == (0.0, 0.0)


def test_stability_ledger_forced(square):
    setup, params, records, _, _ = _homogeneous_run(square[0], steps=5)
    lhs, rhs = stability_ledger(records, params, poincare_bound(square[0]))
    assert 0 < lhs <= rhs


def test_poincare_bound():
    assert math.isclose(poincare_bound(build_unit_square(2)), 1 / math.pi)


def _polygon_area(mesh):
    edges = mesh.boundary_edges[mesh.marked_edges([CYLINDER])]
    v = mesh.vertices
    # obstacle edges are oriented with the fluid on the left, i.e. clockwise about the hole
    return -0.5 * sum(v[a, 0] * v[b, 1] - v[b, 0] * v[a, 1] for a, b, _ in edges)


def test_drag_of_constant_pressure_vanishes(channel):
    m, V, Q = channel
    u = FeFunction.zeros(V, vector=True)
    cd, cl = drag_lift(u, interpolate(lambda x, y: 1.0 + 0 * x, Q), m, 1e-3)
    assert abs(cd) < 1e-12 and abs(cl) < 1e-12


def test_drag_of_linear_pressure_matches_divergence_theorem(channel):
    m, V, Q = channel
    u = FeFunction.zeros(V, vector=True)
    area = _polygon_area(m)
    assert abs(area - math.pi * CYLINDER_RADIUS ** 2) < 2e-4
    cd, cl = drag_lift(u, interpolate(lambda x, y: x, Q), m, 1e-3)
    assert math.isclose(cd, -DRAG_PREFACTOR * area, rel_tol=1e-12)
    assert abs(cl) < 1e-12
    cd, cl = drag_lift(u, interpolate(lambda x, y: y, Q), m, 1e-3)
    assert abs(cd) < 1e-12 and math.isclose(cl, -DRAG_PREFACTOR * area, rel_tol=1e-12)


def test_viscous_drag_of_rigid_rotation(channel):
    # u = (-(y - yc), x - xc): du_t/dn is constant on the circle
    m, V, Q = channel
    u = interpolate(lambda x, y: (-(y - 0.2), x - 0.2), V)
    cd, cl = drag_lift(u, FeFunction.zeros(Q), m, 1.0)
    assert abs(cd) < 1e-10 and abs(cl) < 1e-10


def test_drag_requires_obstacle(square):
    _, V, Q = square
    with pytest.raises(ValueError):
        drag_lift(FeFunction.zeros(V, vector=True), FeFunction.zeros(Q), square[0], 1.0)


def test_pressure_drop(channel):
    m, _, Q = channel
    assert abs(pressure_drop(interpolate(lambda x, y: 3.0 + 0 * x, Q))) < 1e-13
    assert math.isclose(pressure_drop(interpolate(lambda x, y: x, Q)), -0.1, rel_tol=1e-12)


def test_error_norms_vanish_for_exact_field(square):
    _, V, _ = square
    exact = lambda x, y, t: (x * x * (1 + t), x * y)
    grad = lambda x, y, t: [[2 * x * (1 + t), 0 * x], [y, x]]
    snaps = [(t, interpolate(exact, V, t)) for t in (0.1, 0.2)]
    for mode in ("l2_in_time_of_l2", "l2_in_time_of_h1", "time_rms_of_l2", "time_rms_of_h1"):
        assert error_norms(snaps, exact, mode, grad) < 1e-13


def test_error_norm_aggregation():
    e = [1.0, 2.0, 2.0]
    assert math.isclose(aggregate_in_time(e, 0.5, "l2_in_time_of_l2"), math.sqrt(0.5 * 9))
    assert math.isclose(aggregate_in_time(e, 0.5, "time_rms_of_h1"), math.sqrt(3.0))
    assert aggregate_in_time([], 0.5, "time_rms_of_l2") == 0.0
    with pytest.raises(ValueError):
        aggregate_in_time(e, 0.5, "max")


def test_snapshot_error_of_shifted_field(square):
    _, V, _ = square
    u = interpolate(lambda x, y: (x, 0 * x), V)
    l2, h1 = snapshot_errors(u, lambda x, y, t: (x + 1.0, 0 * x), lambda x, y, t: [[1 + 0 * x, 0 * x], [0 * x, 0 * x]], 0.0)
    assert math.isclose(l2, 1.0, rel_tol=1e-12) and h1 < 1e-13
