import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from savflow import problems

coords = st.floats(-2, 2, allow_nan=False)


def test_manufactured_force_consistent():
    for nu in (1.0, 1e-3):
        assert problems.mms_strong_residual(nu, n_points=20) <= 1e-10


def test_wrong_viscosity_is_detected():
    # force for nu=1 used with nu=2 must show a residual
    f = problems.mms_force(1.0)
    g = problems.mms_force(2.0)
    assert abs(f(0.3, 0.1, 0.0)[0] - g(0.3, 0.1, 0.0)[0]) > 1


@given(coords, coords, st.floats(0, 10))
def test_rotating_force_is_tangential(x, y, t):
    f1, f2 = problems.rotating_force(x, y, t)
    assert abs(f1 * x + f2 * y) <= 1e-12 * (1 + abs(f1) + abs(f2))


@given(coords, coords, st.floats(0, 1))
def test_manufactured_velocity_gradient(x, y, t):
    h = 1e-6
    G = problems.mms_velocity_grad(np.array([x]), np.array([y]), t)
    for d, (dx, dy) in enumerate([(h, 0), (0, h)]):
        up = problems.mms_velocity(x + dx, y + dy, t)
        um = problems.mms_velocity(x - dx, y - dy, t)
        for c in range(2):
            assert abs((up[c] - um[c]) / (2 * h) - G[c][d][0]) < 1e-6


def test_channel_profile():
    y = np.linspace(0, 0.41, 11)
    u1, u2 = problems.channel_profile(0 * y, y, 0.0)
    assert np.all(u1 == 0) and np.all(u2 == 0)
    u1, _ = problems.channel_profile(0 * y, y, 4.0)
    assert math.isclose(u1.max(), 1.5, rel_tol=1e-12)
    # mean over the inlet equals 1 at the peak time
    yy = np.linspace(0, 0.41, 2001)
    mean = np.trapezoid(problems.channel_profile(0 * yy, yy, 4.0)[0], yy) / 0.41
    assert abs(mean - 1.0) < 1e-6
