import numpy as np
import pytest

import reference as ref
from singarc.arm2dof import Arm2DOF, ControlBounds
from singarc.integrate import (IntegratorConfig, integrate_extremal,
                               save_trajectory)
from singarc.pmp import costate_on_surface


@pytest.fixture(scope="session")
def arm():
    return Arm2DOF()


@pytest.fixture(scope="session")
def bounds():
    return ControlBounds()


@pytest.fixture(scope="session")
def lam0(arm):
    return costate_on_surface(arm, ref.X0, ref.LAMBDA2, ref.LAMBDA4)


@pytest.fixture(scope="session")
def extremal(arm, lam0, bounds):
    """The reference singular extremal, integrated once per session."""
    traj = integrate_extremal(arm, ref.X0, lam0, IntegratorConfig(),
                              c=ref.U2_BANG, bounds=bounds)
    assert traj.meta["abort"] is None
    return traj


@pytest.fixture(scope="session")
def extremal_file(extremal, tmp_path_factory):
    path = tmp_path_factory.mktemp("traj") / "extremal.csv"
    save_trajectory(extremal, str(path))
    return str(path)


@pytest.fixture(scope="session")
def sat_sing_sat(arm, extremal):
    """Bang flanks grafted onto the t in [0.1, 0.6] slice of the extremal.

    u1 = +20 on the flanks: the switching function leaves zero with
    positive curvature there, so phi1 > 0 and the upper bound is the
    sign-consistent saturation.
    """
    return ref.graft_saturated_flanks(arm, extremal, start_idx=1000,
                                      stop_idx=6000, n_flank=500)


@pytest.fixture(scope="session")
def spiked(extremal):
    """Extremal with +-5 N.m spikes on 1% of u1 samples, plus the rows."""
    rng = np.random.default_rng(7)
    return ref.with_spiked_u1(extremal, rng)
