"""Shared fixtures: one cheap base state reused across test modules."""
import numpy as np
import pytest

from photoconv.basestate import (
    PhototaxisCurve,
    SuspensionParams,
    solve_base_state,
)
from photoconv.perturb import angular_quadrature
from photoconv.radiative import solve_basic_radiation


def make_params(Sc=20.0, Vc=15.0, tauH=0.5, omega=0.4, A1=0.0, B=0.26,
                theta_i_deg=0.0, upsilon=0.252):
    return SuspensionParams(
        Sc=Sc, Vc=Vc, tauH=tauH, omega=omega, A1=A1, B=B,
        theta_i_deg=theta_i_deg, curve=PhototaxisCurve(upsilon=upsilon),
    )


def make_base_state(n_z=129, **kw):
    p = make_params(**kw)
    rad = solve_basic_radiation(p.tauH, p.omega, A1=p.A1, B=p.B,
                                theta0=p.theta0)
    return solve_base_state(p, rad, n_z=n_z)


@pytest.fixture(scope="session")
def bs_default():
    """Vertical-beam reference case: V_c=15, tau_H=0.5, omega=0.4, B=0.26."""
    return make_base_state()


@pytest.fixture(scope="session")
def bs_oblique():
    """Oblique-beam case with anisotropic scattering (theta_i=40, A1=0.4)."""
    return make_base_state(A1=0.4, theta_i_deg=40.0)


@pytest.fixture(scope="session")
def quad_default():
    return angular_quadrature(24, 16)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


# one-line verdicts collected by the acceptance tests, echoed after the run
acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
