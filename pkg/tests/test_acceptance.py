"""Exit criteria at full scale and full tolerance.

Each test prints one ``criterion N: PASS|FAIL`` line followed by its rows,
and the lines are repeated in the terminal summary. A failing row fails the
test; nothing here is loosened.
"""

import pytest

from narrowescape import validation

pytestmark = [pytest.mark.acceptance]


def test_criterion_1_patch_log_slope(criterion):
    criterion(1, "Neumann log slope near a curved patch", validation.criterion_1_patch())


def test_criterion_2_ball_neumann_function(criterion):
    criterion(2, "ball Neumann function slope, PDE and boundary residuals", validation.criterion_2_ball())


def test_criterion_3_disk_capacitance(criterion):
    criterion(3, "disk capacitance from the window solver", validation.criterion_3_capacitance())


def test_criterion_4_solver_net(criterion):
    criterion(4, "window solver NET and first-order flux correction", validation.criterion_4_solver())


@pytest.mark.slow
def test_criterion_5_mc_net(criterion, ball_runs):
    criterion(5, "Monte Carlo NET in the unit ball", validation.criterion_5_net(ball_runs))


@pytest.mark.slow
def test_criterion_6_mc_eigenvalue(criterion, ball_runs):
    criterion(6, "Monte Carlo principal eigenvalue", validation.criterion_6_eigenvalue(ball_runs))


@pytest.mark.slow
def test_criterion_7_leakage(criterion, leakage_single, leakage_pair):
    criterion(7, "leakage fraction through small windows", validation.leakage_rows(leakage_single, leakage_pair))


@pytest.mark.slow
def test_criterion_8_properties(criterion, acceptance_seed):
    criterion(8, "scaling, planted fits, convergence, determinism, conservation",
              validation.criterion_8_properties(acceptance_seed))
