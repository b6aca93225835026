import numpy as np
import pytest

from afc_sim.engineer import (CombTemplate, NoInteriorMinimum, optimize_lambda, spacing_profile, sweep_lambda)

TEMPLATE = CombTemplate()


@pytest.fixture(scope="module")
def full_sweep():
    grid = np.linspace(100, 1000, 46)
    return grid, sweep_lambda(TEMPLATE, grid)


def test_broad_envelope_fidelities():
    (row,) = sweep_lambda(TEMPLATE, [1000.0])
    f = np.array(row.fidelities)
    assert f[0] == pytest.approx(0.981, abs=0.005)
    assert np.all(np.diff(f) < 0)
    assert f[1] == pytest.approx(0.926, abs=0.005)
    assert f[3] == pytest.approx(0.717, abs=0.005)
    assert row.t_rev_ns == pytest.approx(26.79, abs=0.01)


def test_engineered_envelope_fidelities():
    (row,) = sweep_lambda(TEMPLATE, [190.0])
    # 98.6 % at the fourth revival, as a rounded percentage
    assert min(row.fidelities) >= 0.9855
    assert len(row.revival_times_ns) == 4
    assert row.revival_times_ns[0] == pytest.approx(27.5, abs=0.3)
    assert row.error is None


def test_uncoupled_template_rejected():
    with pytest.raises(ValueError):
        sweep_lambda(CombTemplate(omega0=0.0), [190.0])
    with pytest.raises(ValueError):
        sweep_lambda(TEMPLATE, [])


def test_spacing_profile_at_optimum():
    s1, s2 = spacing_profile(TEMPLATE, 190.0)
    assert s1.mean == pytest.approx(36.361, abs=1e-3)
    assert s1.std == pytest.approx(0.2043, abs=1e-4)
    assert s2.std == pytest.approx(0.5534, abs=1e-4)


def test_sweep_minima_and_fidelity_maxima_coincide(full_sweep):
    grid, rows = full_sweep
    step = grid[1] - grid[0]
    std1 = np.array([r.std1_mhz for r in rows])
    std2 = np.array([r.std2_mhz for r in rows])
    f4 = np.array([r.fidelities[3] for r in rows])
    f1 = np.array([r.fidelities[0] for r in rows])
    assert abs(grid[np.argmin(std1)] - 190) <= 20
    assert abs(grid[np.argmin(std2)] - 190) <= 20
    assert abs(grid[np.argmax(f4)] - grid[np.argmin(std1)]) <= step
    assert abs(grid[np.argmax(f1)] - grid[np.argmin(std1)]) <= step
    assert all(0 <= f <= 1 for r in rows for f in r.fidelities)


def test_sweep_is_thread_independent():
    grid = [150.0, 400.0, 900.0]
    one = sweep_lambda(TEMPLATE, grid, evolve=True, threads=1)
    three = sweep_lambda(TEMPLATE, grid, evolve=True, threads=3)
    assert [r.lambda_mhz for r in three] == grid
    assert [r.fidelities for r in one] == [r.fidelities for r in three]


def test_spacing_only_sweep():
    rows = sweep_lambda(TEMPLATE, [190.0, 500.0], evolve=False)
    assert all(r.fidelities == () for r in rows)


@pytest.mark.parametrize("objective", ["std1", "std1+std2"])
def test_optimize_lambda(objective):
    lam = optimize_lambda(TEMPLATE, objective=objective)
    assert lam == pytest.approx(190, abs=20)


def test_objectives_agree():
    a = optimize_lambda(TEMPLATE, objective="std1")
    b = optimize_lambda(TEMPLATE, objective="std1+std2")
    assert abs(a - b) <= 20


def test_optimize_flat_objective():
    with pytest.raises(NoInteriorMinimum, match="no interior minimum"):
        optimize_lambda(CombTemplate(omega0=0.0))


def test_optimize_edge_minimum():
    with pytest.raises(NoInteriorMinimum):
        optimize_lambda(TEMPLATE, bracket=(300, 1000), n_scan=15)
    with pytest.raises(ValueError):
        optimize_lambda(TEMPLATE, objective="std3")
