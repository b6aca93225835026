"""Adaptive Dormand-Prince 5(4) stepping with snapshots from the dense output."""
from __future__ import annotations

import numpy as np
from scipy.integrate import RK45


class IntegrationError(RuntimeError):
    pass


def rk45_snapshots(fun, y0, t_grid, rtol: float, atol: float, max_step: float = np.inf):
    """Yield ``(t, y(t))`` for every ``t`` in ``t_grid``.

    ``t_grid[0]`` is the initial time. Intermediate values come from the
    fourth-order continuous extension of each accepted step, so the step
    sequence does not depend on the snapshot grid.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    y0 = np.asarray(y0)
    yield float(t_grid[0]), y0
    if len(t_grid) == 1:
        return
    solver = RK45(fun, t_grid[0], y0, t_grid[-1], rtol=rtol, atol=atol, max_step=max_step)
    nxt = 1
    while nxt < len(t_grid):
        message = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integrator failed at t = {solver.t:.6g}: {message}")
        if nxt < len(t_grid) and t_grid[nxt] <= solver.t:
            interp = solver.dense_output()
            while nxt < len(t_grid) and t_grid[nxt] <= solver.t:
                t = t_grid[nxt]
                y = solver.y if t == solver.t else interp(t)
                yield float(t), y
                nxt += 1
