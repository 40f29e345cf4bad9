"""Thin wrapper over the HiGHS linear programming solver shipped with scipy."""

import numpy as np
from scipy.optimize import linprog

from .errors import NumericalFailure


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    """Minimize ``c @ z`` and return ``(z, fun)`` or ``None`` if infeasible.

    Raises NumericalFailure for unbounded problems or solver breakdown.
    """
    res = linprog(np.asarray(c, dtype=float), A_ub=A_ub, b_ub=b_ub,
                  A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise NumericalFailure(f"LP solver status {res.status}: {res.message}")
    return res.x, float(res.fun)
