"""Compiled hot loop for large heatmap builds.

Imported lazily; the numpy path in heatmap.py computes the same arrays and
is used whenever this module is unavailable or the grid is small. Plain
sequential float64 adds, no fastmath, so results are deterministic and,
for confidences that are exact binary fractions, bit-identical to any
other summation order.
"""

import numpy as np
from numba import njit


@njit(
    "void(float64[:, ::1], float64[:, ::1], float64[:, ::1])",
    cache=True,
    nogil=True,
)
def fused_prefix(diff, grid, sat):
    """One sweep: difference array -> accumulation grid -> summed-area table.

    diff has one extra guard row/column holding the cancelling deltas.
    grid[r, c] becomes the inclusive 2D prefix of diff; sat[r, c] the
    inclusive 2D prefix of grid.
    """
    gh, gw = grid.shape
    colsum = np.zeros(gw, dtype=np.float64)
    satcol = np.zeros(gw, dtype=np.float64)
    for r in range(gh):
        row_acc = 0.0
        sat_row_acc = 0.0
        for c in range(gw):
            colsum[c] += diff[r, c]
            row_acc += colsum[c]
            grid[r, c] = row_acc
            satcol[c] += row_acc
            sat_row_acc += satcol[c]
            sat[r, c] = sat_row_acc
