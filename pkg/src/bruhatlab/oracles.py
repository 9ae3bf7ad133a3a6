"""Independent brute-force oracles used to cross-check the main paths.

Each function here deliberately avoids the machinery it validates: the
radial Green solver is a plain second-order finite-difference boundary
value problem, nothing Fourier about it.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def radial_green_oracle(shift: float = 1.0, r_max: float = 30.0,
                        dr: float = 5e-4):
    """Solve (Delta + shift) u = delta_0 on R^2 assuming radial symmetry.

    Conservative finite differences on the staggered grid r_i = (i+1/2) dr
    with the delta realized as a unit flux through the innermost cell edge
    and u(r_max) = 0.  Returns (radii, values).
    """
    n = int(round(r_max / dr))
    r = (np.arange(n) + 0.5) * dr
    r_half = np.arange(1, n) * dr          # interior edges r_{i+1/2}
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    rhs = np.zeros(n)
    # i = 0: integrate the equation over the disc of radius r_{1/2}
    # -2 pi r_{1/2} u'(r_{1/2}) + shift * 2 pi int_0^{r_{1/2}} u r dr = 1
    diag[0] = 2 * np.pi * r_half[0] / dr + shift * np.pi * r_half[0] ** 2
    upper[1] = -2 * np.pi * r_half[0] / dr
    rhs[0] = 1.0
    for i in range(1, n - 1):
        a = r_half[i - 1] / (r[i] * dr ** 2)
        c = r_half[i] / (r[i] * dr ** 2)
        lower[i - 1] = -a
        diag[i] = a + c + shift
        upper[i + 1] = -c
    lower[n - 2] = 0.0
    diag[n - 1] = 1.0                       # u(r_max) = 0
    bands = np.vstack([upper, diag, lower])
    u = solve_banded((1, 1), bands, rhs)
    return r, u


def simplex_volume_oracle(k: int) -> float:
    """Volume of the ordered k-simplex {0 <= t_k <= ... <= t_1 <= 1}."""
    from math import factorial
    return 1.0 / factorial(k)
