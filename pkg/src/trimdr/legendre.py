"""Shifted orthonormal Legendre polynomial basis on [0, 1].

The basis starts ``1, sqrt(3)(2a-1), sqrt(5)(6a^2-6a+1), ...``; degree j is
``sqrt(2j+1) * P_j(2a-1)`` with ``P_j`` the standard Legendre polynomial, so
the functions are orthonormal under the uniform measure on [0, 1].
Derivatives are produced analytically through the differentiated three-term
recurrence: they feed a bias correction with ``h**(1-order)`` amplification,
where finite-difference noise would be ruinous.
"""

from __future__ import annotations

import numpy as np


class LegendreBasis:
    """Orthonormal polynomial family of degrees 0..degree on [0, 1].

    Immutable after construction; safe to share across tasks.
    """

    def __init__(self, degree: int):
        if degree < 0:
            raise ValueError("LegendreBasis: degree must be >= 0")
        self.degree = int(degree)

    @property
    def size(self) -> int:
        return self.degree + 1

    def eval(self, a) -> np.ndarray:
        """Basis values at ``a``.

        Scalar ``a`` gives a (degree+1,) vector; an (n,) array gives an
        (n, degree+1) matrix.  Evaluation outside [0, 1] is permitted (used
        only diagnostically).
        """
        return self.eval_deriv(a, 0)

    def eval_deriv(self, a, order: int) -> np.ndarray:
        """``order``-th derivative of each basis polynomial at ``a``.

        Orders above the degree return all zeros.
        """
        if order < 0:
            raise ValueError("LegendreBasis: derivative order must be >= 0")
        a_arr = np.atleast_1d(np.asarray(a, dtype=float))
        scalar = np.ndim(a) == 0
        out = self._deriv_table(a_arr, order)[order]
        # chain rule for the shift x = 2a - 1, plus orthonormal scaling
        norms = np.sqrt(2.0 * np.arange(self.size) + 1.0)
        out = out * (2.0**order) * norms[None, :]
        return out[0] if scalar else out

    def _deriv_table(self, x_a: np.ndarray, order: int) -> list[np.ndarray]:
        """d^m/dx^m of unnormalized P_j(x), x = 2a - 1, for m = 0..order.

        Differentiating (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1} m times:
        (j+1) P_{j+1}^(m) = (2j+1) (x P_j^(m) + m P_j^(m-1)) - j P_{j-1}^(m).
        """
        n = x_a.size
        x = 2.0 * x_a - 1.0
        K = self.degree
        tables = [np.zeros((n, K + 1)) for _ in range(order + 1)]
        tables[0][:, 0] = 1.0
        if K >= 1:
            tables[0][:, 1] = x
            if order >= 1:
                tables[1][:, 1] = 1.0
        for j in range(1, K):
            for m in range(order + 1):
                lower = tables[m - 1][:, j] if m >= 1 else 0.0
                tables[m][:, j + 1] = (
                    (2 * j + 1) * (x * tables[m][:, j] + m * lower)
                    - j * tables[m][:, j - 1]
                ) / (j + 1)
        return tables

    def __repr__(self) -> str:
        return f"LegendreBasis(degree={self.degree})"
