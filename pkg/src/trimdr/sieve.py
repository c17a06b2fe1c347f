"""Series regression of a numerator variable on its denominator.

Least-squares projection of B on the shifted Legendre basis in A delivers
the fitted conditional mean, its derivatives at zero (the inputs to the
trimming-bias correction), and the per-observation influence values of those
derivative estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned
from .legendre import LegendreBasis
from .numkit import solve_spd


@dataclass(frozen=True)
class SieveFit:
    """Fitted series regression of B on polynomials in A.

    ``beta`` solves ``gram @ beta = mean(design * B)`` where ``gram`` is the
    sample second-moment matrix of the basis columns, so residuals are
    orthogonal to the basis span and the influence values below have exact
    zero sample mean.
    """

    basis: LegendreBasis
    beta: np.ndarray
    gram: np.ndarray
    cond: float
    n: int
    a_min: float
    a_max: float

    @property
    def degree(self) -> int:
        return self.basis.degree

    def mhat(self, a) -> np.ndarray:
        """Fitted conditional-mean values at ``a``."""
        return np.asarray(self.basis.eval(a)) @ self.beta

    def deriv_at_zero(self, order: int) -> float:
        """``order``-th derivative of the fitted curve at a = 0."""
        if not 0 <= order <= self.degree:
            raise ValueError(
                f"deriv_at_zero: order must be in [0, {self.degree}], got {order}"
            )
        return float(self.basis.eval_deriv(0.0, order) @ self.beta)

    def psi_influence(self, A: np.ndarray, B: np.ndarray, order: int) -> np.ndarray:
        """Per-observation influence of ``deriv_at_zero(order)``.

        Must be called with the same (A, B) the fit was produced from.
        The output has sample mean zero up to solver tolerance.
        """
        if not 0 <= order <= self.degree:
            raise ValueError(
                f"psi_influence: order must be in [0, {self.degree}], got {order}"
            )
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        design = self.basis.eval(A)
        resid = B - design @ self.beta
        weights, _ = solve_spd(self.gram, self.basis.eval_deriv(0.0, order))
        return (design @ weights) * resid


def fit_sieve(A: np.ndarray, B: np.ndarray, degree: int) -> SieveFit:
    """Project B on the Legendre basis in A by least squares.

    Raises IllConditioned (annotated with the A-range, which signals
    degenerate denominator support) when the basis second-moment matrix is
    numerically singular.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 1:
        raise ValueError("fit_sieve: A and B must be 1-D arrays of equal length")
    n = A.size
    if n <= degree + 1:
        raise ValueError(f"fit_sieve: need n > degree + 1, got n={n}, degree={degree}")

    basis = LegendreBasis(degree)
    design = basis.eval(A)
    gram = design.T @ design / n
    target = design.T @ B / n
    try:
        beta, cond = solve_spd(gram, target)
    except IllConditioned as err:
        raise IllConditioned(
            f"sieve second-moment matrix is degenerate ({err}); "
            f"A ranges over [{A.min():.6g}, {A.max():.6g}]",
            cond=err.cond,
        ) from err
    return SieveFit(
        basis=basis,
        beta=beta,
        gram=gram,
        cond=cond,
        n=n,
        a_min=float(A.min()),
        a_max=float(A.max()),
    )
