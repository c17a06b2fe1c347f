"""Shared numerical primitives.

Dense symmetric solves with condition screening, composite trapezoid
quadrature, central finite differences, kernel functions, and seeded random
streams.  Everything here is pure given its inputs; :class:`RngStream`
instances hold mutable generator state and must not be shared across
concurrent tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import IllConditioned, NonFinite

# Hard failure above this spectral condition estimate; callers that can
# tolerate a degenerate system must catch IllConditioned themselves.
COND_LIMIT = 1e12


def solve_spd(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``gram @ x = rhs`` for symmetric positive-definite ``gram``.

    Parameters
    ----------
    gram : (m, m) symmetric matrix.
    rhs : (m,) vector or (m, q) matrix of right-hand sides.

    Returns
    -------
    (x, cond) : solution with the same trailing shape as ``rhs`` and the
        spectral condition-number estimate of ``gram``.

    Raises
    ------
    NonFinite : if inputs contain NaN/Inf.
    IllConditioned : if ``gram`` is not positive definite or its condition
        estimate exceeds ``COND_LIMIT``.
    """
    gram = np.asarray(gram, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(rhs))):
        raise NonFinite("solve_spd: inputs contain NaN or Inf")
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValueError(f"solve_spd: expected square matrix, got {gram.shape}")
    if rhs.shape[0] != gram.shape[0]:
        raise ValueError(
            f"solve_spd: dimension mismatch {gram.shape} vs {rhs.shape}"
        )
    if not np.allclose(gram, gram.T, rtol=1e-8, atol=1e-12):
        raise ValueError("solve_spd: matrix is not symmetric")

    eigs = np.linalg.eigvalsh(gram)
    lo, hi = float(eigs[0]), float(eigs[-1])
    if lo <= 0.0:
        raise IllConditioned(
            f"matrix not positive definite (min eigenvalue {lo:.3e})",
            cond=float("inf"),
        )
    cond = hi / lo
    if cond > COND_LIMIT:
        raise IllConditioned(
            f"condition estimate {cond:.3e} exceeds limit {COND_LIMIT:.0e}",
            cond=cond,
        )
    factor = scipy.linalg.cho_factor(gram, lower=True)
    x = scipy.linalg.cho_solve(factor, rhs)
    return x, cond


def trapezoid(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
              npoints: int) -> float:
    """Composite trapezoid rule for a vectorized integrand on [lo, hi]."""
    if npoints < 2:
        raise ValueError("trapezoid: npoints must be >= 2")
    if lo > hi:
        raise ValueError("trapezoid: requires lo <= hi")
    grid = np.linspace(lo, hi, npoints)
    vals = np.asarray(f(grid), dtype=float)
    if vals.shape != grid.shape:
        raise ValueError("trapezoid: integrand must map the grid to same-shape values")
    return trapezoid_values(vals, grid)


def trapezoid_values(vals: np.ndarray, grid: np.ndarray) -> float:
    """Trapezoid rule on precomputed values; rejects non-finite ordinates."""
    vals = np.asarray(vals, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NonFinite("trapezoid: integrand produced NaN/Inf on the grid")
    return float(np.sum((vals[1:] + vals[:-1]) * np.diff(grid)) / 2.0)


def central_fd(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
               step_scale: float) -> np.ndarray:
    """Jacobian of a vector-valued ``f`` at ``x`` by central differences.

    Per-coordinate step is ``step_scale * (1 + |x_j|)``.  Returns an
    (output_dim, len(x)) matrix.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("central_fd: x must be a 1-D vector")
    steps = step_scale * (1.0 + np.abs(x))
    cols = []
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        fp = np.atleast_1d(np.asarray(f(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(f(xm), dtype=float))
        cols.append((fp - fm) / (2.0 * steps[j]))
    jac = np.column_stack(cols)
    if not np.all(np.isfinite(jac)):
        raise NonFinite("central_fd: non-finite derivative estimate")
    return jac


def _gaussian(u: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


@dataclass(frozen=True)
class Kernel:
    """Symmetric smoothing kernel integrating to one over the real line."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    support: float  # half-width of the support; inf for unbounded kernels

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(u, dtype=float))


GAUSSIAN = Kernel("gaussian", _gaussian, math.inf)
EPANECHNIKOV = Kernel("epanechnikov", _epanechnikov, 1.0)

_KERNELS = {k.name: k for k in (GAUSSIAN, EPANECHNIKOV)}


def get_kernel(name: str) -> Kernel:
    try:
        return _KERNELS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; available: {sorted(_KERNELS)}"
        ) from None


class RngStream:
    """Seeded random source keyed by (seed, stream index).

    Two streams with the same key replay the identical draw sequence;
    distinct stream indices give statistically independent sequences.
    Instances carry generator state, so give each concurrent task its own.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) % 2**64
        self.stream = int(stream) % 2**64
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.stream]))
        )

    def normal(self, n: int) -> np.ndarray:
        return self._gen.standard_normal(n)

    def chisquare(self, df: int, n: int) -> np.ndarray:
        return self._gen.chisquare(df, n)

    def uniform(self, n: int) -> np.ndarray:
        return self._gen.uniform(size=n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def draw_student_t(rng: RngStream, df: int, n: int) -> np.ndarray:
    """n i.i.d. Student-t(df) draws.

    Generated as standard normal over sqrt(chi-square(df)/df), consuming
    the stream in that order (normals first, then chi-squares).
    """
    if df < 1:
        raise ValueError("draw_student_t: df must be >= 1")
    z = rng.normal(n)
    w = rng.chisquare(df, n)
    return z / np.sqrt(w / df)
