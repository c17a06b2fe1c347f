"""Trimmed-and-bias-corrected moment estimation.

The building block is the corrected mean of a ratio B/A: observations whose
denominator magnitude falls below a threshold h are dropped, and the removed
mass is restored through a Taylor expansion of the conditional mean of B
given A around zero, with derivatives taken from a series fit (see
:mod:`trimdr.sieve`).  A target parameter is a smooth map of several such
corrected moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DegenerateTrim, DomainError, IllConditioned
from .numkit import Kernel, central_fd, get_kernel, trapezoid_values
from .sieve import SieveFit, fit_sieve

# Smallest bandwidth fed to the kernel-smoothed derivative machinery; below
# this the integration grids (512/128 points on the unit interval) no longer
# resolve the kernel and the quadrature collapses.
BANDWIDTH_FLOOR = 0.01


@dataclass(frozen=True)
class TrimConfig:
    """Tuning for the corrected estimator.

    h is the trimming threshold, K the series degree, k the order of the
    bias correction (k <= K).  The remaining fields control the numerical
    machinery behind standard errors: smoothing kernel, bandwidth override
    (None selects Silverman's rule from the fitted propensities), the
    finite-difference step scale, and the quadrature grid sizes for the
    main and trimmed-tail integrals.  ``literal_alpha0`` switches the final
    influence-function term to re-use the untrimmed moment instead of the
    trimmed-and-corrected one.
    """

    h: float = 0.01
    K: int = 3
    k: int = 3
    kernel: str = "gaussian"
    bandwidth: float | None = None
    literal_alpha0: bool = False
    fd_step: float = 1e-4
    grid_main: int = 512
    grid_tail: int = 128

    def __post_init__(self):
        if not 0.0 <= self.h < 1.0:
            raise ValueError(f"TrimConfig: h must be in [0, 1), got {self.h}")
        if not 1 <= self.k <= self.K:
            raise ValueError(
                f"TrimConfig: need 1 <= k <= K, got k={self.k}, K={self.K}"
            )
        if self.k > 12:
            raise ValueError("TrimConfig: correction order k above 12 is not supported")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("TrimConfig: bandwidth override must be positive")
        if self.grid_main < 2 or self.grid_tail < 2:
            raise ValueError("TrimConfig: integration grids need at least 2 points")
        get_kernel(self.kernel)  # fail fast on unknown names


@dataclass(frozen=True)
class MomentComponent:
    """One (numerator, denominator) pair defining a moment of a ratio.

    Both maps take (sample, gamma) and return per-observation values.  A
    trivial component has denominator identically one and is never trimmed
    or corrected.
    """

    label: str
    numerator: Callable[[Any, np.ndarray], np.ndarray]
    denominator: Callable[[Any, np.ndarray], np.ndarray] | None = None

    @property
    def trivial_denominator(self) -> bool:
        return self.denominator is None


@dataclass(frozen=True)
class EstimandSpec:
    """Target parameter: a smooth combination of component moments."""

    components: Sequence[MomentComponent]
    lam: Callable[[np.ndarray], float]
    lam_grad: Callable[[np.ndarray], np.ndarray]

    def check_gradient(self, point: np.ndarray, step: float = 1e-6) -> float:
        """Max abs difference between lam_grad and finite differences."""
        point = np.asarray(point, dtype=float)
        fd = central_fd(lambda a: np.array([self.lam(a)]), point, step)[0]
        return float(np.max(np.abs(fd - np.asarray(self.lam_grad(point)))))


@dataclass
class AlphaResult:
    """Corrected moment estimate with its per-observation influence pieces.

    ``alpha == untrimmed_part + correction_part`` by construction.
    ``omega_base`` holds the trimmed ratio, the pointwise Taylor term, and
    the series-influence term; the first-stage term is appended later by
    :func:`omega_contributions`.  ``sieve`` is None when no observation was
    trimmed and the series fit was unavailable or skipped.
    """

    alpha: float
    untrimmed_part: float
    correction_part: float
    trimmed_count: int
    n: int
    omega_base: np.ndarray
    psi_term: np.ndarray
    sieve: SieveFit | None


def alpha_hat_values(A: np.ndarray, B: np.ndarray, cfg: TrimConfig) -> AlphaResult:
    """Corrected moment of B/A from per-observation values.

    The series fit uses the full sample, trimmed observations included.  If
    nothing is trimmed the correction is exactly zero; the fit is still
    attempted (its derivatives enter the standard-error machinery) but a
    degenerate denominator design is tolerated in that case, since the
    correction it would feed carries zero weight.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 1:
        raise ValueError("alpha_hat_values: A and B must be 1-D of equal length")
    n = A.size
    if n == 0:
        raise ValueError("alpha_hat_values: empty sample")

    keep = np.abs(A) >= cfg.h
    trimmed = int(n - keep.sum())
    if trimmed == n:
        raise DegenerateTrim(
            f"all {n} observations have |A| < h = {cfg.h}; "
            "the moment is not identified at this threshold"
        )

    ratio = np.zeros(n)
    ratio[keep] = B[keep] / A[keep]
    untrimmed_part = float(ratio.sum() / n)

    sieve_fit: SieveFit | None = None
    if cfg.h > 0:
        try:
            sieve_fit = fit_sieve(A, B, cfg.K)
        except IllConditioned:
            if trimmed > 0:
                raise
            sieve_fit = None  # nothing trimmed: correction not needed

    correction = 0.0
    taylor_term = np.zeros(n)
    psi_term = np.zeros(n)
    if trimmed > 0 and sieve_fit is not None:
        inside = ~keep
        for order in range(1, cfg.k + 1):
            fact = math.factorial(order)
            powers = np.where(inside, A ** (order - 1), 0.0)
            weight = float(powers.sum() / n) / fact
            deriv = sieve_fit.deriv_at_zero(order)
            correction += weight * deriv
            taylor_term += powers / fact * deriv
            psi_term += weight * sieve_fit.psi_influence(A, B, order)

    return AlphaResult(
        alpha=untrimmed_part + correction,
        untrimmed_part=untrimmed_part,
        correction_part=correction,
        trimmed_count=trimmed,
        n=n,
        omega_base=ratio + taylor_term + psi_term,
        psi_term=psi_term,
        sieve=sieve_fit,
    )


def alpha_hat(sample: Any, comp: MomentComponent, gamma: np.ndarray,
              cfg: TrimConfig) -> AlphaResult:
    """Corrected moment for one component, evaluated at first-stage gamma."""
    B = np.asarray(comp.numerator(sample, gamma), dtype=float)
    if comp.trivial_denominator:
        n = B.size
        if n == 0:
            raise ValueError("alpha_hat: empty sample")
        mean = float(B.mean())
        return AlphaResult(
            alpha=mean,
            untrimmed_part=mean,
            correction_part=0.0,
            trimmed_count=0,
            n=n,
            omega_base=B.copy(),
            psi_term=np.zeros(n),
            sieve=None,
        )
    A = np.asarray(comp.denominator(sample, gamma), dtype=float)
    return alpha_hat_values(A, B, cfg)


def assemble_theta(spec: EstimandSpec, alphas: np.ndarray) -> float:
    """Apply the combination map to the component moments."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size != len(spec.components):
        raise ValueError(
            f"assemble_theta: expected {len(spec.components)} moments, "
            f"got {alphas.size}"
        )
    if not np.all(np.isfinite(alphas)):
        raise ValueError("assemble_theta: component moments must be finite")
    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            theta = float(spec.lam(alphas))
        except ZeroDivisionError as err:
            raise DomainError(f"combination map undefined at {alphas}") from err
    if not math.isfinite(theta):
        raise DomainError(f"combination map undefined at {alphas}")
    return theta


def omega_contributions(res: AlphaResult, dalpha_dgamma: np.ndarray,
                        phi: np.ndarray) -> np.ndarray:
    """Full per-observation influence of one corrected moment.

    Adds the first-stage propagation term to the three data terms already
    assembled in ``res.omega_base``.  The last two terms have sample mean
    zero, so the mean of the output equals ``res.alpha`` up to solver
    tolerance.
    """
    phi = np.asarray(phi, dtype=float)
    dalpha_dgamma = np.asarray(dalpha_dgamma, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != res.n:
        raise ValueError(f"omega_contributions: phi must be ({res.n}, dim gamma)")
    if dalpha_dgamma.shape != (phi.shape[1],):
        raise ValueError(
            "omega_contributions: dalpha_dgamma length must match phi columns"
        )
    return res.omega_base + phi @ dalpha_dgamma


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule-of-thumb bandwidth with a resolution floor."""
    values = np.asarray(values, dtype=float)
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return max(1.06 * sd * values.size ** (-0.2), BANDWIDTH_FLOOR)


def smoothed_alpha_functional(A: np.ndarray, B: np.ndarray, cfg: TrimConfig,
                              bandwidth: float, kern: Kernel,
                              use_sieve: bool) -> float:
    """Kernel-smoothed version of the corrected moment of B/A.

    Replaces the empirical distribution of the denominator with a kernel
    density estimate, so the result is differentiable in any parameter that
    moves (A, B) smoothly even though the trimmed moment itself jumps when
    observations cross the threshold.  Assumes denominator values live on
    the unit interval.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.size
    grid_main = np.linspace(cfg.h, 1.0, cfg.grid_main)
    kmat = kern((A[:, None] - grid_main[None, :]) / bandwidth) / bandwidth
    tau_num = B @ kmat / n  # smoothed E[B | A = a] * density(a)
    total = trapezoid_values(tau_num / grid_main, grid_main)

    if use_sieve and cfg.h > 0:
        fit = fit_sieve(A, B, cfg.K)
        grid_tail = np.linspace(0.0, cfg.h, cfg.grid_tail)
        ktail = kern((A[:, None] - grid_tail[None, :]) / bandwidth) / bandwidth
        tau_den = ktail.sum(axis=0) / n  # smoothed density of A
        for order in range(1, cfg.k + 1):
            mass = trapezoid_values(grid_tail ** (order - 1) * tau_den, grid_tail)
            total += mass / math.factorial(order) * fit.deriv_at_zero(order)
    return total


def component_dalpha_dgamma(sample: Any, comp: MomentComponent,
                            gamma: np.ndarray, cfg: TrimConfig,
                            bandwidth: float, use_sieve: bool) -> np.ndarray:
    """Gradient of a component's corrected moment in the first-stage gamma.

    Trivial components and the untrimmed (h = 0) case differentiate the
    plain sample moment, which is smooth in gamma.  With trimming active,
    differentiates the kernel-smoothed functional instead: the indicator
    makes the raw trimmed moment discontinuous in gamma.
    """
    gamma = np.asarray(gamma, dtype=float)
    if comp.trivial_denominator:
        def f(g):
            return np.array([np.mean(comp.numerator(sample, g))])
    elif cfg.h == 0.0:
        def f(g):
            num = np.asarray(comp.numerator(sample, g), dtype=float)
            den = np.asarray(comp.denominator(sample, g), dtype=float)
            return np.array([np.mean(num / den)])
    else:
        kern = get_kernel(cfg.kernel)

        def f(g):
            num = np.asarray(comp.numerator(sample, g), dtype=float)
            den = np.asarray(comp.denominator(sample, g), dtype=float)
            return np.array([
                smoothed_alpha_functional(den, num, cfg, bandwidth, kern, use_sieve)
            ])

    return central_fd(f, gamma, cfg.fd_step)[0]
