"""Doubly robust difference-in-differences for the ATT, two periods.

The point estimator combines an outcome-regression term with a trimmed and
bias-corrected odds-weighted control term: observations whose fitted
propensity approaches one are dropped and the removed mass restored via the
series correction of :mod:`trimdr.trim_core`.  Standard errors come from the
estimator's per-observation influence values, with the derivative of the
corrected control moment in the first-stage parameter estimated by central
finite differences of a kernel-smoothed functional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NonFinite
from .first_stage import FirstStageFit, fit_logistic, fit_ols_subsample, stack_fits
from .numkit import central_fd, get_kernel, trapezoid_values
from .trim_core import (
    AlphaResult,
    TrimConfig,
    alpha_hat_values,
    omega_contributions,
    silverman_bandwidth,
)
from .sieve import fit_sieve


@dataclass(frozen=True)
class DidSample:
    """Two-period panel: outcomes in each period, treatment, covariates.

    The covariate matrix is used as supplied; by convention its first
    column is the intercept.
    """

    y0: np.ndarray
    y1: np.ndarray
    d: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        y1 = np.asarray(self.y1, dtype=float)
        d = np.asarray(self.d, dtype=float)
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)
        n = y0.size
        if y1.shape != (n,) or d.shape != (n,) or x.ndim != 2 or x.shape[0] != n:
            raise ValueError("DidSample: component lengths disagree")
        if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(y1))
                and np.all(np.isfinite(x))):
            raise ValueError("DidSample: non-finite values")
        if not np.all((d == 0.0) | (d == 1.0)):
            raise ValueError("DidSample: d must be binary 0/1")
        if not 0.0 < d.mean() < 1.0:
            raise ValueError("DidSample: both treated and control units required")

    @property
    def n(self) -> int:
        return self.y0.size

    @property
    def delta_y(self) -> np.ndarray:
        return self.y1 - self.y0


@dataclass
class DidEstimate:
    """ATT estimate with influence-based standard error and diagnostics."""

    theta: float
    se: float | None
    phi: np.ndarray | None
    n: int
    h: float
    K: int
    k: int
    trimmed_count: int
    bandwidth: float | None
    gram_cond: float | None
    alpha2: AlphaResult
    first_stage: FirstStageFit

    @property
    def ci95(self) -> tuple[float, float]:
        if self.se is None:
            raise ValueError("standard error not computed")
        return self.theta - 1.96 * self.se, self.theta + 1.96 * self.se


def fit_did_first_stage(data: DidSample) -> FirstStageFit:
    """Logistic propensity fit plus control-group OLS of the outcome change."""
    logit = fit_logistic(data.x, data.d)
    ols = fit_ols_subsample(data.x, data.delta_y, 1.0 - data.d)
    return stack_fits(logit, [("outcome", ols)])


def _split(data: DidSample, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = data.x.shape[1]
    return gamma[:p], gamma[p:]


def did_nuisances(data: DidSample, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fitted propensity and outcome-change regression at gamma."""
    g1, g2 = _split(data, gamma)
    return expit(data.x @ g1), data.x @ g2


def did_point_estimate(data: DidSample, cfg: TrimConfig,
                       first_stage: FirstStageFit | None = None) -> DidEstimate:
    """ATT point estimate; standard-error fields are left unset.

    With h = 0 this reproduces the plain augmented-IPW difference-in-
    differences sample formula exactly.
    """
    fs = first_stage if first_stage is not None else fit_did_first_stage(data)
    p_hat, nu = did_nuisances(data, fs.gamma)
    resid = data.delta_y - nu
    b1_mean = float(np.mean(data.d * resid))
    ares = alpha_hat_values(1.0 - p_hat, p_hat * (1.0 - data.d) * resid, cfg)
    theta = (b1_mean - ares.alpha) / float(data.d.mean())
    if not np.isfinite(theta):
        raise NonFinite(
            "ATT estimate is not finite; fitted propensities reach 1 "
            "and h = 0 leaves the odds ratio unbounded" if cfg.h == 0
            else "ATT estimate is not finite"
        )
    return DidEstimate(
        theta=theta,
        se=None,
        phi=None,
        n=data.n,
        h=cfg.h,
        K=cfg.K,
        k=cfg.k,
        trimmed_count=ares.trimmed_count,
        bandwidth=None,
        gram_cond=None if ares.sieve is None else ares.sieve.cond,
        alpha2=ares,
        first_stage=fs,
    )


def kernel_tau(data: DidSample, gamma: np.ndarray, p, b: float,
               which: int) -> np.ndarray | float:
    """Kernel-weighted sample means along the fitted propensity axis.

    which = 1 estimates the density of the fitted propensity at p;
    which = 2 estimates the local mean of the control outcome-change
    residual times that density.  ``p`` may be a scalar or a grid.
    """
    if b <= 0:
        raise ValueError("kernel_tau: bandwidth must be positive")
    if which not in (1, 2):
        raise ValueError("kernel_tau: which must be 1 or 2")
    p_hat, nu = did_nuisances(data, gamma)
    grid = np.atleast_1d(np.asarray(p, dtype=float))
    kern = get_kernel("gaussian")
    kmat = kern((p_hat[:, None] - grid[None, :]) / b) / b
    if which == 1:
        out = kmat.sum(axis=0) / data.n
    else:
        weights = (1.0 - data.d) * (data.delta_y - nu)
        out = weights @ kmat / data.n
    return float(out[0]) if np.ndim(p) == 0 else out


def _smoothed_alpha2(data: DidSample, gamma: np.ndarray, cfg: TrimConfig,
                     b: float, use_sieve: bool,
                     grid_main: np.ndarray, grid_tail: np.ndarray,
                     kmat_cache: dict | None = None) -> float:
    """Kernel-smoothed corrected control moment, as a function of gamma.

    The main integral runs over fitted-propensity values up to 1 - h with
    odds weight p / (1 - p); the tail integral restores the trimmed mass
    using series derivatives refitted at this gamma.  A cache keyed by the
    propensity block makes the finite-difference sweep cheap: perturbing an
    outcome coefficient reuses the kernel matrices.
    """
    g1, g2 = _split(data, gamma)
    p_hat = expit(data.x @ g1)
    resid = data.delta_y - data.x @ g2
    n = data.n
    kern = get_kernel(cfg.kernel)

    key = g1.tobytes()
    if kmat_cache is not None and key in kmat_cache:
        kmain, ktail = kmat_cache[key]
    else:
        kmain = kern((p_hat[:, None] - grid_main[None, :]) / b) / b
        ktail = kern((p_hat[:, None] - grid_tail[None, :]) / b) / b
        if kmat_cache is not None:
            kmat_cache[key] = (kmain, ktail)

    tau2 = ((1.0 - data.d) * resid) @ kmain / n
    total = trapezoid_values(grid_main / (1.0 - grid_main) * tau2, grid_main)

    if use_sieve:
        fit = fit_sieve(1.0 - p_hat, p_hat * (1.0 - data.d) * resid, cfg.K)
        tau1 = ktail.sum(axis=0) / n
        for order in range(1, cfg.k + 1):
            mass = trapezoid_values((1.0 - grid_tail) ** (order - 1) * tau1,
                                    grid_tail)
            total += mass / math.factorial(order) * fit.deriv_at_zero(order)
    return total


def dalpha2_dgamma(data: DidSample, gamma: np.ndarray, cfg: TrimConfig,
                   b: float, use_sieve: bool = True) -> np.ndarray:
    """Gradient of the corrected control moment in gamma (requires h > 0).

    Central finite differences of the kernel-smoothed functional; the raw
    trimmed moment is discontinuous in gamma, the smoothed one is not.
    """
    if cfg.h <= 0:
        raise ValueError("dalpha2_dgamma: requires h > 0 (see dalpha2_dgamma_h0)")
    grid_main = np.linspace(0.0, 1.0 - cfg.h, cfg.grid_main)
    grid_tail = np.linspace(1.0 - cfg.h, 1.0, cfg.grid_tail)
    cache: dict = {}

    def f(g):
        return np.array([
            _smoothed_alpha2(data, g, cfg, b, use_sieve, grid_main, grid_tail,
                             kmat_cache=cache)
        ])

    return central_fd(f, np.asarray(gamma, dtype=float), cfg.fd_step)[0]


def dalpha2_dgamma_h0(data: DidSample, gamma: np.ndarray,
                      cfg: TrimConfig) -> np.ndarray:
    """Gradient of the untrimmed control moment in gamma.

    Without trimming there is no indicator, so the sample moment itself is
    smooth in gamma and is differentiated directly.
    """
    def f(g):
        p_hat, nu = did_nuisances(data, g)
        ratio = p_hat * (1.0 - data.d) * (data.delta_y - nu) / (1.0 - p_hat)
        return np.array([np.mean(ratio)])

    return central_fd(f, np.asarray(gamma, dtype=float), cfg.fd_step)[0]


def did_influence(data: DidSample, cfg: TrimConfig, fs: FirstStageFit,
                  ares: AlphaResult, bandwidth: float | None = None
                  ) -> tuple[np.ndarray, float]:
    """Per-observation influence values and the bandwidth used."""
    p_hat, nu = did_nuisances(data, fs.gamma)
    resid = data.delta_y - nu
    dbar = float(data.d.mean())
    b1 = data.d * resid

    if cfg.h > 0:
        b = bandwidth if bandwidth is not None else (
            cfg.bandwidth if cfg.bandwidth is not None
            else silverman_bandwidth(p_hat)
        )
        dal = dalpha2_dgamma(data, fs.gamma, cfg, b,
                             use_sieve=ares.sieve is not None)
    else:
        b = 0.0
        dal = dalpha2_dgamma_h0(data, fs.gamma, cfg)
    omega2 = omega_contributions(ares, dal, fs.phi)

    # d(outcome model)/dgamma is zero on the propensity block and the
    # covariate row on the outcome block
    dnu_mean = np.zeros(fs.gamma.size)
    dnu_mean[fs.blocks["outcome"]] = np.mean(data.d[:, None] * data.x, axis=0)

    if cfg.literal_alpha0:
        alpha_center = float(np.mean(p_hat * (1.0 - data.d) * resid
                                     / (1.0 - p_hat)))
        if not np.isfinite(alpha_center):
            raise NonFinite("untrimmed control moment is not finite")
    else:
        alpha_center = ares.alpha

    phi_hat = (
        (b1 - fs.phi @ dnu_mean) / dbar
        - omega2 / dbar
        - (float(np.mean(b1)) - alpha_center) / dbar**2 * data.d
    )
    if not np.all(np.isfinite(phi_hat)):
        raise NonFinite("influence values are not finite")
    return phi_hat, b


def did_estimate(data: DidSample, cfg: TrimConfig) -> DidEstimate:
    """Full pipeline: point estimate, influence values, standard error."""
    est = did_point_estimate(data, cfg)
    phi_hat, b = did_influence(data, cfg, est.first_stage, est.alpha2)
    est.phi = phi_hat
    est.se = float(phi_hat.std(ddof=0) / np.sqrt(data.n))
    est.bandwidth = b if cfg.h > 0 else None
    return est
