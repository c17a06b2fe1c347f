"""Parametric first stages and their per-observation influence rows.

Propensity scores come from a Newton-Raphson logistic maximum-likelihood
fit; outcome regressions are ordinary least squares on a masked subsample.
Both return influence rows whose column means vanish at the fit (the
first-order conditions), which downstream standard errors rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NoConvergence, RankDeficient, Separation
from .numkit import solve_spd

LOGIT_TOL = 1e-10
LOGIT_MAX_ITER = 100
_SEPARATION_ETA = 30.0


@dataclass(frozen=True)
class LogisticFit:
    """Coefficients, influence rows, and convergence metadata."""

    gamma: np.ndarray
    phi: np.ndarray
    iterations: int
    grad_norm: float


@dataclass(frozen=True)
class OlsFit:
    gamma: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class FirstStageFit:
    """Stacked first-stage parameter and influence matrix.

    ``blocks`` maps a block label to its slice of the stacked gamma vector
    (the same slices index the phi columns).
    """

    gamma: np.ndarray
    phi: np.ndarray
    blocks: dict[str, slice]
    iterations: int
    grad_norm: float

    def block(self, label: str) -> np.ndarray:
        return self.gamma[self.blocks[label]]


def _loglik(eta: np.ndarray, d: np.ndarray) -> float:
    # sum of d*eta - log(1 + exp(eta)), overflow-safe
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def fit_logistic(X: np.ndarray, d: np.ndarray) -> LogisticFit:
    """Logistic MLE of binary d on X by Newton-Raphson with step halving.

    X is used as supplied; include an intercept column if one is wanted.
    Raises Separation when the linear index pins an entire outcome class
    beyond +-30, RankDeficient/IllConditioned for a degenerate Hessian, and
    NoConvergence after the iteration budget.
    """
    X = np.asarray(X, dtype=float)
    d = np.asarray(d, dtype=float)
    if X.ndim != 2 or d.ndim != 1 or X.shape[0] != d.size:
        raise ValueError("fit_logistic: X must be (n, p) and d length n")
    if not np.all((d == 0.0) | (d == 1.0)):
        raise ValueError("fit_logistic: d must be binary 0/1")
    if d.min() == d.max():
        raise ValueError("fit_logistic: both outcome classes must be present")
    n, p = X.shape

    gamma = np.zeros(p)
    eta = X @ gamma
    ll = _loglik(eta, d)
    ones = d == 1.0
    grad_norm = np.inf
    for iteration in range(1, LOGIT_MAX_ITER + 1):
        pi = expit(eta)
        grad = X.T @ (d - pi) / n
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= LOGIT_TOL:
            break
        w = pi * (1.0 - pi)
        hess = (X * w[:, None]).T @ X / n
        step, _ = solve_spd(hess, grad)
        scale = 1.0
        for _ in range(40):
            candidate = gamma + scale * step
            eta_new = X @ candidate
            ll_new = _loglik(eta_new, d)
            if ll_new >= ll - 1e-12:
                break
            scale /= 2.0
        gamma, eta, ll = candidate, eta_new, ll_new
        if (np.abs(eta[ones]) > _SEPARATION_ETA).all() or (
            np.abs(eta[~ones]) > _SEPARATION_ETA
        ).all():
            raise Separation(
                "logistic fit diverged: an entire outcome class has |index| > 30"
            )
    else:
        raise NoConvergence(
            f"logistic fit: gradient norm {grad_norm:.3e} after "
            f"{LOGIT_MAX_ITER} iterations"
        )

    pi = expit(eta)
    w = pi * (1.0 - pi)
    hess = (X * w[:, None]).T @ X / n
    score_rows = X * (d - pi)[:, None]
    phi, _ = solve_spd(hess, score_rows.T)
    return LogisticFit(gamma=gamma, phi=phi.T, iterations=iteration,
                       grad_norm=grad_norm)


def fit_ols_subsample(X: np.ndarray, y: np.ndarray, mask: np.ndarray) -> OlsFit:
    """OLS of y on X over the rows selected by ``mask``.

    Influence rows are defined for every observation (zero off the mask)
    and normalized by the full-sample moment of the masked design, so phi
    matrices from several fits stack row-aligned.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],) or mask.shape != y.shape:
        raise ValueError("fit_ols_subsample: shape mismatch")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValueError("fit_ols_subsample: mask must be binary 0/1")
    n, p = X.shape
    selected = mask == 1.0
    if np.linalg.matrix_rank(X[selected]) < p:
        raise RankDeficient(
            f"masked design has rank below {p} on {int(selected.sum())} rows"
        )
    moment = (X * mask[:, None]).T @ X / n
    target = X.T @ (mask * y) / n
    gamma, _ = solve_spd(moment, target)
    resid = y - X @ gamma
    score_rows = X * (mask * resid)[:, None]
    phi, _ = solve_spd(moment, score_rows.T)
    return OlsFit(gamma=gamma, phi=phi.T)


def stack_fits(logit: LogisticFit, named_ols: list[tuple[str, OlsFit]],
               ps_label: str = "ps") -> FirstStageFit:
    """Concatenate a propensity fit and outcome fits into one parameter."""
    gammas = [logit.gamma] + [f.gamma for _, f in named_ols]
    phis = [logit.phi] + [f.phi for _, f in named_ols]
    blocks: dict[str, slice] = {}
    offset = 0
    for label, g in zip([ps_label] + [lbl for lbl, _ in named_ols], gammas):
        blocks[label] = slice(offset, offset + g.size)
        offset += g.size
    return FirstStageFit(
        gamma=np.concatenate(gammas),
        phi=np.hstack(phis),
        blocks=blocks,
        iterations=logit.iterations,
        grad_norm=logit.grad_norm,
    )
