"""Binary-response GLM fitting under fixed design.

Fits e(x) = Psi(beta' x) by maximum likelihood with Newton-Raphson and
step-halving, and exposes the per-observation-averaged Fisher information
whose inverse scales the coefficient regeneration draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numkit
from .errors import (
    DimensionMismatch,
    NoConvergence,
    RankDeficient,
    Separation,
)

_SCORE_TOL = 1e-9
_COEF_TOL = 1e-10
_MAX_ITER = 100
_MAX_HALVINGS = 30
_SEPARATION_NORM = 1e3
_PROB_EPS = 1e-12
_LINPROB_EPS = 1e-6


@dataclass(frozen=True)
class LinkFunction:
    """One-to-one link with forward map psi: R -> (0,1) and derivative dpsi."""

    tag: str
    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]


def _sigmoid(eta):
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_deriv(eta):
    p = _sigmoid(eta)
    return p * (1.0 - p)


def _probit_cdf(eta):
    return numkit.normal_cdf(np.asarray(eta, dtype=float))


def _probit_pdf(eta):
    eta = np.asarray(eta, dtype=float)
    return np.exp(-0.5 * eta * eta) / np.sqrt(2.0 * np.pi)


def _linprob(eta):
    return np.clip(np.asarray(eta, dtype=float), _LINPROB_EPS, 1.0 - _LINPROB_EPS)


def _linprob_deriv(eta):
    eta = np.asarray(eta, dtype=float)
    inside = (eta > _LINPROB_EPS) & (eta < 1.0 - _LINPROB_EPS)
    return inside.astype(float)


def logistic_link() -> LinkFunction:
    return LinkFunction("logistic", _sigmoid, _sigmoid_deriv)


def probit_link() -> LinkFunction:
    return LinkFunction("probit", _probit_cdf, _probit_pdf)


def linear_probability_link() -> LinkFunction:
    # linear predictors outside (0,1) are clamped at 1e-6 before use as
    # probabilities; clamped observations carry zero derivative
    return LinkFunction("linear_probability", _linprob, _linprob_deriv)


_LINKS = {
    "logistic": logistic_link,
    "probit": probit_link,
    "linear_probability": linear_probability_link,
}


def get_link(tag: str) -> LinkFunction:
    try:
        return _LINKS[tag]()
    except KeyError:
        raise DimensionMismatch(f"unknown link {tag!r}") from None


@dataclass(frozen=True)
class GlmFit:
    beta_hat: np.ndarray
    omega_hat: np.ndarray  # inverse of the averaged information at beta_hat
    link: LinkFunction
    n_units: int
    converged: bool
    iterations: int


def _probabilities(X, beta, link):
    eta = X @ beta
    p = np.clip(link.psi(eta), _PROB_EPS, 1.0 - _PROB_EPS)
    return eta, p


def log_likelihood(X: np.ndarray, z: np.ndarray, beta: np.ndarray,
                   link: LinkFunction) -> float:
    _, p = _probabilities(X, beta, link)
    return float(np.sum(z * np.log(p) + (1.0 - z) * np.log(1.0 - p)))


def score_vector(X: np.ndarray, z: np.ndarray, beta: np.ndarray,
                 link: LinkFunction) -> np.ndarray:
    """Gradient of the (total) log-likelihood."""
    eta, p = _probabilities(X, beta, link)
    d = link.dpsi(eta)
    w = (z - p) * d / (p * (1.0 - p))
    return X.T @ w


def fisher_information(X: np.ndarray, beta: np.ndarray,
                       link: LinkFunction) -> np.ndarray:
    """Averaged information (1/N) sum_i w(beta'x_i) x_i x_i'."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[1] != beta.shape[0]:
        raise DimensionMismatch(
            f"design has {X.shape[1]} columns but beta has {beta.shape[0]}"
        )
    eta, p = _probabilities(X, beta, link)
    d = link.dpsi(eta)
    w = d * d / (p * (1.0 - p))
    n = X.shape[0]
    return (X.T * w) @ X / n


def _solve_psd(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a @ x = rhs for symmetric PSD a; RankDeficient on a tiny pivot."""
    lower = numkit.cholesky_factor(a)
    diag = np.diag(lower)
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficient("information matrix is numerically singular")
    y = np.linalg.solve(lower, rhs)
    return np.linalg.solve(lower.T, y)


def _initial_beta(X, z, link):
    if link.tag == "linear_probability":
        coef, *_ = np.linalg.lstsq(X, z, rcond=None)
        return coef
    return np.zeros(X.shape[1])


def fit_glm(X: np.ndarray, z: np.ndarray, link: LinkFunction,
            max_iter: int = _MAX_ITER) -> GlmFit:
    """Maximum-likelihood fit of P(z=1|x) = Psi(beta'x).

    Raises Separation when the coefficient norm blows past 1e3 during the
    iteration, RankDeficient for a singular information matrix, and
    NoConvergence when the Newton loop exhausts its budget.
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    n, p = X.shape
    if n <= p:
        raise RankDeficient(f"need more units ({n}) than parameters ({p})")
    beta = _initial_beta(X, z, link)
    ll = log_likelihood(X, z, beta, link)
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        score = score_vector(X, z, beta, link)
        if np.max(np.abs(score)) < _SCORE_TOL:
            if ll > -1e-8:
                # the likelihood is numerically 1: every unit is perfectly
                # classified, so the MLE does not exist
                raise Separation("data are perfectly separated; no finite MLE")
            converged = True
            break
        info_total = fisher_information(X, beta, link) * n
        delta = _solve_psd(info_total, score)
        step = 1.0
        for _ in range(_MAX_HALVINGS):
            candidate = beta + step * delta
            ll_new = log_likelihood(X, z, candidate, link)
            if ll_new >= ll - 1e-12:
                break
            step *= 0.5
        beta = beta + step * delta
        ll = log_likelihood(X, z, beta, link)
        if np.max(np.abs(beta)) > _SEPARATION_NORM:
            raise Separation(
                "coefficient norm exceeded 1e3; data are perfectly separated"
            )
        rel_change = step * np.max(np.abs(delta)) / max(1.0, np.max(np.abs(beta)))
        if rel_change < _COEF_TOL:
            if ll > -1e-8:
                raise Separation("data are perfectly separated; no finite MLE")
            converged = True
            break
    if not converged:
        raise NoConvergence(f"no convergence after {max_iter} Newton steps")
    info_avg = fisher_information(X, beta, link)
    omega = _solve_psd(info_avg, np.eye(p))
    omega = 0.5 * (omega + omega.T)
    return GlmFit(
        beta_hat=beta,
        omega_hat=omega,
        link=link,
        n_units=n,
        converged=converged,
        iterations=iterations,
    )


def predict_propensity(fit: GlmFit, X: np.ndarray) -> np.ndarray:
    """Propensity vector Psi(beta_hat' x_i) for each row of X."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != fit.beta_hat.shape[0]:
        raise DimensionMismatch(
            f"design has {X.shape[1]} columns but fit expects {fit.beta_hat.shape[0]}"
        )
    return np.clip(fit.link.psi(X @ fit.beta_hat), _PROB_EPS, 1.0 - _PROB_EPS)
