"""Closed-form convergence constants: beta1, beta2, mu, kappa, nu and the residual bound.

All inputs are per-client restricted curvature and noise statistics, either
supplied directly or measured with :func:`measure_client_constants`.
"""
import enum
import itertools
import json
from dataclasses import asdict, dataclass, field
from math import comb, sqrt
from typing import List, Optional

import numpy as np

from .errors import ConditioningError, ContractError
from .objectives import EXHAUSTIVE_CAP, estimate_rsc_rss, estimate_sigma, iter_batches

THETA_DEFAULT = 10.0
THETA_GRID = tuple(2.0 ** k for k in range(-6, 7))


class Variant(enum.Enum):
    EXACT = "exact"
    INEXACT = "inexact"
    PARTIAL = "partial"
    NO_VARIANCE_BOUND = "no_variance_bound"


@dataclass(frozen=True)
class ClientConstants:
    rho_minus_4tau: float
    rho_plus_bar_4tau: float
    rho_plus_sq_mean_tau: float
    sigma_sq: float = 0.0
    grad_at_opt_sq: float = 0.0
    max_restricted_grad_sq: float = 0.0
    batch_grad_sq_mean: float = 0.0
    rho_plus_mean_tau: Optional[float] = None
    rho_plus_bar_tau: Optional[float] = None
    exact: bool = True

    def __post_init__(self):
        vals = (self.rho_minus_4tau, self.rho_plus_bar_4tau, self.rho_plus_sq_mean_tau, self.sigma_sq,
                self.grad_at_opt_sq, self.max_restricted_grad_sq, self.batch_grad_sq_mean)
        if any(not v >= 0 for v in vals):
            raise ContractError("client constants must be nonnegative")
        if self.rho_minus_4tau > self.rho_plus_bar_4tau * (1 + 1e-12):
            raise ContractError("rho_minus_4tau cannot exceed rho_plus_bar_4tau")


@dataclass
class RatePrediction:
    mu_per_client: List[float]
    kappa: float
    nu: float
    residual_bound: float
    theta: float
    variant: Variant
    beta1: List[float] = field(default_factory=list)
    beta2: List[float] = field(default_factory=list)
    beta2_alt: Optional[List[float]] = None
    delta: Optional[float] = None
    L: Optional[int] = None
    mu: Optional[float] = None

    def to_json(self):
        d = asdict(self)
        d["variant"] = self.variant.value
        return json.dumps(d, indent=1, default=_json_default, allow_nan=True)


def _json_default(o):
    if isinstance(o, enum.Enum):
        return o.value
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _check_conditioning(c, client):
    if not 2.0 * c.rho_minus_4tau > c.rho_plus_bar_4tau:
        raise ConditioningError(
            f"well-conditioning violated at client {client}: 2*rho_minus={2 * c.rho_minus_4tau:.6g} "
            f"<= rho_plus_bar={c.rho_plus_bar_4tau:.6g}")


def beta1(c, client=0):
    """``rho_plus_bar / (2 rho_minus - rho_plus_bar)``."""
    _check_conditioning(c, client)
    return c.rho_plus_bar_4tau / (2.0 * c.rho_minus_4tau - c.rho_plus_bar_4tau)


def _eta_term(eta1):
    if eta1 < 1:
        raise ContractError("eta1 must be >= 1")
    return sqrt(eta1 * eta1 - 1.0) / eta1


def beta2(c, eta1, theta):
    """``2[(rho_plus_bar + 1/theta^2) - eta1^2 rho_minus] / (eta1^2 rho_minus)
    + 2 sqrt(eta1^2 - 1) / (eta1 rho_minus) * (3 E rho_plus_tau^2 + 1)``."""
    if not theta > 0:
        raise ContractError("theta must be positive")
    rm, rb = c.rho_minus_4tau, c.rho_plus_bar_4tau
    e2 = eta1 * eta1
    return (2.0 * ((rb + 1.0 / theta ** 2) - e2 * rm) / (e2 * rm)
            + 2.0 * _eta_term(eta1) / rm * (3.0 * c.rho_plus_sq_mean_tau + 1.0))


def beta2_no_variance_bound(c, eta1, theta):
    """Theorem-statement form used without the bounded-variance assumption."""
    rm, rb = c.rho_minus_4tau, c.rho_plus_bar_4tau
    e2 = eta1 * eta1
    return (2.0 * ((rb + 1.0 / theta ** 2) - e2 * rm) / (e2 * rm)
            + 3.0 * theta ** 2 * (c.rho_plus_sq_mean_tau + rb) / rm
            + _eta_term(eta1) * (3.0 * c.rho_plus_sq_mean_tau + 1.0))


def beta2_no_variance_bound_lemma(c, eta1, theta):
    """Lemma-statement form of the same constant (differs in several factors)."""
    rm, rb = c.rho_minus_4tau, c.rho_plus_bar_4tau
    e2 = eta1 * eta1
    rp = c.rho_plus_mean_tau if c.rho_plus_mean_tau is not None else sqrt(c.rho_plus_sq_mean_tau)
    return (4.0 * ((2 * e2 - 1) * (rb + 1.0 / theta ** 2) - e2 * rm) / (e2 * rm)
            + 3.0 * theta ** 2 * (rp + rb) / rm
            + 2.0 * (e2 - 1.0) / e2)


def geometric_sum(mu, K):
    """``sum_{k<K} mu**k`` (equals ``(1 - mu**K) / (1 - mu)`` for ``mu != 1``)."""
    return float(sum(mu ** k for k in range(K)))


def _gap_term(c):
    rb, rm = c.rho_plus_bar_4tau, c.rho_minus_4tau
    return 4.0 / (rb * (2.0 * rm - rb))


def _nu(consts, weights, eta1, eta2, theta, b1, sigma_weights, restricted_weights):
    s = (1.0 + eta2) ** 2
    et = _eta_term(eta1)
    if eta1 > 1:
        lead = max(8 * b / c.rho_minus_4tau ** 2 + _gap_term(c) + b / c.rho_minus_4tau * 6 * et
                   for c, b in zip(consts, b1))
        zeta = float(np.dot(weights, [c.grad_at_opt_sq for c in consts]))
        first = lead * zeta
        noise = sum(w * (b / c.rho_minus_4tau * (2 * theta ** 2 + 6 * et) + _gap_term(c)) * c.sigma_sq
                    for w, c, b in zip(sigma_weights, consts, b1))
    else:
        lead = max(8 * b / c.rho_minus_4tau ** 2 + _gap_term(c) for c, b in zip(consts, b1))
        first = lead * float(np.dot(restricted_weights, [c.max_restricted_grad_sq for c in consts]))
        noise = sum(w * (2 * b * theta ** 2 / c.rho_minus_4tau + _gap_term(c)) * c.sigma_sq
                    for w, c, b in zip(sigma_weights, consts, b1))
    return s * first + s * noise


def _nu_no_variance_bound(consts, weights, eta1, eta2, theta, b1):
    s = (1.0 + eta2) ** 2
    et = _eta_term(eta1)
    lead = max(8 * b / c.rho_minus_4tau ** 2 for c, b in zip(consts, b1))
    first = lead * float(np.dot(weights, [c.max_restricted_grad_sq for c in consts]))
    bracket = sum(w * (b / c.rho_minus_4tau * (2 * theta ** 2 + 6 * et) + _gap_term(c))
                  for w, c, b in zip(weights, consts, b1))
    second = bracket * float(np.dot(weights, [c.batch_grad_sq_mean for c in consts]))
    return s * first + s * second


def rate_prediction(constants, weights, K, eta1=1.0, eta2=1.0, eta3=1.0, theta=THETA_DEFAULT,
                    variant=Variant.EXACT, delta=None, L=None):
    """Evaluate the convergence bound ``E||x_{t+1}-x*||^2 <= kappa^{t+1}||x_0-x*||^2 + residual``.

    ``variant`` selects full participation (``EXACT``), an inexact local solver
    with accuracy ``delta`` (``INEXACT``), uniform cohorts of size ``L``
    (``PARTIAL``) or the bound without a variance assumption
    (``NO_VARIANCE_BOUND``).
    """
    consts = list(constants)
    N = len(consts)
    p = np.asarray(weights, dtype=np.float64)
    if p.shape != (N,) or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
        raise ContractError("weights must be N nonnegative numbers summing to 1")
    if K < 1:
        raise ContractError("K must be >= 1")
    if min(eta1, eta2, eta3) < 1:
        raise ContractError("eta1, eta2, eta3 must be >= 1")
    b1 = [beta1(c, i) for i, c in enumerate(consts)]
    beta2_alt = None
    if variant is Variant.NO_VARIANCE_BOUND:
        b2 = [beta2_no_variance_bound(c, eta1, theta) for c in consts]
        beta2_alt = [beta2_no_variance_bound_lemma(c, eta1, theta) for c in consts]
    else:
        b2 = [beta2(c, eta1, theta) for c in consts]
    for i, b in enumerate(b2):
        if b < 0:
            raise ConditioningError(f"beta2 is negative at client {i}; the bound does not apply")
    factor = 2.0 if variant is Variant.INEXACT else 1.0
    mu = [factor * (1.0 + eta2) ** 2 * a * b for a, b in zip(b1, b2)]
    lead = 2.0 * eta3 ** 2 + 2.0
    out = RatePrediction(mu, 0.0, 0.0, 0.0, theta, variant, b1, b2, beta2_alt)

    if variant is Variant.PARTIAL:
        if L is None or not 1 <= L <= N:
            raise ContractError(f"partial participation needs 1 <= L <= {N}")
        if not np.allclose(p, 1.0 / N, rtol=0, atol=1e-12):
            raise ContractError("the partial-participation bound assumes uniform weights")
        powered = np.sort(np.power(mu, K))[::-1]
        kappa = lead * float(np.mean(powered[:L]))
        mu_max = float(powered[0])
        nu = _nu(consts, p, eta1, eta2, theta, b1, np.full(N, 1.0 / L), np.full(N, 1.0 / N))
        out.L, out.mu = L, mu_max
        out.kappa, out.nu = kappa, nu
        out.residual_bound = (lead * nu * geometric_sum(mu_max, K) / (1.0 - kappa)
                              if kappa < 1 else float("inf"))
        return out

    kappa = lead * float(np.dot(p, np.power(mu, K)))
    if variant is Variant.NO_VARIANCE_BOUND:
        nu = _nu_no_variance_bound(consts, p, eta1, eta2, theta, b1)
    else:
        nu = _nu(consts, p, eta1, eta2, theta, b1, p, p)
    extra = 0.0
    if variant is Variant.INEXACT:
        if delta is None or delta < 0:
            raise ContractError("the inexact bound needs delta >= 0")
        extra = delta ** 2
        out.delta = delta
    out.kappa, out.nu = kappa, nu
    geo = float(np.dot(p, [geometric_sum(m, K) for m in mu]))
    out.residual_bound = lead * (nu + extra) * geo / (1.0 - kappa) if kappa < 1 else float("inf")
    return out


def best_theta(constants, weights, K, grid=THETA_GRID, **kwargs):
    """Rate prediction with the theta from ``grid`` that minimizes the residual bound.

    Grid points where the bound is not defined (negative beta2) are skipped;
    ties (e.g. a zero residual) go to the smaller kappa.
    """
    best = None
    for th in grid:
        try:
            r = rate_prediction(constants, weights, K, theta=th, **kwargs)
        except ConditioningError:
            continue
        if best is None or (r.residual_bound, r.kappa) < (best.residual_bound, best.kappa):
            best = r
    if best is None:
        raise ConditioningError("no theta on the grid gives a valid bound")
    return best


def corollary_objective_bound(rate, rho, grad_f_at_opt_sq, f_at_opt, x0_err_sq, t):
    """Upper bound on ``E f(x_{t+1})``:
    ``f(x*) + ||grad f(x*)||^2 / (2 rho) + rho (kappa^{t+1} ||x0 - x*||^2 + residual)``."""
    if not rho > 0:
        raise ContractError("rho must be positive")
    return (f_at_opt + grad_f_at_opt_sq / (2.0 * rho)
            + rho * (float(np.power(rate.kappa, t + 1)) * x0_err_sq + rate.residual_bound))


def max_restricted_grad_sq(g, size, dictionary, trials=2000, rng_seed=0, cap=EXHAUSTIVE_CAP):
    """``max_{|Omega| = size} ||P_Omega g||^2`` over atom subsets.

    Exact for orthonormal dictionaries (largest ``size`` squared correlations)
    and for general ones when all subsets fit under ``cap``; otherwise a
    maximum over ``trials`` random subsets (a lower bound). Returns
    ``(value, exact)``.
    """
    g = np.asarray(g, dtype=np.float64)
    size = min(size, dictionary.d)
    if dictionary.is_orthonormal:
        c = dictionary.correlate(g) ** 2
        return float(np.sum(np.sort(c)[::-1][:size])), True
    A = dictionary.atoms
    exact = comb(dictionary.d, size) <= cap
    if exact:
        subsets = itertools.combinations(range(dictionary.d), size)
    else:
        rng = np.random.default_rng(rng_seed)
        subsets = (rng.choice(dictionary.d, size=size, replace=False) for _ in range(trials))
    best = 0.0
    for s in subsets:
        B = A[:, list(s)]
        coef = np.linalg.lstsq(B, g, rcond=None)[0]
        best = max(best, float(np.sum((B @ coef) ** 2)))
    return best, exact


def measure_client_constants(obj, tau, dictionary, x_star, mode="exhaustive", probe_points=20,
                             radius=None, cap=EXHAUSTIVE_CAP, rng_seed=0):
    """Measure every :class:`ClientConstants` field for one client.

    Restricted constants at ``4 tau`` and ``tau`` come from
    :func:`estimate_rsc_rss`; ``sigma_sq`` is a probe maximum (including
    ``x_star``); gradient terms are evaluated at ``x_star``.
    """
    d = dictionary.d
    big = estimate_rsc_rss(obj, min(4 * tau, d), dictionary, mode, radius, cap, rng_seed)
    small = estimate_rsc_rss(obj, min(tau, d), dictionary, mode, radius, cap, rng_seed)
    sigma = estimate_sigma(obj, tau, dictionary, probe_points, rng_seed, points=[x_star], cap=cap)
    g = obj.gradient(x_star)
    restricted, r_exact = max_restricted_grad_sq(g, 4 * tau, dictionary, rng_seed=rng_seed, cap=cap)
    batches, b_exact = iter_batches(obj.dataset, cap, np.random.default_rng(rng_seed))
    batch_sq = float(np.mean([np.sum(obj.gradient(x_star, bt) ** 2) for bt in batches]))
    return ClientConstants(
        rho_minus_4tau=big.rho_minus,
        rho_plus_bar_4tau=big.rho_plus_bar,
        rho_plus_sq_mean_tau=small.rho_plus_sq_mean,
        sigma_sq=sigma,
        grad_at_opt_sq=float(g @ g),
        max_restricted_grad_sq=restricted,
        batch_grad_sq_mean=batch_sq,
        rho_plus_mean_tau=small.rho_plus_bar,
        rho_plus_bar_tau=small.rho_plus_bar,
        exact=big.exhaustive and small.exhaustive and r_exact and b_exact,
    )


def rates_report(rate):
    """The documented ``rates.json`` key set."""
    return {
        "variant": rate.variant.value,
        "theta": rate.theta,
        "beta1": rate.beta1,
        "beta2": rate.beta2,
        "beta2_alt": rate.beta2_alt,
        "mu": rate.mu_per_client,
        "kappa": rate.kappa,
        "nu": rate.nu,
        "residual_bound": rate.residual_bound,
        "delta": rate.delta,
        "L": rate.L,
    }
