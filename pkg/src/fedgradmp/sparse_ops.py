"""Projections onto sparse sets with respect to a dictionary, and the l2-ball projection."""
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .dictionary import DictKind
from .errors import CapabilityError, ContractError

EXHAUSTIVE_CAP = 200_000


@dataclass(frozen=True, eq=False)
class SparseEstimate:
    signal: np.ndarray
    support: np.ndarray
    coefficients: np.ndarray
    capacity: int
    rank_deficient: bool = False

    def __post_init__(self):
        if len(self.support) > self.capacity:
            raise ContractError(f"support size {len(self.support)} exceeds capacity {self.capacity}")
        if len(self.support) != len(self.coefficients):
            raise ContractError("support and coefficients differ in length")
        if len(self.support) > 1 and np.any(np.diff(self.support) <= 0):
            raise ContractError("support indices must be strictly increasing")

    @property
    def n(self):
        return self.signal.shape[0]

    def nonzero_support(self):
        return self.support[self.coefficients != 0.0]


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    estimate: SparseEstimate
    residual_norm: float
    eta_certified: bool
    eta_ratio: float = float("nan")


def zero_estimate(n, capacity=0):
    return SparseEstimate(np.zeros(n), np.zeros(0, dtype=np.intp), np.zeros(0), capacity)


def estimate_from_coefficients(dictionary, support, coefficients, capacity=None, rank_deficient=False):
    support = np.asarray(support, dtype=np.intp)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    order = np.argsort(support, kind="stable")
    support, coefficients = support[order], coefficients[order]
    signal = dictionary.synthesize(coefficients, support) if len(support) else np.zeros(dictionary.n)
    cap = len(support) if capacity is None else capacity
    return SparseEstimate(signal, support, coefficients, cap, rank_deficient)


def _as_support(support, d):
    s = np.unique(np.asarray(support, dtype=np.intp))
    if s.size and (s[0] < 0 or s[-1] >= d):
        raise ContractError(f"support indices must lie in [0, {d})")
    return s


def _restricted_lstsq(block, w):
    coef, _, rank, _ = np.linalg.lstsq(block, w, rcond=None)
    return coef, rank < block.shape[1]


def orthogonal_project(w, support, dictionary, capacity=None):
    """Least-squares projection of ``w`` onto the span of the selected atoms."""
    w = np.asarray(w, dtype=np.float64)
    s = _as_support(support, dictionary.d)
    cap = len(s) if capacity is None else capacity
    if s.size == 0:
        return zero_estimate(dictionary.n, cap)
    if dictionary.is_orthonormal:
        coef = w[s].copy() if dictionary.kind is DictKind.STANDARD_BASIS else dictionary.atoms[:, s].T @ w
        return estimate_from_coefficients(dictionary, s, coef, cap)
    coef, deficient = _restricted_lstsq(dictionary.atoms[:, s], w)
    return estimate_from_coefficients(dictionary, s, coef, cap, deficient)


def top_magnitude(c, tau):
    """Indices of the ``tau`` largest ``|c|`` entries, ties to the lowest index, sorted."""
    if tau <= 0:
        return np.zeros(0, dtype=np.intp)
    idx = np.argsort(-np.abs(c), kind="stable")[:tau]
    return np.sort(idx)


def _check_tau(tau, d):
    if tau < 0 or tau > d:
        raise ContractError(f"tau must be in [0, {d}], got {tau}")


def best_sparse_approx(w, tau, dictionary, exhaustive_cap=EXHAUSTIVE_CAP):
    """Best tau-sparse approximation ``H_tau(w)``.

    Exact top-tau selection of the analysis coefficients for orthonormal
    dictionaries; exhaustive search over all supports for general ones.
    """
    w = np.asarray(w, dtype=np.float64)
    d = dictionary.d
    _check_tau(tau, d)
    if tau == 0:
        return zero_estimate(dictionary.n, 0)
    if dictionary.is_orthonormal:
        c = dictionary.correlate(w)
        s = top_magnitude(c, tau)
        s = s[c[s] != 0.0]
        return estimate_from_coefficients(dictionary, s, c[s], tau)
    total = comb(d, tau)
    if total > exhaustive_cap:
        raise CapabilityError(
            f"exhaustive H_tau needs {total} support evaluations (cap {exhaustive_cap}); use approx_project")
    A = dictionary.atoms
    best, best_res = None, np.inf
    for s in itertools.combinations(range(d), tau):
        coef, deficient = _restricted_lstsq(A[:, s], w)
        res = np.linalg.norm(w - A[:, s] @ coef)
        if res < best_res:
            best, best_res = (np.array(s, dtype=np.intp), coef, deficient), res
    s, coef, deficient = best
    return estimate_from_coefficients(dictionary, s, coef, tau, deficient)


def omp(w, tau, dictionary, rtol=1e-14):
    """Orthogonal matching pursuit for ``tau`` steps (fewer once ``w`` is represented exactly)."""
    A = dictionary.atoms
    wnorm = np.linalg.norm(w)
    selected = []
    coef = np.zeros(0)
    residual = w.copy()
    deficient = False
    available = np.ones(dictionary.d, dtype=bool)
    for _ in range(tau):
        if np.linalg.norm(residual) <= rtol * wnorm or wnorm == 0.0:
            break
        scores = np.abs(A.T @ residual) / dictionary.atom_norms
        scores[~available] = -1.0
        j = int(np.argmax(scores))
        selected.append(j)
        available[j] = False
        coef, deficient = _restricted_lstsq(A[:, selected], w)
        residual = w - A[:, selected] @ coef
    return estimate_from_coefficients(dictionary, selected, coef, tau, deficient)


def approx_project(w, tau, dictionary, eta=1.0, exhaustive_cap=EXHAUSTIVE_CAP, certify=True):
    """Approximate projection ``approx_tau(w, eta)``.

    Orthonormal dictionaries use the exact projection (certified, ratio 1).
    General dictionaries run OMP; when ``certify`` is set and exhaustive
    ``H_tau`` is affordable, the residual ratio against ``H_tau`` is computed
    and ``eta_certified`` reports whether it is within ``eta``.
    """
    if eta < 1:
        raise ContractError(f"eta must be >= 1, got {eta}")
    w = np.asarray(w, dtype=np.float64)
    _check_tau(tau, dictionary.d)
    if tau == 0:
        return ProjectionResult(zero_estimate(dictionary.n, 0), float(np.linalg.norm(w)), True, 1.0)
    if dictionary.is_orthonormal:
        est = best_sparse_approx(w, tau, dictionary)
        return ProjectionResult(est, float(np.linalg.norm(w - est.signal)), True, 1.0)
    est = omp(w, tau, dictionary)
    res = float(np.linalg.norm(w - est.signal))
    if not certify or comb(dictionary.d, tau) > exhaustive_cap:
        return ProjectionResult(est, res, False)
    best_res = float(np.linalg.norm(w - best_sparse_approx(w, tau, dictionary, exhaustive_cap).signal))
    slack = 1e-12 * max(1.0, float(np.linalg.norm(w)))
    if best_res <= slack:
        ratio = 1.0 if res <= slack else np.inf
    else:
        ratio = res / best_res
    return ProjectionResult(est, res, bool(res <= eta * best_res + slack), float(ratio))


def project_l2_ball(u, R):
    """Euclidean projection onto ``{x : ||x|| <= R}``."""
    if not R > 0:
        raise ContractError(f"radius must be positive, got {R}")
    u = np.asarray(u, dtype=np.float64)
    norm = np.linalg.norm(u)
    if norm <= R:
        return u.copy()
    return (R / norm) * u


def project_estimate_l2_ball(est, R, dictionary):
    """Apply the ball projection to an estimate; scaling keeps the support."""
    norm = np.linalg.norm(est.signal)
    if norm <= R:
        return est
    scale = R / norm
    return SparseEstimate(est.signal * scale, est.support, est.coefficients * scale,
                          est.capacity, est.rank_deficient)
