"""Client losses, mini-batch gradients, and restricted curvature estimates.

``f_i(x) = (1/|D_i|) sum_k loss_k(x)`` and the mini-batch loss ``g_{i,j}`` is the
same average over a size-``b`` subset of the client's points. Averaging
``g_{i,j}`` over all ``C(|D_i|, b)`` subsets recovers ``f_i`` exactly.
"""
import enum
import itertools
from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
from scipy.special import expit, logsumexp

from . import matrix_io
from .dictionary import DictKind, Dictionary
from .errors import CapabilityError, ContractError

EXHAUSTIVE_CAP = 200_000


class LossKind(enum.Enum):
    SQUARED = "squared"
    BINARY_LOGISTIC = "binary_logistic"
    MULTICLASS_LOGISTIC = "multiclass_logistic"


@dataclass(frozen=True, eq=False)
class ClientDataset:
    data: np.ndarray
    targets: np.ndarray
    batch_size: int
    client_id: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if data.ndim != 2:
            raise ContractError(f"data must be 2-D, got shape {data.shape}")
        if targets.shape != (data.shape[0],):
            raise ContractError(f"targets shape {targets.shape} does not match {data.shape[0]} rows")
        if not 1 <= self.batch_size <= data.shape[0]:
            raise ContractError(f"batch_size must be in [1, {data.shape[0]}], got {self.batch_size}")
        data.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "targets", targets)

    @property
    def size(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]

    def with_batch_size(self, b):
        return ClientDataset(self.data, self.targets, b, self.client_id)


def normalize_rows(data):
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ContractError("cannot normalize a zero data row")
    return data / norms


def load_dataset(data_path, targets_path, batch_size, client_id=0, normalize=False):
    data = matrix_io.load_matrix(data_path)
    if normalize:
        data = normalize_rows(data)
    targets = matrix_io.load_vector(targets_path)
    return ClientDataset(data, targets, batch_size, client_id)


def save_dataset(data_path, targets_path, dataset):
    matrix_io.save_matrix(data_path, dataset.data)
    matrix_io.save_vector(targets_path, dataset.targets)


@dataclass(frozen=True, eq=False)
class Objective:
    """A client's empirical loss.

    With ``dictionary`` set, the model lives in coefficient space and the
    effective data matrix is ``data @ atoms``.
    """
    kind: LossKind
    dataset: ClientDataset
    dictionary: Optional[Dictionary] = None
    n_classes: int = 2
    effective: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ds = self.dataset
        if self.dictionary is not None and self.dictionary.kind is not DictKind.STANDARD_BASIS:
            if self.dictionary.n != ds.n:
                raise ContractError("dictionary atom length does not match data width")
            eff = ds.data @ self.dictionary.atoms
            eff.setflags(write=False)
        else:
            eff = ds.data
        object.__setattr__(self, "effective", eff)
        if self.kind is LossKind.BINARY_LOGISTIC:
            if not np.all(np.isin(ds.targets, (-1.0, 1.0))):
                raise ContractError("binary logistic targets must be -1 or +1")
            _check_unit_rows(ds.data)
        elif self.kind is LossKind.MULTICLASS_LOGISTIC:
            t = ds.targets
            if np.any(t != np.round(t)) or np.any(t < 0) or np.any(t >= self.n_classes):
                raise ContractError(f"multiclass targets must be integers in [0, {self.n_classes})")
            _check_unit_rows(ds.data)

    @property
    def model_dim(self):
        return self.effective.shape[1]

    @property
    def model_shape(self):
        if self.kind is LossKind.MULTICLASS_LOGISTIC:
            return (self.model_dim, self.n_classes)
        return (self.model_dim,)

    def _rows(self, batch):
        if batch is None:
            return self.effective, self.dataset.targets
        return self.effective[batch], self.dataset.targets[batch]

    def loss(self, x, batch=None):
        E, y = self._rows(batch)
        if self.kind is LossKind.SQUARED:
            r = E @ x - y
            return 0.5 * float(r @ r) / len(y)
        if self.kind is LossKind.BINARY_LOGISTIC:
            return float(np.mean(np.logaddexp(0.0, -2.0 * y * (E @ x))))
        scores = E @ x
        labels = y.astype(np.intp)
        return float(np.mean(logsumexp(scores, axis=1) - scores[np.arange(len(y)), labels]))

    def gradient(self, x, batch=None):
        E, y = self._rows(batch)
        m = len(y)
        if self.kind is LossKind.SQUARED:
            return E.T @ (E @ x - y) / m
        if self.kind is LossKind.BINARY_LOGISTIC:
            # d/dz log(1 + exp(-2 y z)) = -2 y * sigmoid(-2 y z)
            w = -2.0 * y * expit(-2.0 * y * (E @ x))
            return E.T @ w / m
        scores = E @ x
        probs = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
        probs[np.arange(m), y.astype(np.intp)] -= 1.0
        return E.T @ probs / m

    def hessian(self, x, batch=None):
        """Dense Hessian for vector models (squared and binary logistic)."""
        E, y = self._rows(batch)
        m = len(y)
        if self.kind is LossKind.SQUARED:
            return E.T @ E / m
        if self.kind is LossKind.BINARY_LOGISTIC:
            p = expit(2.0 * y * (E @ x))
            lam = 4.0 * p * (1.0 - p)
            return (E.T * lam) @ E / m
        raise CapabilityError("dense Hessian is only provided for vector models")

    def restricted_hessian(self, x, block, batch=None):
        """Hessian of ``c -> f(x + block @ c)`` at ``c = 0`` (block: model_dim x k)."""
        E, y = self._rows(batch)
        EB = E @ block
        m = len(y)
        if self.kind is LossKind.SQUARED:
            return EB.T @ EB / m
        if self.kind is LossKind.BINARY_LOGISTIC:
            p = expit(2.0 * y * (E @ x))
            lam = 4.0 * p * (1.0 - p)
            return (EB.T * lam) @ EB / m
        raise CapabilityError("restricted Hessian is only provided for vector models")


def _check_unit_rows(data, tol=1e-6):
    norms = np.linalg.norm(data, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ContractError("logistic objectives need unit-norm data rows; load with normalize=True")


def full_gradient(obj, x):
    return obj.gradient(x)


def stochastic_gradient(obj, x, batch):
    batch = np.asarray(batch, dtype=np.intp)
    b = obj.dataset.batch_size
    if batch.shape != (b,):
        raise ContractError(f"batch must contain exactly {b} indices, got {batch.size}")
    if len(np.unique(batch)) != b or batch.min() < 0 or batch.max() >= obj.dataset.size:
        raise ContractError("batch indices must be distinct and within the dataset")
    return obj.gradient(x, batch)


def sample_batch(dataset, rng):
    """Uniform size-``b`` subset of ``range(|D_i|)``, returned sorted."""
    m, b = dataset.size, dataset.batch_size
    if b == m:
        return np.arange(m)
    return np.sort(rng.choice(m, size=b, replace=False))


def iter_batches(dataset, cap=EXHAUSTIVE_CAP, rng=None, samples=1000):
    """All mini-batches when ``C(|D_i|, b) <= cap``; otherwise ``samples`` uniform draws.

    Returns ``(batches, exhaustive)``.
    """
    m, b = dataset.size, dataset.batch_size
    if comb(m, b) <= cap:
        return [np.array(s, dtype=np.intp) for s in itertools.combinations(range(m), b)], True
    rng = rng if rng is not None else np.random.default_rng(0)
    return [sample_batch(dataset, rng) for _ in range(samples)], False


class RestrictedConstants(NamedTuple):
    rho_minus: float
    rho_plus_bar: float
    rho_plus_max: float
    rho_plus_sq_mean: float
    exhaustive: bool


def _supports(d, tau, mode, cap, rng):
    total = comb(d, tau)
    if mode == "exhaustive":
        if total > cap:
            raise CapabilityError(f"{total} supports exceed the exhaustive cap {cap}")
        return itertools.combinations(range(d), tau), True
    trials = mode[1]
    if total <= trials:
        return itertools.combinations(range(d), tau), True
    return [tuple(np.sort(rng.choice(d, size=tau, replace=False))) for _ in range(trials)], False


def _restricted_extremes(gram_fn, atoms, supports, standard):
    lo, hi = np.inf, -np.inf
    for s in supports:
        s = list(s)
        if standard:
            ev = np.linalg.eigvalsh(gram_fn(None, s))
        else:
            A_s = atoms[:, s]
            ev = scipy.linalg.eigh(gram_fn(A_s, None), A_s.T @ A_s, eigvals_only=True)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    return max(lo, 0.0), max(hi, 0.0)


def estimate_rsc_rss(obj, tau, dictionary, mode="exhaustive", radius=None,
                     cap=EXHAUSTIVE_CAP, rng_seed=0):
    """Restricted strong convexity / smoothness constants over tau-sparse directions.

    ``mode`` is ``"exhaustive"`` or ``("sampled", trials)``. Squared loss uses
    the extreme eigenvalues of restricted Hessians (full data for ``rho_minus``,
    each mini-batch for ``rho_plus``). Binary logistic returns the analytic
    sandwich for models with ``||x|| <= radius``: upper from the data Gram
    matrix, lower scaled by ``4 / (1 + e**radius)**2``.
    """
    if obj.kind is LossKind.MULTICLASS_LOGISTIC:
        raise CapabilityError("restricted constants are not provided for multiclass logistic")
    if obj.kind is LossKind.BINARY_LOGISTIC and radius is None:
        raise ContractError("logistic constants need the model radius R")
    if dictionary.n != obj.model_dim:
        raise ContractError("dictionary does not match the model dimension")
    rng = np.random.default_rng(rng_seed)
    standard = dictionary.kind is DictKind.STANDARD_BASIS
    atoms = dictionary.atoms
    E = obj.effective

    def gram_for(rows):
        def fn(A_s, s):
            B = rows[:, s] if standard else rows @ A_s
            return B.T @ B / rows.shape[0]
        return fn

    supports, sup_exhaustive = _supports(dictionary.d, tau, mode, cap, rng)
    supports = list(supports)
    lo, _ = _restricted_extremes(gram_for(E), atoms, supports, standard)
    batches, batch_exhaustive = iter_batches(obj.dataset, cap, rng)
    uppers = np.array([_restricted_extremes(gram_for(E[bt]), atoms, supports, standard)[1]
                       for bt in batches])
    if obj.kind is LossKind.BINARY_LOGISTIC:
        lo *= 4.0 / (1.0 + np.exp(radius)) ** 2
    return RestrictedConstants(float(lo), float(uppers.mean()), float(uppers.max()),
                               float(np.mean(uppers ** 2)), sup_exhaustive and batch_exhaustive)


def gradient_variance(obj, x, cap=EXHAUSTIVE_CAP, rng=None, samples=2000):
    """``E_j ||grad g_j(x) - grad f(x)||**2`` over uniform mini-batches."""
    if obj.dataset.batch_size == obj.dataset.size:
        return 0.0
    g = obj.gradient(x)
    batches, _ = iter_batches(obj.dataset, cap, rng, samples)
    return float(np.mean([np.sum((obj.gradient(x, bt) - g) ** 2) for bt in batches]))


def random_sparse_point(dictionary, tau, rng, scale=1.0):
    s = np.sort(rng.choice(dictionary.d, size=tau, replace=False))
    c = rng.standard_normal(tau)
    return dictionary.synthesize(scale * c / np.linalg.norm(c), s)


def estimate_sigma(obj, tau, dictionary, probe_points, rng_seed=0, points=None, cap=EXHAUSTIVE_CAP):
    """Probe-max estimate of the mini-batch gradient variance bound ``sigma_i**2``.

    ``points`` (if given) are probed first; the remaining probes are random
    tau-sparse unit vectors. Any finite probe set gives a lower bound on the
    worst case over all tau-sparse points.
    """
    if probe_points < 1:
        raise ContractError("probe_points must be >= 1")
    rng = np.random.default_rng(rng_seed)
    pts = [np.asarray(p, dtype=np.float64) for p in (points or [])]
    while len(pts) < probe_points:
        pts.append(random_sparse_point(dictionary, tau, rng))
    return max(gradient_variance(obj, p, cap, rng) for p in pts[:max(probe_points, len(pts))])
