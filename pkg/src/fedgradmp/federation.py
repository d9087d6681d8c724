"""Server-side orchestration for FedGradMP and the FedAvg / FedIterHT baselines."""
import csv
import enum
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dictionary import make_standard_basis
from .errors import ClientRunError, ConfigError
from .local_engine import LocalConfig, SolverKind, local_stogradmp
from .objectives import sample_batch, stochastic_gradient
from .rng import stream
from .sparse_ops import (
    SparseEstimate,
    approx_project,
    orthogonal_project,
    project_estimate_l2_ball,
    project_l2_ball,
    zero_estimate,
)


class Algorithm(enum.Enum):
    FEDGRADMP = "fedgradmp"
    INEXACT_FEDGRADMP = "inexact_fedgradmp"
    FEDAVG = "fedavg"
    FEDITERHT = "fediterht"

    @property
    def is_baseline(self):
        return self in (Algorithm.FEDAVG, Algorithm.FEDITERHT)


@dataclass(frozen=True, eq=False)
class FederationConfig:
    algorithm: Algorithm
    T: int
    N: int
    local: LocalConfig
    L: Optional[int] = None
    weights: Optional[np.ndarray] = None
    eta3: float = 1.0
    learning_rate: Optional[float] = None
    seed: int = 0
    client_threshold: bool = True

    def __post_init__(self):
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        L = self.N if self.L is None else self.L
        if not 1 <= L <= self.N:
            raise ConfigError(f"cohort size L must be in [1, {self.N}], got {L}")
        object.__setattr__(self, "L", L)
        p = np.full(self.N, 1.0 / self.N) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if p.shape != (self.N,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be N nonnegative numbers summing to 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "weights", p)
        if self.eta3 < 1:
            raise ConfigError("eta3 must be >= 1")
        if self.algorithm.is_baseline and not (self.learning_rate is not None and self.learning_rate >= 0):
            raise ConfigError(f"{self.algorithm.value} needs a nonnegative learning_rate")
        if self.algorithm is Algorithm.INEXACT_FEDGRADMP and self.local.subproblem.kind is SolverKind.EXACT:
            raise ConfigError("inexact FedGradMP needs a gradient-descent or Newton subproblem solver")

    @property
    def tau(self):
        return self.local.tau

    @property
    def outside_analyzed_regime(self):
        """Partial participation with non-uniform weights has no convergence guarantee."""
        return self.L < self.N and not np.allclose(self.weights, 1.0 / self.N, rtol=0, atol=1e-15)


@dataclass
class RoundRecord:
    round: int
    rel_error: float
    loss: float
    support_f1: float
    cohort: List[int]
    wall_ms: float

    @property
    def cohort_size(self):
        return len(self.cohort)


@dataclass
class FederationRun:
    records: List[RoundRecord]
    final: object
    iterates: List[np.ndarray] = field(default_factory=list)


def sample_cohort(N, L, rng):
    """``L`` distinct client ids drawn uniformly without replacement, sorted."""
    if not 1 <= L <= N:
        raise ConfigError(f"cohort size L must be in [1, {N}], got {L}")
    if L == N:
        return np.arange(N)
    return np.sort(rng.choice(N, size=L, replace=False))


def aggregate_and_threshold(estimates, weights, tau, eta3, dictionary):
    """``P_{Lambda_s}(sum_i w_i x_i)`` with ``Lambda_s = approx_tau(sum_i w_i x_i, eta3)``."""
    if len(estimates) == 0:
        raise ConfigError("cannot aggregate an empty cohort")
    if len(estimates) != len(weights):
        raise ConfigError("one weight per estimate is required")
    avg = weighted_average([_signal(e) for e in estimates], weights)
    support = approx_project(avg, min(tau, dictionary.d), dictionary, eta3, certify=False).estimate.support
    return orthogonal_project(avg, support, dictionary, capacity=tau)


def _signal(e):
    return e.signal if isinstance(e, SparseEstimate) else np.asarray(e, dtype=np.float64)


def weighted_average(vectors, weights):
    out = np.zeros_like(vectors[0])
    for w, v in zip(weights, vectors):
        out += w * v
    return out


def fediterht_local_update(obj, x, lr, K, tau, dictionary, rng, threshold=True):
    """``K`` steps of ``x <- H_tau(x - lr * grad g_j(x))`` with fresh mini-batches.

    With ``threshold=False`` the client takes plain SGD steps and only the
    server thresholds (the FedHT flavour).
    """
    if not threshold:
        return fedavg_local_update(obj, x.signal, lr, K, rng)
    est = x
    for _ in range(K):
        g = stochastic_gradient(obj, est.signal, sample_batch(obj.dataset, rng))
        est = approx_project(est.signal - lr * g, min(tau, dictionary.d), dictionary, certify=False).estimate
    return est


def fedavg_local_update(obj, x, lr, K, rng):
    """``K`` plain mini-batch SGD steps; no thresholding."""
    x = np.array(x, dtype=np.float64)
    for _ in range(K):
        x = x - lr * stochastic_gradient(obj, x, sample_batch(obj.dataset, rng))
    return x


def support_f1(found, truth):
    found, truth = set(np.asarray(found).tolist()), set(np.asarray(truth).tolist())
    if not found and not truth:
        return 1.0
    tp = len(found & truth)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(found), tp / len(truth)
    return 2 * prec * rec / (prec + rec)


def _client_update(cfg, obj, state, dictionary, t, i, truth_signal):
    rng = stream(cfg.seed, "local", t, i)
    alg = cfg.algorithm
    try:
        if alg is Algorithm.FEDAVG:
            return fedavg_local_update(obj, state, cfg.learning_rate, cfg.local.K, rng)
        if alg is Algorithm.FEDITERHT:
            return fediterht_local_update(obj, state, cfg.learning_rate, cfg.local.K, cfg.tau, dictionary, rng,
                                          cfg.client_threshold)
        est, _ = local_stogradmp(obj, state, cfg.local, dictionary, rng, truth_signal)
        return est
    except Exception as exc:
        raise ClientRunError(t, i, exc) from exc


def federate(cfg, objectives, ground_truth=None, dictionary=None, threads=1, keep_iterates=False):
    """Run ``cfg.T`` rounds and return records, the final iterate and optionally all iterates."""
    if len(objectives) != cfg.N:
        raise ConfigError(f"expected {cfg.N} objectives, got {len(objectives)}")
    n = objectives[0].model_dim
    if any(o.model_dim != n for o in objectives):
        raise ConfigError("all client objectives must share the model dimension")
    dictionary = dictionary if dictionary is not None else make_standard_basis(n)
    if dictionary.n != n:
        raise ConfigError("dictionary atom length does not match the model dimension")
    if cfg.outside_analyzed_regime:
        warnings.warn("non-uniform weights with partial participation: outside analyzed regime", stacklevel=2)
    dense = cfg.algorithm is Algorithm.FEDAVG
    state = np.zeros(n) if dense else zero_estimate(n, cfg.tau)
    truth_signal = None if ground_truth is None else _signal(ground_truth)
    truth_support = None if ground_truth is None else ground_truth.nonzero_support()
    truth_norm = None if truth_signal is None else float(np.linalg.norm(truth_signal))
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    records, iterates = [], []
    R = cfg.local.ball_radius
    try:
        for t in range(cfg.T):
            t0 = time.perf_counter()
            cohort = sample_cohort(cfg.N, cfg.L, stream(cfg.seed, "cohort", t))
            args = [(cfg, objectives[i], state, dictionary, t, int(i), truth_signal) for i in cohort]
            if pool is None:
                outs = [_client_update(*a) for a in args]
            else:
                outs = list(pool.map(lambda a: _client_update(*a), args))
            w = cfg.weights[cohort] if cfg.L == cfg.N else np.full(cfg.L, 1.0 / cfg.L)
            if dense:
                state = weighted_average([_signal(o) for o in outs], w)
                if R is not None:
                    state = project_l2_ball(state, R)
                x = state
            else:
                state = aggregate_and_threshold(outs, w, cfg.tau, cfg.eta3, dictionary)
                if R is not None:
                    state = project_estimate_l2_ball(state, R, dictionary)
                x = state.signal
            wall = (time.perf_counter() - t0) * 1e3
            loss = float(sum(p * o.loss(x) for p, o in zip(cfg.weights, objectives)))
            rel = f1 = float("nan")
            if truth_signal is not None:
                rel = float(np.linalg.norm(x - truth_signal)) / truth_norm if truth_norm > 0 else float(np.linalg.norm(x))
                if dense:
                    found = approx_project(x, min(cfg.tau, dictionary.d), dictionary, certify=False).estimate.nonzero_support()
                else:
                    found = state.nonzero_support()
                f1 = support_f1(found, truth_support)
            records.append(RoundRecord(t + 1, rel, loss, f1, [int(i) for i in cohort], wall))
            if keep_iterates:
                iterates.append(x.copy())
    finally:
        if pool is not None:
            pool.shutdown()
    return FederationRun(records, state, iterates)


def run_federation(cfg, objectives, ground_truth=None, dictionary=None, threads=1):
    """One :class:`RoundRecord` per round; see :func:`federate` for the final iterate."""
    return federate(cfg, objectives, ground_truth, dictionary, threads).records


CSV_HEADER = ["round", "rel_error", "loss", "support_f1", "cohort_size", "wall_ms"]


def _g17(v):
    return format(v, ".17g")


def write_csv(path, records, wall_clock=True):
    """One row per round; ``wall_clock=False`` writes 0 timings for byte-stable output."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.round, _g17(r.rel_error), _g17(r.loss), _g17(r.support_f1),
                        r.cohort_size, _g17(r.wall_ms) if wall_clock else "0"])
