"""One client's inner loop: stochastic gradient matching pursuit with optional inexact solves."""
import enum
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .dictionary import DictKind
from .errors import CapabilityError, ContractError, SolverError
from .objectives import LossKind, sample_batch, stochastic_gradient
from .sparse_ops import (
    approx_project,
    orthogonal_project,
    project_estimate_l2_ball,
)


class SolverKind(enum.Enum):
    EXACT = "exact"
    GRADIENT_DESCENT = "gd"
    NEWTON = "newton"


@dataclass(frozen=True)
class Subproblem:
    kind: SolverKind = SolverKind.EXACT
    delta: Optional[float] = None
    max_iter: int = 100_000

    def __post_init__(self):
        if self.kind is not SolverKind.EXACT and not (self.delta is not None and self.delta > 0):
            raise ContractError(f"{self.kind.value} solver needs delta > 0")


@dataclass(frozen=True)
class LocalConfig:
    K: int
    tau: int
    eta1: float = 1.0
    eta2: float = 1.0
    subproblem: Subproblem = field(default_factory=Subproblem)
    ball_radius: Optional[float] = None
    carry_support: str = "global_support"

    def __post_init__(self):
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if self.tau < 1:
            raise ContractError("tau must be >= 1")
        if self.eta1 < 1 or self.eta2 < 1:
            raise ContractError("eta1 and eta2 must be >= 1")
        if self.ball_radius is not None and not self.ball_radius > 0:
            raise ContractError("ball_radius must be positive")
        if self.carry_support not in ("global_support", "empty"):
            raise ContractError("carry_support must be 'global_support' or 'empty'")


@dataclass
class IterationRecord:
    merged_support: np.ndarray
    support: np.ndarray
    subproblem_grad_norm: float
    error: Optional[float] = None


@dataclass
class LocalTrace:
    records: List[IterationRecord] = field(default_factory=list)


class RestrictedSolution(NamedTuple):
    model: np.ndarray
    coefficients: np.ndarray
    grad_norm: float
    iterations: int
    grad_history: List[float]


def _block(dictionary, support):
    if dictionary.kind is DictKind.STANDARD_BASIS:
        return None
    return dictionary.atoms[:, support]


def _restricted_data(obj, dictionary, support):
    E = obj.effective
    if dictionary.kind is DictKind.STANDARD_BASIS:
        return E[:, support]
    return E @ dictionary.atoms[:, support]


def _warm_coefficients(x_warm, dictionary, support):
    if x_warm is None:
        return np.zeros(len(support))
    if dictionary.kind is DictKind.STANDARD_BASIS:
        return x_warm[support].copy()
    return np.linalg.lstsq(dictionary.atoms[:, support], x_warm, rcond=None)[0]


def _synth(dictionary, support, c):
    if dictionary.kind is DictKind.STANDARD_BASIS:
        out = np.zeros(dictionary.n)
        out[support] = c
        return out
    return dictionary.atoms[:, support] @ c


class _RestrictedLoss:
    """``c -> f(A_support c)`` for squared or binary logistic loss."""

    def __init__(self, obj, EG):
        self.kind = obj.kind
        self.EG = EG
        self.y = obj.dataset.targets
        self.m = len(self.y)

    def value(self, c):
        z = self.EG @ c
        if self.kind is LossKind.SQUARED:
            r = z - self.y
            return 0.5 * float(r @ r) / self.m
        return float(np.mean(np.logaddexp(0.0, -2.0 * self.y * z)))

    def grad(self, c):
        z = self.EG @ c
        if self.kind is LossKind.SQUARED:
            return self.EG.T @ (z - self.y) / self.m
        w = -2.0 * self.y / (1.0 + np.exp(np.clip(2.0 * self.y * z, -700, 700)))
        return self.EG.T @ w / self.m

    def hess(self, c):
        if self.kind is LossKind.SQUARED:
            return self.EG.T @ self.EG / self.m
        p = 1.0 / (1.0 + np.exp(np.clip(-2.0 * self.y * (self.EG @ c), -700, 700)))
        lam = 4.0 * p * (1.0 - p)
        return (self.EG.T * lam) @ self.EG / self.m

    def smoothness(self):
        # the logistic curvature weight 4 s (1 - s) never exceeds 1
        G = self.EG.T @ self.EG / self.m
        return float(np.linalg.eigvalsh(G)[-1])


def solve_restricted(obj, support, mode, x_warm=None, dictionary=None):
    """Minimize the client loss over the span of the atoms in ``support``.

    ``EXACT`` (squared loss only) is a minimum-norm least-squares solve.
    ``GRADIENT_DESCENT`` and ``NEWTON`` stop once the strong-convexity
    certificate ``scale * ||grad|| / rho_minus`` is at most ``delta``, where
    ``rho_minus`` is the smallest eigenvalue of the restricted Hessian and
    ``scale`` converts coefficient distance to model distance.
    """
    if obj.kind is LossKind.MULTICLASS_LOGISTIC:
        raise CapabilityError("the local engine handles vector models only")
    if dictionary is None:
        from .dictionary import make_standard_basis
        dictionary = make_standard_basis(obj.model_dim)
    support = np.unique(np.asarray(support, dtype=np.intp))
    if support.size == 0:
        raise ContractError("support must be nonempty")
    mode = mode if isinstance(mode, Subproblem) else Subproblem(mode)
    EG = _restricted_data(obj, dictionary, support)
    f = _RestrictedLoss(obj, EG)

    if mode.kind is SolverKind.EXACT:
        if obj.kind is not LossKind.SQUARED:
            raise CapabilityError("the exact solver is only available for squared loss")
        c = np.linalg.lstsq(EG, f.y, rcond=None)[0]
        g = float(np.linalg.norm(f.grad(c)))
        return RestrictedSolution(_synth(dictionary, support, c), c, g, 1, [g])

    block = _block(dictionary, support)
    scale = 1.0 if block is None else float(np.linalg.norm(block, 2))
    c = _warm_coefficients(x_warm, dictionary, support)
    history = []
    if mode.kind is SolverKind.GRADIENT_DESCENT:
        step = 1.0 / f.smoothness()
        rho_sq = float(np.linalg.eigvalsh(f.hess(c))[0]) if obj.kind is LossKind.SQUARED else None
        for it in range(mode.max_iter + 1):
            g = f.grad(c)
            gn = float(np.linalg.norm(g))
            history.append(gn)
            rho = rho_sq if rho_sq is not None else float(np.linalg.eigvalsh(f.hess(c))[0])
            if rho > 0 and scale * gn / rho <= mode.delta:
                return RestrictedSolution(_synth(dictionary, support, c), c, gn, it, history)
            c = c - step * g
        raise SolverError(f"gradient descent did not reach delta={mode.delta} in {mode.max_iter} steps",
                          residual_norm=history[-1])

    for it in range(mode.max_iter + 1):
        g = f.grad(c)
        gn = float(np.linalg.norm(g))
        history.append(gn)
        H = f.hess(c)
        ev = np.linalg.eigvalsh(H)
        if ev[0] > 0 and scale * gn / ev[0] <= mode.delta:
            return RestrictedSolution(_synth(dictionary, support, c), c, gn, it, history)
        try:
            p = np.linalg.solve(H, g) if ev[0] > 1e-14 * max(ev[-1], 1e-300) else None
        except np.linalg.LinAlgError:
            p = None
        if p is None:
            damp = 1e-10 * np.trace(H) / len(c)
            Hd = H + damp * np.eye(len(c))
            if np.linalg.eigvalsh(Hd)[0] <= 0:
                raise SolverError("restricted Hessian is singular even after damping", residual_norm=gn)
            p = np.linalg.solve(Hd, g)
        # backtracking keeps Newton globally convergent on the logistic loss
        t, f0, slope = 1.0, f.value(c), float(g @ p)
        while f.value(c - t * p) > f0 - 1e-4 * t * slope and t > 1e-12:
            t *= 0.5
        c = c - t * p
    raise SolverError(f"Newton did not reach delta={mode.delta} in {mode.max_iter} steps",
                      residual_norm=history[-1])


def local_stogradmp(obj, x_init, cfg, dictionary, rng, ground_truth=None):
    """Run ``cfg.K`` stochastic gradient matching pursuit iterations from ``x_init``.

    Returns the final tau-sparse estimate and a per-iteration trace.
    """
    if obj.kind is LossKind.MULTICLASS_LOGISTIC:
        raise CapabilityError("the local engine handles vector models only")
    if obj.dictionary is not None and obj.dictionary.kind is not DictKind.STANDARD_BASIS:
        raise ContractError("pass the sparsity dictionary separately; the objective must act on the ambient model")
    tau = cfg.tau
    x = x_init
    carried = x_init.nonzero_support() if cfg.carry_support == "global_support" else np.zeros(0, np.intp)
    trace = LocalTrace()
    wide = min(2 * tau, dictionary.d)
    for _ in range(cfg.K):
        batch = sample_batch(obj.dataset, rng)
        r = stochastic_gradient(obj, x.signal, batch)
        gamma = approx_project(r, wide, dictionary, cfg.eta1, certify=False).estimate.support
        merged = np.union1d(gamma, carried)
        assert len(merged) <= 3 * tau
        sol = solve_restricted(obj, merged, cfg.subproblem, x.signal, dictionary)
        proj = approx_project(sol.model, min(tau, dictionary.d), dictionary, cfg.eta2, certify=False)
        carried = proj.estimate.support
        x = orthogonal_project(sol.model, carried, dictionary, capacity=tau)
        if cfg.ball_radius is not None:
            x = project_estimate_l2_ball(x, cfg.ball_radius, dictionary)
        assert len(x.support) <= tau
        err = None if ground_truth is None else float(np.linalg.norm(x.signal - ground_truth))
        trace.records.append(IterationRecord(merged, carried.copy(), sol.grad_norm, err))
    return x, trace
