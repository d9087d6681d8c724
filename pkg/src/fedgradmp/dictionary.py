"""Atom sets (dictionaries) and conditioning diagnostics.

Atoms are stored as the columns of an ``n x d`` matrix. A vector is tau-sparse
with respect to the dictionary when it is a combination of at most tau columns.
"""
import enum
import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import matrix_io
from .errors import InvalidAtomError, InvalidDimensionError, UndefinedStableRankError

ORTHONORMAL_TOL = 1e-10


class DictKind(enum.Enum):
    STANDARD_BASIS = "standard_basis"
    ORTHONORMAL = "orthonormal"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class Dictionary:
    atoms: np.ndarray
    kind: DictKind
    atom_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise InvalidDimensionError(f"atom matrix must be n x d with n, d >= 1, got {atoms.shape}")
        norms = np.linalg.norm(atoms, axis=0)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise InvalidAtomError(f"atom(s) {zero.tolist()} have zero norm")
        if self.kind is DictKind.STANDARD_BASIS:
            n, d = atoms.shape
            if n != d or not np.array_equal(atoms, np.eye(n)):
                raise InvalidAtomError("standard basis must be the identity matrix")
        atoms.setflags(write=False)
        norms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "atom_norms", norms)

    @property
    def n(self):
        return self.atoms.shape[0]

    @property
    def d(self):
        return self.atoms.shape[1]

    @property
    def is_orthonormal(self):
        """True for the standard basis and for detected orthonormal dictionaries."""
        return self.kind is not DictKind.GENERAL

    def synthesize(self, coefficients, support=None):
        """Return ``sum_j coefficients[j] * atom[support[j]]``."""
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if support is None:
            if self.kind is DictKind.STANDARD_BASIS:
                return coefficients.copy()
            return self.atoms @ coefficients
        support = np.asarray(support, dtype=np.intp)
        if self.kind is DictKind.STANDARD_BASIS:
            out = np.zeros(self.n)
            out[support] = coefficients
            return out
        return self.atoms[:, support] @ coefficients

    def correlate(self, w):
        """Return ``atoms.T @ w``."""
        if self.kind is DictKind.STANDARD_BASIS:
            return np.array(w, dtype=np.float64)
        return self.atoms.T @ w


def _check_positive(name, value):
    if int(value) != value or value < 1:
        raise InvalidDimensionError(f"{name} must be a positive integer, got {value!r}")


def is_orthonormal(atoms, tol=ORTHONORMAL_TOL):
    n, d = atoms.shape
    if d > n:
        return False
    gram = atoms.T @ atoms
    return bool(np.max(np.abs(gram - np.eye(d))) <= tol)


def make_standard_basis(n):
    _check_positive("n", n)
    return Dictionary(np.eye(int(n)), DictKind.STANDARD_BASIS)


def make_gaussian_dictionary(n, d, scale=None, rng_seed=0):
    """I.i.d. N(0, scale**2) atoms; ``scale`` defaults to ``1/sqrt(n)`` (unit expected column norm)."""
    _check_positive("n", n)
    _check_positive("d", d)
    if scale is None:
        scale = 1.0 / np.sqrt(n)
    if not scale > 0:
        raise InvalidDimensionError(f"scale must be positive, got {scale!r}")
    rng = np.random.default_rng(rng_seed)
    atoms = rng.normal(0.0, scale, size=(int(n), int(d)))
    return Dictionary(atoms, DictKind.GENERAL)


def make_dictionary(atoms):
    """Wrap an atom matrix, detecting orthonormality."""
    atoms = np.asarray(atoms, dtype=np.float64)
    if atoms.ndim == 2 and atoms.shape[0] == atoms.shape[1] and np.array_equal(atoms, np.eye(atoms.shape[0])):
        return Dictionary(atoms, DictKind.STANDARD_BASIS)
    kind = DictKind.ORTHONORMAL if atoms.ndim == 2 and is_orthonormal(atoms) else DictKind.GENERAL
    return Dictionary(atoms, kind)


def load_dictionary(path):
    """Load an atom matrix; the identity loads as orthonormal, not as the standard basis."""
    atoms = matrix_io.load_matrix(path)
    kind = DictKind.ORTHONORMAL if atoms.size and is_orthonormal(atoms) else DictKind.GENERAL
    return Dictionary(atoms, kind)


def save_dictionary(path, dictionary):
    matrix_io.save_matrix(path, dictionary.atoms)


def operator_norm(B, tol=1e-10, max_iter=10_000):
    """Largest singular value of ``B``.

    Dense SVD for small matrices, power iteration on ``B.T @ B`` otherwise.
    """
    B = np.asarray(B, dtype=np.float64)
    if max(B.shape) <= 64:
        return float(np.linalg.svd(B, compute_uv=False)[0]) if B.size else 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(B.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = B @ v
        w = B.T @ u
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_sigma = np.sqrt(norm_w)
        if abs(new_sigma - sigma) <= tol * new_sigma:
            return float(new_sigma)
        sigma = new_sigma
    return float(sigma)


def stable_rank(B):
    """``||B||_F**2 / ||B||**2``."""
    B = np.asarray(B, dtype=np.float64)
    fro2 = float(np.sum(B * B))
    if fro2 == 0.0:
        raise UndefinedStableRankError("stable rank of the zero matrix is undefined")
    return fro2 / operator_norm(B) ** 2


def _random_supports(d, tau, count, rng):
    seen = set()
    out = []
    while len(out) < count:
        s = tuple(sorted(rng.choice(d, size=tau, replace=False).tolist()))
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def rip_ratio_estimate(B, dictionary, tau, trials, rng_seed=0):
    """Extremes of ``||B A x|| / ||x||`` over tau-sparse coefficient vectors ``x``.

    For each visited support the restricted extremes are exact (singular values
    of the column block), so the only approximation is which supports are
    visited: all of them when ``C(d, tau) <= trials``, otherwise ``trials``
    distinct supports drawn uniformly. The returned ``(lower, upper)`` always
    lies inside the exact restricted range.
    """
    B = np.asarray(B, dtype=np.float64)
    d = dictionary.d
    if not 1 <= tau <= d:
        raise InvalidDimensionError(f"tau must be in [1, {d}], got {tau}")
    if trials < 1:
        raise InvalidDimensionError("trials must be >= 1")
    M = B @ dictionary.atoms
    total = comb(d, tau)
    if total <= trials:
        supports = itertools.combinations(range(d), tau)
    else:
        supports = _random_supports(d, tau, trials, np.random.default_rng(rng_seed))
    lower, upper = np.inf, 0.0
    for s in supports:
        sv = np.linalg.svd(M[:, list(s)], compute_uv=False)
        smin = sv[-1] if len(sv) == tau else 0.0
        lower = min(lower, smin)
        upper = max(upper, sv[0])
    return float(lower), float(upper)
