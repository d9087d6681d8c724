"""Heterogeneous synthetic federated datasets with a planted sparse ground truth.

Client ``i`` (1-based) draws every data entry from ``N(mu_i, 1 / i**decay)``
where ``mu_i ~ N(0, alpha)``. Targets are ``data @ x_true`` plus optional
Gaussian noise with variance ``noise_var``.
"""
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import matrix_io
from .dictionary import Dictionary, load_dictionary, make_standard_basis, save_dictionary
from .errors import ContractError
from .objectives import ClientDataset, save_dataset, load_dataset
from .rng import stream
from .sparse_ops import estimate_from_coefficients


@dataclass(frozen=True, eq=False)
class SynthSpec:
    N: int
    per_client: int
    n: int
    alpha: float
    sparsity: int
    variance_decay_exponent: float = 1.1
    noise_var: float = 0.0
    batch_size: Optional[int] = None
    dictionary: Optional[Dictionary] = None
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.per_client < 1 or self.n < 1:
            raise ContractError("N, per_client and n must be positive")
        if self.alpha < 0 or self.noise_var < 0:
            raise ContractError("alpha and noise_var must be nonnegative")
        if self.dictionary is not None and self.dictionary.n != self.n:
            raise ContractError("dictionary atom length must equal n")
        if not 1 <= self.sparsity <= self.dict.d:
            raise ContractError(f"sparsity must be in [1, {self.dict.d}]")
        if self.batch_size is not None and not 1 <= self.batch_size <= self.per_client:
            raise ContractError("batch_size must be in [1, per_client]")

    @property
    def dict(self):
        return self.dictionary if self.dictionary is not None else make_standard_basis(self.n)

    @property
    def noise_std(self):
        return float(np.sqrt(self.noise_var))


@dataclass
class SynthFederation:
    datasets: list
    ground_truth: object
    means: np.ndarray = field(repr=False)


def generate(spec):
    """Draw the client datasets and the planted ground truth.

    Returns ``(datasets, ground_truth)``; client means are available through
    :func:`generate_with_means`.
    """
    fed = generate_with_means(spec)
    return fed.datasets, fed.ground_truth


def generate_with_means(spec):
    D = spec.dict
    rng = stream(spec.seed, "synth-truth")
    support = np.sort(rng.choice(D.d, size=spec.sparsity, replace=False))
    coef = rng.standard_normal(spec.sparsity)
    coef /= np.linalg.norm(coef)
    truth = estimate_from_coefficients(D, support, coef, spec.sparsity)
    x = truth.signal
    b = spec.batch_size if spec.batch_size is not None else spec.per_client
    datasets, means = [], np.empty(spec.N)
    for i in range(1, spec.N + 1):
        r = stream(spec.seed, "synth-client", i)
        mu = r.normal(0.0, np.sqrt(spec.alpha)) if spec.alpha > 0 else 0.0
        sd = i ** (-spec.variance_decay_exponent / 2.0)
        A = r.normal(mu, sd, size=(spec.per_client, spec.n))
        y = A @ x
        if spec.noise_var > 0:
            y = y + r.normal(0.0, spec.noise_std, size=spec.per_client)
        datasets.append(ClientDataset(A, y, b, client_id=i - 1))
        means[i - 1] = mu
    return SynthFederation(datasets, truth, means)


def heterogeneity_report(objectives, x_star, weights):
    """Return ``(sum_i p_i ||grad f_i(x*)||**2, per-client gradient norms)``."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(objectives) != len(weights):
        raise ContractError("one weight per objective is required")
    norms = [float(np.linalg.norm(o.gradient(x_star))) for o in objectives]
    return float(np.sum(weights * np.square(norms))), norms


def client_mean_spread(datasets):
    """Variance across clients of the per-client mean data entry."""
    return float(np.var([d.data.mean() for d in datasets]))


def dump(path, datasets, ground_truth, dictionary):
    """Write a federation to a directory in the shared matrix format."""
    os.makedirs(path, exist_ok=True)
    for d in datasets:
        save_dataset(os.path.join(path, f"client{d.client_id}_data.txt"),
                     os.path.join(path, f"client{d.client_id}_targets.txt"), d)
    save_dictionary(os.path.join(path, "dictionary.txt"), dictionary)
    matrix_io.save_vector(os.path.join(path, "truth_coefficients.txt"), ground_truth.coefficients)
    meta = {"N": len(datasets), "batch_sizes": [d.batch_size for d in datasets],
            "support": ground_truth.support.tolist(), "capacity": ground_truth.capacity}
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)


def load(path):
    """Inverse of :func:`dump`; returns ``(datasets, ground_truth, dictionary)``."""
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    datasets = [load_dataset(os.path.join(path, f"client{i}_data.txt"),
                             os.path.join(path, f"client{i}_targets.txt"), b, client_id=i)
                for i, b in enumerate(meta["batch_sizes"])]
    D = load_dictionary(os.path.join(path, "dictionary.txt"))
    if np.array_equal(D.atoms, np.eye(D.n)):
        D = make_standard_basis(D.n)
    coef = matrix_io.load_vector(os.path.join(path, "truth_coefficients.txt"))
    truth = estimate_from_coefficients(D, meta["support"], coef, meta["capacity"])
    return datasets, truth, D
