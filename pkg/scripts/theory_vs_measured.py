"""Predicted contraction kappa against the measured mean squared-error contraction on a tiny federation."""
import numpy as np

from fedgradmp import (
    Algorithm,
    ClientDataset,
    FederationConfig,
    LocalConfig,
    LossKind,
    Objective,
    Variant,
    federate,
    make_standard_basis,
    rate_prediction,
)
from fedgradmp.theory import measure_client_constants


def main(n=8, m=40, K=2, theta=64.0, seeds=20, noise=0.02):
    rng = np.random.default_rng(0)
    data = []
    for _ in range(2):
        Q, _ = np.linalg.qr(rng.standard_normal((m, n)))
        data.append(np.sqrt(m) * Q + noise * rng.standard_normal((m, n)))
    D, w = make_standard_basis(n), np.array([0.5, 0.5])
    x_star = np.zeros(n)
    x_star[3] = 1.0
    objs = [Objective(LossKind.SQUARED, ClientDataset(A, A @ x_star, m)) for A in data]
    consts = [measure_client_constants(o, 1, D, x_star) for o in objs]
    for variant, extra in ((Variant.EXACT, {}), (Variant.INEXACT, {"delta": 1e-3}),
                           (Variant.PARTIAL, {"L": 1}), (Variant.PARTIAL, {"L": 2})):
        r = rate_prediction(consts, w, K, theta=theta, variant=variant, **extra)
        print(f"{variant.value:>10} {extra}: kappa={r.kappa:.4f} nu={r.nu:.3g} residual={r.residual_bound:.3g}")
    errs = []
    for s in range(seeds):
        cfg = FederationConfig(Algorithm.FEDGRADMP, 3, 2, LocalConfig(K=K, tau=1), weights=w, seed=s)
        run = federate(cfg, objs, keep_iterates=True)
        errs.append([1.0] + [float(np.sum((x - x_star) ** 2)) for x in run.iterates])
    print("mean squared error per round:", " ".join(f"{e:.3g}" for e in np.mean(errs, axis=0)))


if __name__ == "__main__":
    main()
