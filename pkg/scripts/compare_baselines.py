"""FedGradMP against FedIterHT and FedAvg on the noisy comparison setup, with a step-size grid.

Prints the median round-30 relative error over seeds for every (algorithm, step size).
"""
import argparse

import numpy as np

from fedgradmp import Algorithm, FederationConfig, LocalConfig, LossKind, Objective, SynthSpec, generate, run_federation

GRID = (0.01, 0.005, 0.001, 0.0005, 0.0001, 5e-5, 1e-5, 5e-6)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--rounds", type=int, default=30)
    ap.add_argument("--client-threshold", action="store_true",
                    help="FedIterHT thresholds after every client step instead of only at the server")
    args = ap.parse_args()
    loc = LocalConfig(K=3, tau=15)
    finals = {}
    for seed in range(args.seeds):
        ds, truth = generate(SynthSpec(N=50, per_client=100, n=1000, alpha=0.5, sparsity=15,
                                       variance_decay_exponent=0.2, noise_var=0.005, batch_size=50, seed=seed))
        objs = [Objective(LossKind.SQUARED, d) for d in ds]
        runs = [(Algorithm.FEDGRADMP, None)] + [(a, lr) for a in (Algorithm.FEDITERHT, Algorithm.FEDAVG) for lr in GRID]
        with np.errstate(all="ignore"):
            for alg, lr in runs:
                cfg = FederationConfig(alg, args.rounds, 50, loc, learning_rate=lr, seed=seed,
                                       client_threshold=args.client_threshold)
                finals.setdefault((alg.value, lr), []).append(run_federation(cfg, objs, truth)[-1].rel_error)
    for (alg, lr), v in finals.items():
        print(f"{alg:>10}  lr={'-' if lr is None else lr:<8}  median rel error {np.median(v):.4g}")


if __name__ == "__main__":
    main()
