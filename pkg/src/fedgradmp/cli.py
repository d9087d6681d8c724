"""Experiment runner: INI config -> synthetic federation -> runs -> CSV/JSON outputs.

Usage::

    python -m fedgradmp run experiment.ini [--force] [--threads N]
    python -m fedgradmp validate experiment.ini
    python -m fedgradmp print-defaults
"""
import argparse
import configparser
import csv
import dataclasses
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from typing import List, Optional, Tuple

import numpy as np

from .dictionary import load_dictionary, make_gaussian_dictionary, make_standard_basis
from .errors import CapabilityError, ConditioningError, ConfigError
from .federation import Algorithm, FederationConfig, federate, write_csv
from .local_engine import LocalConfig, SolverKind, Subproblem
from .objectives import LossKind, Objective
from .synthdata import SynthSpec, generate
from .theory import THETA_DEFAULT, Variant, best_theta, measure_client_constants, rate_prediction, rates_report

OUTPUT_ENV = "FEDGRADMP_OUTPUT_DIR"
SWEEPABLE = ("K", "L", "alpha", "learning_rate")


@dataclass
class SynthSection:
    N: int = 10
    per_client: int = 100
    n: int = 200
    alpha: float = 0.5
    sparsity: int = 5
    variance_decay_exponent: float = 1.1
    noise_var: float = 0.0
    batch_size: int = 0
    dictionary: str = "standard"
    dictionary_seed: int = 0


@dataclass
class LocalSection:
    K: int = 3
    tau: int = 5
    eta1: float = 1.0
    eta2: float = 1.0
    solver: str = "exact"
    delta: float = 0.0
    ball_radius: float = 0.0
    carry_support: str = "global_support"


@dataclass
class FederationSection:
    algorithm: str = "fedgradmp"
    T: int = 20
    L: int = 0
    weights: str = "uniform"
    eta3: float = 1.0
    learning_rate: float = 0.0
    client_threshold: bool = True


@dataclass
class TheorySection:
    theta: float = THETA_DEFAULT
    optimize_theta: bool = False
    mode: str = "exhaustive"
    probe_points: int = 10


@dataclass
class ExperimentSection:
    output_dir: str = "results"
    repeat_seeds: List[int] = field(default_factory=lambda: [0])
    sweep: str = ""
    emit_theory: bool = False
    threshold: float = 1e-4
    threads: int = 1
    wall_clock: bool = False


@dataclass
class ExperimentConfig:
    synth: SynthSection = field(default_factory=SynthSection)
    local: LocalSection = field(default_factory=LocalSection)
    federation: FederationSection = field(default_factory=FederationSection)
    theory: TheorySection = field(default_factory=TheorySection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    @property
    def sweep(self) -> Optional[Tuple[str, list]]:
        return parse_sweep(self.experiment.sweep)


SECTIONS = [f.name for f in fields(ExperimentConfig)]

DOCS = {
    "synth.N": "number of clients",
    "synth.per_client": "data points per client",
    "synth.n": "model dimension",
    "synth.alpha": "variance of the random per-client mean shift",
    "synth.sparsity": "sparsity of the planted ground truth",
    "synth.variance_decay_exponent": "client i draws entries with variance 1/i**exponent",
    "synth.noise_var": "variance of additive target noise",
    "synth.batch_size": "mini-batch size; 0 means full batch",
    "synth.dictionary": "standard | gaussian:<d> | path to an atom matrix file",
    "local.K": "local iterations per round",
    "local.tau": "sparsity level of the iterates",
    "local.solver": "exact | gd | newton",
    "local.delta": "subproblem accuracy for gd/newton",
    "local.ball_radius": "l2-ball radius; 0 disables the projection",
    "local.carry_support": "global_support | empty",
    "federation.algorithm": "fedgradmp | inexact_fedgradmp | fedavg | fediterht",
    "federation.T": "communication rounds",
    "federation.L": "cohort size; 0 means all clients",
    "federation.weights": "uniform | size | comma-separated list",
    "federation.learning_rate": "client step size (baselines only)",
    "federation.client_threshold": "fediterht: threshold after every client step",
    "theory.mode": "exhaustive | sampled:<trials>",
    "theory.optimize_theta": "pick theta from the 2**k grid minimizing the residual bound",
    "experiment.output_dir": f"output directory (overridden by ${OUTPUT_ENV})",
    "experiment.repeat_seeds": "comma-separated seeds",
    "experiment.sweep": "<param>: v1, v2, ... with param in K, L, alpha, learning_rate",
    "experiment.threshold": "relative error for rounds-to-threshold",
    "experiment.wall_clock": "record round timings in wall_ms (otherwise 0, keeping reruns byte-identical)",
}


def parse_sweep(text):
    text = text.strip()
    if not text:
        return None
    if ":" not in text:
        raise ConfigError("experiment.sweep: expected '<param>: v1, v2, ...'")
    name, values = text.split(":", 1)
    name = name.strip()
    if name not in SWEEPABLE:
        raise ConfigError(f"experiment.sweep: parameter must be one of {SWEEPABLE}, got {name!r}")
    conv = int if name in ("K", "L") else float
    try:
        vals = [conv(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"experiment.sweep: {exc}") from None
    if not vals:
        raise ConfigError("experiment.sweep: value list is empty")
    return name, vals


def _convert(key, typ, raw):
    raw = raw.strip()
    try:
        if typ is bool or typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
        if typ in (List[int], "List[int]"):
            return [int(v) for v in raw.split(",") if v.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config_text(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    cfg = ExperimentConfig()
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{sec}: unknown section (expected one of {SECTIONS})")
        obj = getattr(cfg, sec)
        known = {f.name: f.type for f in fields(obj)}
        for key, raw in cp.items(sec):
            if key not in known:
                raise ConfigError(f"{sec}.{key}: unknown key")
            setattr(obj, key, _convert(f"{sec}.{key}", known[key], raw))
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(cfg, comments=False):
    out = io.StringIO()
    for sec in SECTIONS:
        out.write(f"[{sec}]\n")
        for f in fields(getattr(cfg, sec)):
            doc = DOCS.get(f"{sec}.{f.name}")
            if comments and doc:
                out.write(f"# {doc}\n")
            out.write(f"{f.name} = {_fmt_value(getattr(getattr(cfg, sec), f.name))}\n")
        out.write("\n")
    return out.getvalue()


def _dictionary(s):
    spec = s.dictionary.strip()
    if spec == "standard":
        return make_standard_basis(s.n)
    if spec.startswith("gaussian:"):
        try:
            d = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError("synth.dictionary: expected gaussian:<d>") from None
        return make_gaussian_dictionary(s.n, d, rng_seed=s.dictionary_seed)
    return load_dictionary(spec)


def _apply_sweep(cfg, name, value):
    c = dataclasses.replace(
        cfg,
        synth=dataclasses.replace(cfg.synth),
        local=dataclasses.replace(cfg.local),
        federation=dataclasses.replace(cfg.federation),
    )
    if name == "K":
        c.local.K = int(value)
    elif name == "L":
        c.federation.L = int(value)
    elif name == "alpha":
        c.synth.alpha = float(value)
    elif name == "learning_rate":
        c.federation.learning_rate = float(value)
    return c


def _subproblem(loc):
    kind = {"exact": SolverKind.EXACT, "gd": SolverKind.GRADIENT_DESCENT, "newton": SolverKind.NEWTON}.get(loc.solver)
    if kind is None:
        raise ConfigError(f"local.solver: expected exact, gd or newton, got {loc.solver!r}")
    return Subproblem(kind, loc.delta if kind is not SolverKind.EXACT else None)


def build(cfg, seed, dictionary=None):
    """Materialize ``(FederationConfig, objectives, ground_truth, dictionary)`` for one seed."""
    s, loc, fed = cfg.synth, cfg.local, cfg.federation
    D = dictionary if dictionary is not None else _dictionary(s)
    try:
        spec = SynthSpec(N=s.N, per_client=s.per_client, n=s.n, alpha=s.alpha, sparsity=s.sparsity,
                         variance_decay_exponent=s.variance_decay_exponent, noise_var=s.noise_var,
                         batch_size=s.batch_size or None, dictionary=D, seed=seed)
        local = LocalConfig(K=loc.K, tau=loc.tau, eta1=loc.eta1, eta2=loc.eta2, subproblem=_subproblem(loc),
                            ball_radius=loc.ball_radius or None, carry_support=loc.carry_support)
    except ValueError as exc:
        raise ConfigError(f"synth/local: {exc}") from None
    try:
        alg = Algorithm(fed.algorithm)
    except ValueError:
        raise ConfigError(f"federation.algorithm: unknown algorithm {fed.algorithm!r}") from None
    if fed.weights == "uniform":
        w = None
    elif fed.weights == "size":
        w = np.full(s.N, 1.0 / s.N)  # equal client sizes in the synthetic model
    else:
        try:
            w = np.array([float(v) for v in fed.weights.split(",")])
        except ValueError:
            raise ConfigError("federation.weights: expected uniform, size or a number list") from None
    fcfg = FederationConfig(alg, T=fed.T, N=s.N, local=local, L=fed.L or None, weights=w, eta3=fed.eta3,
                            learning_rate=fed.learning_rate if alg.is_baseline else None, seed=seed,
                            client_threshold=fed.client_threshold)
    if loc.tau > D.d:
        raise ConfigError(f"local.tau: must not exceed the dictionary size {D.d}")
    datasets, truth = generate(spec)
    objectives = [Objective(LossKind.SQUARED, ds) for ds in datasets]
    return fcfg, objectives, truth, D


def validate(cfg):
    """Check every field without generating data."""
    e = cfg.experiment
    if not e.repeat_seeds:
        raise ConfigError("experiment.repeat_seeds: at least one seed is required")
    if e.threads < 1:
        raise ConfigError("experiment.threads: must be >= 1")
    if not e.threshold > 0:
        raise ConfigError("experiment.threshold: must be positive")
    sweep = cfg.sweep
    for value in (sweep[1] if sweep else [None]):
        c = _apply_sweep(cfg, sweep[0], value) if sweep else cfg
        s = c.synth
        D_d = s.n
        if s.dictionary.startswith("gaussian:"):
            try:
                D_d = int(s.dictionary.split(":", 1)[1])
            except ValueError:
                raise ConfigError("synth.dictionary: expected gaussian:<d>") from None
        elif s.dictionary != "standard" and not os.path.exists(s.dictionary):
            raise ConfigError(f"synth.dictionary: file {s.dictionary!r} not found")
        try:
            SynthSpec(N=s.N, per_client=s.per_client, n=s.n, alpha=s.alpha,
                      sparsity=min(s.sparsity, D_d) if s.sparsity > 0 else 0,
                      variance_decay_exponent=s.variance_decay_exponent, noise_var=s.noise_var,
                      batch_size=s.batch_size or None)
            if s.sparsity > D_d:
                raise ConfigError(f"synth.sparsity: must not exceed the dictionary size {D_d}")
            LocalConfig(K=c.local.K, tau=c.local.tau, eta1=c.local.eta1, eta2=c.local.eta2,
                        subproblem=_subproblem(c.local), ball_radius=c.local.ball_radius or None,
                        carry_support=c.local.carry_support)
            alg = Algorithm(c.federation.algorithm)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"invalid value: {exc}") from None
        if c.local.tau > D_d:
            raise ConfigError(f"local.tau: must not exceed the dictionary size {D_d}")
        if not 0 <= c.federation.L <= s.N:
            raise ConfigError(f"federation.L: must be in [0, {s.N}]")
        if c.federation.T < 0:
            raise ConfigError("federation.T: must be >= 0")
        if alg.is_baseline and c.federation.learning_rate < 0:
            raise ConfigError("federation.learning_rate: must be >= 0")
        m = c.theory.mode
        if m != "exhaustive" and not (m.startswith("sampled:") and m.split(":", 1)[1].strip().isdigit()):
            raise ConfigError("theory.mode: expected exhaustive or sampled:<trials>")
    return cfg


def _theory_mode(text):
    if text == "exhaustive":
        return "exhaustive"
    return ("sampled", int(text.split(":", 1)[1]))


def rounds_to_threshold(records, threshold):
    for r in records:
        if r.rel_error <= threshold:
            return r.round
    return None


def run_file_name(sweep, value, seed):
    if sweep is None:
        return f"run_seed={seed}.csv"
    return f"run_{sweep}={_fmt_value(value)}_seed={seed}.csv"


def _theory_entry(cfg, fcfg, objectives, truth, D):
    th = cfg.theory
    try:
        consts = [measure_client_constants(o, fcfg.tau, D, truth.signal, _theory_mode(th.mode), th.probe_points)
                  for o in objectives]
        kwargs = dict(eta1=fcfg.local.eta1, eta2=fcfg.local.eta2, eta3=fcfg.eta3)
        if fcfg.L < fcfg.N:
            kwargs.update(variant=Variant.PARTIAL, L=fcfg.L)
        elif fcfg.local.subproblem.kind is not SolverKind.EXACT:
            kwargs.update(variant=Variant.INEXACT, delta=fcfg.local.subproblem.delta)
        if th.optimize_theta:
            rate = best_theta(consts, fcfg.weights, fcfg.local.K, **kwargs)
        else:
            rate = rate_prediction(consts, fcfg.weights, fcfg.local.K, theta=th.theta, **kwargs)
        rep = rates_report(rate)
        rep["constants_exact"] = all(c.exact for c in consts)
        return rep
    except (ConditioningError, CapabilityError) as exc:
        return {"error": str(exc)}


def _clean(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, list):
        return [_clean(v) for v in o]
    return o


def run_experiment(cfg, force=False, threads=None, log=print):
    out_dir = os.environ.get(OUTPUT_ENV) or cfg.experiment.output_dir
    threads = threads or cfg.experiment.threads
    sweep = cfg.sweep
    name = sweep[0] if sweep else None
    values = sweep[1] if sweep else [None]
    seeds = cfg.experiment.repeat_seeds
    planned = [os.path.join(out_dir, run_file_name(name, v, s)) for v in values for s in seeds]
    planned.append(os.path.join(out_dir, "summary.csv"))
    if cfg.experiment.emit_theory:
        planned.append(os.path.join(out_dir, "rates.json"))
    existing = [p for p in planned if os.path.exists(p)]
    if existing and not force:
        raise FileExistsError(f"{existing[0]} exists; pass --force to overwrite")
    os.makedirs(out_dir, exist_ok=True)
    summary, rates = [], []
    for v in values:
        c = _apply_sweep(cfg, name, v) if sweep else cfg
        D = _dictionary(c.synth)
        for s in seeds:
            fcfg, objectives, truth, _ = build(c, s, D)
            run = federate(fcfg, objectives, truth, D, threads=threads)
            path = os.path.join(out_dir, run_file_name(name, v, s))
            write_csv(path, run.records, wall_clock=cfg.experiment.wall_clock)
            rt = rounds_to_threshold(run.records, cfg.experiment.threshold)
            final = run.records[-1].rel_error if run.records else float("nan")
            summary.append((name or "", "" if v is None else _fmt_value(v), s, "" if rt is None else rt, final))
            log(f"{os.path.basename(path)}: rounds_to_threshold={rt} final_rel_error={final:.3e}")
            if cfg.experiment.emit_theory:
                entry = _theory_entry(c, fcfg, objectives, truth, D)
                entry.update(sweep=name, value=v, seed=s)
                rates.append(entry)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "value", "seed", "rounds_to_threshold", "final_rel_error"])
        for row in summary:
            w.writerow(list(row[:4]) + [format(row[4], ".17g")])
    if cfg.experiment.emit_theory:
        with open(os.path.join(out_dir, "rates.json"), "w") as fh:
            json.dump(_clean(rates), fh, indent=1)
    return summary


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fedgradmp", description="Federated gradient matching pursuit experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--force", action="store_true", help="overwrite existing outputs")
    r.add_argument("--threads", type=int, default=None, help="client threads (speed only)")
    v = sub.add_parser("validate", help="parse and validate a config")
    v.add_argument("config")
    sub.add_parser("print-defaults", help="print the default config with documentation")
    args = ap.parse_args(argv)
    try:
        if args.command == "print-defaults":
            sys.stdout.write(serialize(ExperimentConfig(), comments=True))
            return 0
        cfg = load_config(args.config)
        if args.command == "validate":
            print(f"{args.config}: ok")
            return 0
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        run_experiment(cfg, force=args.force, threads=args.threads)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
