import numpy as np
import pytest

from fedgradmp.dictionary import make_gaussian_dictionary
from fedgradmp.errors import ContractError
from fedgradmp.objectives import ClientDataset, LossKind, Objective
from fedgradmp.synthdata import (
    SynthSpec,
    client_mean_spread,
    dump,
    generate,
    generate_with_means,
    heterogeneity_report,
    load,
)


def test_shapes_and_unit_truth():
    ds, truth = generate(SynthSpec(3, 20, 15, 0.5, 4, seed=1))
    assert len(ds) == 3 and ds[0].data.shape == (20, 15)
    assert len(truth.support) == 4
    assert abs(np.linalg.norm(truth.coefficients) - 1.0) <= 1e-12


def test_noiseless_gradients_vanish_at_truth():
    ds, truth = generate(SynthSpec(4, 30, 12, 2.5, 3, seed=2))
    objs = [Objective(LossKind.SQUARED, d) for d in ds]
    zeta, norms = heterogeneity_report(objs, truth.signal, np.full(4, 0.25))
    assert zeta <= 1e-18


def test_heterogeneity_single_client_and_hand_built():
    a = ClientDataset(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1.0, 0.0]), 2)
    b = ClientDataset(np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([0.0, 1.0]), 2)
    oa, ob = Objective(LossKind.SQUARED, a), Objective(LossKind.SQUARED, b)
    x = np.array([1.0, 1.0])
    # client a residuals (0, 2): grad = (0, 4)/2 = (0, 2); client b residuals (2, 0): grad = (2, 2)/2 = (1, 1)
    zeta, norms = heterogeneity_report([oa, ob], x, [0.5, 0.5])
    assert zeta == pytest.approx(0.5 * 4 + 0.5 * 2)
    single, _ = heterogeneity_report([oa], x, [1.0])
    assert single == pytest.approx(4.0)


def test_alpha_zero_means_are_zero():
    fed = generate_with_means(SynthSpec(5, 10, 6, 0.0, 2))
    assert np.all(fed.means == 0.0)


def test_heterogeneity_grows_with_alpha():
    spreads = []
    for alpha in (0.2, 0.5, 2.5):
        spreads.append(np.mean([client_mean_spread(generate(SynthSpec(20, 20, 10, alpha, 2, seed=s))[0])
                                for s in range(20)]))
    assert spreads[0] < spreads[1] < spreads[2]


def test_per_client_variance_decay():
    decay = 1.1
    ds, _ = generate(SynthSpec(4, 400, 300, 1.0, 2, variance_decay_exponent=decay, seed=3))
    for i, d in enumerate(ds, start=1):
        v = d.data.var(ddof=1)
        target = i ** -decay
        se = target * np.sqrt(2.0 / (d.data.size - 1))
        assert abs(v - target) <= 3 * se


def test_noise_has_requested_variance():
    ds, truth = generate(SynthSpec(1, 20000, 5, 0.0, 2, noise_var=0.25, seed=4))
    resid = ds[0].targets - ds[0].data @ truth.signal
    assert resid.var() == pytest.approx(0.25, rel=0.05)


def test_determinism():
    a, ta = generate(SynthSpec(3, 10, 8, 1.0, 2, seed=9))
    b, tb = generate(SynthSpec(3, 10, 8, 1.0, 2, seed=9))
    assert all(np.array_equal(x.data, y.data) and np.array_equal(x.targets, y.targets) for x, y in zip(a, b))
    assert np.array_equal(ta.signal, tb.signal)


def test_dictionary_truth_is_sparse_in_atoms():
    D = make_gaussian_dictionary(10, 14, rng_seed=0)
    ds, truth = generate(SynthSpec(2, 10, 10, 0.5, 3, dictionary=D))
    assert np.allclose(truth.signal, D.atoms[:, truth.support] @ truth.coefficients)


def test_spec_validation():
    with pytest.raises(ContractError):
        SynthSpec(2, 10, 5, -1.0, 2)
    with pytest.raises(ContractError):
        SynthSpec(2, 10, 5, 1.0, 6)
    with pytest.raises(ContractError):
        SynthSpec(2, 10, 5, 1.0, 2, batch_size=11)


def test_dump_load_round_trip(tmp_path):
    spec = SynthSpec(2, 6, 5, 0.5, 2, batch_size=3, seed=5)
    ds, truth = generate(spec)
    dump(tmp_path, ds, truth, spec.dict)
    ds2, truth2, D2 = load(tmp_path)
    assert all(np.array_equal(a.data, b.data) and a.batch_size == b.batch_size for a, b in zip(ds, ds2))
    assert np.array_equal(truth.signal, truth2.signal)
    assert D2.kind is spec.dict.kind
