import numpy as np
import pytest

from neutralopt.embedding import LayoutKind, make_register
from neutralopt.emulator import PARAM_BOUNDS, Pulse
from neutralopt.gbr import GBRParams, fit_gbr
from neutralopt.graphcore import gen_erdos_renyi
from neutralopt.pulsepredictor import (
    ChainedModel,
    Dataset,
    TrainingInstance,
    UntrainedModel,
    approximation_ratio,
    build_dataset,
    fit_chain,
    fit_chain_arrays,
    predict_pulse,
    random_registers,
    solve_with_model,
)
from neutralopt.pulseshaper import OptBudget

SMALL = OptBudget(3, 5, shots_per_eval=50)
HYPER = GBRParams(n_stages=20)


@pytest.fixture(scope="module")
def tiny_dataset():
    graphs = [gen_erdos_renyi(n, 0.5, s) for s, n in enumerate([3, 4, 4, 5])]
    return build_dataset(graphs, ["spring", "random"], "maxcut", SMALL, seed=0, selection_shots=100)


def test_dataset_shapes_and_ratios(tiny_dataset):
    d = tiny_dataset
    assert len(d) > 0
    assert d.X.shape == (len(d), 13) and d.Y.shape == (len(d), 9)
    for inst in d.instances:
        assert 0 <= inst.ratio <= 1
        assert Pulse.from_vector(inst.targets).is_valid()


def test_dataset_deterministic_and_csv_round_trip(tiny_dataset, tmp_path):
    graphs = [gen_erdos_renyi(n, 0.5, s) for s, n in enumerate([3, 4, 4, 5])]
    again = build_dataset(graphs, ["spring", "random"], "maxcut", SMALL, seed=0, selection_shots=100)
    assert again.to_csv() == tiny_dataset.to_csv()
    path = tmp_path / "d.csv"
    tiny_dataset.save(path)
    back = Dataset.load(path)
    assert back.to_csv() == tiny_dataset.to_csv()
    np.testing.assert_array_equal(back.X, tiny_dataset.X)


def test_dataset_rejects_bad_header():
    with pytest.raises(ValueError):
        Dataset.from_csv("a,b\n1,2\n")


def test_instance_validation():
    with pytest.raises(ValueError):
        TrainingInstance((1.0,) * 12, (0.0,) * 9, "g", "spring", "maxcut", 1.0)
    with pytest.raises(ValueError):
        TrainingInstance((1.0,) * 13, (np.nan,) * 9, "g", "spring", "maxcut", 1.0)


def test_approximation_ratio():
    assert approximation_ratio(-3, -4) == 0.75
    assert approximation_ratio(0, 0) == 1.0


def test_length_one_chain_equals_plain_gbr():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    chain = fit_chain_arrays(X, y, hyper=HYPER)
    plain = fit_gbr(X, y, HYPER)
    np.testing.assert_array_equal(chain.predict(X)[:, 0], plain.predict(X))


def test_chain_uses_predecessor():
    # y2 equals y1 exactly, y1 depends on a single feature
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (200, 13))
    y1 = np.sin(3 * X[:, 0])
    Y = np.column_stack([y1, y1])
    chain = fit_chain_arrays(X, Y, order=(0, 1), hyper=GBRParams(n_stages=60))
    assert chain.input_dims() == [13, 14]
    # the second ensemble should split on the appended predecessor column
    used = {int(f) for tree in chain.ensembles[1].stages for f in tree.feature if f >= 0}
    assert 13 in used
    pred = chain.predict(X)
    np.testing.assert_allclose(pred[:, 1], pred[:, 0], atol=0.1)


def test_nine_target_dims(tiny_dataset):
    m = fit_chain(tiny_dataset, hyper=HYPER)
    assert m.input_dims() == list(range(13, 22))


def test_order_validation():
    with pytest.raises(ValueError):
        fit_chain_arrays(np.zeros((3, 2)), np.zeros((3, 2)), order=(0, 0))
    with pytest.raises(ValueError):
        fit_chain_arrays(np.zeros((0, 2)), np.zeros((0, 2)))


def test_untrained_model_raises():
    with pytest.raises(UntrainedModel):
        ChainedModel((), []).predict(np.zeros((1, 13)))


def test_model_round_trip(tiny_dataset, tmp_path):
    m = fit_chain(tiny_dataset, hyper=HYPER)
    path = tmp_path / "m.json"
    m.save(path)
    back = ChainedModel.load(path)
    np.testing.assert_allclose(back.predict(tiny_dataset.X), m.predict(tiny_dataset.X), atol=1e-12)


def test_in_sample_replay(tiny_dataset):
    # a deep, fast-learning chain reproduces its own training targets
    m = fit_chain(tiny_dataset, hyper=GBRParams(n_stages=300, learning_rate=0.5, max_depth=6))
    np.testing.assert_allclose(m.predict(tiny_dataset.X), tiny_dataset.Y, atol=1e-3)


def test_predicted_pulse_is_clamped():
    X = np.zeros((4, 13))
    Y = np.tile([99, -5, 3, 0, 0, 0, 0, 0, 10], (4, 1)).astype(float)
    Y[:, 0] += np.arange(4)
    m = fit_chain_arrays(X, Y, hyper=HYPER)
    g = gen_erdos_renyi(4, 0.5, 0)
    p = predict_pulse(m, g, make_register(g, "spring"))
    assert p.is_valid()
    assert p.duration == PARAM_BOUNDS[8][1]


def test_random_registers_feasible_and_seeded():
    g = gen_erdos_renyi(7, 0.5, 3)
    a = random_registers(g, 10, seed=4)
    b = random_registers(g, 10, seed=4)
    assert len(a) == 10
    assert all(r.satisfies() for r in a)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


def test_solve_with_model(tiny_dataset):
    m = fit_chain(tiny_dataset, hyper=HYPER)
    g = gen_erdos_renyi(5, 0.5, 9)
    sel = solve_with_model(m, g, "maxcut", n_registers=3, shots=200, seed=0)
    assert 0 <= sel.index < 3
    assert len(sel.bitstring) == 5


def test_zero_learning_rate_chain_predicts_means():
    rng = np.random.default_rng(5)
    X, Y = rng.normal(size=(30, 13)), rng.normal(size=(30, 9))
    m = fit_chain_arrays(X, Y, order=(8, 0, 1, 2, 3, 4, 5, 6, 7), hyper=GBRParams(n_stages=5, learning_rate=0.0))
    np.testing.assert_allclose(m.predict(rng.normal(size=(4, 13))), np.tile(Y.mean(axis=0), (4, 1)), atol=1e-12)
