import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fixed_forward, value_iteration
from stflood.core import ValidationError
from stflood.dqn.io import (
    CorruptModelError,
    ModelFileError,
    ModelVersionError,
    export_binary,
    import_binary,
    load_model,
    save_model,
)
from stflood.dqn.model import (
    AccumulatorOverflow,
    MlpModel,
    QuantizedModel,
    agreement_report,
    infer_fixed,
    infer_float,
    quantize,
    random_valid_inputs,
)
from stflood.dqn.train import (
    TrainConfig,
    Trainer,
    epsilon_at,
    grid_forward,
    snap_to_grid,
    td_loss_and_grads,
    train,
)
from toymdp import P, R, TOY_CONFIG, ToyMdp


def _random_model(seed):
    rng = np.random.default_rng(seed)
    return MlpModel(rng.normal(0, 0.3, (31, 30)), rng.normal(0, 0.1, 30), rng.normal(0, 0.3, (30, 3)), rng.normal(0, 0.1, 3))


# -- float inference ---------------------------------------------------------------


def test_infer_float_hand_computed():
    m = MlpModel.zeros()
    m.w1[0, 0] = 2.0
    m.w1[1, 0] = -1.0
    m.b1[1] = -0.5
    m.w2[0] = [1.0, 0.0, -1.0]
    m.w2[1] = [5.0, 5.0, 5.0]
    m.b2[:] = [0.1, 0.2, 0.3]
    x = np.zeros(31)
    x[0], x[1] = 0.5, 0.25
    # hidden 0 = relu(1 - 0.25) = 0.75, hidden 1 = relu(-0.5) = 0
    assert infer_float(m, x) == pytest.approx([0.85, 0.2, -0.45])


def test_infer_float_rejects_wrong_length():
    with pytest.raises(ValidationError):
        infer_float(MlpModel.zeros(), np.zeros(30))


def test_models_reject_bad_shapes():
    with pytest.raises(ValidationError):
        MlpModel(np.zeros((31, 30)), np.zeros(29), np.zeros((30, 3)), np.zeros(3))
    with pytest.raises(ValidationError):
        MlpModel(np.full((31, 30), np.nan), np.zeros(30), np.zeros((30, 3)), np.zeros(3))
    with pytest.raises(ValidationError):
        QuantizedModel(np.full((31, 30), 40000), np.zeros(30), np.zeros((30, 3)), np.zeros(3))


# -- quantization ------------------------------------------------------------------


def test_quantize_examples():
    m = MlpModel.zeros()
    m.w1[0, 0], m.w1[0, 1], m.w1[0, 2], m.w1[0, 3] = 0.123, -0.005, 0.005, 400.0
    q = quantize(m)
    assert q.w1[0, 0] == 12 and q.w1[0, 1] == -1 and q.w1[0, 2] == 1
    assert q.w1[0, 3] == 32767 and q.clamped == 1
    assert q.scale == 100


def test_payload_is_2106_bytes():
    q = quantize(_random_model(0))
    assert q.payload_bytes == 2106
    assert len(export_binary(q)) == 14 + 2106


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_quantization_error_at_most_half_quantum(seed):
    m = _random_model(seed)
    q = quantize(m)
    for k in ("w1", "b1", "w2", "b2"):
        assert np.all(np.abs(getattr(q, k) / 100 - getattr(m, k)) <= 0.005 + 1e-12)


def test_quantize_idempotent_through_dequantize():
    q = quantize(_random_model(1))
    again = quantize(q.dequantize())
    for k in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(q, k), getattr(again, k))


# -- fixed-point inference ------------------------------------------------------------


def test_infer_fixed_hand_computed():
    w1 = np.zeros((31, 30), int)
    b1 = np.zeros(30, int)
    w2 = np.zeros((30, 3), int)
    b2 = np.array([1, 2, 3])
    w1[0, 0] = 150  # 1.5
    w2[0] = [100, -50, 0]
    q = QuantizedModel(w1, b1, w2, b2)
    x = np.zeros(31)
    x[0] = 0.333  # quantizes to 33
    # acc1 = 33*150 = 4950 -> 50 ; acc2 = 50*100 + 100 = 5100 -> 51, -2500 + 200 -> -23, 300 -> 3
    assert infer_fixed(q, x).tolist() == [51, -23, 3]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_infer_fixed_matches_integer_reference(seed):
    q = quantize(_random_model(seed))
    x = random_valid_inputs(np.random.default_rng(seed), 1)[0]
    assert infer_fixed(q, x).tolist() == fixed_forward(q.w1, q.b1, q.w2, q.b2, x)


def test_infer_fixed_batch_equals_rows():
    q = quantize(_random_model(3))
    x = random_valid_inputs(np.random.default_rng(3), 20)
    batch = infer_fixed(q, x)
    for i in range(20):
        assert np.array_equal(batch[i], infer_fixed(q, x[i]))


def test_accumulator_overflow_raises():
    w1 = np.full((31, 30), 32767)
    q = QuantizedModel(w1, np.zeros(30), np.full((30, 3), 32767), np.zeros(3))
    with pytest.raises(AccumulatorOverflow):
        infer_fixed(q, np.ones(31))


def test_agreement_on_random_model_fixture():
    m = _random_model(7)
    rep = agreement_report(m, quantize(m), 100_000, 0)
    assert rep["argmax_agreement"] >= 0.99
    assert rep["payload_bytes"] == 2106
    assert rep["max_abs_error"] >= rep["mean_abs_error"] > 0


def test_random_valid_inputs_are_valid():
    x = random_valid_inputs(np.random.default_rng(0), 1000)
    assert x.shape == (1000, 31)
    assert np.all(np.abs(x) <= 1)
    assert np.all(x[:, 20:29].sum(axis=1) == 1)
    assert set(np.unique(x[:, 29:])) == {-1.0, 1.0}


# -- model files ---------------------------------------------------------------------


@pytest.mark.parametrize("suffix", [".json", ".bin"])
def test_quantized_round_trip(tmp_path, suffix):
    q = quantize(_random_model(4))
    save_model(q, tmp_path / f"m{suffix}")
    back = load_model(tmp_path / f"m{suffix}")
    for k in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(q, k), getattr(back, k))
    assert back.scale == 100


def test_float_round_trip_bit_exact(tmp_path):
    m = _random_model(5)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    for k in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(m, k), getattr(back, k))


def test_corrupt_and_truncated_files(tmp_path):
    blob = export_binary(quantize(_random_model(6)))
    with pytest.raises(CorruptModelError):
        import_binary(blob[:-3])
    with pytest.raises(CorruptModelError):
        import_binary(blob[:5])
    with pytest.raises(CorruptModelError):
        import_binary(b"XXXX" + blob[4:])
    (tmp_path / "bad.json").write_text("{\"format\": \"stflood-dqn\"")
    with pytest.raises(CorruptModelError):
        load_model(tmp_path / "bad.json")
    with pytest.raises(ModelFileError):
        save_model(MlpModel.zeros(), tmp_path / "f.bin")


def test_version_mismatch(tmp_path):
    blob = bytearray(export_binary(quantize(_random_model(6))))
    blob[4] = 9
    with pytest.raises(ModelVersionError):
        import_binary(bytes(blob))
    path = tmp_path / "m.json"
    save_model(_random_model(6), path)
    d = json.loads(path.read_text())
    d["version"] = 2
    path.write_text(json.dumps(d))
    with pytest.raises(ModelVersionError):
        load_model(path)


def test_missing_model_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "nope.json")


# -- training ---------------------------------------------------------------------------


def test_epsilon_schedule():
    assert epsilon_at(0) == 1.0
    assert epsilon_at(50_000) == pytest.approx(0.505)
    assert epsilon_at(100_000) == pytest.approx(0.01)
    assert epsilon_at(150_000) == pytest.approx(0.01)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(gamma=1.0)
    with pytest.raises(ValidationError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=64, replay_capacity=32)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    m = _random_model(8)
    s = rng.uniform(-1, 1, (16, 31))
    a = rng.integers(0, 3, 16)
    y = rng.normal(0, 1, 16)
    _, grads = td_loss_and_grads(m, s, a, y)
    h = 1e-6
    for k in ("w1", "b1", "w2", "b2"):
        arr = getattr(m, k)
        for idx in [tuple(rng.integers(0, d) for d in arr.shape) for _ in range(8)]:
            old = arr[idx]
            arr[idx] = old + h
            lp = td_loss_and_grads(m, s, a, y)[0]
            arr[idx] = old - h
            lm = td_loss_and_grads(m, s, a, y)[0]
            arr[idx] = old
            assert grads[k][idx] == pytest.approx((lp - lm) / (2 * h), abs=1e-4)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_toy_mdp_converges_to_value_iteration(seed):
    q_star = value_iteration(P, R, 0.7)
    m = train(ToyMdp(), TOY_CONFIG, seed)
    q = m.forward(np.eye(2))[0]
    assert np.abs(q - q_star).max() < 1e-2


def test_training_reproducible_and_resumable(tmp_path):
    cfg = TrainConfig(iterations=3000, epsilon_decay_steps=1000, learn_start=100, target_sync_interval=100,
                      replay_capacity=1000)
    a = train(ToyMdp(), cfg, 11)
    b = train(ToyMdp(), cfg, 11)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    t = Trainer(ToyMdp(), cfg, 11)
    t.run(1234)
    t.checkpoint(tmp_path / "ck.pkl")
    resumed = Trainer.resume(tmp_path / "ck.pkl").run()
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), resumed.params()))
    curve = t.log.curve_csv().splitlines()
    assert curve[0] == "step,epsilon,loss,mean_return"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_grid_forward_reproduces_fixed_point(seed):
    m = _random_model(seed)
    x = random_valid_inputs(np.random.default_rng(seed), 50)
    q = grid_forward(m, x)[0]
    fixed = infer_fixed(quantize(m), x)
    # identical integer hidden layer; only the final division is left unrounded
    assert np.all(np.abs(q * 100 - fixed) <= 0.5 + 1e-9)


def test_snap_to_grid_is_a_quantization_fixed_point():
    g = snap_to_grid(_random_model(9))
    q = quantize(g)
    for k in ("w1", "b1", "w2", "b2"):
        assert np.allclose(getattr(q, k) / 100, getattr(g, k), atol=1e-12)


def test_quant_aware_phase_returns_grid_model():
    cfg = TrainConfig(iterations=2000, epsilon_decay_steps=1000, learn_start=100, target_sync_interval=100,
                      replay_capacity=1000, quant_aware_fraction=0.25)
    m = train(ToyMdp(), cfg, 3)
    for p in m.params():
        assert np.allclose(np.round(p * 100), p * 100, atol=1e-9)
    with pytest.raises(ValidationError):
        TrainConfig(quant_aware_fraction=1.5)


def test_trainer_needs_environment():
    with pytest.raises(ValidationError):
        Trainer(None)
