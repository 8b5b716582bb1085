import math

import numpy as np
import pytest

from dcan import checkpoint as ckpt
from dcan.data import LabeledExample
from dcan.errors import CheckpointError, ShapeError
from dcan.model import ModelConfig, init_params, model_forward
from dcan.numcore import RngStream, Tensor
from dcan.training import AdamState, TrainConfig, adam_step, bce_loss, predict_scores, smooth_labels, train


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


class TestSmoothing:
    def test_identity_at_zero(self):
        y = np.array([1.0, 0.0, 1.0])
        np.testing.assert_array_equal(smooth_labels(y, 0.0), y)

    def test_worked_values(self):
        y = np.zeros(50)
        y[0] = 1
        s = smooth_labels(y, 0.1)
        assert s[0] == pytest.approx(0.902, abs=1e-15)
        assert s[1] == pytest.approx(0.002, abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            smooth_labels([1.0], 1.5)


class TestBCE:
    def test_half_gives_m_ln2(self):
        m = 7
        loss = bce_loss(np.ones(m), np.zeros(m)).item()
        assert abs(loss - m * math.log(2)) < 1e-12

    def test_single_label(self):
        assert bce_loss(np.array([1.0]), logit([0.5])).item() == pytest.approx(0.6931471805599453)

    def test_minimum_is_entropy(self, rng):
        y = rng.uniform(0.05, 0.95, size=6)
        entropy = -(y * np.log(y) + (1 - y) * np.log(1 - y)).sum()
        assert bce_loss(y, logit(y)).item() == pytest.approx(entropy, abs=1e-12)
        assert bce_loss(y, logit(np.clip(y + 0.03, 0, 0.99))).item() > entropy

    def test_accepts_tensor(self):
        assert isinstance(bce_loss(np.ones(2), Tensor(np.zeros(2))), Tensor)


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = {"w": np.array([1.0, -2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState())
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])

    def test_first_step_is_lr_times_sign(self):
        p = {"w": np.array([0.5]), "u": np.array([0.0, 0.0])}
        adam_step(p, {"w": np.array([2.0]), "u": np.array([-3.0, 1e-3])}, AdamState(lr=0.001))
        assert p["w"][0] == pytest.approx(0.5 - 0.001, abs=1e-10)
        assert p["u"][0] > 0 and p["u"][1] < 0

    def test_missing_gradient_is_zero(self):
        p = {"w": np.array([1.0])}
        state = AdamState()
        adam_step(p, {}, state)
        assert p["w"][0] == 1.0 and state.t == 1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


def _toy_data(n, rng, length=(6, 14)):
    """Label 0 fires when token 2 occurs, label 1 when token 3 occurs."""
    out = []
    for i in range(n):
        ids = rng.integers(4, 10, size=int(rng.integers(*length)))
        y = np.zeros(2)
        for lab, tok in ((0, 2), (1, 3)):
            if rng.random() < 0.4:
                ids[rng.integers(0, len(ids))] = tok
                y[lab] = 1.0
        y[0] = float((ids == 2).any())
        y[1] = float((ids == 3).any())
        out.append(LabeledExample(ids, y, str(i)))
    return out


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    config = ModelConfig(vocab_size=10, num_labels=2, embed_dim=16, kernel_size=2, num_levels=2,
                         channels=(16, 16), projection_dim=2, dropout_rate=0.1, max_len=64)
    return config, _toy_data(48, rng), _toy_data(16, rng)


class TestTrain:
    def test_learns_toy_task(self, toy):
        config, tr, dv = toy
        tc = TrainConfig(epochs=15, batch_size=8, lr=0.02, patience=15, seed=1)
        result = train(init_params(config, RngStream(1)), config, tr, dv, tc)
        assert result.history[0]["epoch"] == 0 and result.history[0]["train_loss"] is None
        best = max(e["micro_f1"] for e in result.history)
        assert best >= 0.9

    def test_lr_zero_keeps_parameters(self, toy):
        config, tr, dv = toy
        p0 = init_params(config, RngStream(2))
        before = {n: t.data.copy() for n, t in p0.items()}
        result = train(p0, config, tr, dv, TrainConfig(epochs=2, batch_size=8, lr=0.0, seed=2))
        for n, t in result.params.items():
            np.testing.assert_array_equal(t.data, before[n])
        assert result.history[-1]["micro_f1"] == result.history[0]["micro_f1"]

    def test_deterministic(self, toy):
        config, tr, dv = toy
        tc = TrainConfig(epochs=2, batch_size=8, lr=0.01, seed=5)
        a = train(init_params(config, RngStream(5)), config, tr, dv, tc)
        b = train(init_params(config, RngStream(5)), config, tr, dv, tc)
        assert a.history == b.history
        for n in a.params:
            np.testing.assert_array_equal(a.params[n].data, b.params[n].data)

    def test_resume_matches_uninterrupted(self, toy):
        config, tr, dv = toy
        full = train(init_params(config, RngStream(3)), config, tr, dv,
                     TrainConfig(epochs=4, batch_size=8, lr=0.01, seed=3, patience=10))
        half = train(init_params(config, RngStream(3)), config, tr, dv,
                     TrainConfig(epochs=2, batch_size=8, lr=0.01, seed=3, patience=10))
        rest = train(half.params, config, tr, dv, TrainConfig(epochs=4, batch_size=8, lr=0.01, seed=3, patience=10),
                     state=half.state, start_epoch=half.epoch, history=half.history,
                     rng_states=half.rng_states, best_params=half.best_params)
        assert rest.history == full.history
        for n in full.params:
            np.testing.assert_array_equal(rest.params[n].data, full.params[n].data)

    def test_early_stopping(self, toy):
        config, tr, dv = toy
        result = train(init_params(config, RngStream(4)), config, tr, dv,
                       TrainConfig(epochs=10, batch_size=8, lr=0.0, patience=2, seed=4))
        assert result.epoch == 2 and result.best_epoch == 0

    def test_predict_order_independent_of_batching(self, toy):
        config, tr, _ = toy
        p = init_params(config, RngStream(6))
        a = predict_scores(p, config, tr, batch_size=5)
        for i in (0, 7, 30):
            np.testing.assert_allclose(a[i], model_forward(tr[i].token_ids, p, config).data, atol=1e-12)

    def test_empty_split(self, toy):
        config, tr, _ = toy
        with pytest.raises(ValueError):
            train(init_params(config, RngStream(0)), config, tr, [], TrainConfig(epochs=1))

    @pytest.mark.parametrize("bad", [dict(epochs=0), dict(lr=-1.0), dict(selection_metric="loss"), dict(alpha=2.0)])
    def test_invalid_config(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad).validate()


class TestCheckpoint:
    @pytest.fixture
    def saved(self, tiny_config, tiny_params):
        state = AdamState(lr=0.01, t=3)
        for n, t in tiny_params.items():
            state.mom1[n] = np.full(t.shape, 0.5)
            state.mom2[n] = np.full(t.shape, 0.25)
        return ckpt.dumps(tiny_params, tiny_config, state, {"labels": ["a", "b", "c", "d"]})

    def test_round_trip_is_idempotent(self, saved):
        c = ckpt.loads(saved)
        assert ckpt.dumps(c.params, c.config, c.state, c.meta) == saved
        assert c.state.t == 3 and c.meta["labels"] == ["a", "b", "c", "d"]

    def test_forward_unchanged(self, saved, tiny_config, tiny_params, rng):
        c = ckpt.loads(saved)
        ids = rng.integers(1, 12, size=15)
        np.testing.assert_array_equal(model_forward(ids, c.params, c.config).data,
                                      model_forward(ids, tiny_params, tiny_config).data)

    def test_file_round_trip(self, tmp_path, tiny_config, tiny_params):
        ckpt.save(tmp_path / "m.bin", tiny_params, tiny_config)
        c = ckpt.load(tmp_path / "m.bin")
        assert c.state is None and c.config == tiny_config
        assert not (tmp_path / "m.bin.tmp").exists()

    @pytest.mark.parametrize("cut", [0, 5, 40, -1])
    def test_truncated(self, saved, cut):
        with pytest.raises(CheckpointError):
            ckpt.loads(saved[:cut])

    def test_corrupted_byte(self, saved):
        bad = bytearray(saved)
        bad[len(bad) // 2] ^= 0xFF
        with pytest.raises(CheckpointError, match="checksum"):
            ckpt.loads(bytes(bad))

    def test_bad_magic(self, saved):
        with pytest.raises(CheckpointError):
            ckpt.loads(b"X" + saved[1:])

    def test_resume_config_mismatch(self, saved, tiny_config):
        other = ModelConfig(**dict(tiny_config.to_dict(), projection_dim=5))
        with pytest.raises(CheckpointError, match="projection_dim"):
            ckpt.check_resume(ckpt.loads(saved), other)
        ckpt.check_resume(ckpt.loads(saved), tiny_config)
