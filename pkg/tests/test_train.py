import numpy as np
import pytest

from lfdeocc.lf_core import LightField
from lfdeocc.model import NetworkConfig, build
from lfdeocc.nn import Tensor
from lfdeocc.synthetic import make_desk_dataset
from lfdeocc.train import (
    Adam,
    AdamConfig,
    NonFiniteGradient,
    TrainConfig,
    TrainingDiverged,
    TrainingLog,
    lr_at,
    make_batches,
    train,
)

TINY_NET = NetworkConfig(base_depth=4)


def tiny_dataset(n=2, seed=0, size=32):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        views = rng.random((5, 5, size, size, 3)).astype(np.float32)
        lf = LightField(views)
        out.append((lf, lf.center_view.copy()))
    return out


class TestAdam:
    def test_first_step_is_lr_sized(self):
        # with bias correction the very first update is ~lr * sign(g)
        p = Tensor(np.array([1.0, -1.0], dtype=np.float64), requires_grad=True)
        p.grad = np.array([0.3, -0.7])
        opt = Adam([("p", p)], AdamConfig(lr=0.01))
        opt.step()
        np.testing.assert_allclose(p.data, [1.0 - 0.01, -1.0 + 0.01], atol=1e-6)

    def test_constant_gradient_converges_linearly(self):
        p = Tensor(np.array([5.0]), requires_grad=True)
        opt = Adam([("p", p)], AdamConfig(lr=0.1))
        for _ in range(20):
            p.grad = np.array([1.0])
            opt.step()
        # steady constant gradient: each step moves ~lr toward the minimum
        assert abs(float(p.data[0]) - (5.0 - 20 * 0.1)) < 0.05

    def test_none_grad_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([("p", p)], AdamConfig())
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0])

    def test_nonfinite_gradient_aborts_before_mutation(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        q = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.5])
        q.grad = np.array([np.nan])
        opt = Adam([("p", p), ("q", q)], AdamConfig())
        with pytest.raises(NonFiniteGradient):
            opt.step()
        np.testing.assert_array_equal(p.data, [1.0])
        assert opt.t == 0

    def test_state_round_trip(self, tmp_path):
        p = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
        opt = Adam([("p", p)], AdamConfig(lr=0.05))
        for _ in range(3):
            p.grad = np.array([0.1, -0.2])
            opt.step()
        path = tmp_path / "opt.docn"
        opt.save(path)
        fresh = Adam([("p", p)], AdamConfig(lr=0.05))
        fresh.load(path)
        assert fresh.t == 3
        assert fresh.m["p"].tobytes() == opt.m["p"].tobytes()
        assert fresh.v["p"].tobytes() == opt.v["p"].tobytes()

    def test_invalid_betas_rejected(self):
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)


class TestSchedule:
    def test_drop_at_half(self):
        cfg = TrainConfig(epochs=200, base_lr=1e-3)
        assert lr_at(0, cfg) == 1e-3
        assert lr_at(99, cfg) == 1e-3
        assert abs(lr_at(100, cfg) - 1e-4) < 1e-15
        assert abs(lr_at(199, cfg) - 1e-4) < 1e-15

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_at(-1, TrainConfig())


class TestBatches:
    def test_shapes_and_coverage(self):
        ds = tiny_dataset(2, size=48)
        cfg = TrainConfig(batch_size=4, patch=32, stride=16)
        batches = list(make_batches(ds, cfg, seed=0))
        total = sum(b[0].shape[0] for b in batches)
        assert total == 2 * 4  # 2 samples x 2x2 patch grid
        for xb, yb in batches:
            assert xb.shape[1:] == (75, 32, 32)
            assert yb.shape[1:] == (3, 32, 32)

    def test_seeded_replay_identical(self):
        ds = tiny_dataset(2, size=48)
        cfg = TrainConfig(batch_size=3, patch=32, stride=16)
        a = [xb.tobytes() for xb, _ in make_batches(ds, cfg, seed=9)]
        b = [xb.tobytes() for xb, _ in make_batches(ds, cfg, seed=9)]
        assert a == b

    def test_epochs_shuffle_differently(self):
        ds = tiny_dataset(2, size=48)
        cfg = TrainConfig(batch_size=3, patch=32, stride=16)
        a = [xb.tobytes() for xb, _ in make_batches(ds, cfg, seed=9, epoch=0)]
        b = [xb.tobytes() for xb, _ in make_batches(ds, cfg, seed=9, epoch=1)]
        assert a != b

    def test_upsample_aug_doubles_items_and_separates_sizes(self):
        ds = tiny_dataset(1, size=32)
        cfg = TrainConfig(batch_size=8, patch=32, stride=32, upsample_aug=True)
        batches = list(make_batches(ds, cfg, seed=0))
        total = sum(b[0].shape[0] for b in batches)
        assert total == 2
        sizes = {b[0].shape[2] for b in batches}
        assert sizes == {32, 64}
        for xb, _ in batches:
            assert len({x.shape for x in xb}) == 1

    def test_patch_not_multiple_of_16_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(patch=24)


class TestTrainingLog:
    def test_smoothing_windows(self):
        log = TrainingLog()
        for i in range(20):
            log.append(i, 0, 1e-3, float(i))
        assert log.smoothed_loss(window=10, at="start") == 4.5
        assert log.smoothed_loss(window=10, at="end") == 14.5

    def test_csv(self, tmp_path):
        log = TrainingLog()
        log.append(0, 0, 1e-3, 0.5)
        p = tmp_path / "log.csv"
        log.save_csv(p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "step,epoch,lr,loss"
        assert lines[1].startswith("0,0,0.001,")


class TestTrainLoop:
    def test_loss_decreases_on_tiny_problem(self, tmp_path):
        ds = make_desk_dataset(4, seed=1)
        net = build(TINY_NET, seed=0)
        cfg = TrainConfig(batch_size=2, patch=32, stride=32, epochs=4,
                          seed=0, max_steps=30)
        log = train(net, ds, cfg, AdamConfig(lr=1e-3), out_dir=tmp_path)
        assert log.smoothed_loss(window=5, at="end") < log.smoothed_loss(window=5, at="start")
        assert (tmp_path / "final.docn").exists()
        assert (tmp_path / "train_log.csv").exists()

    def test_training_bitwise_deterministic(self, tmp_path):
        ds = tiny_dataset(1, seed=2)
        runs = []
        for sub in ("a", "b"):
            net = build(TINY_NET, seed=4)
            cfg = TrainConfig(batch_size=2, patch=32, stride=32, epochs=1, seed=5)
            train(net, ds, cfg, AdamConfig(lr=1e-3), out_dir=tmp_path / sub)
            runs.append((tmp_path / sub / "final.docn").read_bytes())
        assert runs[0] == runs[1]

    def test_resume_matches_uninterrupted(self, tmp_path):
        ds = tiny_dataset(1, seed=3)
        cfg = TrainConfig(batch_size=2, patch=32, stride=32, epochs=4, seed=6)

        full_net = build(TINY_NET, seed=7)
        train(full_net, ds, cfg, AdamConfig(lr=1e-3), out_dir=tmp_path / "full")

        # interrupt after 2 of the 4 epochs, keeping the same lr schedule
        half_net = build(TINY_NET, seed=7)
        half_cfg = TrainConfig(batch_size=2, patch=32, stride=32, epochs=4, seed=6,
                               max_steps=2)
        train(half_net, ds, half_cfg, AdamConfig(lr=1e-3), out_dir=tmp_path / "half")

        resumed = build(TINY_NET, seed=999)  # init irrelevant: fully overwritten
        train(resumed, ds, cfg, AdamConfig(lr=1e-3), out_dir=tmp_path / "resumed",
              resume_from=tmp_path / "half" / "ckpt_epoch001")
        full = (tmp_path / "full" / "final.docn").read_bytes()
        res = (tmp_path / "resumed" / "final.docn").read_bytes()
        assert full == res

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts(self, tmp_path):
        ds = tiny_dataset(1, seed=4)
        net = build(TINY_NET, seed=8)
        # blow up the output scale so the loss overflows float32
        for _, p in net.named_parameters():
            p.data = p.data * 1e20
        cfg = TrainConfig(batch_size=2, patch=32, stride=32, epochs=1, seed=0)
        with pytest.raises((TrainingDiverged, NonFiniteGradient)):
            train(net, ds, cfg, AdamConfig(lr=1e-3))

    def test_max_steps_caps_work(self, tmp_path):
        ds = tiny_dataset(2)
        net = build(TINY_NET, seed=9)
        cfg = TrainConfig(batch_size=2, patch=32, stride=32, epochs=50,
                          seed=0, max_steps=3)
        log = train(net, ds, cfg, AdamConfig(lr=1e-3))
        assert len(log.rows) == 3
