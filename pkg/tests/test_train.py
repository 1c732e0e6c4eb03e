import csv
import os

import numpy as np
import pytest

from rlsprune import checkpoint, data, network, report, rls, synth
from rlsprune import cli
from rlsprune import train as train_mod
from rlsprune.errors import ConfigError, FormatError

from conftest import small_fc_net


@pytest.fixture(scope="module")
def digit_sets(tmp_path_factory):
    d = tmp_path_factory.mktemp("digits")
    synth.write_mnist_style(str(d), train_n=600, test_n=200, seed=0)
    train_set = data.load_mnist_idx(str(d / "train-images-idx3-ubyte"),
                                    str(d / "train-labels-idx1-ubyte"))
    test_set = data.load_mnist_idx(str(d / "t10k-images-idx3-ubyte"),
                                   str(d / "t10k-labels-idx1-ubyte"))
    return train_set, test_set


def tiny_fnn():
    return network.fnn_arch(784, hidden=(32, 16))


class TestTrainConfig:
    def test_defaults_valid(self):
        train_mod.TrainConfig()

    @pytest.mark.parametrize("kwargs", [
        {"xi": 0.0}, {"xi": 1.0}, {"batch_size": 0}, {"epochs": 0},
        {"optimizer": "adam"}, {"lam": 2.0}, {"alpha": 1.0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            train_mod.TrainConfig(**kwargs)


class TestTrainLoop:
    def test_q_beyond_epochs_disables_pruning(self, digit_sets):
        tr, te = digit_sets
        cfg = train_mod.TrainConfig(batch_size=100, epochs=2, q=10, seed=1)
        res = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        assert res.report.events == []
        final = res.metrics.epochs[-1]
        assert all(p == 100.0 for p in final.nodes_pct)

    def test_prunes_after_q_and_shrinks(self, digit_sets):
        tr, te = digit_sets
        cfg = train_mod.TrainConfig(batch_size=100, epochs=4, q=1, seed=1)
        res = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        assert res.report.events
        assert all(ev.epoch > 1 for ev in res.report.events)
        # monotone retained counts
        history = [e.nodes_pct for e in res.metrics.epochs]
        for before, after in zip(history[:-1], history[1:]):
            assert all(b >= a - 1e-12 for b, a in zip(before, after))

    def test_sentinel_updates_on_events(self, digit_sets):
        tr, te = digit_sets
        cfg = train_mod.TrainConfig(batch_size=100, epochs=4, q=1, seed=3)
        res = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        losses = [ev.loss for ev in res.report.events]
        assert losses == sorted(losses, reverse=True)  # strictly improving trigger
        assert res.metrics.sentinel == pytest.approx(losses[-1])

    def test_momentum_mode_allocates_no_P_and_never_prunes(self, digit_sets):
        tr, te = digit_sets
        cfg = train_mod.TrainConfig(batch_size=100, epochs=3, q=0, seed=1,
                                    optimizer="momentum")
        res = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        assert res.report.events == []
        for idx in res.network.learnable_indices():
            assert res.network.states[idx].P is None

    def test_seeded_determinism(self, digit_sets):
        tr, te = digit_sets
        cfg = train_mod.TrainConfig(batch_size=100, epochs=3, q=1, seed=9)
        a = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        b = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        for ea, eb in zip(a.metrics.epochs, b.metrics.epochs):
            assert ea == eb


class TestEvaluate:
    def test_perfect_model(self):
        ds = data.Dataset(images=np.eye(4).reshape(4, 1, 2, 2),
                          labels=np.arange(4))
        net = network.Network([network.fc_layer(4, 4, network.LINEAR)], seed=0)
        net.states[0].W = np.eye(4)  # identity maps input i to one-hot i
        prec, loss = train_mod.evaluate(net, ds, num_classes=4)
        assert prec == 100.0
        assert loss == pytest.approx(0.0)

    def test_constant_output_chance_level(self, rng):
        n = 200
        ds = data.Dataset(images=rng.random((n, 1, 2, 2)),
                          labels=np.repeat(np.arange(10), 20))
        net = network.Network([network.fc_layer(4, 10, network.LINEAR)], seed=0)
        net.states[0].W[:] = 0.0  # constant output, argmax tie -> class 0
        prec, _ = train_mod.evaluate(net, ds)
        assert prec == pytest.approx(10.0)

    def test_hand_built_two_sample_case(self):
        ds = data.Dataset(images=np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(2, 1, 1, 2),
                          labels=np.array([0, 0]))
        net = network.Network([network.fc_layer(2, 2, network.LINEAR)], seed=0)
        net.states[0].W = np.array([[1.0, 0.0], [0.0, 1.0]])
        prec, loss = train_mod.evaluate(net, ds, num_classes=2)
        # sample 0: output (1,0) -> correct; sample 1: output (0,1) -> wrong
        assert prec == pytest.approx(50.0)
        # losses: 0 and ((0-1)^2 + 1^2)/2 per Eq-style 1/(2M) scaling over N=2
        assert loss == pytest.approx(0.5)


class TestMomentumStep:
    def test_fixed_point(self):
        st = network.LayerState(W=np.ones((2, 2)), psi=np.zeros((2, 2)))
        rls.momentum_step(st, np.zeros((2, 2)), lr=0.1, beta=0.9, weight_decay=0.0)
        assert np.array_equal(st.W, np.ones((2, 2)))

    def test_reduces_to_sgd(self, rng):
        w = rng.standard_normal((3, 2))
        g = rng.standard_normal((3, 2))
        st = network.LayerState(W=w.copy(), psi=np.zeros((3, 2)))
        rls.momentum_step(st, g, lr=0.1, beta=0.0, weight_decay=0.0)
        assert np.allclose(st.W, w - 0.1 * g, atol=1e-12)

    def test_two_hand_stepped_iterations(self):
        st = network.LayerState(W=np.array([[1.0]]), psi=np.zeros((1, 1)))
        lr, beta, wd = 0.1, 0.9, 0.01
        w, v = 1.0, 0.0
        for g in (0.5, -0.2):
            rls.momentum_step(st, np.array([[g]]), lr, beta, wd)
            v = beta * v - lr * (g + wd * w)
            w = w + v
        assert st.W[0, 0] == pytest.approx(w, abs=1e-15)


class TestEmitMetrics:
    def _metrics(self, n_layers=3, epochs=1, prune=0):
        m = train_mod.RunMetrics(layer_names=[f"l{i}" for i in range(n_layers)],
                                 original_units=[10] * n_layers,
                                 original_weights=[0] + [100] * (n_layers - 1))
        for e in range(epochs):
            m.epochs.append(train_mod.EpochMetrics(
                epoch=e + 1, loss=0.5 / (e + 1), precision=90.0 + e,
                prune_event=prune, nodes_pct=[100.0] * n_layers,
                weights_pct=[100.0] * n_layers))
        return m

    def test_row_count(self, tmp_path):
        path = str(tmp_path / "metrics.csv")
        report.emit_metrics(self._metrics(3, 1), None, path, figures=False)
        rows = list(csv.reader(open(path)))
        assert rows[0] == report.CSV_HEADER
        assert len(rows) == 1 + 3

    def test_prune_flag_all_zero(self, tmp_path):
        path = str(tmp_path / "metrics.csv")
        report.emit_metrics(self._metrics(2, 3, prune=0), None, path, figures=False)
        rows = list(csv.reader(open(path)))[1:]
        assert all(r[3] == "0" for r in rows)

    def test_totals_row_matches_weighted_aggregate(self, tmp_path, digit_sets):
        tr, te = digit_sets
        cfg = train_mod.TrainConfig(batch_size=100, epochs=3, q=1, seed=2)
        res = train_mod.train(cfg, tiny_fnn(), tr, te, input_shape=(784,))
        path = str(tmp_path / "m.csv")
        report.emit_metrics(res.metrics, res.report, path, figures=False)
        rows = list(csv.reader(open(report.summary_path(path))))
        header, layer_rows = rows[0], rows[1:-3]
        total_row = rows[-3]
        n_units = [int(r[1]) for r in layer_rows]
        n_pct = [float(r[3]) for r in layer_rows]
        w_counts = [int(r[2]) for r in layer_rows]
        w_pct = [float(r[4]) for r in layer_rows]
        expected_n = sum(p * u for p, u in zip(n_pct, n_units)) / sum(n_units)
        expected_w = sum(p * w for p, w in zip(w_pct, w_counts)) / sum(w_counts)
        assert float(total_row[3]) == pytest.approx(expected_n, abs=0.1)
        assert float(total_row[4]) == pytest.approx(expected_w, abs=0.1)

    def test_figures_rendered(self, tmp_path):
        path = str(tmp_path / "metrics.csv")
        files = report.emit_metrics(self._metrics(2, 2), None, path, figures=True)
        for f in files:
            assert os.path.exists(f)
        assert any(f.endswith("retained_nodes.png") for f in files)
        assert any(f.endswith("precision.png") for f in files)


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        net = small_fc_net(seed=6)
        opt = rls.RlsOptimizer(rls.RlsHyperParams()).attach(net)
        x = rng.standard_normal((4, 6))
        trace = net.forward(x)
        opt.step(net, trace, net.backward(trace, rng.standard_normal((4, 2))))
        path = str(tmp_path / "ck.bin")
        checkpoint.save_checkpoint(path, net, {"seed": 1}, epoch=3, sentinel=0.25)
        net2, cfg, epoch, sentinel = checkpoint.load_checkpoint(path)
        assert cfg == {"seed": 1} and epoch == 3 and sentinel == 0.25
        for idx in net.learnable_indices():
            for attr in ("W", "psi", "P"):
                a = getattr(net.states[idx], attr)
                b = getattr(net2.states[idx], attr)
                assert a.tobytes() == b.tobytes()

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(FormatError):
            checkpoint.load_checkpoint(str(path))

    def test_truncation_detected(self, tmp_path):
        net = small_fc_net(seed=6)
        path = str(tmp_path / "ck.bin")
        checkpoint.save_checkpoint(path, net, {}, 1, 1e5)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-16])
        with pytest.raises(FormatError):
            checkpoint.load_checkpoint(path)

    def test_resume_equivalence(self, tmp_path, digit_sets):
        tr, te = digit_sets
        full_cfg = train_mod.TrainConfig(batch_size=100, epochs=4, q=1, seed=5)
        full = train_mod.train(full_cfg, tiny_fnn(), tr, te, input_shape=(784,))

        ck = str(tmp_path / "mid.bin")
        half_cfg = train_mod.TrainConfig(batch_size=100, epochs=2, q=1, seed=5)
        train_mod.train(half_cfg, tiny_fnn(), tr, te, input_shape=(784,),
                        checkpoint_path=ck)
        resumed = train_mod.train(full_cfg, None, tr, te, resume=ck)
        assert [e.epoch for e in resumed.metrics.epochs] == [3, 4]
        for ra, rb in zip(resumed.metrics.epochs, full.metrics.epochs[2:]):
            assert ra == rb


class TestCli:
    def _write_data(self, d):
        synth.write_mnist_style(str(d), train_n=300, test_n=100, seed=2)

    def test_end_to_end_run(self, tmp_path, capsys):
        self._write_data(tmp_path)
        metrics = tmp_path / "out" / "metrics.csv"
        metrics.parent.mkdir()
        rc = cli.main([
            "--dataset", "mnist", "--data-dir", str(tmp_path),
            "--arch", "fnn-mnist", "--epochs", "1", "--batch-size", "100",
            "--q", "0", "--seed", "1", "--metrics-out", str(metrics),
            "--no-figures",
        ])
        assert rc == 0
        assert metrics.exists()
        rows = list(csv.reader(open(metrics)))
        assert rows[0] == report.CSV_HEADER
        assert len(rows) == 1 + 4  # input + 3 fc layers

    def test_config_file_and_flag_override(self, tmp_path):
        self._write_data(tmp_path)
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text(
            f"dataset=mnist\ndata-dir={tmp_path}\narch=fnn-mnist\n"
            "epochs=5\nbatch-size=100\nq=0\nseed=1\n")
        metrics = tmp_path / "m.csv"
        rc = cli.main(["--config", str(cfgfile), "--epochs", "1",
                       "--metrics-out", str(metrics), "--no-figures"])
        assert rc == 0
        rows = list(csv.reader(open(metrics)))[1:]
        assert {r[0] for r in rows} == {"1"}  # flag overrode the file's 5 epochs

    def test_config_error_exit_code(self, tmp_path):
        self._write_data(tmp_path)
        rc = cli.main(["--dataset", "mnist", "--data-dir", str(tmp_path),
                       "--xi", "1.5", "--epochs", "1"])
        assert rc == 2

    def test_data_format_error_exit_code(self, tmp_path):
        (tmp_path / "train-images-idx3-ubyte").write_bytes(b"junkjunk")
        (tmp_path / "train-labels-idx1-ubyte").write_bytes(b"junkjunk")
        rc = cli.main(["--dataset", "mnist", "--data-dir", str(tmp_path),
                       "--epochs", "1"])
        assert rc == 3

    def test_missing_data_dir_is_config_error(self):
        rc = cli.main(["--dataset", "mnist", "--epochs", "1"])
        assert rc == 2

    def test_cifar_format_route(self, tmp_path):
        d = tmp_path / "svhnish"
        d.mkdir()
        from rlsprune.synth import make_cifar_arrays, write_cifar_binary
        imgs, labels = make_cifar_arrays(120, seed=5)
        write_cifar_binary(str(d / "train_converted.bin"), imgs, labels)
        imgs, labels = make_cifar_arrays(40, seed=6)
        write_cifar_binary(str(d / "test_converted.bin"), imgs, labels)
        rc = cli.main(["--dataset", "cifar10-format", "--data-dir", str(d),
                       "--arch", "minivgg", "--epochs", "1",
                       "--batch-size", "40", "--q", "5"])
        assert rc == 0
