import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ganver.checkpoint import MAGIC, CheckpointError, checkpoint_load, checkpoint_save
from ganver.config import ConfigError, ExperimentConfig, load_config, parse_config_text
from ganver.data import RngStream
from ganver.networks import MlpSpec, generator_spec, kaiming_init
from ganver.train import AdamState, Trainer, adam_step, train


def tiny(**kw):
    base = dict(
        g_hidden=(16, 16), d_hidden=(16, 16), m_hidden=(16,), batch_size=16, train_size=512,
        epochs=2, iters_per_epoch=5, eval_every=1, eval_n=200, eval_repeats=1, seed=4,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- Adam --------------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([[1.0, -2.0]])}
    new, state = adam_step(p, {"w": np.zeros((1, 2))}, AdamState.zeros_like(p), 0.1)
    assert np.array_equal(new["w"], p["w"]) and state.step == 1


@pytest.mark.parametrize("betas", [(0.5, 0.999), (0.9, 0.99), (0.0, 0.5)])
def test_adam_first_step_is_minus_lr(betas):
    p = {"w": np.array([[0.0]])}
    new, _ = adam_step(p, {"w": np.array([[1.0]])}, AdamState.zeros_like(p), 2e-4, *betas)
    assert new["w"].item() == pytest.approx(-2e-4 / (1 + 1e-8), rel=1e-12)


def test_adam_second_step_hand_value():
    p = {"w": np.array([[0.0]])}
    s = AdamState.zeros_like(p)
    p, s = adam_step(p, {"w": np.array([[1.0]])}, s, 0.1, 0.5, 0.999)
    p, s = adam_step(p, {"w": np.array([[3.0]])}, s, 0.1, 0.5, 0.999)
    m = 0.5 * 0.5 + 0.5 * 3
    v = 0.999 * 0.001 + 0.001 * 9
    step = (m / (1 - 0.25)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    assert p["w"].item() == pytest.approx(-0.1 / (1 + 1e-8) - 0.1 * step, rel=1e-12)
    assert s.step == 2


@given(g=st.lists(st.floats(-100, 100), min_size=1, max_size=6), lr=st.floats(1e-5, 1.0))
def test_adam_without_momentum_is_sign_sgd(g, lr):
    g = np.array([g])
    p = {"w": np.zeros_like(g)}
    new, _ = adam_step(p, {"w": g}, AdamState.zeros_like(p), lr, 0.0, 0.0)
    np.testing.assert_allclose(new["w"], -lr * g / (np.abs(g) + 1e-8), rtol=1e-12, atol=1e-300)


def test_adam_missing_gradient():
    p = {"a": np.zeros((1, 1)), "b": np.zeros((1, 1))}
    with pytest.raises(KeyError, match="b"):
        adam_step(p, {"a": np.zeros((1, 1))}, AdamState.zeros_like(p), 0.1)


def test_adam_deterministic():
    rng = np.random.default_rng(0)
    p = {"w": rng.normal(size=(3, 3))}
    grads = [{"w": rng.normal(size=(3, 3))} for _ in range(5)]

    def run():
        q, s = p, AdamState.zeros_like(p)
        for g in grads:
            q, s = adam_step(q, g, s, 0.01)
        return q, s

    (a, sa), (b, sb) = run(), run()
    assert np.array_equal(a["w"], b["w"]) and np.array_equal(sa.v["w"], sb.v["w"])


# -- checkpoints -------------------------------------------------------------------


def _paramsets():
    return {
        "G": kaiming_init(generator_spec(hidden=(8,)), RngStream(0, "G")),
        "D": kaiming_init(MlpSpec((2, 8, 1)), RngStream(0, "D")),
    }


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    ps = _paramsets()
    ps["G"]["bias-0"] = np.array([[np.nextafter(0, 1), -0.0, 1e308, 3.0, -7.5, 0.1, 0.2, 0.3]])
    path = tmp_path / "a.ckpt"
    checkpoint_save(ps, path)
    back = checkpoint_load(path, {"G": generator_spec(hidden=(8,)), "D": MlpSpec((2, 8, 1))})
    for net in ps:
        assert list(back[net]) == list(ps[net])
        for k in ps[net]:
            assert back[net][k].tobytes() == ps[net][k].tobytes()
    assert path.read_bytes()[:5] == MAGIC + b"\x01"


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "a.ckpt"
    checkpoint_save(_paramsets(), path)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint_load(path)


def test_checkpoint_bad_version(tmp_path):
    path = tmp_path / "a.ckpt"
    checkpoint_save(_paramsets(), path)
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        checkpoint_load(path)


@pytest.mark.parametrize("cut", [3, 7, 20, -1])
def test_checkpoint_truncated(tmp_path, cut):
    path = tmp_path / "a.ckpt"
    checkpoint_save(_paramsets(), path)
    path.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(CheckpointError):
        checkpoint_load(path)


def test_checkpoint_trailing_bytes(tmp_path):
    path = tmp_path / "a.ckpt"
    checkpoint_save(_paramsets(), path)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint_load(path)


def test_checkpoint_shape_mismatch_names_tensor(tmp_path):
    path = tmp_path / "a.ckpt"
    checkpoint_save(_paramsets(), path)
    with pytest.raises(CheckpointError, match="G/weight-0"):
        checkpoint_load(path, {"G": generator_spec(hidden=(9,))})


def test_checkpoint_manifest_layout(tmp_path):
    path = tmp_path / "a.ckpt"
    checkpoint_save({"N": {"w": np.array([[1.5, 2.5]])}}, path)
    raw = path.read_bytes()
    assert struct.unpack("<BI", raw[4:9]) == (1, 1)
    assert raw[9:11] == struct.pack("<H", 3) and raw[11:14] == b"N/w"
    assert struct.unpack("<IIQ", raw[14:30]) == (1, 2, 16)
    assert np.frombuffer(raw[30:], "<f8").tolist() == [1.5, 2.5]


# -- configuration -------------------------------------------------------------------


def test_config_text_roundtrip(tmp_path):
    cfg = tiny(variant="wgan+ver", lam=0.25, g_hidden=(7, 5))
    path = tmp_path / "c.txt"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg


def test_config_parsing_and_overrides(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\ndataset = grid   # trailing\n\nlam = 0.5\n")
    cfg = load_config(path, lam="1.5", **{"batch-size": "32"})
    assert (cfg.dataset, cfg.lam, cfg.batch_size) == ("grid", 1.5, 32)


@pytest.mark.parametrize(
    "text",
    ["batch_size = 1", "lr = 0", "dataset = spiral", "variant = lsgan", "bogus = 1", "epochs = x", "no equals sign"],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig(**parse_config_text(text))


def test_step_defaults():
    assert ExperimentConfig(variant="vgan").discriminator_steps == 1
    assert ExperimentConfig(variant="wgan+ver").discriminator_steps == 5
    assert ExperimentConfig().iterations_per_epoch == 1563


# -- training loop ----------------------------------------------------------------------


def test_zero_epochs_returns_initial_networks():
    cfg = tiny(epochs=0, variant="vgan+ver")
    res = train(cfg)
    init = Trainer(cfg)
    assert res.reports == [] and res.epochs == [] and res.best_epoch is None
    for net in ("G", "D", "M"):
        p = getattr(res, net)
        assert all(np.array_equal(p[k], getattr(init, net)[k]) for k in p)


def test_training_does_not_touch_dataset():
    tr = Trainer(tiny())
    before = tr.data.copy()
    for _ in range(3):
        tr.iterate()
    assert np.array_equal(tr.data, before)
    assert not tr.data.flags.writeable


@pytest.mark.parametrize("base", ["vgan", "wgan"])
def test_lambda_zero_matches_base_variant(base):
    a = Trainer(tiny(variant=base))
    b = Trainer(tiny(variant=base + "+ver", lam=0.0))
    for _ in range(8):
        a.iterate()
        b.iterate()
    for net in ("G", "D"):
        for k in getattr(a, net):
            assert np.array_equal(getattr(a, net)[k], getattr(b, net)[k])
    assert np.isfinite(b.last_mi)


def test_positive_lambda_changes_generator():
    a = Trainer(tiny(variant="vgan+ver", lam=0.0))
    b = Trainer(tiny(variant="vgan+ver", lam=1.0))
    for _ in range(3):
        a.iterate()
        b.iterate()
    assert not np.array_equal(a.G["weight-0"], b.G["weight-0"])


def test_train_writes_outputs_and_is_deterministic(tmp_path):
    cfgs = [tiny(variant="vgan+ver", lam=0.5, output_dir=str(tmp_path / d)) for d in ("a", "b")]
    results = [train(c) for c in cfgs]
    a, b = tmp_path / "a", tmp_path / "b"
    for name in ("metrics.csv", "last.ckpt", "best.ckpt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    lines = (a / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,modes,hq,kl,wd,mmd,ta,ra,ga,pr,re" and len(lines) == 3
    res = results[0]
    assert res.epochs == [1, 2] and res.iterations == 10
    assert res.best_wd == min(r.wd for r in res.reports)
    assert res.best_report.wd == res.best_wd
    assert load_config(a / "config.txt") == cfgs[0]
    ck = checkpoint_load(a / "last.ckpt", {"G": cfgs[0].g_spec, "D": cfgs[0].d_spec, "M": cfgs[0].m_spec})
    assert np.array_equal(ck["G"]["weight-0"], res.G["weight-0"])


def test_eval_every_still_evaluates_last_epoch():
    res = train(tiny(epochs=3, eval_every=2, iters_per_epoch=2))
    assert res.epochs == [2, 3]


def test_divergence_aborts_with_last_good_checkpoint(tmp_path):
    cfg = tiny(epochs=3, output_dir=str(tmp_path))

    def poison(epoch, report, trainer):
        if epoch == 1:
            trainer.D["weight-0"] = np.full_like(trainer.D["weight-0"], np.inf)

    res = train(cfg, poison)
    assert res.aborted and res.aborted.startswith("epoch 2")
    assert res.epochs == [1]
    ck = checkpoint_load(tmp_path / "last.ckpt", {"G": cfg.g_spec, "D": cfg.d_spec})
    assert np.isfinite(ck["D"]["weight-0"]).all()
    assert len((tmp_path / "metrics.csv").read_text().splitlines()) == 2


def test_non_finite_generator_output_aborts():
    cfg = tiny(epochs=2)

    def poison(epoch, report, trainer):
        trainer.G["weight-2"] = np.full_like(trainer.G["weight-2"], np.inf)

    res = train(cfg, poison)
    assert res.aborted and res.epochs == [1]
