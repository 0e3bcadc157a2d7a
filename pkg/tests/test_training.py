import json

import numpy as np
import pytest

from dinendt import training
from dinendt.nets import load_checkpoint
from dinendt.training import (ConfigError, NumericalError, TrainConfig, baseline_for, run, simulate_iid_dataset,
                              train_dine, train_dine_ndt)

TINY = dict(batch_size=4, seq_len=8, k_ref=2, burn_in=2, dine_hidden=4, dine_head=(6,), ndt_hidden=4,
            ndt_trunk=(5,), mine_head=(6,), mine_samples=16, steps=6, eval_n=1000)


def tiny(**kw):
    return TrainConfig(**{**TINY, **kw})


@pytest.mark.parametrize("bad", [
    dict(batch_size=0), dict(seq_len=0), dict(steps=0), dict(eval_n=999), dict(k_ref=0),
    dict(burn_in=8), dict(mode="train"), dict(estimator="x"), dict(channel="bsc"), dict(alpha=1.0),
    dict(constraint="peak_power", power=0.0), dict(pool="time"), dict(feedback=True),
    dict(mode="capacity", estimator="mine", feedback=True),
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        tiny(**bad)


def test_from_dict_rejects_unknown_keys_and_round_trips():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"stepz": 3})
    cfg = tiny(mode="capacity", channel="ma1", alpha=0.5)
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_baseline_for():
    assert baseline_for(tiny()) is None
    assert baseline_for(tiny(mode="capacity")) == pytest.approx(0.34657359, abs=1e-8)
    assert baseline_for(tiny(mode="capacity", channel="ma1", alpha=0.0, feedback=True)) == \
        pytest.approx(0.34657359, abs=1e-9)
    assert baseline_for(tiny(mode="capacity", channel="ar1_mimo", alpha=0.4, feedback=True)) is None


def curve_bytes(result):
    return np.array([[c.step, c.d_hat_y, c.d_hat_yx, c.estimate_nats] for c in result.curve]).tobytes()


def test_train_dine_determinism_and_curve_identity():
    cfg = tiny()
    ds = simulate_iid_dataset(cfg, 500)
    a = train_dine(cfg, ds)
    b = train_dine(cfg, simulate_iid_dataset(cfg, 500))
    assert curve_bytes(a) == curve_bytes(b) and repr(a.report) == repr(b.report)
    assert len(a.curve) == cfg.steps
    assert all(c.estimate_nats == c.d_hat_yx - c.d_hat_y for c in a.curve)
    assert a.report.config == cfg.to_dict()
    # evaluation cannot use more scored positions than the dataset holds
    assert a.report.n_eval == (500 // 8) * (8 - 2)
    assert train_dine(tiny(seed=1), ds).curve != a.curve


def test_train_dine_on_callable_source():
    def source(rng, count):
        x = rng.standard_normal((count, 8, 2))
        return x, x + rng.standard_normal((count, 8, 2))
    res = train_dine(tiny(), source)
    assert np.isfinite(res.report.estimate_nats) and res.report.n_eval == 1000


@pytest.mark.parametrize("extra", [
    dict(channel="awgn"),
    dict(channel="ma1", alpha=0.5),
    dict(channel="ma1", alpha=0.5, feedback=True),
    dict(channel="ar1_mimo", alpha=0.4, dim=2),
    dict(channel="awgn", constraint="peak_power", power=1.0),
    dict(estimator="mine"),
])
def test_capacity_runs_are_deterministic(extra):
    cfg = tiny(mode="capacity", **extra)
    a = train_dine_ndt(cfg)
    b = train_dine_ndt(cfg)
    assert curve_bytes(a) == curve_bytes(b) and repr(a.report) == repr(b.report)
    assert all(c.estimate_nats == c.d_hat_yx - c.d_hat_y for c in a.curve)
    assert a.steps_run == cfg.steps


def test_run_dispatch_and_estimate_needs_data():
    with pytest.raises(ConfigError):
        run(tiny())
    res, seconds = run(tiny(mode="capacity", steps=2))
    assert seconds > 0 and res.steps_run == 2
    with pytest.raises(ConfigError):
        train_dine_ndt(tiny())


def test_nan_guard_checkpoints_last_finite_parameters(tmp_path, monkeypatch):
    real = training.dine_objective
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        out = real(*args, **kw)
        if calls["n"] == 4:
            return out[0] * np.nan, out[1], out[2]
        return out
    monkeypatch.setattr(training, "dine_objective", flaky)
    cfg = tiny()
    ds = simulate_iid_dataset(cfg, 500)
    seen = []
    with pytest.raises(NumericalError, match="step 4"):
        train_dine(cfg, ds, progress=seen.append, checkpoint=tmp_path / "ck.json")
    assert [p.step for p in seen] == [1, 2, 3]
    doc = json.loads((tmp_path / "ck.json").read_text())
    assert doc["meta"]["step"] == 3
    nets = training._make_dine_nets(cfg, 1, 1, np.random.default_rng(0))
    load_checkpoint(tmp_path / "ck.json", {"dine_y": nets[0], "dine_xy": nets[1]})
    assert all(np.all(np.isfinite(p.data)) for n in nets for p in n.parameters())


def test_plateau_rule():
    flat = [training.CurvePoint(k, 0.0, 0.3, 0.3) for k in range(1, 1001)]
    assert training._plateau(flat)
    assert not training._plateau(flat[:999])
    rising = [training.CurvePoint(k, 0.0, k * 1e-6, k * 1e-6) for k in range(1, 1001)]
    assert not training._plateau(rising)


def test_generator_respects_power_in_capacity_runs():
    cfg = tiny(mode="capacity", channel="ma1", alpha=0.5, feedback=True, power=2.0)
    res = train_dine_ndt(cfg)
    x, _ = training.closed_loop_source(cfg, cfg.channel_model(), res.networks["ndt"])(np.random.default_rng(0), 64)
    np.testing.assert_allclose(np.mean(np.sum(x ** 2, axis=-1), axis=0), 2.0, rtol=1e-9)
