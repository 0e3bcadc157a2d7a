import numpy as np
import pytest

from dinendt import autodiff as ad
from dinendt import checks
from dinendt.autodiff import ShapeError, Tensor
from dinendt.nets import (Constraint, DineNetwork, LstmParams, LstmState, MineCritic, MlpParams, NdtNetwork,
                          apply_constraint, constraint_layer, dine_forward, load_checkpoint, lstm_cell_fused,
                          lstm_step, modified_lstm_step, ndt_forward, save_checkpoint)


def zero_lstm(d=2, h=3):
    p = LstmParams(d, h)
    p.weight.data[:] = 0.0
    p.bias.data[:] = 0.0
    return p


def test_lstm_step_zero_params():
    p = zero_lstm()
    s = lstm_step(p, np.ones(2), LstmState.zeros(3))
    assert np.all(s.h.data == 0) and np.all(s.c.data == 0)
    v = np.array([1.0, -2.0, 0.5])
    s = lstm_step(p, np.ones(2), LstmState(Tensor(np.zeros(3)), Tensor(v)))
    np.testing.assert_allclose(s.c.data, 0.5 * v, rtol=1e-15)
    np.testing.assert_allclose(s.h.data, 0.5 * np.tanh(0.5 * v), rtol=1e-15)


def test_lstm_step_rejects_wrong_input():
    with pytest.raises(ShapeError):
        lstm_step(LstmParams(2, 3), np.ones(3), LstmState.zeros(3))


def test_fused_cell_matches_elementary_step():
    rng = np.random.default_rng(0)
    p = LstmParams(2, 4, rng)
    x = rng.standard_normal((5, 2))
    s0 = LstmState(Tensor(rng.standard_normal((5, 4))), Tensor(rng.standard_normal((5, 4))))
    a = lstm_step(p, x, s0)
    b = lstm_cell_fused(p, x, s0)
    np.testing.assert_allclose(a.h.data, b.h.data, atol=1e-15)
    np.testing.assert_allclose(a.c.data, b.c.data, atol=1e-15)


def test_gate_blocks_share_hidden_size():
    blocks = LstmParams(3, 5).gate_blocks()
    assert len(blocks) == 4 and all(b.shape == (8, 5) for b in blocks)


def test_modified_step_reference_branches():
    rng = np.random.default_rng(1)
    p = LstmParams(2, 3, rng)
    state = LstmState(Tensor(rng.standard_normal(3)), Tensor(rng.standard_normal(3)))
    joint = rng.standard_normal(2)
    nxt, js, rs = modified_lstm_step(p, joint, np.stack([joint] * 4), state)
    assert nxt is js
    for j in range(4):
        np.testing.assert_allclose(rs.h.data[j], js.h.data, atol=1e-15)
    nxt2, _, _ = modified_lstm_step(p, joint, rng.standard_normal((4, 2)), state)
    assert nxt2.h.data.tobytes() == nxt.h.data.tobytes()
    assert nxt2.c.data.tobytes() == nxt.c.data.tobytes()


def test_modified_rollout_matches_independent_steps():
    rng = np.random.default_rng(2)
    p = LstmParams(2, 3, rng)
    joint = rng.standard_normal((3, 2))
    refs = rng.standard_normal((3, 4, 2))
    state = LstmState.zeros(3)
    plain = LstmState.zeros(3)
    for t in range(3):
        prev = plain
        state, js, rs = modified_lstm_step(p, joint[t], refs[t], state)
        plain = lstm_step(p, joint[t], plain)
        np.testing.assert_allclose(js.h.data, plain.h.data, atol=1e-15)
        for j in range(4):
            one = lstm_step(p, refs[t, j], prev)
            np.testing.assert_allclose(rs.h.data[j], one.h.data, atol=1e-15)
            np.testing.assert_allclose(rs.c.data[j], one.c.data, atol=1e-15)


def small_dine(d=2, seed=0):
    return DineNetwork(d, hidden=5, head=(6, 4), k_ref=3, rng=np.random.default_rng(seed))


def test_dine_forward_shapes_and_zero_head():
    net = small_dine()
    rng = np.random.default_rng(3)
    gj, gr = dine_forward(net, rng.standard_normal((2, 7, 2)), rng.standard_normal((2, 7, 3, 2)))
    assert gj.shape == (2, 7) and gr.shape == (2, 7, 3)
    for w, b, _ in net.head.layers:
        w.data[:] = 0.0
        b.data[:] = 0.0
    gj, gr = dine_forward(net, rng.standard_normal((7, 2)), rng.standard_normal((7, 3, 2)))
    assert gj.shape == (7,) and np.all(gj.data == 0) and np.all(gr.data == 0)


def test_dine_forward_single_step_is_feedforward():
    net = small_dine()
    rng = np.random.default_rng(4)
    y = rng.standard_normal((1, 2))
    refs = rng.standard_normal((1, 3, 2))
    gj, gr = dine_forward(net, y, refs)
    s = lstm_step(net.lstm, y[0], LstmState.zeros(5))
    assert gj.data[0] == pytest.approx(net.head(s.h).data[0], abs=1e-14)
    s = lstm_step(net.lstm, refs[0], LstmState.zeros(5, (3,)))
    np.testing.assert_allclose(gr.data[0], net.head(s.h).data[:, 0], atol=1e-14)


def test_dine_forward_matches_stepwise_rollout():
    net = small_dine()
    rng = np.random.default_rng(5)
    joint = rng.standard_normal((6, 2))
    refs = rng.standard_normal((6, 3, 2))
    gj, gr = dine_forward(net, joint, refs)
    state = LstmState.zeros(5)
    for t in range(6):
        state, js, rs = modified_lstm_step(net.lstm, joint[t], refs[t], state)
        assert gj.data[t] == pytest.approx(net.head(js.h).data[0], abs=1e-13)
        np.testing.assert_allclose(gr.data[t], net.head(rs.h).data[:, 0], atol=1e-13)


def test_dine_forward_is_causal_and_reference_isolated():
    net = small_dine()
    rng = np.random.default_rng(6)
    joint = rng.standard_normal((2, 8, 2))
    refs = rng.standard_normal((2, 8, 3, 2))
    gj, gr = dine_forward(net, joint, refs)
    joint2 = joint.copy()
    joint2[:, 5:] = rng.standard_normal((2, 3, 2))
    refs2 = refs.copy()
    refs2[:, 3] = rng.standard_normal((2, 3, 2))
    gj2, gr2 = dine_forward(net, joint2, refs2)
    assert gj2.data[:, :5].tobytes() == gj.data[:, :5].tobytes()
    assert gr2.data[:, :3].tobytes() == gr.data[:, :3].tobytes()
    # references at step 3 never leak into the joint recursion
    assert gj2.data[:, 3:5].tobytes() == gj.data[:, 3:5].tobytes()


def test_dine_head_is_shared():
    net = small_dine()
    rng = np.random.default_rng(7)
    joint = rng.standard_normal((4, 2))
    gj, _ = dine_forward(net, joint, np.repeat(joint[:, None], 3, axis=1))
    _, gr = dine_forward(net, joint, np.repeat(joint[:, None], 3, axis=1))
    # reference equal to joint input at step 0 sees the same zero state
    np.testing.assert_allclose(gr.data[0], gj.data[0], atol=1e-14)


def test_dine_forward_errors():
    net = small_dine()
    with pytest.raises(ValueError):
        dine_forward(net, np.zeros((1, 0, 2)), np.zeros((1, 0, 3, 2)))
    with pytest.raises(ShapeError):
        dine_forward(net, np.zeros((4, 3)), np.zeros((4, 3, 3)))


def test_constraint_layer_examples():
    out = constraint_layer(np.array([[[1.0]], [[-1.0]]]), Constraint("average_power", 4.0))
    np.testing.assert_allclose(out.data.ravel(), [2.0, -2.0])
    assert constraint_layer(np.zeros((2, 1, 1)), Constraint("peak_power", 2.0)).data.ravel().tolist() == [0.0, 0.0]
    z = constraint_layer(np.zeros((3, 2, 1)), Constraint("average_power", 1.0))
    assert np.all(z.data == 0.0)
    with pytest.raises(ValueError):
        Constraint("average_power", -1.0)
    with pytest.raises(ValueError):
        Constraint("peak_power", 0.0)


def test_average_power_is_exact_per_time_step():
    rng = np.random.default_rng(8)
    raw = rng.standard_normal((16, 5, 3)) * 7.0
    out = constraint_layer(raw, Constraint("average_power", 2.5)).data
    energy = (out ** 2).sum(axis=2).mean(axis=0)
    np.testing.assert_allclose(energy, 2.5, rtol=1e-12)
    one = apply_constraint(raw[:, 0], Constraint("average_power", 2.5)).data
    np.testing.assert_allclose(one, out[:, 0], rtol=1e-14)


def test_peak_power_is_strict():
    out = constraint_layer(np.linspace(-30, 30, 50).reshape(50, 1, 1), Constraint("peak_power", 2.0)).data
    assert np.all(np.abs(out) <= 2.0)
    out = constraint_layer(np.linspace(-5, 5, 50).reshape(50, 1, 1), Constraint("peak_power", 2.0)).data
    assert np.all(np.abs(out) < 2.0)


def test_ndt_zero_weights_give_zero_outputs():
    net = NdtNetwork(1, hidden=4, trunk=(5,), rng=np.random.default_rng(0))
    for p in net.parameters():
        p.data[:] = 0.0
    out = ndt_forward(net, np.random.default_rng(1).random((8, 6, 1)))
    assert np.all(out.data == 0.0)


def test_ndt_peak_range_and_causality():
    rng = np.random.default_rng(2)
    net = NdtNetwork(2, hidden=4, trunk=(5,), constraint=Constraint("peak_power", 2.0), rng=rng)
    u = rng.random((4, 6, 2))
    x = ndt_forward(net, u).data
    assert np.all(np.abs(x) < 2.0)
    u2 = u.copy()
    u2[:, 1:] = rng.random((4, 5, 2))
    assert ndt_forward(net, u2).data[:, 0].tobytes() == x[:, 0].tobytes()


def test_ndt_feedback_wiring_checks():
    rng = np.random.default_rng(3)
    net = NdtNetwork(1, hidden=3, trunk=(4,), feedback=True, rng=rng)
    with pytest.raises(ValueError):
        ndt_forward(net, rng.random((2, 3, 1)))
    plain = NdtNetwork(1, hidden=3, trunk=(4,), rng=rng)
    with pytest.raises(ValueError):
        ndt_forward(plain, rng.random((2, 3, 1)), np.zeros((2, 3, 1)))
    with pytest.raises(ValueError):
        NdtNetwork(1, feedback=True, recurrent=False)


def test_memoryless_generator_is_pointwise():
    rng = np.random.default_rng(4)
    net = NdtNetwork(1, hidden=3, trunk=(6,), constraint=Constraint("none"), recurrent=False, rng=rng)
    u = rng.random((5, 4, 1))
    x = ndt_forward(net, u).data
    np.testing.assert_allclose(x, net.trunk((u - 0.5) * np.sqrt(12.0)).data)


def test_generator_noise_is_standardised():
    rng = np.random.default_rng(5)
    u = rng.random((20_000, 1))
    z = NdtNetwork(1, recurrent=False, rng=rng).standardise(u).data
    assert abs(z.mean()) < 0.02 and abs(z.var() - 1.0) < 0.02
    g = NdtNetwork(1, recurrent=False, rng=rng, noise_law="gaussian")
    assert np.array_equal(g.standardise(u).data, u)
    with pytest.raises(ValueError):
        NdtNetwork(1, noise_law="cauchy")


def test_mlp_and_critic_shapes():
    mlp = MlpParams([3, 4, 2])
    assert mlp(np.ones((5, 3))).shape == (5, 2)
    with pytest.raises(ShapeError):
        mlp(np.ones((5, 2)))
    critic = MineCritic(1, 2, (4,))
    assert critic(np.ones((6, 1)), np.ones((6, 2))).shape == (6,)


def test_checkpoint_round_trip(tmp_path):
    a = small_dine(seed=1)
    b = small_dine(seed=2)
    path = tmp_path / "p.json"
    save_checkpoint(path, {"net": a}, {"note": "x"})
    meta = load_checkpoint(path, {"net": b})
    assert meta == {"note": "x"}
    for (n1, p1), (n2, p2) in zip(a.named_parameters(), b.named_parameters()):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "p.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(path, {"net": small_dine()})


@pytest.mark.parametrize("seed", range(3))
def test_forward_passes_pass_gradient_check(seed):
    for name in ("lstm", "modified_lstm", "dine"):
        f, point = checks.CASES[name](seed)
        assert ad.gradient_check(f, point) < 1e-4, name
