"""Finite-difference checks of the differentiable pipeline.

Each case builds a small randomly initialised model and returns
``(function, point)`` for :func:`autodiff.gradient_check`; ``function`` maps
the parameter arrays to a scalar loss.  Losses are random linear read-outs
of the outputs so every output coordinate is exercised.  Parameter scales
keep gates away from saturation: saturated gates produce gradients below the
resolution of a central difference at step 1e-6.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .channels import ChannelModel, rollout_closed_loop
from .estimators import Batch, dine_objective
from .nets import (Constraint, DineNetwork, LstmParams, LstmState, NdtNetwork, dine_forward,
                   lstm_step, modified_lstm_step)

LSTM_SCALE = 0.4
HEAD_SCALE = 1.2
INPUT_SCALE = 0.7


def _randomise(module, rng, lstm_params: int) -> None:
    for k, p in enumerate(module.parameters()):
        p.data = (LSTM_SCALE if k < lstm_params else HEAD_SCALE) * rng.standard_normal(p.shape)


def lstm_case(seed: int, steps: int = 5, input_dim: int = 2, hidden: int = 3):
    """LSTM built from elementary ops, unrolled over ``steps`` steps."""
    rng = np.random.default_rng(seed)
    params = LstmParams(input_dim, hidden, rng)
    _randomise(params, rng, 2)
    xs = INPUT_SCALE * rng.standard_normal((steps, 2, input_dim))
    coef = rng.standard_normal((steps, 2, 2 * hidden))

    def f(w, b):
        params.bind([w, b])
        state = LstmState.zeros(hidden, (2,))
        loss = ad.as_tensor(0.0)
        for t in range(steps):
            state = lstm_step(params, xs[t], state)
            loss = loss + ad.tsum(ad.concat([state.h, state.c], axis=-1) * coef[t])
        return loss

    return f, [p.data.copy() for p in params.parameters()]


def modified_lstm_case(seed: int, steps: int = 4, input_dim: int = 2, hidden: int = 3, k_ref: int = 3):
    """Fused modified LSTM: propagated joint branch plus reference branches."""
    rng = np.random.default_rng(seed)
    params = LstmParams(input_dim, hidden, rng)
    _randomise(params, rng, 2)
    joint = INPUT_SCALE * rng.standard_normal((steps, 2, input_dim))
    refs = INPUT_SCALE * rng.standard_normal((steps, 2, k_ref, input_dim))
    cj = rng.standard_normal((steps, 2, 2 * hidden))
    cr = rng.standard_normal((steps, 2, k_ref, 2 * hidden))

    def f(w, b):
        params.bind([w, b])
        state = LstmState.zeros(hidden, (2,))
        loss = ad.as_tensor(0.0)
        for t in range(steps):
            state, js, rs = modified_lstm_step(params, joint[t], refs[t], state)
            loss = loss + ad.tsum(ad.concat([js.h, js.c], axis=-1) * cj[t])
            loss = loss + ad.tsum(ad.concat([rs.h, rs.c], axis=-1) * cr[t])
        return loss

    return f, [p.data.copy() for p in params.parameters()]


def dine_case(seed: int, steps: int = 4, hidden: int = 4, head=(6, 4), k_ref: int = 3):
    """Potential network: compiled recurrence, reference branches and shared head."""
    rng = np.random.default_rng(seed)
    net = DineNetwork(2, hidden, head, k_ref, rng)
    _randomise(net, rng, 2)
    joint = INPUT_SCALE * rng.standard_normal((2, steps, 2))
    refs = INPUT_SCALE * rng.standard_normal((2, steps, k_ref, 2))
    cj = rng.standard_normal((2, steps))
    cr = rng.standard_normal((2, steps, k_ref))

    def f(*tensors):
        net.bind(tensors)
        gj, gr = dine_forward(net, joint, refs)
        return ad.tsum(gj * cj) + ad.tsum(gr * cr)

    return f, [p.data.copy() for p in net.parameters()]


def ndt_rollout_case(seed: int, steps: int = 4, hidden: int = 3, trunk=(4,), feedback: bool = True,
                     channel: str = "ma1"):
    """Generator through the channel; read-out of both input and output sequences."""
    rng = np.random.default_rng(seed)
    ndt = NdtNetwork(1, 1, hidden, trunk, Constraint("average_power", 1.0), feedback=feedback, rng=rng)
    _randomise(ndt, rng, 2)
    model = ChannelModel(channel, 1.0, 0.5 if channel != "awgn" else 0.0)
    u = rng.random((3, steps, 1))
    chan = rng.standard_normal((3, steps, 1))
    cx = rng.standard_normal((3, steps, 1))
    cy = rng.standard_normal((3, steps, 1))

    def f(*tensors):
        ndt.bind(tensors)
        x, y = rollout_closed_loop(model, ndt, u, channel_noise=chan)
        return ad.tsum(x * cx) + ad.tsum(y * cy)

    return f, [p.data.copy() for p in ndt.parameters()]


def ndt_channel_case(seed: int, steps: int = 4, hidden: int = 3, trunk=(4,), feedback: bool = True,
                     channel: str = "ma1"):
    """Generator, channel and both potentials; gradient of the estimate in the generator parameters."""
    rng = np.random.default_rng(seed)
    ndt = NdtNetwork(1, 1, hidden, trunk, Constraint("average_power", 1.0), feedback=feedback, rng=rng)
    _randomise(ndt, rng, 2)
    net_y = DineNetwork(1, 3, (4,), 2, rng)
    net_xy = DineNetwork(2, 3, (4,), 2, rng)
    _randomise(net_y, rng, 2)
    _randomise(net_xy, rng, 2)
    model = ChannelModel(channel, 1.0, 0.5 if channel != "awgn" else 0.0)
    u = rng.random((3, steps, 1))
    chan = rng.standard_normal((3, steps, 1))
    refs = 2.0 * rng.random((3, steps, 2, 1)) - 1.0

    def f(*tensors):
        ndt.bind(tensors)
        x, y = rollout_closed_loop(model, ndt, u, channel_noise=chan)
        _, _, di = dine_objective(Batch(x, y, refs), net_y, net_xy, burn_in=0)
        return di

    return f, [p.data.copy() for p in ndt.parameters()]


CASES = {
    "lstm": lstm_case,
    "modified_lstm": modified_lstm_case,
    "dine": dine_case,
    "ndt_rollout": ndt_rollout_case,
    "ndt_channel": ndt_channel_case,
}


def run_checks(seed: int, step: float = 1e-6, cases=None) -> dict[str, float]:
    """Max relative error per case at ``seed``."""
    out = {}
    for name in cases or CASES:
        f, point = CASES[name](seed)
        out[name] = ad.gradient_check(f, point, step)
    return out
