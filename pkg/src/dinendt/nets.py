"""Recurrent and feed-forward networks for the estimators and the input generator.

Shapes follow a batch-major convention at the public surface: sequences are
``(B, T, d)`` and reference samples ``(B, T, K, d)``.  Unbatched ``(T, d)``
inputs are accepted and returned without the batch axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

CHECKPOINT_FORMAT = "dinendt-params"
CHECKPOINT_VERSION = 1


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


INITS = ("uniform", "glorot")


class Module:
    """Anything with named parameters."""

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"load {name}", p.shape, arr.shape)
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def bind(self, tensors) -> None:
        """Replace the parameter tensors, in ``named_parameters`` order."""
        raise NotImplementedError


# --------------------------------------------------------------------------
# LSTM

@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, hidden: int, batch_shape: tuple[int, ...] = ()) -> "LstmState":
        z = np.zeros(batch_shape + (hidden,))
        return cls(Tensor(z), Tensor(z.copy()))


class LstmParams(Module):
    """Weights of a single LSTM layer.

    ``weight`` stacks the input and recurrent matrices, shape
    ``(input_dim + hidden, 4 * hidden)``, gate blocks ordered input, forget,
    candidate, output.
    """

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator | None = None,
                 forget_bias: float = 1.0, init: str = "uniform"):
        rng = rng if rng is not None else np.random.default_rng(0)
        if init not in INITS:
            raise ValueError(f"unknown init {init!r}")
        self.input_dim = int(input_dim)
        self.hidden = int(hidden)
        fan_in = self.input_dim + self.hidden
        if init == "glorot":
            self.weight = _glorot(rng, fan_in, 4 * self.hidden, (fan_in, 4 * self.hidden))
            self.bias = Tensor(np.zeros(4 * self.hidden), requires_grad=True)
        else:
            self.weight = _uniform(rng, fan_in, (fan_in, 4 * self.hidden))
            self.bias = _uniform(rng, fan_in, (4 * self.hidden,))
        self.bias.data[self.hidden:2 * self.hidden] = forget_bias

    def named_parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def bind(self, tensors) -> None:
        self.weight, self.bias = tensors

    def gate_blocks(self):
        """Split into ``(W_input, W_forget, W_candidate, W_output)`` views, each ``(D + H, H)``."""
        hid = self.hidden
        return tuple(self.weight.data[:, k * hid:(k + 1) * hid] for k in range(4))


def lstm_step(params: LstmParams, x, state: LstmState) -> LstmState:
    """Single LSTM update composed from elementary differentiable ops."""
    x = ad.as_tensor(x)
    if x.shape[-1] != params.input_dim:
        raise ShapeError("lstm_step", x.shape, (params.input_dim,))
    hid = params.hidden
    d = params.input_dim
    w, b = params.weight, params.bias
    z = ad.matmul(x, w[:d]) + ad.matmul(state.h, w[d:]) + b
    gi = ad.sigmoid(z[..., :hid])
    gf = ad.sigmoid(z[..., hid:2 * hid])
    gg = ad.tanh(z[..., 2 * hid:3 * hid])
    go = ad.sigmoid(z[..., 3 * hid:])
    c = gf * state.c + gi * gg
    h = go * ad.tanh(c)
    return LstmState(h, c)


def lstm_cell_fused(params: LstmParams, x, state: LstmState) -> LstmState:
    """Same update as :func:`lstm_step` recorded as one graph node."""
    x = ad.as_tensor(x)
    if x.shape[-1] != params.input_dim:
        raise ShapeError("lstm_step", x.shape, (params.input_dim,))
    hc = ad.lstm_cell(x, state.h, state.c, params.weight, params.bias)
    hid = params.hidden
    return LstmState(hc[..., :hid], hc[..., hid:])


def modified_lstm_step(params: LstmParams, joint_input, ref_inputs, state: LstmState):
    """Advance on the joint input and branch once per reference input.

    Returns ``(next_state, joint_state, ref_states)``.  ``ref_states`` is an
    :class:`LstmState` whose tensors carry an extra reference axis just before
    the feature axis.  Only the joint branch is propagated, so
    ``next_state`` is ``joint_state``.
    """
    joint_input = ad.as_tensor(joint_input)
    ref_inputs = ad.as_tensor(ref_inputs)
    if ref_inputs.shape[-1] != joint_input.shape[-1]:
        raise ShapeError("modified_lstm_step", joint_input.shape, ref_inputs.shape)
    joint_state = lstm_cell_fused(params, joint_input, state)
    # broadcast the shared previous state over the reference axis
    h_prev = ad.reshape(state.h, state.h.shape[:-1] + (1, params.hidden))
    c_prev = ad.reshape(state.c, state.c.shape[:-1] + (1, params.hidden))
    ref_states = lstm_cell_fused(params, ref_inputs, LstmState(h_prev, c_prev))
    return joint_state, joint_state, ref_states


# --------------------------------------------------------------------------
# Fully connected

ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh, "sigmoid": ad.sigmoid, "linear": None}


class MlpParams(Module):
    """A stack of affine layers, ReLU on hidden layers and linear output by default."""

    def __init__(self, sizes: list[int] | tuple[int, ...], rng: np.random.Generator | None = None,
                 hidden_activation: str = "relu", output_activation: str = "linear", init: str = "uniform"):
        rng = rng if rng is not None else np.random.default_rng(0)
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if init not in INITS:
            raise ValueError(f"unknown init {init!r}")
        self.sizes = [int(s) for s in sizes]
        self.layers: list[tuple[Tensor, Tensor, str]] = []
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            act = output_activation if k == len(self.sizes) - 2 else hidden_activation
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            if init == "glorot":
                w, b = _glorot(rng, n_in, n_out, (n_in, n_out)), Tensor(np.zeros(n_out), requires_grad=True)
            else:
                w, b = _uniform(rng, n_in, (n_in, n_out)), _uniform(rng, n_in, (n_out,))
            self.layers.append((w, b, act))

    def named_parameters(self):
        for k, (w, b, _) in enumerate(self.layers):
            yield f"layer{k}.weight", w
            yield f"layer{k}.bias", b

    def bind(self, tensors) -> None:
        tensors = list(tensors)
        self.layers = [(tensors[2 * k], tensors[2 * k + 1], act) for k, (_, _, act) in enumerate(self.layers)]

    def __call__(self, x) -> Tensor:
        x = ad.as_tensor(x)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError("mlp", x.shape, (self.sizes[0],))
        for w, b, act in self.layers:
            x = ad.matmul(x, w) + b
            fn = ACTIVATIONS[act]
            if fn is not None:
                x = fn(x)
        return x


# --------------------------------------------------------------------------
# DINE potentials

class DineNetwork(Module):
    """Modified LSTM followed by a fully connected head shared by joint and reference states.

    ``input_dim`` is ``d_y`` for the output-only potential and ``d_y + d_x``
    for the causally conditioned one.
    """

    def __init__(self, input_dim: int, hidden: int = 50, head: tuple[int, ...] = (100, 50),
                 k_ref: int = 16, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = int(input_dim)
        self.k_ref = int(k_ref)
        self.lstm = LstmParams(self.input_dim, hidden, rng)
        self.head = MlpParams([hidden, *head, 1], rng)

    @property
    def hidden(self) -> int:
        return self.lstm.hidden

    def named_parameters(self):
        for n, p in self.lstm.named_parameters():
            yield f"lstm.{n}", p
        for n, p in self.head.named_parameters():
            yield f"head.{n}", p

    def bind(self, tensors) -> None:
        tensors = list(tensors)
        self.lstm.bind(tensors[:2])
        self.head.bind(tensors[2:])

    def __call__(self, joint_seq, ref_seq):
        return dine_forward(self, joint_seq, ref_seq)


def dine_forward(net: DineNetwork, joint_seq, ref_seq):
    """Potentials for joint samples ``(B, T)`` and reference samples ``(B, T, K)``.

    The recursion is driven by the joint inputs only; each reference sample at
    time ``i`` is scored from the joint state at ``i - 1``.
    """
    joint_seq = ad.as_tensor(joint_seq)
    ref_seq = ad.as_tensor(ref_seq)
    unbatched = joint_seq.ndim == 2
    if unbatched:
        joint_seq = ad.reshape(joint_seq, (1,) + joint_seq.shape)
        ref_seq = ad.reshape(ref_seq, (1,) + ref_seq.shape)
    if joint_seq.ndim != 3 or ref_seq.ndim != 4:
        raise ShapeError("dine_forward", joint_seq.shape, ref_seq.shape)
    batch, steps, d = joint_seq.shape
    if steps == 0:
        raise ValueError("dine_forward needs at least one time step")
    if d != net.input_dim or ref_seq.shape[:2] != (batch, steps) or ref_seq.shape[3] != d:
        raise ShapeError("dine_forward", joint_seq.shape, ref_seq.shape)
    hid = net.hidden
    xs = ad.transpose(joint_seq, (1, 0, 2))                         # (T, B, d)
    hc = ad.lstm_sequence(xs, net.lstm.weight, net.lstm.bias)       # (T, B, 2H)
    zeros = Tensor(np.zeros((1, batch, 2 * hid)))
    prev = ad.concat([zeros, hc[:-1]], axis=0) if steps > 1 else zeros
    prev = ad.reshape(prev, (steps, batch, 1, 2 * hid))
    refs = ad.transpose(ref_seq, (1, 0, 2, 3))                      # (T, B, K, d)
    ref_hc = ad.lstm_cell(refs, prev[..., :hid], prev[..., hid:], net.lstm.weight, net.lstm.bias)
    g_joint = net.head(hc[..., :hid])                               # (T, B, 1)
    g_ref = net.head(ref_hc[..., :hid])                             # (T, B, K, 1)
    g_joint = ad.transpose(ad.reshape(g_joint, (steps, batch)), (1, 0))
    g_ref = ad.transpose(ad.reshape(g_ref, g_ref.shape[:3]), (1, 0, 2))
    if unbatched:
        g_joint = ad.reshape(g_joint, (steps,))
        g_ref = ad.reshape(g_ref, g_ref.shape[1:])
    return g_joint, g_ref


class MineCritic(Module):
    """Memoryless potential ``T(x, y)``: an MLP on the concatenated pair."""

    def __init__(self, d_x: int, d_y: int, head: tuple[int, ...] = (100, 50),
                 rng: np.random.Generator | None = None):
        self.d_x = int(d_x)
        self.d_y = int(d_y)
        self.mlp = MlpParams([self.d_x + self.d_y, *head, 1], rng)

    def named_parameters(self):
        for n, p in self.mlp.named_parameters():
            yield f"mlp.{n}", p

    def bind(self, tensors) -> None:
        self.mlp.bind(tensors)

    def __call__(self, x, y) -> Tensor:
        out = self.mlp(ad.concat([ad.as_tensor(x), ad.as_tensor(y)], axis=-1))
        return ad.reshape(out, out.shape[:-1])


# --------------------------------------------------------------------------
# Input constraints and the generator

@dataclass(frozen=True)
class Constraint:
    kind: str = "average_power"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("average_power", "peak_power", "none"):
            raise ValueError(f"unknown constraint {self.kind!r}")
        if self.kind == "average_power" and self.value < 0:
            raise ValueError(f"average power must be >= 0, got {self.value}")
        if self.kind == "peak_power" and self.value <= 0:
            raise ValueError(f"peak amplitude must be > 0, got {self.value}")


def apply_constraint(raw, constraint: Constraint) -> Tensor:
    """Constrain one time slice ``(B, d)`` of channel inputs.

    Average power rescales the slice so that the batch mean of ``||x||^2``
    equals the budget exactly; an all-zero slice maps to zeros.
    """
    raw = ad.as_tensor(raw)
    if raw.shape[0] == 0:
        raise ValueError("constraint layer needs a nonempty batch")
    if constraint.kind == "none":
        return raw
    if constraint.kind == "peak_power":
        return ad.tanh(raw) * constraint.value
    energy = ad.mean(ad.tsum(raw * raw, axis=-1), axis=0)          # batch mean of ||x||^2
    zero = energy.data == 0.0
    safe = energy + Tensor(np.where(zero, 1.0, 0.0))
    scale = ad.power(safe, -0.5) * (np.sqrt(constraint.value) * np.where(zero, 0.0, 1.0))
    return raw * scale


def constraint_layer(raw, constraint: Constraint) -> Tensor:
    """Apply :func:`apply_constraint` to every time slice of ``(B, T, d)`` inputs."""
    raw = ad.as_tensor(raw)
    if raw.ndim != 3:
        raise ShapeError("constraint_layer", raw.shape, ("B", "T", "d"))
    if raw.shape[0] == 0:
        raise ValueError("constraint layer needs a nonempty batch")
    if constraint.kind == "none":
        return raw
    if constraint.kind == "peak_power":
        return ad.tanh(raw) * constraint.value
    energy = ad.mean(ad.tsum(raw * raw, axis=2, keepdims=True), axis=0, keepdims=True)
    zero = energy.data == 0.0
    safe = energy + Tensor(np.where(zero, 1.0, 0.0))
    scale = ad.power(safe, -0.5) * (np.sqrt(constraint.value) * np.where(zero, 0.0, 1.0))
    return raw * scale


@dataclass
class NdtState:
    lstm: LstmState | None
    x_prev: Tensor
    y_prev: Tensor | None


# (shift, scale) mapping each generator noise law to zero mean and unit variance
NOISE_STANDARDISE = {"uniform": (0.5, np.sqrt(12.0)), "gaussian": (0.0, 1.0)}


class NdtNetwork(Module):
    """Generator of channel inputs from i.i.d. noise.

    With ``recurrent=True`` an LSTM consumes ``(U_i, X_{i-1}[, Y_{i-1}])`` and a
    fully connected trunk maps its state to raw inputs; with
    ``recurrent=False`` the map is a memoryless MLP of ``U_i``.  The last
    layer applies the input constraint.

    Noise enters standardised to zero mean and unit variance for its law
    (``noise_law``), and weights are Glorot-uniform with zero biases.  A
    common offset in the raw outputs would otherwise dominate the batch power
    normalisation and start training from a near-constant input.
    """

    def __init__(self, d_x: int, d_y: int | None = None, hidden: int = 100,
                 trunk: tuple[int, ...] = (100, 100), constraint: Constraint | None = None,
                 feedback: bool = False, recurrent: bool = True,
                 rng: np.random.Generator | None = None, noise_law: str = "uniform"):
        rng = rng if rng is not None else np.random.default_rng(0)
        if noise_law not in NOISE_STANDARDISE:
            raise ValueError(f"unknown noise law {noise_law!r}")
        self.noise_law = noise_law
        self.d_x = int(d_x)
        self.d_y = int(d_y if d_y is not None else d_x)
        self.feedback = bool(feedback)
        self.recurrent = bool(recurrent)
        if self.feedback and not self.recurrent:
            raise ValueError("feedback requires a recurrent generator")
        self.constraint = constraint if constraint is not None else Constraint()
        if self.recurrent:
            in_dim = 2 * self.d_x + (self.d_y if self.feedback else 0)
            self.lstm: LstmParams | None = LstmParams(in_dim, hidden, rng, init="glorot")
            self.trunk = MlpParams([hidden, *trunk, self.d_x], rng, init="glorot")
        else:
            self.lstm = None
            self.trunk = MlpParams([self.d_x, *trunk, self.d_x], rng, init="glorot")

    def standardise(self, u) -> Tensor:
        shift, scale = NOISE_STANDARDISE[self.noise_law]
        return (ad.as_tensor(u) - shift) * scale

    def named_parameters(self):
        if self.lstm is not None:
            for n, p in self.lstm.named_parameters():
                yield f"lstm.{n}", p
        for n, p in self.trunk.named_parameters():
            yield f"trunk.{n}", p

    def bind(self, tensors) -> None:
        tensors = list(tensors)
        if self.lstm is not None:
            self.lstm.bind(tensors[:2])
            tensors = tensors[2:]
        self.trunk.bind(tensors)

    def initial_state(self, batch: int) -> NdtState:
        lstm = LstmState.zeros(self.lstm.hidden, (batch,)) if self.lstm is not None else None
        y0 = Tensor(np.zeros((batch, self.d_y))) if self.feedback else None
        return NdtState(lstm, Tensor(np.zeros((batch, self.d_x))), y0)

    def step(self, state: NdtState, u, y_prev=None) -> tuple[Tensor, NdtState]:
        """Emit the constrained input for one time step from noise ``u`` of shape ``(B, d_x)``."""
        u = ad.as_tensor(u)
        if u.shape[-1] != self.d_x:
            raise ShapeError("ndt step", u.shape, (self.d_x,))
        u = self.standardise(u)
        if not self.recurrent:
            x = apply_constraint(self.trunk(u), self.constraint)
            return x, state
        if self.feedback:
            if y_prev is None:
                raise ValueError("feedback generator needs the previous channel output")
            y_prev = ad.as_tensor(y_prev)
            inp = ad.concat([u, state.x_prev, y_prev], axis=-1)
        else:
            if y_prev is not None:
                raise ValueError("feedforward generator does not take channel outputs")
            inp = ad.concat([u, state.x_prev], axis=-1)
        lstm_state = lstm_cell_fused(self.lstm, inp, state.lstm)
        x = apply_constraint(self.trunk(lstm_state.h), self.constraint)
        return x, NdtState(lstm_state, x, y_prev)

    def __call__(self, noise_seq, feedback_seq=None):
        return ndt_forward(self, noise_seq, feedback_seq)


def ndt_forward(net: NdtNetwork, noise_seq, feedback_seq=None) -> Tensor:
    """Open-loop generation of ``(B, T, d_x)`` inputs.

    ``feedback_seq[:, i]`` must hold the channel output at time ``i - 1``
    (zeros at ``i = 0``) and is required exactly when ``net.feedback``.
    """
    noise_seq = ad.as_tensor(noise_seq)
    unbatched = noise_seq.ndim == 2
    if unbatched:
        noise_seq = ad.reshape(noise_seq, (1,) + noise_seq.shape)
    if (feedback_seq is not None) != net.feedback:
        raise ValueError("feedback_seq must be given iff the generator uses feedback")
    if feedback_seq is not None:
        feedback_seq = ad.as_tensor(feedback_seq)
        if unbatched:
            feedback_seq = ad.reshape(feedback_seq, (1,) + feedback_seq.shape)
        if feedback_seq.shape[:2] != noise_seq.shape[:2]:
            raise ShapeError("ndt_forward", noise_seq.shape, feedback_seq.shape)
    batch, steps, _ = noise_seq.shape
    if not net.recurrent:
        out = net.trunk(net.standardise(noise_seq))
        out = constraint_layer(out, net.constraint)
    else:
        state = net.initial_state(batch)
        xs = []
        for t in range(steps):
            y_prev = feedback_seq[:, t] if feedback_seq is not None else None
            x, state = net.step(state, noise_seq[:, t], y_prev)
            xs.append(x)
        out = ad.stack(xs, axis=1)
    if unbatched:
        out = ad.reshape(out, out.shape[1:])
    return out


# --------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path: str | Path, modules: dict[str, Module], meta: dict | None = None) -> None:
    """Write parameters as JSON ``{format, version, meta, params: {name: {shape, data}}}``."""
    params = {}
    for prefix, module in modules.items():
        for name, p in module.named_parameters():
            params[f"{prefix}.{name}"] = {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "meta": meta or {}, "params": params}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path, modules: dict[str, Module]) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = doc["params"]
    for prefix, module in modules.items():
        state = {}
        for name, _ in module.named_parameters():
            entry = params[f"{prefix}.{name}"]
            state[name] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        module.load_state_dict(state)
    return doc.get("meta", {})
