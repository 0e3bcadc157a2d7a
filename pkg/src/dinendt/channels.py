"""Additive Gaussian channels with memory and their rollouts.

Noise enters additively and is drawn outside the graph, so gradients reach
the channel input along the pathwise (reparametrized) route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nets import NdtNetwork

KINDS = ("awgn", "ma1", "ar1_mimo")


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``."""
    return np.random.default_rng([int(stream), int(seed)])


@dataclass(frozen=True)
class ChannelModel:
    """``awgn``: ``y = x + sigma n``; ``ma1``: ``z = alpha n_prev + n``; ``ar1_mimo``: ``z = alpha z_prev + n``."""

    kind: str = "awgn"
    sigma2: float = 1.0
    alpha: float = 0.0
    dim: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel {self.kind!r}; expected one of {KINDS}")
        if self.kind == "awgn" and not self.sigma2 >= 0:
            raise ValueError(f"noise variance must be >= 0, got {self.sigma2}")
        if self.kind != "awgn" and not abs(self.alpha) < 1:
            raise ValueError(f"|alpha| must be < 1 for a stationary channel, got {self.alpha}")
        if self.dim == 0:
            object.__setattr__(self, "dim", 4 if self.kind == "ar1_mimo" else 1)
        if self.dim < 1:
            raise ValueError("channel dimension must be positive")

    @property
    def d_x(self) -> int:
        return self.dim

    @property
    def d_y(self) -> int:
        return self.dim

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "awgn":
            out["sigma2"] = self.sigma2
        else:
            out["alpha"] = self.alpha
        return out


@dataclass
class ChannelState:
    """Latent noise memory: previous white noise (ma1) or previous colored noise (ar1)."""

    latent: np.ndarray | None = None


def initial_state(model: ChannelModel, batch_shape: tuple[int, ...] = ()) -> ChannelState:
    if model.kind == "awgn":
        return ChannelState(None)
    return ChannelState(np.zeros(tuple(batch_shape) + (model.dim,)))


def channel_step(model: ChannelModel, state: ChannelState, x, rng: np.random.Generator | None = None,
                 noise: np.ndarray | None = None) -> tuple[Tensor, ChannelState]:
    """Pass one input through the channel.

    ``noise`` (standard normal, same shape as ``x``) may be injected;
    otherwise it is drawn from ``rng``.
    """
    x = ad.as_tensor(x)
    if x.shape[-1] != model.dim:
        raise ShapeError("channel_step", x.shape, (model.dim,))
    if noise is None:
        if rng is None:
            raise ValueError("channel_step needs an rng or injected noise")
        noise = rng.standard_normal(x.shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x.shape:
        raise ShapeError("channel_step", x.shape, noise.shape)
    if model.kind == "awgn":
        return x + np.sqrt(model.sigma2) * noise, state
    prev = state.latent if state.latent is not None else np.zeros(x.shape)
    if prev.shape != x.shape:
        raise ShapeError("channel_step", x.shape, prev.shape)
    z = model.alpha * prev + noise
    latent = noise if model.kind == "ma1" else z
    return x + z, ChannelState(latent)


def noise_process(model: ChannelModel, white: np.ndarray) -> np.ndarray:
    """Map white noise ``(..., T, d)`` to the channel's additive noise from a zero state."""
    white = np.asarray(white, dtype=np.float64)
    if model.kind == "awgn":
        return np.sqrt(model.sigma2) * white
    axis = white.ndim - 2
    if model.kind == "ma1":
        return lfilter([1.0, model.alpha], [1.0], white, axis=axis)
    return lfilter([1.0], [1.0, -model.alpha], white, axis=axis)


def draw_white(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.standard_normal(shape)


def rollout_open_loop(model: ChannelModel, x_seq, rng: np.random.Generator | None = None,
                      noise: np.ndarray | None = None) -> Tensor:
    """Outputs for a whole input sequence ``(..., T, d)`` starting from a zero channel state."""
    x_seq = ad.as_tensor(x_seq)
    if x_seq.ndim < 2 or x_seq.shape[-1] != model.dim:
        raise ShapeError("rollout_open_loop", x_seq.shape, (model.dim,))
    if noise is None:
        if rng is None:
            raise ValueError("rollout needs an rng or injected noise")
        noise = draw_white(rng, x_seq.shape)
    if np.shape(noise) != x_seq.shape:
        raise ShapeError("rollout_open_loop", x_seq.shape, np.shape(noise))
    return x_seq + noise_process(model, noise)


def rollout_closed_loop(model: ChannelModel, ndt: NdtNetwork, noise_seq,
                        rng: np.random.Generator | None = None,
                        channel_noise: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Interleave generator and channel over ``(B, T, d_x)`` generator noise.

    At step ``i`` the generator sees ``U_i``, ``X_{i-1}`` and, with feedback,
    ``Y_{i-1}``; the channel then emits ``Y_i``.  The graph is differentiable
    in the generator parameters.
    """
    noise_seq = np.asarray(noise_seq.data if isinstance(noise_seq, Tensor) else noise_seq, dtype=np.float64)
    if noise_seq.ndim != 3:
        raise ShapeError("rollout_closed_loop", noise_seq.shape, ("B", "T", "d_x"))
    if ndt.d_x != model.dim or ndt.d_y != model.dim:
        raise ShapeError("rollout_closed_loop", (ndt.d_x, ndt.d_y), (model.dim,))
    batch, steps, _ = noise_seq.shape
    shape = (batch, steps, model.dim)
    if channel_noise is None:
        if rng is None:
            raise ValueError("rollout needs an rng or injected channel noise")
        channel_noise = draw_white(rng, shape)
    if np.shape(channel_noise) != shape:
        raise ShapeError("rollout_closed_loop", shape, np.shape(channel_noise))
    if not ndt.feedback:
        x_seq = ndt(noise_seq)
        return x_seq, rollout_open_loop(model, x_seq, noise=channel_noise)
    state = ndt.initial_state(batch)
    ch_state = initial_state(model, (batch,))
    y_prev = Tensor(np.zeros((batch, model.dim)))
    xs, ys = [], []
    for t in range(steps):
        x, state = ndt.step(state, noise_seq[:, t], y_prev)
        y_prev, ch_state = channel_step(model, ch_state, x, noise=channel_noise[:, t])
        xs.append(x)
        ys.append(y_prev)
    return ad.stack(xs, axis=1), ad.stack(ys, axis=1)
