"""Donsker-Varadhan objectives for directed and mutual information.

The directed information rate is estimated as the difference of two KL
estimates: one for the output conditioned on its own past, one for the
output conditioned on its past and the input history.  Each KL term is a DV
bound whose reference measure is uniform on the bounding box of the outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nets import DineNetwork, MineCritic, dine_forward

DEGENERATE_WIDTH = 1e-3


@dataclass(frozen=True)
class ReferenceLaw:
    """Uniform law on the box ``[lo_k, hi_k]``."""

    lo: np.ndarray
    hi: np.ndarray
    margin: float = 0.0

    def __post_init__(self):
        if np.any(self.hi < self.lo):
            raise ValueError("reference box has hi < lo")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def sample(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        """Draw an array of shape ``shape + (dim,)``."""
        u = rng.random(tuple(shape) + (self.dim,))
        return self.lo + (self.hi - self.lo) * u

    def contains(self, samples: np.ndarray) -> bool:
        return bool(np.all(samples >= self.lo) and np.all(samples <= self.hi))

    def log_volume(self) -> float:
        return float(np.sum(np.log(self.hi - self.lo)))


def fit_reference_law(y, margin: float = 0.0) -> ReferenceLaw:
    """Smallest per-dimension box holding ``y`` (last axis is the dimension), widened by ``margin``."""
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    flat = y.reshape(-1, y.shape[-1])
    if flat.shape[0] == 0:
        raise ValueError("cannot fit a reference law to zero samples")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    lo = flat.min(axis=0)
    hi = flat.max(axis=0)
    span = hi - lo
    lo = lo - margin * span
    hi = hi + margin * span
    flat_dims = span == 0
    pad = max(margin, DEGENERATE_WIDTH)
    lo = np.where(flat_dims, lo - pad, lo)
    hi = np.where(flat_dims, hi + pad, hi)
    return ReferenceLaw(lo, hi, float(margin))


# --------------------------------------------------------------------------
# objectives

def dv_kl_objective(g_joint, g_ref) -> Tensor:
    """``mean(g_joint) - log mean(exp(g_ref))``.

    ``g_ref`` carries one trailing axis of reference samples per joint
    sample; averaging the inner mean over joint samples equals a flat mean.
    """
    g_joint = ad.as_tensor(g_joint)
    g_ref = ad.as_tensor(g_ref)
    if g_ref.shape[:-1] != g_joint.shape or g_joint.size == 0 or g_ref.shape[-1] == 0:
        raise ShapeError("dv_kl_objective", g_joint.shape, g_ref.shape)
    return ad.mean(g_joint) - ad.log_mean_exp(g_ref)


def mine_objective(g_joint, g_neg) -> Tensor:
    """``mean(g_joint) - log mean(exp(g_neg))`` with in-batch negatives."""
    g_joint = ad.as_tensor(g_joint)
    g_neg = ad.as_tensor(g_neg)
    if g_joint.shape != g_neg.shape:
        raise ShapeError("mine_objective", g_joint.shape, g_neg.shape)
    if g_joint.size < 2:
        raise ValueError("MINE needs at least two samples to form negatives")
    return ad.mean(g_joint) - ad.log_mean_exp(g_neg)


def cyclic_negatives(y, shift: int = 1):
    """Pair each ``x`` with the ``y`` of another sample by a cyclic shift along axis 0."""
    if isinstance(y, Tensor):
        n = y.shape[0]
        idx = (np.arange(n) + shift) % n
        return ad.getitem(y, idx)
    return np.roll(np.asarray(y), -shift, axis=0)


@dataclass
class Batch:
    """``x``: ``(B, T, d_x)``; ``y``: ``(B, T, d_y)``; ``refs``: ``(B, T, K, d_y)``."""

    x: Tensor
    y: Tensor
    refs: Tensor

    def __post_init__(self):
        self.x = ad.as_tensor(self.x)
        self.y = ad.as_tensor(self.y)
        self.refs = ad.as_tensor(self.refs)
        b, t = self.y.shape[:2]
        if self.x.shape[:2] != (b, t) or self.refs.shape[:2] != (b, t) or self.refs.shape[3] != self.y.shape[2]:
            raise ShapeError("batch", self.x.shape, self.y.shape, self.refs.shape)


def joint_and_reference_inputs(batch: Batch) -> tuple[Tensor, Tensor]:
    """Inputs of the causally conditioned potential: ``(y_i, x_i)`` and ``(y~, x_i)``."""
    k = batch.refs.shape[2]
    joint = ad.concat([batch.y, batch.x], axis=-1)
    x_rep = ad.reshape(batch.x, batch.x.shape[:2] + (1, batch.x.shape[2]))
    x_rep = ad.concat([x_rep] * k, axis=2) if k > 1 else x_rep
    refs = ad.concat([batch.refs, x_rep], axis=-1)
    return joint, refs


def _dv_term(g_joint: Tensor, g_ref: Tensor, burn_in: int, pool: str) -> Tensor:
    g_joint = g_joint[:, burn_in:]
    g_ref = g_ref[:, burn_in:]
    if pool == "batch":
        return dv_kl_objective(g_joint, g_ref)
    if pool == "sequence":
        terms = [dv_kl_objective(g_joint[b], g_ref[b]) for b in range(g_joint.shape[0])]
        return ad.mean(ad.stack(terms))
    raise ValueError(f"unknown pooling {pool!r}")


def dine_objective(batch: Batch, net_y: DineNetwork, net_xy: DineNetwork,
                   burn_in: int = 5, pool: str = "batch") -> tuple[Tensor, Tensor, Tensor]:
    """Return ``(d_hat_y, d_hat_yx, d_hat_yx - d_hat_y)`` on one batch.

    The first ``burn_in`` steps of each sequence are dropped.  ``pool="batch"``
    forms one DV bound over all remaining samples of the batch;
    ``pool="sequence"`` forms one per sequence and averages them.
    """
    steps = batch.y.shape[1]
    if not 0 <= burn_in < steps:
        raise ValueError(f"burn_in={burn_in} leaves no samples in sequences of length {steps}")
    if net_y.input_dim != batch.y.shape[2] or net_xy.input_dim != batch.y.shape[2] + batch.x.shape[2]:
        raise ShapeError("dine_objective", batch.x.shape, batch.y.shape)
    gy, gy_ref = dine_forward(net_y, batch.y, batch.refs)
    joint, refs = joint_and_reference_inputs(batch)
    gxy, gxy_ref = dine_forward(net_xy, joint, refs)
    d_y = _dv_term(gy, gy_ref, burn_in, pool)
    d_yx = _dv_term(gxy, gxy_ref, burn_in, pool)
    return d_y, d_yx, d_yx - d_y


# --------------------------------------------------------------------------
# Monte-Carlo evaluation

@dataclass
class EstimateReport:
    estimate_nats: float
    stderr: float
    n_eval: int
    d_hat_y: float
    d_hat_yx: float
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"estimate_nats": self.estimate_nats, "stderr": self.stderr, "n_eval": self.n_eval,
                "d_hat_y": self.d_hat_y, "d_hat_yx": self.d_hat_yx, "seed": self.seed,
                "config": self.config}


def _dv_from_parts(g_joint: np.ndarray, ref_lme: np.ndarray) -> float:
    """DV value from joint potentials and per-sample ``log mean_j exp g_ref``."""
    m = ref_lme.max()
    return float(g_joint.mean() - (m + np.log(np.mean(np.exp(ref_lme - m)))))


def _row_lme(g_ref: np.ndarray) -> np.ndarray:
    m = g_ref.max(axis=-1, keepdims=True)
    return (m + np.log(np.mean(np.exp(g_ref - m), axis=-1, keepdims=True)))[..., 0]


def _block_stderr(values: Callable[[slice], float], n: int, block: int) -> float:
    n_blocks = n // block
    if n_blocks < 2:
        return float("nan")
    est = np.array([values(slice(k * block, (k + 1) * block)) for k in range(n_blocks)])
    return float(est.std(ddof=1) / np.sqrt(n_blocks))


Source = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


def monte_carlo_evaluate(networks, source: Source, n_eval: int, seed: int | None = 0, *,
                         ref_law: ReferenceLaw | None = None, burn_in: int = 5,
                         windows_per_draw: int = 64, block: int = 1000,
                         config: dict | None = None) -> EstimateReport:
    """Evaluate frozen networks on ``n_eval`` fresh time steps.

    ``networks`` is ``(net_y, net_xy)`` for directed information or a
    :class:`MineCritic`.  ``source(rng, count)`` returns ``count`` windows
    ``(x, y)`` of shape ``(count, T, d)``.  For recurrent potentials each
    window starts from a zero state and its first ``burn_in`` steps are not
    scored.  The standard error comes from the spread of per-block
    estimates over consecutive blocks of ``block`` scored steps.
    """
    if n_eval < 1:
        raise ValueError("n_eval must be at least 1")
    rng = np.random.default_rng(seed)
    config = dict(config or {})
    if isinstance(networks, MineCritic):
        return _evaluate_mine(networks, source, n_eval, rng, windows_per_draw, block, seed, config)
    net_y, net_xy = networks
    parts = {"gy": [], "ly": [], "gxy": [], "lxy": []}
    collected = 0
    with ad.no_grad():
        while collected < n_eval:
            x, y = source(rng, windows_per_draw)
            if burn_in >= y.shape[1]:
                raise ValueError("burn_in leaves no scored steps in evaluation windows")
            law = ref_law if ref_law is not None else fit_reference_law(y)
            refs = law.sample(rng, y.shape[:2] + (net_y.k_ref,))
            batch = Batch(x, y, refs)
            gy, gy_ref = dine_forward(net_y, batch.y, batch.refs)
            joint, jrefs = joint_and_reference_inputs(batch)
            gxy, gxy_ref = dine_forward(net_xy, joint, jrefs)
            parts["gy"].append(gy.data[:, burn_in:].reshape(-1))
            parts["ly"].append(_row_lme(gy_ref.data[:, burn_in:]).reshape(-1))
            parts["gxy"].append(gxy.data[:, burn_in:].reshape(-1))
            parts["lxy"].append(_row_lme(gxy_ref.data[:, burn_in:]).reshape(-1))
            collected += parts["gy"][-1].size
    arr = {k: np.concatenate(v)[:n_eval] for k, v in parts.items()}

    def di(sl):
        return (_dv_from_parts(arr["gxy"][sl], arr["lxy"][sl])
                - _dv_from_parts(arr["gy"][sl], arr["ly"][sl]))

    d_y = _dv_from_parts(arr["gy"], arr["ly"])
    d_yx = _dv_from_parts(arr["gxy"], arr["lxy"])
    return EstimateReport(d_yx - d_y, _block_stderr(di, n_eval, block), n_eval,
                          d_y, d_yx, seed, config)


def _evaluate_mine(critic: MineCritic, source: Source, n_eval: int, rng: np.random.Generator,
                   windows_per_draw: int, block: int, seed, config: dict) -> EstimateReport:
    xs, ys = [], []
    collected = 0
    while collected < n_eval:
        x, y = source(rng, windows_per_draw)
        xs.append(x.reshape(-1, x.shape[-1]))
        ys.append(y.reshape(-1, y.shape[-1]))
        collected += xs[-1].shape[0]
    x = np.concatenate(xs)[:n_eval]
    y = np.concatenate(ys)[:n_eval]
    if n_eval < 2:
        raise ValueError("MINE evaluation needs at least two samples")
    with ad.no_grad():
        gj = critic(x, y).data
        gn = critic(x, cyclic_negatives(y)).data

    def mi(sl):
        return _dv_from_parts(gj[sl], gn[sl])

    est = mi(slice(None))
    return EstimateReport(est, _block_stderr(mi, n_eval, block), n_eval, 0.0, est, seed, config)
