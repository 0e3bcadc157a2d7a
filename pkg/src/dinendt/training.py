"""Training loops: directed-information estimation and capacity estimation.

``train_dine`` fits the two potentials on a fixed data source.
``train_dine_ndt`` alternates potential updates with generator updates that
ascend the estimate through a differentiable channel rollout.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .baselines import ar1_ff_capacity, awgn_capacity, ma1_fb_capacity, ma1_ff_capacity, peak_awgn_upper_bound
from .channels import ChannelModel, rng_stream, rollout_closed_loop, rollout_open_loop
from .data import TrajectoryDataset
from .estimators import (Batch, EstimateReport, ReferenceLaw, cyclic_negatives, dine_objective,
                         fit_reference_law, mine_objective, monte_carlo_evaluate)
from .nets import Constraint, DineNetwork, MineCritic, Module, NdtNetwork, save_checkpoint
from .optim import Adam

# rng stream ids
_INIT, _DATA, _REFS, _EVAL = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid training configuration."""


class NumericalError(RuntimeError):
    """Non-finite objective during training."""


@dataclass
class TrainConfig:
    mode: str = "estimate"            # estimate | capacity
    estimator: str = "dine"           # dine | mine
    channel: str = "awgn"             # awgn | ma1 | ar1_mimo
    sigma2: float = 1.0
    alpha: float = 0.0
    dim: int = 0                      # 0: channel default
    dataset: str | None = None
    feedback: bool = False
    constraint: str = "average_power"  # average_power | peak_power | none
    power: float = 1.0                # P for average power, A for peak power
    batch_size: int = 32
    seq_len: int = 32
    k_ref: int = 16
    burn_in: int = 5
    dine_hidden: int = 50
    dine_head: tuple[int, ...] = (100, 50)
    ndt_hidden: int = 100
    ndt_trunk: tuple[int, ...] = (100, 100)
    mine_head: tuple[int, ...] = (100, 50)
    mine_samples: int = 1024
    lr_dine: float = 1e-3
    lr_ndt: float = 1e-4
    steps: int = 5000
    r_dine: int = 3
    r_ndt: int = 1
    eval_n: int = 100_000
    seed: int = 0
    ref_refresh: int = 100
    ref_margin: float = 0.0
    pool: str = "batch"               # batch | sequence
    noise_law: str = "uniform"        # generator noise: uniform on [0,1) | gaussian
    input_power: float = 1.0          # variance of i.i.d. Gaussian inputs when simulating data
    early_stop: bool = False
    log_every: int = 1

    def __post_init__(self):
        self.dine_head = tuple(int(v) for v in self.dine_head)
        self.ndt_trunk = tuple(int(v) for v in self.ndt_trunk)
        self.mine_head = tuple(int(v) for v in self.mine_head)
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)
        need(self.mode in ("estimate", "capacity"), f"mode must be estimate or capacity, got {self.mode!r}")
        need(self.estimator in ("dine", "mine"), f"estimator must be dine or mine, got {self.estimator!r}")
        need(self.channel in ("awgn", "ma1", "ar1_mimo"), f"unknown channel {self.channel!r}")
        need(self.constraint in ("average_power", "peak_power", "none"), f"unknown constraint {self.constraint!r}")
        need(self.pool in ("batch", "sequence"), f"unknown pooling {self.pool!r}")
        need(self.noise_law in ("uniform", "gaussian"), f"unknown noise law {self.noise_law!r}")
        need(self.batch_size >= 1 and self.seq_len >= 1, "batch_size and seq_len must be >= 1")
        need(self.steps >= 1, "steps must be >= 1")
        need(self.eval_n >= 1000, "eval_n must be >= 1000")
        need(self.k_ref >= 1, "k_ref must be >= 1")
        need(0 <= self.burn_in < self.seq_len, "burn_in must lie in [0, seq_len)")
        need(self.r_dine >= 1 and self.r_ndt >= 1, "alternation counts must be >= 1")
        need(self.ref_refresh >= 1, "ref_refresh must be >= 1")
        need(self.log_every >= 1, "log_every must be >= 1")
        need(self.mine_samples >= 2, "mine_samples must be >= 2")
        if self.constraint == "average_power":
            need(self.power >= 0, "average power must be >= 0")
        elif self.constraint == "peak_power":
            need(self.power > 0, "peak amplitude must be > 0")
        need(self.sigma2 >= 0, "sigma2 must be >= 0")
        need(abs(self.alpha) < 1, "|alpha| must be < 1")
        if self.feedback:
            need(self.mode == "capacity" and self.estimator == "dine",
                 "feedback needs capacity mode with the dine estimator")

    def channel_model(self) -> ChannelModel:
        try:
            return ChannelModel(self.channel, self.sigma2, self.alpha, self.dim)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def constraint_spec(self) -> Constraint:
        return Constraint(self.constraint, self.power)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k in ("dine_head", "ndt_trunk", "mine_head"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class CurvePoint:
    step: int
    d_hat_y: float
    d_hat_yx: float
    estimate_nats: float


@dataclass
class TrainResult:
    networks: dict[str, Module]
    curve: list[CurvePoint]
    report: EstimateReport
    ref_law: ReferenceLaw | None = None
    steps_run: int = 0
    extra: dict = field(default_factory=dict)


def baseline_for(config: TrainConfig) -> float | None:
    """Reference capacity for the configured channel, when one is available."""
    if config.mode != "capacity":
        return None
    p = config.power
    if config.channel == "awgn":
        if config.constraint == "average_power":
            return awgn_capacity(p, config.sigma2) if config.sigma2 > 0 else None
        if config.constraint == "peak_power":
            return peak_awgn_upper_bound(p, config.sigma2) if config.sigma2 > 0 else None
        return None
    if config.constraint != "average_power":
        return None
    if config.channel == "ma1":
        return ma1_fb_capacity(config.alpha, p) if config.feedback else ma1_ff_capacity(config.alpha, p)
    if config.channel == "ar1_mimo" and not config.feedback:
        return ar1_ff_capacity(config.alpha, p, config.channel_model().dim)
    return None


# --------------------------------------------------------------------------
# shared helpers

def _params(*modules: Module) -> list:
    out = []
    for m in modules:
        out.extend(m.parameters())
    return out


def _snapshot(modules: dict[str, Module]) -> dict[str, dict[str, np.ndarray]]:
    return {k: m.state_dict() for k, m in modules.items()}


def _guard(values, step: int, modules: dict[str, Module], last_good, checkpoint: str | Path | None):
    if all(np.isfinite(v) for v in values):
        return
    where = ""
    if checkpoint is not None and last_good is not None:
        for k, m in modules.items():
            m.load_state_dict(last_good[k])
        save_checkpoint(checkpoint, modules, {"step": step - 1, "reason": "non-finite objective"})
        where = f"; last finite parameters written to {checkpoint}"
    raise NumericalError(f"non-finite objective at step {step}: {values}{where}")


def _plateau(curve: list[CurvePoint], window: int = 500, tol: float = 1e-4) -> bool:
    if len(curve) < 2 * window:
        return False
    recent = np.mean([c.estimate_nats for c in curve[-window:]])
    before = np.mean([c.estimate_nats for c in curve[-2 * window:-window]])
    return abs(recent - before) < tol


def _make_dine_nets(config: TrainConfig, d_x: int, d_y: int, rng) -> tuple[DineNetwork, DineNetwork]:
    net_y = DineNetwork(d_y, config.dine_hidden, config.dine_head, config.k_ref, rng)
    net_xy = DineNetwork(d_y + d_x, config.dine_hidden, config.dine_head, config.k_ref, rng)
    return net_y, net_xy


def _draw_generator_noise(config: TrainConfig, rng, shape) -> np.ndarray:
    if config.noise_law == "uniform":
        return rng.random(shape)
    return rng.standard_normal(shape)


# --------------------------------------------------------------------------
# directed information estimation on a fixed source

Source = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


def dataset_source(dataset: TrajectoryDataset, length: int) -> Source:
    def draw(rng, count):
        return dataset.sample_windows(rng, count, length)
    return draw


def dataset_sweep(dataset: TrajectoryDataset, length: int) -> tuple[Source, int]:
    """Deterministic source yielding the dataset's non-overlapping windows in order."""
    xs, ys = dataset.tiled_windows(length)
    pos = [0]

    def draw(rng, count):
        idx = (pos[0] + np.arange(count)) % xs.shape[0]
        pos[0] += count
        return xs[idx], ys[idx]
    return draw, xs.shape[0]


def simulate_iid_dataset(config: TrainConfig, n_steps: int, seed: int | None = None,
                         independent: bool = False) -> TrajectoryDataset:
    """One trajectory of i.i.d. Gaussian inputs through the configured channel.

    With ``independent`` the outputs are an independent i.i.d. Gaussian
    sequence of the same variance instead.
    """
    model = config.channel_model()
    rng = rng_stream(config.seed if seed is None else seed, _DATA)
    x = np.sqrt(config.input_power) * rng.standard_normal((n_steps, model.dim))
    if independent:
        y = np.sqrt(config.input_power + model.sigma2) * rng.standard_normal((n_steps, model.dim))
    else:
        y = rollout_open_loop(model, x, rng).data
    return TrajectoryDataset.from_arrays(x, y)


def train_dine(config: TrainConfig, source: TrajectoryDataset | Source,
               progress: Callable[[CurvePoint], None] | None = None,
               checkpoint: str | Path | None = None) -> TrainResult:
    """Fit both potentials on ``source`` and evaluate the estimate.

    ``source`` is a dataset (random windows for training, a sweep of its
    windows for evaluation) or a callable ``(rng, count) -> (x, y)``.
    """
    init_rng = rng_stream(config.seed, _INIT)
    data_rng = rng_stream(config.seed, _DATA)
    ref_rng = rng_stream(config.seed, _REFS)
    if isinstance(source, TrajectoryDataset):
        draw = dataset_source(source, config.seq_len)
        d_x, d_y = source.d_x, source.d_y
        law = fit_reference_law(source.all_outputs(), config.ref_margin)
        fixed_law = True
    else:
        draw = source
        x0, y0 = draw(rng_stream(config.seed, _EVAL + 1), 1)
        d_x, d_y = x0.shape[-1], y0.shape[-1]
        law = None
        fixed_law = False
    net_y, net_xy = _make_dine_nets(config, d_x, d_y, init_rng)
    modules = {"dine_y": net_y, "dine_xy": net_xy}
    opt = Adam(_params(net_y, net_xy), lr=config.lr_dine, maximize=True)
    curve: list[CurvePoint] = []
    last_good = None
    step = 0
    for step in range(1, config.steps + 1):
        x, y = draw(data_rng, config.batch_size)
        if not fixed_law and (law is None or (step - 1) % config.ref_refresh == 0):
            law = fit_reference_law(y, config.ref_margin)
        refs = law.sample(ref_rng, y.shape[:2] + (config.k_ref,))
        d_y_t, d_yx_t, _ = dine_objective(Batch(x, y, refs), net_y, net_xy, config.burn_in, config.pool)
        d_y_v, d_yx_v = d_y_t.item(), d_yx_t.item()
        _guard((d_y_v, d_yx_v), step, modules, last_good, checkpoint)
        if checkpoint is not None:
            last_good = _snapshot(modules)
        opt.zero_grad()
        (d_y_t + d_yx_t).backward()
        opt.step()
        point = CurvePoint(step, d_y_v, d_yx_v, d_yx_v - d_y_v)
        if step % config.log_every == 0:
            curve.append(point)
            if progress is not None:
                progress(point)
        if config.early_stop and _plateau(curve):
            break
    if isinstance(source, TrajectoryDataset):
        sweep, n_windows = dataset_sweep(source, config.seq_len)
        n_eval = min(config.eval_n, n_windows * (config.seq_len - config.burn_in))
        eval_source = sweep
    else:
        n_eval = config.eval_n
        eval_source = draw
    report = monte_carlo_evaluate((net_y, net_xy), eval_source, n_eval, config.seed,
                                  ref_law=law, burn_in=config.burn_in, config=config.to_dict())
    return TrainResult(modules, curve, report, law, step)


# --------------------------------------------------------------------------
# capacity estimation

def _build_generator(config: TrainConfig, model: ChannelModel, rng) -> NdtNetwork:
    if config.estimator == "mine":
        return NdtNetwork(model.dim, model.dim, config.ndt_hidden, config.ndt_trunk,
                          config.constraint_spec(), feedback=False, recurrent=False, rng=rng,
                          noise_law=config.noise_law)
    return NdtNetwork(model.dim, model.dim, config.ndt_hidden, config.ndt_trunk,
                      config.constraint_spec(), feedback=config.feedback, recurrent=True, rng=rng,
                      noise_law=config.noise_law)


def closed_loop_source(config: TrainConfig, model: ChannelModel, ndt: NdtNetwork) -> Source:
    """Frozen generator plus channel as an evaluation source of ``(count, T, d)`` windows."""
    def draw(rng, count):
        u = _draw_generator_noise(config, rng, (count, config.seq_len, model.dim))
        with ad.no_grad():
            x, y = rollout_closed_loop(model, ndt, u, rng)
        return x.data, y.data
    return draw


def memoryless_source(config: TrainConfig, model: ChannelModel, ndt: NdtNetwork) -> Source:
    """Frozen memoryless generator; every window holds ``mine_samples`` independent uses."""
    def draw(rng, count):
        u = _draw_generator_noise(config, rng, (count * config.mine_samples, 1, model.dim))
        with ad.no_grad():
            x = ndt(u)
            y = rollout_open_loop(model, x, rng)
        return x.data.reshape(count, -1, model.dim), y.data.reshape(count, -1, model.dim)
    return draw


def train_dine_ndt(config: TrainConfig, progress: Callable[[CurvePoint], None] | None = None,
                   checkpoint: str | Path | None = None) -> TrainResult:
    """Alternate ``r_dine`` estimator steps and ``r_ndt`` generator steps for ``steps`` iterations."""
    if config.mode != "capacity":
        raise ConfigError("train_dine_ndt needs capacity mode")
    if config.estimator == "mine":
        return _train_mine_ndt(config, progress, checkpoint)
    model = config.channel_model()
    init_rng = rng_stream(config.seed, _INIT)
    data_rng = rng_stream(config.seed, _DATA)
    ref_rng = rng_stream(config.seed, _REFS)
    net_y, net_xy = _make_dine_nets(config, model.dim, model.dim, init_rng)
    ndt = _build_generator(config, model, init_rng)
    modules = {"dine_y": net_y, "dine_xy": net_xy, "ndt": ndt}
    opt_dine = Adam(_params(net_y, net_xy), lr=config.lr_dine, maximize=True)
    opt_ndt = Adam(ndt.parameters(), lr=config.lr_ndt, maximize=True)
    cycle = config.r_dine + config.r_ndt
    curve: list[CurvePoint] = []
    law = None
    last_good = None
    shape = (config.batch_size, config.seq_len, model.dim)
    step = 0
    for step in range(1, config.steps + 1):
        generator_turn = (step - 1) % cycle >= config.r_dine
        u = _draw_generator_noise(config, data_rng, shape)
        chan = data_rng.standard_normal(shape)
        if generator_turn:
            x, y = rollout_closed_loop(model, ndt, u, channel_noise=chan)
        else:
            with ad.no_grad():
                x, y = rollout_closed_loop(model, ndt, u, channel_noise=chan)
            x, y = x.detach(), y.detach()
        if law is None or (step - 1) % config.ref_refresh == 0:
            law = fit_reference_law(y.data, config.ref_margin)
        refs = law.sample(ref_rng, shape[:2] + (config.k_ref,))
        d_y_t, d_yx_t, di_t = dine_objective(Batch(x, y, refs), net_y, net_xy, config.burn_in, config.pool)
        d_y_v, d_yx_v = d_y_t.item(), d_yx_t.item()
        _guard((d_y_v, d_yx_v), step, modules, last_good, checkpoint)
        if checkpoint is not None:
            last_good = _snapshot(modules)
        if generator_turn:
            opt_ndt.zero_grad()
            di_t.backward()
            opt_ndt.step()
        else:
            opt_dine.zero_grad()
            (d_y_t + d_yx_t).backward()
            opt_dine.step()
        point = CurvePoint(step, d_y_v, d_yx_v, d_yx_v - d_y_v)
        if step % config.log_every == 0:
            curve.append(point)
            if progress is not None:
                progress(point)
        if config.early_stop and _plateau(curve):
            break
    source = closed_loop_source(config, model, ndt)
    report = monte_carlo_evaluate((net_y, net_xy), source, config.eval_n, config.seed,
                                  ref_law=law, burn_in=config.burn_in, config=config.to_dict())
    return TrainResult(modules, curve, report, law, step)


def _train_mine_ndt(config: TrainConfig, progress, checkpoint) -> TrainResult:
    model = config.channel_model()
    init_rng = rng_stream(config.seed, _INIT)
    data_rng = rng_stream(config.seed, _DATA)
    critic = MineCritic(model.dim, model.dim, config.mine_head, init_rng)
    ndt = _build_generator(config, model, init_rng)
    modules = {"critic": critic, "ndt": ndt}
    opt_critic = Adam(critic.parameters(), lr=config.lr_dine, maximize=True)
    opt_ndt = Adam(ndt.parameters(), lr=config.lr_ndt, maximize=True)
    cycle = config.r_dine + config.r_ndt
    curve: list[CurvePoint] = []
    last_good = None
    n = config.mine_samples
    step = 0
    for step in range(1, config.steps + 1):
        generator_turn = (step - 1) % cycle >= config.r_dine
        u = _draw_generator_noise(config, data_rng, (n, 1, model.dim))
        chan = data_rng.standard_normal((n, 1, model.dim))
        if generator_turn:
            x = ndt(u)
            y = rollout_open_loop(model, x, noise=chan)
        else:
            with ad.no_grad():
                x = ndt(u)
                y = rollout_open_loop(model, x, noise=chan)
            x, y = x.detach(), y.detach()
        x = ad.reshape(x, (n, model.dim))
        y = ad.reshape(y, (n, model.dim))
        obj = mine_objective(critic(x, y), critic(x, cyclic_negatives(y)))
        value = obj.item()
        _guard((value,), step, modules, last_good, checkpoint)
        if checkpoint is not None:
            last_good = _snapshot(modules)
        opt = opt_ndt if generator_turn else opt_critic
        opt.zero_grad()
        obj.backward()
        opt.step()
        point = CurvePoint(step, 0.0, value, value - 0.0)
        if step % config.log_every == 0:
            curve.append(point)
            if progress is not None:
                progress(point)
        if config.early_stop and _plateau(curve):
            break
    source = memoryless_source(config, model, ndt)
    report = monte_carlo_evaluate(critic, source, config.eval_n, config.seed,
                                  windows_per_draw=max(1, -(-config.eval_n // n)),
                                  config=config.to_dict())
    return TrainResult(modules, curve, report, None, step)


def run(config: TrainConfig, dataset: TrajectoryDataset | None = None, **kwargs) -> tuple[TrainResult, float]:
    """Dispatch on mode; returns the result and the wall time in seconds."""
    start = time.perf_counter()
    if config.mode == "capacity":
        result = train_dine_ndt(config, **kwargs)
    else:
        if dataset is None:
            raise ConfigError("estimate mode needs a dataset")
        result = train_dine(config, dataset, **kwargs)
    return result, time.perf_counter() - start
