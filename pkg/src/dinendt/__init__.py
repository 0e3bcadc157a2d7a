"""Recurrent neural estimation of directed information and capacity for continuous channels with memory."""

from .autodiff import ShapeError, Tensor, gradient_check, log_mean_exp, no_grad
from .baselines import (ar1_ff_capacity, awgn_capacity, kr_gaussian_inverse, ma1_fb_capacity, ma1_ff_capacity,
                        peak_awgn_upper_bound, wasserstein2_1d, water_fill)
from .channels import ChannelModel, channel_step, rollout_closed_loop, rollout_open_loop
from .data import DatasetError, TrajectoryDataset, ingest_csv
from .estimators import EstimateReport, dine_objective, dv_kl_objective, mine_objective, monte_carlo_evaluate
from .kernels import BACKEND
from .nets import Constraint, DineNetwork, MineCritic, NdtNetwork
from .training import ConfigError, NumericalError, TrainConfig, run, train_dine, train_dine_ndt

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChannelModel", "ConfigError", "Constraint", "DatasetError", "DineNetwork", "EstimateReport",
    "MineCritic", "NdtNetwork", "NumericalError", "ShapeError", "Tensor", "TrainConfig", "TrajectoryDataset",
    "ar1_ff_capacity", "awgn_capacity", "channel_step", "dine_objective", "dv_kl_objective", "gradient_check",
    "ingest_csv", "kr_gaussian_inverse", "log_mean_exp", "ma1_fb_capacity", "ma1_ff_capacity", "mine_objective",
    "monte_carlo_evaluate", "no_grad", "peak_awgn_upper_bound", "rollout_closed_loop", "rollout_open_loop", "run",
    "train_dine", "train_dine_ndt", "wasserstein2_1d", "water_fill",
]
