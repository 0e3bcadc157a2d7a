"""Reference capacities and distribution utilities.

All functions are pure and return nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

WATER_ITERS = 200
N_FREQ = 1024


def awgn_capacity(power: float, sigma2: float = 1.0) -> float:
    """``0.5 ln(1 + P / sigma^2)``."""
    if power < 0 or sigma2 <= 0:
        raise ValueError(f"need P >= 0 and sigma^2 > 0, got P={power}, sigma^2={sigma2}")
    return 0.5 * float(np.log1p(power / sigma2))


def peak_awgn_upper_bound(amplitude: float, sigma2: float = 1.0) -> float:
    """Ceiling for a peak-limited input: a peak of ``A`` caps the power at ``A^2``."""
    if amplitude <= 0 or sigma2 <= 0:
        raise ValueError(f"need A > 0 and sigma^2 > 0, got A={amplitude}, sigma^2={sigma2}")
    return awgn_capacity(amplitude * amplitude, sigma2)


@dataclass
class WaterFillSolution:
    level: float
    powers: np.ndarray
    capacity_nats: float
    noise: np.ndarray
    weights: np.ndarray

    def kkt_residuals(self, power: float) -> dict[str, float]:
        p = self.powers
        return {
            "negativity": float(max(0.0, -p.min())),
            "budget": abs(float(np.dot(self.weights, p)) - power),
            "slackness": float(np.max(np.abs(p * (self.level - self.noise - p)))),
        }


def water_fill(noise_levels, power: float, weights=None, iters: int = WATER_ITERS) -> WaterFillSolution:
    """Allocate ``power`` over parallel Gaussian modes at a common water level.

    With ``weights`` the budget reads ``sum_k w_k p_k = P`` and the capacity
    ``0.5 sum_k w_k ln(1 + p_k / N_k)``; spectral problems pass quadrature
    weights here.
    """
    noise = np.asarray(noise_levels, dtype=np.float64).reshape(-1)
    if noise.size == 0:
        raise ValueError("water_fill needs at least one noise level")
    if np.any(noise <= 0):
        raise ValueError("noise levels must be positive")
    if power < 0:
        raise ValueError("power must be nonnegative")
    w = np.ones_like(noise) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != noise.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative and match the noise levels")
    lo = float(noise.min())
    hi = float(noise.max()) + power / w.sum()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.dot(w, np.maximum(mid - noise, 0.0)) > power:
            hi = mid
        else:
            lo = mid
    level = 0.5 * (lo + hi)
    p = np.maximum(level - noise, 0.0)
    cap = 0.5 * float(np.dot(w, np.log1p(p / noise)))
    return WaterFillSolution(level, p, cap, noise, w)


def _frequency_grid(n_freq: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid on ``[-pi, pi]`` with trapezoid weights normalised by ``2 pi``."""
    if n_freq < 64:
        raise ValueError("n_freq must be at least 64")
    omega = np.linspace(-np.pi, np.pi, n_freq + 1)
    w = np.full(omega.shape, 1.0 / n_freq)
    w[0] = w[-1] = 0.5 / n_freq
    return omega, w


def ma1_noise_psd(alpha: float, omega: np.ndarray) -> np.ndarray:
    """``|1 + alpha e^{j w}|^2``."""
    return 1.0 + alpha * alpha + 2.0 * alpha * np.cos(omega)


def ar1_noise_psd(alpha: float, omega: np.ndarray) -> np.ndarray:
    """``1 / |1 - alpha e^{j w}|^2``."""
    return 1.0 / (1.0 + alpha * alpha - 2.0 * alpha * np.cos(omega))


def _check_alpha(alpha: float) -> None:
    if not abs(alpha) < 1:
        raise ValueError(f"|alpha| must be < 1, got {alpha}")


def ma1_ff_capacity(alpha: float, power: float, n_freq: int = N_FREQ) -> float:
    """Feedforward capacity of ``Y = X + Z``, ``Z_i = alpha N_{i-1} + N_i``, by spectral water-filling."""
    _check_alpha(alpha)
    omega, w = _frequency_grid(n_freq)
    return water_fill(ma1_noise_psd(alpha, omega), power, w).capacity_nats


def ma1_ff_capacity_toeplitz(alpha: float, power: float, size: int = 256) -> float:
    """Same quantity from the eigenvalues of the ``size``-step noise covariance."""
    _check_alpha(alpha)
    cov = np.diag(np.full(size, 1.0 + alpha * alpha))
    cov += np.diag(np.full(size - 1, alpha), 1) + np.diag(np.full(size - 1, alpha), -1)
    eig = np.linalg.eigvalsh(cov)
    return water_fill(eig, power * size).capacity_nats / size


def ma1_fb_polynomial(x, alpha: float, power: float):
    """``P x^2 - (1 - x^2)(1 - |alpha| x)^2``; its root in ``(0, 1)`` gives the feedback capacity."""
    return power * x * x - (1.0 - x * x) * (1.0 - abs(alpha) * x) ** 2


def ma1_fb_capacity(alpha: float, power: float, tol: float = 1e-12) -> float:
    """Feedback capacity ``-ln x0`` of the MA(1) Gaussian noise channel."""
    _check_alpha(alpha)
    if power <= 0:
        raise ValueError("feedback capacity needs P > 0")
    lo, hi = 1e-12, 1.0 - 1e-12
    f_lo = ma1_fb_polynomial(lo, alpha, power)
    f_hi = ma1_fb_polynomial(hi, alpha, power)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"no sign change of the feedback polynomial on (0, 1) for alpha={alpha}, P={power}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = ma1_fb_polynomial(mid, alpha, power)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return float(-np.log(0.5 * (lo + hi)))


def ar1_ff_capacity(alpha: float, power: float, dim: int = 4, n_freq: int = N_FREQ) -> float:
    """Feedforward capacity of ``dim`` parallel AR(1) noise branches under a total power budget."""
    _check_alpha(alpha)
    omega, w = _frequency_grid(n_freq)
    noise = np.tile(ar1_noise_psd(alpha, omega), dim)
    return water_fill(noise, power, np.tile(w, dim)).capacity_nats


# --------------------------------------------------------------------------
# Gaussian quantile transforms

_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_quantile(u) -> np.ndarray:
    """Standard normal quantile: rational approximation polished by one Newton step."""
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0) | (u >= 1)) or np.any(np.isnan(u)):
        raise ValueError("quantile arguments must lie strictly inside (0, 1)")
    x = np.empty_like(u)
    low = u < _P_LOW
    high = u > 1 - _P_LOW
    mid = ~(low | high)
    q = np.sqrt(-2 * np.log(u[low]))
    x[low] = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1))
    q = np.sqrt(-2 * np.log1p(-u[high]))
    x[high] = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1))
    q = u[mid] - 0.5
    r = q * q
    x[mid] = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
              / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1))
    # Newton on Phi(x) = u; the upper tail is solved on the complement for accuracy
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
    resid = np.where(u > 0.5, (1.0 - u) - ndtr(-x), ndtr(x) - u)
    return x - resid / pdf


def kr_gaussian_inverse(u, mean=0.0, std=1.0) -> np.ndarray:
    """Push uniform ``u`` in ``(0, 1)^d`` to a diagonal Gaussian, one coordinate at a time."""
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise ValueError("standard deviations must be positive")
    return np.asarray(mean, dtype=np.float64) + std * normal_quantile(u)


def kr_gaussian_forward(x, mean=0.0, std=1.0) -> np.ndarray:
    """Inverse of :func:`kr_gaussian_inverse`: coordinatewise Gaussian CDF."""
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise ValueError("standard deviations must be positive")
    return ndtr((np.asarray(x, dtype=np.float64) - mean) / std)


def wasserstein2_1d(a, b) -> float:
    """Empirical 2-Wasserstein distance between two 1-D samples.

    Equal sizes use the sorted coupling directly; otherwise both empirical
    quantile functions are compared on the finer of the two grids.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein2_1d needs nonempty samples")
    if a.size != b.size:
        n = max(a.size, b.size)
        grid = (np.arange(n) + 0.5) / n
        a = a[np.minimum((grid * a.size).astype(int), a.size - 1)]
        b = b[np.minimum((grid * b.size).astype(int), b.size - 1)]
    return float(np.sqrt(np.mean((a - b) ** 2)))
