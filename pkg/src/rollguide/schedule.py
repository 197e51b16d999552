"""Discrete-time variance-preserving diffusion machinery.

Index convention: steps run t = 1..T, with t = 0 meaning clean data and
``alpha_bar(0) == 1``.  All schedule arrays are stored 0-indexed internally,
so ``betas[t - 1]`` is the variance added at step t.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

# Default schedule used across the CLI and tests: the conventional DDPM
# linear schedule endpoints.
DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step coefficients of a discrete forward diffusion process.

    ``sigmas`` is the noise scale used when sampling the reverse chain.  The
    default is the exact reverse-kernel (posterior) standard deviation
    sqrt((1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t); pass
    ``sigma_mode="beta"`` at construction for the simpler sqrt(beta_t).
    """

    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)
    sigmas: np.ndarray = field(repr=False)
    sigma_mode: str = "posterior"

    @property
    def T(self):
        return len(self.betas)

    def beta(self, t):
        self._check_t(t)
        return self.betas[t - 1]

    def alpha(self, t):
        self._check_t(t)
        return self.alphas[t - 1]

    def alpha_bar(self, t):
        """alpha_bar at step t, with alpha_bar(0) defined as 1."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return self.alpha_bars[t - 1]

    def sigma(self, t):
        self._check_t(t)
        return self.sigmas[t - 1]

    def _check_t(self, t):
        if not 1 <= t <= self.T:
            raise ParameterError(f"step {t} outside 1..{self.T}")


def make_linear_schedule(T, beta_start=DEFAULT_BETA_START,
                         beta_end=DEFAULT_BETA_END, sigma_mode="posterior"):
    """Linearly interpolated beta schedule from beta_start (t=1) to beta_end (t=T)."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, T)
    return schedule_from_betas(betas, sigma_mode=sigma_mode)


def schedule_from_betas(betas, sigma_mode="posterior"):
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or len(betas) < 1:
        raise ParameterError("betas must be a non-empty 1-D sequence")
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ParameterError("every beta must lie strictly in (0, 1)")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    # alpha_bar_{t-1} with the t=1 entry being alpha_bar_0 = 1.
    prev_bars = np.concatenate(([1.0], alpha_bars[:-1]))
    if sigma_mode == "posterior":
        sigmas = np.sqrt((1.0 - prev_bars) / (1.0 - alpha_bars) * betas)
    elif sigma_mode == "beta":
        sigmas = np.sqrt(betas)
    else:
        raise ParameterError(f"unknown sigma_mode {sigma_mode!r}")
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars,
                         sigmas=sigmas, sigma_mode=sigma_mode)


def forward_diffuse(x0, t, eps, sched):
    """Noise a clean sample to step t: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def tweedie_x0(x_t, t, eps_hat, sched):
    """Posterior-mean estimate of the clean sample from a noisy one.

    Inverts the forward map given a noise prediction:
    (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t).  Accepts t = 0 (identity).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"x_t shape {x_t.shape} != eps_hat shape {eps_hat.shape}")
    ab = sched.alpha_bar(t)
    if ab <= 0.0:
        raise NumericError(f"alpha_bar({t}) = {ab} is not positive")
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddpm_posterior_mean(x_t, t, eps_hat, sched):
    """Mean of the reverse transition x_{t-1} | x_t given a noise prediction."""
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"x_t shape {x_t.shape} != eps_hat shape {eps_hat.shape}")
    a = sched.alpha(t)
    ab = sched.alpha_bar(t)
    if ab >= 1.0:
        raise NumericError(f"alpha_bar({t}) = 1 makes the eps coefficient singular")
    return (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
