"""Candidate-selection guided sampling.

The sampler draws n stochastic realizations of each reverse-diffusion step,
estimates the clean sample each realization implies, and keeps the
realization whose clean-sample estimate scores best under a (possibly
non-differentiable) loss.  Selection is either the loss argmin or a
softmax draw with temperature K; the latter is the principled
path-integral resampling rule, the former its zero-temperature limit.

Noise streams are keyed by (run seed, step, candidate index) so that the
n = 1 sampler reproduces the unguided trajectory bit for bit and changing
n never perturbs earlier steps.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import CapabilityError, ParameterError, RollguideError, ShapeError
from .schedule import ddpm_posterior_mean, forward_diffuse, tweedie_x0

__all__ = [
    "GuidanceConfig", "StepDiagnostics", "select_candidate",
    "ddpm_sample", "scg_ddpm_sample", "scg_sddim_sample", "edit_sample",
    "dps_rule_step_direction", "hybrid_gradient_scg_sample",
    "desirability_mc", "uniform_taus", "write_diagnostics",
]

# RNG key tags: candidate/step noise vs. softmax selection draws.
_NOISE_TAG = 0
_SELECT_TAG = 1


def _rng(seed, t, i, tag=_NOISE_TAG):
    return np.random.default_rng([int(seed), int(t), int(i), tag])


@dataclass(frozen=True)
class GuidanceConfig:
    """Knobs of the guided sampler.

    Guidance is applied at steps t with guide_end_t < t <= guide_start_t,
    thinned to every ``every_k``-th guided step.  ``stop_at_t`` truncates
    the chain early and returns the clean-sample estimate at that step.
    """

    n: int = 1
    guide_start_t: int = 750
    guide_end_t: int = 0
    every_k: int = 1
    selection: str = "argmax"
    temperature_K: float = 1.0
    weights: tuple = ()
    gradient_scale: float = 0.0
    stop_at_t: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"candidate count n must be >= 1, got {self.n}")
        if self.every_k < 1:
            raise ParameterError("every_k must be >= 1")
        if not 0 <= self.guide_end_t <= self.guide_start_t:
            raise ParameterError(
                f"invalid guided window {self.guide_start_t}..{self.guide_end_t}")
        if self.selection not in ("argmax", "softmax"):
            raise ParameterError(f"unknown selection rule {self.selection!r}")
        if self.selection == "softmax" and not self.temperature_K > 0:
            raise ParameterError("softmax selection needs temperature_K > 0")

    def guided_at(self, t):
        if not self.guide_end_t < t <= self.guide_start_t:
            return False
        return (self.guide_start_t - t) % self.every_k == 0


@dataclass
class StepDiagnostics:
    """Per-guided-step record of the candidate losses and the choice made."""

    t: int
    losses: list
    best: float
    chosen: int

    def to_json(self):
        return json.dumps({"t": self.t, "losses": self.losses,
                           "best": self.best, "chosen": self.chosen})


def write_diagnostics(diagnostics, path):
    """Emit diagnostics as line-delimited JSON records."""
    with open(path, "w") as f:
        for rec in diagnostics:
            f.write(rec.to_json() + "\n")


def select_candidate(losses, selection="argmax", temperature_K=1.0, rng=None):
    """Pick a candidate index from its losses.

    argmax mode returns the index of the minimum loss (ties -> lowest
    index); softmax mode draws with probability proportional to
    exp(-loss / K), stabilized by subtracting the minimum loss.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or len(losses) == 0:
        raise ParameterError("losses must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(losses)):
        raise ParameterError("losses must be finite")
    if selection == "argmax":
        return int(np.argmin(losses))
    if selection == "softmax":
        if rng is None:
            raise ParameterError("softmax selection needs an rng")
        p = np.exp(-(losses - losses.min()) / temperature_K)
        p /= p.sum()
        return int(rng.choice(len(losses), p=p))
    raise ParameterError(f"unknown selection rule {selection!r}")


def _select_batch(losses, config, rng):
    """Vectorized selection: losses (n, b) -> chosen indices (b,)."""
    if config.selection == "argmax":
        return np.argmin(losses, axis=0)
    logp = -(losses - losses.min(axis=0)) / config.temperature_K
    p = np.exp(logp)
    p /= p.sum(axis=0)
    u = rng.random(losses.shape[1])
    return np.argmax(np.cumsum(p, axis=0) > u, axis=0)


def _eval_losses(loss_fn, x0hats):
    """Loss of every candidate clean-sample estimate; x0hats is (n, b, ...)."""
    n, b = x0hats.shape[:2]
    batch = getattr(loss_fn, "batch", None)
    try:
        if batch is not None:
            flat = x0hats.reshape((n * b,) + x0hats.shape[2:])
            return np.asarray(batch(flat), dtype=np.float64).reshape(n, b)
        out = np.empty((n, b))
        for i in range(n):
            for j in range(b):
                out[i, j] = loss_fn(x0hats[i, j])
        return out
    except RollguideError:
        raise
    except Exception as exc:
        raise RollguideError(f"loss evaluation failed: {exc}") from exc


def _init_state(provider, num_samples, rng_seed):
    shape = (num_samples,) + tuple(provider.sample_shape)
    return _rng(rng_seed, 0, 0).standard_normal(shape)


def ddpm_sample(provider, sched, rng_seed, num_samples=1):
    """Unguided ancestral sampling, on the shared keyed noise stream."""
    x = _init_state(provider, num_samples, rng_seed)
    for t in range(sched.T, 0, -1):
        mean = ddpm_posterior_mean(x, t, provider.eps(x, t), sched)
        if t > 1:
            z = _rng(rng_seed, t, 0).standard_normal(x.shape)
            x = mean + sched.sigma(t) * z
        else:
            x = mean
    return x


def _guided_step(x, t, mean, provider, sched, loss_fn, config, rng_seed,
                 diagnostics):
    """One candidate-selection transition from the step mean; returns x_{t-1}."""
    sigma = sched.sigma(t)
    cands = np.empty((config.n,) + x.shape)
    for i in range(config.n):
        z = _rng(rng_seed, t, i).standard_normal(x.shape)
        cands[i] = mean + sigma * z
    eps_prev = provider.eps(cands, t - 1)
    x0hats = tweedie_x0(cands, t - 1, eps_prev, sched)
    losses = _eval_losses(loss_fn, x0hats)
    chosen = _select_batch(losses, config,
                           _rng(rng_seed, t, 0, _SELECT_TAG))
    if diagnostics is not None:
        col = losses[:, 0]
        diagnostics.append(StepDiagnostics(
            t=t, losses=col.tolist(), best=float(col[chosen[0]]),
            chosen=int(chosen[0])))
    return cands[chosen, np.arange(x.shape[0])]


def scg_ddpm_sample(provider, sched, loss_fn, config, rng_seed, num_samples=1,
                    gradient_parts=None):
    """Guided ancestral sampling (candidate selection at each guided step).

    Returns (x0, diagnostics).  Diagnostics track the first sample of the
    batch.  ``gradient_parts`` is used by the gradient hybrid: a loss with
    an analytic gradient whose descent direction pre-shifts the step mean
    before candidates are drawn.
    """
    x = _init_state(provider, num_samples, rng_seed)
    diagnostics = []
    for t in range(sched.T, 0, -1):
        eps = provider.eps(x, t)
        if config.stop_at_t and t == config.stop_at_t:
            return tweedie_x0(x, t, eps, sched), diagnostics
        mean = ddpm_posterior_mean(x, t, eps, sched)
        if t == 1:
            x = mean
            continue
        if config.guided_at(t):
            if gradient_parts is not None and config.gradient_scale != 0.0:
                mean = mean + dps_rule_step_direction(
                    x, t, provider, sched, gradient_parts, config.gradient_scale)
            x = _guided_step(x, t, mean, provider, sched, loss_fn, config,
                             rng_seed, diagnostics)
        else:
            z = _rng(rng_seed, t, 0).standard_normal(x.shape)
            x = mean + sched.sigma(t) * z
    return x, diagnostics


def uniform_taus(T, S):
    """Evenly strided increasing step subsequence ending at T."""
    if not 1 <= S <= T:
        raise ParameterError(f"need 1 <= S <= T, got S={S}, T={T}")
    return [int(round(T * (s + 1) / S)) for s in range(S)]


def _sddim_sigma(sched, tau, tau_prev, eta):
    ab = sched.alpha_bar(tau)
    ab_prev = sched.alpha_bar(tau_prev)
    return eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev))


def scg_sddim_sample(provider, sched, loss_fn, config, eta, taus, rng_seed,
                     num_samples=1):
    """Guided stochastic-DDIM sampling over a step subsequence.

    taus is an increasing subsequence of 1..T (its last entry should be T);
    eta > 0 supplies the per-step stochasticity candidate selection needs.
    """
    taus = list(taus)
    if any(not 1 <= t <= sched.T for t in taus) or \
            any(b <= a for a, b in zip(taus, taus[1:])):
        raise ParameterError("taus must be an increasing subsequence of 1..T")
    if eta <= 0 and config.n > 1:
        raise ParameterError("eta = 0 makes all candidates identical; "
                             "use eta > 0 or n = 1")

    x = _init_state(provider, num_samples, rng_seed)
    diagnostics = []
    for s in range(len(taus) - 1, -1, -1):
        tau = taus[s]
        tau_prev = taus[s - 1] if s > 0 else 0
        eps = provider.eps(x, tau)
        if config.stop_at_t and tau <= config.stop_at_t:
            return tweedie_x0(x, tau, eps, sched), diagnostics
        sigma = _sddim_sigma(sched, tau, tau_prev, eta)
        ab_prev = sched.alpha_bar(tau_prev)
        x0hat = tweedie_x0(x, tau, eps, sched)
        mean = np.sqrt(ab_prev) * x0hat + \
            np.sqrt(max(1.0 - ab_prev - sigma ** 2, 0.0)) * eps
        if s == 0:
            x = mean
            continue
        if config.guided_at(tau):
            x = _sddim_guided_step(x, tau, tau_prev, mean, sigma, provider,
                                   sched, loss_fn, config, rng_seed,
                                   diagnostics)
        else:
            z = _rng(rng_seed, tau, 0).standard_normal(x.shape)
            x = mean + sigma * z
    return x, diagnostics


def _sddim_guided_step(x, tau, tau_prev, mean, sigma, provider, sched,
                       loss_fn, config, rng_seed, diagnostics):
    cands = np.empty((config.n,) + x.shape)
    for i in range(config.n):
        z = _rng(rng_seed, tau, i).standard_normal(x.shape)
        cands[i] = mean + sigma * z
    x0hats = tweedie_x0(cands, tau_prev, provider.eps(cands, tau_prev), sched)
    losses = _eval_losses(loss_fn, x0hats)
    chosen = _select_batch(losses, config,
                           _rng(rng_seed, tau, 0, _SELECT_TAG))
    if diagnostics is not None:
        col = losses[:, 0]
        diagnostics.append(StepDiagnostics(
            t=tau, losses=col.tolist(), best=float(col[chosen[0]]),
            chosen=int(chosen[0])))
    return cands[chosen, np.arange(x.shape[0])]


def edit_sample(provider, sched, source, mask, noise_level_K, loss_fn=None,
                config=None, rng_seed=0):
    """Regenerate the unmasked region of a clean-space sample.

    Diffuses the source to step K and denoises it back, projecting the
    preserved region (mask == 1) onto the source at every step and once
    more on the final output, so preserved cells match the source exactly.
    If a loss is given, steps inside the guided window use candidate
    selection.
    """
    source = np.asarray(source, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != source.shape:
        raise ShapeError(f"mask shape {mask.shape} != source shape {source.shape}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ParameterError("mask elements must be 0 or 1")
    if not 0 <= noise_level_K <= sched.T:
        raise ParameterError(f"noise level {noise_level_K} outside 0..{sched.T}")
    if config is None:
        config = GuidanceConfig(n=1, guide_start_t=sched.T)
    if noise_level_K == 0:
        return source.copy()

    z = _rng(rng_seed, 0, 0).standard_normal(source.shape)
    x = forward_diffuse(source, noise_level_K, z, sched)[None]
    src = source[None]
    m = mask[None]
    diagnostics = [] if loss_fn is not None else None
    for t in range(noise_level_K, 0, -1):
        x0hat = tweedie_x0(x, t, provider.eps(x, t), sched)
        x0til = m * src + (1.0 - m) * x0hat
        ab = sched.alpha_bar(t)
        eps_til = (x - np.sqrt(ab) * x0til) / np.sqrt(1.0 - ab)
        mean = ddpm_posterior_mean(x, t, eps_til, sched)
        if t == 1:
            x = mean
        elif loss_fn is not None and config.guided_at(t):
            x = _guided_step(x, t, mean, provider, sched, loss_fn, config,
                             rng_seed, diagnostics)
        else:
            zt = _rng(rng_seed, t, 0).standard_normal(x.shape)
            x = mean + sched.sigma(t) * zt
    out = mask * source + (1.0 - mask) * x[0]
    return out


def dps_rule_step_direction(x_t, t, provider, sched, loss_fn, scale):
    """Gradient-guidance step: -scale * grad_{x_t} loss(x0_hat(x_t)).

    Requires the loss to expose an analytic clean-space gradient.  The
    chain rule through the clean-sample estimate uses the analytic
    Jacobian for the mixture backend; the learned backend treats the
    estimate as linear in x_t (stop-gradient approximation).
    """
    grad_fn = getattr(loss_fn, "grad", None)
    if grad_fn is None:
        raise CapabilityError(
            "loss function has no analytic gradient; gradient guidance "
            "needs a differentiable rule")
    x_t = np.asarray(x_t, dtype=np.float64)
    x0hat = tweedie_x0(x_t, t, provider.eps(x_t, t), sched)
    g = np.asarray(grad_fn(x0hat), dtype=np.float64)
    if hasattr(provider, "x0_jacobian"):
        jac = provider.x0_jacobian(x_t, t)      # (..., d, d)
        pulled = np.einsum("...ij,...i->...j", jac, g)
    else:
        pulled = provider.x0_jacobian_scale(t) * g
    return -scale * pulled


def hybrid_gradient_scg_sample(provider, sched, loss_fn, differentiable_parts,
                               config, rng_seed, num_samples=1):
    """Gradient pre-shift plus candidate selection on the full loss.

    ``differentiable_parts`` is a loss with an analytic gradient (or None /
    empty to degenerate to the pure selection sampler).
    """
    if differentiable_parts is None or config.gradient_scale == 0.0:
        pure = replace(config, gradient_scale=0.0)
        return scg_ddpm_sample(provider, sched, loss_fn, pure, rng_seed,
                               num_samples=num_samples)
    return scg_ddpm_sample(provider, sched, loss_fn, config, rng_seed,
                           num_samples=num_samples,
                           gradient_parts=differentiable_parts)


def desirability_mc(provider, sched, loss_fn, x_t, t, num_traj, rng_seed=0):
    """Monte-Carlo estimate of E[exp(-loss(x0)) | x_t] under unguided rollouts."""
    if num_traj < 1:
        raise ParameterError("num_traj must be >= 1")
    x_t = np.asarray(x_t, dtype=np.float64)
    if t == 0:
        return float(np.exp(-loss_fn(x_t)))
    x = np.broadcast_to(x_t, (num_traj,) + x_t.shape).copy()
    for step in range(t, 0, -1):
        mean = ddpm_posterior_mean(x, step, provider.eps(x, step), sched)
        if step > 1:
            z = _rng(rng_seed, step, 0).standard_normal(x.shape)
            x = mean + sched.sigma(step) * z
        else:
            x = mean
    batch = getattr(loss_fn, "batch", None)
    if batch is not None:
        losses = np.asarray(batch(x), dtype=np.float64)
    else:
        losses = np.array([loss_fn(xi) for xi in x])
    return float(np.mean(np.exp(-losses)))
