"""Noise-prediction backends.

Two interchangeable backends supply the noise prediction eps_hat(x_t, t):

* :class:`GmmScoreModel` — exact scores of a diagonal-covariance Gaussian
  mixture pushed through the forward process.  Used for every analytic
  verification.
* :class:`DenoiserScoreModel` — a small learned denoiser for piano-roll
  experiments.  The model is a soft nearest-atom regressor: it holds a
  bank of learned atoms M_k and predicts the clean sample as the
  softmax-responsibility average of the atoms, which is exactly the
  posterior mean under a mixture-of-atoms prior.  The noise prediction
  follows by inverting the forward map,
  eps_hat = (x_t - sqrt(ab_t) x0_hat) / sqrt(1 - ab_t).

Both satisfy the identity eps_hat = -sqrt(1 - alpha_bar_t) * score.
"""

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (FormatError, NumericError, ParameterError, ShapeError,
                     StateError, TrainingError)
from .schedule import forward_diffuse

# ---------------------------------------------------------------------------
# Gaussian mixture backend


@dataclass(frozen=True)
class GmmSpec:
    """Diagonal-covariance Gaussian mixture over R^d."""

    weights: np.ndarray
    means: np.ndarray      # (K, d)
    variances: np.ndarray  # (K, d)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if m.shape != v.shape or len(w) != m.shape[0]:
            raise ShapeError(
                f"inconsistent mixture shapes: weights {w.shape}, "
                f"means {m.shape}, variances {v.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be non-negative and sum to 1")
        if np.any(v <= 0):
            raise ParameterError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def K(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def sample(self, n, rng):
        comp = rng.choice(self.K, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp]) * z

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(weights=np.asarray(doc["weights"], dtype=np.float64),
                   means=np.asarray(doc["means"], dtype=np.float64),
                   variances=np.asarray(doc["variances"], dtype=np.float64))

    def to_json(self):
        return json.dumps({
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }, indent=2)


def gmm_marginal(gmm, t, sched):
    """Mixture describing the forward-process marginal at step t.

    Means scale by sqrt(alpha_bar_t); each variance maps to
    alpha_bar_t * v + (1 - alpha_bar_t); weights are unchanged.
    """
    ab = sched.alpha_bar(t)
    return GmmSpec(weights=gmm.weights,
                   means=np.sqrt(ab) * gmm.means,
                   variances=ab * gmm.variances + (1.0 - ab))


def _component_logpdfs(gmm, x):
    # x: (..., d) -> (..., K)
    diff = x[..., None, :] - gmm.means          # (..., K, d)
    v = gmm.variances
    quad = np.sum(diff * diff / v, axis=-1)
    log_norm = 0.5 * np.sum(np.log(2.0 * np.pi * v), axis=-1)
    return -0.5 * quad - log_norm + np.log(gmm.weights)


def gmm_logpdf(gmm, x):
    """Log density at x (x may carry leading batch axes)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    comp = _component_logpdfs(gmm, x)
    m = np.max(comp, axis=-1, keepdims=True)
    out = m[..., 0] + np.log(np.sum(np.exp(comp - m), axis=-1))
    if not np.all(np.isfinite(out)):
        raise NumericError("gmm log-density underflowed to a non-finite value")
    return out


def gmm_score(gmm, x):
    """Gradient of log density w.r.t. x, stabilized via log-sum-exp."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    comp = _component_logpdfs(gmm, x)
    m = np.max(comp, axis=-1, keepdims=True)
    r = np.exp(comp - m)
    norm = np.sum(r, axis=-1, keepdims=True)
    if np.any(norm <= 0.0) or not np.all(np.isfinite(norm)):
        raise NumericError("all mixture responsibilities underflowed")
    resp = r / norm                              # (..., K)
    grads = -(x[..., None, :] - gmm.means) / gmm.variances   # (..., K, d)
    return np.sum(resp[..., None] * grads, axis=-2)


def gmm_score_jacobian(gmm, x):
    """Hessian of log density at x, shape (..., d, d).

    H = sum_k r_k (H_k + g_k g_k^T) - g g^T with H_k = -diag(1/v_k) and
    g_k the per-component score.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    comp = _component_logpdfs(gmm, x)
    m = np.max(comp, axis=-1, keepdims=True)
    r = np.exp(comp - m)
    resp = r / np.sum(r, axis=-1, keepdims=True)
    gk = -(x[..., None, :] - gmm.means) / gmm.variances       # (..., K, d)
    g = np.sum(resp[..., None] * gk, axis=-2)                 # (..., d)
    outer_k = gk[..., :, None] * gk[..., None, :]             # (..., K, d, d)
    hess = np.sum(resp[..., None, None] * outer_k, axis=-3)
    hess -= g[..., :, None] * g[..., None, :]
    d = gmm.dim
    diag_term = np.sum(resp[..., None] / gmm.variances, axis=-2)  # (..., d)
    idx = np.arange(d)
    hess[..., idx, idx] -= diag_term
    return hess


def gmm_eps(gmm, x, t, sched):
    """Noise prediction from the analytic score of the step-t marginal."""
    marg = gmm_marginal(gmm, t, sched)
    ab = sched.alpha_bar(t)
    return -np.sqrt(1.0 - ab) * gmm_score(marg, x)


# ---------------------------------------------------------------------------
# Score providers

class GmmScoreModel:
    """Analytic backend: exact eps / score for a Gaussian-mixture prior."""

    kind = "analytic-gmm"

    def __init__(self, gmm, sched):
        self.gmm = gmm
        self.sched = sched
        self.sample_shape = (gmm.dim,)

    def _check(self, x):
        if x.shape[-1] != self.gmm.dim:
            raise ShapeError(
                f"last axis {x.shape[-1]} != backend dimension {self.gmm.dim}")

    def eps(self, x, t):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        self._check(x)
        return gmm_eps(self.gmm, x, t, self.sched)

    def score(self, x, t):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        self._check(x)
        return gmm_score(gmm_marginal(self.gmm, t, self.sched), x)

    def x0_jacobian(self, x, t):
        """d x0_hat / d x_t, shape (..., d, d): (I + (1 - ab) H) / sqrt(ab)."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        self._check(x)
        ab = self.sched.alpha_bar(t)
        hess = gmm_score_jacobian(gmm_marginal(self.gmm, t, self.sched), x)
        jac = (1.0 - ab) * hess
        idx = np.arange(self.gmm.dim)
        jac[..., idx, idx] += 1.0
        return jac / np.sqrt(ab)


# ---------------------------------------------------------------------------
# Learned denoiser backend

_MAGIC = b"RGDN"


@dataclass
class TrainConfig:
    steps: int = 1500
    batch_size: int = 16
    atoms: int = 16
    init_scale: float = 0.05


@dataclass
class LearnedDenoiser:
    """Soft nearest-atom clean-sample predictor on flattened samples.

    The single parameter array "M" (atoms x d) holds learned clean-space
    atoms.  For a noisy input x_t the responsibilities are the softmax of
    the exact mixture-of-atoms posterior log-weights,

        logit_k = (<x_t, sqrt(ab) M_k> - ab |M_k|^2 / 2) / (1 - ab),

    and the prediction is the responsibility-weighted atom average.  This
    is the posterior-mean denoiser for a uniform mixture of point masses
    at the atoms, so driving the atoms to the training data minimizes the
    denoising regression loss.
    """

    sample_shape: tuple
    T: int
    params: dict = field(repr=False)
    train_meta: dict = field(default_factory=dict)

    def responsibilities(self, x_flat, t, sched):
        """Softmax atom responsibilities for noisy inputs, shape (n, atoms)."""
        M = self.params["M"]
        ab = sched.alpha_bar(t)
        logits = (x_flat @ (np.sqrt(ab) * M.T)
                  - 0.5 * ab * np.sum(M * M, axis=1)) / (1.0 - ab)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)

    def x0_flat(self, x_flat, t, sched):
        """Forward pass; x_flat is (n, d), t a scalar step."""
        return self.responsibilities(x_flat, t, sched) @ self.params["M"]


class DenoiserScoreModel:
    """Learned backend wrapping a :class:`LearnedDenoiser`."""

    kind = "learned-denoiser"

    def __init__(self, denoiser, sched):
        if denoiser is None or not denoiser.params:
            raise StateError("denoiser backend is not initialized")
        self.denoiser = denoiser
        self.sched = sched
        self.sample_shape = tuple(denoiser.sample_shape)

    def eps(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        k = len(self.sample_shape)
        if x.shape[-k:] != self.sample_shape:
            raise ShapeError(
                f"trailing shape {x.shape[-k:]} != sample shape {self.sample_shape}")
        lead = x.shape[:-k]
        flat = x.reshape(int(np.prod(lead)) if lead else 1, -1)
        x0 = self.denoiser.x0_flat(flat, t, self.sched)
        ab = self.sched.alpha_bar(t)
        out = (flat - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
        return out.reshape(x.shape)

    def score(self, x, t):
        ab = self.sched.alpha_bar(t)
        return -self.eps(x, t) / np.sqrt(1.0 - ab)

    def x0_jacobian_scale(self, t):
        # Stop-gradient approximation: x0_hat treated as linear in x_t with
        # the Tweedie coefficient, so the Jacobian is I / sqrt(alpha_bar_t).
        return 1.0 / np.sqrt(self.sched.alpha_bar(t))


def provider_eps(provider, x, t):
    """Dispatch the noise prediction of either backend (pure passthrough)."""
    if provider is None:
        raise StateError("score provider is not initialized")
    return provider.eps(x, t)


def train_denoiser(dataset, sched, config=None, rng_seed=0):
    """Fit the soft nearest-atom denoiser by denoising regression.

    Minimizes the noise-prediction loss E_{t, x0, eps} ||eps - eps_hat||^2
    with t uniform over 1..T.  Each step draws a minibatch, noises it to a
    random step, computes the model's atom responsibilities, and moves
    each atom toward its responsibility-weighted clean-batch average with
    a per-atom decaying step size (stochastic expectation-maximization).
    The global minimizer — atoms covering the training samples — is a
    fixed point.  Deterministic for a fixed seed.
    """
    if config is None:
        config = TrainConfig()
    data = [np.asarray(x, dtype=np.float64) for x in dataset]
    if len(data) == 0:
        raise ParameterError("dataset must be non-empty")
    shape = data[0].shape
    if any(x.shape != shape for x in data):
        raise ShapeError("all dataset samples must share one shape")
    if config.steps < 1 or config.batch_size < 1 or config.atoms < 1:
        raise ParameterError("steps, batch_size and atoms must be >= 1")
    X = np.stack([x.ravel() for x in data])
    n, d = X.shape

    rng = np.random.default_rng(rng_seed)
    # Atoms start as small perturbations of the data mean; responsibility
    # competition during training differentiates them toward the samples.
    M = X.mean(axis=0) + config.init_scale * rng.standard_normal((config.atoms, d))
    model = LearnedDenoiser(sample_shape=shape, T=sched.T, params={"M": M})

    # Per-atom cumulative responsibility mass; the Robbins-Monro step size
    # for an atom is its batch mass divided by this total, so early batches
    # move atoms freely and later ones refine.
    counts = np.full(config.atoms, 1e-3)
    loss_log = []
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, n, size=config.batch_size)
        t = int(rng.integers(1, sched.T + 1))
        ab = sched.alpha_bar(t)
        noise = rng.standard_normal((config.batch_size, d))
        x_t = forward_diffuse(X[idx], t, noise, sched)

        w = model.responsibilities(x_t, t, sched)
        pred = w @ M
        # Noise-prediction loss: ||eps - eps_hat||^2 = ab/(1-ab) ||x0 - x0_hat||^2.
        diff = pred - X[idx]
        loss = float(ab / (1.0 - ab) * np.mean(diff * diff))
        if not np.isfinite(loss):
            raise TrainingError(f"loss became non-finite at step {step}", step=step)
        loss_log.append(loss)

        # High-t batches carry almost no identity information (uniform
        # responsibilities) and would drag every atom toward the batch
        # mean, so the update mass is weighted by alpha_bar.
        mass = ab * w.sum(axis=0)
        counts += mass
        eta = (mass / counts)[:, None]
        target = (w.T @ X[idx]) / np.maximum(w.sum(axis=0)[:, None], 1e-12)
        M += eta * (target - M)

    meta = {"steps": config.steps, "atoms": config.atoms,
            "final_loss": loss_log[-1], "loss_log": loss_log}
    model.train_meta.update(meta)
    return model


# ---------------------------------------------------------------------------
# Denoiser serialization: magic, header, shape table, little-endian f32 data.

_PARAM_ORDER = ["M"]


def save_denoiser(denoiser, path):
    buf = io.BytesIO()
    buf.write(_MAGIC)
    shape = denoiser.sample_shape
    buf.write(struct.pack("<II", denoiser.T, len(shape)))
    buf.write(struct.pack(f"<{len(shape)}I", *shape))
    buf.write(struct.pack("<I", len(_PARAM_ORDER)))
    for name in _PARAM_ORDER:
        arr = np.asarray(denoiser.params[name], dtype="<f4")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_denoiser(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise FormatError(f"bad denoiser magic {raw[:4]!r}")
    off = 4
    try:
        T, ndim = struct.unpack_from("<II", raw, off)
        off += 8
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        (nparams,) = struct.unpack_from("<I", raw, off)
        off += 4
        params = {}
        for name in _PARAM_ORDER[:nparams]:
            (nd,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{nd}I", raw, off)
            off += 4 * nd
            count = int(np.prod(dims))
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
            off += 4 * count
            params[name] = arr.reshape(dims).astype(np.float64)
    except struct.error as exc:
        raise FormatError(f"truncated denoiser file: {exc}") from exc
    if len(params) != len(_PARAM_ORDER):
        raise FormatError("denoiser file is missing parameter arrays")
    return LearnedDenoiser(sample_shape=tuple(shape), T=T, params=params)
