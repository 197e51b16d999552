"""Objective evaluation: attribute statistics, overlapping area, editing
similarities and the sampling oracles that ground the verification suite.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import EfficiencyError, ParameterError
from .rules import DENSITY_WINDOW, FRAME_SECONDS, note_density, pitch_histogram
from .scores import GmmSpec

ATTRIBUTE_NAMES = ["used_pitch", "ioi", "pitch_hist", "pitch_range",
                   "velocity", "note_duration", "note_density"]


@dataclass
class AttributeSet:
    """Seven musical attributes of one roll; ``empty`` marks a silent roll."""

    used_pitch: float
    ioi: float
    pitch_hist: np.ndarray
    pitch_range: float
    velocity: float
    note_duration: float
    note_density: float
    empty: bool = False


def _note_runs(roll):
    """(pitch, start, end) for each note: maximal constant-velocity run,
    split at onsets."""
    notes = []
    for pitch in range(roll.velocity.shape[0]):
        row = roll.velocity[pitch]
        ons = roll.onset[pitch]
        f = 0
        while f < roll.frames:
            if row[f] == 0:
                f += 1
                continue
            start = f
            vel = row[f]
            f += 1
            while f < roll.frames and row[f] == vel and not ons[f]:
                f += 1
            notes.append((pitch, start, f))
    return notes


def seven_attributes(roll):
    """Attribute record of one roll; silent rolls yield zeros flagged empty."""
    sounding = roll.velocity > 0
    pitches = np.flatnonzero(sounding.any(axis=1))
    if len(pitches) == 0:
        return AttributeSet(0.0, 0.0, np.zeros(12), 0.0, 0.0, 0.0, 0.0,
                            empty=True)
    onset_frames = np.flatnonzero((roll.onset > 0).any(axis=0))
    ioi = float(np.mean(np.diff(onset_frames)) * FRAME_SECONDS) \
        if len(onset_frames) >= 2 else 0.0
    notes = _note_runs(roll)
    duration = float(np.mean([(e - s) for _, s, e in notes]) * FRAME_SECONDS)
    nd = note_density(roll)
    vertical = nd[: len(nd) // 2]
    return AttributeSet(
        used_pitch=float(len(pitches)),
        ioi=ioi,
        pitch_hist=pitch_histogram(roll),
        pitch_range=float(pitches.max() - pitches.min()),
        velocity=float(roll.velocity[sounding].mean()),
        note_duration=duration,
        note_density=float(vertical.mean()),
        empty=False,
    )


# ---------------------------------------------------------------------------
# Overlapping area

def distribution_overlap(dist_a, dist_b, bins=50):
    """Overlap of two empirical distributions via shared-range histograms.

    Both samples are binned over their common range; the overlap is
    sum(min(density_a, density_b)) * binwidth, in [0, 1].  Two point
    masses at the same value overlap fully.
    """
    a = np.asarray(dist_a, dtype=np.float64)
    b = np.asarray(dist_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("distributions must be non-empty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ha, _ = np.histogram(a, bins=edges, density=True)
    hb, _ = np.histogram(b, bins=edges, density=True)
    width = edges[1] - edges[0]
    return float(np.minimum(ha, hb).sum() * width)


def _pairwise_intra(values):
    if values.ndim == 1:
        d = np.abs(values[:, None] - values[None, :])
    else:
        diff = values[:, None, :] - values[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(len(values), k=1)
    return d[iu]


def _pairwise_inter(a, b):
    if a.ndim == 1:
        return np.abs(a[:, None] - b[None, :]).ravel()
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)).ravel()


def overlapping_area(set_a, set_b, bins=50):
    """Per-attribute overlap of intra-set and inter-set distance
    distributions, plus their average.

    Scalars use absolute differences, the pitch histogram Euclidean
    distance.  Both sets must be the same size (>= 2).
    """
    if len(set_a) != len(set_b):
        raise ParameterError(
            f"set sizes differ: {len(set_a)} vs {len(set_b)}")
    if len(set_a) < 2:
        raise ParameterError("need at least 2 samples per set")
    report = {}
    for name in ATTRIBUTE_NAMES:
        va = np.asarray([getattr(r, name) for r in set_a], dtype=np.float64)
        vb = np.asarray([getattr(r, name) for r in set_b], dtype=np.float64)
        intra = _pairwise_intra(va)
        inter = _pairwise_inter(va, vb)
        report[name] = distribution_overlap(intra, inter, bins=bins)
    report["average"] = float(np.mean([report[n] for n in ATTRIBUTE_NAMES]))
    return report


def oa_report_json(report):
    doc = {name: {"oa": report[name]} for name in ATTRIBUTE_NAMES}
    doc["average"] = report["average"]
    return json.dumps(doc, indent=2)


def filter_by_density_quartile(attr_sets, reference, quartile=None):
    """Quartile-bin a reference population by note density.

    Returns the subsets of ``attr_sets`` per quartile of the reference
    note-density distribution (or one subset if ``quartile`` is given);
    used to score generated samples against rule-compliant clusters.
    """
    dens = np.asarray([r.note_density for r in reference])
    edges = np.quantile(dens, [0.25, 0.5, 0.75])
    groups = [[] for _ in range(4)]
    for r in attr_sets:
        groups[int(np.searchsorted(edges, r.note_density))].append(r)
    if quartile is not None:
        return groups[quartile]
    return groups


# ---------------------------------------------------------------------------
# Editing similarities

def _window_chroma(roll, window):
    nwin = roll.frames // window
    out = np.zeros((nwin, 12))
    classes = np.arange(roll.velocity.shape[0]) % 12
    for w in range(nwin):
        seg = roll.velocity[:, w * window:(w + 1) * window].astype(np.float64)
        out[w] = np.bincount(classes, weights=seg.sum(axis=1), minlength=12)
    return out


def chroma_similarity(a, b, window=DENSITY_WINDOW):
    """Mean per-window cosine similarity of velocity-weighted chroma."""
    if a.frames != b.frames:
        raise ParameterError("rolls must have equal frame counts")
    ca = _window_chroma(a, window)
    cb = _window_chroma(b, window)
    sims = []
    for wa, wb in zip(ca, cb):
        na, nb = np.linalg.norm(wa), np.linalg.norm(wb)
        if na == 0.0 and nb == 0.0:
            sims.append(1.0)
        elif na == 0.0 or nb == 0.0:
            sims.append(0.0)
        else:
            sims.append(float(wa @ wb / (na * nb)))
    return float(np.mean(sims)) if sims else 1.0


def groove_similarity(a, b, window=DENSITY_WINDOW):
    """Mean per-window (1 - normalized Hamming distance) of onset presence."""
    if a.frames != b.frames:
        raise ParameterError("rolls must have equal frame counts")
    pa = (a.onset > 0).any(axis=0)
    pb = (b.onset > 0).any(axis=0)
    nwin = a.frames // window
    sims = []
    for w in range(nwin):
        wa = pa[w * window:(w + 1) * window]
        wb = pb[w * window:(w + 1) * window]
        sims.append(1.0 - float(np.mean(wa != wb)))
    return float(np.mean(sims)) if sims else 1.0


# ---------------------------------------------------------------------------
# Sampling oracle

@dataclass
class RejectionResult:
    samples: np.ndarray
    acceptance_rate: float
    snis_mean: np.ndarray
    snis_var: np.ndarray


def rejection_oracle(gmm, loss_fn, num_samples, rng_seed=0,
                     min_acceptance=1e-4, pilot_size=10_000):
    """Exact posterior sampler for a mixture prior tilted by exp(-loss).

    Proposes from the mixture and accepts with probability
    exp(-(loss - loss_min)), where loss_min is estimated from a pilot
    batch.  Also reports self-normalized importance-sampling posterior
    moments over all proposals drawn.
    """
    if num_samples < 1:
        raise ParameterError("num_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    batch_fn = getattr(loss_fn, "batch", None)

    def losses_of(x):
        if batch_fn is not None:
            return np.asarray(batch_fn(x), dtype=np.float64)
        return np.array([loss_fn(xi) for xi in x])

    pilot = gmm.sample(max(pilot_size, num_samples), rng)
    loss_min = losses_of(pilot).min()

    accepted = []
    total = 0
    n_acc = 0
    wsum = 0.0
    wx = np.zeros(gmm.dim)
    wx2 = np.zeros(gmm.dim)
    while n_acc < num_samples:
        x = gmm.sample(max(4 * num_samples, 1000), rng)
        losses = losses_of(x)
        w = np.exp(-np.maximum(losses - loss_min, 0.0))
        keep = rng.random(len(x)) < w
        accepted.append(x[keep])
        n_acc += int(keep.sum())
        total += len(x)
        wraw = np.exp(-(losses - loss_min))
        wsum += wraw.sum()
        wx += (wraw[:, None] * x).sum(axis=0)
        wx2 += (wraw[:, None] * x * x).sum(axis=0)
        if total >= 1_000_000 and n_acc / total < min_acceptance:
            raise EfficiencyError(
                f"acceptance rate {n_acc / total:.2e} below {min_acceptance}; "
                "consider importance sampling instead")
    samples = np.concatenate(accepted)[:num_samples]
    mean = wx / wsum
    var = wx2 / wsum - mean * mean
    return RejectionResult(samples=samples, acceptance_rate=n_acc / total,
                           snis_mean=mean, snis_var=var)


def make_gmm(weights, means, variances):
    """Convenience constructor mirroring GmmSpec's field order."""
    return GmmSpec(weights=np.asarray(weights, dtype=np.float64),
                   means=np.asarray(means, dtype=np.float64),
                   variances=np.asarray(variances, dtype=np.float64))
