"""Musical rule functions on piano rolls and the losses they induce.

A piano roll is a 3-channel grid (velocity, onset, pedal) over 128 pitches
at 10 ms per frame.  Rules extract target attributes — pitch-class
histogram (PH, 12-d), note density (ND, vertical + horizontal per 128-frame
window) and chord progression (CP, one class per window) — and losses
compare them against target vectors.  PH/ND use mean squared error; CP a
0-1 mismatch fraction.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError

NUM_PITCHES = 128
FRAME_SECONDS = 0.01
DENSITY_WINDOW = 128

# Clean-space encoding: velocity 0..127 maps affinely onto [-1, 1]; binary
# channels onto {-1, 1}.  Decoded velocities below MIN_VELOCITY are
# treated as background.
_VEL_SCALE = 127.0 / 2.0
MIN_VELOCITY = 8
VELOCITY_THRESHOLD = MIN_VELOCITY / _VEL_SCALE - 1.0


@dataclass(frozen=True)
class PianoRoll:
    """Velocity / onset / pedal grids of shape (128, frames), dtype uint8."""

    velocity: np.ndarray
    onset: np.ndarray
    pedal: np.ndarray

    def __post_init__(self):
        for name in ("velocity", "onset", "pedal"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.uint8)
            if not arr.flags.writeable:       # e.g. a frombuffer view
                arr = arr.copy()
            if arr.ndim != 2 or arr.shape[0] != NUM_PITCHES:
                raise ShapeError(f"{name} must be ({NUM_PITCHES}, F), got {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.onset.shape != self.velocity.shape or \
                self.pedal.shape != self.velocity.shape:
            raise ShapeError("channel shapes differ")
        if self.velocity.max(initial=0) > 127:
            raise ParameterError("velocity values must be <= 127")
        if self.onset.max(initial=0) > 1 or self.pedal.max(initial=0) > 1:
            raise ParameterError("onset/pedal must be binary")
        if np.any((self.onset > 0) & (self.velocity == 0)):
            raise ParameterError("onset marked on a silent cell")

    @property
    def frames(self):
        return self.velocity.shape[1]

    @classmethod
    def silent(cls, frames):
        z = np.zeros((NUM_PITCHES, frames), dtype=np.uint8)
        return cls(velocity=z, onset=z.copy(), pedal=z.copy())

    def __eq__(self, other):
        return (isinstance(other, PianoRoll)
                and np.array_equal(self.velocity, other.velocity)
                and np.array_equal(self.onset, other.onset)
                and np.array_equal(self.pedal, other.pedal))


def encode_roll(roll):
    """Map a PianoRoll to the clean-space tensor (3, 128, F) in [-1, 1]."""
    vel = roll.velocity.astype(np.float64) / _VEL_SCALE - 1.0
    onset = roll.onset.astype(np.float64) * 2.0 - 1.0
    pedal = roll.pedal.astype(np.float64) * 2.0 - 1.0
    return np.stack([vel, onset, pedal])


def threshold_postprocess(raw):
    """Decode a clean-space tensor back into a PianoRoll.

    Velocity cells below the background threshold are silenced, binary
    channels are thresholded at 0, and each sustained note's velocity is
    smoothed to its run median.  Exact on tensors produced by
    :func:`encode_roll` from rolls with per-note constant velocity.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[0] != 3 or raw.shape[1] != NUM_PITCHES:
        raise ShapeError(f"expected (3, {NUM_PITCHES}, F), got {raw.shape}")
    vel = np.rint((raw[0] + 1.0) * _VEL_SCALE).clip(0, 127).astype(np.uint8)
    vel[raw[0] < VELOCITY_THRESHOLD] = 0
    onset = ((raw[1] > 0) & (vel > 0)).astype(np.uint8)
    pedal = (raw[2] > 0).astype(np.uint8)
    vel = kernels.smooth_velocity_runs(vel, onset)
    return PianoRoll(velocity=vel, onset=onset, pedal=pedal)


# ---------------------------------------------------------------------------
# Rule extraction

def pitch_histogram(roll):
    """Velocity-weighted distribution over the 12 pitch classes.

    Sums each sounding cell's velocity into bucket (pitch mod 12) and
    normalizes to 1; an all-silent roll yields the all-zero vector.
    """
    profile = kernels.pitch_class_profile(roll.velocity)
    total = profile.sum()
    if total == 0.0:
        return np.zeros(12)
    return profile / total


def note_density(roll, window=DENSITY_WINDOW):
    """Per-window vertical then horizontal note density.

    Vertical density is the mean number of sounding pitches per frame in
    the window; horizontal density the number of frames holding at least
    one onset.  Rolls whose frame count is not a multiple of ``window``
    are padded with silence (with a warning).
    """
    if roll.frames == 0:
        raise ParameterError("cannot compute note density of a zero-length roll")
    vel, onset = roll.velocity, roll.onset
    rem = roll.frames % window
    if rem:
        warnings.warn(f"padding roll from {roll.frames} frames to a multiple "
                      f"of {window}", stacklevel=2)
        pad = window - rem
        vel = np.pad(vel, ((0, 0), (0, pad)))
        onset = np.pad(onset, ((0, 0), (0, pad)))
    vertical, horizontal = kernels.density_counts(vel, onset, window)
    return np.concatenate([vertical, horizontal])


# Chord vocabulary: pitch-class-set templates per quality class, matched
# under all 12 rotations.  Anything unmatched (including silence) is
# class 6, no-chord.
CHORD_CLASS_NAMES = ["major", "minor", "diminished", "augmented",
                     "suspended", "seventh", "no-chord"]
NO_CHORD = 6
_TEMPLATES = [
    (0, [{0, 4, 7}]),
    (1, [{0, 3, 7}]),
    (2, [{0, 3, 6}]),
    (3, [{0, 4, 8}]),
    (4, [{0, 2, 7}, {0, 5, 7}]),
    (5, [{0, 4, 7, 10}, {0, 4, 7, 11}, {0, 3, 7, 10}, {0, 3, 7, 11},
         {0, 3, 6, 10}, {0, 3, 6, 9}]),
]


def _build_chord_table():
    table = np.full(4096, NO_CHORD, dtype=np.int64)
    # later entries must not overwrite earlier classes: iterate in reverse
    for class_id, templates in reversed(_TEMPLATES):
        for tpl in templates:
            base = sum(1 << p for p in tpl)
            for r in range(12):
                code = ((base << r) | (base >> (12 - r))) & 0xFFF
                table[code] = class_id
    return table


_CHORD_TABLE = _build_chord_table()


def classify_chord_code(code):
    """Quality class id (0..6) of a 12-bit pitch-class-set code."""
    return int(_CHORD_TABLE[code])


def chord_sequence(roll, window=DENSITY_WINDOW):
    """Per-window chord class of the longest constant pitch-class-set run."""
    if roll.frames == 0:
        raise ParameterError("cannot compute chords of a zero-length roll")
    vel = roll.velocity
    rem = roll.frames % window
    if rem:
        vel = np.pad(vel, ((0, 0), (0, window - rem)))
    codes = kernels.longest_run_codes(vel, window)
    return _CHORD_TABLE[codes]


# ---------------------------------------------------------------------------
# Targets and losses

_KINDS = ("PH", "ND", "CP")


@dataclass(frozen=True)
class RuleTarget:
    """Target attribute vector for one rule kind (PH, ND or CP)."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown rule kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ParameterError("target values must be 1-D")
        if self.kind == "PH":
            if len(vals) != 12 or np.any(vals < 0):
                raise ParameterError("PH target must be 12 non-negative reals")
            total = vals.sum()
            if total != 0.0 and abs(total - 1.0) > 1e-9:
                raise ParameterError("PH target must sum to 1 (or be all zero)")
        elif self.kind == "ND":
            if np.any(vals < 0):
                raise ParameterError("ND target must be non-negative")
        else:
            if np.any((vals < 0) | (vals > 6)) or \
                    np.any(vals != np.rint(vals)):
                raise ParameterError("CP target must hold class ids 0..6")
        object.__setattr__(self, "values", vals)


def extract_target(roll, kind, window=DENSITY_WINDOW):
    if kind == "PH":
        return RuleTarget("PH", pitch_histogram(roll))
    if kind == "ND":
        return RuleTarget("ND", note_density(roll, window))
    if kind == "CP":
        return RuleTarget("CP", chord_sequence(roll, window).astype(np.float64))
    raise ParameterError(f"unknown rule kind {kind!r}")


def rule_loss(roll, target, window=DENSITY_WINDOW):
    """Loss of a roll against one target: MSE for PH/ND, 0-1 for CP."""
    if target.kind == "PH":
        got = pitch_histogram(roll)
    elif target.kind == "ND":
        got = note_density(roll, window)
    else:
        got = chord_sequence(roll, window).astype(np.float64)
    if got.shape != target.values.shape:
        raise ParameterError(
            f"{target.kind} target length {len(target.values)} does not match "
            f"extracted length {len(got)}")
    if target.kind == "CP":
        return float(np.mean(got != target.values))
    diff = got - target.values
    return float(np.mean(diff * diff))


# Composite weights for (PH, ND, CP), chosen to put the three losses on a
# comparable scale.
DEFAULT_RULE_WEIGHTS = {"PH": 40.0, "ND": 1.0, "CP": 1.0}


def composite_loss(roll, targets, weights, window=DENSITY_WINDOW):
    """Weighted sum of rule losses; linear in the weights."""
    targets = list(targets)
    weights = np.asarray(weights, dtype=np.float64)
    if len(targets) != len(weights):
        raise ParameterError(
            f"{len(targets)} targets but {len(weights)} weights")
    if np.any(weights < 0):
        raise ParameterError("weights must be non-negative")
    return float(sum(w * rule_loss(roll, tgt, window)
                     for w, tgt in zip(weights, targets)))


class RuleGuidanceLoss:
    """Clean-space loss evaluator: decode, then composite rule loss.

    This is the loss the guided sampler consumes for piano-roll tasks; it
    is non-differentiable by construction (no ``grad`` attribute).
    """

    def __init__(self, targets, weights=None, window=DENSITY_WINDOW):
        self.targets = list(targets)
        if weights is None:
            weights = [DEFAULT_RULE_WEIGHTS[t.kind] for t in self.targets]
        self.weights = np.asarray(weights, dtype=np.float64)
        if len(self.weights) != len(self.targets):
            raise ParameterError("one weight per target required")
        self.window = window

    def __call__(self, raw):
        roll = threshold_postprocess(raw)
        return composite_loss(roll, self.targets, self.weights, self.window)


def targets_from_json(text):
    """Parse a {"ph": [...], "nd": [...], "cp": [...]} document (any subset)."""
    doc = json.loads(text)
    out = []
    for key, kind in (("ph", "PH"), ("nd", "ND"), ("cp", "CP")):
        if key in doc:
            out.append(RuleTarget(kind, np.asarray(doc[key], dtype=np.float64)))
    if not out:
        raise ParameterError("target document holds none of ph/nd/cp")
    return out


def targets_to_json(targets):
    doc = {}
    for t in targets:
        doc[t.kind.lower()] = t.values.tolist()
    return json.dumps(doc, indent=2)
