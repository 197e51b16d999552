import json

import numpy as np
import pytest

from rollguide import kernels
from rollguide.errors import ParameterError, ShapeError
from rollguide.kernels import _fallback
from rollguide.rules import (CHORD_CLASS_NAMES, DEFAULT_RULE_WEIGHTS,
                             NO_CHORD, PianoRoll, RuleGuidanceLoss,
                             RuleTarget, chord_sequence, classify_chord_code,
                             composite_loss, encode_roll, extract_target,
                             note_density, pitch_histogram, rule_loss,
                             targets_from_json, targets_to_json,
                             threshold_postprocess)


def make_roll(frames=128):
    vel = np.zeros((128, frames), dtype=np.uint8)
    onset = np.zeros_like(vel)
    return vel, onset


def test_pianoroll_validation():
    with pytest.raises(ShapeError):
        PianoRoll(velocity=np.zeros((64, 8), dtype=np.uint8),
                  onset=np.zeros((64, 8), dtype=np.uint8),
                  pedal=np.zeros((64, 8), dtype=np.uint8))
    vel, onset = make_roll(8)
    onset[5, 0] = 1   # onset on silent cell
    with pytest.raises(ParameterError):
        PianoRoll(velocity=vel, onset=onset, pedal=np.zeros_like(vel))
    vel2, onset2 = make_roll(8)
    onset2[5, 0] = 2
    vel2[5, 0] = 10
    with pytest.raises(ParameterError):
        PianoRoll(velocity=vel2, onset=onset2, pedal=np.zeros_like(vel2))


def test_encode_decode_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        vel, onset = make_roll(64)
        for _ in range(6):
            p = int(rng.integers(20, 100))
            s = int(rng.integers(0, 56))
            d = int(rng.integers(1, 9))
            v = int(rng.integers(8, 128))
            vel[p, s:s + d] = v
            onset[p, s] = 1
        onset &= (vel > 0).astype(np.uint8)
        pedal = (rng.random((128, 64)) < 0.1).astype(np.uint8)
        roll = PianoRoll(velocity=vel, onset=onset, pedal=pedal)
        assert threshold_postprocess(encode_roll(roll)) == roll


def test_decode_silences_background():
    raw = np.full((3, 128, 8), -1.0)
    raw[0, 60, :] = 60 / (127 / 2) - 1.0     # velocity 60 everywhere
    raw[1, 60, 0] = 1.0
    roll = threshold_postprocess(raw)
    assert roll.velocity[60, 0] == 60
    assert roll.velocity.sum() == 60 * 8
    with pytest.raises(ShapeError):
        threshold_postprocess(np.zeros((2, 128, 8)))


def test_pitch_histogram_oracle():
    vel, onset = make_roll(10)
    vel[60, :4] = 100          # C, mass 400
    vel[64, :2] = 50           # E, mass 100
    onset[60, 0] = 1
    onset[64, 0] = 1
    roll = PianoRoll(velocity=vel, onset=onset, pedal=np.zeros_like(vel))
    ph = pitch_histogram(roll)
    assert ph[0] == pytest.approx(0.8)
    assert ph[4] == pytest.approx(0.2)
    assert ph.sum() == pytest.approx(1.0)
    silent = PianoRoll.silent(10)
    np.testing.assert_array_equal(pitch_histogram(silent), np.zeros(12))


def test_note_density_oracle():
    vel, onset = make_roll(256)
    # first window: 3 pitches sounding every frame, onsets at frame 0
    for p in (60, 64, 67):
        vel[p, :128] = 64
        onset[p, 0] = 1
    # second window: one pitch sounding half the frames
    vel[70, 128:192] = 64
    onset[70, 128] = 1
    roll = PianoRoll(velocity=vel, onset=onset, pedal=np.zeros_like(vel))
    nd = note_density(roll)
    np.testing.assert_allclose(nd[:2], [3.0, 0.5])   # vertical densities
    np.testing.assert_allclose(nd[2:], [1.0, 1.0])   # frames with onsets
    with pytest.raises(ParameterError):
        note_density(PianoRoll.silent(0))


def test_note_density_pads_partial_window():
    vel, onset = make_roll(100)
    vel[60, :] = 64
    onset[60, 0] = 1
    roll = PianoRoll(velocity=vel, onset=onset, pedal=np.zeros_like(vel))
    with pytest.warns(UserWarning):
        nd = note_density(roll)
    assert nd[0] == pytest.approx(100 / 128)


def _triad_roll(pitches, frames=128):
    vel, onset = make_roll(frames)
    for p in pitches:
        vel[p, :] = 64
        onset[p, 0] = 1
    return PianoRoll(velocity=vel, onset=onset, pedal=np.zeros_like(vel))


def test_chord_classification():
    cases = [((60, 64, 67), "major"), ((60, 63, 67), "minor"),
             ((60, 63, 66), "diminished"), ((60, 64, 68), "augmented"),
             ((60, 62, 67), "suspended"), ((60, 65, 67), "suspended"),
             ((60, 64, 67, 70), "seventh"), ((60, 61, 62), "no-chord")]
    for pitches, name in cases:
        seq = chord_sequence(_triad_roll(pitches))
        assert CHORD_CLASS_NAMES[seq[0]] == name, pitches
    assert chord_sequence(PianoRoll.silent(128))[0] == NO_CHORD


def test_chord_rotation_invariance():
    base = sum(1 << p for p in (0, 4, 7))
    for r in range(12):
        code = ((base << r) | (base >> (12 - r))) & 0xFFF
        assert classify_chord_code(code) == 0


def test_chord_longest_run_wins():
    vel, onset = make_roll(128)
    # minor triad for 50 frames, then major for 78
    for p in (60, 63, 67):
        vel[p, :50] = 64
        onset[p, 0] = 1
    for p in (60, 64, 67):
        vel[p, 50:] = 64
        onset[p, 50] = 1
    roll = PianoRoll(velocity=vel, onset=onset, pedal=np.zeros_like(vel))
    assert CHORD_CLASS_NAMES[chord_sequence(roll)[0]] == "major"


def test_rule_target_validation():
    with pytest.raises(ParameterError):
        RuleTarget("PH", np.full(12, 0.2))           # does not sum to 1
    with pytest.raises(ParameterError):
        RuleTarget("PH", np.ones(11) / 11)
    with pytest.raises(ParameterError):
        RuleTarget("ND", np.array([-1.0]))
    with pytest.raises(ParameterError):
        RuleTarget("CP", np.array([7.0]))
    with pytest.raises(ParameterError):
        RuleTarget("CP", np.array([1.5]))
    with pytest.raises(ParameterError):
        RuleTarget("XX", np.zeros(3))


def test_rule_loss_self_target_is_zero():
    roll = _triad_roll((60, 64, 67))
    for kind in ("PH", "ND", "CP"):
        assert rule_loss(roll, extract_target(roll, kind)) == 0.0


def test_rule_loss_cp_mismatch_fraction():
    roll = _triad_roll((60, 64, 67), frames=256)     # both windows major
    target = RuleTarget("CP", np.array([0.0, 1.0]))  # second window wrong
    assert rule_loss(roll, target) == pytest.approx(0.5)


def test_rule_loss_length_mismatch():
    roll = _triad_roll((60, 64, 67))
    with pytest.raises(ParameterError):
        rule_loss(roll, RuleTarget("ND", np.zeros(6)))


def test_composite_loss_linear_in_weights():
    roll = _triad_roll((60, 64, 67))
    other = _triad_roll((62, 65, 69))
    targets = [extract_target(other, "PH"), extract_target(other, "ND")]
    l1 = composite_loss(roll, targets, [1.0, 2.0])
    l2 = composite_loss(roll, targets, [2.0, 4.0])
    assert l2 == pytest.approx(2 * l1)
    with pytest.raises(ParameterError):
        composite_loss(roll, targets, [1.0])
    with pytest.raises(ParameterError):
        composite_loss(roll, targets, [1.0, -1.0])


def test_rule_guidance_loss_decodes_then_scores():
    roll = _triad_roll((60, 64, 67))
    targets = [extract_target(roll, k) for k in ("PH", "ND", "CP")]
    loss = RuleGuidanceLoss(targets)
    assert loss(encode_roll(roll)) == 0.0
    assert not hasattr(loss, "grad")
    assert loss.weights.tolist() == [DEFAULT_RULE_WEIGHTS[k]
                                     for k in ("PH", "ND", "CP")]


def test_targets_json_round_trip():
    roll = _triad_roll((60, 64, 67))
    targets = [extract_target(roll, k) for k in ("PH", "ND", "CP")]
    back = targets_from_json(targets_to_json(targets))
    assert [t.kind for t in back] == ["PH", "ND", "CP"]
    for a, b in zip(targets, back):
        np.testing.assert_allclose(a.values, b.values)
    with pytest.raises(ParameterError):
        targets_from_json(json.dumps({"other": [1]}))


def _random_grids(rng, frames=96):
    vel = np.zeros((128, frames), dtype=np.uint8)
    onset = np.zeros_like(vel)
    for _ in range(12):
        p = int(rng.integers(0, 128))
        s = int(rng.integers(0, frames - 4))
        d = int(rng.integers(1, 12))
        vel[p, s:s + d] = int(rng.integers(1, 128))
        onset[p, s] = 1
    onset &= (vel > 0).astype(np.uint8)
    return vel, onset


@pytest.mark.skipif(kernels.IMPL == _fallback.IMPL,
                    reason="compiled kernels unavailable")
def test_kernel_implementations_agree():
    rng = np.random.default_rng(123)
    for _ in range(25):
        vel, onset = _random_grids(rng)
        np.testing.assert_array_equal(
            kernels.pitch_class_profile(vel),
            _fallback.pitch_class_profile(vel))
        for a, b in zip(kernels.density_counts(vel, onset, 32),
                        _fallback.density_counts(vel, onset, 32)):
            np.testing.assert_allclose(a, b)
        np.testing.assert_array_equal(
            kernels.frame_chord_codes(vel),
            _fallback.frame_chord_codes(vel))
        np.testing.assert_array_equal(
            kernels.longest_run_codes(vel, 32),
            _fallback.longest_run_codes(vel, 32))
        np.testing.assert_array_equal(
            kernels.smooth_velocity_runs(vel, onset),
            _fallback.smooth_velocity_runs(vel, onset))


def test_smooth_velocity_runs_lower_median():
    vel = np.zeros((128, 8), dtype=np.uint8)
    onset = np.zeros_like(vel)
    vel[50, 0:4] = [10, 30, 20, 40]     # even run: lower median = 20
    onset[50, 0] = 1
    out = kernels.smooth_velocity_runs(vel, onset)
    np.testing.assert_array_equal(out[50, 0:4], [20, 20, 20, 20])
    # onsets split runs
    vel[60, 0:4] = [10, 10, 30, 30]
    onset[60, 0] = 1
    onset[60, 2] = 1
    out = kernels.smooth_velocity_runs(vel, onset)
    np.testing.assert_array_equal(out[60, 0:4], [10, 10, 30, 30])
