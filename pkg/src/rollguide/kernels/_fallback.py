"""Pure-numpy implementations of the hot piano-roll kernels.

These mirror :mod:`rollguide.kernels._ckernels` exactly; the compiled
module is preferred at import time when available.  All functions take the
raw uint8 grids (128 pitches x F frames).
"""

import numpy as np

IMPL = "numpy"


def pitch_class_profile(velocity):
    """Velocity mass per pitch class: float64[12]."""
    sounding = velocity.astype(np.float64)
    per_pitch = sounding.sum(axis=1)                    # (128,)
    classes = np.arange(128) % 12
    return np.bincount(classes, weights=per_pitch, minlength=12)


def density_counts(velocity, onset, window):
    """Per-window note-density counts.

    Returns (vertical, horizontal): vertical[w] is the mean number of
    sounding pitches per frame in window w; horizontal[w] the number of
    frames in window w containing at least one onset.
    """
    frames = velocity.shape[1]
    nwin = frames // window
    on = (velocity > 0).sum(axis=0)[: nwin * window]     # notes per frame
    starts = (onset > 0).any(axis=0)[: nwin * window]
    vertical = on.reshape(nwin, window).mean(axis=1).astype(np.float64)
    horizontal = starts.reshape(nwin, window).sum(axis=1).astype(np.float64)
    return vertical, horizontal


def frame_chord_codes(velocity):
    """12-bit pitch-class-set code of each frame: int64[F]."""
    sounding = velocity > 0
    codes = np.zeros(velocity.shape[1], dtype=np.int64)
    for c in range(12):
        present = sounding[c::12].any(axis=0)
        codes |= present.astype(np.int64) << c
    return codes


def longest_run_codes(velocity, window):
    """Per window, the pitch-class-set code of the longest constant run.

    Frames are segmented into maximal runs of identical sounding
    pitch-class sets; ties go to the earliest run.  Runs never cross
    window boundaries.
    """
    codes = frame_chord_codes(velocity)
    nwin = velocity.shape[1] // window
    out = np.zeros(nwin, dtype=np.int64)
    for w in range(nwin):
        seg = codes[w * window:(w + 1) * window]
        change = np.flatnonzero(np.diff(seg)) + 1
        bounds = np.concatenate(([0], change, [window]))
        lengths = np.diff(bounds)
        best = int(np.argmax(lengths))       # argmax keeps the earliest tie
        out[w] = seg[bounds[best]]
    return out


def smooth_velocity_runs(velocity, onset):
    """Set each sustained note's velocity to its run's lower median.

    A run is a maximal stretch of positive velocity in one pitch row,
    additionally split wherever an onset is marked.  Returns a new uint8
    grid.
    """
    out = velocity.copy()
    frames = velocity.shape[1]
    for p in range(128):
        row = velocity[p]
        pos = row > 0
        if not pos.any():
            continue
        start_flags = pos & (np.concatenate(([False], pos[:-1])) == False)
        start_flags |= pos & (onset[p] > 0)
        starts = np.flatnonzero(start_flags)
        for k, s in enumerate(starts):
            e = starts[k + 1] if k + 1 < len(starts) else frames
            # run ends at the first silent frame before the next start
            run = row[s:e]
            silent = np.flatnonzero(run == 0)
            if len(silent):
                run = run[: silent[0]]
                e = s + silent[0]
            vals = np.sort(run)
            out[p, s:e] = vals[(len(vals) - 1) // 2]
    return out
