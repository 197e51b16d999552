"""Piano-roll ingestion and persistence.

Covers three byte-exact external formats:

* Standard MIDI Files, read (format 0 or 1, tempo map honored) and written
  (format 0, fixed 120 bpm, 480 ticks per quarter);
* the "PR01" binary roll format: magic ``PR01``, three little-endian u32
  dims (channels=3, pitches=128, frames), then channel-major u8 data;
* binary edit masks built over the clean-space tensor shape.

Events are quantized to 10 ms frames (round half up on note starts, at
least one frame per note).  Overlapping same-pitch notes merge into one
sounding run with a fresh onset at each note-on.
"""

import struct
import warnings

import numpy as np

from .errors import FormatError, MidiParseError, ParameterError
from .rules import FRAME_SECONDS, NUM_PITCHES, PianoRoll

_PR_MAGIC = b"PR01"

_EXPORT_TEMPO_US = 500_000   # 120 bpm
_EXPORT_TPQ = 480
_DEFAULT_TEMPO_US = 500_000
_SUSTAIN_CC = 64


# ---------------------------------------------------------------------------
# PR01 roll persistence

def save_roll(roll, path):
    with open(path, "wb") as f:
        f.write(_PR_MAGIC)
        f.write(struct.pack("<III", 3, NUM_PITCHES, roll.frames))
        f.write(roll.velocity.tobytes())
        f.write(roll.onset.tobytes())
        f.write(roll.pedal.tobytes())


def load_roll(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _PR_MAGIC:
        raise FormatError(f"bad roll magic {raw[:4]!r}")
    if len(raw) < 16:
        raise FormatError("truncated roll header")
    channels, pitches, frames = struct.unpack_from("<III", raw, 4)
    if channels != 3 or pitches != NUM_PITCHES:
        raise FormatError(f"unsupported roll dims {channels}x{pitches}")
    need = 16 + 3 * pitches * frames
    if len(raw) != need:
        raise FormatError(f"roll file is {len(raw)} bytes, expected {need}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=16)
    grids = data.reshape(3, pitches, frames)
    return PianoRoll(velocity=grids[0], onset=grids[1], pedal=grids[2])


# ---------------------------------------------------------------------------
# Edit masks (1 = preserved region)

def time_window_mask(frames, start_frame, end_frame, preserve_outside=True):
    """Mask over (3, 128, frames) marking [start, end) as the edit region."""
    if not 0 <= start_frame <= end_frame <= frames:
        raise ParameterError("invalid frame window")
    mask = np.ones((3, NUM_PITCHES, frames)) if preserve_outside else \
        np.zeros((3, NUM_PITCHES, frames))
    mask[:, :, start_frame:end_frame] = 0.0 if preserve_outside else 1.0
    return mask


def pitch_range_mask(frames, low_pitch, high_pitch, preserve_outside=True):
    """Mask marking pitches [low, high) as the edit region."""
    if not 0 <= low_pitch <= high_pitch <= NUM_PITCHES:
        raise ParameterError("invalid pitch range")
    mask = np.ones((3, NUM_PITCHES, frames)) if preserve_outside else \
        np.zeros((3, NUM_PITCHES, frames))
    mask[:, low_pitch:high_pitch, :] = 0.0 if preserve_outside else 1.0
    return mask


# ---------------------------------------------------------------------------
# MIDI reading

class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def read(self, n):
        if self.pos + n > len(self.data):
            raise MidiParseError("unexpected end of file", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.read(1)[0]

    def varlen(self):
        value = 0
        for _ in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError("variable-length quantity too long", self.pos)


def _parse_events(data):
    """Yield (tick, kind, payload) from all tracks of an SMF byte string."""
    r = _Reader(data)
    if r.read(4) != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    (hlen,) = struct.unpack(">I", r.read(4))
    if hlen < 6:
        raise MidiParseError("header too short", r.pos)
    fmt, ntrks, division = struct.unpack(">HHH", r.read(6))
    r.read(hlen - 6)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is unsupported", 12)
    if division == 0:
        raise MidiParseError("zero ticks-per-quarter", 12)

    events = []
    for _ in range(ntrks):
        if r.read(4) != b"MTrk":
            raise MidiParseError("missing MTrk chunk", r.pos - 4)
        (tlen,) = struct.unpack(">I", r.read(4))
        end = r.pos + tlen
        tick = 0
        status = 0
        while r.pos < end:
            tick += r.varlen()
            b = r.u8()
            if b == 0xFF:
                meta = r.u8()
                length = r.varlen()
                payload = r.read(length)
                if meta == 0x51:
                    if length != 3:
                        raise MidiParseError("bad tempo meta length", r.pos)
                    tempo = int.from_bytes(payload, "big")
                    events.append((tick, "tempo", tempo))
                continue
            if b in (0xF0, 0xF7):
                r.read(r.varlen())
                continue
            if b & 0x80:
                status = b
                d1 = r.u8()
            else:
                if status == 0:
                    raise MidiParseError("running status without status byte",
                                         r.pos - 1)
                d1 = b
            kind = status & 0xF0
            if kind in (0xC0, 0xD0):
                continue
            d2 = r.u8()
            if kind == 0x90:
                events.append((tick, "on" if d2 > 0 else "off", (d1, d2)))
            elif kind == 0x80:
                events.append((tick, "off", (d1, d2)))
            elif kind == 0xB0 and d1 == _SUSTAIN_CC:
                events.append((tick, "pedal", d2))
        if r.pos != end:
            raise MidiParseError("track data overran its declared length", r.pos)
    events.sort(key=lambda e: e[0])
    return events, division


def _ticks_to_seconds(events, division):
    """Attach wall-clock seconds to each event, honoring the tempo map."""
    out = []
    tempo = _DEFAULT_TEMPO_US
    last_tick = 0
    elapsed = 0.0
    for tick, kind, payload in events:
        elapsed += (tick - last_tick) * tempo / (division * 1e6)
        last_tick = tick
        if kind == "tempo":
            tempo = payload
        else:
            out.append((elapsed, kind, payload))
    return out


def _frame(seconds):
    # round half up onto the 10 ms grid
    return int(np.floor(seconds / FRAME_SECONDS + 0.5))


def midi_to_roll(midi_bytes, max_frames):
    """Quantize a Standard MIDI File onto a (128 x max_frames) roll."""
    events, division = _parse_events(midi_bytes)
    timed = _ticks_to_seconds(events, division)

    velocity = np.zeros((NUM_PITCHES, max_frames), dtype=np.uint8)
    onset = np.zeros_like(velocity)
    pedal = np.zeros_like(velocity)

    active = {}           # pitch -> (start_frame, velocity)
    pedal_on_frame = None
    saw_note = False
    for seconds, kind, payload in timed:
        frame = _frame(seconds)
        if kind == "on":
            pitch, vel = payload
            saw_note = True
            if pitch in active:
                _write_note(velocity, onset, pitch, active[pitch], frame,
                            max_frames)
            if frame < max_frames:
                active[pitch] = (frame, vel)
        elif kind == "off":
            pitch, _ = payload
            if pitch in active:
                _write_note(velocity, onset, pitch, active.pop(pitch), frame,
                            max_frames)
        elif kind == "pedal":
            if payload >= 64 and pedal_on_frame is None:
                pedal_on_frame = frame
            elif payload < 64 and pedal_on_frame is not None:
                lo = min(pedal_on_frame, max_frames)
                hi = min(frame, max_frames)
                pedal[:, lo:hi] = 1
                pedal_on_frame = None
    for pitch, note in active.items():
        _write_note(velocity, onset, pitch, note, max_frames, max_frames)
    if pedal_on_frame is not None and pedal_on_frame < max_frames:
        pedal[:, pedal_on_frame:] = 1
    if not saw_note:
        warnings.warn("MIDI file holds no note events; roll is empty",
                      stacklevel=2)
    return PianoRoll(velocity=velocity, onset=onset, pedal=pedal)


def _write_note(velocity, onset, pitch, note, end_frame, max_frames):
    start, vel = note
    if start >= max_frames or vel == 0:
        return
    end = max(end_frame, start + 1)       # at least one frame per note
    end = min(end, max_frames)
    velocity[pitch, start:end] = vel
    onset[pitch, start] = 1


# ---------------------------------------------------------------------------
# MIDI writing

def _write_varlen(out, value):
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append((value & 0x7F) | 0x80)
        value >>= 7
    out.extend(reversed(chunks))


def _frame_to_tick(frame):
    return int(round(frame * FRAME_SECONDS * _EXPORT_TPQ * 1e6
                     / _EXPORT_TEMPO_US))


def roll_to_midi(roll):
    """Serialize a roll as a single-track format-0 MIDI file.

    One note per maximal run of constant positive velocity at a pitch,
    with onsets splitting runs; pedal runs become CC64 127/0 pairs.
    """
    msgs = []    # (tick, order, status, data1, data2)
    for pitch in range(NUM_PITCHES):
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
            msgs.append((_frame_to_tick(start), 1, 0x90, pitch, int(vel)))
            msgs.append((_frame_to_tick(f), 0, 0x80, pitch, 0))
    pedal_row = roll.pedal[0] if roll.frames else np.zeros(0, dtype=np.uint8)
    f = 0
    while f < roll.frames:
        if pedal_row[f] == 0:
            f += 1
            continue
        start = f
        while f < roll.frames and pedal_row[f]:
            f += 1
        msgs.append((_frame_to_tick(start), 1, 0xB0, _SUSTAIN_CC, 127))
        msgs.append((_frame_to_tick(f), 0, 0xB0, _SUSTAIN_CC, 0))
    msgs.sort()

    track = bytearray()
    _write_varlen(track, 0)
    track.extend(b"\xff\x51\x03")
    track.extend(_EXPORT_TEMPO_US.to_bytes(3, "big"))
    last_tick = 0
    for tick, _, status, d1, d2 in msgs:
        _write_varlen(track, tick - last_tick)
        track.extend((status, d1, d2))
        last_tick = tick
    _write_varlen(track, 0)
    track.extend(b"\xff\x2f\x00")

    out = bytearray()
    out.extend(b"MThd")
    out.extend(struct.pack(">IHHH", 6, 0, 1, _EXPORT_TPQ))
    out.extend(b"MTrk")
    out.extend(struct.pack(">I", len(track)))
    out.extend(track)
    return bytes(out)
