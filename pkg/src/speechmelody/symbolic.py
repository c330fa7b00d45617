"""Symbolic melody plumbing: the piano-key token alphabet, Hz-to-key
quantization, held-pitch tokenization on the 20 ms grid, run-length note
decoding, skyline reduction of polyphony, transposition, corpus slicing."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GapTokenPresent, TranspositionOutOfRange
from .features import FrameTrack
from .sparsify import SparseTrack

SILENCE = 0
KEY_MIN = 1
KEY_MAX = 88
START = 89
END = 90
GAP = 91
VOCAB_SIZE = 92

FRAME_S = 0.020
MAX_CONTENT = 500            # 10 s of 20 ms frames
MAX_LEN = MAX_CONTENT + 2    # plus start/end tokens

KEY_TO_MIDI_OFFSET = 20      # piano key 49 (A4) = MIDI 69
DEFAULT_VELOCITY = 80


@dataclass(frozen=True)
class TokenSeq:
    """Held-pitch token sequence wrapped in start/end tokens."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        t = self.tokens
        if len(t) < 2 or len(t) > MAX_LEN:
            raise ValueError(f"token sequence length {len(t)} outside [2, {MAX_LEN}]")
        if t[0] != START or t[-1] != END:
            raise ValueError("sequence must begin with START and end with END")
        for tok in t[1:-1]:
            if not (SILENCE <= tok <= KEY_MAX or tok == GAP):
                raise ValueError(f"invalid content token {tok}")

    @classmethod
    def from_content(cls, content) -> "TokenSeq":
        return cls(tuple([START, *[int(x) for x in content], END]))

    @property
    def content(self) -> tuple[int, ...]:
        return self.tokens[1:-1]

    @property
    def content_len(self) -> int:
        return len(self.tokens) - 2

    def has_gaps(self) -> bool:
        return GAP in self.content

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Note:
    """One melody note; key is the 1..88 piano key index."""

    key: int
    onset_s: float
    duration_s: float
    velocity: int = DEFAULT_VELOCITY


@dataclass
class PolyNote:
    """A possibly-overlapping note as read from a MIDI file."""

    pitch: int               # MIDI pitch 0..127
    onset_s: float
    offset_s: float
    velocity: int = DEFAULT_VELOCITY


@dataclass
class PolyTrack:
    notes: list[PolyNote] = field(default_factory=list)

    def duration_s(self) -> float:
        return max((n.offset_s for n in self.notes), default=0.0)


def hz_to_key(freq_hz: float) -> int:
    """Quantize a frequency to the nearest piano key; 0 Hz maps to silence."""
    if freq_hz < 0:
        raise ValueError("frequency must be non-negative")
    if freq_hz == 0:
        return SILENCE
    key = math.floor(12.0 * math.log2(freq_hz / 440.0) + 49.0 + 0.5)
    return min(max(key, KEY_MIN), KEY_MAX)


def key_to_midi(key: int) -> int:
    return key + KEY_TO_MIDI_OFFSET


def midi_to_key(pitch: int) -> int:
    return min(max(pitch - KEY_TO_MIDI_OFFSET, KEY_MIN), KEY_MAX)


def tracks_to_tokens(track) -> TokenSeq:
    """Tokenize a Hz-valued track frame by frame; sparse tracks emit GAP at
    dropped frames. Content is truncated to the 500-frame cap."""
    if isinstance(track, SparseTrack):
        content = [
            hz_to_key(v) if keep else GAP
            for v, keep in zip(track.values, track.keep_mask)
        ]
    else:
        values = track.values if isinstance(track, FrameTrack) else track
        content = [hz_to_key(float(v)) for v in values]
    return TokenSeq.from_content(content[:MAX_CONTENT])


def run_length_encode(tokens) -> list[tuple[int, int]]:
    """Maximal runs of identical tokens as (token, count) pairs."""
    runs = []
    for tok in tokens:
        if runs and runs[-1][0] == tok:
            runs[-1][1] += 1
        else:
            runs.append([int(tok), 1])
    return [(t, c) for t, c in runs]


def tokens_to_notes(seq: TokenSeq, velocities=None) -> list[Note]:
    """Decode runs of identical nonzero keys into notes on the 20 ms grid.

    velocities, when given, holds one MIDI velocity per content frame; each
    note takes the velocity at its onset frame (floored at 1 so the note
    survives as a MIDI note-on).
    """
    if seq.has_gaps():
        raise GapTokenPresent("cannot decode a sequence containing gap tokens")
    notes = []
    pos = 0
    for token, count in run_length_encode(seq.content):
        if token != SILENCE:
            if velocities is None:
                velocity = DEFAULT_VELOCITY
            else:
                velocity = max(1, int(velocities[pos]))
            notes.append(
                Note(key=token, onset_s=pos * FRAME_S, duration_s=count * FRAME_S,
                     velocity=velocity)
            )
        pos += count
    return notes


def notes_to_tokens(notes: list[Note], n_frames: int | None = None) -> TokenSeq:
    """Inverse of tokens_to_notes for grid-aligned, non-overlapping notes."""
    if n_frames is None:
        n_frames = max(
            (int(round((n.onset_s + n.duration_s) / FRAME_S)) for n in notes), default=0
        )
    content = [SILENCE] * n_frames
    for note in notes:
        start = int(round(note.onset_s / FRAME_S))
        end = int(round((note.onset_s + note.duration_s) / FRAME_S))
        for i in range(start, min(end, n_frames)):
            content[i] = note.key
    return TokenSeq.from_content(content[:MAX_CONTENT])


def _skyline_frames(poly: PolyTrack, n_frames: int) -> list[int]:
    """Highest sounding pitch per frame center, as piano keys (0 = none)."""
    best = np.full(n_frames, -1, dtype=np.int64)
    for note in poly.notes:
        lo = max(0, math.ceil(note.onset_s / FRAME_S - 0.5))
        hi = min(n_frames, math.ceil(note.offset_s / FRAME_S - 0.5))
        if hi > lo:
            np.maximum(best[lo:hi], note.pitch, out=best[lo:hi])
    return [SILENCE if p < 0 else midi_to_key(int(p)) for p in best]


def skyline(poly: PolyTrack, n_frames: int | None = None) -> TokenSeq:
    """Reduce polyphony to the highest sounding pitch at each frame center."""
    if n_frames is None:
        n_frames = int(math.ceil(poly.duration_s() / FRAME_S))
    return TokenSeq.from_content(_skyline_frames(poly, n_frames)[:MAX_CONTENT])


def transpose(seq: TokenSeq, semitones: int) -> TokenSeq:
    """Shift all keys by a signed number of semitones (at most 5)."""
    if abs(semitones) > 5:
        raise ValueError("transposition limited to +/-5 semitones")
    out = []
    for tok in seq.content:
        if KEY_MIN <= tok <= KEY_MAX:
            shifted = tok + semitones
            if not KEY_MIN <= shifted <= KEY_MAX:
                raise TranspositionOutOfRange(
                    f"key {tok} + {semitones} leaves [{KEY_MIN}, {KEY_MAX}]"
                )
            out.append(shifted)
        else:
            out.append(tok)
    return TokenSeq.from_content(out)


def slice_corpus(tracks: list[PolyTrack], min_nonzero_fraction: float = 0.05) -> list[TokenSeq]:
    """Skyline each track and cut it into non-overlapping 10 s windows.

    Windows with fewer than 5% pitched frames are dropped, as is any
    trailing remainder shorter than a full window.
    """
    out = []
    for poly in tracks:
        total_frames = int(math.ceil(poly.duration_s() / FRAME_S))
        if total_frames < MAX_CONTENT:
            continue
        content = _skyline_frames(poly, total_frames)
        for start in range(0, total_frames - MAX_CONTENT + 1, MAX_CONTENT):
            window = content[start:start + MAX_CONTENT]
            nonzero = sum(1 for t in window if t != SILENCE)
            if nonzero >= min_nonzero_fraction * MAX_CONTENT:
                out.append(TokenSeq.from_content(window))
    return out
