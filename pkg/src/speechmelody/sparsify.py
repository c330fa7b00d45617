"""Select regions of interest in a contour, by loudness threshold or
around detected syllable nuclei, at three sparsification levels."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import LengthMismatch
from .features import FrameTrack, UNVOICED_BELOW_HZ

# Loudness-threshold percentiles per level; higher level keeps fewer frames.
HEURISTIC_PERCENTILE = {"low": 40.0, "medium": 60.0, "high": 80.0}
# Frames kept on each side of a syllable nucleus per level.
SYLLABLE_CONTEXT = {"low": 4, "medium": 2, "high": 0}

NUCLEUS_MIN_ABOVE_MEDIAN_DB = 2.0
NUCLEUS_MIN_DIP_DB = 2.0


class Technique(Enum):
    HEURISTIC = "heuristic"
    SYLLABLE = "syllable"


class Level(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass
class SparsifyConfig:
    technique: Technique = Technique.HEURISTIC
    level: Level = Level.MEDIUM
    smoothing_radius_frames: int = 2


@dataclass
class SparseTrack:
    """A contour with a keep mask; dropped frames hold NaN."""

    values: np.ndarray
    keep_mask: np.ndarray
    hop_s: float

    @classmethod
    def from_track(cls, track: FrameTrack, keep_mask: np.ndarray) -> "SparseTrack":
        keep_mask = np.asarray(keep_mask, dtype=bool)
        if len(keep_mask) != len(track):
            raise LengthMismatch("keep mask does not match track length")
        values = np.where(keep_mask, track.values, np.nan)
        return cls(values=values, keep_mask=keep_mask, hop_s=track.hop_s)

    def __len__(self) -> int:
        return len(self.values)

    def kept_count(self) -> int:
        return int(self.keep_mask.sum())


def _require_aligned(*tracks: FrameTrack) -> None:
    lengths = {len(t) for t in tracks}
    if len(lengths) > 1:
        raise LengthMismatch(f"tracks have differing lengths {sorted(lengths)}")


def smooth_loudness(loudness: FrameTrack, radius: int) -> FrameTrack:
    """Centered moving average; edges average over available neighbors."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    x = loudness.values
    if radius == 0 or len(x) == 0:
        return FrameTrack(x.copy(), loudness.kind, loudness.hop_s, loudness.window_s)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(len(x))
    lo = np.maximum(idx - radius, 0)
    hi = np.minimum(idx + radius + 1, len(x))
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return FrameTrack(out, loudness.kind, loudness.hop_s, loudness.window_s)


def heuristic_sparsify(
    track: FrameTrack, loudness: FrameTrack, cfg: SparsifyConfig
) -> SparseTrack:
    """Keep frames whose smoothed loudness exceeds a per-clip percentile.

    The threshold is the level's percentile of the clip's own smoothed
    loudness; the comparison is strict, so a constant track keeps nothing.
    """
    _require_aligned(track, loudness)
    smoothed = smooth_loudness(loudness, cfg.smoothing_radius_frames).values
    threshold = np.percentile(smoothed, HEURISTIC_PERCENTILE[cfg.level.value])
    return SparseTrack.from_track(track, smoothed > threshold)


def detect_syllable_nuclei(
    loudness: FrameTrack, f0: FrameTrack, radius: int = 2
) -> list[int]:
    """Find syllable nuclei as qualifying loudness peaks.

    Steps: smooth the loudness; take local maxima as candidates; drop peaks
    not above median + 2 dB; drop peaks whose preceding dip (minimum since
    the previous surviving peak, or track start) is less than 2 dB below
    the peak; drop peaks in unvoiced frames (F0 below 40 Hz).
    """
    _require_aligned(loudness, f0)
    smoothed = smooth_loudness(loudness, radius).values
    n = len(smoothed)
    if n < 3:
        return []

    candidates = [
        i
        for i in range(1, n - 1)
        if smoothed[i] > smoothed[i - 1] and smoothed[i] > smoothed[i + 1]
    ]
    threshold = np.median(smoothed) + NUCLEUS_MIN_ABOVE_MEDIAN_DB
    candidates = [i for i in candidates if smoothed[i] > threshold]

    with_dip = []
    prev_kept = 0
    for i in candidates:
        dip = smoothed[prev_kept:i].min()
        if smoothed[i] - dip >= NUCLEUS_MIN_DIP_DB:
            with_dip.append(i)
            prev_kept = i

    return [i for i in with_dip if f0.values[i] >= UNVOICED_BELOW_HZ]


def syllable_sparsify(
    track: FrameTrack, loudness: FrameTrack, f0: FrameTrack, cfg: SparsifyConfig
) -> SparseTrack:
    """Keep a fixed context window of frames around each syllable nucleus."""
    _require_aligned(track, loudness, f0)
    context = SYLLABLE_CONTEXT[cfg.level.value]
    nuclei = detect_syllable_nuclei(loudness, f0, radius=cfg.smoothing_radius_frames)
    keep = np.zeros(len(track), dtype=bool)
    for i in nuclei:
        keep[max(0, i - context): i + context + 1] = True
    return SparseTrack.from_track(track, keep)


def sparsify(
    track: FrameTrack, loudness: FrameTrack, f0: FrameTrack, cfg: SparsifyConfig
) -> SparseTrack:
    """Dispatch to the configured sparsification technique."""
    if cfg.technique is Technique.HEURISTIC:
        return heuristic_sparsify(track, loudness, cfg)
    return syllable_sparsify(track, loudness, f0, cfg)
