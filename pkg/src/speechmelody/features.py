"""Per-frame prosodic feature extraction: F0, formants F1-F3, loudness.

All extractors share the same framing (50 ms window, 20 ms hop) so the
resulting tracks are aligned frame for frame.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio import AudioClip
from .errors import ClipTooShort

WINDOW_S = 0.050
HOP_S = 0.020
LOUDNESS_FLOOR_DB = -80.0

F0_MIN_HZ = 60.0
F0_MAX_HZ = 500.0
UNVOICED_BELOW_HZ = 40.0
PERIODICITY_THRESHOLD = 0.15

PREEMPHASIS = 0.97
FORMANT_MAX_BANDWIDTH_HZ = 400.0
FORMANT_MIN_HZ = 90.0
FORMANT_MAX_HZ = 8000.0


class TrackKind(Enum):
    F0 = "f0"
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"
    LOUDNESS = "loudness"


@dataclass
class FrameTrack:
    """Scalar-per-frame time series (Hz or dB) on the shared 20 ms grid.

    Hz-valued tracks use 0.0 for unvoiced/absent frames.
    """

    values: np.ndarray
    kind: TrackKind
    hop_s: float = HOP_S
    window_s: float = WINDOW_S

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.values)

    def times(self) -> np.ndarray:
        """Start time of each frame in seconds."""
        return np.arange(len(self.values)) * self.hop_s


@dataclass
class FeatureBundle:
    """The five aligned tracks extracted from one clip."""

    f0: FrameTrack
    f1: FrameTrack
    f2: FrameTrack
    f3: FrameTrack
    loudness: FrameTrack
    source_duration_s: float = 0.0

    def track(self, kind: TrackKind) -> FrameTrack:
        return {
            TrackKind.F0: self.f0,
            TrackKind.F1: self.f1,
            TrackKind.F2: self.f2,
            TrackKind.F3: self.f3,
            TrackKind.LOUDNESS: self.loudness,
        }[kind]


def frame_count(n_samples: int, sample_rate: int) -> int:
    win = int(round(WINDOW_S * sample_rate))
    hop = int(round(HOP_S * sample_rate))
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def _frames(clip: AudioClip) -> np.ndarray:
    win = int(round(WINDOW_S * clip.sample_rate))
    hop = int(round(HOP_S * clip.sample_rate))
    if len(clip.samples) < win:
        raise ClipTooShort(f"need at least {win} samples, got {len(clip.samples)}")
    return np.lib.stride_tricks.sliding_window_view(clip.samples, win)[::hop]


# --- fundamental frequency -------------------------------------------------

def _cmndf(frame: np.ndarray, max_lag: int) -> np.ndarray:
    """Cumulative-mean-normalized difference function for lags 0..max_lag."""
    x = frame - frame.mean()
    w = len(x) - max_lag  # fixed integration window so all lags compare fairly
    head = x[:w]
    energy_head = float(np.dot(head, head))
    sq = x * x
    csum = np.concatenate(([0.0], np.cumsum(sq)))
    lag_energy = csum[np.arange(max_lag + 1) + w] - csum[: max_lag + 1]
    cross = np.correlate(x, head, mode="valid")[: max_lag + 1]
    diff = energy_head + lag_energy - 2.0 * cross
    diff = np.maximum(diff, 0.0)

    out = np.ones(max_lag + 1)
    running = np.cumsum(diff[1:])
    nonzero = running > 0
    lags = np.arange(1, max_lag + 1, dtype=np.float64)
    out[1:][nonzero] = diff[1:][nonzero] * lags[nonzero] / running[nonzero]
    return out


def _parabolic_refine(values: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(values) - 1:
        return float(i)
    a, b, c = values[i - 1], values[i], values[i + 1]
    denom = a - 2.0 * b + c
    if denom == 0:
        return float(i)
    delta = 0.5 * (a - c) / denom
    return i + float(np.clip(delta, -1.0, 1.0))


def extract_f0(clip: AudioClip) -> FrameTrack:
    """Per-frame F0 contour in Hz; unvoiced frames emit 0.0.

    Periodicity is measured with the cumulative-mean-normalized difference
    function; a frame is voiced when the minimum over the search range is
    below PERIODICITY_THRESHOLD. The confidence is a ratio, so voicing decisions
    are invariant to amplitude scaling.
    """
    sr = clip.sample_rate
    lag_min = int(sr / F0_MAX_HZ)
    lag_max = int(np.ceil(sr / F0_MIN_HZ))
    values = []
    for frame in _frames(clip):
        c = _cmndf(frame, lag_max + 1)
        region = c[lag_min: lag_max + 1]
        if region.min() >= PERIODICITY_THRESHOLD:
            values.append(0.0)
            continue
        below = np.nonzero(region < PERIODICITY_THRESHOLD)[0]
        lag = lag_min + int(below[0])
        while lag + 1 <= lag_max and c[lag + 1] < c[lag]:
            lag += 1
        f0 = sr / _parabolic_refine(c, lag)
        values.append(f0 if f0 >= UNVOICED_BELOW_HZ else 0.0)
    return FrameTrack(np.array(values), TrackKind.F0)


# --- formants ----------------------------------------------------------------

def _levinson(r: np.ndarray, order: int) -> np.ndarray:
    """Levinson-Durbin recursion; returns error-filter coefficients [1, a1..ap]."""
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        a[1:i] = a[1:i] + k * a[i - 1:0:-1]
        a[i] = k
        err *= 1.0 - k * k
        if err <= 1e-12 * r[0]:
            break
    return a


def _lpc_formants(frame: np.ndarray, window: np.ndarray, sr: int, order: int) -> list[float]:
    w = frame * window
    r = np.array([np.dot(w[: len(w) - k], w[k:]) for k in range(order + 1)])
    if r[0] <= 0:
        return []
    a = _levinson(r, order)
    roots = np.roots(a)
    roots = roots[np.imag(roots) > 1e-9]
    freqs = np.angle(roots) * sr / (2.0 * np.pi)
    bws = -(sr / np.pi) * np.log(np.abs(roots))
    keep = (bws < FORMANT_MAX_BANDWIDTH_HZ) & (freqs >= FORMANT_MIN_HZ) & (freqs <= FORMANT_MAX_HZ)
    return sorted(freqs[keep].tolist())


def extract_formants(clip: AudioClip, f0: FrameTrack | None = None):
    """Per-frame F1, F2, F3 in Hz via frame-wise linear prediction.

    Pre-emphasized, Hann-windowed frames are fit with an order
    2 + sample_rate/1000 predictor; formants are polynomial roots with
    bandwidth under 400 Hz, sorted ascending. Frames judged unvoiced by
    the F0 extractor emit 0.0 in all three tracks, as do missing formants.
    """
    if f0 is None:
        f0 = extract_f0(clip)
    order = 2 + clip.sample_rate // 1000
    pre = np.append(clip.samples[0], clip.samples[1:] - PREEMPHASIS * clip.samples[:-1])
    frames = _frames(AudioClip(pre, clip.sample_rate))
    window = np.hanning(frames.shape[1])
    out = np.zeros((3, len(frames)))
    for i, frame in enumerate(frames):
        if i >= len(f0.values) or f0.values[i] == 0.0:
            continue
        found = _lpc_formants(frame, window, clip.sample_rate, order)
        for j, freq in enumerate(found[:3]):
            out[j, i] = freq
    return (
        FrameTrack(out[0], TrackKind.F1),
        FrameTrack(out[1], TrackKind.F2),
        FrameTrack(out[2], TrackKind.F3),
    )


# --- loudness ---------------------------------------------------------------

def a_weighting_db(freq_hz: np.ndarray) -> np.ndarray:
    """A-weighting gain curve in dB, normalized to exactly 0 dB at 1 kHz."""

    def response(f):
        f2 = np.asarray(f, dtype=np.float64) ** 2
        num = (12194.217 ** 2) * f2 ** 2
        den = (
            (f2 + 20.598997 ** 2)
            * np.sqrt((f2 + 107.65265 ** 2) * (f2 + 737.86223 ** 2))
            * (f2 + 12194.217 ** 2)
        )
        return num / den

    r = response(freq_hz)
    ref = response(1000.0)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(r / ref)


def extract_loudness(clip: AudioClip) -> FrameTrack:
    """A-weighted loudness per frame in dB, floored at -80 dB.

    Each 50 ms Hann-windowed frame's magnitude-squared spectrum is weighted
    bin-wise by the squared A-weighting gain and averaged.
    """
    frames = _frames(clip)
    win = frames.shape[1]
    nfft = 1
    while nfft < win:
        nfft *= 2
    freqs = np.fft.rfftfreq(nfft, d=1.0 / clip.sample_rate)
    gain = 10.0 ** (a_weighting_db(freqs) / 20.0)
    spectra = np.abs(np.fft.rfft(frames * np.hanning(win), n=nfft)) ** 2
    power = (spectra * gain ** 2).mean(axis=1)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power)
    return FrameTrack(np.maximum(db, LOUDNESS_FLOOR_DB), TrackKind.LOUDNESS)


def extract_features(clip: AudioClip) -> FeatureBundle:
    """Extract all five aligned tracks in one pass."""
    f0 = extract_f0(clip)
    f1, f2, f3 = extract_formants(clip, f0=f0)
    loudness = extract_loudness(clip)
    return FeatureBundle(f0, f1, f2, f3, loudness, source_duration_s=clip.duration_s)
