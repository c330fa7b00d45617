"""WAV decoding, normalization and resampling.

Everything downstream of this module sees one canonical signal form:
mono float64 samples in [-1, 1] at 16 kHz.
"""

import math
import struct

import numpy as np
from scipy.signal import resample_poly

from .errors import EmptyAudio, InvalidRate, MalformedWav, UnsupportedFormat

CANONICAL_RATE = 16000
MIN_RATE = 8000
MAX_RATE = 48000

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


class AudioClip:
    """Mono audio signal with a fixed sample rate."""

    def __init__(self, samples, sample_rate: int):
        self.samples = np.asarray(samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if sample_rate <= 0:
            raise InvalidRate(f"sample_rate must be positive, got {sample_rate}")
        self.sample_rate = int(sample_rate)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AudioClip)
            and self.sample_rate == other.sample_rate
            and np.array_equal(self.samples, other.samples)
        )

    def __repr__(self) -> str:
        return f"AudioClip({len(self.samples)} samples @ {self.sample_rate} Hz)"


def _read_chunks(data: bytes):
    """Yield (chunk_id, payload) pairs from the RIFF body."""
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        payload = data[pos + 8:pos + 8 + size]
        if len(payload) < size:
            raise MalformedWav(f"chunk {cid!r} declares {size} bytes, {len(payload)} present")
        yield cid, payload
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def load_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte stream into the canonical clip form.

    Accepts PCM 16-bit and IEEE-float 32-bit files with 1-2 channels at
    8-48 kHz. Channels are averaged to mono, the result is resampled to
    16 kHz and peak-normalized to max |sample| = 1 (a no-op on silence).
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav("missing RIFF/WAVE header")

    fmt = None
    payload = None
    for cid, chunk in _read_chunks(data):
        if cid == b"fmt " and fmt is None:
            if len(chunk) < 16:
                raise MalformedWav("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", chunk, 0)
        elif cid == b"data" and payload is None:
            payload = chunk
    if fmt is None:
        raise MalformedWav("no fmt chunk")
    if payload is None:
        raise MalformedWav("no data chunk")

    audio_format, n_channels, sample_rate, _, block_align, bits = fmt
    if audio_format not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormat(f"audio format tag {audio_format} (compressed codecs not supported)")
    if not 1 <= n_channels <= 2:
        raise UnsupportedFormat(f"{n_channels} channels (only mono/stereo supported)")
    if not MIN_RATE <= sample_rate <= MAX_RATE:
        raise UnsupportedFormat(f"sample rate {sample_rate} outside [{MIN_RATE}, {MAX_RATE}]")

    if audio_format == _WAVE_FORMAT_PCM:
        if bits != 16:
            raise UnsupportedFormat(f"{bits}-bit PCM (only 16-bit supported)")
        frame_bytes = 2 * n_channels
        raw = np.frombuffer(payload[:len(payload) - len(payload) % frame_bytes], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    else:
        if bits != 32:
            raise UnsupportedFormat(f"{bits}-bit float (only 32-bit supported)")
        frame_bytes = 4 * n_channels
        raw = np.frombuffer(payload[:len(payload) - len(payload) % frame_bytes], dtype="<f4")
        samples = raw.astype(np.float64)
    if block_align not in (0, frame_bytes):
        raise MalformedWav(f"block_align {block_align} inconsistent with format")

    if samples.size == 0:
        raise EmptyAudio("data chunk holds zero samples")
    if n_channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)

    clip = AudioClip(samples, sample_rate)
    if sample_rate != CANONICAL_RATE:
        clip = resample(clip, CANONICAL_RATE)

    peak = np.max(np.abs(clip.samples))
    if peak > 0:
        clip = AudioClip(clip.samples / peak, clip.sample_rate)
    return clip


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to target_rate."""
    if not MIN_RATE <= target_rate <= MAX_RATE:
        raise InvalidRate(f"target rate {target_rate} outside [{MIN_RATE}, {MAX_RATE}]")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    g = math.gcd(target_rate, clip.sample_rate)
    out = resample_poly(clip.samples, target_rate // g, clip.sample_rate // g)
    return AudioClip(out, target_rate)


def write_wav(clip: AudioClip) -> bytes:
    """Encode a clip as a mono 16-bit PCM WAV byte stream."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    fmt = struct.pack(
        "<HHIIHH", _WAVE_FORMAT_PCM, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body
