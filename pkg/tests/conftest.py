"""Shared fixtures and signal synthesis helpers."""

import struct

import numpy as np
import pytest

from speechmelody.audio import AudioClip, CANONICAL_RATE

ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, ok in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


def sine_clip(freq_hz, duration_s=1.0, amplitude=1.0, rate=CANONICAL_RATE):
    t = np.arange(int(duration_s * rate)) / rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq_hz * t), rate)


def silence_clip(duration_s=1.0, rate=CANONICAL_RATE):
    return AudioClip(np.zeros(int(duration_s * rate)), rate)


def noise_clip(duration_s=1.0, rate=CANONICAL_RATE, seed=0):
    rng = np.random.default_rng(seed)
    return AudioClip(rng.uniform(-1, 1, int(duration_s * rate)), rate)


def resonator_coeffs(freq_hz, bandwidth_hz, rate):
    """Second-order IIR resonator y[n] = x[n] + b1*y[n-1] + b2*y[n-2]."""
    r = np.exp(-np.pi * bandwidth_hz / rate)
    theta = 2 * np.pi * freq_hz / rate
    return 2 * r * np.cos(theta), -(r ** 2)


def vowel_clip(formants, pitch_hz=100.0, duration_s=1.0, rate=CANONICAL_RATE):
    """Impulse train passed through cascaded resonators: a synthetic vowel."""
    n = int(duration_s * rate)
    x = np.zeros(n)
    period = int(rate / pitch_hz)
    x[::period] = 1.0
    for freq, bw in formants:
        b1, b2 = resonator_coeffs(freq, bw, rate)
        y = np.zeros(n)
        for i in range(n):
            y[i] = x[i]
            if i >= 1:
                y[i] += b1 * y[i - 1]
            if i >= 2:
                y[i] += b2 * y[i - 2]
        x = y
    x = x / np.max(np.abs(x))
    return AudioClip(x, rate)


def pcm16_wav_bytes(samples, rate, channels=1):
    """Hand-rolled PCM16 WAV encoder, independent of the package writer."""
    pcm = np.clip(np.round(np.asarray(samples) * 32767), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    fmt = struct.pack("<HHIIHH", 1, channels, rate, rate * 2 * channels, 2 * channels, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def float32_wav_bytes(samples, rate, channels=1):
    payload = np.asarray(samples, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, channels, rate, rate * 4 * channels, 4 * channels, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


@pytest.fixture(scope="session")
def tiny_checkpoint_dir(tmp_path_factory):
    """Directory with a barely-trained checkpoint per task variant."""
    from speechmelody.model import ModelSpec, save_checkpoint, train_model
    from speechmelody.symbolic import TokenSeq
    from speechmelody.taskgen import Task

    rng = np.random.default_rng(0)
    corpus = [
        TokenSeq.from_content(rng.integers(30, 60, 160).tolist()) for _ in range(4)
    ]
    directory = tmp_path_factory.mktemp("checkpoints")
    for task, filename in [(Task.GAPFILL, "gapfill.ckpt"), (Task.DENOISE, "denoise.ckpt")]:
        spec = ModelSpec(task, d_model=16, n_layers=1, n_heads=2, d_ff=16, rel_window=8)
        trainer, _ = train_model(corpus, task, spec=spec, steps=30, seed=1,
                                 batch_size=2, warmup=40)
        save_checkpoint(directory / filename, trainer.model, trainer.optimizer,
                        trainer.step)
    return directory


@pytest.fixture(scope="session")
def speech_like_clip():
    """Bursty, pitched clip standing in for a short utterance."""
    rate = CANONICAL_RATE
    rng = np.random.default_rng(42)
    total = np.zeros(int(2.0 * rate))
    t = np.arange(len(total)) / rate
    # three voiced bursts with different pitch glides
    for start, dur, f_lo, f_hi in [(0.1, 0.4, 120, 180), (0.7, 0.35, 200, 150), (1.3, 0.5, 100, 240)]:
        i0, i1 = int(start * rate), int((start + dur) * rate)
        seg_t = t[i0:i1] - t[i0]
        freq = np.linspace(f_lo, f_hi, i1 - i0)
        phase = 2 * np.pi * np.cumsum(freq) / rate
        total[i0:i1] = 0.8 * np.sin(phase) * np.hanning(i1 - i0)
    total += 0.002 * rng.standard_normal(len(total))
    return AudioClip(total / np.max(np.abs(total)), rate)
