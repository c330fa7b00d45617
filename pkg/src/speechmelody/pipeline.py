"""End-to-end conversion: speech clip -> contour -> (sparsify ->) model ->
tokens -> velocity-mapped notes -> MIDI blobs."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch

from .audio import AudioClip
from .errors import ClipTooShort, MissingCheckpoint, ModelVariantMismatch, NoGaps
from .features import LOUDNESS_FLOOR_DB, FeatureBundle, FrameTrack, TrackKind, extract_features
from .midi import write_midi
from .model import MelodyTransformer, unscale_count
from .sparsify import SparsifyConfig, smooth_loudness, sparsify
from .symbolic import GAP, SILENCE, START, TokenSeq, tokens_to_notes, tracks_to_tokens
from .taskgen import Task

MIN_CLIP_S = 0.5

VELOCITY_LOW = 20
VELOCITY_HIGH = 127


class Contour(Enum):
    F0 = "f0"
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"

    def track_kind(self) -> TrackKind:
        return TrackKind(self.value)


@dataclass
class ConvertConfig:
    model: Task = Task.DENOISE
    contour: Contour = Contour.F0
    sparsify: SparsifyConfig = field(default_factory=SparsifyConfig)
    seed: int = 0
    temperature: float = 1.0


@dataclass
class ConvertResult:
    raw_midi: bytes
    generated_midi: bytes
    raw_tokens: TokenSeq
    generated_tokens: TokenSeq
    sparse_midi: bytes | None = None
    sparse_tokens: TokenSeq | None = None


def map_velocity(loudness: FrameTrack, smoothing_radius: int = 2) -> np.ndarray:
    """Map the smoothed loudness onto MIDI velocities 0..127 per frame.

    The 5th..95th percentile range maps affinely onto [20, 127] with
    clamping; frames still at the dB floor map to velocity 0. Rounding is
    half-up.
    """
    smoothed = smooth_loudness(loudness, smoothing_radius).values
    at_floor = smoothed <= LOUDNESS_FLOOR_DB + 1e-9
    p5, p95 = np.percentile(smoothed, [5.0, 95.0])
    if p95 - p5 < 1e-12:
        scaled = np.full(len(smoothed), (VELOCITY_LOW + VELOCITY_HIGH) / 2.0)
    else:
        scaled = VELOCITY_LOW + (smoothed - p5) * (VELOCITY_HIGH - VELOCITY_LOW) / (p95 - p5)
    velocity = np.floor(np.clip(scaled, VELOCITY_LOW, VELOCITY_HIGH) + 0.5).astype(int)
    velocity[at_floor] = 0
    return velocity


def _check_variant(model: MelodyTransformer, expected: Task) -> None:
    if model.spec.variant is not expected:
        raise ModelVariantMismatch(
            f"model variant {model.spec.variant.value} cannot run {expected.value} inference"
        )


def _gap_regions(content: list[int]) -> list[tuple[int, int]]:
    """Maximal runs of GAP as (start, end) half-open intervals."""
    regions = []
    i = 0
    while i < len(content):
        if content[i] == GAP:
            j = i
            while j < len(content) and content[j] == GAP:
                j += 1
            regions.append((i, j))
            i = j
        else:
            i += 1
    return regions


def gapfill_infer(
    seq: TokenSeq,
    model: MelodyTransformer,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> TokenSeq:
    """Fill every gap region left to right by unrolling the decoder.

    Each step samples a pitch from the softmax and derives a count from the
    sigmoid head; a run longer than what remains of the current gap region
    is truncated to fit. Non-gap positions pass through untouched.
    """
    _check_variant(model, Task.GAPFILL)
    content = list(seq.content)
    regions = _gap_regions(content)
    if not regions:
        raise NoGaps("input sequence has no gap tokens")

    gen = torch.Generator().manual_seed(int(rng.integers(0, 2 ** 62)))
    model.eval()
    enc = torch.tensor([seq.tokens], dtype=torch.long)
    with torch.no_grad():
        memory = model.encode(enc)

    dec_tokens = [START]
    cursor = regions[0][0]
    region_idx = 0
    while region_idx < len(regions):
        dec = torch.tensor([dec_tokens], dtype=torch.long)
        with torch.no_grad():
            h = model.decode(dec, memory)
            logits = model.pitch_head(h)[0, -1]
            count_sig = torch.sigmoid(model.count_head(h))[0, -1, 0]
        probs = torch.softmax(logits / max(temperature, 1e-6), dim=-1)
        pitch = int(torch.multinomial(probs, 1, generator=gen))
        count = unscale_count(float(count_sig))

        _, region_end = regions[region_idx]
        take = min(count, region_end - cursor)  # extra tokens are discarded
        for i in range(cursor, cursor + take):
            content[i] = pitch
        cursor += take
        if cursor >= region_end:
            region_idx += 1
            if region_idx < len(regions):
                cursor = regions[region_idx][0]
        dec_tokens.append(pitch)

    return TokenSeq.from_content(content)


def denoise_infer(
    seq: TokenSeq,
    model: MelodyTransformer,
    rng: np.random.Generator | None = None,
    sample: bool = False,
) -> TokenSeq:
    """Unroll the decoder for exactly one step per content position.

    Decoding is argmax by default for reproducibility; pass sample=True
    with a generator to draw from the softmax instead.
    """
    _check_variant(model, Task.DENOISE)
    n_steps = seq.content_len
    if n_steps == 0:
        return TokenSeq.from_content([])

    gen = None
    if sample:
        if rng is None:
            raise ValueError("sampling requires a random generator")
        gen = torch.Generator().manual_seed(int(rng.integers(0, 2 ** 62)))

    model.eval()
    enc = torch.tensor([seq.tokens], dtype=torch.long)
    with torch.no_grad():
        memory = model.encode(enc)
    out: list[int] = []
    for _ in range(n_steps):
        dec = torch.tensor([[START] + out], dtype=torch.long)
        with torch.no_grad():
            h = model.decode(dec, memory)
            logits = model.pitch_head(h)[0, -1]
        if sample:
            pitch = int(torch.multinomial(torch.softmax(logits, -1), 1, generator=gen))
        else:
            pitch = int(torch.argmax(logits))
        out.append(pitch)
    return TokenSeq.from_content(out)


def convert(
    clip: AudioClip,
    cfg: ConvertConfig,
    models: dict[Task, MelodyTransformer],
    bundle: FeatureBundle | None = None,
) -> ConvertResult:
    """Run the full conversion for one clip and one configuration.

    A precomputed FeatureBundle may be passed to amortize extraction across
    several configurations of the same clip.
    """
    if clip.duration_s < MIN_CLIP_S:
        raise ClipTooShort(f"need at least {MIN_CLIP_S} s of audio")
    if cfg.model not in models:
        raise MissingCheckpoint(f"no checkpoint loaded for {cfg.model.value}")
    model = models[cfg.model]
    if bundle is None:
        bundle = extract_features(clip)

    contour = bundle.track(cfg.contour.track_kind())
    velocities = map_velocity(bundle.loudness)
    rng = np.random.default_rng(cfg.seed)

    raw_tokens = tracks_to_tokens(contour)
    raw_midi = write_midi(tokens_to_notes(raw_tokens, velocities))
    # an entirely unvoiced contour carries no constraints at all; emit
    # silence rather than unconditioned generation
    degenerate = all(t == SILENCE for t in raw_tokens.content)

    if cfg.model is Task.GAPFILL:
        sparse = sparsify(contour, bundle.loudness, bundle.f0, cfg.sparsify)
        sparse_tokens = tracks_to_tokens(sparse)
        kept_notes = tokens_to_notes(
            _silence_gaps(sparse_tokens), velocities
        )
        sparse_midi = write_midi(kept_notes)
        if degenerate:
            generated_tokens = raw_tokens
        elif sparse_tokens.has_gaps():
            generated_tokens = gapfill_infer(sparse_tokens, model, rng, cfg.temperature)
        else:
            generated_tokens = sparse_tokens
        generated_midi = write_midi(tokens_to_notes(generated_tokens, velocities))
        return ConvertResult(
            raw_midi=raw_midi,
            generated_midi=generated_midi,
            raw_tokens=raw_tokens,
            generated_tokens=generated_tokens,
            sparse_midi=sparse_midi,
            sparse_tokens=sparse_tokens,
        )

    generated_tokens = raw_tokens if degenerate else denoise_infer(raw_tokens, model)
    generated_midi = write_midi(tokens_to_notes(generated_tokens, velocities))
    return ConvertResult(
        raw_midi=raw_midi,
        generated_midi=generated_midi,
        raw_tokens=raw_tokens,
        generated_tokens=generated_tokens,
    )


def _silence_gaps(seq: TokenSeq) -> TokenSeq:
    """Render a gapped sequence's kept frames only (gaps become silence)."""
    return TokenSeq.from_content([0 if t == GAP else t for t in seq.content])
