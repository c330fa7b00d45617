"""Training-pair construction for the two generation tasks: span gap-masking
and rounded-Gaussian pitch noising, plus epoch batching with transposition
augmentation and the JSON-lines corpus format."""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ContentTooShort,
    EmptyCorpus,
    MaskOutOfBounds,
    PlacementFailed,
    TranspositionOutOfRange,
)
from .symbolic import GAP, KEY_MAX, KEY_MIN, TokenSeq, run_length_encode, transpose

SPAN_LENGTHS = (25, 50, 75, 100, 125, 150)
GAP_BUDGET = 150
MAX_COUNT = 500
PLACEMENT_RETRIES = 100


class Task(Enum):
    GAPFILL = "gapfill"
    DENOISE = "denoise"


@dataclass(frozen=True)
class GapMask:
    """Non-overlapping (start, length) spans over content positions."""

    spans: tuple[tuple[int, int], ...]

    def total(self) -> int:
        return sum(length for _, length in self.spans)

    def indices(self) -> list[int]:
        out = []
        for start, length in self.spans:
            out.extend(range(start, start + length))
        return out


@dataclass
class TrainPair:
    """One training example; the target layout depends on the task."""

    task: Task
    encoder_input: TokenSeq
    target_runs: list[tuple[int, int]] = field(default_factory=list)  # gap-fill
    target_seq: TokenSeq | None = None                                # denoise
    loss_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.loss_mask is None:
            n = len(self.target_runs) if self.task is Task.GAPFILL else (
                self.target_seq.content_len if self.target_seq else 0
            )
            self.loss_mask = np.ones(n, dtype=bool)


def sample_gap_mask(content_len: int, rng: np.random.Generator) -> GapMask:
    """Draw a multiset of span lengths summing to the 150-frame budget, then
    place the spans one at a time uniformly among starts that avoid the
    spans already placed. Infeasible placements trigger a wholesale
    resample, up to a bounded retry budget."""
    if content_len < GAP_BUDGET:
        raise ContentTooShort(f"need content length >= {GAP_BUDGET}, got {content_len}")

    for _ in range(PLACEMENT_RETRIES):
        remaining = GAP_BUDGET
        lengths = []
        while remaining > 0:
            feasible = [s for s in SPAN_LENGTHS if s <= remaining]
            lengths.append(int(rng.choice(feasible)))
            remaining -= lengths[-1]

        occupied = np.zeros(content_len, dtype=bool)
        spans = []
        ok = True
        for length in lengths:
            starts = [
                s for s in range(content_len - length + 1)
                if not occupied[s:s + length].any()
            ]
            if not starts:
                ok = False
                break
            start = int(rng.choice(starts))
            occupied[start:start + length] = True
            spans.append((start, length))
        if ok:
            return GapMask(tuple(sorted(spans)))
    raise PlacementFailed(f"no valid placement after {PLACEMENT_RETRIES} attempts")


def apply_gap_mask(seq: TokenSeq, mask: GapMask) -> TrainPair:
    """Replace masked positions with GAP and build run-length targets.

    Each span is run-length encoded independently and the spans' runs are
    concatenated left to right, so runs never cross a span boundary.
    """
    if seq.has_gaps():
        raise ValueError("sequence already contains gap tokens")
    content = list(seq.content)
    for start, length in mask.spans:
        if start < 0 or start + length > len(content):
            raise MaskOutOfBounds(
                f"span ({start}, {length}) outside content of length {len(content)}"
            )
    runs = []
    for start, length in sorted(mask.spans):
        runs.extend(run_length_encode(content[start:start + length]))
    masked = content[:]
    for i in mask.indices():
        masked[i] = GAP
    return TrainPair(
        task=Task.GAPFILL,
        encoder_input=TokenSeq.from_content(masked),
        target_runs=runs,
    )


def apply_noise(seq: TokenSeq, rng: np.random.Generator) -> TrainPair:
    """Perturb each pitched token by a rounded standard-normal offset.

    Silence stays silence, pitched tokens are clamped to the key range, and
    the start/end tokens are untouched; the clean sequence is the target.
    """
    if seq.has_gaps():
        raise ValueError("cannot noise a sequence containing gap tokens")
    content = np.array(seq.content, dtype=np.int64)
    offsets = np.rint(rng.standard_normal(len(content))).astype(np.int64)
    pitched = (content >= KEY_MIN) & (content <= KEY_MAX)
    noisy = np.where(pitched, np.clip(content + offsets, KEY_MIN, KEY_MAX), content)
    return TrainPair(
        task=Task.DENOISE,
        encoder_input=TokenSeq.from_content(noisy.tolist()),
        target_seq=seq,
    )


def _random_transposition(seq: TokenSeq, rng: np.random.Generator) -> TokenSeq:
    while True:
        k = int(rng.integers(-5, 6))
        try:
            return transpose(seq, k)
        except TranspositionOutOfRange:
            continue


def make_batches(
    corpus: list[TokenSeq],
    task: Task,
    batch_size: int,
    rng: np.random.Generator,
):
    """Infinite stream of TrainPair batches.

    Every epoch reshuffles the corpus, redraws each sequence's transposition
    uniformly in [-5, +5] (resampling draws that would leave the key range)
    and applies fresh task corruption. A fixed generator seed reproduces the
    stream exactly.
    """
    if not corpus:
        raise EmptyCorpus("cannot batch an empty corpus")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    while True:
        order = rng.permutation(len(corpus))
        for lo in range(0, len(order), batch_size):
            batch = []
            for idx in order[lo:lo + batch_size]:
                seq = _random_transposition(corpus[idx], rng)
                if task is Task.GAPFILL:
                    mask = sample_gap_mask(seq.content_len, rng)
                    batch.append(apply_gap_mask(seq, mask))
                else:
                    batch.append(apply_noise(seq, rng))
            yield batch


def save_corpus(path, corpus: list[TokenSeq]) -> None:
    """Write one JSON record per sequence: {"tokens": [...]}."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in corpus:
            fh.write(json.dumps({"tokens": list(seq.tokens)}) + "\n")


def load_corpus(path) -> list[TokenSeq]:
    corpus = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            corpus.append(TokenSeq(tuple(json.loads(line)["tokens"])))
    return corpus
