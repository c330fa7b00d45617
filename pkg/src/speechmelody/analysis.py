"""Interval-distribution statistics over token sequences, for comparing
raw speech contours against model outputs."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyHistogram
from .symbolic import TokenSeq, tokens_to_notes

MAX_BUCKET = 24  # the last bucket aggregates every interval >= 24 semitones
LARGE_INTERVAL = 5


@dataclass
class IntervalHistogram:
    """Counts of absolute semitone distances between consecutive notes."""

    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def normalized(self) -> dict[int, float]:
        total = self.total
        if total == 0:
            return {k: 0.0 for k in self.counts}
        return {k: v / total for k, v in self.counts.items()}

    def chromatic_fraction(self) -> float:
        """Share of 1-semitone intervals among pitch-changing intervals."""
        moving = self.total - self.counts.get(0, 0)
        if moving == 0:
            return 0.0
        return self.counts.get(1, 0) / moving

    def large_fraction(self, threshold: int = LARGE_INTERVAL) -> float:
        if self.total == 0:
            return 0.0
        big = sum(v for k, v in self.counts.items() if k >= threshold)
        return big / self.total


@dataclass
class DivergenceReport:
    tv_distance: float
    chromatic_fraction_a: float
    chromatic_fraction_b: float
    large_fraction_a: float
    large_fraction_b: float

    def to_dict(self) -> dict:
        return {
            "tv_distance": self.tv_distance,
            "chromatic_fraction": [self.chromatic_fraction_a, self.chromatic_fraction_b],
            "large_interval_fraction": [self.large_fraction_a, self.large_fraction_b],
        }


def interval_histogram(seqs: list[TokenSeq]) -> IntervalHistogram:
    """Histogram of |key_{i+1} - key_i| over consecutive notes.

    Silence between notes does not break adjacency; intervals accumulate
    across all sequences.
    """
    counts = {k: 0 for k in range(MAX_BUCKET + 1)}
    for seq in seqs:
        keys = [note.key for note in tokens_to_notes(seq)]
        for a, b in zip(keys, keys[1:]):
            counts[min(abs(b - a), MAX_BUCKET)] += 1
    return IntervalHistogram(counts)


def compare(a: IntervalHistogram, b: IntervalHistogram) -> DivergenceReport:
    """Total-variation distance plus the chromatic and large-interval
    fractions of both histograms."""
    if a.total == 0 or b.total == 0:
        raise EmptyHistogram("cannot compare histograms with zero intervals")
    pa, pb = a.normalized(), b.normalized()
    buckets = set(pa) | set(pb)
    tv = 0.5 * sum(abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in buckets)
    return DivergenceReport(
        tv_distance=tv,
        chromatic_fraction_a=a.chromatic_fraction(),
        chromatic_fraction_b=b.chromatic_fraction(),
        large_fraction_a=a.large_fraction(),
        large_fraction_b=b.large_fraction(),
    )
