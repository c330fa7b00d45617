"""Scikit-learn style estimators wrapping the pipeline stages.

Each stage transforms a list of domain objects, so the stages compose with
sklearn.pipeline.Pipeline and play well with get_params/set_params/clone:

    Pipeline([
        ("features", FeatureExtractor()),
        ("sparsify", ContourSparsifier(contour="f0", level="medium")),
        ("tokenize", MelodyTokenizer()),
        ("melodize", GapFillGenerator(steps=500)),
    ])
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .audio import AudioClip
from .features import FeatureBundle, extract_features
from .model import train_model
from .pipeline import denoise_infer, gapfill_infer
from .sparsify import Level, SparsifyConfig, Technique, sparsify
from .symbolic import TokenSeq, tracks_to_tokens
from .taskgen import Task


def _as_clips(X) -> list[AudioClip]:
    clips = list(X)
    for clip in clips:
        if not isinstance(clip, AudioClip):
            raise TypeError(f"expected AudioClip, got {type(clip).__name__}")
    return clips


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """AudioClip -> FeatureBundle, one per input clip. Stateless."""

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[FeatureBundle]:
        return [extract_features(clip) for clip in _as_clips(X)]


class ContourSparsifier(TransformerMixin, BaseEstimator):
    """FeatureBundle -> SparseTrack for one chosen contour."""

    def __init__(self, contour="f0", technique="heuristic", level="medium",
                 smoothing_radius=2):
        self.contour = contour
        self.technique = technique
        self.level = level
        self.smoothing_radius = smoothing_radius

    def _config(self) -> SparsifyConfig:
        return SparsifyConfig(
            technique=Technique(self.technique),
            level=Level(self.level),
            smoothing_radius_frames=self.smoothing_radius,
        )

    def fit(self, X, y=None):
        self._config()  # validates the enum parameters
        return self

    def transform(self, X):
        from .features import TrackKind

        cfg = self._config()
        kind = TrackKind(self.contour)
        return [
            sparsify(bundle.track(kind), bundle.loudness, bundle.f0, cfg)
            for bundle in X
        ]


class MelodyTokenizer(TransformerMixin, BaseEstimator):
    """FrameTrack or SparseTrack -> TokenSeq. Stateless."""

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[TokenSeq]:
        return [tracks_to_tokens(track) for track in X]


class _GeneratorBase(BaseEstimator):
    task: Task

    def __init__(self, d_model=64, n_layers=2, n_heads=2, d_ff=128, rel_window=32,
                 dropout=0.1, steps=1000, batch_size=8, warmup=400, seed=0):
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.rel_window = rel_window
        self.dropout = dropout
        self.steps = steps
        self.batch_size = batch_size
        self.warmup = warmup
        self.seed = seed

    def _spec(self):
        from .model import ModelSpec

        return ModelSpec(
            self.task,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ff=self.d_ff,
            dropout=self.dropout,
            rel_window=self.rel_window,
        )

    def fit(self, X, y=None):
        trainer, history = train_model(
            list(X),
            self.task,
            spec=self._spec(),
            steps=self.steps,
            seed=self.seed,
            batch_size=self.batch_size,
            warmup=self.warmup,
        )
        self.model_ = trainer.model
        self.history_ = history
        return self


class GapFillGenerator(_GeneratorBase):
    """Trainable gap-filling melodizer: fit on a token corpus, then predict
    fills a gapped TokenSeq per input."""

    task = Task.GAPFILL

    def __init__(self, d_model=64, n_layers=2, n_heads=2, d_ff=128, rel_window=32,
                 dropout=0.1, steps=1000, batch_size=8, warmup=400, seed=0,
                 temperature=1.0):
        super().__init__(d_model, n_layers, n_heads, d_ff, rel_window, dropout,
                         steps, batch_size, warmup, seed)
        self.temperature = temperature

    def predict(self, X) -> list[TokenSeq]:
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(self.seed)
        return [
            gapfill_infer(seq, self.model_, rng, self.temperature)
            if seq.has_gaps() else seq
            for seq in X
        ]

    def transform(self, X):
        return self.predict(X)


class DenoiseGenerator(_GeneratorBase):
    """Trainable denoising melodizer: fit on a token corpus, then predict
    rewrites each TokenSeq at the same length."""

    task = Task.DENOISE

    def predict(self, X) -> list[TokenSeq]:
        check_is_fitted(self, "model_")
        return [denoise_infer(seq, self.model_) for seq in X]

    def transform(self, X):
        return self.predict(X)
