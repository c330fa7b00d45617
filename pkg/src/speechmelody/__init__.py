"""Speech-to-melody toolkit: prosody extraction, sparsification, and
sequence-model generation of monophonic MIDI."""

__version__ = "0.1.0"

from .audio import AudioClip, load_wav, resample, write_wav
from .features import (
    FeatureBundle,
    FrameTrack,
    TrackKind,
    extract_f0,
    extract_features,
    extract_formants,
    extract_loudness,
)
from .sparsify import Level, SparseTrack, SparsifyConfig, Technique, sparsify
from .symbolic import (
    Note,
    PolyNote,
    PolyTrack,
    TokenSeq,
    hz_to_key,
    skyline,
    slice_corpus,
    tokens_to_notes,
    tracks_to_tokens,
    transpose,
)
from .midi import read_midi, write_midi
from .taskgen import Task, load_corpus, make_batches, save_corpus
from .model import (
    Checkpoint,
    MelodyTransformer,
    ModelSpec,
    Trainer,
    build_model,
    load_checkpoint,
    preset,
    save_checkpoint,
    train_model,
)
from .pipeline import Contour, ConvertConfig, ConvertResult, convert, denoise_infer, gapfill_infer, map_velocity
from .analysis import IntervalHistogram, compare, interval_histogram
from .estimators import (
    ContourSparsifier,
    DenoiseGenerator,
    FeatureExtractor,
    GapFillGenerator,
    MelodyTokenizer,
)

__all__ = [
    "AudioClip", "load_wav", "resample", "write_wav",
    "FrameTrack", "FeatureBundle", "TrackKind",
    "extract_f0", "extract_formants", "extract_loudness", "extract_features",
    "SparsifyConfig", "SparseTrack", "Technique", "Level", "sparsify",
    "TokenSeq", "Note", "PolyNote", "PolyTrack",
    "hz_to_key", "tracks_to_tokens", "tokens_to_notes", "skyline", "transpose",
    "slice_corpus", "read_midi", "write_midi",
    "Task", "make_batches", "save_corpus", "load_corpus",
    "ModelSpec", "MelodyTransformer", "Trainer", "Checkpoint", "preset",
    "train_model", "save_checkpoint", "load_checkpoint", "build_model",
    "Contour", "ConvertConfig", "ConvertResult", "convert",
    "gapfill_infer", "denoise_infer", "map_velocity",
    "IntervalHistogram", "interval_histogram", "compare",
    "FeatureExtractor", "ContourSparsifier", "MelodyTokenizer",
    "GapFillGenerator", "DenoiseGenerator",
    "__version__",
]
