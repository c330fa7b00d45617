"""Exception hierarchy shared across the package."""


class SpeechMelodyError(Exception):
    """Base class for all errors raised by this package."""


# --- audio ---

class MalformedWav(SpeechMelodyError):
    """The byte stream is not a structurally valid RIFF/WAVE file."""


class UnsupportedFormat(SpeechMelodyError):
    """The WAV file is valid but uses a codec/layout we do not decode."""


class EmptyAudio(SpeechMelodyError):
    """The audio payload contains zero samples."""


class InvalidRate(SpeechMelodyError):
    """Requested sample rate outside the supported range."""


# --- feature extraction / sparsification ---

class ClipTooShort(SpeechMelodyError):
    """Clip shorter than one analysis window."""


class LengthMismatch(SpeechMelodyError):
    """Frame tracks that must be aligned have different lengths."""


# --- symbolic ---

class GapTokenPresent(SpeechMelodyError):
    """Operation requires a gapless token sequence."""


class TranspositionOutOfRange(SpeechMelodyError):
    """Transposing would push a key outside the 88-key range."""


class MalformedMidi(SpeechMelodyError):
    """The byte stream is not a Standard MIDI File we can parse."""


# --- training-pair generation ---

class ContentTooShort(SpeechMelodyError):
    """Sequence content shorter than the gap-mask budget."""


class PlacementFailed(SpeechMelodyError):
    """Could not place all mask spans after the retry budget."""


class MaskOutOfBounds(SpeechMelodyError):
    """Gap mask refers to positions outside the sequence content."""


class EmptyCorpus(SpeechMelodyError):
    """No sequences available to batch."""


# --- model ---

class SequenceTooLong(SpeechMelodyError):
    """Input exceeds the model's maximum sequence length."""


class ShapeMismatch(SpeechMelodyError):
    """Tensor shapes do not match the expected target layout."""


class NonFiniteGradient(SpeechMelodyError):
    """A gradient tensor contains NaN or infinity."""


class CorruptCheckpoint(SpeechMelodyError):
    """Checkpoint file is truncated or not a checkpoint at all."""


class SpecMismatch(SpeechMelodyError):
    """Checkpoint was produced by a model with different hyperparameters."""


# --- inference / pipeline ---

class NoGaps(SpeechMelodyError):
    """Gap-filling requested on a sequence without gap tokens."""


class ModelVariantMismatch(SpeechMelodyError):
    """Checkpoint variant does not match the requested operation."""


class MissingCheckpoint(SpeechMelodyError):
    """No checkpoint available for the requested model variant."""


# --- analysis ---

class EmptyHistogram(SpeechMelodyError):
    """Interval statistics requested on a histogram with zero intervals."""
