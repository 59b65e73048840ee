"""Occlusion-driven spectral analysis of cough recordings.

The pipeline decodes WAV audio, decimates it, slices it into 45x100 power
spectrograms, scores them with a small CNN, explains the cough decisions with
occlusion maps, weights each patient's averaged spectrogram by its averaged
map and finally compares spectral features between diagnosis groups.
"""

from coughxai.errors import (
    ConfigError,
    CoughXAIError,
    DataError,
    DegenerateInputError,
    FormatError,
    UnsupportedFormatError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CoughXAIError",
    "DataError",
    "DegenerateInputError",
    "FormatError",
    "UnsupportedFormatError",
    "ValidationError",
    "__version__",
]
