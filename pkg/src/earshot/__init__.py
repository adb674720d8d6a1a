"""earshot: acoustic scene classification with duration-dependent evaluation.

Pipeline: WAV snippets -> 4 s segments -> 250 ms frames -> low-level
features (gammatone / MFCC / log-frequency filterbank, each with and
without background) -> label-tree embedding tensors -> CNN / GRU-RNN /
two-stream fusion classifiers -> linear SVMs -> posterior fusion and
multiplicative segment aggregation -> accuracy and F1 as a function of
listening time.
"""

__version__ = "0.1.0"

from . import audio, config, embedding, evalharness, features, fusion, models, nn
from .errors import ConfigError, DataError, EarshotError, NumericalError

__all__ = [
    "ConfigError",
    "DataError",
    "EarshotError",
    "NumericalError",
    "audio",
    "config",
    "embedding",
    "evalharness",
    "features",
    "fusion",
    "models",
    "nn",
    "__version__",
]
