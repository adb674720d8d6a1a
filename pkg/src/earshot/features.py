"""Per-frame low-level features and the 6-channel assembly.

Three feature kinds (gammatone spectral coefficients, MFCCs, log-frequency
filterbank coefficients), each computed with and without the background
noise floor, give 6 channels per frame. All functions are deterministic and
accept a single spectrum (2049,) or a batch (T, 2049).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import DataError

N_FFT = 4096
N_BINS = N_FFT // 2 + 1

GAMMATONE = "gammatone"
MFCC = "mfcc"
LOGFB = "logfb"
WITH_BG = "with_bg"
FG_ONLY = "fg_only"

# Channel index <-> (feature kind, noise variant), in fixed order.
CHANNELS: tuple[tuple[str, str], ...] = (
    (GAMMATONE, WITH_BG),
    (GAMMATONE, FG_ONLY),
    (MFCC, WITH_BG),
    (MFCC, FG_ONLY),
    (LOGFB, WITH_BG),
    (LOGFB, FG_ONLY),
)
N_CHANNELS = len(CHANNELS)


@dataclass(frozen=True)
class FeatureParams:
    sample_rate: int = 22050
    n_fft: int = N_FFT
    n_gammatone: int = 64
    n_mfcc: int = 20
    n_mel: int = 40
    n_logfb: int = 40
    fmin: float = 50.0
    bg_percentile: float = 20.0

    def dim_for(self, kind: str) -> int:
        return {GAMMATONE: self.n_gammatone, MFCC: self.n_mfcc, LOGFB: self.n_logfb}[kind]

    def channel_dim(self, index: int) -> int:
        return self.dim_for(CHANNELS[index][0])

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()


@dataclass
class LowLevelVector:
    """One frame's feature values for a single channel."""

    values: np.ndarray
    feature_kind: str
    noise_variant: str


def channel_index(kind: str, variant: str) -> int:
    return CHANNELS.index((kind, variant))


def power_spectrum(frame: np.ndarray, n_fft: int = N_FFT) -> np.ndarray:
    """One-sided power spectrum of a Hann-windowed frame at 4096 points.

    Scaled so the spectrum sums to the energy of the analyzed windowed
    samples (one-sided Parseval). Frames shorter than the transform are
    zero-padded; longer ones are cropped to the transform length.
    """
    frame = np.asarray(frame, dtype=np.float64)
    single = frame.ndim == 1
    frames = frame[None, :] if single else frame
    window = np.hanning(frames.shape[1])
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)
    power = (np.abs(spec) ** 2) / n_fft
    power[:, 1:-1] *= 2.0
    return power[0] if single else power


def _as_batch(spectra: np.ndarray) -> tuple[np.ndarray, bool]:
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim == 1:
        return spectra[None, :], True
    return spectra, False


@lru_cache(maxsize=8)
def _gammatone_weights(n_bands: int, sample_rate: int, fmin: float, n_fft: int) -> np.ndarray:
    # Centers uniform on the ERB-rate scale, 4th-order magnitude response.
    fmax = sample_rate / 2.0

    def erb_rate(f):
        return 21.4 * np.log10(1.0 + 0.00437 * f)

    def erb_rate_inv(r):
        return (10.0 ** (r / 21.4) - 1.0) / 0.00437

    centers = erb_rate_inv(np.linspace(erb_rate(fmin), erb_rate(fmax), n_bands))
    bandwidth = 1.019 * 24.7 * (4.37 * centers / 1000.0 + 1.0)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    rel = (freqs[None, :] - centers[:, None]) / bandwidth[:, None]
    return (1.0 + rel**2) ** -2.0


def _triangle_weights(edges: np.ndarray, sample_rate: int, n_fft: int) -> np.ndarray:
    """Triangular filters over FFT bins, one per consecutive edge triple."""
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    n_bands = edges.shape[0] - 2
    weights = np.zeros((n_bands, freqs.shape[0]))
    for m in range(n_bands):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(center - lo, 1e-9)
        down = (hi - freqs) / max(hi - center, 1e-9)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    return weights


@lru_cache(maxsize=8)
def _mel_weights(n_mel: int, sample_rate: int, n_fft: int) -> np.ndarray:
    fmax = sample_rate / 2.0
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    mel_inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    edges = mel_inv(np.linspace(mel(0.0), mel(fmax), n_mel + 2))
    weights = _triangle_weights(edges, sample_rate, n_fft)
    # Unit-sum rows: a flat spectrum then yields equal band energies.
    return weights / weights.sum(axis=1, keepdims=True)


@lru_cache(maxsize=8)
def _logfb_weights(n_bands: int, sample_rate: int, fmin: float, n_fft: int) -> np.ndarray:
    edges = np.geomspace(fmin, sample_rate / 2.0, n_bands + 2)
    return _triangle_weights(edges, sample_rate, n_fft)


def gammatone_coeffs(spectrum: np.ndarray, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """64 ERB-spaced gammatone band energies, log(1+x)-compressed."""
    spectra, single = _as_batch(spectrum)
    weights = _gammatone_weights(params.n_gammatone, params.sample_rate, params.fmin,
                                 params.n_fft)
    out = np.log1p(spectra @ weights.T)
    return out[0] if single else out


def mfcc(spectrum: np.ndarray, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """Mel filterbank log energies (floor 1e-10) -> DCT-II, first 20 kept."""
    spectra, single = _as_batch(spectrum)
    weights = _mel_weights(params.n_mel, params.sample_rate, params.n_fft)
    energies = np.maximum(spectra @ weights.T, 1e-10)
    coeffs = dct(np.log(energies), type=2, norm="ortho", axis=1)[:, : params.n_mfcc]
    return coeffs[0] if single else coeffs


def log_freq_fb(spectrum: np.ndarray, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """40 triangular filters with log-spaced centers, log(1+x)-compressed."""
    spectra, single = _as_batch(spectrum)
    weights = _logfb_weights(params.n_logfb, params.sample_rate, params.fmin, params.n_fft)
    out = np.log1p(spectra @ weights.T)
    return out[0] if single else out


def noise_floor(spectra: np.ndarray, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """Per-bin noise floor of a snippet: the 20th percentile across frames."""
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2 or spectra.shape[0] < 8:
        raise DataError("background estimation needs at least 8 frames")
    return np.percentile(spectra, params.bg_percentile, axis=0)


def subtract_background(spectra: np.ndarray, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """Remove a per-bin noise floor estimated over a whole snippet.

    The floor is the 20th percentile of each bin across frames; output is
    max(spectrum - floor, 0), frame-aligned with the input.
    """
    floor = noise_floor(spectra, params)
    return np.maximum(np.asarray(spectra, dtype=np.float64) - floor[None, :], 0.0)


_KIND_FN = {GAMMATONE: gammatone_coeffs, MFCC: mfcc, LOGFB: log_freq_fb}


def kind_features(kind: str, spectra: np.ndarray, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """Dispatch one feature kind (gammatone / mfcc / logfb) over spectra."""
    return _KIND_FN[kind](spectra, params)


def snippet_channel_features(
    frames: np.ndarray, params: FeatureParams = FeatureParams()
) -> list[np.ndarray]:
    """All 6 channels for one snippet's frames: list of (T, dim) arrays.

    Background subtraction runs over the full snippet so every segment
    shares one noise floor.
    """
    spectra = power_spectrum(frames, params.n_fft)
    fg = subtract_background(spectra, params)
    out = []
    for kind, variant in CHANNELS:
        src = spectra if variant == WITH_BG else fg
        out.append(kind_features(kind, src, params).astype(np.float32))
    return out


# --- feature cache ---------------------------------------------------------
#
# One .feat file per snippet: the 6 channel blocks as little-endian float32,
# concatenated in channel order, plus a JSON sidecar with shapes and the
# extraction parameters (cache entries are invalidated on parameter change).


def _cache_paths(cache_dir, snippet_id: str) -> tuple[Path, Path]:
    base = Path(cache_dir) / snippet_id
    return base.with_suffix(".feat"), base.with_suffix(".json")


def write_feature_cache(cache_dir, snippet_id: str, channels: list[np.ndarray],
                        params: FeatureParams, extra: dict | None = None) -> None:
    bin_path, json_path = _cache_paths(cache_dir, snippet_id)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    with open(bin_path, "wb") as fh:
        for block in channels:
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())
    sidecar = {
        "format_version": 1,
        "snippet_id": snippet_id,
        "T": int(channels[0].shape[0]),
        "channels": [
            {"index": i, "kind": kind, "variant": variant, "dim": int(channels[i].shape[1])}
            for i, (kind, variant) in enumerate(CHANNELS)
        ],
        "params": asdict(params),
        "param_hash": params.hash(),
    }
    if extra:
        sidecar.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)


def cache_is_current(cache_dir, snippet_id: str, params: FeatureParams) -> bool:
    bin_path, json_path = _cache_paths(cache_dir, snippet_id)
    if not (bin_path.exists() and json_path.exists()):
        return False
    try:
        with open(json_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except (json.JSONDecodeError, OSError):
        return False
    return sidecar.get("param_hash") == params.hash()


def read_feature_cache(cache_dir, snippet_id: str) -> tuple[list[np.ndarray], dict]:
    bin_path, json_path = _cache_paths(cache_dir, snippet_id)
    with open(json_path, encoding="utf-8") as fh:
        sidecar = json.load(fh)
    t = sidecar["T"]
    raw = np.fromfile(bin_path, dtype="<f4")
    channels, offset = [], 0
    for entry in sidecar["channels"]:
        size = t * entry["dim"]
        channels.append(raw[offset : offset + size].reshape(t, entry["dim"]).copy())
        offset += size
    if offset != raw.size:
        raise DataError(f"feature cache for {snippet_id!r} has unexpected size")
    return channels, sidecar
