"""Log Mel-filterbank baseline features: framing, STFT magnitude, Mel filters.

The baseline pipeline uses a Hamming window, a zero-padded magnitude
spectrum and natural log with a 1e-10 floor.  These details are fixed here
so the baseline is bit-reproducible.
"""

from dataclasses import dataclass

import numpy as np

from .conv import output_map_size
from .errors import GeometryError

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FbankConfig:
    frame_shift: int = 160
    frame_size: int = 400
    num_filters: int = 40
    fft_size: int = 512
    sample_rate: int = 16000

    def __post_init__(self):
        if self.num_filters < 1:
            raise ValueError("num_filters must be >= 1")
        if self.frame_size > self.fft_size:
            raise ValueError("frame_size must not exceed fft_size")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FbankConfig) -> np.ndarray:
    """Triangular filters equally spaced on the Mel scale, 0 Hz to Nyquist.

    Returns a (num_filters, fft_size/2 + 1) non-negative weight matrix;
    each row has one contiguous support.
    """
    nyquist = config.sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), config.num_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(config.fft_size // 2 + 1) * config.sample_rate / config.fft_size
    weights = np.zeros((config.num_filters, len(bin_freqs)))
    for i in range(config.num_filters):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def filter_center_frequencies(config: FbankConfig) -> np.ndarray:
    """Center frequency in Hz of each triangular filter."""
    nyquist = config.sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), config.num_filters + 2)
    return mel_to_hz(mel_points[1:-1])


def compute_fbank(signal, config: FbankConfig = FbankConfig()) -> np.ndarray:
    """Log Mel energies per frame, shape (num_frames, num_filters)."""
    samples = np.asarray(getattr(signal, "samples", signal), dtype=np.float64)
    if len(samples) < config.frame_size:
        raise GeometryError(
            f"signal of {len(samples)} samples is shorter than one "
            f"{config.frame_size}-sample frame"
        )
    num_frames = output_map_size(len(samples), config.frame_size, config.frame_shift)
    window = np.hamming(config.frame_size)
    starts = np.arange(num_frames) * config.frame_shift
    frames = samples[starts[:, None] + np.arange(config.frame_size)] * window
    spectra = np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1))
    energies = spectra @ mel_filterbank(config).T
    return np.log(np.maximum(energies, LOG_FLOOR))


def write_features_csv(features: np.ndarray, path) -> None:
    """Dump a feature matrix as CSV, one frame per row."""
    np.savetxt(path, np.atleast_2d(features), delimiter=",", fmt="%.9e")


def stack_context(features: np.ndarray, num_frames: int = 11) -> np.ndarray:
    """Concatenate each frame with its neighbors, edges replicated.

    (N, D) -> (N, D * num_frames); num_frames must be odd.
    """
    if num_frames % 2 == 0:
        raise ValueError("num_frames must be odd")
    features = np.asarray(features)
    n = features.shape[0]
    half = num_frames // 2
    offsets = np.arange(-half, half + 1)
    indices = np.clip(np.arange(n)[:, None] + offsets, 0, n - 1)
    return features[indices].reshape(n, -1)
