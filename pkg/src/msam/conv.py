"""Strided 1-D convolution primitives, span arithmetic and their gradients.

A convolution layer is a bank of K kernels of length L slid with stride S
over a raw sample segment.  "Convolution" here means windowed dot products
without kernel flipping (cross-correlation), which is the standard neural
network convention.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, GradientShapeError


@dataclass
class Signal:
    """A mono waveform with its sampling rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ValueError("samples must be a non-empty 1-D array")

    def __len__(self):
        return len(self.samples)


@dataclass
class KernelBank:
    """Parameters of one convolution layer: K kernels of length L, stride S."""

    weights: np.ndarray  # shape (K, L)
    biases: np.ndarray  # shape (K,)
    stride: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        self.biases = np.asarray(self.biases)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a K x L matrix")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("biases must have one entry per kernel")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def num_kernels(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel_len(self) -> int:
        return self.weights.shape[1]


@dataclass
class FeatureMaps:
    """Output of one convolution layer: K feature maps of length M."""

    maps: np.ndarray  # shape (K, M)

    def __post_init__(self):
        self.maps = np.asarray(self.maps)
        if self.maps.ndim != 2:
            raise ValueError("maps must be a K x M matrix")

    @property
    def map_size(self) -> int:
        return self.maps.shape[1]

    @property
    def num_maps(self) -> int:
        return self.maps.shape[0]


@dataclass
class FrameVector:
    """All K kernel responses at one window position."""

    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.values = np.asarray(self.values)

    def __len__(self):
        return len(self.values)


def output_map_size(num_samples: int, kernel_len: int, stride: int) -> int:
    """Number of windows of length `kernel_len` at hop `stride` in `num_samples`."""
    if kernel_len < 1 or stride < 1:
        raise ValueError("kernel_len and stride must be >= 1")
    if num_samples < kernel_len:
        raise GeometryError(
            f"input of {num_samples} samples is shorter than kernel of {kernel_len}"
        )
    return (num_samples - kernel_len) // stride + 1


def required_span(map_size: int, stride: int, kernel_len: int) -> int:
    """Smallest input length producing exactly `map_size` output positions."""
    if map_size < 1 or stride < 1 or kernel_len < 1:
        raise ValueError("map_size, stride and kernel_len must be >= 1")
    return (map_size - 1) * stride + kernel_len


def sliding_windows(segment: np.ndarray, kernel_len: int, stride: int) -> np.ndarray:
    """View of all M strided windows, shape (M, kernel_len)."""
    segment = np.asarray(segment)
    m = output_map_size(segment.shape[-1], kernel_len, stride)
    windows = np.lib.stride_tricks.sliding_window_view(segment, kernel_len, axis=-1)
    return windows[..., ::stride, :][..., :m, :]


def conv1d_forward(segment, bank: KernelBank) -> FeatureMaps:
    """Apply the kernel bank to one segment; returns K maps of length M."""
    segment = np.asarray(getattr(segment, "samples", segment))
    windows = sliding_windows(segment, bank.kernel_len, bank.stride)
    maps = bank.weights @ windows.T + bank.biases[:, None]
    return FeatureMaps(maps)


def extract_frame(maps: FeatureMaps, m: int) -> FrameVector:
    """The m-th element of every map (1-based), viewed as one frame."""
    if not 1 <= m <= maps.map_size:
        raise IndexError(f"frame index {m} outside 1..{maps.map_size}")
    return FrameVector(maps.maps[:, m - 1].copy())


def cnn_layer_forward(x, bank: KernelBank, apply_relu: bool = True) -> np.ndarray:
    """Full layer: convolve, optionally ReLU, and flatten frame-major.

    Frame-major means frame m's K values are contiguous, so a window over
    the flat output covers a block of consecutive frames.
    """
    maps = conv1d_forward(x, bank).maps
    if apply_relu:
        maps = np.maximum(maps, 0)
    return maps.T.reshape(-1)


def conv1d_backward(segment, bank: KernelBank, upstream: np.ndarray):
    """Exact gradients of conv1d_forward.

    Returns (weight_grads, bias_grads, input_grads) for an upstream
    gradient of shape (K, M).
    """
    segment = np.asarray(getattr(segment, "samples", segment))
    windows = sliding_windows(segment, bank.kernel_len, bank.stride)
    m = windows.shape[0]
    upstream = np.asarray(upstream)
    if upstream.shape != (bank.num_kernels, m):
        raise GradientShapeError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"feature maps shape {(bank.num_kernels, m)}"
        )
    weight_grads = upstream @ windows
    bias_grads = upstream.sum(axis=1)
    input_grads = np.zeros_like(segment, dtype=upstream.dtype)
    window_grads = upstream.T @ bank.weights  # (M, L)
    s, l = bank.stride, bank.kernel_len
    for i in range(m):
        input_grads[i * s : i * s + l] += window_grads[i]
    return weight_grads, bias_grads, input_grads


# ---------------------------------------------------------------------------
# Batched variants used by the training path.  Leading axis is the batch.
# ---------------------------------------------------------------------------


def conv1d_forward_batch(segments: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Convolve a batch of segments, shape (B, T) -> (B, K, M)."""
    windows = sliding_windows(segments, bank.kernel_len, bank.stride)
    maps = np.einsum("bml,kl->bkm", windows, bank.weights, optimize=True)
    return maps + bank.biases[None, :, None]


def conv1d_backward_batch(segments: np.ndarray, bank: KernelBank, upstream: np.ndarray):
    """Batched gradients; upstream has shape (B, K, M).

    Weight and bias gradients are summed over the batch; input gradients
    keep the batch axis.
    """
    windows = sliding_windows(segments, bank.kernel_len, bank.stride)
    m = windows.shape[1]
    if upstream.shape != (segments.shape[0], bank.num_kernels, m):
        raise GradientShapeError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"{(segments.shape[0], bank.num_kernels, m)}"
        )
    weight_grads = np.einsum("bkm,bml->kl", upstream, windows, optimize=True)
    bias_grads = upstream.sum(axis=(0, 2))
    window_grads = np.einsum("bkm,kl->bml", upstream, bank.weights, optimize=True)
    input_grads = np.zeros_like(segments, dtype=upstream.dtype)
    s, l = bank.stride, bank.kernel_len
    for i in range(m):
        input_grads[:, i * s : i * s + l] += window_grads[:, i]
    return weight_grads, bias_grads, input_grads


def flatten_frame_major(maps: np.ndarray) -> np.ndarray:
    """(..., K, M) -> (..., M*K) with each frame's K values contiguous."""
    return np.swapaxes(maps, -1, -2).reshape(*maps.shape[:-2], -1)


def unflatten_frame_major(flat: np.ndarray, num_kernels: int) -> np.ndarray:
    """Inverse of flatten_frame_major: (..., M*K) -> (..., K, M)."""
    m = flat.shape[-1] // num_kernels
    return np.swapaxes(flat.reshape(*flat.shape[:-1], m, num_kernels), -1, -2)
