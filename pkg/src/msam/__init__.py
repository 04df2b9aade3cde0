"""Multi-span raw-waveform acoustic front-end.

Set MSAM_THREADS before importing this package to cap the BLAS thread
pools used internally.
"""

import os

if "MSAM_THREADS" in os.environ:
    _cap = os.environ["MSAM_THREADS"]
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _cap)

from .conv import (  # noqa: E402
    FeatureMaps,
    FrameVector,
    KernelBank,
    Signal,
    cnn_layer_forward,
    conv1d_backward,
    conv1d_forward,
    extract_frame,
    output_map_size,
    required_span,
)
from .streams import (  # noqa: E402
    Stream,
    StreamConfig,
    multispan_forward,
    single_span_forward,
    stream_forward,
    stream_input_span,
)

__all__ = [
    "FeatureMaps",
    "FrameVector",
    "KernelBank",
    "Signal",
    "Stream",
    "StreamConfig",
    "cnn_layer_forward",
    "conv1d_backward",
    "conv1d_forward",
    "extract_frame",
    "multispan_forward",
    "output_map_size",
    "required_span",
    "single_span_forward",
    "stream_forward",
    "stream_input_span",
]

__version__ = "0.1.0"
