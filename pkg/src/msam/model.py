"""End-to-end trainable acoustic models and their exact backward passes.

Three model kinds share the same classifier head:
  * multi_span  — several projected CNN streams, concatenated
  * single_span — one CNN stream fed to the head without projection
  * fbank_dnn   — log Mel-filterbank features with context stacking
"""

from dataclasses import asdict
from typing import List, Sequence

import numpy as np

from . import streams as streams_mod
from .conv import (
    conv1d_backward_batch,
    conv1d_forward_batch,
    flatten_frame_major,
    unflatten_frame_major,
)
from .errors import ValidationError
from .fbank import FbankConfig, compute_fbank, stack_context
from .network import (
    DnnHead,
    cross_entropy_batch,
    dnn_forward,
    head_backward_batch,
    head_forward_batch,
    head_params,
    init_head,
)
from .streams import Stream, StreamConfig, init_stream

MODEL_KINDS = ("multi_span", "single_span", "fbank_dnn")


class RawWaveformModel:
    """CNN streams plus DNN head operating directly on waveform windows."""

    def __init__(self, kind: str, streams: List[Stream], head: DnnHead, sample_rate: int = 16000):
        if kind not in ("multi_span", "single_span"):
            raise ValidationError(f"unknown raw-waveform model kind {kind!r}")
        if kind == "single_span" and len(streams) != 1:
            raise ValidationError("single_span requires exactly one stream")
        if kind == "multi_span":
            if len(streams) < 2:
                raise ValidationError("multi_span requires at least two streams")
            if any(s.projection is None for s in streams):
                raise ValidationError("multi_span streams require projections")
        self.kind = kind
        self.streams = streams
        self.head = head
        self.sample_rate = sample_rate
        if head.input_dim != self.feature_dim:
            raise ValidationError(
                f"head input dim {head.input_dim} != feature dim {self.feature_dim}"
            )

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    @property
    def feature_dim(self) -> int:
        if self.kind == "single_span":
            return self.streams[0].config.output_dim
        return sum(s.config.projection_dim for s in self.streams)

    @property
    def spans(self) -> List[int]:
        return [s.config.input_span for s in self.streams]

    def params(self) -> dict:
        params = {}
        for i, stream in enumerate(self.streams):
            params[f"stream{i}.conv1.weights"] = stream.first_layer.weights
            params[f"stream{i}.conv1.biases"] = stream.first_layer.biases
            params[f"stream{i}.conv2.weights"] = stream.second_layer.weights
            params[f"stream{i}.conv2.biases"] = stream.second_layer.biases
            if self.kind == "multi_span":
                params[f"stream{i}.projection"] = stream.projection
        params.update(head_params(self.head))
        return params

    def features_batch(self, windows: Sequence[np.ndarray], cache=None) -> np.ndarray:
        """Feature vectors for per-stream window batches, shape (B, feature_dim)."""
        parts = []
        for i, (stream, w) in enumerate(zip(self.streams, windows)):
            y = np.maximum(conv1d_forward_batch(w, stream.first_layer), 0)
            y_flat = flatten_frame_major(y)
            o = np.maximum(conv1d_forward_batch(y_flat, stream.second_layer), 0)
            o_flat = flatten_frame_major(o)
            if cache is not None:
                cache.append((w, y, y_flat, o, o_flat))
            if self.kind == "multi_span":
                parts.append(o_flat @ stream.projection.T)
            else:
                parts.append(o_flat)
        return np.concatenate(parts, axis=1)

    def forward_batch(self, windows: Sequence[np.ndarray]):
        """Class probabilities for per-stream window batches, shape (B, C)."""
        probs, _ = head_forward_batch(self.head, self.features_batch(windows))
        return probs

    def forward_frame(self, waveform, center: int) -> np.ndarray:
        """Probability vector for one frame center of a full waveform."""
        if self.kind == "multi_span":
            feat = streams_mod.multispan_forward(self.streams, waveform, center)
        else:
            feat = streams_mod.single_span_forward(self.streams[0], waveform, center)
        return dnn_forward(feat, self.head)

    def loss_and_grads(self, windows: Sequence[np.ndarray], labels: np.ndarray):
        """Mean CE loss over the batch and exact gradients per parameter."""
        labels = np.asarray(labels)
        stream_cache = []
        feats = self.features_batch(windows, cache=stream_cache)
        probs, activations = head_forward_batch(self.head, feats)
        loss = cross_entropy_batch(probs, labels)
        batch = len(labels)
        dlogits = probs.copy()
        dlogits[np.arange(batch), labels] -= 1.0
        dlogits /= batch
        grads, dfeat = head_backward_batch(self.head, activations, dlogits)
        offset = 0
        for i, stream in enumerate(self.streams):
            w, y, y_flat, o, o_flat = stream_cache[i]
            if self.kind == "multi_span":
                dim = stream.config.projection_dim
                dblock = dfeat[:, offset : offset + dim]
                grads[f"stream{i}.projection"] = dblock.T @ o_flat
                do_flat = dblock @ stream.projection
            else:
                dim = stream.config.output_dim
                do_flat = dfeat[:, offset : offset + dim]
            offset += dim
            do = unflatten_frame_major(do_flat, stream.config.second_num_kernels)
            do = do * (o > 0)
            dw2, db2, dy_flat = conv1d_backward_batch(y_flat, stream.second_layer, do)
            grads[f"stream{i}.conv2.weights"] = dw2
            grads[f"stream{i}.conv2.biases"] = db2
            dy = unflatten_frame_major(dy_flat, stream.config.first_num_kernels)
            dy = dy * (y > 0)
            dw1, db1, _ = conv1d_backward_batch(w, stream.first_layer, dy)
            grads[f"stream{i}.conv1.weights"] = dw1
            grads[f"stream{i}.conv1.biases"] = db1
        return loss, grads

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "num_classes": self.num_classes,
            "sample_rate": self.sample_rate,
            "streams": [asdict(s.config) for s in self.streams],
            "hidden_dims": [w.shape[0] for w in self.head.hidden_weights],
        }


class FbankDnnModel:
    """Log Mel-filterbank features with context stacking, fed to a DNN head."""

    kind = "fbank_dnn"

    def __init__(self, fbank_config: FbankConfig, head: DnnHead, context_frames: int = 11):
        self.fbank_config = fbank_config
        self.head = head
        self.context_frames = context_frames
        if head.input_dim != self.feature_dim:
            raise ValidationError(
                f"head input dim {head.input_dim} != feature dim {self.feature_dim}"
            )

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    @property
    def feature_dim(self) -> int:
        return self.fbank_config.num_filters * self.context_frames

    def params(self) -> dict:
        return head_params(self.head)

    def featurize(self, signal) -> np.ndarray:
        """One stacked feature row per 10ms label frame.

        The signal is zero-padded on the right by frame_size - frame_shift
        samples so the frame count equals the label count.
        """
        samples = np.asarray(getattr(signal, "samples", signal))
        pad = self.fbank_config.frame_size - self.fbank_config.frame_shift
        padded = np.concatenate([samples, np.zeros(pad, dtype=samples.dtype)])
        feats = compute_fbank(padded, self.fbank_config)
        return stack_context(feats, self.context_frames)

    def forward_batch(self, features: np.ndarray) -> np.ndarray:
        probs, _ = head_forward_batch(self.head, features)
        return probs

    def loss_and_grads(self, features: np.ndarray, labels: np.ndarray):
        labels = np.asarray(labels)
        probs, activations = head_forward_batch(self.head, features)
        loss = cross_entropy_batch(probs, labels)
        dlogits = probs.copy()
        dlogits[np.arange(len(labels)), labels] -= 1.0
        dlogits /= len(labels)
        grads, _ = head_backward_batch(self.head, activations, dlogits)
        return loss, grads

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "num_classes": self.num_classes,
            "context_frames": self.context_frames,
            "fbank": asdict(self.fbank_config),
            "hidden_dims": [w.shape[0] for w in self.head.hidden_weights],
        }


def model_backward(model, inputs, labels):
    """Gradients of the mean CE loss for a batch (or single frame).

    For waveform models `inputs` is a list of per-stream window batches;
    for the FBANK model it is a feature matrix.
    """
    labels = np.atleast_1d(labels)
    return model.loss_and_grads(inputs, labels)[1]


def build_raw_model(
    kind: str,
    stream_configs: Sequence[StreamConfig],
    num_classes: int,
    hidden_dims=(512, 512, 512, 512),
    seed: int = 0,
    sample_rate: int = 16000,
    dtype=np.float32,
) -> RawWaveformModel:
    rng = np.random.default_rng(seed)
    with_projection = kind == "multi_span"
    streams = [init_stream(c, rng, with_projection=with_projection, dtype=dtype) for c in stream_configs]
    if kind == "multi_span":
        feature_dim = sum(c.projection_dim for c in stream_configs)
    else:
        feature_dim = stream_configs[0].output_dim
    head = init_head(feature_dim, hidden_dims, num_classes, rng, dtype=dtype)
    return RawWaveformModel(kind, streams, head, sample_rate=sample_rate)


def build_fbank_model(
    num_classes: int,
    fbank_config: FbankConfig = FbankConfig(),
    context_frames: int = 11,
    hidden_dims=(512, 512, 512, 512),
    seed: int = 0,
    dtype=np.float32,
) -> FbankDnnModel:
    rng = np.random.default_rng(seed)
    head = init_head(
        fbank_config.num_filters * context_frames, hidden_dims, num_classes, rng, dtype=dtype
    )
    return FbankDnnModel(fbank_config, head, context_frames)


def model_from_config(config: dict, seed: int = 0):
    """Freshly initialized model matching a serialized config."""
    kind = config["kind"]
    if kind == "fbank_dnn":
        return build_fbank_model(
            config["num_classes"],
            FbankConfig(**config["fbank"]),
            config["context_frames"],
            hidden_dims=config["hidden_dims"],
            seed=seed,
        )
    stream_configs = [StreamConfig(**c) for c in config["streams"]]
    return build_raw_model(
        kind,
        stream_configs,
        config["num_classes"],
        hidden_dims=config["hidden_dims"],
        seed=seed,
        sample_rate=config.get("sample_rate", 16000),
    )
