"""Inference-only CNN for cough/non-cough scoring, plus its CNNW weight format.

Tensors are laid out height x width x channels (frequency x time x feature
maps). Convolutions are cross-correlations with 'same' zero padding; for the
even 2x2 kernels the extra padding row/column goes at the bottom/right.
Flatten is C-order over (H, W, C). Output neuron 0 is the cough class.

CNNW layout (little-endian)::

    b"CNNW"  u32 version=1  u8 padding(0=same)  u32 layer_count
    per layer: u8 kind, then u32 params
        0 Conv2D     out_channels in_channels kernel_h kernel_w activation
        1 MaxPool2D  pool_h pool_w stride_h stride_w
        2 Dropout    rate_ppm
        3 Flatten    -
        4 Dense      out_units in_units activation
        5 Softmax    -
    float32 payload, in layer order:
        Conv2D kernel (out, in, h, w) then bias (out)
        Dense matrix (out, in) row-major then bias (out)

Activations: 0 none, 1 ReLU.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Protocol, Sequence, Union

import numpy as np

from coughxai.errors import FormatError, UnsupportedFormatError, ValidationError
from coughxai.spectrogram import (
    K_MAX,
    N_FRAMES,
    SAMPLE_RATE_HZ,
    Scale,
    SpectrogramMatrix,
    frequency_axis,
)

MAGIC = b"CNNW"
FORMAT_VERSION = 1
PADDING_SAME = 0
INPUT_SHAPE = (K_MAX + 1, N_FRAMES, 1)


class LayerKind(enum.IntEnum):
    CONV2D = 0
    MAXPOOL2D = 1
    DROPOUT = 2
    FLATTEN = 3
    DENSE = 4
    SOFTMAX = 5


class Activation(enum.IntEnum):
    NONE = 0
    RELU = 1


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    in_channels: int
    kernel_h: int = 2
    kernel_w: int = 2
    activation: Activation = Activation.RELU
    kind = LayerKind.CONV2D

    def params(self):
        return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w, int(self.activation))


@dataclass(frozen=True)
class MaxPool2D:
    pool_h: int = 2
    pool_w: int = 2
    stride_h: int = 2
    stride_w: int = 2
    kind = LayerKind.MAXPOOL2D

    def params(self):
        return (self.pool_h, self.pool_w, self.stride_h, self.stride_w)


@dataclass(frozen=True)
class Dropout:
    # Rate is unknown for the published network and unused at inference.
    rate: float = 0.0
    kind = LayerKind.DROPOUT

    def params(self):
        return (int(round(self.rate * 1_000_000)),)


@dataclass(frozen=True)
class Flatten:
    kind = LayerKind.FLATTEN

    def params(self):
        return ()


@dataclass(frozen=True)
class Dense:
    out_units: int
    in_units: int
    activation: Activation = Activation.NONE
    kind = LayerKind.DENSE

    def params(self):
        return (self.out_units, self.in_units, int(self.activation))


@dataclass(frozen=True)
class Softmax:
    kind = LayerKind.SOFTMAX

    def params(self):
        return ()


Layer = Union[Conv2D, MaxPool2D, Dropout, Flatten, Dense, Softmax]

_PARAM_COUNTS = {
    LayerKind.CONV2D: 5,
    LayerKind.MAXPOOL2D: 4,
    LayerKind.DROPOUT: 1,
    LayerKind.FLATTEN: 0,
    LayerKind.DENSE: 3,
    LayerKind.SOFTMAX: 0,
}


def _layer_from_params(kind: LayerKind, p: tuple) -> Layer:
    if kind is LayerKind.CONV2D:
        return Conv2D(p[0], p[1], p[2], p[3], Activation(p[4]))
    if kind is LayerKind.MAXPOOL2D:
        return MaxPool2D(*p)
    if kind is LayerKind.DROPOUT:
        return Dropout(p[0] / 1_000_000)
    if kind is LayerKind.FLATTEN:
        return Flatten()
    if kind is LayerKind.DENSE:
        return Dense(p[0], p[1], Activation(p[2]))
    return Softmax()


@dataclass(frozen=True)
class ClassScore:
    p_cough: float
    p_noncough: float


class Scorer(Protocol):
    """Anything that maps a batch of (H, W) log-normalized images to
    (B, 2) class probabilities, column 0 being the cough class."""

    def predict(self, batch: np.ndarray) -> np.ndarray: ...


def infer_shapes(layers: Sequence[Layer], input_shape=INPUT_SHAPE) -> list[tuple]:
    """Output shape of every layer; raises ValidationError on the first
    layer whose declared geometry or position is inconsistent."""
    layers = list(layers)
    if len(layers) < 2:
        raise ValidationError("model needs at least Dense(2) followed by Softmax")
    shapes = _propagate(layers, input_shape)
    last, prev = layers[-1], layers[-2]
    if not isinstance(last, Softmax):
        raise ValidationError(f"layer {len(layers) - 1}: final layer must be Softmax")
    if not (isinstance(prev, Dense) and prev.out_units == 2):
        raise ValidationError(f"layer {len(layers) - 2}: Softmax must follow Dense(2)")
    return shapes


def _propagate(layers: Sequence[Layer], input_shape) -> list[tuple]:
    shape = tuple(int(d) for d in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ValidationError(f"input shape must be (H, W, C) with positive dims, got {input_shape}")
    flattened = False
    shapes = []
    for idx, layer in enumerate(layers):
        where = f"layer {idx} ({type(layer).__name__})"
        if isinstance(layer, Conv2D):
            if flattened:
                raise ValidationError(f"{where}: convolution after Flatten")
            if layer.kernel_h < 1 or layer.kernel_w < 1 or layer.out_channels < 1:
                raise ValidationError(f"{where}: kernel and channel counts must be positive")
            if layer.in_channels != shape[2]:
                raise ValidationError(
                    f"{where}: declares {layer.in_channels} input channels, "
                    f"previous layer produces {shape[2]}"
                )
            shape = (shape[0], shape[1], layer.out_channels)
        elif isinstance(layer, MaxPool2D):
            if flattened:
                raise ValidationError(f"{where}: pooling after Flatten")
            if min(layer.pool_h, layer.pool_w, layer.stride_h, layer.stride_w) < 1:
                raise ValidationError(f"{where}: pool and stride must be positive")
            if shape[0] < layer.pool_h or shape[1] < layer.pool_w:
                raise ValidationError(f"{where}: input {shape[:2]} smaller than pool window")
            shape = (
                (shape[0] - layer.pool_h) // layer.stride_h + 1,
                (shape[1] - layer.pool_w) // layer.stride_w + 1,
                shape[2],
            )
        elif isinstance(layer, Dropout):
            if not 0.0 <= layer.rate < 1.0:
                raise ValidationError(f"{where}: dropout rate {layer.rate} outside [0, 1)")
        elif isinstance(layer, Flatten):
            if flattened:
                raise ValidationError(f"{where}: second Flatten")
            flattened = True
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if not flattened:
                raise ValidationError(f"{where}: Dense before Flatten")
            if layer.in_units != shape[0]:
                raise ValidationError(
                    f"{where}: declares {layer.in_units} inputs, previous layer produces {shape[0]}"
                )
            if layer.out_units < 1:
                raise ValidationError(f"{where}: out_units must be positive")
            shape = (layer.out_units,)
        elif isinstance(layer, Softmax):
            if idx != len(layers) - 1:
                raise ValidationError(f"{where}: Softmax must be the final layer")
        else:
            raise ValidationError(f"{where}: unknown layer type")
        shapes.append(shape)
    return shapes


def expected_weight_shapes(layer: Layer) -> tuple[tuple, tuple] | None:
    if isinstance(layer, Conv2D):
        return (layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w), (layer.out_channels,)
    if isinstance(layer, Dense):
        return (layer.out_units, layer.in_units), (layer.out_units,)
    return None


@dataclass(frozen=True)
class ClassifierModel:
    """Validated, immutable layer stack with float32 parameters."""

    layers: tuple
    weights: tuple
    input_shape: tuple = INPUT_SHAPE
    shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(self.weights) != len(layers):
            raise ValidationError(
                f"{len(self.weights)} weight entries for {len(layers)} layers"
            )
        shapes = infer_shapes(layers, self.input_shape)
        frozen = []
        for idx, (layer, entry) in enumerate(zip(layers, self.weights)):
            expected = expected_weight_shapes(layer)
            if expected is None:
                if entry is not None:
                    raise ValidationError(f"layer {idx} ({type(layer).__name__}) takes no weights")
                frozen.append(None)
                continue
            if entry is None or len(entry) != 2:
                raise ValidationError(f"layer {idx} ({type(layer).__name__}) needs (kernel, bias)")
            kernel = np.array(entry[0], dtype=np.float32)
            bias = np.array(entry[1], dtype=np.float32)
            if kernel.shape != expected[0] or bias.shape != expected[1]:
                raise ValidationError(
                    f"layer {idx} ({type(layer).__name__}): weights {kernel.shape}/{bias.shape}, "
                    f"expected {expected[0]}/{expected[1]}"
                )
            if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(bias))):
                raise ValidationError(f"layer {idx} ({type(layer).__name__}): non-finite weights")
            kernel.setflags(write=False)
            bias.setflags(write=False)
            frozen.append((kernel, bias))
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", tuple(frozen))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "shapes", tuple(shapes))

    def without_dropout(self) -> "ClassifierModel":
        keep = [i for i, layer in enumerate(self.layers) if not isinstance(layer, Dropout)]
        return ClassifierModel(
            tuple(self.layers[i] for i in keep),
            tuple(self.weights[i] for i in keep),
            self.input_shape,
        )

    def predict(self, batch) -> np.ndarray:
        """Class probabilities for a batch shaped (B, H, W) or (B, H, W, C)."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 3:
            x = x[..., None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ValidationError(
                f"input batch shape {x.shape} incompatible with model input {self.input_shape}"
            )
        for layer, entry in zip(self.layers, self.weights):
            if isinstance(layer, Conv2D):
                x = _conv2d_same(x, entry[0], entry[1])
                if layer.activation is Activation.RELU:
                    x = np.maximum(x, 0.0)
            elif isinstance(layer, MaxPool2D):
                x = _maxpool(x, layer)
            elif isinstance(layer, Flatten):
                x = x.reshape(x.shape[0], -1)
            elif isinstance(layer, Dense):
                x = x @ entry[0].astype(np.float64).T + entry[1]
                if layer.activation is Activation.RELU:
                    x = np.maximum(x, 0.0)
            elif isinstance(layer, Softmax):
                x = softmax(x)
        return x

    def score(self, spec) -> ClassScore:
        return forward(self, spec)


def _conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    _, h, w, _ = x.shape
    _, _, kh, kw = kernel.shape
    top, left = (kh - 1) // 2, (kw - 1) // 2
    padded = np.pad(x, ((0, 0), (top, kh - 1 - top), (left, kw - 1 - left), (0, 0)))
    k64 = kernel.astype(np.float64)
    out = np.zeros(x.shape[:3] + (kernel.shape[0],))
    for di in range(kh):
        for dj in range(kw):
            out += padded[:, di:di + h, dj:dj + w, :] @ k64[:, :, di, dj].T
    return out + bias


def _maxpool(x: np.ndarray, layer: MaxPool2D) -> np.ndarray:
    _, h, w, _ = x.shape
    ho = (h - layer.pool_h) // layer.stride_h + 1
    wo = (w - layer.pool_w) // layer.stride_w + 1
    out = None
    for pi in range(layer.pool_h):
        for pj in range(layer.pool_w):
            view = x[:, pi:pi + layer.stride_h * (ho - 1) + 1:layer.stride_h,
                     pj:pj + layer.stride_w * (wo - 1) + 1:layer.stride_w, :]
            out = view if out is None else np.maximum(out, view)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_image(spec) -> np.ndarray:
    if isinstance(spec, SpectrogramMatrix):
        if spec.scale is not Scale.LOG_NORMALIZED:
            raise ValidationError("the classifier expects a log-normalized spectrogram")
        return spec.values
    return np.asarray(spec, dtype=np.float64)


def forward(model: Scorer, spec) -> ClassScore:
    """Score one log-normalized spectrogram."""
    probs = model.predict(_as_image(spec)[None])[0]
    return ClassScore(float(probs[0]), float(probs[1]))


def score_windows(model: Scorer, specs: Sequence) -> np.ndarray:
    """Cough probability for each window, scored one window at a time so
    the result for a window never depends on what it is batched with."""
    return np.array([forward(model, s).p_cough for s in specs], dtype=np.float64)


def classify_windows(model: Scorer, specs: Sequence, confidence: float = 0.9) -> list[int]:
    """Indices of windows whose cough probability strictly exceeds ``confidence``."""
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence must lie in [0, 1], got {confidence}")
    scores = score_windows(model, specs)
    return [i for i, p in enumerate(scores) if p > confidence]


# -- CNNW serialisation -----------------------------------------------------


def dump_model(model: ClassifierModel) -> bytes:
    parts = [MAGIC, struct.pack("<IBI", FORMAT_VERSION, PADDING_SAME, len(model.layers))]
    for layer in model.layers:
        params = layer.params()
        parts.append(struct.pack(f"<B{len(params)}I", int(layer.kind), *params))
    for entry in model.weights:
        if entry is not None:
            parts.append(np.ascontiguousarray(entry[0], dtype="<f4").tobytes())
            parts.append(np.ascontiguousarray(entry[1], dtype="<f4").tobytes())
    return b"".join(parts)


def load_model(data: bytes, input_shape=INPUT_SHAPE) -> ClassifierModel:
    """Parse and validate a CNNW byte string against ``input_shape``."""
    data = bytes(data)
    if len(data) < 13:
        raise FormatError(f"CNNW stream too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, padding, n_layers = struct.unpack_from("<IBI", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported CNNW version {version}")
    if padding != PADDING_SAME:
        raise UnsupportedFormatError(f"unsupported padding mode {padding}")
    pos = 13
    layers = []
    for idx in range(n_layers):
        if pos + 1 > len(data):
            raise FormatError(f"layer {idx}: descriptor truncated")
        try:
            kind = LayerKind(data[pos])
        except ValueError:
            raise FormatError(f"layer {idx}: unknown layer kind {data[pos]}") from None
        count = _PARAM_COUNTS[kind]
        if pos + 1 + 4 * count > len(data):
            raise FormatError(f"layer {idx}: descriptor truncated")
        params = struct.unpack_from(f"<{count}I", data, pos + 1)
        pos += 1 + 4 * count
        try:
            layers.append(_layer_from_params(kind, params))
        except ValueError as exc:
            raise FormatError(f"layer {idx}: {exc}") from None

    infer_shapes(layers, input_shape)

    weights = []
    for idx, layer in enumerate(layers):
        expected = expected_weight_shapes(layer)
        if expected is None:
            weights.append(None)
            continue
        tensors = []
        for shape in expected:
            nbytes = 4 * int(np.prod(shape))
            if pos + nbytes > len(data):
                raise FormatError(f"layer {idx} ({type(layer).__name__}): weight payload truncated")
            tensors.append(np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape))
            pos += nbytes
        weights.append(tuple(tensors))
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} unexpected trailing bytes after weights")
    return ClassifierModel(tuple(layers), tuple(weights), input_shape)


def read_model(path, input_shape=INPUT_SHAPE) -> ClassifierModel:
    with open(path, "rb") as fh:
        return load_model(fh.read(), input_shape)


# -- architecture and synthetic weights -------------------------------------


def cough_layers(
    input_shape=INPUT_SHAPE,
    channels: Sequence[int] = (32, 64, 128, 256),
    dense_units: int = 512,
    dropout: float = 0.0,
) -> tuple:
    """Conv-Pool-Drop, Conv-Pool-Drop, Conv-Drop, Conv-Pool, Flatten,
    Dense(ReLU), Dense(2), Softmax."""
    c1, c2, c3, c4 = channels
    h, w, c = input_shape
    convs = [
        Conv2D(c1, c), MaxPool2D(), Dropout(dropout),
        Conv2D(c2, c1), MaxPool2D(), Dropout(dropout),
        Conv2D(c3, c2), Dropout(dropout),
        Conv2D(c4, c3), MaxPool2D(),
        Flatten(),
    ]
    flat = _propagate(convs, input_shape)[-1][0]
    return tuple(convs) + (
        Dense(dense_units, flat, Activation.RELU),
        Dense(2, dense_units, Activation.NONE),
        Softmax(),
    )


def random_model(
    rng: np.random.Generator,
    input_shape=INPUT_SHAPE,
    channels: Sequence[int] = (32, 64, 128, 256),
    dense_units: int = 512,
    dropout: float = 0.0,
) -> ClassifierModel:
    """Cough-classifier stack with He-scaled normal weights and small biases."""
    layers = cough_layers(input_shape, channels, dense_units, dropout)
    weights = []
    for layer in layers:
        shapes = expected_weight_shapes(layer)
        if shapes is None:
            weights.append(None)
            continue
        fan_in = int(np.prod(shapes[0][1:]))
        kernel = rng.standard_normal(shapes[0]) * np.sqrt(2.0 / fan_in)
        bias = rng.standard_normal(shapes[1]) * 0.05
        weights.append((kernel.astype(np.float32), bias.astype(np.float32)))
    return ClassifierModel(layers, tuple(weights), input_shape)


def synthetic_model(seed: int, dropout: float = 0.25) -> ClassifierModel:
    """Deterministic full-size model with untrained weights."""
    return random_model(np.random.default_rng(seed), INPUT_SHAPE, dropout=dropout)


# -- reference scorer -------------------------------------------------------


class ReferenceClassifier:
    """Weight-free stand-in for the CNN.

    ``p_cough = logistic(gain * (mean_in - mean_out))`` where ``mean_in`` is
    the mean input value over frequency rows whose bin frequency lies in
    ``[band_lo, band_hi]`` and ``mean_out`` the mean over the remaining rows
    (0 when the band covers every row). An all-zero input scores 0.5, energy
    only outside the band scores at most 0.5, and adding in-band energy
    raises the score.
    """

    def __init__(
        self,
        band_lo: float,
        band_hi: float,
        gain: float = 20.0,
        k_max: int = K_MAX,
        sample_rate_hz: float = SAMPLE_RATE_HZ,
    ):
        freqs = frequency_axis(k_max, sample_rate_hz)
        if not (0.0 <= band_lo < band_hi <= freqs[-1]):
            raise ValueError(
                f"band [{band_lo}, {band_hi}] Hz must satisfy 0 <= lo < hi <= {freqs[-1]:.6g}"
            )
        if gain <= 0:
            raise ValueError("gain must be positive")
        in_band = (freqs >= band_lo) & (freqs <= band_hi)
        if not in_band.any():
            raise ValueError(f"band [{band_lo}, {band_hi}] Hz contains no frequency bin")
        self.band_lo = float(band_lo)
        self.band_hi = float(band_hi)
        self.gain = float(gain)
        self.k_max = k_max
        self.sample_rate_hz = sample_rate_hz
        self.in_band = in_band
        self.rows = np.flatnonzero(in_band)

    def predict(self, batch) -> np.ndarray:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 4 and x.shape[-1] == 1:
            x = x[..., 0]
        if x.ndim != 3 or x.shape[1] != self.k_max + 1:
            raise ValidationError(
                f"input batch shape {x.shape} incompatible with {self.k_max + 1} frequency rows"
            )
        mean_in = x[:, self.in_band, :].mean(axis=(1, 2))
        if self.in_band.all():
            mean_out = np.zeros_like(mean_in)
        else:
            mean_out = x[:, ~self.in_band, :].mean(axis=(1, 2))
        p = 1.0 / (1.0 + np.exp(-self.gain * (mean_in - mean_out)))
        return np.stack([p, 1.0 - p], axis=1)

    def score(self, spec) -> ClassScore:
        return forward(self, spec)


def reference_classifier(band_lo: float, band_hi: float, gain: float = 20.0) -> ReferenceClassifier:
    return ReferenceClassifier(band_lo, band_hi, gain)
