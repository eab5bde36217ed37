"""Cascade and parallel convolutional-recurrent architectures plus baselines.

Every architecture maps one labeled window (raw vectors and/or normalized
meshes) to K class logits; softmax lives in the loss during training and in
prediction at inference.  Forward passes are pure functions of the input,
the parameters, the mode and the dropout mask source, and accept either one
window (spec-level entry points) or a batch (training paths).

Dropout placement: after the fully connected layer inside the per-step conv
stack and after the final-stage fully connected layers (the cascade head FC
and the parallel post-LSTM FC).  The parallel pre-LSTM FC and recurrent
connections carry no dropout.  Per-step conv weights are shared across the
window's time steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .convolution import conv1d_same, conv2d_same, conv3d_same

ARCHITECTURES = ("cascade", "parallel", "cnn1d", "cnn2d", "cnn3d", "rnn")
FUSIONS = ("cat", "add", "cat-fc", "cat-conv")

# LSTM gate layout inside the fused 4d-wide matrices: input, forget,
# candidate, output.  The forget slice of each bias starts at hidden size.
_GATES = 4


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    classes: int = 5
    window: int = 10
    channels: int = 64
    mesh_h: int = 10
    mesh_w: int = 11
    fc_width: int = 1024
    hidden: int = 64
    conv_depth: int = 3
    lstm_depth: int = 2
    fusion: str = "cat"
    keep_prob: float = 0.5
    conv_maps: tuple = (32, 64, 128)
    mid_fc: bool = True
    final_fc: bool = True

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}, expected one of {ARCHITECTURES}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}, expected one of {FUSIONS}")
        if not 1 <= self.conv_depth <= len(self.conv_maps):
            raise ValueError(f"conv depth {self.conv_depth} needs feature-map counts, have {self.conv_maps}")
        if self.lstm_depth < 1:
            raise ValueError("lstm depth must be >= 1")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep probability must be in (0, 1], got {self.keep_prob}")
        for name in ("classes", "window", "channels", "mesh_h", "mesh_w", "fc_width", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def maps(self) -> tuple:
        return tuple(self.conv_maps[: self.conv_depth])


def canonical_config(arch: str, **overrides) -> ModelConfig:
    """Published hyperparameters: fc width 1024, cascade hidden 64,
    parallel hidden 16, conv maps 32/64/128, keep probability 0.5."""
    defaults = {"hidden": 16} if arch == "parallel" else {}
    defaults.update(overrides)
    return ModelConfig(arch=arch, **defaults)


@dataclass
class ModelParams:
    """Learnable tensors for one configured architecture."""

    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            config=self.config,
            tensors={k: Tensor.parameter(t.data.astype(dtype)) for k, t in self.tensors.items()},
        )


# ---------------------------------------------------------------------------
# shape plan and initialization

def _conv_spatial(config: ModelConfig, arch: str) -> tuple:
    if arch == "cnn1d":
        return (config.channels,)
    if arch == "cnn3d":
        return (config.window, config.mesh_h, config.mesh_w)
    return (config.mesh_h, config.mesh_w)


def _spatial_feature_size(config: ModelConfig) -> int:
    """Per-step feature length out of the conv stack (cascade/parallel)."""
    if config.mid_fc:
        return config.fc_width
    return config.maps[-1] * config.mesh_h * config.mesh_w


def _temporal_feature_size(config: ModelConfig) -> int:
    """Output length of the parallel RNN path."""
    return config.fc_width if config.final_fc else config.hidden


def _fused_size(config: ModelConfig) -> int:
    spatial, temporal = _spatial_feature_size(config), _temporal_feature_size(config)
    if config.fusion == "cat":
        return spatial + temporal
    if config.fusion == "cat-fc":
        return config.fc_width
    if spatial != temporal:
        raise ValueError(
            f"{config.fusion} fusion needs equal feature sizes, got {spatial} and {temporal}"
        )
    return spatial


def _plan(config: ModelConfig) -> list:
    """Ordered (name, shape, init) triples; init is 'dense', 'conv',
    'lstm_w', 'lstm_u', 'bias' or 'forget_bias'."""
    arch = config.arch
    plan = []

    def conv_stack(spatial_nd: int):
        in_ch = 1
        kernel = (3,) * spatial_nd
        for i, m in enumerate(config.maps):
            plan.append((f"cnn.conv{i}.kernel", (m, in_ch) + kernel, "conv"))
            plan.append((f"cnn.conv{i}.bias", (m,), "bias"))
            in_ch = m

    def conv_fc(spatial: tuple):
        flat = config.maps[-1] * int(np.prod(spatial))
        plan.append(("cnn.fc.weight", (flat, config.fc_width), "dense"))
        plan.append(("cnn.fc.bias", (config.fc_width,), "bias"))

    def lstm(input_size: int):
        d = config.hidden
        for j in range(config.lstm_depth):
            size = input_size if j == 0 else d
            plan.append((f"rnn.l{j}.w", (size, _GATES * d), "lstm_w"))
            plan.append((f"rnn.l{j}.u", (d, _GATES * d), "lstm_u"))
            plan.append((f"rnn.l{j}.b", (_GATES * d,), "forget_bias"))

    def head(input_size: int):
        plan.append(("head.out.weight", (input_size, config.classes), "dense"))
        plan.append(("head.out.bias", (config.classes,), "bias"))

    if arch == "cascade":
        conv_stack(2)
        if config.mid_fc:
            conv_fc((config.mesh_h, config.mesh_w))
        lstm(_spatial_feature_size(config))
        if config.final_fc:
            plan.append(("head.fc.weight", (config.hidden, config.fc_width), "dense"))
            plan.append(("head.fc.bias", (config.fc_width,), "bias"))
        head(config.fc_width if config.final_fc else config.hidden)
    elif arch == "parallel":
        conv_stack(2)
        if config.mid_fc:
            conv_fc((config.mesh_h, config.mesh_w))
            plan.append(("rnn.fc_in.weight", (config.channels, config.fc_width), "dense"))
            plan.append(("rnn.fc_in.bias", (config.fc_width,), "bias"))
        lstm(config.fc_width if config.mid_fc else config.channels)
        if config.final_fc:
            plan.append(("rnn.fc_out.weight", (config.hidden, config.fc_width), "dense"))
            plan.append(("rnn.fc_out.bias", (config.fc_width,), "bias"))
        fused = _fused_size(config)
        if config.fusion == "cat-fc":
            joint = _spatial_feature_size(config) + _temporal_feature_size(config)
            plan.append(("fuse.weight", (joint, config.fc_width), "dense"))
            plan.append(("fuse.bias", (config.fc_width,), "bias"))
        elif config.fusion == "cat-conv":
            plan.append(("fuse.weight", (2,), "bias"))
            plan.append(("fuse.bias", (1,), "bias"))
        head(fused)
    elif arch in ("cnn1d", "cnn2d", "cnn3d"):
        nd = {"cnn1d": 1, "cnn2d": 2, "cnn3d": 3}[arch]
        conv_stack(nd)
        conv_fc(_conv_spatial(config, arch))
        head(config.fc_width)
    else:  # rnn baseline
        if config.mid_fc:
            plan.append(("rnn.fc_in.weight", (config.channels, config.fc_width), "dense"))
            plan.append(("rnn.fc_in.bias", (config.fc_width,), "bias"))
        lstm(config.fc_width if config.mid_fc else config.channels)
        if config.final_fc:
            plan.append(("rnn.fc_out.weight", (config.hidden, config.fc_width), "dense"))
            plan.append(("rnn.fc_out.bias", (config.fc_width,), "bias"))
        head(config.fc_width if config.final_fc else config.hidden)
    return plan


def _glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def param_init(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Deterministic fan-in-scaled uniform initialization.

    Dense and conv weights use bound sqrt(6/(fan_in+fan_out)); LSTM matrices
    are initialized per gate; biases start at zero except LSTM forget-gate
    biases, which start at 1.
    """
    rng = np.random.default_rng(seed)
    d = config.hidden
    tensors = {}
    for name, shape, kind in _plan(config):
        if kind == "bias":
            arr = np.zeros(shape)
        elif kind == "forget_bias":
            arr = np.zeros(shape)
            arr[d: 2 * d] = 1.0
        else:
            if kind == "dense":
                bound = _glorot_bound(shape[0], shape[1])
            elif kind == "conv":
                receptive = int(np.prod(shape[2:]))
                bound = _glorot_bound(shape[1] * receptive, shape[0] * receptive)
            elif kind == "lstm_w":
                bound = _glorot_bound(shape[0], d)
            else:  # lstm_u
                bound = _glorot_bound(d, d)
            arr = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor.parameter(arr.astype(dtype))
    return ModelParams(config=config, tensors=tensors)


# ---------------------------------------------------------------------------
# building blocks

def _require_rng(mode: str, rng):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs an rng for dropout masks")


def _dense(x: Tensor, tensors: dict, name: str) -> Tensor:
    return ad.add(ad.matmul(x, tensors[f"{name}.weight"]), tensors[f"{name}.bias"])


def _conv_stack(config: ModelConfig, tensors: dict, x: Tensor, nd: int,
                mode: str, rng, with_fc: bool) -> Tensor:
    conv = {1: conv1d_same, 2: conv2d_same, 3: conv3d_same}[nd]
    h = x
    for i in range(config.conv_depth):
        h = ad.elu(conv(h, tensors[f"cnn.conv{i}.kernel"], tensors[f"cnn.conv{i}.bias"]))
    flat = ad.reshape(h, (x.shape[0], -1))
    if with_fc:
        flat = ad.elu(_dense(flat, tensors, "cnn.fc"))
        if mode == "train":
            flat = ad.dropout(flat, config.keep_prob, rng)
    return flat


def _lstm_step(x: Tensor, h: Tensor, c: Tensor, tensors: dict, layer: str, hidden: int):
    z = ad.add(ad.add(ad.matmul(x, tensors[f"{layer}.w"]), ad.matmul(h, tensors[f"{layer}.u"])),
               tensors[f"{layer}.b"])
    i = ad.sigmoid(z[:, 0 * hidden:1 * hidden])
    f = ad.sigmoid(z[:, 1 * hidden:2 * hidden])
    g = ad.tanh(z[:, 2 * hidden:3 * hidden])
    o = ad.sigmoid(z[:, 3 * hidden:4 * hidden])
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def _lstm_stack(steps: list, tensors: dict, depth: int, hidden: int) -> Tensor:
    """Run `depth` stacked LSTM layers over a step sequence of (B, in)
    tensors; returns the top layer's final hidden state (B, hidden)."""
    if not steps:
        raise ValueError("LSTM sequence must contain at least one step")
    batch = steps[0].shape[0]
    dtype = steps[0].dtype
    sequence = steps
    h = None
    for j in range(depth):
        h = Tensor.constant(np.zeros((batch, hidden), dtype=dtype))
        c = Tensor.constant(np.zeros((batch, hidden), dtype=dtype))
        outputs = []
        for x in sequence:
            h, c = _lstm_step(x, h, c, tensors, f"rnn.l{j}", hidden)
            outputs.append(h)
        sequence = outputs
    return h


def lstm_sequence(inputs, params: ModelParams) -> Tensor:
    """Stacked-LSTM readout of a step sequence: only the final time step's
    top-layer hidden state is returned."""
    steps = [x if isinstance(x, Tensor) else Tensor.constant(np.asarray(x)) for x in inputs]
    if not steps:
        raise ValueError("LSTM sequence must contain at least one step")
    single = steps[0].ndim == 1
    if single:
        steps = [ad.reshape(x, (1, -1)) for x in steps]
    out = _lstm_stack(steps, params.tensors, params.config.lstm_depth, params.config.hidden)
    return ad.reshape(out, (-1,)) if single else out


def conv_stack_forward(mesh, params: ModelParams, mode: str = "eval", rng=None) -> Tensor:
    """Per-step spatial feature extractor: one mesh in, one feature vector out."""
    _require_rng(mode, rng)
    config = params.config
    x = mesh if isinstance(mesh, Tensor) else Tensor.constant(np.asarray(mesh))
    if x.ndim == 2:
        x = ad.reshape(x, (1,) + x.shape)
    if x.shape != (1, config.mesh_h, config.mesh_w):
        raise ValueError(
            f"mesh must be (1, {config.mesh_h}, {config.mesh_w}), got {x.shape}"
        )
    x = ad.reshape(x, (1,) + x.shape)
    feats = _conv_stack(config, params.tensors, x, 2, mode, rng, with_fc=config.mid_fc)
    return ad.reshape(feats, (-1,))


def fuse(spatial, temporal, kind: str, params: ModelParams | None = None) -> Tensor:
    """Combine spatial and temporal feature vectors (single or batched).

    cat: concatenation, spatial first.  add: elementwise sum.  cat-fc:
    concatenation through a dense layer with ELU.  cat-conv: a two-channel
    pointwise (1x1) convolution, i.e. a learned weighted sum per position.
    """
    if kind not in FUSIONS:
        raise ValueError(f"unknown fusion {kind!r}, expected one of {FUSIONS}")
    a = spatial if isinstance(spatial, Tensor) else Tensor.constant(np.asarray(spatial))
    b = temporal if isinstance(temporal, Tensor) else Tensor.constant(np.asarray(temporal))
    single = a.ndim == 1
    if single:
        a, b = ad.reshape(a, (1, -1)), ad.reshape(b, (1, -1))
    if kind in ("add", "cat-conv") and a.shape != b.shape:
        raise ValueError(f"{kind} fusion needs equal sizes, got {a.shape} and {b.shape}")
    if kind == "cat":
        out = ad.concat([a, b], axis=1)
    elif kind == "add":
        out = ad.add(a, b)
    elif kind == "cat-fc":
        out = ad.elu(_dense(ad.concat([a, b], axis=1), params.tensors, "fuse"))
    else:  # cat-conv
        w = params.tensors["fuse.weight"]
        bias = params.tensors["fuse.bias"]
        out = ad.add(ad.add(ad.mul(a, w[0:1]), ad.mul(b, w[1:2])), bias)
    return ad.reshape(out, (-1,)) if single else out


# ---------------------------------------------------------------------------
# batched architecture forwards

def _cascade_batch(params: ModelParams, meshes: np.ndarray, mode: str, rng) -> Tensor:
    config = params.config
    tensors = params.tensors
    batch, steps = meshes.shape[:2]
    x = Tensor.constant(meshes.reshape(batch * steps, 1, config.mesh_h, config.mesh_w))
    feats = _conv_stack(config, tensors, x, 2, mode, rng, with_fc=config.mid_fc)
    fseq = ad.reshape(feats, (batch, steps, feats.shape[1]))
    step_feats = [fseq[:, s] for s in range(steps)]
    h_last = _lstm_stack(step_feats, tensors, config.lstm_depth, config.hidden)
    if config.final_fc:
        h_last = ad.elu(_dense(h_last, tensors, "head.fc"))
        if mode == "train":
            h_last = ad.dropout(h_last, config.keep_prob, rng)
    return _dense(h_last, tensors, "head.out")


def _parallel_features(params: ModelParams, raw: np.ndarray, meshes: np.ndarray,
                       mode: str, rng):
    config = params.config
    tensors = params.tensors
    batch, steps = raw.shape[:2]
    x = Tensor.constant(meshes.reshape(batch * steps, 1, config.mesh_h, config.mesh_w))
    feats = _conv_stack(config, tensors, x, 2, mode, rng, with_fc=config.mid_fc)
    spatial = ad.tensor_sum(ad.reshape(feats, (batch, steps, feats.shape[1])), axis=1)

    xr = Tensor.constant(raw.reshape(batch * steps, config.channels))
    if config.mid_fc:
        xr = ad.elu(_dense(xr, tensors, "rnn.fc_in"))
    rseq = ad.reshape(xr, (batch, steps, xr.shape[1]))
    step_inputs = [rseq[:, s] for s in range(steps)]
    temporal = _lstm_stack(step_inputs, tensors, config.lstm_depth, config.hidden)
    if config.final_fc:
        temporal = ad.elu(_dense(temporal, tensors, "rnn.fc_out"))
        if mode == "train":
            temporal = ad.dropout(temporal, config.keep_prob, rng)
    return spatial, temporal


def _parallel_batch(params: ModelParams, raw, meshes, mode: str, rng) -> Tensor:
    spatial, temporal = _parallel_features(params, raw, meshes, mode, rng)
    fused = fuse(spatial, temporal, params.config.fusion, params)
    return _dense(fused, params.tensors, "head.out")


def _conv_baseline_batch(params: ModelParams, x: np.ndarray, nd: int, mode: str, rng) -> Tensor:
    feats = _conv_stack(params.config, params.tensors, Tensor.constant(x), nd, mode, rng,
                        with_fc=True)
    return _dense(feats, params.tensors, "head.out")


def _rnn_batch(params: ModelParams, raw: np.ndarray, mode: str, rng) -> Tensor:
    config = params.config
    tensors = params.tensors
    batch, steps = raw.shape[:2]
    xr = Tensor.constant(raw.reshape(batch * steps, config.channels))
    if config.mid_fc:
        xr = ad.elu(_dense(xr, tensors, "rnn.fc_in"))
    rseq = ad.reshape(xr, (batch, steps, xr.shape[1]))
    h_last = _lstm_stack([rseq[:, s] for s in range(steps)], tensors,
                         config.lstm_depth, config.hidden)
    if config.final_fc:
        h_last = ad.elu(_dense(h_last, tensors, "rnn.fc_out"))
        if mode == "train":
            h_last = ad.dropout(h_last, config.keep_prob, rng)
    return _dense(h_last, tensors, "head.out")


def forward_windows(params: ModelParams, raw: np.ndarray, meshes: np.ndarray,
                    mode: str = "eval", rng=None) -> Tensor:
    """Batched window classification: (B, S, ...) arrays -> logits (B, K).

    The per-sample baselines (cnn1d, cnn2d) classify a window by averaging
    the per-step logits; the average is order-invariant, so these models see
    no temporal structure, matching their single-sample contracts.
    """
    _require_rng(mode, rng)
    config = params.config
    arch = config.arch
    batch, steps = raw.shape[:2]
    if arch == "cascade":
        return _cascade_batch(params, meshes, mode, rng)
    if arch == "parallel":
        return _parallel_batch(params, raw, meshes, mode, rng)
    if arch == "rnn":
        return _rnn_batch(params, raw, mode, rng)
    if arch == "cnn3d":
        x = meshes.reshape(batch, 1, steps, config.mesh_h, config.mesh_w)
        return _conv_baseline_batch(params, x, 3, mode, rng)
    if arch == "cnn2d":
        x = meshes.reshape(batch * steps, 1, config.mesh_h, config.mesh_w)
        logits = _conv_baseline_batch(params, x, 2, mode, rng)
    else:  # cnn1d
        x = raw.reshape(batch * steps, 1, config.channels)
        logits = _conv_baseline_batch(params, x, 1, mode, rng)
    per_step = ad.reshape(logits, (batch, steps, config.classes))
    return ad.mul(ad.tensor_sum(per_step, axis=1), 1.0 / steps)


# ---------------------------------------------------------------------------
# spec-level single-window entry points

def _single(params, raw, meshes, mode, rng) -> Tensor:
    logits = forward_windows(params, raw[None], meshes[None], mode, rng)
    return ad.reshape(logits, (-1,))


def cascade_forward(segment, params: ModelParams, mode: str = "eval", rng=None) -> Tensor:
    if params.config.arch != "cascade":
        raise ValueError(f"params are for {params.config.arch!r}, not cascade")
    return _single(params, np.asarray(segment.raw), np.asarray(segment.meshes), mode, rng)


def parallel_forward(segment, params: ModelParams, mode: str = "eval", rng=None) -> Tensor:
    if params.config.arch != "parallel":
        raise ValueError(f"params are for {params.config.arch!r}, not parallel")
    return _single(params, np.asarray(segment.raw), np.asarray(segment.meshes), mode, rng)


def parallel_features(segment, params: ModelParams, mode: str = "eval", rng=None):
    """The two pre-fusion feature vectors of the parallel model: the summed
    per-step spatial features and the RNN-path temporal features."""
    _require_rng(mode, rng)
    spatial, temporal = _parallel_features(
        params, np.asarray(segment.raw)[None], np.asarray(segment.meshes)[None], mode, rng
    )
    return ad.reshape(spatial, (-1,)), ad.reshape(temporal, (-1,))


def baseline_forward(x, params: ModelParams, kind: str, mode: str = "eval", rng=None) -> Tensor:
    """Single-input baseline contract: cnn1d takes one raw sample (n,),
    cnn2d one mesh (h, w), cnn3d a mesh window (S, h, w), rnn a raw window
    (S, n)."""
    _require_rng(mode, rng)
    config = params.config
    if kind != config.arch:
        raise ValueError(f"params are for {config.arch!r}, not {kind!r}")
    x = np.asarray(x)
    expected = {
        "cnn1d": (config.channels,),
        "cnn2d": (config.mesh_h, config.mesh_w),
        "cnn3d": (config.window, config.mesh_h, config.mesh_w),
        "rnn": (config.window, config.channels),
    }
    if kind not in expected:
        raise ValueError(f"unknown baseline kind {kind!r}")
    if x.shape != expected[kind]:
        raise ValueError(f"{kind} input must have shape {expected[kind]}, got {x.shape}")
    if kind == "rnn":
        logits = _rnn_batch(params, x[None], mode, rng)
    elif kind == "cnn1d":
        logits = _conv_baseline_batch(params, x[None, None], 1, mode, rng)
    elif kind == "cnn2d":
        logits = _conv_baseline_batch(params, x[None, None], 2, mode, rng)
    else:
        logits = _conv_baseline_batch(params, x[None, None], 3, mode, rng)
    return ad.reshape(logits, (-1,))
