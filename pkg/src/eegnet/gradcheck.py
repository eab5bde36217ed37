"""Finite-difference verification of every differentiable operation and
architecture.

All checks run in float64 at reduced dimensions (window 3, mesh 4x5,
feature width 8, hidden 6/4, 3 classes, conv maps 2/3/4) so the whole suite
finishes in seconds on a laptop CPU.  The relative-error metric is
|a - b| / max(1e-8, |a| + |b|) per coordinate, maximized over all inputs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import Tensor, backward, softmax_cross_entropy
from .convolution import conv1d_same, conv2d_same, conv3d_same
from .models import ModelConfig, param_init


def finite_diff_check(fn, inputs, eps: float = 1e-4) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn(*inputs)`` must return a scalar tensor and rebuild its graph on
    every call; each input coordinate is perturbed in place by +/-eps and
    restored.
    """
    loss = fn(*inputs)
    if loss.data.size != 1:
        raise ValueError("finite_diff_check needs a scalar-valued function")
    backward(loss)
    analytic = [
        (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for t in inputs
    ]
    worst = 0.0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = float(fn(*inputs).data)
            flat[i] = saved - eps
            f_minus = float(fn(*inputs).data)
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = gflat[i]
            worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    return worst


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


REDUCED = dict(classes=3, window=3, channels=6, mesh_h=4, mesh_w=5,
               fc_width=8, conv_depth=3, lstm_depth=2, conv_maps=(2, 3, 4))


def reduced_config(arch: str, **overrides) -> ModelConfig:
    kw = dict(REDUCED, hidden=4 if arch == "parallel" else 6)
    kw.update(overrides)
    return ModelConfig(arch=arch, **kw)


def _t(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), dtype=np.float64, requires_grad=True)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return ad.tensor_sum(ad.mul(out, Tensor.constant(weights)))


def _check_matmul(rng):
    a, b = _t(rng, 4, 3), _t(rng, 3, 2)
    c = rng.standard_normal((4, 2))
    return finite_diff_check(lambda a, b: _weighted_sum(ad.matmul(a, b), c), [a, b])


def _check_conv(nd):
    conv = {1: conv1d_same, 2: conv2d_same, 3: conv3d_same}[nd]
    spatial = {1: (7,), 2: (4, 5), 3: (3, 4, 4)}[nd]

    def run(rng):
        x = _t(rng, 2, *spatial)
        k = _t(rng, 3, 2, *(3,) * nd)
        b = _t(rng, 3)
        c = np.random.default_rng(7).standard_normal((3,) + spatial)
        return finite_diff_check(lambda x, k, b: _weighted_sum(conv(x, k, b), c), [x, k, b])

    return run


def _check_activation(op):
    def run(rng):
        x = _t(rng, 20)
        c = rng.standard_normal(20)
        return finite_diff_check(lambda x: _weighted_sum(op(x), c), [x])

    return run


def _check_softmax(rng):
    x = _t(rng, 5)
    return finite_diff_check(lambda x: softmax_cross_entropy(x, 2)[0], [x])


def _lstm_tensors(rng, in_size, hidden):
    return {
        "rnn.l0.w": _t(rng, in_size, 4 * hidden),
        "rnn.l0.u": _t(rng, hidden, 4 * hidden),
        "rnn.l0.b": _t(rng, 4 * hidden),
    }


def _check_lstm_step(rng):
    hidden, in_size = 4, 5
    tensors = _lstm_tensors(rng, in_size, hidden)
    x, h, c = _t(rng, 2, in_size), _t(rng, 2, hidden), _t(rng, 2, hidden)
    ch = rng.standard_normal((2, hidden))
    cc = rng.standard_normal((2, hidden))
    inputs = [x, h, c] + list(tensors.values())

    def fn(*_):
        h2, c2 = models._lstm_step(x, h, c, tensors, "rnn.l0", hidden)
        return ad.add(_weighted_sum(h2, ch), _weighted_sum(c2, cc))

    return finite_diff_check(fn, inputs)


def _check_lstm_sequence(rng):
    config = reduced_config("rnn", mid_fc=False, final_fc=False)
    params = param_init(config, seed=5, dtype=np.float64)
    steps_data = [rng.standard_normal((2, config.channels)) for _ in range(3)]
    c = rng.standard_normal((2, config.hidden))

    def fn(*_):
        steps = [Tensor.constant(s) for s in steps_data]
        out = models._lstm_stack(steps, params.tensors, config.lstm_depth, config.hidden)
        return _weighted_sum(out, c)

    lstm_only = [params.tensors[k] for k in params.tensors if k.startswith("rnn.")]
    return finite_diff_check(fn, lstm_only)


def _check_conv_stack(rng):
    config = reduced_config("cascade")
    params = param_init(config, seed=3, dtype=np.float64)
    mesh = rng.standard_normal((1, config.mesh_h, config.mesh_w))
    c = rng.standard_normal(config.fc_width)
    stack = [params.tensors[k] for k in params.tensors if k.startswith("cnn.")]

    def fn(*_):
        out = models.conv_stack_forward(mesh, params, mode="eval")
        return _weighted_sum(out, c)

    return finite_diff_check(fn, stack)


def _segment(rng, config: ModelConfig):
    raw = rng.standard_normal((config.window, config.channels))
    meshes = rng.standard_normal((config.window, config.mesh_h, config.mesh_w))
    return raw, meshes


def _check_model(arch: str, **overrides):
    def run(rng):
        config = reduced_config(arch, **overrides)
        params = param_init(config, seed=11, dtype=np.float64)
        raw, meshes = _segment(rng, config)
        label = 1

        def fn(*_):
            logits = models.forward_windows(params, raw[None], meshes[None], mode="eval")
            loss, _ = ad.softmax_cross_entropy_batch(logits, np.array([label]))
            return loss

        return finite_diff_check(fn, list(params.tensors.values()))

    return run


# name -> (runner, tolerance); model checks get the architecture-level bound
CHECKS = {
    "matmul": (_check_matmul, 1e-6),
    "conv1d": (_check_conv(1), 1e-6),
    "conv2d": (_check_conv(2), 1e-6),
    "conv3d": (_check_conv(3), 1e-6),
    "elu": (_check_activation(ad.elu), 1e-6),
    "sigmoid": (_check_activation(ad.sigmoid), 1e-6),
    "tanh": (_check_activation(ad.tanh), 1e-6),
    "softmax_ce": (_check_softmax, 1e-6),
    "lstm_step": (_check_lstm_step, 1e-5),
    "lstm_sequence": (_check_lstm_sequence, 1e-5),
    "conv_stack": (_check_conv_stack, 1e-4),
    "cascade": (_check_model("cascade"), 1e-4),
    "parallel_cat": (_check_model("parallel", fusion="cat"), 1e-4),
    "parallel_add": (_check_model("parallel", fusion="add"), 1e-4),
    "parallel_cat_fc": (_check_model("parallel", fusion="cat-fc"), 1e-4),
    "parallel_cat_conv": (_check_model("parallel", fusion="cat-conv"), 1e-4),
    "cnn1d": (_check_model("cnn1d"), 1e-4),
    "cnn2d": (_check_model("cnn2d"), 1e-4),
    "cnn3d": (_check_model("cnn3d"), 1e-4),
    "rnn": (_check_model("rnn"), 1e-4),
}


def run_checks(only: str | None = None, seed: int = 0) -> list:
    """Run the named finite-difference checks (all by prefix match)."""
    names = [n for n in CHECKS if only is None or n.startswith(only)]
    if not names:
        raise ValueError(f"no gradient check matches {only!r}; known: {sorted(CHECKS)}")
    results = []
    for name in names:
        runner, tolerance = CHECKS[name]
        rng = np.random.default_rng(seed + zlib.crc32(name.encode()) % 1000)
        results.append(CheckResult(name=name, max_rel_err=runner(rng), tolerance=tolerance))
    return results
