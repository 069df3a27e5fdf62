"""Res2Net-style extractor and the linear classification head."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..dsp import N_FRAMES, N_LFCC
from ..errors import ConfigError, ShapeError
from . import tensor as T
from .tensor import Tensor

EMBED_DIM = 256
SCALE = 4


class Module:
    """Parameter container with a train/eval switch."""

    training = True

    def children(self) -> OrderedDict[str, "Module"]:
        return OrderedDict((k, v) for k, v in vars(self).items() if isinstance(v, Module))

    def named_parameters(self, prefix: str = "") -> OrderedDict[str, Tensor]:
        out = OrderedDict()
        for k, v in vars(self).items():
            if isinstance(v, Tensor) and v.requires_grad:
                out[prefix + k] = v
        for k, m in self.children().items():
            out.update(m.named_parameters(prefix + k + "."))
        return out

    def named_buffers(self, prefix: str = "") -> OrderedDict[str, np.ndarray]:
        out = OrderedDict()
        for k in getattr(self, "_buffers", ()):
            out[prefix + k] = getattr(self, k)
        for k, m in self.children().items():
            out.update(m.named_buffers(prefix + k + "."))
        return out

    def state_dict(self) -> OrderedDict[str, np.ndarray]:
        state = OrderedDict((k, v.data) for k, v in self.named_parameters().items())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params, buffers = self.named_parameters(), self.named_buffers()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise ShapeError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ShapeError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=p.dtype)
        for k, b in buffers.items():
            if state[k].shape != b.shape:
                raise ShapeError(f"{k}: shape {state[k].shape} != {b.shape}")
            b[...] = state[k]

    def train(self, mode: bool = True):
        self.training = mode
        for m in self.children().values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()


def _param(arr: np.ndarray, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, stride: int = 1,
                 bias: bool = False, dtype=np.float32):
        fan_in = c_in * k * k
        self.weight = _param(rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in), dtype)
        self.bias = _param(np.zeros(c_out), dtype) if bias else None
        self.stride, self.pad = stride, k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, c: int, dtype=np.float32):
        self.gamma = _param(np.ones(c), dtype)
        self.beta = _param(np.zeros(c), dtype)
        self.running_mean = np.zeros(c, dtype=dtype)
        self.running_var = np.ones(c, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.training)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None, dtype=np.float32):
        if rng is None:
            w = np.zeros((d_out, d_in))
        else:
            w = rng.uniform(-1.0, 1.0, (d_out, d_in)) / np.sqrt(d_in)
        self.weight = _param(w, dtype)
        self.bias = _param(np.zeros(d_out), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class Res2NetBlock(Module):
    """Bottleneck block with ``scale`` hierarchical 3x3 groups.

    Layout: 1x1 conv -> BN -> ReLU -> split into ``scale`` groups; group i>0
    goes through its own 3x3 conv (after adding the previous group's output
    when stride is 1); group 0 passes through (avg-pooled when striding);
    concat -> 1x1 conv -> BN, then added to the skip path. No activation
    follows the addition, so a block whose convs are all zero is an identity.
    """

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, stride: int = 1,
                 scale: int = SCALE, dtype=np.float32):
        if c_out % scale:
            raise ConfigError(f"{c_out} channels are not divisible by scale {scale}")
        if stride == 1 and c_in != c_out:
            raise ConfigError("stride-1 blocks need equal input and output channels")
        self.scale, self.stride = scale, stride
        width = c_out // scale
        self.conv_in = Conv2d(c_in, c_out, 1, rng, dtype=dtype)
        self.bn_in = BatchNorm2d(c_out, dtype)
        self.convs = [Conv2d(width, width, 3, rng, stride=stride, dtype=dtype) for _ in range(scale - 1)]
        self.bns = [BatchNorm2d(width, dtype) for _ in range(scale - 1)]
        for i, (c, b) in enumerate(zip(self.convs, self.bns)):
            setattr(self, f"conv{i + 1}", c)
            setattr(self, f"bn{i + 1}", b)
        self.conv_out = Conv2d(c_out, c_out, 1, rng, dtype=dtype)
        self.bn_out = BatchNorm2d(c_out, dtype)
        if stride != 1:
            self.short = Conv2d(c_in, c_out, 1, rng, stride=stride, dtype=dtype)
            self.short_bn = BatchNorm2d(c_out, dtype)
        else:
            self.short = None

    def __call__(self, x: Tensor) -> Tensor:
        h = T.relu(self.bn_in(self.conv_in(x)))
        groups = T.split_channels(h, self.scale)
        outs = [T.avg_pool2d(groups[0], 3, self.stride, 1) if self.stride != 1 else groups[0]]
        prev = None
        for i in range(1, self.scale):
            g = groups[i] if (prev is None or self.stride != 1) else T.add(groups[i], prev)
            prev = T.relu(self.bns[i - 1](self.convs[i - 1](g)))
            outs.append(prev)
        y = self.bn_out(self.conv_out(T.concat_channels(outs)))
        skip = x if self.short is None else self.short_bn(self.short(x))
        return T.add(skip, y)


class Res2NetExtractor(Module):
    """Stem + 4 blocks (16, 32, 64, 128 channels) + GAP + linear to 256."""

    widths = (16, 32, 64, 128)

    def __init__(self, rng: np.random.Generator, embed_dim: int = EMBED_DIM, dtype=np.float32):
        self.stem = Conv2d(1, self.widths[0], 3, rng, stride=2, dtype=dtype)
        self.stem_bn = BatchNorm2d(self.widths[0], dtype)
        c = self.widths[0]
        self.block1 = Res2NetBlock(c, c, rng, 1, dtype=dtype)
        self.block2 = Res2NetBlock(c, self.widths[1], rng, 2, dtype=dtype)
        self.block3 = Res2NetBlock(self.widths[1], self.widths[2], rng, 2, dtype=dtype)
        self.block4 = Res2NetBlock(self.widths[2], self.widths[3], rng, 2, dtype=dtype)
        self.proj = Linear(self.widths[3], embed_dim, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.relu(self.stem_bn(self.stem(x)))
        for b in (self.block1, self.block2, self.block3, self.block4):
            h = b(h)
        return self.proj(T.global_avg_pool(h))


class FingerprintClassifier(Module):
    """Extractor f followed by a single linear head g (zero-initialised)."""

    def __init__(self, n_classes: int, seed: int = 0, dtype=np.float32):
        if n_classes < 2:
            raise ConfigError("need at least two classes")
        rng = np.random.default_rng(seed)
        self.n_classes = n_classes
        self.dtype = np.dtype(dtype)
        self.extractor = Res2NetExtractor(rng, dtype=dtype)
        self.head = Linear(EMBED_DIM, n_classes, None, dtype)

    def as_input(self, x: np.ndarray) -> Tensor:
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (N_FRAMES, N_LFCC):
            raise ShapeError(f"expected a batch of {N_FRAMES}x{N_LFCC} matrices, got {x.shape}")
        return Tensor(np.ascontiguousarray(x[:, None], dtype=self.dtype))

    def logits(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        emb = self.extractor(self.as_input(x))
        return self.head(emb), emb

    def forward(self, x: np.ndarray, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Class probabilities (B x C) and embeddings (B x 256), in eval mode."""
        was = self.training
        self.eval()
        try:
            probs, embs = [], []
            x = np.asarray(x)
            if x.ndim == 2:
                x = x[None]
            for i in range(0, len(x), batch_size):
                lg, emb = self.logits(x[i:i + batch_size])
                probs.append(T.softmax(lg.data))
                embs.append(emb.data.astype(np.float64))
            return np.concatenate(probs), np.concatenate(embs)
        finally:
            self.train(was)

    __call__ = forward
