"""Minimal dense-tensor reverse-mode autodiff with MLP layers and Adam.

Values are numpy arrays; compute defaults to float32 (test oracles use
float64). The graph is a tape of parent links built eagerly by each op.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float32
LEAKY_SLOPE = 0.01


class ShapeMismatch(Exception):
    pass


class NonScalarLoss(Exception):
    pass


class UnnormalizedInput(Exception):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"

    # -- graph machinery ----------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise NonScalarLoss(f"loss has shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()

        def visit(t: Tensor):
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    stack.append((p, False))

        visit(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if parent.requires_grad or parent._backward is not None:
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- ops ------------------------------------------------------------

    def _binary(self, other, fwd, bwd):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        out = Tensor(fwd(self.data, other.data))
        out._parents = (self, other)
        out._backward = lambda g: bwd(g, self, other)
        return out

    def __add__(self, other):
        return self._binary(
            other,
            np.add,
            lambda g, a, b: [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))],
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(
            other,
            np.subtract,
            lambda g, a, b: [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape))],
        )

    def __mul__(self, other):
        return self._binary(
            other,
            np.multiply,
            lambda g, a, b: [
                (a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape)),
            ],
        )

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor(-self.data)
        out._parents = (self,)
        out._backward = lambda g: [(self, -g)]
        return out

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.shape[-1] != other.data.shape[0]:
            raise ShapeMismatch(f"{self.shape} @ {other.shape}")
        out = Tensor(self.data @ other.data)
        out._parents = (self, other)

        def bwd(g):
            return [
                (self, g @ other.data.T),
                (other, _flatten_leading(self.data).T @ _flatten_leading(g)),
            ]

        out._backward = bwd
        return out

    __matmul__ = matmul

    def sum(self, axis=None):
        out = Tensor(self.data.sum(axis=axis, keepdims=False))

        def bwd(g):
            if axis is None:
                return [(self, np.broadcast_to(g, self.shape).copy())]
            gg = np.expand_dims(g, axis)
            return [(self, np.broadcast_to(gg, self.shape).copy())]

        out._parents = (self,)
        out._backward = bwd
        return out

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape))
        out._parents = (self,)
        out._backward = lambda g: [(self, g.reshape(self.shape))]
        return out

    def slice_last(self, start: int, stop: int) -> "Tensor":
        out = Tensor(self.data[..., start:stop])

        def bwd(g):
            full = np.zeros_like(self.data)
            full[..., start:stop] = g
            return [(self, full)]

        out._parents = (self,)
        out._backward = bwd
        return out

    def leaky_relu(self, slope: float = LEAKY_SLOPE) -> "Tensor":
        out = Tensor(np.where(self.data > 0, self.data, slope * self.data))
        mask = np.where(self.data > 0, 1.0, slope).astype(self.dtype)
        out._parents = (self,)
        out._backward = lambda g: [(self, g * mask)]
        return out

    def sigmoid(self) -> "Tensor":
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s)
        out._parents = (self,)
        out._backward = lambda g: [(self, g * s * (1 - s))]
        return out

    def softmax(self) -> "Tensor":
        """Softmax over the last axis, max-subtracted for stability."""
        z = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
        out = Tensor(s)

        def bwd(g):
            dot = (g * s).sum(axis=-1, keepdims=True)
            return [(self, (g - dot) * s)]

        out._parents = (self,)
        out._backward = bwd
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data))
        out._parents = (self,)
        out._backward = lambda g: [(self, g / self.data)]
        return out

    def clamp_min(self, floor: float) -> "Tensor":
        out = Tensor(np.maximum(self.data, floor))
        mask = (self.data >= floor).astype(self.dtype)
        out._parents = (self,)
        out._backward = lambda g: [(self, g * mask)]
        return out

    def gather_rows(self, labels: np.ndarray) -> "Tensor":
        """Pick entry ``labels[b]`` from each row of a (B, k) tensor."""
        idx = np.arange(self.data.shape[0])
        out = Tensor(self.data[idx, labels])

        def bwd(g):
            full = np.zeros_like(self.data)
            full[idx, labels] = g
            return [(self, full)]

        out._parents = (self,)
        out._backward = bwd
        return out

    def bmm_vec(self, vec: "Tensor") -> "Tensor":
        """Batched matrix-vector product: (B, i, j) x (B, j) -> (B, i)."""
        if self.data.shape[0] != vec.data.shape[0] or self.data.shape[2] != vec.data.shape[1]:
            raise ShapeMismatch(f"{self.shape} bmm {vec.shape}")
        out = Tensor(np.einsum("bij,bj->bi", self.data, vec.data))

        def bwd(g):
            return [
                (self, np.einsum("bi,bj->bij", g, vec.data)),
                (vec, np.einsum("bij,bi->bj", self.data, g)),
            ]

        out._parents = (self, vec)
        out._backward = bwd
        return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _flatten_leading(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def cross_entropy(probabilities: Tensor, labels: np.ndarray) -> Tensor:
    """Mean -log p[label] over the batch, with a 1e-12 probability floor."""
    sums = probabilities.data.sum(axis=-1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise UnnormalizedInput(f"rows sum up to {sums.min():.6f}..{sums.max():.6f}")
    labels = np.asarray(labels)
    if labels.max(initial=0) >= probabilities.data.shape[-1]:
        raise ShapeMismatch("label out of range")
    picked = probabilities.gather_rows(labels).clamp_min(1e-12)
    return -(picked.log().mean())


# ---------------------------------------------------------------------------
# MLP


class Mlp:
    """Fully connected stack with LeakyReLU between layers.

    final: "none" | "softmax" | "sigmoid".
    """

    def __init__(self, widths: Sequence[int], final: str = "none",
                 seed: int = 0, dtype=None):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if final not in ("none", "softmax", "sigmoid"):
            raise ValueError(f"unknown final activation {final!r}")
        self.widths = tuple(widths)
        self.final = final
        rng = np.random.Generator(np.random.PCG64(seed))
        dt = dtype or DTYPE
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            self.weights.append(Tensor(w.astype(dt), requires_grad=True))
            self.biases.append(Tensor(b.astype(dt), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.widths[0]:
            raise ShapeMismatch(f"input width {x.data.shape[-1]}, expected {self.widths[0]}")
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = h.leaky_relu()
        if self.final == "softmax":
            h = h.softmax()
        elif self.final == "sigmoid":
            h = h.sigmoid()
        return h

    __call__ = forward


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """Bias-corrected Adam update using the grads stored on the params."""
        self.step_count += 1
        t = self.step_count
        for k, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeMismatch(f"grad {g.shape} vs param {p.data.shape}")
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1**t)
            v_hat = self.v[k] / (1 - self.beta2**t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# Checkpoint container

_MAGIC = b"C2BM"
_VERSION = 1


def save_tensors(named: dict[str, np.ndarray]) -> bytes:
    """Versioned binary container of named little-endian f32 tensors."""
    chunks = [_MAGIC, struct.pack("<I", _VERSION)]
    for name, arr in named.items():
        nb = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def load_tensors(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != _MAGIC:
        raise ValueError("bad magic bytes")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, pos) if rank else ()
        pos += 8 * rank
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims)
        pos += 4 * count
        out[name] = arr.copy()
    return out
