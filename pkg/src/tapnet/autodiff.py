"""Dense-matrix reverse-mode automatic differentiation.

Everything is a rank-2 float64 array: vectors are n x 1, scalars are 1 x 1.
Operations are recorded on a Tape; Tape.backward replays the records in
reverse and accumulates gradients into registered Parameters.

No broadcasting beyond scalar-times-tensor. Shapes are checked eagerly so
mismatches fail at the op that caused them.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"expected rank-2 array, got rank {arr.ndim}")
    return arr


class Tensor:
    """A node in the recorded computation. Do not mutate .value."""

    __slots__ = ("value", "tape", "node_id")

    def __init__(self, value: np.ndarray, tape: "Tape", node_id: int):
        self.value = value
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, id={self.node_id})"


class Parameter:
    """A named trainable value with an accumulated gradient buffer."""

    def __init__(self, value, name: str):
        self.value = _as_matrix(value).copy()
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


class Tape:
    """One recording of a forward computation.

    Records are appended in creation order, which is a topological order,
    so the backward pass is a single reverse sweep.
    """

    def __init__(self):
        self._next_id = 0
        # (out_id, backward_fn) where backward_fn(grad_out) yields
        # (input_id, gradient contribution) pairs.
        self._records = []
        # node_id -> Parameter for leaves created via watch()
        self._watched = {}

    def _new_tensor(self, value: np.ndarray) -> Tensor:
        t = Tensor(value, self, self._next_id)
        self._next_id += 1
        return t

    def _record(self, out: Tensor, backward_fn):
        self._records.append((out.node_id, backward_fn))

    def constant(self, value) -> Tensor:
        """Lift a plain array onto the tape; receives no gradient."""
        return self._new_tensor(_as_matrix(value))

    def watch(self, param: Parameter) -> Tensor:
        """Create a leaf tensor whose gradient accumulates into param.grad."""
        t = self._new_tensor(param.value.copy())
        self._watched[t.node_id] = param
        return t

    def backward(self, root: Tensor):
        """Accumulate d(root)/d(param) into every watched Parameter's .grad."""
        if root.tape is not self:
            raise ValueError("root tensor does not belong to this tape")
        if root.shape != (1, 1):
            raise DimensionError(f"backward root must be 1x1, got {root.shape}")
        grads = {root.node_id: np.ones((1, 1))}
        for out_id, backward_fn in reversed(self._records):
            g = grads.get(out_id)
            if g is None:
                continue
            for in_id, contrib in backward_fn(g):
                if in_id in grads:
                    grads[in_id] = grads[in_id] + contrib
                else:
                    grads[in_id] = contrib
        for node_id, param in self._watched.items():
            g = grads.get(node_id)
            if g is not None:
                param.grad += g


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return tape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    out = tape._new_tensor(a.value @ b.value)
    av, bv = a.value, b.value

    def backward(g):
        return [(a.node_id, g @ bv.T), (b.node_id, av.T @ g)]

    tape._record(out, backward)
    return out


def transpose(x: Tensor) -> Tensor:
    tape = x.tape
    out = tape._new_tensor(x.value.T.copy())

    def backward(g):
        return [(x.node_id, g.T)]

    tape._record(out, backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ, {a.shape} vs {b.shape}")
    out = tape._new_tensor(a.value + b.value)

    def backward(g):
        return [(a.node_id, g), (b.node_id, g)]

    tape._record(out, backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    tape = _same_tape(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    out = tape._new_tensor(a.value * b.value)
    av, bv = a.value, b.value

    def backward(g):
        return [(a.node_id, g * bv), (b.node_id, g * av)]

    tape._record(out, backward)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Scalar-times-tensor, the one permitted broadcast."""
    tape = x.tape
    c = float(c)
    out = tape._new_tensor(x.value * c)

    def backward(g):
        return [(x.node_id, g * c)]

    tape._record(out, backward)
    return out


def _softmax(v: np.ndarray, axis: int) -> np.ndarray:
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_vec(x: Tensor) -> Tensor:
    tape = x.tape
    if x.shape[1] != 1 or x.shape[0] < 1:
        raise DimensionError(f"softmax_vec expects n x 1 with n >= 1, got {x.shape}")
    s = _softmax(x.value, axis=0)
    out = tape._new_tensor(s)

    def backward(g):
        # J^T g = s * (g - s.g)
        return [(x.node_id, s * (g - (s * g).sum()))]

    tape._record(out, backward)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    tape = x.tape
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionError(f"softmax_rows expects a non-empty matrix, got {x.shape}")
    s = _softmax(x.value, axis=1)
    out = tape._new_tensor(s)

    def backward(g):
        dot = (s * g).sum(axis=1, keepdims=True)
        return [(x.node_id, s * (g - dot))]

    tape._record(out, backward)
    return out


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    tape = x.tape
    # subgradient at 0 follows the positive branch
    mask = np.where(x.value >= 0.0, 1.0, slope)
    out = tape._new_tensor(x.value * mask)

    def backward(g):
        return [(x.node_id, g * mask)]

    tape._record(out, backward)
    return out


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, slope=0.0)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    tape = x.tape
    neg = alpha * (np.exp(np.minimum(x.value, 0.0)) - 1.0)
    pos_mask = x.value >= 0.0
    out = tape._new_tensor(np.where(pos_mask, x.value, neg))
    deriv = np.where(pos_mask, 1.0, neg + alpha)

    def backward(g):
        return [(x.node_id, g * deriv)]

    tape._record(out, backward)
    return out


def col_sum(x: Tensor) -> Tensor:
    tape = x.tape
    if x.shape[0] < 1:
        raise DimensionError("col_sum of empty tensor")
    out = tape._new_tensor(x.value.sum(axis=0, keepdims=True))
    n = x.shape[0]

    def backward(g):
        return [(x.node_id, np.repeat(g, n, axis=0))]

    tape._record(out, backward)
    return out


def col_mean(x: Tensor) -> Tensor:
    tape = x.tape
    if x.shape[0] < 1:
        raise DimensionError("col_mean of empty tensor")
    n = x.shape[0]
    out = tape._new_tensor(x.value.mean(axis=0, keepdims=True))

    def backward(g):
        return [(x.node_id, np.repeat(g / n, n, axis=0))]

    tape._record(out, backward)
    return out


def col_max(x: Tensor) -> Tensor:
    """Columnwise max; gradient routes to the argmax, ties to the lowest row."""
    tape = x.tape
    if x.shape[0] < 1:
        raise DimensionError("col_max of empty tensor")
    argmax = x.value.argmax(axis=0)  # np.argmax takes the first (lowest) tie
    out = tape._new_tensor(x.value.max(axis=0, keepdims=True))
    n, d = x.shape

    def backward(g):
        gx = np.zeros((n, d))
        gx[argmax, np.arange(d)] = g[0]
        return [(x.node_id, gx)]

    tape._record(out, backward)
    return out


def row_mean_scaled(x: Tensor) -> Tensor:
    """Row sums scaled by 1/rows, as an n x 1 column."""
    tape = x.tape
    n = x.shape[0]
    if n < 1:
        raise DimensionError("row_mean_scaled of empty tensor")
    out = tape._new_tensor(x.value.sum(axis=1, keepdims=True) / n)
    d = x.shape[1]

    def backward(g):
        return [(x.node_id, np.repeat(g / n, d, axis=1))]

    tape._record(out, backward)
    return out


def row_gather(x: Tensor, idx) -> Tensor:
    """Select rows by index; duplicates accumulate in the backward scatter."""
    tape = x.tape
    idx = [int(i) for i in idx]
    n = x.shape[0]
    for i in idx:
        if not 0 <= i < n:
            raise IndexError(f"row_gather: index {i} out of range [0, {n})")
    out = tape._new_tensor(x.value[idx, :].copy())

    def backward(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return [(x.node_id, gx)]

    tape._record(out, backward)
    return out


def row_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of x (k x d) by s[i] (k x 1)."""
    tape = _same_tape(x, s)
    if s.shape != (x.shape[0], 1):
        raise DimensionError(f"row_scale: need {x.shape[0]} x 1 scales, got {s.shape}")
    out = tape._new_tensor(x.value * s.value)
    xv, sv = x.value, s.value

    def backward(g):
        return [
            (x.node_id, g * sv),
            (s.node_id, (g * xv).sum(axis=1, keepdims=True)),
        ]

    tape._record(out, backward)
    return out


def log(x: Tensor) -> Tensor:
    tape = x.tape
    out = tape._new_tensor(np.log(x.value))
    xv = x.value

    def backward(g):
        return [(x.node_id, g / xv)]

    tape._record(out, backward)
    return out


def sum_all(x: Tensor) -> Tensor:
    tape = x.tape
    out = tape._new_tensor(np.array([[x.value.sum()]]))

    def backward(g):
        return [(x.node_id, np.full(x.shape, float(g[0, 0])))]

    tape._record(out, backward)
    return out


def concat_cols(tensors) -> Tensor:
    """Concatenate 1 x d_i row vectors into one 1 x sum(d_i) row."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat_cols of empty list")
    tape = _same_tape(*tensors)
    for t in tensors:
        if t.shape[0] != 1:
            raise DimensionError(f"concat_cols expects 1 x d rows, got {t.shape}")
    out = tape._new_tensor(np.concatenate([t.value for t in tensors], axis=1))
    widths = [t.shape[1] for t in tensors]

    def backward(g):
        contribs = []
        start = 0
        for t, w in zip(tensors, widths):
            contribs.append((t.node_id, g[:, start : start + w]))
            start += w
        return contribs

    tape._record(out, backward)
    return out


def dropout(x: Tensor, keep_rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout with keep-rate semantics; identity when not training."""
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError(f"keep_rate must be in (0, 1], got {keep_rate}")
    if not training or keep_rate == 1.0:
        return x
    tape = x.tape
    mask = (rng.random(x.shape) < keep_rate) / keep_rate
    out = tape._new_tensor(x.value * mask)

    def backward(g):
        return [(x.node_id, g * mask)]

    tape._record(out, backward)
    return out


def cross_entropy_logits(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label] for a 1 x C logit row."""
    tape = logits.tape
    if logits.shape[0] != 1:
        raise DimensionError(f"logits must be 1 x C, got {logits.shape}")
    c = logits.shape[1]
    if not 0 <= label < c:
        raise IndexError(f"label {label} out of range [0, {c})")
    probs = _softmax(logits.value, axis=1)
    # logsumexp form stays finite even when probs[label] underflows
    shifted = logits.value - logits.value.max()
    lse = np.log(np.exp(shifted).sum())
    out = tape._new_tensor(np.array([[lse - shifted[0, label]]]))

    def backward(g):
        grad = probs.copy()
        grad[0, label] -= 1.0
        return [(logits.node_id, grad * float(g[0, 0]))]

    tape._record(out, backward)
    return out
