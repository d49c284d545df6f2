"""Dense float64 tensors with a reverse-mode tape.

Forward primitives run as plain numpy when no tape is active (inference
mode). With an active tape, any primitive touching a grad-requiring input
is recorded and `backward` replays the records in reverse. Everything is
64-bit and single-threaded per tape, so repeated passes are bit-identical.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "TapeError",
    "apply_primitive",
    "backward",
    "replay",
    "softmax",
    "add",
    "subtract",
    "multiply",
    "scalar_multiply",
    "divide",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "exp",
    "log",
    "sqrt",
    "maximum",
    "concat",
    "take_slice",
    "gather",
    "reduce_sum",
    "reduce_mean",
    "reduce_max",
    "transpose",
    "reshape",
    "softmax_op",
    "log_softmax",
    "layer_norm",
]


class ShapeError(ValueError):
    """Raised when primitive inputs have incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """Raised when a forward primitive produces NaN or infinity."""


class TapeError(RuntimeError):
    """Raised on malformed tape usage (no active tape, bad loss node, ...)."""


_STATE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense float64 array, optionally tracked on the active tape.

    Data is stored row-major and treated as immutable once wrapped; training
    code mutates parameter arrays only between tapes (inside optimizer steps).
    """

    __slots__ = ("data", "requires_grad", "_tape", "_node_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would promote 0-d inputs to shape (1,).
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self._node_id = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def node_id_on(self, tape: "Tape") -> int:
        """Node id of this tensor on `tape`, registering a leaf if needed."""
        if self._tape is tape and self._node_id is not None:
            return self._node_id
        nid = tape.register_leaf(self)
        self._tape = tape
        self._node_id = nid
        return nid

    def maybe_node_id(self, tape: "Tape") -> Optional[int]:
        """Node id on `tape` if this tensor participated, else None."""
        if self._tape is tape and self._node_id is not None:
            return self._node_id
        return None

    def __repr__(self) -> str:
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    # Operator sugar; everything routes through apply_primitive.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return subtract(self, _as_tensor(other))

    def __rsub__(self, other):
        return subtract(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_multiply(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_multiply(self, float(other))
        return multiply(_as_tensor(other), self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scalar_multiply(self, 1.0 / float(other))
        return divide(self, other)

    def __neg__(self):
        return scalar_multiply(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims: bool = False):
        return reduce_max(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes=axes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Record:
    """One applied primitive: enough to replay forward and run the adjoint."""

    op: str
    input_ids: tuple[int, ...]
    output_id: int
    params: dict
    saved: tuple
    output: np.ndarray


@dataclass
class Tape:
    """Append-only record of primitive applications, in execution order."""

    records: list[Record] = field(default_factory=list)
    _next_id: int = 0
    leaf_values: dict[int, np.ndarray] = field(default_factory=dict)
    leaf_requires: dict[int, bool] = field(default_factory=dict)

    def new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def register_leaf(self, tensor: Tensor) -> int:
        nid = self.new_id()
        self.leaf_values[nid] = tensor.data
        self.leaf_requires[nid] = tensor.requires_grad
        return nid

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("tape stack corrupted: exiting a non-active tape")
        stack.pop()


# Each primitive: forward(params, *arrays) -> (out, saved)
#                 vjp(grad_out, saved, params, input_shapes) -> per-input grads
_FORWARD: dict[str, Callable] = {}
_VJP: dict[str, Callable] = {}


def _register(name: str, forward: Callable, vjp: Callable) -> None:
    _FORWARD[name] = forward
    _VJP[name] = vjp


def _check_finite(op: str, out: np.ndarray) -> None:
    # Cheap screen first: the sum is NaN/inf iff some element is, or the
    # magnitudes are already blowing up, which deserves the same abort.
    s = out.sum()
    if np.isfinite(s):
        return
    if not np.all(np.isfinite(out)):
        bad = int(np.count_nonzero(~np.isfinite(out)))
        raise NonFiniteError(
            f"primitive '{op}' produced {bad} non-finite value(s) "
            f"in output of shape {out.shape}"
        )
    raise NonFiniteError(f"primitive '{op}' output overflowed (sum not finite)")


def apply_primitive(op: str, *inputs: Tensor, **params) -> Tensor:
    """Run one primitive, recording it on the active tape when grads flow."""
    fwd = _FORWARD.get(op)
    if fwd is None:
        raise KeyError(f"unknown primitive '{op}'")
    arrays = tuple(t.data for t in inputs)
    # Non-finite outputs become NonFiniteError below; silence the interim
    # numpy warnings so the typed error is the only signal.
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out_data, saved = fwd(params, *arrays)
    _check_finite(op, out_data)

    tape = active_tape()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if tape is not None and needs:
        input_ids = tuple(t.node_id_on(tape) for t in inputs)
        out_id = tape.new_id()
        out._tape = tape
        out._node_id = out_id
        tape.records.append(
            Record(op, input_ids, out_id, params, saved, out_data)
        )
    return out


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every requires-grad leaf on `tape`.

    Returns a map node-id -> gradient array. Leaves unreachable from the
    loss get explicit zeros. Iteration order is the reverse record order,
    so repeated calls are bit-identical.
    """
    if loss._tape is not tape or loss._node_id is None:
        raise TapeError("loss tensor is not a node on this tape")
    if loss.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {
        loss._node_id: np.ones_like(loss.data)
    }
    shapes: dict[int, tuple[int, ...]] = {
        nid: v.shape for nid, v in tape.leaf_values.items()
    }
    for rec in tape.records:
        shapes[rec.output_id] = rec.output.shape

    for rec in reversed(tape.records):
        g = grads.pop(rec.output_id, None)
        if g is None:
            continue
        in_shapes = tuple(shapes[i] for i in rec.input_ids)
        contribs = _VJP[rec.op](g, rec.saved, rec.params, in_shapes)
        for nid, contrib in zip(rec.input_ids, contribs):
            if contrib is None:
                continue
            acc = grads.get(nid)
            if acc is None:
                grads[nid] = contrib
            else:
                grads[nid] = acc + contrib

    out: dict[int, np.ndarray] = {}
    for nid, req in tape.leaf_requires.items():
        if not req:
            continue
        g = grads.get(nid)
        if g is None:
            g = np.zeros_like(tape.leaf_values[nid])
        out[nid] = g
    return out


def replay(tape: Tape) -> dict[int, np.ndarray]:
    """Recompute every recorded output from leaf values, in record order."""
    values: dict[int, np.ndarray] = dict(tape.leaf_values)
    for rec in tape.records:
        arrays = tuple(values[i] for i in rec.input_ids)
        out, _ = _FORWARD[rec.op](rec.params, *arrays)
        values[rec.output_id] = out
    return {rec.output_id: values[rec.output_id] for rec in tape.records}


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- arithmetic

def _fw_add(params, a, b):
    return a + b, ()


def _vjp_add(g, saved, params, shapes):
    return _unbroadcast(g, shapes[0]), _unbroadcast(g, shapes[1])


def _fw_subtract(params, a, b):
    return a - b, ()


def _vjp_subtract(g, saved, params, shapes):
    return _unbroadcast(g, shapes[0]), _unbroadcast(-g, shapes[1])


def _fw_multiply(params, a, b):
    return a * b, (a, b)


def _vjp_multiply(g, saved, params, shapes):
    a, b = saved
    return _unbroadcast(g * b, shapes[0]), _unbroadcast(g * a, shapes[1])


def _fw_scalar_multiply(params, a):
    return a * params["c"], ()


def _vjp_scalar_multiply(g, saved, params, shapes):
    return (g * params["c"],)


def _fw_divide(params, a, b):
    return a / b, (a, b)


def _vjp_divide(g, saved, params, shapes):
    a, b = saved
    ga = _unbroadcast(g / b, shapes[0])
    gb = _unbroadcast(-g * a / (b * b), shapes[1])
    return ga, gb


def _fw_matmul(params, a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    return np.matmul(a, b), (a, b)


def _matmul_unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g.reshape(shape)


def _vjp_matmul(g, saved, params, shapes):
    a, b = saved
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    gb = np.matmul(np.swapaxes(a, -1, -2), g)
    return _matmul_unbroadcast(ga, shapes[0]), _matmul_unbroadcast(gb, shapes[1])


# ------------------------------------------------------------- nonlinearities

def _fw_tanh(params, x):
    y = np.tanh(x)
    return y, (y,)


def _vjp_tanh(g, saved, params, shapes):
    (y,) = saved
    return (g * (1.0 - y * y),)


def _fw_sigmoid(params, x):
    # exp of -|x| only, so large magnitudes cannot overflow.
    z = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return y, (y,)


def _vjp_sigmoid(g, saved, params, shapes):
    (y,) = saved
    return (g * y * (1.0 - y),)


def _fw_relu(params, x):
    return np.maximum(x, 0.0), (x,)


def _vjp_relu(g, saved, params, shapes):
    (x,) = saved
    return (g * (x > 0.0),)


def _fw_exp(params, x):
    y = np.exp(x)
    return y, (y,)


def _vjp_exp(g, saved, params, shapes):
    (y,) = saved
    return (g * y,)


def _fw_log(params, x):
    return np.log(x), (x,)


def _vjp_log(g, saved, params, shapes):
    (x,) = saved
    return (g / x,)


def _fw_sqrt(params, x):
    y = np.sqrt(x)
    return y, (y,)


def _vjp_sqrt(g, saved, params, shapes):
    (y,) = saved
    return (g * 0.5 / y,)


def _fw_maximum(params, a, b):
    return np.maximum(a, b), (a, b)


def _vjp_maximum(g, saved, params, shapes):
    a, b = saved
    take_a = a >= b  # ties route to the first argument, deterministically
    ga = _unbroadcast(g * take_a, shapes[0])
    gb = _unbroadcast(g * (~take_a), shapes[1])
    return ga, gb


# ------------------------------------------------------------ shape movement

def _fw_concat(params, *arrays):
    axis = params["axis"]
    return np.concatenate(arrays, axis=axis), tuple(a.shape[axis] for a in arrays)


def _vjp_concat(g, saved, params, shapes):
    axis = params["axis"]
    sizes = saved
    out = []
    start = 0
    for sz in sizes:
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(start, start + sz)
        out.append(g[tuple(idx)])
        start += sz
    return tuple(out)


def _fw_slice(params, x):
    return x[params["key"]], ()


def _vjp_slice(g, saved, params, shapes):
    z = np.zeros(shapes[0], dtype=np.float64)
    z[params["key"]] = g
    return (z,)


def _fw_gather(params, table):
    idx = params["indices"]
    if table.ndim != 2:
        raise ShapeError(f"gather expects a 2-d table, got {table.shape}")
    return table[idx], ()


def _vjp_gather(g, saved, params, shapes):
    z = np.zeros(shapes[0], dtype=np.float64)
    np.add.at(z, params["indices"], g)
    return (z,)


def _fw_reduce_sum(params, x):
    return np.sum(x, axis=params["axis"], keepdims=params["keepdims"]), (x.shape,)


def _expand_reduced(g, in_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, in_shape).copy()
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, in_shape).copy()


def _vjp_reduce_sum(g, saved, params, shapes):
    (in_shape,) = saved
    return (_expand_reduced(g, in_shape, params["axis"], params["keepdims"]),)


def _fw_reduce_mean(params, x):
    return np.mean(x, axis=params["axis"], keepdims=params["keepdims"]), (x.shape,)


def _vjp_reduce_mean(g, saved, params, shapes):
    (in_shape,) = saved
    axis = params["axis"]
    if axis is None:
        count = int(np.prod(in_shape))
    else:
        count = in_shape[axis]
    g = _expand_reduced(g, in_shape, axis, params["keepdims"])
    return (g / count,)


def _fw_reduce_max(params, x):
    return np.max(x, axis=params["axis"], keepdims=params["keepdims"]), (x,)


def _vjp_reduce_max(g, saved, params, shapes):
    (x,) = saved
    axis = params["axis"]
    keepdims = params["keepdims"]
    if axis is None:
        mask = np.zeros(x.shape, dtype=np.float64)
        mask.reshape(-1)[int(np.argmax(x))] = 1.0
        return (mask * g,)
    idx = np.argmax(x, axis=axis)
    mask = np.zeros(x.shape, dtype=np.float64)
    np.put_along_axis(mask, np.expand_dims(idx, axis), 1.0, axis=axis)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return (mask * g,)


def _fw_transpose(params, x):
    return np.transpose(x, params["axes"]).copy(), ()


def _vjp_transpose(g, saved, params, shapes):
    axes = params["axes"]
    if axes is None:
        return (np.transpose(g).copy(),)
    inv = np.argsort(axes)
    return (np.transpose(g, inv).copy(),)


def _fw_reshape(params, x):
    return np.reshape(x, params["shape"]).copy(), ()


def _vjp_reshape(g, saved, params, shapes):
    return (np.reshape(g, shapes[0]).copy(),)


# -------------------------------------------------------- softmax, layer norm

def _softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _fw_softmax(params, x):
    y = _softmax_last(x)
    return y, (y,)


def _vjp_softmax(g, saved, params, shapes):
    (y,) = saved
    dot = np.sum(g * y, axis=-1, keepdims=True)
    return (y * (g - dot),)


def _fw_log_softmax(params, x):
    z = x - np.max(x, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    y = z - lse
    return y, (np.exp(y),)


def _vjp_log_softmax(g, saved, params, shapes):
    (sm,) = saved
    return (g - sm * np.sum(g, axis=-1, keepdims=True),)


def _fw_layer_norm(params, x):
    eps = params["eps"]
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat, (xhat, inv)


def _vjp_layer_norm(g, saved, params, shapes):
    xhat, inv = saved
    n = xhat.shape[-1]
    gm = np.mean(g, axis=-1, keepdims=True)
    gx = np.mean(g * xhat, axis=-1, keepdims=True)
    return ((g - gm - xhat * gx) * inv,)


for _name, _f, _v in [
    ("add", _fw_add, _vjp_add),
    ("subtract", _fw_subtract, _vjp_subtract),
    ("multiply", _fw_multiply, _vjp_multiply),
    ("scalar_multiply", _fw_scalar_multiply, _vjp_scalar_multiply),
    ("divide", _fw_divide, _vjp_divide),
    ("matmul", _fw_matmul, _vjp_matmul),
    ("tanh", _fw_tanh, _vjp_tanh),
    ("sigmoid", _fw_sigmoid, _vjp_sigmoid),
    ("relu", _fw_relu, _vjp_relu),
    ("exp", _fw_exp, _vjp_exp),
    ("log", _fw_log, _vjp_log),
    ("sqrt", _fw_sqrt, _vjp_sqrt),
    ("maximum", _fw_maximum, _vjp_maximum),
    ("concat", _fw_concat, _vjp_concat),
    ("slice", _fw_slice, _vjp_slice),
    ("gather", _fw_gather, _vjp_gather),
    ("reduce_sum", _fw_reduce_sum, _vjp_reduce_sum),
    ("reduce_mean", _fw_reduce_mean, _vjp_reduce_mean),
    ("reduce_max", _fw_reduce_max, _vjp_reduce_max),
    ("transpose", _fw_transpose, _vjp_transpose),
    ("reshape", _fw_reshape, _vjp_reshape),
    ("softmax", _fw_softmax, _vjp_softmax),
    ("log_softmax", _fw_log_softmax, _vjp_log_softmax),
    ("layer_norm", _fw_layer_norm, _vjp_layer_norm),
]:
    _register(_name, _f, _v)


# ------------------------------------------------------------ friendly fronts

def add(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("add", _as_tensor(a), _as_tensor(b))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("subtract", _as_tensor(a), _as_tensor(b))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("multiply", _as_tensor(a), _as_tensor(b))


def scalar_multiply(a: Tensor, c: float) -> Tensor:
    return apply_primitive("scalar_multiply", a, c=float(c))


def divide(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("divide", _as_tensor(a), _as_tensor(b))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("matmul", a, b)


def tanh(x: Tensor) -> Tensor:
    return apply_primitive("tanh", x)


def sigmoid(x: Tensor) -> Tensor:
    return apply_primitive("sigmoid", x)


def relu(x: Tensor) -> Tensor:
    return apply_primitive("relu", x)


def exp(x: Tensor) -> Tensor:
    return apply_primitive("exp", x)


def log(x: Tensor) -> Tensor:
    return apply_primitive("log", x)


def sqrt(x: Tensor) -> Tensor:
    return apply_primitive("sqrt", x)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("maximum", a, b)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty list")
    return apply_primitive("concat", *tensors, axis=int(axis))


def take_slice(x: Tensor, key) -> Tensor:
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if not isinstance(k, (slice, int)) and k is not Ellipsis:
            raise ShapeError("slice supports basic indexing only")
    return apply_primitive("slice", x, key=key)


def gather(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    return apply_primitive("gather", table, indices=idx)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("reduce_sum", x, axis=axis, keepdims=keepdims)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("reduce_mean", x, axis=axis, keepdims=keepdims)


def reduce_max(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("reduce_max", x, axis=axis, keepdims=keepdims)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is not None:
        axes = tuple(int(a) for a in axes)
    return apply_primitive("transpose", x, axes=axes)


def reshape(x: Tensor, shape) -> Tensor:
    return apply_primitive("reshape", x, shape=tuple(int(s) for s in shape))


def softmax_op(x: Tensor) -> Tensor:
    return apply_primitive("softmax", x)


def log_softmax(x: Tensor) -> Tensor:
    return apply_primitive("log_softmax", x)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    return apply_primitive("layer_norm", x, eps=float(eps))


def softmax(v: np.ndarray) -> np.ndarray:
    """Plain-array softmax over the last axis (shift invariant)."""
    return _softmax_last(np.asarray(v, dtype=np.float64))
