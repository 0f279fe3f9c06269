"""Dense-tensor reverse-mode autodiff engine.

Small define-by-run engine over float64 numpy arrays: operations executed
while a :class:`GradTape` is active are recorded in execution order, and
``tape.backward(loss)`` replays them in reverse, accumulating vector-Jacobian
products. Just enough surface for a two-layer message-passing encoder,
vector quantization, and the associated losses.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import DomainError, ShapeError

_EPS_NORM = 1e-12

_active = threading.local()


def _current_tape():
    return getattr(_active, "tape", None)


class Tensor:
    """Dense float64 array, optionally tracked by the active gradient tape.

    Tensors are immutable once recorded on a tape; parameter updates happen
    between tapes by writing ``.data`` in place. ``.grad`` is overwritten by
    each ``GradTape.backward`` call.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.tape_id = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def copy_values(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # operator sugar; scalars and equal shapes only (see _binary_op)
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Tensor:
    """Tensor that never receives gradient."""
    return Tensor(value, requires_grad=False)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else constant(value)


class GradTape:
    """Ordered record of operations for one reverse sweep.

    Operations are appended in execution order, which is automatically a
    topological order of the data flow. ``backward`` walks the record once in
    reverse; calling it a second time on the same tape raises, since the
    record is not rebuilt.
    """

    def __init__(self):
        self._records = []  # (out, inputs, backward_fn)
        self._spent = False

    def __enter__(self):
        if getattr(_active, "tape", None) is not None:
            raise RuntimeError("a GradTape is already active on this thread")
        _active.tape = self
        return self

    def __exit__(self, *exc):
        _active.tape = None
        return False

    def _record(self, out: Tensor, inputs, backward_fn):
        out.requires_grad = True
        out.tape_id = len(self._records)
        self._records.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every recorded leaf."""
        if self._spent:
            raise RuntimeError("backward already ran on this tape; record a new tape")
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        self._spent = True
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}
        touched: dict[int, Tensor] = {}
        for out, inputs, backward_fn in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, piece in zip(inputs, backward_fn(g)):
                if piece is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + piece
                else:
                    grads[key] = piece
                touched[key] = inp
        for key, tensor in touched.items():
            if key in grads:
                tensor.grad = np.asarray(grads[key], dtype=np.float64)


def _maybe_record(out: Tensor, inputs, backward_fn):
    tape = _current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape._record(out, inputs, backward_fn)
    return out


class no_grad:
    """Context manager that suspends recording on the active tape."""

    def __enter__(self):
        self._saved = _current_tape()
        _active.tape = None
        return self

    def __exit__(self, *exc):
        _active.tape = self._saved
        return False


# ----------------------------------------------------------------------
# binary elementwise ops


def _binary_op(a, b, fwd, bwd_a, bwd_b, name):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} are not "
                         "equal and neither is scalar")
    out = Tensor(fwd(a.data, b.data))

    def backward(g):
        ga = bwd_a(g, a.data, b.data)
        gb = bwd_b(g, a.data, b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _maybe_record(out, (a, b), backward)


def _unbroadcast(g, shape):
    if g is None:
        return None
    if shape == ():
        return np.sum(g)
    return g


def add(a, b):
    return _binary_op(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b):
    return _binary_op(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b):
    return _binary_op(a, b, np.multiply,
                      lambda g, x, y: g * y, lambda g, x, y: g * x, "mul")


def scale(x, c: float):
    x = as_tensor(x)
    c = float(c)
    out = Tensor(x.data * c)
    return _maybe_record(out, (x,), lambda g: (g * c,))


# ----------------------------------------------------------------------
# unary elementwise ops


def relu(x):
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    # subgradient 0 at 0
    return _maybe_record(out, (x,), lambda g: (g * (x.data > 0.0),))


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    out = Tensor(s)
    return _maybe_record(out, (x,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(v):
    out = np.empty_like(v, dtype=np.float64)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def exp(x):
    x = as_tensor(x)
    e = np.exp(x.data)
    out = Tensor(e)
    return _maybe_record(out, (x,), lambda g: (g * e,))


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log of non-positive value")
    out = Tensor(np.log(x.data))
    return _maybe_record(out, (x,), lambda g: (g / x.data,))


def power(x, gamma: float):
    """Elementwise x**gamma; non-integer exponents require x >= 0."""
    x = as_tensor(x)
    gamma = float(gamma)
    if gamma != int(gamma) and np.any(x.data < 0.0):
        raise DomainError(f"power({gamma}) of negative value")
    out = Tensor(np.power(x.data, gamma))

    def backward(g):
        return (g * gamma * np.power(x.data, gamma - 1.0),)

    return _maybe_record(out, (x,), backward)


# ----------------------------------------------------------------------
# matrix ops


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _maybe_record(out, (a, b), backward)


def transpose(x):
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    out = Tensor(x.data.T)
    return _maybe_record(out, (x,), lambda g: (g.T,))


def add_rowvec(x, v):
    """Add a length-n vector to every row of an m-by-n matrix."""
    x, v = as_tensor(x), as_tensor(v)
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec: shapes {x.shape} and {v.shape}")
    out = Tensor(x.data + v.data)
    return _maybe_record(out, (x, v), lambda g: (g, g.sum(axis=0)))


def mul_rowvec(x, v):
    """Multiply every row of an m-by-n matrix by a length-n vector."""
    x, v = as_tensor(x), as_tensor(v)
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"mul_rowvec: shapes {x.shape} and {v.shape}")
    out = Tensor(x.data * v.data)
    return _maybe_record(out, (x, v),
                         lambda g: (g * v.data, np.sum(g * x.data, axis=0)))


def scale_rows(x, coeff: np.ndarray):
    """Multiply row i of x by the fixed (non-differentiable) scalar coeff[i]."""
    x = as_tensor(x)
    coeff = np.asarray(coeff, dtype=np.float64)
    if x.data.ndim != 2 or coeff.shape != (x.shape[0],):
        raise ShapeError(f"scale_rows: shapes {x.shape} and {coeff.shape}")
    col = coeff[:, None]
    out = Tensor(x.data * col)
    return _maybe_record(out, (x,), lambda g: (g * col,))


def gather_rows(x, index):
    """Select rows of x by integer index; backward scatter-adds."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    if x.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a matrix, got shape {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} rows")
    out = Tensor(x.data[index])

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _maybe_record(out, (x,), backward)


def _stable_colsum(values: np.ndarray) -> np.ndarray:
    """Column sums that do not depend on row order (values sorted per column)."""
    return np.sum(np.sort(values, axis=0), axis=0)


def segment_sum(values, segments, num_segments: int):
    """Sum rows of ``values`` into ``num_segments`` buckets given by ``segments``.

    The per-bucket summation order is fixed by sorting values within each
    bucket, so the result is invariant to any reordering of the input rows;
    message-passing aggregation stays exactly permutation-equivariant.
    """
    values = as_tensor(values)
    segments = np.asarray(segments, dtype=np.intp)
    if values.data.ndim != 2 or segments.shape != (values.shape[0],):
        raise ShapeError(f"segment_sum: shapes {values.shape} and {segments.shape}")
    if segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        raise ShapeError(f"segment_sum: segment id out of range 0..{num_segments - 1}")
    result = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    if segments.size:
        for j in range(values.shape[1]):
            order = np.lexsort((values.data[:, j], segments))
            seg_sorted = segments[order]
            col_sorted = values.data[order, j]
            starts = np.flatnonzero(np.r_[True, seg_sorted[1:] != seg_sorted[:-1]])
            sums = np.add.reduceat(col_sorted, starts)
            result[seg_sorted[starts], j] = sums
    out = Tensor(result)
    return _maybe_record(out, (values,), lambda g: (g[segments],))


def concat_cols(a, b):
    """Concatenate two matrices with equal row counts along columns."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: shapes {a.shape} and {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    split = a.shape[1]
    return _maybe_record(out, (a, b), lambda g: (g[:, :split], g[:, split:]))


def concat_rows(parts):
    """Stack matrices with equal column counts along rows."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows needs at least one part")
    width = parts[0].shape[1] if parts[0].data.ndim == 2 else None
    if width is None or any(p.data.ndim != 2 or p.shape[1] != width
                            for p in parts):
        raise ShapeError("concat_rows: all parts must be matrices of one width")
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _maybe_record(out, tuple(parts), backward)


# ----------------------------------------------------------------------
# reductions


def _check_axis(x, axis):
    if axis is not None and (x.data.ndim == 0 or axis not in range(x.data.ndim)):
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")


def tsum(x, axis=None):
    x = as_tensor(x)
    _check_axis(x, axis)
    out = Tensor(np.sum(x.data, axis=axis))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(np.float64),)
        return (np.expand_dims(g, axis) * np.ones_like(x.data),)

    return _maybe_record(out, (x,), backward)


def tmean(x, axis=None):
    x = as_tensor(x)
    _check_axis(x, axis)
    n = x.size if axis is None else x.shape[axis]
    return scale(tsum(x, axis=axis), 1.0 / n)


def rowwise_mean(x):
    """Mean over columns, one value per row."""
    return tmean(x, axis=1)


def l2_norm(x):
    """Euclidean norm of all entries, as a scalar tensor."""
    x = as_tensor(x)
    norm = float(np.sqrt(np.sum(x.data ** 2)))
    out = Tensor(norm)

    def backward(g):
        denom = max(norm, _EPS_NORM)
        return (g * x.data / denom,)

    return _maybe_record(out, (x,), backward)


def cosine_similarity(a, b):
    """Cosine of the angle between two non-zero vectors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na < _EPS_NORM or nb < _EPS_NORM:
        raise DomainError("cosine_similarity of a zero-norm vector")
    cos = float(a.data @ b.data) / (na * nb)
    out = Tensor(cos)

    def backward(g):
        ga = g * (b.data / (na * nb) - cos * a.data / (na * na))
        gb = g * (a.data / (na * nb) - cos * b.data / (nb * nb))
        return ga, gb

    return _maybe_record(out, (a, b), backward)


def row_normalize(x):
    """Scale every row of x to unit Euclidean norm."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"row_normalize expects a matrix, got shape {x.shape}")
    norms = np.linalg.norm(x.data, axis=1)
    if np.any(norms < _EPS_NORM):
        raise DomainError("row_normalize: zero-norm row")
    y = x.data / norms[:, None]
    out = Tensor(y)

    def backward(g):
        dot = np.sum(g * y, axis=1, keepdims=True)
        return ((g - dot * y) / norms[:, None],)

    return _maybe_record(out, (x,), backward)


# ----------------------------------------------------------------------
# gradient routing


def stop_gradient(x):
    """Forward identity; contributes exactly zero gradient to x."""
    x = as_tensor(x)
    return Tensor(x.data.copy())


def straight_through(quantized, original):
    """Forward the quantized values, route the whole gradient to the original.

    Algebraically ``original + sg(quantized - original)``.
    """
    quantized, original = as_tensor(quantized), as_tensor(original)
    if quantized.shape != original.shape:
        raise ShapeError(
            f"straight_through: shapes {quantized.shape} and {original.shape}")
    out = Tensor(quantized.data.copy())
    return _maybe_record(out, (quantized, original), lambda g: (None, g))


# ----------------------------------------------------------------------
# losses


def mse(pred, target):
    """Mean over all entries of the squared difference."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: shapes {pred.shape} and {target.shape}")
    diff = pred.data - target.data
    out = Tensor(np.mean(diff ** 2))
    c = 2.0 / max(pred.size, 1)
    return _maybe_record(out, (pred, target), lambda g: (g * c * diff, -g * c * diff))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction (plain numpy helper)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer class labels under row-wise softmax."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: shapes {logits.shape} and {labels.shape}")
    m, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DomainError(f"class index out of range for {c} classes")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(shifted), axis=1))
    out = Tensor(np.mean(logsumexp - shifted[np.arange(m), labels]))

    def backward(g):
        p = softmax(logits.data)
        p[np.arange(m), labels] -= 1.0
        return (g * p / m,)

    return _maybe_record(out, (logits,), backward)


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy on raw logits against {0,1} targets."""
    logits, targets = as_tensor(logits), as_tensor(targets)
    if logits.shape != targets.shape:
        raise ShapeError(f"bce_with_logits: shapes {logits.shape} and {targets.shape}")
    x, t = logits.data, targets.data
    # softplus(x) - t*x, computed stably
    loss = np.maximum(x, 0.0) - t * x + np.log1p(np.exp(-np.abs(x)))
    out = Tensor(np.mean(loss))
    n = max(logits.size, 1)
    return _maybe_record(out, (logits, targets),
                         lambda g: (g * (_sigmoid(x) - t) / n, None))


def sum_squares_rows(x):
    """Per-row squared Euclidean norm as a length-m tensor."""
    return tsum(power(x, 2.0), axis=1)


def batch_norm_train(x, gamma, beta, eps: float = 1e-5):
    """Batch normalization with statistics taken from the batch itself.

    Returns ``(out, batch_mean, batch_var)``; the stats are plain arrays for
    the caller's running-average bookkeeping. Column sums are order-stable,
    so the output is exactly invariant to row permutations of x.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 2:
        raise ShapeError(f"batch_norm expects a matrix, got shape {x.shape}")
    n, d = x.shape
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("batch_norm: gamma/beta must match the column count")
    mean = _stable_colsum(x.data) / n
    var = _stable_colsum((x.data - mean) ** 2) / n
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean) * inv_std
    out = Tensor(x_hat * gamma.data + beta.data)

    def backward(g):
        dgamma = np.sum(g * x_hat, axis=0)
        dbeta = np.sum(g, axis=0)
        gm = np.mean(g, axis=0)
        gxm = np.mean(g * x_hat, axis=0)
        dx = gamma.data * inv_std * (g - gm - x_hat * gxm)
        return dx, dgamma, dbeta

    return _maybe_record(out, (x, gamma, beta), backward), mean, var
