"""Small reverse-mode differentiation engine over float64 numpy arrays.

Operations executed while a :class:`Tape` is active, and touching at least
one tensor with ``requires_grad``, are appended to that tape together with
their backward rule.  The tape order is a valid topological order, so
:func:`backward` only has to replay it in reverse.

Broadcasting is deliberately limited to adding a row vector to a matrix and
to Python scalar constants; any other shape change has to be spelled out
with :func:`concat`, :func:`slice_` or :func:`transpose`.
"""
import numpy as np

from .errors import NonScalarLoss, ShapeMismatch

__all__ = [
    "Tensor", "Tape", "backward", "sgd_step", "Adam", "record", "const",
    "matmul", "add", "sub", "mul", "neg", "sigmoid", "tanh", "exp", "log",
    "softplus", "square", "reciprocal", "sum_", "mean", "concat", "slice_",
    "logsumexp", "transpose",
]

_TAPES = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if 0 in arr.shape:
            raise ShapeMismatch(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def const(x):
    """Wrap an array as a tensor that never receives gradients."""
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered log of primitive operations; use as a context manager."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def record(op, out, inputs, grad_fn):
    """Create the output tensor of primitive ``op`` and log it on the active tape.

    ``grad_fn(g)`` maps the output gradient to one gradient (or ``None``) per
    input, in order.
    """
    result = Tensor.__new__(Tensor)
    result.data = np.asarray(out, dtype=np.float64)
    result.name = None
    tracked = bool(_TAPES) and any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    result.requires_grad = tracked
    if tracked:
        _TAPES[-1].nodes.append((op, tuple(inputs), result, grad_fn))
    return result


def backward(tape, loss, params):
    """Gradients of scalar ``loss`` with respect to each tensor in ``params``.

    Returns a list aligned with ``params``; parameters the loss does not
    depend on get zero arrays.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for op, inputs, out, grad_fn in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, grad_fn(g)):
            if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return [np.array(grads[id(p)]) if id(p) in grads else np.zeros_like(p.data) for p in params]


def sgd_step(params, grads, lr):
    """In-place ``p <- p - lr * g``; returns ``params``."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for p, g in zip(params, grads):
        if p.data.shape != np.shape(g):
            raise ShapeMismatch(f"gradient shape {np.shape(g)} != parameter shape {p.data.shape}")
        p.data -= lr * g
    return params


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.data.shape != np.shape(g):
                raise ShapeMismatch(f"gradient shape {np.shape(g)} != parameter shape {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _is_scalar(x):
    return not isinstance(x, Tensor) and np.ndim(x) == 0


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not conform")


def _bias_shape(a, b):
    """True when ``b`` is a row vector added to every row of matrix ``a``."""
    return (a.ndim == 2 and (b.shape == (a.shape[1],) or b.shape == (1, a.shape[1]))
            and a.shape != b.shape)


def matmul(a, b):
    A, Bm = _data(a), _data(b)
    if A.ndim not in (1, 2) or Bm.ndim not in (1, 2) or A.shape[-1] != Bm.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {A.shape} and {Bm.shape} do not conform")
    out = A @ Bm

    def grad_fn(g):
        A2 = A if A.ndim == 2 else A[None, :]
        B2 = Bm if Bm.ndim == 2 else Bm[:, None]
        g2 = g.reshape(A2.shape[0], B2.shape[1])
        ga = (g2 @ B2.T).reshape(A.shape)
        gb = (A2.T @ g2).reshape(Bm.shape)
        return ga, gb

    return record("matmul", out, (a, b), grad_fn)


def add(a, b):
    if _is_scalar(b):
        return record("add", _data(a) + float(b), (a,), lambda g: (g,))
    if _is_scalar(a):
        return add(b, a)
    A, Bm = _data(a), _data(b)
    if A.shape == Bm.shape:
        return record("add", A + Bm, (a, b), lambda g: (g, g))
    if _bias_shape(A, Bm):
        return record("add", A + Bm.reshape(1, -1), (a, b),
                      lambda g: (g, g.sum(axis=0).reshape(Bm.shape)))
    if _bias_shape(Bm, A):
        return add(b, a)
    raise ShapeMismatch(f"add: shapes {A.shape} and {Bm.shape} do not conform")


def neg(a):
    return record("neg", -_data(a), (a,), lambda g: (-g,))


def sub(a, b):
    if _is_scalar(b):
        return add(a, -float(b))
    return add(a, neg(b))


def mul(a, b):
    if _is_scalar(b):
        s = float(b)
        return record("mul", _data(a) * s, (a,), lambda g: (g * s,))
    if _is_scalar(a):
        return mul(b, a)
    A, Bm = _data(a), _data(b)
    _check_same(A, Bm, "mul")
    return record("mul", A * Bm, (a, b), lambda g: (g * Bm, g * A))


def sigmoid(a):
    x = _data(a)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(_data(a))
    return record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a):
    out = np.exp(_data(a))
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a):
    x = _data(a)
    return record("log", np.log(x), (a,), lambda g: (g / x,))


def softplus(a):
    x = _data(a)
    out = np.logaddexp(0.0, x)

    def grad_fn(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return record("softplus", out, (a,), grad_fn)


def square(a):
    x = _data(a)
    return record("square", x * x, (a,), lambda g: (2.0 * g * x,))


def reciprocal(a):
    x = _data(a)
    out = 1.0 / x
    return record("reciprocal", out, (a,), lambda g: (-g * out * out,))


def _expand(g, shape, axis):
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), shape).copy()


def sum_(a, axis=None):
    x = _data(a)
    out = np.asarray(x.sum(axis=axis))
    return record("sum", out, (a,), lambda g: (_expand(g, x.shape, axis),))


def mean(a, axis=None):
    x = _data(a)
    n = x.size if axis is None else x.shape[axis]
    out = np.asarray(x.mean(axis=axis))
    return record("mean", out, (a,), lambda g: (_expand(g, x.shape, axis) / n,))


def logsumexp(a, axis=None):
    x = _data(a)
    m = np.max(x, axis=axis, keepdims=True)
    s = np.sum(np.exp(x - m), axis=axis, keepdims=True)
    out_k = m + np.log(s)
    out = np.asarray(out_k.sum(axis=axis)) if axis is not None else np.asarray(out_k.reshape(()))
    soft = np.exp(x - out_k)

    def grad_fn(g):
        return (_expand(g, x.shape, axis) * soft,)

    return record("logsumexp", out, (a,), grad_fn)


def concat(xs, axis=0):
    arrs = [_data(x) for x in xs]
    try:
        out = np.concatenate(arrs, axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {exc}") from None
    bounds = np.cumsum([0] + [a.shape[axis] for a in arrs])

    def grad_fn(g):
        idx = [slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            parts.append(g[tuple(idx)])
        return parts

    return record("concat", out, tuple(xs), grad_fn)


def slice_(a, key):
    x = _data(a)
    out = np.array(x[key])
    if out.size == 0:
        raise ShapeMismatch(f"slice {key!r} of shape {x.shape} is empty")

    def grad_fn(g):
        full = np.zeros_like(x)
        np.add.at(full, key, g)
        return (full,)

    return record("slice", out, (a,), grad_fn)


def transpose(a):
    x = _data(a)
    if x.ndim != 2:
        raise ShapeMismatch("transpose expects a matrix")
    return record("transpose", x.T.copy(), (a,), lambda g: (g.T,))
