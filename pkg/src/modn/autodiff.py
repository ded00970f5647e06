"""Reverse-mode automatic differentiation over dense float64 vectors/matrices.

Every differentiable operation appends an entry (output, inputs, local
backward rule) to an explicit :class:`Tape` in execution order.  Because an
operation can only consume tensors that already exist, the tape is
topologically sorted by construction; the backward pass replays it once in
reverse, propagating adjoints through per-call scratch storage and finally
accumulating d(loss)/d(param) into the persistent gradient buffers of a
:class:`ParamStore`.

All ops accept ``tape=None``, in which case they compute the forward value
without recording -- this is the shared inference path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch between tensors, parameters, or an MlpSpec."""


class ContractError(ValueError):
    """An operation was called outside its contract (non-scalar loss, off-tape node, ...)."""


class ConfigError(ValueError):
    """Invalid optimizer or spec configuration."""


# ---------------------------------------------------------------------------
# tensors and parameter storage
# ---------------------------------------------------------------------------


class Tensor:
    """Dense float64 array node of the computation graph.

    ``needs_grad`` marks nodes through which adjoints must flow; only
    parameter leaves (``is_param``) own a persistent ``grad`` accumulator.
    """

    __slots__ = ("data", "needs_grad", "is_param", "grad", "name")

    def __init__(self, data, needs_grad: bool = False, is_param: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.needs_grad = bool(needs_grad or is_param)
        self.is_param = is_param
        self.name = name
        self.grad = np.zeros_like(self.data) if is_param else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f" param={self.name!r}" if self.is_param else ""
        return f"Tensor(shape={self.data.shape}{tag})"


class ParamStore:
    """Named parameter tensors with equally-shaped gradient accumulators."""

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = int(rng_seed)
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._entries:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), is_param=True, name=name)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad[...] = 0.0

    def clone(self) -> "ParamStore":
        out = ParamStore(self.rng_seed)
        for name, t in self._entries.items():
            fresh = out.add(name, t.data.copy())
            fresh.grad[...] = t.grad
        return out

    def values_equal(self, other: "ParamStore", names: Iterable[str] | None = None) -> bool:
        """Byte-level equality of parameter values (all names by default)."""
        names = list(names) if names is not None else self.names()
        for name in names:
            a, b = self._entries[name].data, other._entries[name].data
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True


@dataclass
class MlpSpec:
    """Layer layout of a small MLP: sizes from input to output plus activations."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ConfigError("MlpSpec needs at least an input and an output size")
        if any(s < 1 for s in self.layer_sizes):
            raise ConfigError(f"all layer sizes must be >= 1, got {self.layer_sizes}")
        if self.hidden_activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("identity", "sigmoid"):
            raise ConfigError(f"unknown output activation {self.output_activation!r}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


@dataclass
class Tape:
    """Recorded operations in execution order (inputs always precede outputs)."""

    ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = field(default_factory=list)
    _node_ids: set[int] = field(default_factory=set)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_rule: Callable) -> None:
        self.ops.append((out, inputs, backward_rule))
        self._node_ids.add(id(out))

    def holds(self, node: Tensor) -> bool:
        return id(node) in self._node_ids

    def __len__(self) -> int:
        return len(self.ops)


def backward(tape: Tape, loss_node: Tensor, params: ParamStore) -> None:
    """Accumulate d(loss)/d(param) into the store's gradient buffers.

    Adjoints of intermediate nodes live in per-call scratch storage, so
    repeated calls add exact multiples into the persistent accumulators.
    """
    if loss_node.data.ndim != 0:
        raise ContractError(f"loss must be a scalar, got shape {loss_node.data.shape}")
    if not tape.holds(loss_node):
        raise ContractError("loss node is not on the tape")

    grads: dict[int, np.ndarray] = {id(loss_node): np.ones((), dtype=np.float64)}
    for out, inputs, rule in reversed(tape.ops):
        g_out = grads.pop(id(out), None)
        if g_out is None:
            continue
        for inp, g_in in zip(inputs, rule(g_out)):
            if g_in is None or not inp.needs_grad:
                continue
            acc = grads.get(id(inp))
            if acc is None:
                # rules may return aliases/views of g_out; own the buffer
                # before accumulating into it
                grads[id(inp)] = np.array(g_in, dtype=np.float64)
            else:
                acc += g_in

    for _, tensor in params.items():
        g = grads.get(id(tensor))
        if g is not None:
            tensor.grad += g


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def _out(tape: Tape | None, data: np.ndarray, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    needs = any(t.needs_grad for t in inputs)
    out = Tensor(data, needs_grad=needs)
    if tape is not None:
        tape.record(out, inputs, rule)
    return out


def constant(tape: Tape | None, value) -> Tensor:
    """A leaf holding fixed data, recorded so it counts as on-tape."""
    out = Tensor(np.asarray(value, dtype=np.float64))
    if tape is not None:
        tape.record(out, (), lambda g: ())
    return out


def affine(tape: Tape | None, x: Tensor, w: Tensor, b: Tensor, label: str = "") -> Tensor:
    """``w @ x + b`` for a vector x, or row-wise ``x @ w.T + b`` for a matrix x."""
    m, n = w.data.shape
    if x.data.shape[-1] != n or b.data.shape != (m,):
        where = f" in {label}" if label else ""
        raise ShapeError(
            f"affine mismatch{where}: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    if x.data.ndim == 1:
        val = w.data @ x.data + b.data

        def rule(g):
            return (w.data.T @ g, np.outer(g, x.data), g)

    elif x.data.ndim == 2:
        val = x.data @ w.data.T + b.data

        def rule(g):
            return (g @ w.data, g.T @ x.data, g.sum(axis=0))

    else:
        raise ShapeError(f"affine input must be 1-d or 2-d, got {x.data.shape}")
    return _out(tape, val, (x, w, b), rule)


def tanh(tape: Tape | None, x: Tensor) -> Tensor:
    val = np.tanh(x.data)
    return _out(tape, val, (x,), lambda g: (g * (1.0 - val * val),))


def relu(tape: Tape | None, x: Tensor) -> Tensor:
    val = np.maximum(x.data, 0.0)
    mask = (x.data > 0.0).astype(np.float64)
    return _out(tape, val, (x,), lambda g: (g * mask,))


def sigmoid(tape: Tape | None, x: Tensor) -> Tensor:
    # clamped to the open interval so saturated logits still satisfy p in (0,1)
    val = np.clip(1.0 / (1.0 + np.exp(-x.data)), _SIG_LO, _SIG_HI)
    return _out(tape, val, (x,), lambda g: (g * val * (1.0 - val),))


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add mismatch: {a.data.shape} vs {b.data.shape}")
    return _out(tape, a.data + b.data, (a, b), lambda g: (g, g))


def add_n(tape: Tape | None, xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ContractError("add_n needs at least one input")
    val = xs[0].data.copy()
    for x in xs[1:]:
        if x.data.shape != xs[0].data.shape:
            raise ShapeError("add_n inputs must share a shape")
        val += x.data
    return _out(tape, val, tuple(xs), lambda g: tuple(g for _ in xs))


def mul_const(tape: Tape | None, x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _out(tape, x.data * c, (x,), lambda g: (g * c,))


def concat_last(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis (both 1-d, or both 2-d with equal row count)."""
    if a.data.ndim != b.data.ndim or (a.data.ndim == 2 and a.data.shape[0] != b.data.shape[0]):
        raise ShapeError(f"concat mismatch: {a.data.shape} vs {b.data.shape}")
    na = a.data.shape[-1]
    val = np.concatenate([a.data, b.data], axis=-1)
    return _out(tape, val, (a, b), lambda g: (g[..., :na], g[..., na:]))


def gather_rows(tape: Tape | None, x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)

    def rule(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _out(tape, x.data[idx], (x,), rule)


def rows_add(tape: Tape | None, x: Tensor, idx: np.ndarray, delta: Tensor) -> Tensor:
    """Copy of x with ``delta`` added to the rows in ``idx`` (indices unique)."""
    idx = np.asarray(idx, dtype=np.intp)
    val = x.data.copy()
    val[idx] += delta.data
    return _out(tape, val, (x, delta), lambda g: (g, g[idx]))


def tile_rows(tape: Tape | None, v: Tensor, n: int) -> Tensor:
    if v.data.ndim != 1:
        raise ShapeError(f"tile_rows needs a vector, got {v.data.shape}")
    val = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()
    return _out(tape, val, (v,), lambda g: (g.sum(axis=0),))


def sse(tape: Tape | None, pred: Tensor, target: np.ndarray) -> Tensor:
    """Sum of squared errors against a fixed target, as a scalar node."""
    target = np.asarray(target, dtype=np.float64)
    diff = pred.data - target
    return _out(tape, np.float64((diff * diff).sum()), (pred,), lambda g: (g * 2.0 * diff,))


def bce_with_logits(tape: Tape | None, z: Tensor, y: np.ndarray) -> Tensor:
    """Summed binary cross-entropy on pre-sigmoid logits (numerically stable)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != z.data.shape:
        raise ShapeError(f"bce target shape {y.shape} != logits {z.data.shape}")
    zd = z.data
    val = np.float64((np.maximum(zd, 0.0) - zd * y + np.log1p(np.exp(-np.abs(zd)))).sum())
    p = 1.0 / (1.0 + np.exp(-zd))
    return _out(tape, val, (z,), lambda g: (g * (p - y),))


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


def mlp_param_names(spec: MlpSpec, prefix: str) -> list[str]:
    names = []
    for layer in range(len(spec.layer_sizes) - 1):
        names += [f"{prefix}w{layer}", f"{prefix}b{layer}"]
    return names


def init_mlp_params(store: ParamStore, prefix: str, spec: MlpSpec, rng: np.random.Generator) -> None:
    """Glorot-uniform weights, zero biases."""
    for layer, (fan_in, fan_out) in enumerate(zip(spec.layer_sizes, spec.layer_sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        store.add(f"{prefix}w{layer}", rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        store.add(f"{prefix}b{layer}", np.zeros(fan_out))


def mlp_forward(
    spec: MlpSpec,
    params: ParamStore,
    x: Tensor,
    tape: Tape | None,
    prefix: str = "",
    logits: bool = False,
) -> Tensor:
    """Forward pass; with ``logits=True`` the output activation is skipped."""
    if x.data.shape[-1] != spec.in_dim:
        raise ShapeError(f"input width {x.data.shape[-1]} != layer 0 size {spec.in_dim}")
    hidden_act = tanh if spec.hidden_activation == "tanh" else relu
    h = x
    last = len(spec.layer_sizes) - 2
    for layer in range(last + 1):
        wname, bname = f"{prefix}w{layer}", f"{prefix}b{layer}"
        if wname not in params or bname not in params:
            raise ShapeError(f"missing parameters for layer {layer} (prefix {prefix!r})")
        h = affine(tape, h, params[wname], params[bname], label=f"layer {layer} ({prefix or 'mlp'})")
        if layer < last:
            h = hidden_act(tape, h)
        elif spec.output_activation == "sigmoid" and not logits:
            h = sigmoid(tape, h)
    return h


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


@dataclass
class OptimizerConfig:
    method: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.method not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.method!r}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")

    def build(self) -> "Optimizer":
        if self.method == "sgd":
            return Sgd(self.lr)
        return Adam(self.lr, self.beta1, self.beta2, self.eps)


class Optimizer:
    def step(self, params: ParamStore, frozen: Iterable[str] = ()) -> None:
        raise NotImplementedError


class Sgd(Optimizer):
    def __init__(self, lr: float):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)

    def step(self, params: ParamStore, frozen: Iterable[str] = ()) -> None:
        frozen = set(frozen)
        for name, t in params.items():
            if name not in frozen:
                t.data -= self.lr * t.grad
        params.zero_grad()


class Adam(Optimizer):
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr, self.beta1, self.beta2, self.eps = float(lr), float(beta1), float(beta2), float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ParamStore, frozen: Iterable[str] = ()) -> None:
        frozen = set(frozen)
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, tensor in params.items():
            m = self._m.setdefault(name, np.zeros_like(tensor.data))
            v = self._v.setdefault(name, np.zeros_like(tensor.data))
            g = tensor.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if name not in frozen:
                tensor.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
                if not np.isfinite(tensor.data).all():
                    raise ContractError(f"non-finite values in parameter {name!r} after update")
        params.zero_grad()


def optimizer_step(params: ParamStore, config: OptimizerConfig, optimizer: Optimizer | None = None) -> Optimizer:
    """One update with the configured rule; returns the (stateful) optimizer."""
    opt = optimizer if optimizer is not None else config.build()
    opt.step(params)
    return opt


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

_GRAD_CHECK_LOSSES = ("sse", "bce")


def _loss_value(spec: MlpSpec, params: ParamStore, x: np.ndarray, y: np.ndarray, loss_fn: str) -> float:
    xt = Tensor(x)
    if loss_fn == "sse":
        pred = mlp_forward(spec, params, xt, None)
        return float(((pred.data - y) ** 2).sum())
    z = mlp_forward(spec, params, xt, None, logits=True).data
    return float((np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))).sum())


def grad_check(spec: MlpSpec, loss_fn: str, seed: int, fd_step: float = 1e-5) -> float:
    """Worst relative error between analytic and central finite-difference gradients.

    Builds a seeded random net/input/target, runs one tape backward, then
    perturbs every parameter entry by +-fd_step.
    """
    if loss_fn not in _GRAD_CHECK_LOSSES:
        raise ConfigError(f"unknown loss {loss_fn!r}, expected one of {_GRAD_CHECK_LOSSES}")
    rng = np.random.default_rng(seed)
    store = ParamStore(rng_seed=seed)
    init_mlp_params(store, "", spec, rng)
    x = rng.normal(size=spec.in_dim)
    if loss_fn == "bce":
        y = rng.integers(0, 2, size=spec.out_dim).astype(np.float64)
    else:
        y = rng.normal(size=spec.out_dim)

    tape = Tape()
    if loss_fn == "sse":
        pred = mlp_forward(spec, store, Tensor(x), tape)
        loss = sse(tape, pred, y)
    else:
        z = mlp_forward(spec, store, Tensor(x), tape, logits=True)
        loss = bce_with_logits(tape, z, y)
    backward(tape, loss, store)

    worst = 0.0
    for _, tensor in store.items():
        flat_value = tensor.data.reshape(-1)
        flat_grad = tensor.grad.reshape(-1)
        for i in range(flat_value.size):
            orig = flat_value[i]
            flat_value[i] = orig + fd_step
            up = _loss_value(spec, store, x, y, loss_fn)
            flat_value[i] = orig - fd_step
            down = _loss_value(spec, store, x, y, loss_fn)
            flat_value[i] = orig
            fd = (up - down) / (2.0 * fd_step)
            a = flat_grad[i]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, rel)
    return worst
