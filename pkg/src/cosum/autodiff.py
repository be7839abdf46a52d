"""Dense float64 tensors with reverse-mode automatic differentiation.

The package trains and runs every model on this core rather than on an
external framework: an eager ``Tape`` records each kernel application with
its inputs, so gradients are exact reverse-mode sweeps and a recorded tape
can be replayed bit-identically. All math is float64; masking is structural
("excluded" entries of a masked softmax are exactly 0.0, never merely
small), which is what makes user-forced copy exclusions provable rather
than approximate.

Kernels are registered in a table (forward + vector-Jacobian product), so
``replay`` and ``backward`` are generic over whatever the models need.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ContractViolation(ValueError):
    """An operation was called outside its stated preconditions."""


class EmptySupportError(ValueError):
    """Masked softmax over a row whose entries are all excluded."""


# ---------------------------------------------------------------------------
# Tensor: the public immutable value type
# ---------------------------------------------------------------------------


class Tensor:
    """Immutable dense float64 array (row-major).

    Values crossing module boundaries (parameters, checkpoints, public
    results) are Tensors and are checked finite; tape-internal node values
    stay raw ndarrays for speed.
    """

    __slots__ = ("data",)

    def __init__(self, data, check_finite: bool = True):
        if isinstance(data, Tensor):
            data = data.data
        # Always copy so freezing never aliases a caller's buffer.
        arr = np.array(data, dtype=np.float64, order="C")
        if check_finite and not np.all(np.isfinite(arr)):
            raise ContractViolation("Tensor holds non-finite values")
        arr.flags.writeable = False
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


# ---------------------------------------------------------------------------
# Numeric helpers shared by kernels
# ---------------------------------------------------------------------------


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _masked_softmax(x: np.ndarray, excluded: np.ndarray, axis: int) -> np.ndarray:
    if excluded.shape != x.shape:
        raise ContractViolation(
            f"mask shape {excluded.shape} != scores shape {x.shape}"
        )
    support = ~excluded
    if not np.all(np.any(support, axis=axis)):
        raise EmptySupportError("masked softmax row with every entry excluded")
    # Max over the support only, so excluded junk scores cannot overflow.
    neg = np.where(support, x, -np.inf)
    shifted = neg - np.max(neg, axis=axis, keepdims=True)
    e = np.where(support, np.exp(np.where(support, shifted, 0.0)), 0.0)
    return e / np.sum(e, axis=axis, keepdims=True)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if shape == ():
        return np.asarray(grad.sum())
    return grad


# ---------------------------------------------------------------------------
# Kernel registry: op id -> (forward, vjp)
#
# forward(parent_values, aux) -> value or (value, ctx)
# vjp(grad, parent_values, value, ctx, aux) -> tuple of parent grads
#     (None for parents that do not receive gradient)
# ---------------------------------------------------------------------------

_FORWARD: dict[str, Callable] = {}
_VJP: dict[str, Callable] = {}


def _register(op_id: str, forward: Callable, vjp: Callable) -> None:
    _FORWARD[op_id] = forward
    _VJP[op_id] = vjp


def _same_or_scalar(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ContractViolation(f"{op}: shapes {a.shape} and {b.shape} do not conform")


def _fwd_add(p, aux):
    _same_or_scalar(p[0], p[1], "add")
    return p[0] + p[1]


def _vjp_add(g, p, v, ctx, aux):
    return _unbroadcast(g, p[0].shape), _unbroadcast(g, p[1].shape)


def _fwd_mul(p, aux):
    _same_or_scalar(p[0], p[1], "mul")
    return p[0] * p[1]


def _vjp_mul(g, p, v, ctx, aux):
    return _unbroadcast(g * p[1], p[0].shape), _unbroadcast(g * p[0], p[1].shape)


def _fwd_affine(p, aux):
    return aux["scale"] * p[0] + aux["shift"]


def _vjp_affine(g, p, v, ctx, aux):
    return (aux["scale"] * g,)


def _fwd_matmul(p, aux):
    a, b = p
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ContractViolation(f"matmul: {a.shape} @ {b.shape}")
    elif a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ContractViolation(f"matmul: {a.shape} @ {b.shape}")
    elif a.ndim == 1 and b.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise ContractViolation(f"matmul: {a.shape} @ {b.shape}")
    else:
        raise ContractViolation(f"matmul: unsupported ranks {a.ndim} and {b.ndim}")
    return a @ b


def _vjp_matmul(g, p, v, ctx, aux):
    a, b = p
    if a.ndim == 2 and b.ndim == 2:
        return g @ b.T, a.T @ g
    if a.ndim == 2 and b.ndim == 1:
        return g[:, np.newaxis] * b, a.T @ g
    return b @ g, a[:, np.newaxis] * g


def _fwd_tanh(p, aux):
    return np.tanh(p[0])


def _vjp_tanh(g, p, v, ctx, aux):
    return (g * (1.0 - v * v),)


def _fwd_sigmoid(p, aux):
    return _stable_sigmoid(p[0])


def _vjp_sigmoid(g, p, v, ctx, aux):
    return (g * v * (1.0 - v),)


def _fwd_log(p, aux):
    if np.any(p[0] <= 0.0):
        raise ContractViolation("log of non-positive value")
    return np.log(p[0])


def _vjp_log(g, p, v, ctx, aux):
    return (g / p[0],)


def _fwd_clamp_min(p, aux):
    return np.maximum(p[0], aux["floor"])


def _vjp_clamp_min(g, p, v, ctx, aux):
    return (g * (p[0] > aux["floor"]),)


def _fwd_softmax(p, aux):
    return _softmax(p[0], aux["axis"])


def _vjp_softmax(g, p, v, ctx, aux):
    axis = aux["axis"]
    dot = np.sum(g * v, axis=axis, keepdims=True)
    return (v * (g - dot),)


def _fwd_masked_softmax(p, aux):
    return _masked_softmax(p[0], aux["excluded"], aux["axis"])


def _vjp_masked_softmax(g, p, v, ctx, aux):
    # Excluded entries have v == 0 exactly, so they get zero gradient.
    axis = aux["axis"]
    dot = np.sum(g * v, axis=axis, keepdims=True)
    return (v * (g - dot),)


def _fwd_concat(p, aux):
    return np.concatenate(p, axis=aux["axis"])


def _vjp_concat(g, p, v, ctx, aux):
    sizes = [arr.shape[aux["axis"]] for arr in p]
    splits = np.cumsum(sizes)[:-1]
    return tuple(np.split(g, splits, axis=aux["axis"]))


def _fwd_lookup(p, aux):
    m = p[0]
    if m.ndim != 2:
        raise ContractViolation("lookup expects a 2-d table")
    idx = aux["indices"]
    if any(i < 0 or i >= m.shape[0] for i in idx):
        raise ContractViolation("lookup index out of range")
    return m[list(idx)].copy()


def _vjp_lookup(g, p, v, ctx, aux):
    gm = np.zeros_like(p[0])
    np.add.at(gm, list(aux["indices"]), g)
    return (gm,)


def _fwd_gather(p, aux):
    vec = p[0]
    if vec.ndim != 1:
        raise ContractViolation("gather expects a vector")
    idx = aux["indices"]
    if any(i < 0 or i >= vec.shape[0] for i in idx):
        raise ContractViolation("gather index out of range")
    return vec[list(idx)].copy()


def _vjp_gather(g, p, v, ctx, aux):
    gv = np.zeros_like(p[0])
    np.add.at(gv, list(aux["indices"]), g)
    return (gv,)


def _fwd_scatter_add(p, aux):
    vec = p[0]
    if vec.ndim != 1 or len(aux["indices"]) != vec.shape[0]:
        raise ContractViolation("scatter_add: one index per value required")
    out = np.zeros(aux["size"], dtype=np.float64)
    np.add.at(out, list(aux["indices"]), vec)
    return out


def _vjp_scatter_add(g, p, v, ctx, aux):
    return (g[list(aux["indices"])],)


def _fwd_sum(p, aux):
    return np.asarray(p[0].sum())


def _vjp_sum(g, p, v, ctx, aux):
    return (np.full_like(p[0], float(g)),)


def _fwd_mean(p, aux):
    return np.asarray(p[0].mean())


def _vjp_mean(g, p, v, ctx, aux):
    return (np.full_like(p[0], float(g) / p[0].size),)


def _fwd_transpose(p, aux):
    if p[0].ndim != 2:
        raise ContractViolation("transpose expects a matrix")
    return p[0].T.copy()


def _vjp_transpose(g, p, v, ctx, aux):
    return (g.T.copy(),)


def _fwd_reshape(p, aux):
    return p[0].reshape(aux["shape"]).copy()


def _vjp_reshape(g, p, v, ctx, aux):
    return (g.reshape(p[0].shape),)


def _fwd_slice(p, aux):
    return p[0][aux["start"] : aux["stop"]].copy()


def _vjp_slice(g, p, v, ctx, aux):
    gx = np.zeros_like(p[0])
    gx[aux["start"] : aux["stop"]] = g
    return (gx,)


def _fwd_add_rowvec(p, aux):
    m, vrow = p
    if m.ndim != 2 or vrow.ndim != 1 or m.shape[1] != vrow.shape[0]:
        raise ContractViolation(
            f"add_rowvec: shapes {m.shape} and {vrow.shape} do not conform"
        )
    return m + vrow


def _vjp_add_rowvec(g, p, v, ctx, aux):
    return g, g.sum(axis=0)


def _fwd_gru_step(p, aux):
    """Single GRU cell update, fused for tape compactness.

    Inputs: x [E], h [H], wx [3H,E], wh [3H,H], bx [3H], bh [3H].
    Gate row layout: reset, update, candidate.
    """
    x, h, wx, wh, bx, bh = p
    hid = h.shape[0]
    gx = wx @ x + bx
    gh = wh @ h + bh
    r = _stable_sigmoid(gx[:hid] + gh[:hid])
    z = _stable_sigmoid(gx[hid : 2 * hid] + gh[hid : 2 * hid])
    gh_c = gh[2 * hid :]
    c = np.tanh(gx[2 * hid :] + r * gh_c)
    out = (1.0 - z) * c + z * h
    return out, (r, z, c, gh_c)


def _vjp_gru_step(g, p, v, ctx, aux):
    x, h, wx, wh, bx, bh = p
    r, z, c, gh_c = ctx
    dz = g * (h - c)
    dc = g * (1.0 - z)
    dh = g * z
    dpre_c = dc * (1.0 - c * c)
    dr = dpre_c * gh_c
    dpre_r = dr * r * (1.0 - r)
    dpre_z = dz * z * (1.0 - z)
    dgx = np.concatenate([dpre_r, dpre_z, dpre_c])
    dgh = np.concatenate([dpre_r, dpre_z, dpre_c * r])
    dwx = dgx[:, np.newaxis] * x
    dwh = dgh[:, np.newaxis] * h
    dx = wx.T @ dgx
    dh = dh + wh.T @ dgh
    return dx, dh, dwx, dwh, dgx, dgh


def _fwd_gru_sequence(p, aux):
    """Unrolled GRU over a whole sequence: one node instead of one per step.

    Inputs: xs [n,E], h0 [H], wx [3H,E], wh [3H,H], bx [3H], bh [3H].
    Output: all hidden states [n,H]. Step math matches gru_step; the input
    transform is batched over steps since it has no recurrence.
    """
    xs, h0, wx, wh, bx, bh = p
    if xs.ndim != 2:
        raise ContractViolation("gru_sequence expects [n, E] inputs")
    n = xs.shape[0]
    hid = h0.shape[0]
    gx_all = xs @ wx.T + bx
    states = np.empty((n, hid), dtype=np.float64)
    saved = []
    h = h0
    for i in range(n):
        gx = gx_all[i]
        gh = wh @ h + bh
        r = _stable_sigmoid(gx[:hid] + gh[:hid])
        z = _stable_sigmoid(gx[hid : 2 * hid] + gh[hid : 2 * hid])
        gh_c = gh[2 * hid :]
        c = np.tanh(gx[2 * hid :] + r * gh_c)
        h = (1.0 - z) * c + z * h
        states[i] = h
        saved.append((r, z, c, gh_c))
    return states, saved


def _vjp_gru_sequence(g, p, v, ctx, aux):
    xs, h0, wx, wh, bx, bh = p
    n = xs.shape[0]
    hid = h0.shape[0]
    dgx_all = np.empty((n, 3 * hid), dtype=np.float64)
    dgh_all = np.empty((n, 3 * hid), dtype=np.float64)
    dh = np.zeros_like(h0)
    wh_t = wh.T
    for i in range(n - 1, -1, -1):
        r, z, c, gh_c = ctx[i]
        h_prev = v[i - 1] if i > 0 else h0
        dtotal = g[i] + dh
        dz = dtotal * (h_prev - c)
        dc = dtotal * (1.0 - z)
        dh = dtotal * z
        dpre_c = dc * (1.0 - c * c)
        dr = dpre_c * gh_c
        dpre_r = dr * r * (1.0 - r)
        dpre_z = dz * z * (1.0 - z)
        row = dgx_all[i]
        row[:hid] = dpre_r
        row[hid : 2 * hid] = dpre_z
        row[2 * hid :] = dpre_c
        hrow = dgh_all[i]
        hrow[:hid] = dpre_r
        hrow[hid : 2 * hid] = dpre_z
        hrow[2 * hid :] = dpre_c * r
        dh = dh + wh_t @ hrow
    h_prev_all = np.vstack([h0[np.newaxis, :], v[:-1]]) if n > 1 else h0[np.newaxis, :]
    dxs = dgx_all @ wx
    dwx = dgx_all.T @ xs
    dwh = dgh_all.T @ h_prev_all
    dbx = dgx_all.sum(axis=0)
    dbh = dgh_all.sum(axis=0)
    return dxs, dh, dwx, dwh, dbx, dbh


_register("add", _fwd_add, _vjp_add)
_register("mul", _fwd_mul, _vjp_mul)
_register("affine", _fwd_affine, _vjp_affine)
_register("matmul", _fwd_matmul, _vjp_matmul)
_register("tanh", _fwd_tanh, _vjp_tanh)
_register("sigmoid", _fwd_sigmoid, _vjp_sigmoid)
_register("log", _fwd_log, _vjp_log)
_register("clamp_min", _fwd_clamp_min, _vjp_clamp_min)
_register("softmax", _fwd_softmax, _vjp_softmax)
_register("masked_softmax", _fwd_masked_softmax, _vjp_masked_softmax)
_register("concat", _fwd_concat, _vjp_concat)
_register("lookup", _fwd_lookup, _vjp_lookup)
_register("gather", _fwd_gather, _vjp_gather)
_register("scatter_add", _fwd_scatter_add, _vjp_scatter_add)
_register("sum", _fwd_sum, _vjp_sum)
_register("mean", _fwd_mean, _vjp_mean)
_register("transpose", _fwd_transpose, _vjp_transpose)
_register("reshape", _fwd_reshape, _vjp_reshape)
_register("slice", _fwd_slice, _vjp_slice)
_register("add_rowvec", _fwd_add_rowvec, _vjp_add_rowvec)
_register("gru_step", _fwd_gru_step, _vjp_gru_step)
_register("gru_sequence", _fwd_gru_sequence, _vjp_gru_sequence)

KERNEL_IDS = tuple(sorted(_FORWARD))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


class Ref:
    """Handle to a tape node."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.idx]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    def __repr__(self) -> str:
        return f"Ref({self.tape.ops[self.idx]}, shape={self.shape})"


class Tape:
    """Eager single-threaded computation record.

    Nodes are stored in topological order by construction; ``replay``
    recomputes every node from its recorded inputs and must reproduce the
    recorded values bit-identically.
    """

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.aux: list[dict | None] = []
        self.values: list[np.ndarray] = []
        self.ctx: list = []
        self.param_names: list[str | None] = []

    def _append(self, op, parents, aux, value, ctx, param_name=None) -> Ref:
        self.ops.append(op)
        self.parents.append(parents)
        self.aux.append(aux)
        self.values.append(value)
        self.ctx.append(ctx)
        self.param_names.append(param_name)
        return Ref(self, len(self.ops) - 1)

    def leaf(self, array, param_name: str | None = None) -> Ref:
        if isinstance(array, Tensor):
            array = array.data
        value = np.asarray(array, dtype=np.float64)
        return self._append("leaf", (), None, value, None, param_name)

    def const(self, array) -> Ref:
        return self.leaf(array)

    def param(self, store: "ParamStore", name: str) -> Ref:
        return self.leaf(store.get(name), param_name=name)

    def apply(self, op_id: str, *parents: Ref, **aux) -> Ref:
        fn = _FORWARD[op_id]
        values = [p.value for p in parents]
        result = fn(values, aux if aux else None)
        if isinstance(result, tuple):
            value, ctx = result
        else:
            value, ctx = result, None
        return self._append(
            op_id, tuple(p.idx for p in parents), aux if aux else None, value, ctx
        )

    # Convenience wrappers keep model code readable.
    def add(self, a: Ref, b: Ref) -> Ref:
        return self.apply("add", a, b)

    def mul(self, a: Ref, b: Ref) -> Ref:
        return self.apply("mul", a, b)

    def affine(self, x: Ref, scale: float, shift: float) -> Ref:
        return self.apply("affine", x, scale=float(scale), shift=float(shift))

    def matmul(self, a: Ref, b: Ref) -> Ref:
        return self.apply("matmul", a, b)

    def tanh(self, x: Ref) -> Ref:
        return self.apply("tanh", x)

    def sigmoid(self, x: Ref) -> Ref:
        return self.apply("sigmoid", x)

    def log(self, x: Ref) -> Ref:
        return self.apply("log", x)

    def clamp_min(self, x: Ref, floor: float) -> Ref:
        return self.apply("clamp_min", x, floor=float(floor))

    def softmax(self, x: Ref, axis: int = -1) -> Ref:
        return self.apply("softmax", x, axis=axis)

    def masked_softmax(self, x: Ref, excluded: np.ndarray, axis: int = -1) -> Ref:
        return self.apply(
            "masked_softmax", x, excluded=np.asarray(excluded, dtype=bool), axis=axis
        )

    def concat(self, parts: Sequence[Ref], axis: int = 0) -> Ref:
        return self.apply("concat", *parts, axis=axis)

    def lookup(self, table: Ref, indices: Iterable[int]) -> Ref:
        return self.apply("lookup", table, indices=tuple(int(i) for i in indices))

    def gather(self, vec: Ref, indices: Iterable[int]) -> Ref:
        return self.apply("gather", vec, indices=tuple(int(i) for i in indices))

    def scatter_add(self, values: Ref, indices: Iterable[int], size: int) -> Ref:
        return self.apply(
            "scatter_add",
            values,
            indices=tuple(int(i) for i in indices),
            size=int(size),
        )

    def sum(self, x: Ref) -> Ref:
        return self.apply("sum", x)

    def mean(self, x: Ref) -> Ref:
        return self.apply("mean", x)

    def transpose(self, x: Ref) -> Ref:
        return self.apply("transpose", x)

    def reshape(self, x: Ref, shape: tuple[int, ...]) -> Ref:
        return self.apply("reshape", x, shape=tuple(shape))

    def slice(self, x: Ref, start: int, stop: int) -> Ref:
        return self.apply("slice", x, start=int(start), stop=int(stop))

    def add_rowvec(self, m: Ref, v: Ref) -> Ref:
        return self.apply("add_rowvec", m, v)

    def gru_step(self, x: Ref, h: Ref, wx: Ref, wh: Ref, bx: Ref, bh: Ref) -> Ref:
        return self.apply("gru_step", x, h, wx, wh, bx, bh)

    def gru_sequence(
        self, xs: Ref, h0: Ref, wx: Ref, wh: Ref, bx: Ref, bh: Ref
    ) -> Ref:
        return self.apply("gru_sequence", xs, h0, wx, wh, bx, bh)

    def replay(self) -> list[np.ndarray]:
        """Recompute every node from the record; used to audit determinism."""
        out: list[np.ndarray] = []
        for op, parents, aux in zip(self.ops, self.parents, self.aux):
            if op == "leaf":
                out.append(self.values[len(out)])
                continue
            result = _FORWARD[op]([out[i] for i in parents], aux)
            out.append(result[0] if isinstance(result, tuple) else result)
        return out


def backward(tape: Tape, loss: Ref, store: "ParamStore | None" = None) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar loss node.

    Returns gradients keyed by parameter leaf name. When a ParamStore is
    given, its gradient slots are filled, with zeros for parameters the
    loss never touched.
    """
    if loss.tape is not tape:
        raise ContractViolation("loss node belongs to a different tape")
    if loss.value.size != 1:
        raise ContractViolation(f"loss must be scalar, got shape {loss.shape}")

    n = len(tape.ops)
    grads: list[np.ndarray | None] = [None] * n
    grads[loss.idx] = np.ones_like(tape.values[loss.idx])

    for i in range(loss.idx, -1, -1):
        g = grads[i]
        if g is None or tape.ops[i] == "leaf":
            continue
        vjp = _VJP[tape.ops[i]]
        parent_idx = tape.parents[i]
        parent_vals = [tape.values[j] for j in parent_idx]
        parent_grads = vjp(g, parent_vals, tape.values[i], tape.ctx[i], tape.aux[i])
        for j, pg in zip(parent_idx, parent_grads):
            if pg is None:
                continue
            # Rebinding (never in-place add) keeps any views returned by
            # VJPs safe to share.
            if grads[j] is None:
                grads[j] = pg
            else:
                grads[j] = grads[j] + pg

    by_name: dict[str, np.ndarray] = {}
    for i in range(n):
        name = tape.param_names[i]
        if name is None:
            continue
        g = grads[i]
        if g is None:
            g = np.zeros_like(tape.values[i])
        if name in by_name:
            by_name[name] = by_name[name] + g
        else:
            by_name[name] = g

    if store is not None:
        for name in store.names():
            if name in by_name:
                store.set_grad(name, by_name[name])
            else:
                store.set_grad(name, np.zeros(store.get(name).shape))
    return by_name


def grad_check(
    build_fn: Callable[["ParamStore"], tuple[Tape, Ref]],
    store: "ParamStore",
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``build_fn`` must construct a fresh tape from the store and return
    ``(tape, loss_ref)``. It is run twice up front; differing losses mean a
    non-deterministic function, which is an error.

    Entries whose first-pass difference looks noise-dominated (relative
    error above 1e-5 despite tiny magnitudes) are re-estimated with a
    Richardson-extrapolated central difference at a ten times larger step:
    the extrapolation cancels the step-size truncation term while the wider
    step keeps float64 cancellation noise out of the quotient. A wrong
    gradient still disagrees with the refined estimate.
    """
    if epsilon <= 0:
        raise ContractViolation("epsilon must be positive")

    tape1, loss1 = build_fn(store)
    tape2, loss2 = build_fn(store)
    if float(loss1.value) != float(loss2.value):
        raise ContractViolation("build_fn is not deterministic across forward passes")

    analytic = backward(tape1, loss1)

    def loss_at(name: str, base: np.ndarray, k: int, value: float) -> float:
        perturbed = base.copy()
        perturbed.ravel()[k] = value
        store.set(name, Tensor(perturbed))
        _, loss_ref = build_fn(store)
        return float(loss_ref.value)

    worst = 0.0
    for name in store.names():
        base = store.get(name).data
        a_grad = analytic.get(name)
        if a_grad is None:
            a_grad = np.zeros_like(base)
        flat_base = base.ravel()
        for k in range(flat_base.size):
            orig = flat_base[k]
            numeric = (
                loss_at(name, base, k, orig + epsilon)
                - loss_at(name, base, k, orig - epsilon)
            ) / (2 * epsilon)
            a = float(np.asarray(a_grad).ravel()[k])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > 1e-5:
                wide = 10.0 * epsilon
                d_wide = (
                    loss_at(name, base, k, orig + wide)
                    - loss_at(name, base, k, orig - wide)
                ) / (2 * wide)
                half = wide / 2.0
                d_half = (
                    loss_at(name, base, k, orig + half)
                    - loss_at(name, base, k, orig - half)
                ) / (2 * half)
                numeric = (4.0 * d_half - d_wide) / 3.0
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            store.set(name, Tensor(base))
            worst = max(worst, rel)
    return worst
