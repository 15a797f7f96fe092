"""Numeric kernels with hand-written backward passes, Adam, and a finite-difference checker.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the cache and the upstream gradient.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "spmm",
    "linear",
    "linear_forward",
    "linear_backward",
    "relu",
    "dropout",
    "dropout_mask",
    "SymmetricDD",
    "realize_symmetric_dd",
    "symmetric_dd_backward",
    "symmetrize",
    "batchnorm_forward",
    "batchnorm_backward",
    "bce_with_logits",
    "sigmoid",
    "AdamState",
    "adam_step",
    "grad_check",
    "glorot",
    "save_checkpoint",
    "load_checkpoint",
]


def spmm(adj, H):
    """Sparse-dense product ``adj @ H``; ``adj`` is a NormalizedAdjacency or CSR matrix.

    The CSR kernel walks rows in order, so results are bitwise reproducible.
    """
    mat = getattr(adj, "matrix", adj)
    H = np.asarray(H)
    if mat.shape[1] != H.shape[0]:
        raise ValueError(f"cannot multiply {mat.shape} operator by {H.shape} matrix")
    return np.asarray(mat @ H)


def linear(H, weight, bias=None):
    out = H @ weight
    if bias is not None:
        out = out + bias
    return out


def linear_forward(H, weight, bias=None):
    return linear(H, weight, bias), H


def linear_backward(dout, cache, weight, has_bias=True):
    """Returns ``(dH, dweight, dbias)``; ``dbias`` is None without a bias."""
    H = cache
    dH = dout @ weight.T
    dW = H.T @ dout
    db = dout.sum(axis=0) if has_bias else None
    return dH, dW, db


def relu(H):
    return np.maximum(H, 0.0)


def dropout_mask(shape, rate, rng):
    """Inverted-dropout mask: kept entries are ``1 / (1 - rate)``, dropped ones 0."""
    if rate <= 0.0:
        return None
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(H, rate, train_mode, rng=None):
    if not train_mode or rate <= 0.0:
        return H
    return H * dropout_mask(H.shape, rate, rng)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- symmetric parametrizations ---------------------------------------------


@dataclass
class SymmetricDD:
    """Raw parameters of a diagonally-dominant symmetric matrix.

    Off-diagonal entries are ``(M_ij + M_ji) / 2``; the diagonal is
    ``tanh(gate_i) * Σ_{j≠i} |W_ij| + residual_i``. ``M``'s own diagonal is unused.
    """

    raw: np.ndarray
    gate: np.ndarray
    residual: np.ndarray

    @property
    def W(self):
        return realize_symmetric_dd(self.raw, self.gate, self.residual)


def symmetrize(M):
    return 0.5 * (M + M.T)


def realize_symmetric_dd(raw, gate=None, residual=None):
    if isinstance(raw, SymmetricDD):
        raw, gate, residual = raw.raw, raw.gate, raw.residual
    S = symmetrize(raw)
    np.fill_diagonal(S, 0.0)
    rowabs = np.abs(S).sum(axis=1)
    np.fill_diagonal(S, np.tanh(gate) * rowabs + residual)
    return S


def symmetric_dd_backward(dW, raw, gate):
    """Gradients ``(draw, dgate, dresidual)`` of a loss w.r.t. the raw parameters.

    ``|x|`` has subgradient 0 at 0.
    """
    S = symmetrize(raw)
    np.fill_diagonal(S, 0.0)
    t = np.tanh(gate)
    ddiag = np.diag(dW).copy()
    dres = ddiag
    dgate = ddiag * (1.0 - t * t) * np.abs(S).sum(axis=1)
    dS = dW + (ddiag * t)[:, None] * np.sign(S)
    np.fill_diagonal(dS, 0.0)
    draw = symmetrize(dS)
    return draw, dgate, dres


# --- batch norm ---------------------------------------------------------------


def batchnorm_forward(x, gamma, beta, state, train_mode, momentum=0.1, eps=1e-5):
    """Batch normalization over rows.

    ``state`` holds ``running_mean`` / ``running_var`` and is updated in place in
    train mode (unbiased variance for the running estimate).
    """
    if train_mode:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        n = x.shape[0]
        if state is not None:
            unbiased = var * n / max(n - 1, 1)
            state["running_mean"] *= 1.0 - momentum
            state["running_mean"] += momentum * mu
            state["running_var"] *= 1.0 - momentum
            state["running_var"] += momentum * unbiased
    else:
        mu, var = state["running_mean"], state["running_var"]
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma, train_mode)


def batchnorm_backward(dout, cache):
    xhat, inv, gamma, train_mode = cache
    dgamma = np.sum(dout * xhat, axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    if not train_mode:
        return dxhat * inv, dgamma, dbeta
    n = dout.shape[0]
    dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
    return dx, dgamma, dbeta


# --- loss ---------------------------------------------------------------------


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy on logits, with its gradient w.r.t. the logits."""
    x = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError("logits and labels differ in length")
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    grad = (sigmoid(x) - y) / x.size
    return float(loss.mean()), grad


# --- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.01
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One in-place Adam update with decoupled weight decay.

    Decay ``p <- p - lr * weight_decay * p`` is applied before the moment update.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --- finite differences ---------------------------------------------------------


def grad_check(loss_fn, params, grads, h=1e-5, max_coords=None, seed=0, floor=1e-6):
    """Worst coordinate-wise relative error between ``grads`` and central differences.

    ``loss_fn()`` must re-evaluate the loss from the current contents of
    ``params`` (perturbed in place and restored). Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps coordinates whose
    true gradient is ~0 from turning round-off into huge ratios. With ``max_coords`` set, at most that
    many coordinates per tensor are sampled. Returns ``(worst, per_name)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    per_name = {}
    for name, p in params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        analytic = np.asarray(grads[name]).reshape(-1)
        err = 0.0
        for k in idx:
            old = flat[k]
            flat[k] = old + h
            fp = loss_fn()
            flat[k] = old - h
            fm = loss_fn()
            flat[k] = old
            num = (fp - fm) / (2.0 * h)
            a = analytic[k]
            err = max(err, abs(a - num) / max(abs(a), abs(num), floor))
        per_name[name] = err
        worst = max(worst, err)
    return worst, per_name


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# --- checkpoint -------------------------------------------------------------------

CHECKPOINT_FORMAT = "grafflp-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors, meta=None):
    """Write named tensors as JSON: shape plus row-major values, under a versioned header.

    JSON floats round-trip float64 exactly.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "tensors": [
            {
                "name": name,
                "shape": list(np.shape(arr)),
                "values": np.asarray(arr, dtype=np.float64).ravel().tolist(),
            }
            for name, arr in tensors.items()
        ],
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(tensors, meta)``."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    tensors = {
        t["name"]: np.asarray(t["values"], dtype=np.float64).reshape(t["shape"])
        for t in payload["tensors"]
    }
    return tensors, payload["meta"]
