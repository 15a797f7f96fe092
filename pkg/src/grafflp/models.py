"""Link-prediction models: encode, message passing, edge readout, MLP decode.

Three message-passing backbones share the same plumbing:

``graff``
    Residual gradient-flow steps ``H <- H + τ σ(-H Ω + A H W - H⁰ W̃)`` with
    one set of symmetric ``Ω`` (diagonal), ``W`` and ``W̃`` reused by every step.
``gcn``
    ``H <- relu(A H W_l)`` with a separate, unconstrained ``W_l`` per layer.
``mlp``
    ``H <- relu(H W_l + b_l)``; the adjacency is never read.

The backward pass is written out by hand for this closed architecture family.
"""

from collections import namedtuple
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import nn
from .nn import dropout_mask, relu, spmm

__all__ = [
    "MODEL_KINDS",
    "READOUTS",
    "GraffConfig",
    "LinkModel",
    "MessagePassingWeights",
    "init_model",
    "mp_weights",
    "encode",
    "graff_step",
    "graff_forward",
    "gcn_forward",
    "mlp_forward",
    "message_passing",
    "readout_hadamard",
    "readout_gradient",
    "readout",
    "decode",
    "forward",
    "backward",
    "predict_logits",
    "predict_edges",
    "param_count",
    "message_passing_param_count",
]

MODEL_KINDS = ("graff", "gcn", "mlp")
READOUTS = ("hadamard", "gradient")
W_PARAMS = ("diag_dominant", "symmetric")
ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class GraffConfig:
    """Architecture hyperparameters.

    ``w_param`` picks how ``W`` is made symmetric (``diag_dominant`` or plain
    ``symmetric`` averaging); ``activation="identity"`` gives the linear flow.
    """

    model: str = "graff"
    num_layers: int = 3
    step_size: float = 0.5
    hidden_dim: int = 64
    dropout: float = 0.0
    mlp_layers: int = 1
    mlp_dim: int = 32
    mlp_dropout: float = 0.0
    batch_norm: bool = False
    readout: str = "gradient"
    source_term: bool = True
    w_param: str = "diag_dominant"
    activation: str = "relu"

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        if self.w_param not in W_PARAMS:
            raise ValueError(f"w_param must be one of {W_PARAMS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        min_layers = 1 if self.model == "graff" else 0
        if self.num_layers < min_layers:
            raise ValueError(f"{self.model} needs num_layers >= {min_layers}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.hidden_dim < 1 or self.mlp_dim < 1 or self.mlp_layers < 0:
            raise ValueError("widths must be >= 1 and mlp_layers >= 0")
        for rate in (self.dropout, self.mlp_dropout):
            if not 0.0 <= rate < 1.0:
                raise ValueError("dropout rates must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


class LinkModel:
    """Parameters, batch-norm buffers and config of one link predictor."""

    def __init__(self, cfg, params, buffers=None, in_dim=None):
        self.cfg = cfg
        self.params = params
        self.buffers = buffers if buffers is not None else {}
        self.in_dim = in_dim if in_dim is not None else params["enc.weight"].shape[0]

    def copy(self):
        return LinkModel(
            self.cfg,
            {k: v.copy() for k, v in self.params.items()},
            {k: {s: a.copy() for s, a in b.items()} for k, b in self.buffers.items()},
            self.in_dim,
        )

    def state_tensors(self):
        """Flat mapping of parameters and buffers, for checkpoints."""
        out = dict(self.params)
        for k, b in self.buffers.items():
            for s, a in b.items():
                out[f"buffer:{k}.{s}"] = a
        return out

    @classmethod
    def from_state_tensors(cls, cfg, tensors):
        params, buffers = {}, {}
        for name, arr in tensors.items():
            if name.startswith("buffer:"):
                key, stat = name[len("buffer:"):].rsplit(".", 1)
                buffers.setdefault(key, {})[stat] = np.array(arr)
            else:
                params[name] = np.array(arr)
        return cls(cfg, params, buffers)


def init_model(cfg, in_dim, seed=0):
    """Glorot-uniform weights, zero biases, identity batch norm."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = cfg.hidden_dim
    p = {
        "enc.weight": nn.glorot(rng, in_dim, d),
        "enc.bias": np.zeros(d),
    }
    if cfg.model == "graff":
        p["mp.omega"] = np.zeros(d)
        p["mp.W.raw"] = nn.glorot(rng, d, d)
        if cfg.w_param == "diag_dominant":
            p["mp.W.gate"] = np.zeros(d)
            p["mp.W.residual"] = np.zeros(d)
        if cfg.source_term:
            p["mp.Wt.raw"] = nn.glorot(rng, d, d)
    elif cfg.model == "gcn":
        for l in range(cfg.num_layers):
            p[f"mp.{l}.weight"] = nn.glorot(rng, d, d)
    else:
        for l in range(cfg.num_layers):
            p[f"mp.{l}.weight"] = nn.glorot(rng, d, d)
            p[f"mp.{l}.bias"] = np.zeros(d)
    buffers = {}
    width = d
    for k in range(cfg.mlp_layers):
        p[f"dec.{k}.weight"] = nn.glorot(rng, width, cfg.mlp_dim)
        p[f"dec.{k}.bias"] = np.zeros(cfg.mlp_dim)
        if cfg.batch_norm:
            p[f"dec.{k}.bn.weight"] = np.ones(cfg.mlp_dim)
            p[f"dec.{k}.bn.bias"] = np.zeros(cfg.mlp_dim)
            buffers[f"dec.{k}.bn"] = {
                "running_mean": np.zeros(cfg.mlp_dim),
                "running_var": np.ones(cfg.mlp_dim),
            }
        width = cfg.mlp_dim
    p["dec.out.weight"] = nn.glorot(rng, width, 1)
    p["dec.out.bias"] = np.zeros(1)
    return LinkModel(cfg, p, buffers, in_dim)


def param_count(model):
    """Number of trainable scalars."""
    return int(sum(v.size for v in model.params.values()))


def message_passing_param_count(model):
    return int(sum(v.size for k, v in model.params.items() if k.startswith("mp.")))


# --- encoding -------------------------------------------------------------------


def _features(g):
    return g.features if hasattr(g, "features") else np.asarray(g, dtype=np.float64)


def _encode(X, model, train_mode, rng):
    p = model.params
    U = X @ p["enc.weight"] + p["enc.bias"]
    mask = dropout_mask(U.shape, model.cfg.dropout, rng) if train_mode else None
    return (U * mask if mask is not None else U), mask


def encode(X, model, train_mode=False, rng=None):
    """``H⁰ = dropout(X W_enc + b_enc)``."""
    return _encode(_features(X), model, train_mode, rng)[0]


# --- message passing ------------------------------------------------------------

MessagePassingWeights = namedtuple("MessagePassingWeights", "omega W Wt")


def mp_weights(model):
    """Realize the shared ``(Ω, W, W̃)`` of a graff model; ``W̃`` is None when disabled."""
    p, cfg = model.params, model.cfg
    if cfg.w_param == "diag_dominant":
        W = nn.realize_symmetric_dd(p["mp.W.raw"], p["mp.W.gate"], p["mp.W.residual"])
    else:
        W = nn.symmetrize(p["mp.W.raw"])
    Wt = nn.symmetrize(p["mp.Wt.raw"]) if cfg.source_term else None
    return MessagePassingWeights(p["mp.omega"], W, Wt)


def graff_step(H, H0, adj, weights, tau, activation="relu"):
    """One residual step ``H + τ σ(-H Ω + A H W - H⁰ W̃)``.

    ``weights.omega`` is the diagonal of ``Ω`` (a vector) or a full matrix.
    """
    return _graff_step(H, H0, adj, weights, tau, activation)[0]


def _graff_step(H, H0, adj, weights, tau, activation, source=None):
    omega, W, Wt = weights
    if H.shape[1] != W.shape[0]:
        raise ValueError(f"hidden width {H.shape[1]} does not match W {W.shape}")
    AH = spmm(adj, H)
    damp = H * omega if np.ndim(omega) == 1 else H @ omega
    P = AH @ W - damp
    if source is None and Wt is not None:
        source = H0 @ Wt
    if source is not None:
        P = P - source
    act = relu(P) if activation == "relu" else P
    return H + tau * act, (H, AH, P)


def _graff_mp(H0, adj, model):
    cfg = model.cfg
    w = mp_weights(model)
    source = H0 @ w.Wt if w.Wt is not None else None
    H, trace, steps = H0, [H0], []
    for _ in range(cfg.num_layers):
        H, c = _graff_step(H, H0, adj, w, cfg.step_size, cfg.activation, source)
        trace.append(H)
        steps.append(c)
    return H, trace, {"weights": w, "steps": steps}


def _gcn_mp(H0, adj, model):
    H, trace, steps = H0, [H0], []
    for l in range(model.cfg.num_layers):
        AH = spmm(adj, H)
        P = AH @ model.params[f"mp.{l}.weight"]
        H = relu(P)
        trace.append(H)
        steps.append((AH, P))
    return H, trace, {"steps": steps}


def _mlp_mp(H0, model):
    H, trace, steps = H0, [H0], []
    for l in range(model.cfg.num_layers):
        P = H @ model.params[f"mp.{l}.weight"] + model.params[f"mp.{l}.bias"]
        steps.append((H, P))
        H = relu(P)
        trace.append(H)
    return H, trace, {"steps": steps}


def _message_passing(H0, adj, model):
    kind = model.cfg.model
    if kind == "graff":
        return _graff_mp(H0, adj, model)
    if kind == "gcn":
        return _gcn_mp(H0, adj, model)
    return _mlp_mp(H0, model)


def message_passing(g, adj, model, train_mode=False, rng=None):
    """Encode then run the model's backbone; returns ``(Z, trace)`` with ``len(trace) == L + 1``."""
    H0 = encode(g, model, train_mode, rng)
    Z, trace, _ = _message_passing(H0, adj, model)
    return Z, trace


def graff_forward(g, adj, model, train_mode=False, rng=None):
    if model.cfg.model != "graff":
        raise ValueError("graff_forward needs a graff model")
    return message_passing(g, adj, model, train_mode, rng)


def gcn_forward(g, adj, model, train_mode=False, rng=None):
    if model.cfg.model != "gcn":
        raise ValueError("gcn_forward needs a gcn model")
    return message_passing(g, adj, model, train_mode, rng)


def mlp_forward(g, model, train_mode=False, rng=None):
    if model.cfg.model != "mlp":
        raise ValueError("mlp_forward needs an mlp model")
    return message_passing(g, None, model, train_mode, rng)


# --- readouts ---------------------------------------------------------------------


def readout_hadamard(zi, zj):
    return np.asarray(zi) * np.asarray(zj)


def readout_gradient(H, adj, edges):
    """Elementwise square of the edge gradient at ``H``, one row per pair."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    i, j = edges[:, 0], edges[:, 1]
    s = adj.scale
    G = s[j, None] * H[j] - s[i, None] * H[i]
    return G * G


def readout(Z, adj, edges, kind):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if kind == "hadamard":
        return readout_hadamard(Z[edges[:, 0]], Z[edges[:, 1]])
    return readout_gradient(Z, adj, edges)


def _scatter_rows(n, rows, coef, values):
    """``out[rows[k]] += coef[k] * values[k]`` via a sparse product."""
    k = rows.size
    S = sp.csr_matrix((coef, (rows, np.arange(k))), shape=(n, k))
    return np.asarray(S @ values)


# --- decoding ---------------------------------------------------------------------


def _decode(R, model, train_mode, rng):
    p, cfg = model.params, model.cfg
    h, layers = R, []
    for k in range(cfg.mlp_layers):
        hin = h
        a = h @ p[f"dec.{k}.weight"] + p[f"dec.{k}.bias"]
        bn_cache = None
        if cfg.batch_norm:
            a, bn_cache = nn.batchnorm_forward(
                a,
                p[f"dec.{k}.bn.weight"],
                p[f"dec.{k}.bn.bias"],
                model.buffers.get(f"dec.{k}.bn"),
                train_mode,
            )
        h = relu(a)
        mask = dropout_mask(h.shape, cfg.mlp_dropout, rng) if train_mode else None
        if mask is not None:
            h = h * mask
        layers.append((hin, bn_cache, a, mask))
    logits = (h @ p["dec.out.weight"]).ravel() + p["dec.out.bias"][0]
    return logits, {"layers": layers, "h": h}


def decode(z_edge, model, train_mode=False, rng=None):
    """MLP over edge representations, one logit per row."""
    return _decode(np.atleast_2d(z_edge), model, train_mode, rng)[0]


# --- full pipeline -------------------------------------------------------------------


def forward(model, X, adj, edges, train_mode=False, rng=None):
    """Logits for ``edges`` plus the cache :func:`backward` needs.

    Dropout masks are drawn from ``rng`` in a fixed order (encoder, then decoder layers).
    """
    X = _features(X)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    H0, enc_mask = _encode(X, model, train_mode, rng)
    Z, trace, mp_cache = _message_passing(H0, adj, model)
    R = readout(Z, adj, edges, model.cfg.readout)
    logits, dec_cache = _decode(R, model, train_mode, rng)
    cache = {
        "X": X,
        "adj": adj,
        "edges": edges,
        "enc_mask": enc_mask,
        "trace": trace,
        "mp": mp_cache,
        "R": R,
        "dec": dec_cache,
    }
    return logits, cache


def backward(model, cache, dlogits):
    """Gradients of a scalar loss for every parameter, given ``dloss/dlogits``."""
    p, cfg = model.params, model.cfg
    grads = {}
    dlogits = np.asarray(dlogits, dtype=np.float64).reshape(-1, 1)

    # decoder
    dec = cache["dec"]
    grads["dec.out.weight"] = dec["h"].T @ dlogits
    grads["dec.out.bias"] = dlogits.sum(axis=0)
    dh = dlogits @ p["dec.out.weight"].T
    for k in reversed(range(cfg.mlp_layers)):
        hin, bn_cache, a, mask = dec["layers"][k]
        if mask is not None:
            dh = dh * mask
        da = dh * (a > 0)
        if bn_cache is not None:
            da, dgamma, dbeta = nn.batchnorm_backward(da, bn_cache)
            grads[f"dec.{k}.bn.weight"] = dgamma
            grads[f"dec.{k}.bn.bias"] = dbeta
        grads[f"dec.{k}.weight"] = hin.T @ da
        grads[f"dec.{k}.bias"] = da.sum(axis=0)
        dh = da @ p[f"dec.{k}.weight"].T
    dR = dh

    # readout
    trace, adj, edges = cache["trace"], cache["adj"], cache["edges"]
    Z = trace[-1]
    n = Z.shape[0]
    i, j = edges[:, 0], edges[:, 1]
    if cfg.readout == "hadamard":
        rows = np.concatenate([i, j])
        vals = np.concatenate([dR * Z[j], dR * Z[i]])
        dZ = _scatter_rows(n, rows, np.ones(rows.size), vals)
    else:
        s = adj.scale
        G = s[j, None] * Z[j] - s[i, None] * Z[i]
        dG = 2.0 * G * dR
        rows = np.concatenate([j, i])
        coef = np.concatenate([s[j], -s[i]])
        dZ = _scatter_rows(n, rows, coef, np.concatenate([dG, dG]))

    # message passing
    mp = cache["mp"]
    H0 = trace[0]
    dH = dZ
    if cfg.model == "graff":
        w = mp["weights"]
        domega = np.zeros_like(w.omega)
        dW = np.zeros_like(w.W)
        dsrc = np.zeros_like(H0)
        for H, AH, P in reversed(mp["steps"]):
            dP = cfg.step_size * dH
            if cfg.activation == "relu":
                dP = dP * (P > 0)
            domega -= np.sum(dP * H, axis=0)
            dW += AH.T @ dP
            dsrc += dP
            dH = dH - dP * w.omega + spmm(adj, dP @ w.W.T)
        grads["mp.omega"] = domega
        if cfg.w_param == "diag_dominant":
            draw, dgate, dres = nn.symmetric_dd_backward(dW, p["mp.W.raw"], p["mp.W.gate"])
            grads["mp.W.gate"] = dgate
            grads["mp.W.residual"] = dres
        else:
            draw = nn.symmetrize(dW)
        grads["mp.W.raw"] = draw
        if w.Wt is not None:
            grads["mp.Wt.raw"] = nn.symmetrize(-H0.T @ dsrc)
            dH = dH - dsrc @ w.Wt.T
    elif cfg.model == "gcn":
        for l in reversed(range(cfg.num_layers)):
            AH, P = mp["steps"][l]
            dP = dH * (P > 0)
            Wl = p[f"mp.{l}.weight"]
            grads[f"mp.{l}.weight"] = AH.T @ dP
            dH = spmm(adj, dP @ Wl.T)
    else:
        for l in reversed(range(cfg.num_layers)):
            Hin, P = mp["steps"][l]
            dP = dH * (P > 0)
            grads[f"mp.{l}.weight"] = Hin.T @ dP
            grads[f"mp.{l}.bias"] = dP.sum(axis=0)
            dH = dP @ p[f"mp.{l}.weight"].T

    # encoder
    dU = dH * cache["enc_mask"] if cache["enc_mask"] is not None else dH
    grads["enc.weight"] = cache["X"].T @ dU
    grads["enc.bias"] = dU.sum(axis=0)
    return grads


def predict_logits(model, g, adj, edges):
    return forward(model, g, adj, edges, train_mode=False)[0]


def predict_edges(model, g, adj, edges):
    """Eval-mode link probabilities for ``edges`` on the message-passing graph ``adj``."""
    return nn.sigmoid(predict_logits(model, g, adj, edges))
