"""E(n)-equivariant message passing network in numpy with exact reverse-mode gradients.

Each layer, for directed edges (i <- j):

    m_ij = silu(W2 silu(W1 [h_i, h_j, |x_i - x_j|^2 / s^2] + b1) + b2)
    x_i <- x_i + C * sum_j (x_i - x_j) * phi_x(m_ij)      phi_x: silu hidden, linear out
    h_i <- h_i + Wh2 silu(Wh1 [h_i, sum_j m_ij] + bh1) + bh2

Node features are the invariant push-frame features, so rotating or translating
positions (with the features held fixed) moves the output the same way.
Everything is batched over a leading axis with a shared edge list.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import InvalidInputError, NumericError

CHECKPOINT_MAGIC = "guided-dynamics-egnn/v1"


def silu(z):
    return z * expit(z)


def dsilu(z):
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass
class EgnnParams:
    n_layers: int
    hidden_dim: int
    in_dim: int
    coord_scale: float
    dist_scale: float
    weights: dict = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.weights)

    def copy(self) -> "EgnnParams":
        return EgnnParams(self.n_layers, self.hidden_dim, self.in_dim, self.coord_scale,
                          self.dist_scale, {k: v.copy() for k, v in self.weights.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights.values()])

    def set_flat(self, vec) -> "EgnnParams":
        out = self.copy()
        o = 0
        for k, w in out.weights.items():
            out.weights[k] = np.asarray(vec[o:o + w.size], dtype=np.float64).reshape(w.shape).copy()
            o += w.size
        return out

    @property
    def size(self) -> int:
        return int(sum(w.size for w in self.weights.values()))

    def header(self) -> dict:
        return {"n_layers": self.n_layers, "hidden_dim": self.hidden_dim, "in_dim": self.in_dim,
                "coord_scale": self.coord_scale, "dist_scale": self.dist_scale}


GradientBundle = dict  # name -> array, congruent with EgnnParams.weights


def _layer_shapes(h: int) -> dict:
    return {"We1a": (h, h), "We1b": (h, h), "we1c": (1, h), "be1": (h,),
            "We2": (h, h), "be2": (h,),
            "Wx1": (h, h), "bx1": (h,), "wx2": (h, 1), "bx2": (1,),
            "Wh1a": (h, h), "Wh1b": (h, h), "bh1": (h,),
            "Wh2": (h, h), "bh2": (h,)}


def init_params(n_layers: int = 4, hidden_dim: int = 64, in_dim: int = 4, coord_scale: float = 0.125,
                dist_scale: float = 1.0, seed: int = 0, coord_init: float = 0.0) -> EgnnParams:
    """Glorot-normal weights, zero biases; the coordinate head is scaled by ``coord_init``.

    ``coord_init=0`` makes the untrained network the identity map on positions.
    """
    if n_layers < 1 or hidden_dim < 1:
        raise InvalidInputError("need n_layers >= 1 and hidden_dim >= 1")
    rng = np.random.default_rng(seed)
    w = {"Win": rng.normal(0, np.sqrt(2.0 / (in_dim + hidden_dim)), (in_dim, hidden_dim)),
         "bin": np.zeros(hidden_dim)}
    for l in range(n_layers):
        for name, shape in _layer_shapes(hidden_dim).items():
            key = f"{name}.{l}"
            if name.startswith("b"):
                w[key] = np.zeros(shape)
            else:
                fan_in = shape[0] * (2 if name in ("We1a", "We1b", "Wh1a", "Wh1b") else 1)
                std = np.sqrt(2.0 / (fan_in + shape[1]))
                w[key] = rng.normal(0, std, shape)
                if name == "wx2":
                    w[key] *= coord_init
                if name.startswith("Wh2"):
                    w[key] *= 0.5
    return EgnnParams(n_layers, hidden_dim, in_dim, float(coord_scale), float(dist_scale), w)


class _Graph:
    """Directed edge arrays and scatter matrices for a fixed undirected edge list."""

    def __init__(self, edges, n: int):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise InvalidInputError("edge index out of range")
        self.recv = np.concatenate([e[:, 0], e[:, 1]])
        self.send = np.concatenate([e[:, 1], e[:, 0]])
        ne = len(self.recv)
        cols, ones = np.arange(ne), np.ones(ne)
        # sparse rows sum in edge order wherever the node sits, so relabelling is bit-exact
        self.S = sparse.csr_matrix((ones, (self.recv, cols)), shape=(n, ne))
        self.T = sparse.csr_matrix((ones, (self.send, cols)), shape=(n, ne))


def _scatter(M, vals):
    """M (n, E) sparse times vals (..., E, k) -> (..., n, k)."""
    lead, (e, k) = vals.shape[:-2], vals.shape[-2:]
    if e == 0:
        return np.zeros(lead + (M.shape[0], k))
    out = M @ np.moveaxis(vals, -2, 0).reshape(e, -1)
    return np.moveaxis(np.asarray(out).reshape((M.shape[0],) + lead + (k,)), 0, -2)


_graph_cache: dict = {}


def _graph(edges, n) -> _Graph:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    key = (n, e.tobytes())
    g = _graph_cache.get(key)
    if g is None:
        if len(_graph_cache) > 32:
            _graph_cache.clear()
        g = _graph_cache[key] = _Graph(e, n)
    return g


def _check(arr, layer):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite activation in layer {layer}", where=layer)


def _forward(x, feats, g: _Graph, p: EgnnParams, keep=False):
    w = p.weights
    s2 = p.dist_scale ** 2
    h = feats @ w["Win"] + w["bin"]
    caches = []
    for l in range(p.n_layers):
        L = lambda name: w[f"{name}.{l}"]
        dx = x[..., g.recv, :] - x[..., g.send, :]
        d2 = np.sum(dx * dx, axis=-1, keepdims=True) / s2
        P = h @ L("We1a")
        Q = h @ L("We1b")
        z1 = P[..., g.recv, :] + Q[..., g.send, :] + d2 * L("we1c") + L("be1")
        a1 = silu(z1)
        z2 = a1 @ L("We2") + L("be2")
        m = silu(z2)
        zx = m @ L("Wx1") + L("bx1")
        ax = silu(zx)
        c = ax @ L("wx2") + L("bx2")
        x_new = x + p.coord_scale * (_scatter(g.S, dx * c))
        agg = _scatter(g.S, m)
        zh = h @ L("Wh1a") + agg @ L("Wh1b") + L("bh1")
        ah = silu(zh)
        h_new = h + ah @ L("Wh2") + L("bh2")
        _check(x_new, l)
        _check(h_new, l)
        if keep:
            caches.append((x, h, dx, d2, z1, a1, z2, m, zx, ax, c, agg, zh, ah))
        x, h = x_new, h_new
    return x, caches


def egnn_forward(positions, features, edges, params: EgnnParams) -> np.ndarray:
    """Predicted positions. positions (..., N, 3), features (..., N, F) or a CanonicalAction."""
    if hasattr(features, "features"):
        features = features.features()
    x = np.asarray(positions, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    if f.shape[:-1] != x.shape[:-1]:
        raise InvalidInputError(f"features {f.shape} do not match positions {x.shape}")
    if f.shape[-1] != params.in_dim:
        raise InvalidInputError(f"expected {params.in_dim} features per node, got {f.shape[-1]}")
    out, _ = _forward(x, f, _graph(edges, x.shape[-2]), params)
    return out


def _sum_lead(a, b):
    """sum over leading axes of a^T b for (..., n, p), (..., n, q) -> (p, q)."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _backward(gx_out, feats, caches, g: _Graph, p: EgnnParams) -> dict:
    w = p.weights
    s2 = p.dist_scale ** 2
    C = p.coord_scale
    grads = {k: np.zeros_like(v) for k, v in w.items()}
    gx = gx_out
    gh = np.zeros(gx.shape[:-1] + (p.hidden_dim,))
    for l in reversed(range(p.n_layers)):
        L = lambda name: w[f"{name}.{l}"]
        G = lambda name: f"{name}.{l}"
        x, h, dx, d2, z1, a1, z2, m, zx, ax, c, agg, zh, ah = caches[l]
        gx_o, gh_o = gx, gh
        # node update
        grads[G("Wh2")] += _sum_lead(ah, gh_o)
        grads[G("bh2")] += gh_o.reshape(-1, gh_o.shape[-1]).sum(0)
        gzh = (gh_o @ L("Wh2").T) * dsilu(zh)
        grads[G("Wh1a")] += _sum_lead(h, gzh)
        grads[G("Wh1b")] += _sum_lead(agg, gzh)
        grads[G("bh1")] += gzh.reshape(-1, gzh.shape[-1]).sum(0)
        gh = gh_o + gzh @ L("Wh1a").T
        gm = (gzh @ L("Wh1b").T)[..., g.recv, :]
        # coordinate update
        gdxc = C * gx_o[..., g.recv, :]
        gdx = gdxc * c
        gc = np.sum(gdxc * dx, axis=-1, keepdims=True)
        grads[G("wx2")] += _sum_lead(ax, gc)
        grads[G("bx2")] += gc.reshape(-1, 1).sum(0)
        gzx = (gc @ L("wx2").T) * dsilu(zx)
        grads[G("Wx1")] += _sum_lead(m, gzx)
        grads[G("bx1")] += gzx.reshape(-1, gzx.shape[-1]).sum(0)
        gm = gm + gzx @ L("Wx1").T
        # edge network
        gz2 = gm * dsilu(z2)
        grads[G("We2")] += _sum_lead(a1, gz2)
        grads[G("be2")] += gz2.reshape(-1, gz2.shape[-1]).sum(0)
        gz1 = (gz2 @ L("We2").T) * dsilu(z1)
        grads[G("be1")] += gz1.reshape(-1, gz1.shape[-1]).sum(0)
        grads[G("we1c")] += np.sum(gz1 * d2, axis=tuple(range(gz1.ndim - 1)))[None, :]
        gd2 = gz1 @ L("we1c").T
        gP = _scatter(g.S, gz1)
        gQ = _scatter(g.T, gz1)
        grads[G("We1a")] += _sum_lead(h, gP)
        grads[G("We1b")] += _sum_lead(h, gQ)
        gh = gh + gP @ L("We1a").T + gQ @ L("We1b").T
        gdx = gdx + 2.0 * dx * gd2 / s2
        gx = gx_o + _scatter(g.S, gdx) - _scatter(g.T, gdx)
    grads["Win"] += _sum_lead(feats, gh)
    grads["bin"] += gh.reshape(-1, gh.shape[-1]).sum(0)
    return grads


def loss(pred, target, neighborhoods, shape_weight: float = 1.0):
    """(total, dynamics, shape); batched inputs are averaged over the leading axis."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    l_dyn = np.mean(np.sum(diff * diff, axis=-1))
    nb = np.asarray(neighborhoods, dtype=np.int64).reshape(-1, 2)
    if len(nb):
        rel = diff[..., nb[:, 0], :] - diff[..., nb[:, 1], :]
        l_shape = np.mean(np.sum(rel * rel, axis=-1))
    else:
        l_shape = 0.0
    return float(l_dyn + shape_weight * l_shape), float(l_dyn), float(l_shape)


def _loss_grad(pred, target, nb, shape_weight):
    diff = pred - target
    n = pred.shape[-2]
    lead = int(np.prod(pred.shape[:-2])) if pred.ndim > 2 else 1
    g = 2.0 * diff / (lead * n)
    if len(nb):
        rel = diff[..., nb[:, 0], :] - diff[..., nb[:, 1], :]
        gr = shape_weight * 2.0 * rel / (lead * len(nb))
        inc = np.zeros((n, len(nb)))
        inc[nb[:, 0], np.arange(len(nb))] = 1.0
        inc[nb[:, 1], np.arange(len(nb))] -= 1.0
        g = g + inc @ gr
    return g


def backward(batch, params: EgnnParams, edges, shape_weight: float = 1.0):
    """Exact gradient of the mean batch loss.

    ``batch`` is ``(positions, features, targets)`` stacked as (B, N, 3), (B, N, F),
    (B, N, 3), or a list of such per-sample triples. Returns (grads, total_loss).
    """
    if isinstance(batch, (list, tuple)) and len(batch) and isinstance(batch[0], (list, tuple)):
        if len(batch) == 0:
            raise InvalidInputError("empty batch")
        x = np.stack([np.asarray(b[0], dtype=np.float64) for b in batch])
        f = np.stack([np.asarray(b[1].features() if hasattr(b[1], "features") else b[1], dtype=np.float64)
                      for b in batch])
        t = np.stack([np.asarray(b[2], dtype=np.float64) for b in batch])
    else:
        x, f, t = (np.asarray(a, dtype=np.float64) for a in batch)
    if len(x) == 0:
        raise InvalidInputError("empty batch")
    g = _graph(edges, x.shape[-2])
    pred, caches = _forward(x, f, g, params, keep=True)
    nb = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    total, _, _ = loss(pred, t, nb, shape_weight)
    if not np.isfinite(total):
        raise NumericError("loss overflowed")
    grads = _backward(_loss_grad(pred, t, nb, shape_weight), f, caches, g, params)
    for k, v in grads.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite gradient for {k}", where=k)
    return grads, total


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: EgnnParams, **kw) -> "AdamState":
        return cls({k: np.zeros_like(w) for k, w in params.weights.items()},
                   {k: np.zeros_like(w) for k, w in params.weights.items()}, **kw)


def adam_update(params: EgnnParams, grads: GradientBundle, state: AdamState, lr: float):
    """One Adam step; returns new params and the advanced optimizer state."""
    if set(grads) != set(params.weights):
        raise InvalidInputError("gradient bundle does not match parameters")
    t = state.t + 1
    out = params.copy()
    m_new, v_new = {}, {}
    b1, b2 = state.beta1, state.beta2
    for k, w in params.weights.items():
        g = grads[k]
        if g.shape != w.shape:
            raise InvalidInputError(f"gradient shape mismatch for {k}")
        m_new[k] = b1 * state.m[k] + (1 - b1) * g
        v_new[k] = b2 * state.v[k] + (1 - b2) * g * g
        mhat = m_new[k] / (1 - b1 ** t)
        vhat = v_new[k] / (1 - b2 ** t)
        out.weights[k] = w - lr * mhat / (np.sqrt(vhat) + state.eps)
    return out, AdamState(m_new, v_new, t, b1, b2, state.eps)


def save_checkpoint(path, params: EgnnParams, extra: dict | None = None) -> None:
    doc = {"magic": CHECKPOINT_MAGIC, "architecture": params.header(),
           "names": params.names(),
           "shapes": [list(w.shape) for w in params.weights.values()],
           "weights": params.flat().tolist()}
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> EgnnParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("magic") != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"not a checkpoint (magic={doc.get('magic')!r})")
    a = doc["architecture"]
    flat = np.asarray(doc["weights"], dtype=np.float64)
    weights, o = {}, 0
    for name, shape in zip(doc["names"], doc["shapes"]):
        size = int(np.prod(shape))
        weights[name] = flat[o:o + size].reshape(shape)
        o += size
    return EgnnParams(a["n_layers"], a["hidden_dim"], a["in_dim"], a["coord_scale"], a["dist_scale"], weights)
