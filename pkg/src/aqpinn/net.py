"""Feed-forward networks with exact spatial jets and parameter gradients.

The jet of the network at a point is the triple (value, gradient, Laplacian),
propagated in closed form layer by layer with the activation's first two
derivatives.  Losses are assembled on a small reverse-mode tape whose nodes
hold arrays over the whole batch of evaluation points, so one backward pass
yields the exact parameter gradient of any quadrature-weighted functional of
the jets; differentiating through the Laplacian needs the activation's third
derivative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .activation import SmoothActivation
from .cpwl import CPWLFunction

__all__ = [
    "NetworkParams",
    "JetEvaluation",
    "AdamState",
    "param_count",
    "init_params",
    "forward_value",
    "forward_jet",
    "forward_jet_batch",
    "forward_cpwl",
    "Var",
    "ParamVars",
    "loss_gradient",
    "adam_init",
    "adam_step",
]


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class NetworkParams:
    architecture: tuple
    weights: tuple          # W_k of shape (n_k, n_{k-1})
    biases: tuple           # b_k of shape (n_k,)
    activation: SmoothActivation

    def __post_init__(self):
        arch = tuple(int(n) for n in self.architecture)
        object.__setattr__(self, "architecture", arch)
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=float)
                                                  for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=float)
                                                 for b in self.biases))
        if arch[0] not in (1, 2):
            raise ValueError("input dimension must be 1 or 2")
        if arch[-1] != 1:
            raise ValueError("output layer must have a single unit")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (arch[k + 1], arch[k]) or b.shape != (arch[k + 1],):
                raise ValueError(f"layer {k}: parameter shapes do not match "
                                 f"architecture {arch}")

    @property
    def dim(self) -> int:
        return self.architecture[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights]
                              + [b for b in self.biases])

    def with_vector(self, vec: np.ndarray) -> "NetworkParams":
        ws, bs, k = [], [], 0
        for w in self.weights:
            ws.append(vec[k:k + w.size].reshape(w.shape))
            k += w.size
        for b in self.biases:
            bs.append(vec[k:k + b.size])
            k += b.size
        return NetworkParams(self.architecture, tuple(ws), tuple(bs),
                             self.activation)

    def to_json(self) -> str:
        return json.dumps({"architecture": list(self.architecture),
                           "activation": self.activation.name,
                           "epsilon": self.activation.epsilon,
                           "params": self.to_vector().tolist()})

    @classmethod
    def from_json(cls, text: str) -> "NetworkParams":
        from .activation import make_activation
        data = json.loads(text)
        act = make_activation(data["activation"], data.get("epsilon"))
        arch = tuple(data["architecture"])
        tmpl = init_params(arch, act, seed=0)
        return tmpl.with_vector(np.asarray(data["params"], dtype=float))


def param_count(architecture) -> int:
    arch = tuple(architecture)
    return sum(arch[k + 1] * (arch[k] + 1) for k in range(len(arch) - 1))


def init_params(architecture, activation: SmoothActivation,
                seed: int) -> NetworkParams:
    """Glorot-style uniform initialisation, a pure function of (arch, seed)."""
    rng = np.random.default_rng(seed)
    arch = tuple(int(n) for n in architecture)
    ws, bs = [], []
    for k in range(len(arch) - 1):
        nin, nout = arch[k], arch[k + 1]
        limit = math.sqrt(6.0 / (nin + nout))
        ws.append(rng.uniform(-limit, limit, size=(nout, nin)))
        bs.append(rng.uniform(-1.0, 1.0, size=nout) / math.sqrt(nin))
    return NetworkParams(arch, tuple(ws), tuple(bs), activation)


# ---------------------------------------------------------------------------
# plain (tape-free) evaluation

@dataclass(frozen=True)
class JetEvaluation:
    value: float
    gradient: np.ndarray
    laplacian: float


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.shape[1] != dim:
        raise ValueError(f"points have dimension {x.shape[1]}, network "
                         f"expects {dim}")
    return x, single


def forward_value(params: NetworkParams, x) -> np.ndarray:
    X, single = _as_batch(x, params.dim)
    act = params.activation
    V = X.T
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        V = W @ V + b[:, None]
        if k < last:
            V = act.eval(V)
    out = V[0]
    return float(out[0]) if single else out


def forward_jet_batch(params: NetworkParams, x):
    """Values, gradients and Laplacians at points of shape (N, d)."""
    X, _ = _as_batch(x, params.dim)
    act = params.activation
    d = params.dim
    N = X.shape[0]
    V = X.T                                     # (width, N)
    G = np.zeros((d, d, N))                     # G[j] = d(units)/dx_j
    for j in range(d):
        G[j, j, :] = 1.0
    L = np.zeros((d, N))
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        V = W @ V + b[:, None]
        G = np.einsum("mu,jun->jmn", W, G, optimize=True)
        L = W @ L
        if k < last:
            s1 = act.d1(V)
            s2 = act.d2(V)
            L = s2 * np.sum(G * G, axis=0) + s1 * L
            G = s1[None, :, :] * G
            V = act.eval(V)
    return V[0], G[:, 0, :].T.copy(), L[0]


def forward_jet(params: NetworkParams, x) -> JetEvaluation:
    """Exact (value, gradient, Laplacian) of the network at one point."""
    X, single = _as_batch(x, params.dim)
    v, g, lap = forward_jet_batch(params, X)
    if single:
        return JetEvaluation(value=float(v[0]), gradient=g[0],
                             laplacian=float(lap[0]))
    return JetEvaluation(value=v, gradient=g, laplacian=lap)


def forward_cpwl(params: NetworkParams, surrogate: CPWLFunction, x) -> np.ndarray:
    """Evaluate the surrogate network (same weights, surrogate activation)."""
    X, single = _as_batch(x, params.dim)
    V = X.T
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        V = W @ V + b[:, None]
        if k < last:
            V = surrogate(V)
    out = V[0]
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# reverse-mode tape over arrays

class Var:
    """A tape node holding an array (or scalar) value.

    Parents carry vector-Jacobian closures; ``backward`` runs them in
    reverse topological order with a fixed traversal, so gradient
    accumulation order is deterministic.
    """

    __slots__ = ("value", "grad", "_parents")

    def __init__(self, value, parents=()):
        self.value = value
        self.grad = None
        self._parents = parents

    # -- helpers ----------------------------------------------------------
    @staticmethod
    def _wrap(other):
        return other if isinstance(other, Var) else Var(other)

    def _acc(self, g):
        self.grad = g if self.grad is None else self.grad + g

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = self._wrap(other)
        return Var(self.value + other.value,
                   ((self, lambda g: _sum_to(g, self.value)),
                    (other, lambda g: _sum_to(g, other.value))))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._wrap(other)
        return Var(self.value - other.value,
                   ((self, lambda g: _sum_to(g, self.value)),
                    (other, lambda g: _sum_to(-g, other.value))))

    def __rsub__(self, other):
        return self._wrap(other).__sub__(self)

    def __mul__(self, other):
        other = self._wrap(other)
        return Var(self.value * other.value,
                   ((self, lambda g: _sum_to(g * other.value, self.value)),
                    (other, lambda g: _sum_to(g * self.value, other.value))))

    __rmul__ = __mul__

    def __neg__(self):
        return Var(-self.value, ((self, lambda g: -g),))

    def square(self):
        return Var(self.value * self.value,
                   ((self, lambda g: 2.0 * g * self.value),))

    def backward(self):
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(np.asarray(self.value, dtype=float))
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in node._parents:
                parent._acc(vjp(node.grad))


def _sum_to(g, like):
    """Reduce a broadcast gradient back to the shape of ``like``."""
    target = np.shape(like)
    if np.shape(g) == target:
        return g
    g = np.asarray(g, dtype=float)
    while g.ndim > len(target):
        g = g.sum(axis=0)
    for ax, n in enumerate(target):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(target)


def matmul(w: Var, x: Var) -> Var:
    return Var(w.value @ x.value,
               ((w, lambda g: g @ x.value.T),
                (x, lambda g: w.value.T @ g)))


def add_bias(x: Var, b: Var) -> Var:
    return Var(x.value + b.value[:, None],
               ((x, lambda g: g),
                (b, lambda g: g.sum(axis=1))))


def act_apply(act: SmoothActivation, order: int, x: Var) -> Var:
    derivs = (act.eval, act.d1, act.d2, act.d3)
    nxt = derivs[order + 1]
    return Var(derivs[order](x.value),
               ((x, lambda g: g * nxt(x.value)),))


def weighted_sum(x: Var, weights) -> Var:
    w = np.asarray(weights, dtype=float)
    return Var(float(np.sum(w * x.value)),
               ((x, lambda g: g * np.broadcast_to(w, np.shape(x.value))),))


class JetVars:
    """Jets of the network over a batch of points, as tape nodes."""

    def __init__(self, value: Var, gradient: list[Var], laplacian: Var):
        self.value = value          # (1, N)
        self.gradient = gradient    # d nodes of shape (1, N)
        self.laplacian = laplacian  # (1, N)


class ParamVars:
    """Leaf nodes for every weight and bias of a network."""

    def __init__(self, params: NetworkParams):
        self.params = params
        self.weight_vars = [Var(w) for w in params.weights]
        self.bias_vars = [Var(b) for b in params.biases]

    def jet(self, x) -> JetVars:
        params = self.params
        X, _ = _as_batch(x, params.dim)
        act = params.activation
        d = params.dim
        N = X.shape[0]
        V = Var(X.T)
        G = []
        for j in range(d):
            g0 = np.zeros((d, N))
            g0[j, :] = 1.0
            G.append(Var(g0))
        L = Var(np.zeros((d, N)))
        last = len(self.weight_vars) - 1
        for k, (Wv, bv) in enumerate(zip(self.weight_vars, self.bias_vars)):
            V = add_bias(matmul(Wv, V), bv)
            G = [matmul(Wv, Gj) for Gj in G]
            L = matmul(Wv, L)
            if k < last:
                s1 = act_apply(act, 1, V)
                s2 = act_apply(act, 2, V)
                grad_sq = G[0].square()
                for Gj in G[1:]:
                    grad_sq = grad_sq + Gj.square()
                L = s2 * grad_sq + s1 * L
                G = [s1 * Gj for Gj in G]
                V = act_apply(act, 0, V)
        return JetVars(value=V, gradient=G, laplacian=L)

    def value_only(self, x) -> Var:
        params = self.params
        X, _ = _as_batch(x, params.dim)
        V = Var(X.T)
        last = len(self.weight_vars) - 1
        for k, (Wv, bv) in enumerate(zip(self.weight_vars, self.bias_vars)):
            V = add_bias(matmul(Wv, V), bv)
            if k < last:
                V = act_apply(params.activation, 0, V)
        return V

    def collect_grads(self):
        gw = [np.zeros_like(w) if v.grad is None else np.asarray(v.grad)
              for w, v in zip(self.params.weights, self.weight_vars)]
        gb = [np.zeros_like(b) if v.grad is None else np.asarray(v.grad)
              for b, v in zip(self.params.biases, self.bias_vars)]
        return gw, gb


def loss_gradient(params: NetworkParams, build_loss):
    """Value and exact parameter gradient of a scalar loss.

    ``build_loss`` receives a :class:`ParamVars` and must return a scalar
    :class:`Var` assembled from its jets.
    """
    pv = ParamVars(params)
    out = build_loss(pv)
    out.backward()
    gw, gb = pv.collect_grads()
    return float(out.value), (gw, gb)


# ---------------------------------------------------------------------------
# ADAM

@dataclass(frozen=True)
class AdamState:
    step: int
    m_w: tuple
    v_w: tuple
    m_b: tuple
    v_b: tuple
    eta: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: NetworkParams, eta: float) -> AdamState:
    return AdamState(step=0,
                     m_w=tuple(np.zeros_like(w) for w in params.weights),
                     v_w=tuple(np.zeros_like(w) for w in params.weights),
                     m_b=tuple(np.zeros_like(b) for b in params.biases),
                     v_b=tuple(np.zeros_like(b) for b in params.biases),
                     eta=eta)


def adam_step(state: AdamState, params: NetworkParams, grads):
    """One ADAM update; returns (new_params, new_state)."""
    gw, gb = grads
    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t

    def upd(m, v, p, g):
        m2 = state.beta1 * m + (1.0 - state.beta1) * g
        v2 = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        p2 = p - state.eta * (m2 / c1) / (np.sqrt(v2 / c2) + state.eps)
        return m2, v2, p2

    mw, vw, ws = [], [], []
    for m, v, p, g in zip(state.m_w, state.v_w, params.weights, gw):
        m2, v2, p2 = upd(m, v, p, g)
        mw.append(m2); vw.append(v2); ws.append(p2)
    mb, vb, bs = [], [], []
    for m, v, p, g in zip(state.m_b, state.v_b, params.biases, gb):
        m2, v2, p2 = upd(m, v, p, g)
        mb.append(m2); vb.append(v2); bs.append(p2)
    new_params = NetworkParams(params.architecture, tuple(ws), tuple(bs),
                               params.activation)
    new_state = AdamState(step=t, m_w=tuple(mw), v_w=tuple(vw),
                          m_b=tuple(mb), v_b=tuple(vb), eta=state.eta,
                          beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_params, new_state
