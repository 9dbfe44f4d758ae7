"""Small fully connected Q-networks with hand-written backprop.

Two heads are supported. The plain head is a single linear readout of the
trunk. The dueling head has a value stream V(s) and an advantage stream
A(s, a), combined as

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')

Weights are stored ``(fan_in, fan_out)`` so a layer computes ``x @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")
HEAD_KINDS = ("plain", "dueling")

MAGIC = b"TRLQ"
FORMAT_VERSION = 1
_HEAD_CODE = {"plain": 0, "dueling": 1}
_ACT_CODE = {"relu": 0, "identity": 1}


class NetworkError(ValueError):
    """Invalid network construction."""


class NetworkUsageError(ValueError):
    """Input does not fit the network."""


class ModelFormatError(ValueError):
    """A model byte stream could not be decoded."""


class HeadKindError(ModelFormatError):
    """The stored head kind is not the one the caller asked for."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if int(self.input_dim) < 1 or int(self.output_dim) < 1:
            raise NetworkError(f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise NetworkError(f"unknown activation {self.activation!r}")


def _chain_ok(specs: Sequence[LayerSpec], start: int) -> int:
    d = start
    for k, sp in enumerate(specs):
        if sp.input_dim != d:
            raise NetworkError(f"layer {k} expects input {sp.input_dim}, previous output is {d}")
        d = sp.output_dim
    return d


@dataclass(frozen=True)
class NetworkSpec:
    """Topology: shared trunk, then either one readout (plain) or two streams (dueling).

    For the plain head ``advantage`` holds the readout and ``value`` is empty.
    """

    trunk: tuple[LayerSpec, ...]
    advantage: tuple[LayerSpec, ...]
    value: tuple[LayerSpec, ...] = ()
    head: str = "dueling"

    def __post_init__(self):
        if self.head not in HEAD_KINDS:
            raise NetworkError(f"unknown head kind {self.head!r}")
        if not self.trunk or not self.advantage:
            raise NetworkError("trunk and output stream must be non-empty")
        d = _chain_ok(self.trunk, self.trunk[0].input_dim)
        _chain_ok(self.advantage, d)
        if self.head == "plain":
            if self.value:
                raise NetworkError("plain head has no value stream")
        else:
            if not self.value:
                raise NetworkError("dueling head needs a value stream")
            if _chain_ok(self.value, d) != 1:
                raise NetworkError("value stream must end in a single output")

    @property
    def input_dim(self) -> int:
        return self.trunk[0].input_dim

    @property
    def n_actions(self) -> int:
        return self.advantage[-1].output_dim

    @classmethod
    def standard(cls, input_dim: int, n_actions: int, head: str = "dueling",
                 hidden: Sequence[int] = (128, 128), stream_hidden: Sequence[int] = (64,)) -> "NetworkSpec":
        dims = [input_dim, *hidden]
        trunk = tuple(LayerSpec(a, b, "relu") for a, b in zip(dims[:-1], dims[1:]))
        top = dims[-1]
        if head == "plain":
            return cls(trunk, (LayerSpec(top, n_actions, "identity"),), (), "plain")

        def stream(out):
            d = [top, *stream_hidden]
            layers = [LayerSpec(a, b, "relu") for a, b in zip(d[:-1], d[1:])]
            return tuple(layers + [LayerSpec(d[-1], out, "identity")])

        return cls(trunk, stream(n_actions), stream(1), "dueling")


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.W.shape[0], self.W.shape[1], self.activation)


@dataclass
class NetworkParams:
    """Parameters (or a congruent set of gradients)."""

    trunk: list[Layer]
    advantage: list[Layer]
    value: list[Layer] = field(default_factory=list)
    head: str = "dueling"

    @property
    def spec(self) -> NetworkSpec:
        return NetworkSpec(
            tuple(l.spec for l in self.trunk), tuple(l.spec for l in self.advantage),
            tuple(l.spec for l in self.value), self.head,
        )

    @property
    def input_dim(self) -> int:
        return self.trunk[0].W.shape[0]

    @property
    def n_actions(self) -> int:
        return self.advantage[-1].W.shape[1]

    def layers(self) -> Iterator[Layer]:
        """Trunk, then value stream, then advantage stream (the file order)."""
        yield from self.trunk
        yield from self.value
        yield from self.advantage

    def arrays(self) -> Iterator[np.ndarray]:
        for l in self.layers():
            yield l.W
            yield l.b

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "NetworkParams":
        cp = lambda ls: [Layer(l.W.copy(), l.b.copy(), l.activation) for l in ls]
        return NetworkParams(cp(self.trunk), cp(self.advantage), cp(self.value), self.head)

    def zeros_like(self) -> "NetworkParams":
        z = lambda ls: [Layer(np.zeros_like(l.W), np.zeros_like(l.b), l.activation) for l in ls]
        return NetworkParams(z(self.trunk), z(self.advantage), z(self.value), self.head)

    def equals(self, other: "NetworkParams") -> bool:
        if self.head != other.head or self.spec != other.spec:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


Gradients = NetworkParams


def init(spec: NetworkSpec, seed: int = 0) -> NetworkParams:
    """Xavier-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)

    def build(specs):
        out = []
        for sp in specs:
            lim = np.sqrt(6.0 / (sp.input_dim + sp.output_dim))
            W = rng.uniform(-lim, lim, size=(sp.input_dim, sp.output_dim))
            out.append(Layer(W, np.zeros(sp.output_dim), sp.activation))
        return out

    trunk = build(spec.trunk)
    value = build(spec.value)
    advantage = build(spec.advantage)
    return NetworkParams(trunk, advantage, value, spec.head)


# ---------------------------------------------------------------- forward

def _run(layers, h, cache=None):
    for l in layers:
        z = h @ l.W + l.b
        if cache is not None:
            cache.append((h, z))
        h = np.maximum(z, 0.0) if l.activation == "relu" else z
    return h


def _check_input(params, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.input_dim or x.ndim not in (1, 2):
        raise NetworkUsageError(f"expected input of length {params.input_dim}, got shape {x.shape}")
    return x


def forward_parts(params: NetworkParams, x) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """(Q, V, raw A); V is None for the plain head. Accepts one input or a batch."""
    x = _check_input(params, x)
    h = _run(params.trunk, x)
    a = _run(params.advantage, h)
    if params.head == "plain":
        return a, None, a
    v = _run(params.value, h)
    q = v + (a - a.mean(axis=-1, keepdims=True))
    return q, v[..., 0], a


def forward(params: NetworkParams, x) -> np.ndarray:
    return forward_parts(params, x)[0]


def greedy_action(params: NetworkParams, x) -> int:
    return int(np.argmax(forward(params, x)))


# --------------------------------------------------------------- backward

def _back(layers, cache, g, grads):
    for l, (h_in, z), gl in zip(reversed(layers), reversed(cache), reversed(grads)):
        if l.activation == "relu":
            g = g * (z > 0)
        gl.W += h_in.T @ g
        gl.b += g.sum(axis=0)
        g = g @ l.W.T
    return g


def backward_batch(params: NetworkParams, X, actions, targets) -> tuple[float, Gradients]:
    """Mean of (y - Q(s, a))^2 over the batch and its exact gradient."""
    X = _check_input(params, np.atleast_2d(X))
    actions = np.asarray(actions, dtype=int).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n = X.shape[0]
    rows = np.arange(n)
    tc, ac, vc = [], [], []
    h = _run(params.trunk, X, tc)
    a = _run(params.advantage, h, ac)
    if params.head == "dueling":
        v = _run(params.value, h, vc)
        q = v + a - a.mean(axis=1, keepdims=True)
    else:
        q = a
    err = targets - q[rows, actions]
    loss = float(np.mean(err ** 2))

    grads = params.zeros_like()
    gq = np.zeros_like(q)
    gq[rows, actions] = -2.0 * err / n
    if params.head == "dueling":
        # d mean(A) / d A_k = 1/|A|, so every advantage gets -g/|A|
        ga = gq - gq.sum(axis=1, keepdims=True) / q.shape[1]
        gv = gq.sum(axis=1, keepdims=True)
        gh = _back(params.advantage, ac, ga, grads.advantage)
        gh = gh + _back(params.value, vc, gv, grads.value)
    else:
        gh = _back(params.advantage, ac, gq, grads.advantage)
    _back(params.trunk, tc, gh, grads.trunk)
    return loss, grads


def backward(params: NetworkParams, x, action_index: int, td_target: float) -> tuple[float, Gradients]:
    """Single-sample squared TD error and its gradient."""
    x = _check_input(params, x)
    if x.ndim != 1:
        raise NetworkUsageError("backward takes a single input; use backward_batch")
    return backward_batch(params, x[None, :], [action_index], [td_target])


def sgd_update(params: NetworkParams, grads: Gradients, learning_rate: float) -> NetworkParams:
    """Return ``params - learning_rate * grads`` as a new parameter set."""
    if params.spec != grads.spec:
        raise NetworkError("gradients do not match the network shape")
    out = params.copy()
    for p, g in zip(out.arrays(), grads.arrays()):
        p -= learning_rate * g
    return out


def sgd_update_(params: NetworkParams, grads: Gradients, learning_rate: float) -> None:
    """In-place variant used by the training loop."""
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= learning_rate * g


# ---------------------------------------------------------- serialization
# header: magic, u16 version, u8 head, u16 counts (trunk, value, advantage),
# then per layer u32 fan_in, u32 fan_out, u8 activation; then f64 LE data.

def serialize(params: NetworkParams) -> bytes:
    out = [MAGIC, struct.pack("<HB", FORMAT_VERSION, _HEAD_CODE[params.head])]
    out.append(struct.pack("<HHH", len(params.trunk), len(params.value), len(params.advantage)))
    for l in params.layers():
        out.append(struct.pack("<IIB", l.W.shape[0], l.W.shape[1], _ACT_CODE[l.activation]))
    for l in params.layers():
        out.append(np.ascontiguousarray(l.W, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(l.b, dtype="<f8").tobytes())
    return b"".join(out)


def deserialize(data: bytes, expected_head: str | None = None) -> NetworkParams:
    data = bytes(data)
    try:
        if data[:4] != MAGIC:
            raise ModelFormatError("bad magic: not a model file")
        version, head_code = struct.unpack_from("<HB", data, 4)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model version {version}")
        heads = {v: k for k, v in _HEAD_CODE.items()}
        if head_code not in heads:
            raise ModelFormatError(f"unknown head kind code {head_code}")
        head = heads[head_code]
        if expected_head is not None and head != expected_head:
            raise HeadKindError(f"model has a {head} head, expected {expected_head}")
        counts = struct.unpack_from("<HHH", data, 7)
        off = 13
        acts = {v: k for k, v in _ACT_CODE.items()}
        specs = []
        for _ in range(sum(counts)):
            fi, fo, ac = struct.unpack_from("<IIB", data, off)
            off += 9
            if ac not in acts:
                raise ModelFormatError(f"unknown activation code {ac}")
            specs.append(LayerSpec(fi, fo, acts[ac]))
    except struct.error as exc:
        raise ModelFormatError(f"truncated model header: {exc}") from None
    except NetworkError as exc:
        raise ModelFormatError(f"inconsistent layer dims: {exc}") from None
    nt, nv, na = counts
    try:
        NetworkSpec(tuple(specs[:nt]), tuple(specs[nt + nv:]), tuple(specs[nt:nt + nv]), head)
    except NetworkError as exc:
        raise ModelFormatError(f"inconsistent layer dims: {exc}") from None
    need = off + 8 * sum(s.input_dim * s.output_dim + s.output_dim for s in specs)
    if len(data) != need:
        raise ModelFormatError(f"model payload has {len(data)} bytes, expected {need}")
    layers = []
    for sp in specs:
        nW = sp.input_dim * sp.output_dim
        W = np.frombuffer(data, "<f8", nW, off).reshape(sp.input_dim, sp.output_dim).astype(float)
        off += 8 * nW
        b = np.frombuffer(data, "<f8", sp.output_dim, off).astype(float)
        off += 8 * sp.output_dim
        layers.append(Layer(W, b, sp.activation))
    params = NetworkParams(layers[:nt], layers[nt + nv:], layers[nt:nt + nv], head)
    if not all(np.all(np.isfinite(a)) for a in params.arrays()):
        raise ModelFormatError("model contains non-finite parameters")
    return params


def save(params: NetworkParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(params))


def load(path, expected_head: str | None = None) -> NetworkParams:
    with open(path, "rb") as fh:
        return deserialize(fh.read(), expected_head)
