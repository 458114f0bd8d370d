"""Layer graph for compiled networks, the forward pass, and weight documents."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .linalg import IDENTITY, RELU, SATLIN, Activation, DimensionError, activate, softmax

FORMAT_NAME = "neuraltm-weights"
FORMAT_VERSION = 1
HARD_GAIN = 9999.0


class WidthMismatchError(DimensionError):
    code = "width-mismatch"


class DocumentError(ValueError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(eq=False)
class LinearLayer:
    W: np.ndarray
    b: np.ndarray
    activation: Activation = field(default_factory=lambda: Activation(RELU))
    tag: str = ""

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.activation.kind not in (RELU, SATLIN, IDENTITY):
            raise ValueError("linear layers take relu, satlin or identity")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError(f"W {self.W.shape} does not match b {self.b.shape}")

    @property
    def d_in(self):
        return self.W.shape[1]

    @property
    def d_out(self):
        return self.W.shape[0]

    def __call__(self, x):
        return activate(self.activation, self.W @ x + self.b)


@dataclass(eq=False)
class AttentionLayer:
    """Single-query attention with an always-present null row.

    Scores are ``q . k_i`` with ``q = wq x + bq`` and ``k_i = wk m_i + bk``;
    the null row contributes the fixed key ``null_key`` and value
    ``null_value``.  The attended value ``a`` is merged as
    ``act(merge_w [x; a] + merge_b)``.
    """

    kind: str  # "self" reads decoder history, "cross" reads the encoder
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    null_key: np.ndarray
    null_value: np.ndarray
    merge_w: np.ndarray
    merge_b: np.ndarray
    gain: float = HARD_GAIN
    merge_activation: Activation = field(default_factory=lambda: Activation(IDENTITY))
    tag: str = ""

    def __post_init__(self):
        for name in ("wq", "bq", "wk", "bk", "wv", "bv", "null_key", "null_value",
                     "merge_w", "merge_b"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.kind not in ("self", "cross"):
            raise ValueError(f"attention kind must be self or cross, not {self.kind!r}")
        score_dim = self.wq.shape[0]
        if self.wk.shape[0] != score_dim or self.null_key.shape != (score_dim,):
            raise DimensionError("query, key and null key must share the score dimension")
        if self.wv.shape[0] != self.null_value.shape[0]:
            raise DimensionError("value projection and null value widths differ")
        if self.merge_w.shape[1] != self.wq.shape[1] + self.wv.shape[0]:
            raise DimensionError("merge must read [input; attended value]")

    @property
    def d_in(self):
        return self.wq.shape[1]

    @property
    def d_out(self):
        return self.merge_w.shape[0]

    @property
    def memory_width(self):
        return self.wk.shape[1]


Layer = Union[LinearLayer, AttentionLayer]


def attend(layer: AttentionLayer, query_vec, memory) -> np.ndarray:
    q = layer.wq @ query_vec + layer.bq
    memory = np.asarray(memory, dtype=np.float64).reshape(-1, layer.memory_width)
    keys = memory @ layer.wk.T + layer.bk
    values = memory @ layer.wv.T + layer.bv
    scores = np.append(keys @ q, layer.null_key @ q)
    weights = softmax(scores, layer.gain)
    return weights[:-1] @ values + weights[-1] * layer.null_value


@dataclass(eq=False)
class Network:
    layers: list
    tap: int | None = None  # the input of layers[tap] is reported by forward_step
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for i in range(1, len(self.layers)):
            if self.layers[i - 1].d_out != self.layers[i].d_in:
                raise WidthMismatchError(
                    f"layer {i - 1} emits width {self.layers[i - 1].d_out}, "
                    f"layer {i} expects {self.layers[i].d_in}"
                )

    @property
    def d_in(self):
        return self.layers[0].d_in

    @property
    def d_out(self):
        return self.layers[-1].d_out

    def widths(self):
        return [self.d_in] + [layer.d_out for layer in self.layers]


def iter_layers(net: Network, state, history=None, encoder=None):
    """Yield ``(index, layer, input, output)`` for one pass through ``net``."""
    x = np.asarray(state, dtype=np.float64)
    if x.shape != (net.d_in,):
        raise WidthMismatchError(f"state has shape {x.shape}, network expects ({net.d_in},)")
    for i, layer in enumerate(net.layers):
        if isinstance(layer, LinearLayer):
            y = layer(x)
        else:
            memory = history if layer.kind == "self" else encoder
            if memory is None:
                memory = np.zeros((0, layer.memory_width))
            a = attend(layer, x, memory)
            y = activate(layer.merge_activation,
                         layer.merge_w @ np.concatenate([x, a]) + layer.merge_b)
        yield i, layer, x, y
        x = y


def forward_step(net: Network, state, history=None, encoder=None, return_tap=False):
    tapped = None
    y = np.asarray(state, dtype=np.float64)
    for i, _, x, y in iter_layers(net, state, history, encoder):
        if i == net.tap:
            tapped = x
    return (y, tapped) if return_tap else y


# --------------------------------------------------------------------------
# weight documents
# --------------------------------------------------------------------------


def _pack(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": " ".join(format(v, ".17g") for v in a.ravel())}


def _unpack(d) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in d["shape"])
        values = [float(tok) for tok in d["data"].split()]
        return np.array(values, dtype=np.float64).reshape(shape)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise DocumentError("malformed-document", f"bad array: {e}") from None


_ATTN_ARRAYS = ("wq", "bq", "wk", "bk", "wv", "bv", "null_key", "null_value",
                "merge_w", "merge_b")


def to_document(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, LinearLayer):
            layers.append({
                "kind": "linear",
                "tag": layer.tag,
                "activation": layer.activation.kind,
                "dims": [layer.d_in, layer.d_out],
                "W": _pack(layer.W),
                "b": _pack(layer.b),
            })
        else:
            entry = {
                "kind": "attention",
                "tag": layer.tag,
                "source": layer.kind,
                "gain": format(layer.gain, ".17g"),
                "merge_activation": layer.merge_activation.kind,
                "dims": [layer.d_in, layer.d_out],
            }
            entry.update({name: _pack(getattr(layer, name)) for name in _ATTN_ARRAYS})
            layers.append(entry)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "machine_hash": net.meta.get("machine_hash"),
        "meta": net.meta,
        "tap": net.tap,
        "layers": layers,
    }


def from_document(doc) -> Network:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise DocumentError("malformed-document", "not a weight document")
    if doc.get("version") != FORMAT_VERSION:
        raise DocumentError(
            "version-mismatch", f"version {doc.get('version')!r}, expected {FORMAT_VERSION}"
        )
    layers = []
    try:
        for i, entry in enumerate(doc["layers"]):
            kind = entry.get("kind")
            if kind == "linear":
                layers.append(LinearLayer(_unpack(entry["W"]), _unpack(entry["b"]),
                                          Activation(entry["activation"]), entry.get("tag", "")))
            elif kind == "attention":
                arrays = {name: _unpack(entry[name]) for name in _ATTN_ARRAYS}
                layers.append(AttentionLayer(
                    kind=entry["source"], gain=float(entry["gain"]),
                    merge_activation=Activation(entry["merge_activation"]),
                    tag=entry.get("tag", ""), **arrays))
            else:
                raise DocumentError("malformed-document", f"layer {i}: unknown kind {kind!r}")
        return Network(layers, doc.get("tap"), dict(doc.get("meta") or {}))
    except DocumentError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise DocumentError("malformed-document", f"{type(e).__name__}: {e}") from None


def serialize(net: Network) -> str:
    return json.dumps(to_document(net), indent=1)


def deserialize(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError("malformed-document", str(e)) from None
    return from_document(doc)


def _arrays(layer):
    if isinstance(layer, LinearLayer):
        return [layer.W, layer.b]
    return [getattr(layer, name) for name in _ATTN_ARRAYS]


def same_weights(a: Network, b: Network) -> bool:
    """Bitwise equality of every weight, bias and layer setting."""
    if len(a.layers) != len(b.layers) or a.tap != b.tap:
        return False
    for la, lb in zip(a.layers, b.layers):
        if type(la) is not type(lb) or la.tag != lb.tag:
            return False
        if isinstance(la, LinearLayer):
            if la.activation != lb.activation:
                return False
        elif (la.kind, la.gain, la.merge_activation) != (lb.kind, lb.gain, lb.merge_activation):
            return False
        for x, y in zip(_arrays(la), _arrays(lb)):
            if x.shape != y.shape or x.tobytes() != y.tobytes():
                return False
    return True
