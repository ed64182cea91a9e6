"""Dense two-headed network core: parameters, forward/backward, freezing,
checkpoints.

Architecture: a shared encoder (ReLU after every layer) feeding two outcome
heads (ReLU on hidden layers, linear scalar output).  Layers are stored in
freeze order: encoder layers first, then the two heads' layers interleaved
level by level (head0 level 0, head1 level 0, head0 level 1, ...), so that
"freeze the first k layers" freezes both heads symmetrically.
"""

from dataclasses import dataclass

import json

import numpy as np

from .backend import forward_stack, backward_stack
from .errors import CheckpointError, InvalidSpecError

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    encoder_widths: tuple
    head_widths: tuple

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if self.input_dim < 1:
            raise InvalidSpecError(f"input_dim must be >= 1, got {self.input_dim}")
        if len(self.encoder_widths) < 1:
            raise InvalidSpecError("encoder needs at least one layer")
        for w in self.encoder_widths + self.head_widths:
            if w < 1:
                raise InvalidSpecError(f"zero-width layer in spec {self}")

    @property
    def n_encoder_layers(self):
        return len(self.encoder_widths)

    @property
    def n_head_levels(self):
        # hidden head layers plus the scalar output layer
        return len(self.head_widths) + 1

    @property
    def n_layers(self):
        """Total stored layers: encoder plus both heads."""
        return self.n_encoder_layers + 2 * self.n_head_levels

    @property
    def phi_dim(self):
        return self.encoder_widths[-1]

    def layer_dims(self):
        """(fan_in, fan_out) per stored layer, in storage order."""
        dims = []
        prev = self.input_dim
        for w in self.encoder_widths:
            dims.append((prev, w))
            prev = w
        head_outs = list(self.head_widths) + [1]
        h_prev = prev
        for w in head_outs:
            dims.append((h_prev, w))  # head0
            dims.append((h_prev, w))  # head1
            h_prev = w
        return dims

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "encoder_widths": list(self.encoder_widths),
            "head_widths": list(self.head_widths),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["input_dim"], tuple(d["encoder_widths"]), tuple(d["head_widths"]))


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    frozen: bool = False


@dataclass
class ParameterStore:
    spec: NetworkSpec
    layers: list
    rng_seed: int

    def copy(self):
        return ParameterStore(
            self.spec,
            [Layer(l.W.copy(), l.b.copy(), l.frozen) for l in self.layers],
            self.rng_seed,
        )

    def head_layer_index(self, head, level):
        return self.spec.n_encoder_layers + 2 * level + head

    def encoder_layers(self):
        return self.layers[: self.spec.n_encoder_layers]

    def head_layers(self, head):
        E = self.spec.n_encoder_layers
        return [self.layers[E + 2 * lvl + head] for lvl in range(self.spec.n_head_levels)]


def parameter_count(spec):
    """Number of trainable scalars: sum of fan_in*fan_out + fan_out per layer."""
    return sum(fi * fo + fo for fi, fo in spec.layer_dims())


def init_network(spec, seed):
    """Glorot-uniform weights (scale sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in spec.layer_dims():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(Layer(W, np.zeros(fan_out)))
    return ParameterStore(spec, layers, int(seed))


def _as_batch(x, input_dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != input_dim:
        raise InvalidSpecError(f"input has {x.shape[1]} features, expected {input_dim}")
    return np.ascontiguousarray(x), single


@dataclass
class Activations:
    encoder: list  # encoder[0] = input batch
    head0: list
    head1: list
    single: bool = False

    @property
    def phi(self):
        return self.encoder[-1]

    @property
    def y0(self):
        return self.head0[-1][:, 0]

    @property
    def y1(self):
        return self.head1[-1][:, 0]


def forward(store, x):
    """Evaluate encoder and both heads, keeping every intermediate activation.

    x may be one row or a batch; hidden layers use ReLU, each head's final
    layer is linear.
    """
    spec = store.spec
    X, single = _as_batch(x, spec.input_dim)
    enc = store.encoder_layers()
    enc_acts = forward_stack(X, [l.W for l in enc], [l.b for l in enc], len(enc))
    phi = enc_acts[-1]
    h_acts = []
    n_hidden = len(spec.head_widths)
    for head in (0, 1):
        hl = store.head_layers(head)
        h_acts.append(forward_stack(phi, [l.W for l in hl], [l.b for l in hl], n_hidden))
    return Activations(enc_acts, h_acts[0], h_acts[1], single)


def backward(store, acts, d_y0, d_y1, d_phi_extra=None):
    """Gradients of a scalar loss w.r.t. every parameter.

    d_y0, d_y1: per-row gradients of the loss w.r.t. the two head outputs
    (scalars broadcast).  d_phi_extra: optional extra gradient arriving
    directly at the representation (used for IPM penalty terms).  Returns a
    list of (gW, gb) aligned with store.layers; frozen layers get zeros.
    """
    spec = store.spec
    n = acts.encoder[0].shape[0]
    d_y0 = np.broadcast_to(np.asarray(d_y0, dtype=np.float64).reshape(-1, 1), (n, 1)).copy()
    d_y1 = np.broadcast_to(np.asarray(d_y1, dtype=np.float64).reshape(-1, 1), (n, 1)).copy()
    n_hidden = len(spec.head_widths)

    d_phi = np.zeros_like(acts.phi)
    head_grads = []
    for head, (h_acts, dy) in enumerate(((acts.head0, d_y0), (acts.head1, d_y1))):
        hl = store.head_layers(head)
        dph, gws, gbs = backward_stack(h_acts, [l.W for l in hl], n_hidden,
                                       np.ascontiguousarray(dy))
        d_phi = d_phi + dph
        head_grads.append(list(zip(gws, gbs)))
    if d_phi_extra is not None:
        d_phi = d_phi + d_phi_extra

    enc = store.encoder_layers()
    _, gws, gbs = backward_stack(acts.encoder, [l.W for l in enc], len(enc),
                                 np.ascontiguousarray(d_phi))
    # assemble in storage order (encoder, then interleaved head levels)
    ordered = list(zip(gws, gbs))
    for lvl in range(spec.n_head_levels):
        ordered.append(head_grads[0][lvl])
        ordered.append(head_grads[1][lvl])
    out = []
    for layer, (gW, gb) in zip(store.layers, ordered):
        if layer.frozen:
            out.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
        else:
            out.append((gW, gb))
    return out


def freeze_layers(store, depth):
    """Mark the first `depth` layers (storage order: encoder first, then
    interleaved head levels) as frozen; the rest trainable."""
    if not 0 <= depth <= len(store.layers):
        raise InvalidSpecError(f"freeze depth {depth} out of range 0..{len(store.layers)}")
    new = store.copy()
    for i, layer in enumerate(new.layers):
        layer.frozen = i < depth
    return new


def frozen_parameter_count(store):
    return sum(l.W.size + l.b.size for l in store.layers if l.frozen)


def save_checkpoint(store, spec, path):
    """Self-describing UTF-8 JSON checkpoint; decimal floats round-trip
    bit-exactly (shortest-repr encoding)."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "spec": spec.to_dict(),
        "rng_seed": store.rng_seed,
        "layers": [
            {
                "weights": [[float(w) for w in row] for row in layer.W],
                "bias": [float(b) for b in layer.b],
                "frozen": bool(layer.frozen),
            }
            for layer in store.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    """Load a checkpoint; returns (store, spec).  Raises CheckpointError on
    corruption, version mismatch, or shape inconsistency."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {doc.get('format_version')!r} in {path}")
    try:
        spec = NetworkSpec.from_dict(doc["spec"])
        layers = []
        for entry in doc["layers"]:
            W = np.array(entry["weights"], dtype=np.float64)
            b = np.array(entry["bias"], dtype=np.float64)
            layers.append(Layer(W, b, bool(entry["frozen"])))
        store = ParameterStore(spec, layers, int(doc["rng_seed"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
    dims = spec.layer_dims()
    if len(layers) != len(dims):
        raise CheckpointError(f"checkpoint {path} has {len(layers)} layers, spec needs {len(dims)}")
    for layer, (fi, fo) in zip(layers, dims):
        if layer.W.shape != (fi, fo) or layer.b.shape != (fo,):
            raise CheckpointError(f"layer shape mismatch in {path}: "
                                  f"{layer.W.shape} vs expected {(fi, fo)}")
    return store, spec
