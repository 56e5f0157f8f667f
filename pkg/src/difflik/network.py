"""Feed-forward conditional regression network with hand-written backprop.

The network maps (x, time features, condition vector) -> a vector the size
of x. Gradients are computed by reverse accumulation over the cached
forward pass: one backward sweep propagates output cotangents either to the
input block only (for vector-Jacobian products against x) or all the way to
every weight, bias, and class-embedding row (for training).

Time enters through 8 sinusoidal features sin(2^i pi t), cos(2^i pi t) for
i = 0..3. Conditions enter as a fixed-width vector: zeros for the
unconditional token, a learned per-class row for class labels, the raw
vector for embeddings, and the flattened grid for grid means.

Parameter container file format (``save_params``/``load_params``)::

    bytes 0..3    magic b"DLKP"
    bytes 4..7    header length H, uint32 little-endian
    bytes 8..8+H  UTF-8 JSON header: format_version, layer_sizes,
                  activation, data_dim, cond_dim, time_dim, num_classes,
                  plus an arbitrary "meta" object (schedule constants etc.)
    remainder     float64 little-endian arrays, concatenated in order
                  W0, b0, W1, b1, ..., class_embed (row-major)
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .conditions import Condition
from .errors import ConfigurationError, ContractError

_MAGIC = b"DLKP"
FORMAT_VERSION = 1

TIME_DIM = 8


def _tanh(z):
    return np.tanh(z)


def _dtanh(z):
    c = np.cosh(z)
    return 1.0 / (c * c)


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s


def _dsilu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


ACTIVATIONS = {"tanh": (_tanh, _dtanh), "silu": (_silu, _dsilu)}


@dataclass
class NetworkParams:
    """Weights (out, in), biases (out,), and optional class embedding (K, cond_dim)."""

    weights: list
    biases: list
    class_embed: np.ndarray | None
    activation: str
    data_dim: int
    cond_dim: int
    time_dim: int = TIME_DIM

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"unknown activation {self.activation!r}; expected one of {tuple(ACTIVATIONS)}"
            )
        in_dim = self.data_dim + self.time_dim + self.cond_dim
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[1] != in_dim:
                raise ConfigurationError(
                    f"layer {i}: expected input width {in_dim}, got {W.shape[1]}"
                )
            if b.shape != (W.shape[0],):
                raise ConfigurationError(f"layer {i}: bias shape {b.shape} != ({W.shape[0]},)")
            in_dim = W.shape[0]
        if in_dim != self.data_dim:
            raise ConfigurationError(f"output width {in_dim} != data_dim {self.data_dim}")
        if not all(np.all(np.isfinite(W)) for W in self.weights) or not all(
            np.all(np.isfinite(b)) for b in self.biases
        ):
            raise ConfigurationError("non-finite parameter values")

    @property
    def input_dim(self) -> int:
        return self.data_dim + self.time_dim + self.cond_dim

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            class_embed=None if self.class_embed is None else self.class_embed.copy(),
            activation=self.activation,
            data_dim=self.data_dim,
            cond_dim=self.cond_dim,
            time_dim=self.time_dim,
        )

    def arrays(self):
        """All trainable arrays in a fixed order (weights, biases, embedding)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        if self.class_embed is not None:
            out.append(self.class_embed)
        return out


def init_params(
    data_dim: int,
    hidden: tuple,
    cond_dim: int,
    rng: np.random.Generator,
    num_classes: int | None = None,
    activation: str = "tanh",
) -> NetworkParams:
    """Gaussian fan-in initialisation; biases start at zero."""
    widths = [data_dim + TIME_DIM + cond_dim, *hidden, data_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    embed = None
    if num_classes is not None:
        if cond_dim == 0:
            raise ConfigurationError("class conditioning needs cond_dim > 0")
        embed = 0.1 * rng.standard_normal((num_classes, cond_dim))
    return NetworkParams(weights, biases, embed, activation, data_dim, cond_dim)


def time_features(t):
    """8 sinusoidal features of t; t scalar -> (8,), t (n,) -> (n, 8)."""
    t = np.asarray(t, dtype=float)
    freqs = np.pi * (2.0 ** np.arange(4))
    angles = t[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def condition_vector(params: NetworkParams, c: Condition) -> np.ndarray:
    """Fixed-width conditioning vector for a single condition."""
    if c.is_null:
        return np.zeros(params.cond_dim)
    if c.kind == "class":
        if params.class_embed is None:
            raise ContractError("network has no class embedding table")
        if not 0 <= c.label < params.class_embed.shape[0]:
            raise ContractError(
                f"class label {c.label} out of range [0, {params.class_embed.shape[0]})"
            )
        return params.class_embed[c.label]
    vec = c.vector.ravel()
    if vec.size != params.cond_dim:
        raise ContractError(f"condition dim {vec.size} != network cond_dim {params.cond_dim}")
    return np.asarray(vec, dtype=float)


def _assemble_input(params, x, t, cond_vec):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if x.shape[1] != params.data_dim:
        raise ContractError(f"x has dim {x.shape[1]}, network expects {params.data_dim}")
    tf = time_features(np.broadcast_to(np.asarray(t, dtype=float), (n,)))
    cv = np.broadcast_to(np.atleast_2d(cond_vec), (n, params.cond_dim))
    return np.concatenate([x, tf, cv], axis=1)


def forward(params: NetworkParams, x, t, cond_vec):
    """Network output; x (d,) -> (d,), x (n, d) -> (n, d)."""
    single = np.asarray(x).ndim == 1
    out, _ = forward_cached(params, x, t, cond_vec)
    return out[0] if single else out


def forward_cached(params: NetworkParams, x, t, cond_vec):
    """Forward pass keeping pre-activations and layer inputs for backprop."""
    act, _ = ACTIVATIONS[params.activation]
    h = _assemble_input(params, x, t, cond_vec)
    inputs, preacts = [h], []
    n_layers = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W.T + b
        preacts.append(z)
        h = z if i == n_layers - 1 else act(z)
        inputs.append(h)
    return h, (inputs, preacts)


@dataclass
class ParamGrads:
    weights: list
    biases: list
    class_embed: np.ndarray | None

    def arrays(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        if self.class_embed is not None:
            out.append(self.class_embed)
        return out


def backward_input(params: NetworkParams, cache, cotangent) -> np.ndarray:
    """Propagate output cotangents to the x block of the input.

    ``cotangent`` may carry several rows (k, data_dim) against a cache built
    from a single input row; cached activations broadcast across the k rows,
    which is what makes multi-probe vector-Jacobian products one sweep.
    """
    inputs, preacts = cache
    _, dact = ACTIVATIONS[params.activation]
    g = np.atleast_2d(np.asarray(cotangent, dtype=float))
    n_layers = len(params.weights)
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            g = g * dact(preacts[i])
        g = g @ params.weights[i]
    return g[..., : params.data_dim]


def backward_params(params: NetworkParams, cache, cotangent, embed_indices=None) -> ParamGrads:
    """Accumulate cotangents into gradients for every trainable array.

    ``embed_indices`` gives, per batch row, the class-embedding row the
    condition vector came from (-1 for rows that used a non-embedded
    condition); required to route gradients into the embedding table.
    """
    inputs, preacts = cache
    _, dact = ACTIVATIONS[params.activation]
    g = np.atleast_2d(np.asarray(cotangent, dtype=float))
    n_layers = len(params.weights)
    w_grads = [None] * n_layers
    b_grads = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            g = g * dact(preacts[i])
        w_grads[i] = g.T @ inputs[i]
        b_grads[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    embed_grad = None
    if params.class_embed is not None:
        embed_grad = np.zeros_like(params.class_embed)
        if embed_indices is not None:
            idx = np.asarray(embed_indices)
            used = idx >= 0
            if np.any(used):
                cond_cot = g[:, params.data_dim + params.time_dim :]
                np.add.at(embed_grad, idx[used], cond_cot[used])
    return ParamGrads(w_grads, b_grads, embed_grad)


def save_params(params: NetworkParams, path, meta: dict | None = None):
    """Write the binary parameter container described in the module docstring."""
    header = {
        "format_version": FORMAT_VERSION,
        "layer_sizes": [list(W.shape) for W in params.weights],
        "activation": params.activation,
        "data_dim": params.data_dim,
        "cond_dim": params.cond_dim,
        "time_dim": params.time_dim,
        "num_classes": None if params.class_embed is None else int(params.class_embed.shape[0]),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path):
    """Read a parameter container; returns (NetworkParams, meta dict)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ConfigurationError(f"{path}: not a parameter container")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported format version {header['format_version']}")
        payload = fh.read()

    offset = 0

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return arr.reshape(shape).astype(float)

    weights, biases = [], []
    for out_w, in_w in header["layer_sizes"]:
        weights.append(take((out_w, in_w)))
        biases.append(take((out_w,)))
    embed = None
    if header["num_classes"] is not None:
        embed = take((header["num_classes"], header["cond_dim"]))
    params = NetworkParams(
        weights=weights,
        biases=biases,
        class_embed=embed,
        activation=header["activation"],
        data_dim=header["data_dim"],
        cond_dim=header["cond_dim"],
        time_dim=header["time_dim"],
    )
    return params, header["meta"]
