"""Dense and mesh-informed layers with hand-derived reverse-mode gradients.

A mesh-informed layer maps nodal values on one set of points to nodal values
on another; its weight ``W[i, j]`` exists only when input node ``j`` lies
within the support radius of output node ``i``. Weights outside the pattern
are not stored at all.

Arrays follow the row-sample convention: a batch ``X`` has shape
``(n_samples, in_dim)``. A single sample may be passed as a 1D vector.

Flat parameter order is layer by layer; within a layer the weights come
first (row-major for dense layers, pattern order for mesh-informed ones,
i.e. output row by output row with ascending input index), then the bias.
"""

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .mesh import build_unit_square_mesh

# distances within this much of the radius count as ties and are included
TIE_TOL = 1e-12
FORMAT_VERSION = 1
_MAGIC = b"MINN"


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """CSR-style description of which weights a mesh-informed layer owns."""

    in_dim: int
    out_dim: int
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    support_radius: float = 0.0

    @property
    def nnz(self):
        return int(self.indices.size)

    def row(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_counts(self):
        return np.diff(self.indptr)

    def column_counts(self):
        return np.bincount(self.indices, minlength=self.in_dim)

    def rows(self):
        """Row index of every stored entry, in pattern order."""
        return np.repeat(np.arange(self.out_dim), self.row_counts())

    def pairs(self):
        return set(zip(self.rows().tolist(), self.indices.tolist()))

    def flat_index(self):
        return self.rows() * self.in_dim + self.indices


def build_sparsity(input_coords, output_coords, r):
    """Pattern containing every (output i, input j) with ``|x_j - x'_i| <= r``."""
    inp = np.asarray(input_coords, dtype=float)
    out = np.asarray(output_coords, dtype=float)
    if inp.ndim != 2 or out.ndim != 2 or not len(inp) or not len(out):
        raise ValueError("coordinate lists must be nonempty (n, d) arrays")
    if r < 0:
        raise ValueError("support radius must be nonnegative")
    tree = cKDTree(inp)
    candidates = tree.query_ball_point(out, r + 1e-9)
    indptr = np.zeros(len(out) + 1, dtype=np.int64)
    rows = []
    for i, cand in enumerate(candidates):
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        d = np.sqrt(((inp[cand] - out[i]) ** 2).sum(axis=1))
        keep = cand[d <= r + TIE_TOL]
        rows.append(keep)
        indptr[i + 1] = indptr[i] + keep.size
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    indptr.setflags(write=False)
    indices.setflags(write=False)
    return SparsityPattern(len(inp), len(out), indptr, indices, float(r))


# --- activations -----------------------------------------------------------

class Activation:
    """Elementwise activation ``c * tanh(z)`` or the identity."""

    def __init__(self, name="tanh", scale=1.0):
        if name not in ("tanh", "identity", "scaled_tanh"):
            raise ValueError(f"unknown activation {name!r}")
        self.name = name
        self.scale = float(scale) if name == "scaled_tanh" else 1.0

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, Activation):
            return spec
        if spec.startswith("scaled_tanh"):
            _, _, c = spec.partition(":")
            return cls("scaled_tanh", float(c))
        return cls(spec)

    @property
    def tag(self):
        return f"scaled_tanh:{self.scale!r}" if self.name == "scaled_tanh" else self.name

    def __call__(self, z):
        if self.name == "identity":
            return z
        return self.scale * np.tanh(z)

    def derivative(self, a):
        """Derivative expressed through the activation output ``a``."""
        if self.name == "identity":
            return np.ones_like(a)
        t = a / self.scale
        return self.scale * (1.0 - t * t)

    def __repr__(self):
        return f"Activation({self.tag!r})"


# --- layers ----------------------------------------------------------------

class Dense:
    """Fully connected layer ``rho(W v + b)``."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, activation="tanh"):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.activation = Activation.parse(activation)
        self.weights = np.zeros((self.out_dim, self.in_dim))
        self.bias = np.zeros(self.out_dim)

    @property
    def n_weights(self):
        return self.out_dim * self.in_dim

    @property
    def param_count(self):
        return self.n_weights + self.out_dim

    def weight_matrix(self):
        return self.weights

    def set_weight_values(self, values):
        self.weights[...] = values.reshape(self.out_dim, self.in_dim)

    def weight_values(self):
        return self.weights.ravel()

    def weight_gradient(self, delta, inputs):
        return (delta.T @ inputs).ravel()

    def glorot_bounds(self):
        return np.sqrt(6.0 / (self.in_dim + self.out_dim))

    def header(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
                "activation": self.activation.tag}


class MeshInformed:
    """Layer whose weights live only on a distance-based sparsity pattern.

    Parameters
    ----------
    pattern : SparsityPattern
    activation : str or Activation
    input_mesh, output_mesh : StructuredTriMesh, optional
        Only recorded so that the pattern can be rebuilt on load.
    """

    kind = "mesh_informed"

    def __init__(self, pattern, activation="tanh", input_mesh=None, output_mesh=None):
        self.pattern = pattern
        self.in_dim = pattern.in_dim
        self.out_dim = pattern.out_dim
        self.activation = Activation.parse(activation)
        self.input_mesh = input_mesh
        self.output_mesh = output_mesh
        self.values = np.zeros(pattern.nnz)
        self.bias = np.zeros(self.out_dim)
        self._flat = pattern.flat_index()

    @classmethod
    def between(cls, input_mesh, output_mesh, r, activation="tanh"):
        pattern = build_sparsity(input_mesh.nodes, output_mesh.nodes, r)
        return cls(pattern, activation, input_mesh, output_mesh)

    @property
    def n_weights(self):
        return self.pattern.nnz

    @property
    def param_count(self):
        return self.n_weights + self.out_dim

    def weight_matrix(self):
        # dense scatter: BLAS on the materialized matrix beats sparse kernels here
        W = np.zeros(self.out_dim * self.in_dim)
        W[self._flat] = self.values
        return W.reshape(self.out_dim, self.in_dim)

    def set_weight_values(self, values):
        self.values[...] = values

    def weight_values(self):
        return self.values

    def weight_gradient(self, delta, inputs):
        return (delta.T @ inputs).ravel()[self._flat]

    def glorot_bounds(self):
        fan_in = self.pattern.row_counts()[self.pattern.rows()]
        fan_out = self.pattern.column_counts()[self.pattern.indices]
        return np.sqrt(6.0 / (fan_in + fan_out))

    def header(self):
        h = {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
             "activation": self.activation.tag,
             "support_radius": self.pattern.support_radius, "nnz": self.pattern.nnz}
        if self.input_mesh is not None and self.output_mesh is not None:
            h["input_mesh"] = self.input_mesh.describe()
            h["output_mesh"] = self.output_mesh.describe()
        else:
            h["indptr"] = self.pattern.indptr.tolist()
            h["indices"] = self.pattern.indices.tolist()
        return h


# --- network ---------------------------------------------------------------

class FactoredBatch:
    """Input batch kept as ``left @ right`` (rows are samples).

    Inputs that span a low-dimensional subspace make the first layer's
    products much cheaper in this form. Only ``batch @ M`` and ``M @ batch``
    are supported, which is all a first layer needs.
    """

    __array_ufunc__ = None  # make numpy defer to __rmatmul__

    def __init__(self, left, right):
        self.left = np.asarray(left, dtype=float)
        self.right = np.asarray(right, dtype=float)
        self.shape = (self.left.shape[0], self.right.shape[1])
        self.ndim = 2

    @classmethod
    def compress(cls, X, rtol=1e-13, max_fraction=0.5):
        """Factor ``X`` through its thin SVD when its numerical rank is low;
        otherwise return ``X`` unchanged."""
        X = np.asarray(X, dtype=float)
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        if not s.size or s[0] == 0.0:
            return X
        rank = int(np.count_nonzero(s > rtol * s[0]))
        if rank > max_fraction * min(X.shape):
            return X
        return cls(U[:, :rank] * s[:rank], Vt[:rank])

    def __matmul__(self, other):
        return self.left @ (self.right @ other)

    def __rmatmul__(self, other):
        return (other @ self.left) @ self.right

    def toarray(self):
        return self.left @ self.right


@dataclass(eq=False)
class ForwardCache:
    inputs: list
    outputs: list
    weights: list
    version: int
    squeeze: bool


@dataclass(eq=False)
class Gradients:
    """Per-layer weight and bias gradients plus the input gradient."""

    weights: list
    biases: list
    inputs: np.ndarray

    def flat(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w, b]
        return np.concatenate(parts)


class Network:
    """Feedforward composition of Dense and MeshInformed layers."""

    def __init__(self, layers, metadata=None):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        self.layers = layers
        self.metadata = dict(metadata or {})
        self._version = 0

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def param_count(self):
        return sum(layer.param_count for layer in self.layers)

    def _touch(self):
        self._version += 1

    def forward(self, x):
        """Evaluate the network; returns ``(output, cache)``."""
        if not isinstance(x, FactoredBatch):
            x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        if a.shape[1] != self.in_dim:
            raise ValueError(f"input has {a.shape[1]} features, network expects {self.in_dim}")
        inputs, outputs, weights = [], [], []
        for layer in self.layers:
            W = layer.weight_matrix()
            inputs.append(a)
            weights.append(W)
            a = layer.activation(a @ W.T + layer.bias)
            outputs.append(a)
        cache = ForwardCache(inputs, outputs, weights, self._version, squeeze)
        return (a[0] if squeeze else a), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, output_gradient, input_gradient=True):
        """Reverse pass; gradients are summed over the batch.

        With ``input_gradient=False`` the (often costly) gradient with respect
        to the network input is skipped and reported as None.
        """
        if cache.version != self._version or len(cache.inputs) != len(self.layers):
            raise ValueError("stale forward cache: parameters changed since forward()")
        g = np.asarray(output_gradient, dtype=float)
        g = g[None, :] if cache.squeeze else g
        if g.shape != cache.outputs[-1].shape:
            raise ValueError(f"output gradient shape {g.shape} does not match "
                             f"output shape {cache.outputs[-1].shape}")
        dW, db = [], []
        n = len(self.layers)
        for k, layer, a_in, a_out, W in zip(range(n - 1, -1, -1), reversed(self.layers),
                                            reversed(cache.inputs), reversed(cache.outputs),
                                            reversed(cache.weights)):
            delta = g * layer.activation.derivative(a_out)
            dW.append(layer.weight_gradient(delta, a_in))
            db.append(delta.sum(axis=0))
            if k == 0 and not input_gradient:
                g = None
                break
            g = delta @ W
        if g is not None and cache.squeeze:
            g = g[0]
        return Gradients(dW[::-1], db[::-1], g)

    def get_params(self):
        return flatten_params(self)

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_count,):
            raise ValueError(f"parameter vector has shape {theta.shape}, "
                             f"expected ({self.param_count},)")
        pos = 0
        for layer in self.layers:
            layer.set_weight_values(theta[pos:pos + layer.n_weights])
            pos += layer.n_weights
            layer.bias[...] = theta[pos:pos + layer.out_dim]
            pos += layer.out_dim
        self._touch()
        return self

    def copy(self):
        return unflatten_params(self, flatten_params(self))

    def header(self):
        return {"format_version": FORMAT_VERSION, "param_count": self.param_count,
                "layers": [layer.header() for layer in self.layers],
                "metadata": self.metadata}


def flatten_params(net):
    parts = []
    for layer in net.layers:
        parts += [layer.weight_values().ravel(), layer.bias]
    return np.concatenate(parts).copy()


def unflatten_params(net, theta):
    """New network with ``net``'s structure and parameters ``theta``."""
    clone = Network([_clone_layer(layer) for layer in net.layers], net.metadata)
    return clone.set_params(theta)


def _clone_layer(layer):
    if layer.kind == "dense":
        return Dense(layer.in_dim, layer.out_dim, layer.activation)
    return MeshInformed(layer.pattern, layer.activation, layer.input_mesh, layer.output_mesh)


def init_glorot(net, rng_seed, gain=1.0):
    """Normalized (Glorot) uniform initialization, biases zero. In place.

    Mesh-informed weights use their own fan-in (row count) and fan-out
    (column count) in the pattern instead of the layer dimensions.
    """
    rng = np.random.default_rng(rng_seed)
    for layer in net.layers:
        _glorot_layer(layer, rng, gain)
    net._touch()
    return net


def _glorot_layer(layer, rng, gain):
    bound = gain * layer.glorot_bounds()
    layer.set_weight_values(rng.uniform(-1.0, 1.0, size=layer.n_weights) * bound)
    layer.bias[...] = 0.0


def init_closure(net, rng_seed, gain=0.1):
    """Zero the last layer and Glorot-initialize the rest with a small gain.

    The output is then identically zero, while gradients with respect to the
    last layer's weights stay nonzero.
    """
    rng = np.random.default_rng(rng_seed)
    for layer in net.layers[:-1]:
        _glorot_layer(layer, rng, gain)
    last = net.layers[-1]
    last.set_weight_values(np.zeros(last.n_weights))
    last.bias[...] = 0.0
    net._touch()
    return net


# --- serialization ---------------------------------------------------------

def _layer_from_header(h):
    act = h["activation"]
    if h["kind"] == "dense":
        return Dense(h["in_dim"], h["out_dim"], act)
    if h["kind"] != "mesh_informed":
        raise ValueError(f"unknown layer kind {h['kind']!r}")
    if "input_mesh" in h:
        meshes = [build_unit_square_mesh(d["cells_per_side"], tuple(d["domain_bounds"]))
                  for d in (h["input_mesh"], h["output_mesh"])]
        layer = MeshInformed.between(meshes[0], meshes[1], h["support_radius"], act)
    else:
        pattern = SparsityPattern(h["in_dim"], h["out_dim"],
                                  np.asarray(h["indptr"], dtype=np.int64),
                                  np.asarray(h["indices"], dtype=np.int64),
                                  h["support_radius"])
        layer = MeshInformed(pattern, act)
    if layer.pattern.nnz != h["nnz"] or layer.in_dim != h["in_dim"]:
        raise ValueError("rebuilt sparsity pattern does not match the stored header")
    return layer


def dumps_network(net):
    header = json.dumps(net.header(), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
    buf.write(header)
    buf.write(flatten_params(net).astype("<f8").tobytes())
    return buf.getvalue()


def loads_network(data):
    if data[:4] != _MAGIC:
        raise ValueError("not a network file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {version}")
    start = 4 + struct.calcsize("<IQ")
    header = json.loads(data[start:start + hlen])
    net = Network([_layer_from_header(h) for h in header["layers"]], header["metadata"])
    theta = np.frombuffer(data[start + hlen:], dtype="<f8")
    if theta.size != header["param_count"]:
        raise ValueError("parameter block length does not match the header")
    return net.set_params(theta.astype(float))


def save_network(net, path):
    from .io import atomic_write_bytes
    atomic_write_bytes(path, dumps_network(net))


def load_network(path):
    with open(path, "rb") as fh:
        return loads_network(fh.read())
