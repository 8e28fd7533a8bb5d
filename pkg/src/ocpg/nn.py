"""Dense feed-forward networks with exact reverse-mode gradients, plus Adam.

All parameters of an :class:`MLP` live in a single contiguous float64 vector
(``net.params``); the per-layer weight matrices and bias vectors are views
into it.  Optimizers, target-network averaging and checkpointing therefore
operate on one flat array.

Weights are stored as ``(out, in)`` so a layer computes ``x @ W.T + b``.
Inputs may be a single vector ``(in,)`` or a batch ``(N, in)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, TrainingDivergenceError

ACTIVATIONS = ("relu", "tanh", "identity")
CHECKPOINT_MAGIC = "ocpg-mlp"
CHECKPOINT_VERSION = 1


class MLP:
    """Multi-layer perceptron ``sizes[0] -> ... -> sizes[-1]``.

    ``activations[i]`` is applied after layer ``i``.  ``output_scale`` is an
    optional fixed (non-trainable) per-output multiplier, used to map a
    ``tanh`` output onto an environment's action box.
    """

    def __init__(self, sizes, activations, rng=None, output_scale=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigurationError(f"invalid layer sizes {sizes}")
        activations = list(activations)
        if len(activations) != len(sizes) - 1:
            raise ConfigurationError(
                f"need {len(sizes) - 1} activations, got {len(activations)}"
            )
        for act in activations:
            if act not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {act!r}")
        self.sizes = sizes
        self.activations = activations
        self.shapes = [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
        n = sum(o * i + o for o, i in self.shapes)
        self.params = np.zeros(n)
        self._bind_views()
        if output_scale is not None:
            output_scale = np.broadcast_to(
                np.asarray(output_scale, dtype=np.float64), (sizes[-1],)
            ).copy()
        self.output_scale = output_scale
        if rng is not None:
            self.initialize(rng)

    def _bind_views(self):
        self.weights = []
        self.biases = []
        self._layer_offsets = []
        offset = 0
        for out_dim, in_dim in self.shapes:
            size = out_dim * in_dim
            self._layer_offsets.append((offset, offset + size))
            self.weights.append(
                self.params[offset:offset + size].reshape(out_dim, in_dim)
            )
            offset += size
            self.biases.append(self.params[offset:offset + out_dim])
            offset += out_dim

    def initialize(self, rng):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        for W, b in zip(self.weights, self.biases):
            bound = 1.0 / np.sqrt(W.shape[1])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return self

    @property
    def input_dim(self):
        return self.sizes[0]

    @property
    def output_dim(self):
        return self.sizes[-1]

    @property
    def n_params(self):
        return self.params.size

    def get_params(self):
        return self.params.copy()

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise ContractError(
                f"parameter vector has shape {flat.shape}, expected {self.params.shape}"
            )
        self.params[...] = flat

    def copy(self):
        clone = MLP(self.sizes, self.activations, output_scale=self.output_scale)
        clone.params[...] = self.params
        return clone

    # -- forward / backward -------------------------------------------------

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"input has shape {x.shape}, network expects {self.input_dim} features"
            )
        return x, single

    def forward(self, x):
        h, single = self._as_batch(x)
        for W, b, act in zip(self.weights, self.biases, self.activations):
            h = h @ W.T + b
            if act == "relu":
                np.maximum(h, 0.0, out=h)
            elif act == "tanh":
                np.tanh(h, out=h)
        if self.output_scale is not None:
            h = h * self.output_scale
        if not np.all(np.isfinite(h)):
            raise TrainingDivergenceError("non-finite network output")
        return h[0] if single else h

    __call__ = forward

    def _forward_cached(self, x):
        h, single = self._as_batch(x)
        layer_inputs = []
        layer_outputs = []
        for W, b, act in zip(self.weights, self.biases, self.activations):
            layer_inputs.append(h)
            h = h @ W.T + b
            if act == "relu":
                np.maximum(h, 0.0, out=h)
            elif act == "tanh":
                np.tanh(h, out=h)
            layer_outputs.append(h)
        out = h if self.output_scale is None else h * self.output_scale
        return out, (layer_inputs, layer_outputs), single

    def _backward(self, cache, upstream, want_params=True, want_input=False):
        """Propagate ``upstream = dL/d(output)`` of shape (N, out).

        Parameter gradients are summed over the batch.
        """
        layer_inputs, layer_outputs = cache
        g = upstream
        if self.output_scale is not None:
            g = g * self.output_scale
        grad = np.empty_like(self.params) if want_params else None
        offsets = self._layer_offsets
        for i in range(len(self.shapes) - 1, -1, -1):
            act = self.activations[i]
            out = layer_outputs[i]
            if act == "relu":
                g = g * (out > 0.0)
            elif act == "tanh":
                g = g * (1.0 - out * out)
            if want_params:
                w_off, b_off = offsets[i]
                out_dim, in_dim = self.shapes[i]
                grad[w_off:w_off + out_dim * in_dim] = (g.T @ layer_inputs[i]).ravel()
                grad[b_off:b_off + out_dim] = g.sum(axis=0)
            if i > 0 or want_input:
                g = g @ self.weights[i]
        return grad, (g if want_input else None)

    def vjp(self, x):
        """Forward pass plus a pullback ``upstream -> parameter gradient``.

        ``pullback(upstream, want_input=True)`` returns ``(param_grad, input_grad)``.
        """
        out, cache, single = self._forward_cached(x)

        def pullback(upstream, want_input=False):
            up = np.asarray(upstream, dtype=np.float64).reshape(out.shape)
            grad, gx = self._backward(cache, up, want_input=want_input)
            return (grad, gx) if want_input else grad

        return (out[0] if single else out), pullback

    def grad_scalar(self, x, upstream=1.0):
        """Gradient of ``sum_n upstream_n * output_n`` w.r.t. the parameters.

        Requires a scalar-output network.  ``upstream`` is a scalar or one
        value per batch row.
        """
        if self.output_dim != 1:
            raise ContractError("grad_scalar requires a scalar-output network")
        out, cache, single = self._forward_cached(x)
        up = np.broadcast_to(
            np.asarray(upstream, dtype=np.float64).reshape(-1, 1), out.shape
        )
        grad, _ = self._backward(cache, up)
        return grad

    def jacobian_transpose_vector(self, x, v):
        """Return ``(d output / d params)^T v``, summed over batch rows.

        For a single input this is the policy Jacobian (transposed) applied to
        an output-space vector; for a batch, ``v`` holds one row per input.
        """
        out, cache, single = self._forward_cached(x)
        v = np.asarray(v, dtype=np.float64)
        if single:
            v = v.reshape(1, -1)
        if v.shape != out.shape:
            raise ContractError(
                f"vector has shape {v.shape}, network output has shape {out.shape}"
            )
        grad, _ = self._backward(cache, v)
        return grad

    def input_gradient(self, x, v=None):
        """Return ``(d output / d input)^T v`` per batch row (shape like ``x``)."""
        out, cache, single = self._forward_cached(x)
        if v is None:
            if self.output_dim != 1:
                raise ContractError("v is required for vector-output networks")
            v = np.ones_like(out)
        v = np.asarray(v, dtype=np.float64)
        if single:
            v = v.reshape(1, -1)
        if v.shape != out.shape:
            raise ContractError(
                f"vector has shape {v.shape}, network output has shape {out.shape}"
            )
        _, gx = self._backward(cache, v, want_params=False, want_input=True)
        return gx[0] if single else gx

    def jacobian(self, x):
        """Full ``(out, n_params)`` Jacobian at a single input."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ContractError("jacobian takes a single input vector")
        out, cache, _ = self._forward_cached(x)
        rows = np.empty((self.output_dim, self.n_params))
        for i in range(self.output_dim):
            e = np.zeros((1, self.output_dim))
            e[0, i] = 1.0
            rows[i], _ = self._backward(cache, e)
        return rows

    # -- checkpointing --------------------------------------------------------

    def to_text(self):
        lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"layers {len(self.shapes)}"]
        for (out_dim, in_dim), act in zip(self.shapes, self.activations):
            lines.append(f"{in_dim} {out_dim} {act}")
        if self.output_scale is None:
            lines.append("scale none")
        else:
            lines.append("scale " + " ".join(repr(float(s)) for s in self.output_scale))
        lines.append(f"params {self.n_params}")
        lines.extend(repr(v) for v in self.params.tolist())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        magic, version = lines[0].split()
        if magic != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"not an MLP checkpoint (header {lines[0]!r})")
        if int(version) != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        n_layers = int(lines[1].split()[1])
        sizes, acts = [], []
        for k in range(n_layers):
            in_dim, out_dim, act = lines[2 + k].split()
            if not sizes:
                sizes.append(int(in_dim))
            elif sizes[-1] != int(in_dim):
                raise ConfigurationError("inconsistent layer shapes in checkpoint")
            sizes.append(int(out_dim))
            acts.append(act)
        scale_fields = lines[2 + n_layers].split()[1:]
        scale = None if scale_fields == ["none"] else [float(s) for s in scale_fields]
        n = int(lines[3 + n_layers].split()[1])
        values = np.array([float(s) for s in lines[4 + n_layers:4 + n_layers + n]])
        net = cls(sizes, acts, output_scale=scale)
        net.set_params(values)
        return net

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def make_actor(state_dim, action_dim, action_bound, hidden=(256, 256), rng=None):
    """ReLU hidden layers, tanh output scaled to the action box."""
    sizes = [state_dim, *hidden, action_dim]
    acts = ["relu"] * len(hidden) + ["tanh"]
    return MLP(sizes, acts, rng=rng, output_scale=action_bound)


def make_critic(state_dim, action_dim, hidden=(256, 256), rng=None):
    """Q(s, a) network over the concatenated state-action input."""
    sizes = [state_dim + action_dim, *hidden, 1]
    acts = ["relu"] * len(hidden) + ["identity"]
    return MLP(sizes, acts, rng=rng)


@dataclass
class AdamState:
    """Adam moments and step counter for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def zeros(cls, n, lr=3e-4, **kwargs):
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr, **kwargs)

    def copy(self):
        return AdamState(self.m.copy(), self.v.copy(), self.lr, self.beta1,
                         self.beta2, self.eps, self.t)


def adam_step(params, grad, state):
    """One Adam descent step, applied to ``params`` in place.

    Ascent is obtained by passing the negated gradient.  Returns ``params``.
    """
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise ContractError("parameter, gradient and moment lengths differ")
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergenceError("non-finite gradient", step=state.t + 1)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def finite_difference_gradient(f, x, h=1e-5):
    """Central differences of a scalar function ``f`` at vector ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = f(x)
        x[i] = orig - h
        fm = f(x)
        x[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g
