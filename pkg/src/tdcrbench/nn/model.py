"""Dense, stacked-GRU and stacked-LSTM networks with hand-written backprop.

All tensors are float64. Recurrent layers keep one weight triple per gate,
``W_<gate>`` (hidden x input), ``U_<gate>`` (hidden x hidden) and
``b_<gate>`` (hidden), named with the layer index as suffix, e.g. ``W_z0``.
The output head is ``W_out``/``b_out`` on the last hidden state (recurrent)
or on the last hidden layer (feed-forward, tanh activations).

The loss is ``0.5 * mean_over_batch(||y - t||^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ARCHS = ("fnn", "gru", "lstm")
GATES = {"gru": ("z", "r", "h"), "lstm": ("i", "f", "o", "g")}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class ModelParams:
    arch: str
    layers: int
    hidden: int
    input_size: int
    output_size: int
    seq_len: int = 5
    weights: dict = field(default_factory=dict)
    in_mean: np.ndarray | None = None
    in_std: np.ndarray | None = None
    out_mean: np.ndarray | None = None
    out_std: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.in_mean is None:
            self.in_mean = np.zeros(self.input_size)
            self.in_std = np.ones(self.input_size)
        if self.out_mean is None:
            self.out_mean = np.zeros(self.output_size)
            self.out_std = np.ones(self.output_size)

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.layers, self.hidden, self.input_size, self.output_size,
                           self.seq_len, {k: v.copy() for k, v in self.weights.items()},
                           self.in_mean.copy(), self.in_std.copy(), self.out_mean.copy(),
                           self.out_std.copy(), dict(self.metadata))

    def parameter_count(self, include_head: bool = True) -> int:
        return int(sum(v.size for k, v in self.weights.items()
                       if include_head or not k.endswith("_out")))

    # normalization ------------------------------------------------------------
    def normalize_input(self, x):
        return (np.asarray(x, dtype=float) - self.in_mean) / self.in_std

    def denormalize_input(self, x):
        return np.asarray(x, dtype=float) * self.in_std + self.in_mean

    def normalize_output(self, y):
        return (np.asarray(y, dtype=float) - self.out_mean) / self.out_std

    def denormalize_output(self, y):
        return np.asarray(y, dtype=float) * self.out_std + self.out_mean

    def predict(self, x):
        """Physical-unit prediction for one sample or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == (1 if self.arch == "fnn" else 2)
        xb = x[None] if single else x
        y = self.denormalize_output(forward(self, self.normalize_input(xb)))
        return y[0] if single else y


def expected_shapes(arch: str, layers: int, hidden: int, input_size: int, output_size: int) -> dict:
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")
    shapes = {}
    if arch == "fnn":
        fan = input_size
        for l in range(layers):
            shapes[f"W{l}"] = (hidden, fan)
            shapes[f"b{l}"] = (hidden,)
            fan = hidden
    else:
        for l in range(layers):
            fan = input_size if l == 0 else hidden
            for gate in GATES[arch]:
                shapes[f"W_{gate}{l}"] = (hidden, fan)
                shapes[f"U_{gate}{l}"] = (hidden, hidden)
                shapes[f"b_{gate}{l}"] = (hidden,)
    shapes["W_out"] = (output_size, hidden)
    shapes["b_out"] = (output_size,)
    return shapes


def init_model(arch: str, input_size: int, output_size: int, layers: int = 4, hidden: int = 128,
               seq_len: int = 5, seed: int = 0) -> ModelParams:
    """Uniform init in +-1/sqrt(fan_in) per matrix, zero biases."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in expected_shapes(arch, layers, hidden, input_size, output_size).items():
        if len(shape) == 1:
            weights[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[1])
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(arch, layers, hidden, input_size, output_size,
                       1 if arch == "fnn" else seq_len, weights)


def zero_model(arch: str, input_size: int, output_size: int, layers: int = 1, hidden: int = 4,
               seq_len: int = 5) -> ModelParams:
    m = init_model(arch, input_size, output_size, layers, hidden, seq_len)
    for v in m.weights.values():
        v[...] = 0.0
    return m


def validate_shapes(model: ModelParams):
    want = expected_shapes(model.arch, model.layers, model.hidden, model.input_size, model.output_size)
    if set(want) != set(model.weights):
        raise ValueError("weight names do not match the architecture")
    for k, shape in want.items():
        if model.weights[k].shape != shape:
            raise ValueError(f"{k}: expected shape {shape}, got {model.weights[k].shape}")


# -- single cells -----------------------------------------------------------------


def _gate_params(params: dict, gate: str, layer=None):
    sfx = "" if layer is None else str(layer)
    return params[f"W_{gate}{sfx}"], params[f"U_{gate}{sfx}"], params[f"b_{gate}{sfx}"]


def _check(x, h, W, U):
    if x.shape[-1] != W.shape[1] or h.shape[-1] != U.shape[0] or W.shape[0] != U.shape[0]:
        raise ValueError(f"shape mismatch: x{x.shape} h{h.shape} W{W.shape} U{U.shape}")


def gru_cell(x, h_prev, params: dict, layer=None):
    """One GRU update. ``params`` maps W_z/U_z/b_z, W_r/..., W_h/... (optionally suffixed)."""
    x, h_prev = np.asarray(x, dtype=float), np.asarray(h_prev, dtype=float)
    Wz, Uz, bz = _gate_params(params, "z", layer)
    Wr, Ur, br = _gate_params(params, "r", layer)
    Wh, Uh, bh = _gate_params(params, "h", layer)
    _check(x, h_prev, Wz, Uz)
    z = sigmoid(x @ Wz.T + h_prev @ Uz.T + bz)
    r = sigmoid(x @ Wr.T + h_prev @ Ur.T + br)
    h_tilde = np.tanh(x @ Wh.T + (r * h_prev) @ Uh.T + bh)
    return (1.0 - z) * h_prev + z * h_tilde


def lstm_cell(x, h_prev, c_prev, params: dict, layer=None):
    """One LSTM update with input, forget and output gates. Returns (h, c)."""
    x, h_prev, c_prev = (np.asarray(a, dtype=float) for a in (x, h_prev, c_prev))
    Wi, Ui, bi = _gate_params(params, "i", layer)
    _check(x, h_prev, Wi, Ui)
    pre = {}
    for gate in GATES["lstm"]:
        W, U, b = _gate_params(params, gate, layer)
        pre[gate] = x @ W.T + h_prev @ U.T + b
    i, f, o = sigmoid(pre["i"]), sigmoid(pre["f"]), sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


# -- batched forward / backward -------------------------------------------------


def _check_input(model: ModelParams, X: np.ndarray):
    if model.arch == "fnn":
        if X.ndim != 2 or X.shape[1] != model.input_size:
            raise ValueError(f"expected (batch, {model.input_size}) input, got {X.shape}")
    else:
        if X.ndim != 3 or X.shape[1] != model.seq_len or X.shape[2] != model.input_size:
            raise ValueError(
                f"expected (batch, {model.seq_len}, {model.input_size}) input, got {X.shape}")


def _forward_fnn(model, X):
    w = model.weights
    acts = [X]
    a = X
    for l in range(model.layers):
        a = np.tanh(a @ w[f"W{l}"].T + w[f"b{l}"])
        acts.append(a)
    y = a @ w["W_out"].T + w["b_out"]
    return y, acts


def _forward_gru(model, X):
    w = model.weights
    B, T, _ = X.shape
    H = model.hidden
    inp = X
    cache = []
    for l in range(model.layers):
        Wz, Uz, bz = _gate_params(w, "z", l)
        Wr, Ur, br = _gate_params(w, "r", l)
        Wh, Uh, bh = _gate_params(w, "h", l)
        # input projections for all steps at once
        xz, xr, xh = inp @ Wz.T + bz, inp @ Wr.T + br, inp @ Wh.T + bh
        h = np.zeros((B, H))
        hs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            z = sigmoid(xz[:, t] + h @ Uz.T)
            r = sigmoid(xr[:, t] + h @ Ur.T)
            rh = r * h
            ht = np.tanh(xh[:, t] + rh @ Uh.T)
            steps.append((h, z, r, rh, ht))
            h = (1.0 - z) * h + z * ht
            hs[:, t] = h
        cache.append((inp, steps))
        inp = hs
    y = inp[:, -1] @ w["W_out"].T + w["b_out"]
    return y, (cache, inp)


def _forward_lstm(model, X):
    w = model.weights
    B, T, _ = X.shape
    H = model.hidden
    inp = X
    cache = []
    for l in range(model.layers):
        proj = {g: inp @ w[f"W_{g}{l}"].T + w[f"b_{g}{l}"] for g in GATES["lstm"]}
        U = {g: w[f"U_{g}{l}"] for g in GATES["lstm"]}
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            i = sigmoid(proj["i"][:, t] + h @ U["i"].T)
            f = sigmoid(proj["f"][:, t] + h @ U["f"].T)
            o = sigmoid(proj["o"][:, t] + h @ U["o"].T)
            g = np.tanh(proj["g"][:, t] + h @ U["g"].T)
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            steps.append((h, c, i, f, o, g, tc))
            h, c = o * tc, c_new
            hs[:, t] = h
        cache.append((inp, steps))
        inp = hs
    y = inp[:, -1] @ w["W_out"].T + w["b_out"]
    return y, (cache, inp)


_FORWARD = {"fnn": _forward_fnn, "gru": _forward_gru, "lstm": _forward_lstm}


def forward(model: ModelParams, X) -> np.ndarray:
    """Normalized-unit outputs for a batch of normalized inputs."""
    X = np.asarray(X, dtype=float)
    _check_input(model, X)
    return _FORWARD[model.arch](model, X)[0]


def forward_sequence(model: ModelParams, sequence) -> np.ndarray:
    """Output for one input window (T x input for recurrent nets, flat vector for FNN)."""
    seq = np.asarray(sequence, dtype=float)
    return forward(model, seq[None])[0]


def _backward_fnn(model, acts, dy):
    w = model.weights
    grads = {"W_out": dy.T @ acts[-1], "b_out": dy.sum(0)}
    da = dy @ w["W_out"]
    for l in reversed(range(model.layers)):
        dpre = da * (1.0 - acts[l + 1] ** 2)
        grads[f"W{l}"] = dpre.T @ acts[l]
        grads[f"b{l}"] = dpre.sum(0)
        da = dpre @ w[f"W{l}"]
    return grads


def _backward_gru(model, cache, dy):
    w = model.weights
    layer_cache, top = cache
    grads = {"W_out": dy.T @ top[:, -1], "b_out": dy.sum(0)}
    B, T, H = top.shape
    dhs = np.zeros((B, T, H))
    dhs[:, -1] = dy @ w["W_out"]
    for l in reversed(range(model.layers)):
        inp, steps = layer_cache[l]
        Wz, Uz, _ = _gate_params(w, "z", l)
        Wr, Ur, _ = _gate_params(w, "r", l)
        Wh, Uh, _ = _gate_params(w, "h", l)
        dUz, dUr, dUh = np.zeros_like(Uz), np.zeros_like(Ur), np.zeros_like(Uh)
        daz = np.empty((B, T, H))
        dar = np.empty((B, T, H))
        dah = np.empty((B, T, H))
        dh_next = np.zeros((B, H))
        for t in reversed(range(T)):
            h_prev, z, r, rh, ht = steps[t]
            dh = dhs[:, t] + dh_next
            dht = dh * z
            dz = dh * (ht - h_prev)
            dh_prev = dh * (1.0 - z)
            da_h = dht * (1.0 - ht * ht)
            dUh += da_h.T @ rh
            drh = da_h @ Uh
            dr = drh * h_prev
            dh_prev += drh * r
            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            dUz += da_z.T @ h_prev
            dUr += da_r.T @ h_prev
            dh_prev += da_z @ Uz + da_r @ Ur
            daz[:, t], dar[:, t], dah[:, t] = da_z, da_r, da_h
            dh_next = dh_prev
        flat_in = inp.reshape(B * T, -1)
        for gate, da, W, dU in (("z", daz, Wz, dUz), ("r", dar, Wr, dUr), ("h", dah, Wh, dUh)):
            fda = da.reshape(B * T, H)
            grads[f"W_{gate}{l}"] = fda.T @ flat_in
            grads[f"U_{gate}{l}"] = dU
            grads[f"b_{gate}{l}"] = fda.sum(0)
        if l > 0:
            dhs = (daz @ Wz + dar @ Wr + dah @ Wh)
    return grads


def _backward_lstm(model, cache, dy):
    w = model.weights
    layer_cache, top = cache
    grads = {"W_out": dy.T @ top[:, -1], "b_out": dy.sum(0)}
    B, T, H = top.shape
    dhs = np.zeros((B, T, H))
    dhs[:, -1] = dy @ w["W_out"]
    gates = GATES["lstm"]
    for l in reversed(range(model.layers)):
        inp, steps = layer_cache[l]
        U = {g: w[f"U_{g}{l}"] for g in gates}
        dU = {g: np.zeros_like(U[g]) for g in gates}
        da = {g: np.empty((B, T, H)) for g in gates}
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            h_prev, c_prev, i, f, o, g, tc = steps[t]
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            pre = {"i": di * i * (1.0 - i), "f": df * f * (1.0 - f),
                   "o": do * o * (1.0 - o), "g": dg * (1.0 - g * g)}
            dh_prev = np.zeros((B, H))
            for gate in gates:
                dU[gate] += pre[gate].T @ h_prev
                dh_prev += pre[gate] @ U[gate]
                da[gate][:, t] = pre[gate]
            dh_next = dh_prev
        flat_in = inp.reshape(B * T, -1)
        dhs_below = 0.0
        for gate in gates:
            fda = da[gate].reshape(B * T, H)
            grads[f"W_{gate}{l}"] = fda.T @ flat_in
            grads[f"U_{gate}{l}"] = dU[gate]
            grads[f"b_{gate}{l}"] = fda.sum(0)
            if l > 0:
                dhs_below = dhs_below + da[gate] @ w[f"W_{gate}{l}"]
        if l > 0:
            dhs = dhs_below
    return grads


def loss_and_gradients(model: ModelParams, X, Y):
    """Loss ``0.5 * mean_b ||y_b - t_b||^2`` and its gradient for every weight.

    ``X`` and ``Y`` are in normalized units.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_input(model, X)
    y, cache = _FORWARD[model.arch](model, X)
    resid = y - Y
    B = X.shape[0]
    loss = 0.5 * float(np.sum(resid * resid)) / B
    dy = resid / B
    if model.arch == "fnn":
        grads = _backward_fnn(model, cache, dy)
    elif model.arch == "gru":
        grads = _backward_gru(model, cache, dy)
    else:
        grads = _backward_lstm(model, cache, dy)
    return loss, grads


def backward(model: ModelParams, batch):
    """Gradients of the mean L2 loss over ``batch = (inputs, targets)``."""
    X, Y = batch
    return loss_and_gradients(model, X, Y)[1]


def recurrent_parameter_count(arch: str, layers: int, hidden: int, input_size: int) -> int:
    """Closed-form count of gate weights and biases (head excluded)."""
    gates = len(GATES[arch])
    first = gates * (hidden * input_size + hidden * hidden + hidden)
    rest = gates * (2 * hidden * hidden + hidden)
    return first + (layers - 1) * rest
