"""Single-layer LSTM next-slot forecaster, trained from scratch.

Forward pass implements the standard gate equations (forget/input/candidate/
output, sigmoid gates, tanh candidate and cell activation); training is full
backpropagation through time over the look-back window with MAE loss and the
Adam optimizer. Everything is numpy; training is single-threaded and
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..traffic import WindowSet


class NumericsError(RuntimeError):
    """Non-finite value during LSTM evaluation or training."""

    def __init__(self, message: str, epoch: int | None = None, history: list[float] | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.history = history or []


@dataclass(frozen=True)
class LstmConfig:
    units: int = 10
    window: int = 8
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    # Adam moment decay rates and epsilon; loss is fixed to MAE
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.units < 1:
            raise ValueError("units must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


_GATES = ("forget", "input", "candidate", "output")


@dataclass
class LstmParams:
    """All trainable parameters plus the input scaler and config echo.

    Gate weight matrices have shape (units, units + 1): the recurrent block
    concatenated with the single scalar input. The dense head maps the final
    hidden state to the scalar prediction.
    """

    units: int
    window: int
    w_forget: np.ndarray
    w_input: np.ndarray
    w_candidate: np.ndarray
    w_output: np.ndarray
    b_forget: np.ndarray
    b_input: np.ndarray
    b_candidate: np.ndarray
    b_output: np.ndarray
    dense_w: np.ndarray
    dense_b: float
    scale_min: float = 0.0
    scale_max: float = 1.0

    def weight(self, gate: str) -> np.ndarray:
        return getattr(self, f"w_{gate}")

    def bias(self, gate: str) -> np.ndarray:
        return getattr(self, f"b_{gate}")

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for gate in _GATES:
            out[f"w_{gate}"] = self.weight(gate)
            out[f"b_{gate}"] = self.bias(gate)
        out["dense_w"] = self.dense_w
        return out


def init_params(cfg: LstmConfig, rng: np.random.Generator) -> LstmParams:
    """Uniform(-k, k) weights with k = 1/sqrt(units); zero biases."""
    u = cfg.units
    k = 1.0 / np.sqrt(u)

    def w() -> np.ndarray:
        return rng.uniform(-k, k, size=(u, u + 1))

    return LstmParams(
        units=u,
        window=cfg.window,
        w_forget=w(), w_input=w(), w_candidate=w(), w_output=w(),
        b_forget=np.zeros(u), b_input=np.zeros(u),
        b_candidate=np.zeros(u), b_output=np.zeros(u),
        dense_w=rng.uniform(-k, k, size=u),
        dense_b=0.0,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_forward(
    params: LstmParams,
    x_t: float | np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM cell step; accepts a scalar input or a batch of scalars.

    Raises :class:`NumericsError` naming the offending gate if any
    intermediate goes non-finite.
    """
    x = np.atleast_1d(np.asarray(x_t, dtype=float))
    batched = np.ndim(h_prev) == 2
    h = np.atleast_2d(h_prev)
    c = np.atleast_2d(c_prev)
    z = np.concatenate([h, x.reshape(-1, 1)], axis=1)
    gates = {}
    for gate in _GATES:
        pre = z @ params.weight(gate).T + params.bias(gate)
        act = np.tanh(pre) if gate == "candidate" else _sigmoid(pre)
        if not np.isfinite(act).all():
            raise NumericsError(f"non-finite activation in {gate} gate")
        gates[gate] = act
    c_t = gates["forget"] * c + gates["input"] * gates["candidate"]
    h_t = gates["output"] * np.tanh(c_t)
    if not np.isfinite(c_t).all():
        raise NumericsError("non-finite cell state")
    if batched:
        return h_t, c_t
    return h_t[0], c_t[0]


def _forward_sequence(params: LstmParams, x: np.ndarray) -> tuple[np.ndarray, list[dict]]:
    """Unroll over a (batch, window) input; returns predictions and the
    per-step cache needed for BPTT. No finiteness checks (hot path)."""
    b, t_len = x.shape
    u = params.units
    h = np.zeros((b, u))
    c = np.zeros((b, u))
    cache: list[dict] = []
    for t in range(t_len):
        z = np.concatenate([h, x[:, t : t + 1]], axis=1)
        f = _sigmoid(z @ params.w_forget.T + params.b_forget)
        i = _sigmoid(z @ params.w_input.T + params.b_input)
        g = np.tanh(z @ params.w_candidate.T + params.b_candidate)
        o = _sigmoid(z @ params.w_output.T + params.b_output)
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache.append({"z": z, "f": f, "i": i, "g": g, "o": o, "c_prev": c, "tanh_c": tanh_c})
        h, c = h_new, c_new
    pred = h @ params.dense_w + params.dense_b
    return pred, cache


def mae_loss_and_grads(
    params: LstmParams, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray | float]]:
    """MAE loss over one batch and its gradients w.r.t. every parameter.

    Gradients are averaged over the batch (full backpropagation through time
    across the window). Returned dict keys match :meth:`LstmParams.arrays`
    plus ``dense_b``.
    """
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    b = len(x)
    pred, cache = _forward_sequence(params, x)
    err = pred - y
    loss = float(np.abs(err).mean())

    d_pred = np.sign(err) / b
    grads: dict[str, np.ndarray | float] = {
        f"w_{g}": np.zeros_like(params.weight(g)) for g in _GATES
    }
    for g in _GATES:
        grads[f"b_{g}"] = np.zeros_like(params.bias(g))
    h_last = cache[-1]["o"] * cache[-1]["tanh_c"]
    grads["dense_w"] = d_pred @ h_last
    grads["dense_b"] = float(d_pred.sum())

    u = params.units
    dh = d_pred[:, None] * params.dense_w[None, :]
    dc = np.zeros((b, u))
    for step in reversed(cache):
        f, i, g, o = step["f"], step["i"], step["g"], step["o"]
        tanh_c = step["tanh_c"]
        z = step["z"]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c**2)
        df = dc * step["c_prev"]
        di = dc * g
        dg = dc * i
        dc_prev = dc * f
        da_f = df * f * (1.0 - f)
        da_i = di * i * (1.0 - i)
        da_g = dg * (1.0 - g**2)
        da_o = do * o * (1.0 - o)
        grads["w_forget"] += da_f.T @ z
        grads["w_input"] += da_i.T @ z
        grads["w_candidate"] += da_g.T @ z
        grads["w_output"] += da_o.T @ z
        grads["b_forget"] += da_f.sum(axis=0)
        grads["b_input"] += da_i.sum(axis=0)
        grads["b_candidate"] += da_g.sum(axis=0)
        grads["b_output"] += da_o.sum(axis=0)
        dz = da_f @ params.w_forget + da_i @ params.w_input
        dz += da_g @ params.w_candidate + da_o @ params.w_output
        dh = dz[:, :u]
        dc = dc_prev
    return loss, grads


class _Adam:
    def __init__(self, cfg: LstmConfig, params: LstmParams):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.m["dense_b"] = 0.0
        self.v["dense_b"] = 0.0

    def step(self, params: LstmParams, grads: dict) -> None:
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - cfg.adam_beta1**t
        bias2 = 1.0 - cfg.adam_beta2**t
        for key, grad in grads.items():
            self.m[key] = cfg.adam_beta1 * self.m[key] + (1.0 - cfg.adam_beta1) * grad
            self.v[key] = cfg.adam_beta2 * self.v[key] + (1.0 - cfg.adam_beta2) * (
                grad * grad if isinstance(grad, float) else grad**2
            )
            m_hat = self.m[key] / bias1
            v_hat = self.v[key] / bias2
            update = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
            if key == "dense_b":
                params.dense_b -= float(update)
            else:
                getattr(params, key)[...] -= update


def fit_scaler(values: np.ndarray) -> tuple[float, float]:
    """Min-max scaler bounds; a degenerate (constant) range is widened by 1."""
    lo = float(np.min(values))
    hi = float(np.max(values))
    if hi <= lo:
        hi = lo + 1.0
    return lo, hi


def lstm_train(
    train: WindowSet, cfg: LstmConfig, scale: bool = True
) -> tuple[LstmParams, list[float]]:
    """Train on a window set; returns the parameters and per-epoch mean loss.

    Inputs are min-max scaled to [0, 1] with the scaler stored on the model.
    Mini-batches are reshuffled every epoch from the config seed. Divergence
    (non-finite loss) aborts with :class:`NumericsError` reporting the last
    finite epoch.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    if train.inputs.shape[1] != cfg.window:
        raise ValueError(
            f"window set has width {train.inputs.shape[1]}, config expects {cfg.window}"
        )
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    if scale:
        lo, hi = fit_scaler(np.concatenate([train.inputs.ravel(), train.targets]))
    else:
        lo, hi = 0.0, 1.0
    params.scale_min, params.scale_max = lo, hi
    x_all = (train.inputs - lo) / (hi - lo)
    y_all = (train.targets - lo) / (hi - lo)

    adam = _Adam(cfg, params)
    n = len(train)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        abs_err_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grads = mae_loss_and_grads(params, x_all[idx], y_all[idx])
            if not np.isfinite(loss):
                raise NumericsError(
                    f"training diverged at epoch {epoch + 1}; "
                    f"last finite epoch: {len(history)}",
                    epoch=len(history),
                    history=history,
                )
            adam.step(params, grads)
            abs_err_sum += loss * len(idx)
        history.append(abs_err_sum / n)
    return params, history


def lstm_predict_next(params: LstmParams, window: np.ndarray) -> float:
    """Predict the next load factor from a look-back window, clipped to [0, 1]."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 1 or window.size != params.window:
        raise ValueError(
            f"window of length {window.size} does not match model window {params.window}"
        )
    span = params.scale_max - params.scale_min
    x = (window - params.scale_min) / span
    h = np.zeros(params.units)
    c = np.zeros(params.units)
    for t in range(params.window):
        h, c = lstm_cell_forward(params, x[t], h, c)
    y = float(h @ params.dense_w + params.dense_b)
    y = y * span + params.scale_min
    return float(min(1.0, max(0.0, y)))


# --- model persistence ----------------------------------------------------------

_MAGIC = "lstm-model v1"


def save_lstm(params: LstmParams, path: str | Path) -> None:
    """Write the model as a flat text file (17 significant digits, bit-exact
    round trip): a header of key=value lines followed by one named, shaped
    block per parameter array."""
    lines = [_MAGIC]
    lines.append(f"units={params.units}")
    lines.append(f"window={params.window}")
    lines.append(f"scale_min={params.scale_min:.17g}")
    lines.append(f"scale_max={params.scale_max:.17g}")
    lines.append(f"dense_b={params.dense_b:.17g}")
    for name, arr in params.arrays().items():
        mat = np.atleast_2d(arr)
        lines.append(f"array {name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_lstm(path: str | Path) -> LstmParams:
    """Read a model written by :func:`save_lstm`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a saved LSTM model")
    scalars: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("array "):
            _, name, rows, cols = line.split()
            rows, cols = int(rows), int(cols)
            block = [
                [float(v) for v in lines[i + 1 + r].split()] for r in range(rows)
            ]
            arrays[name] = np.asarray(block)
            i += 1 + rows
        else:
            key, _, value = line.partition("=")
            scalars[key] = value
            i += 1
    units = int(scalars["units"])
    return LstmParams(
        units=units,
        window=int(scalars["window"]),
        w_forget=arrays["w_forget"],
        w_input=arrays["w_input"],
        w_candidate=arrays["w_candidate"],
        w_output=arrays["w_output"],
        b_forget=arrays["b_forget"].ravel(),
        b_input=arrays["b_input"].ravel(),
        b_candidate=arrays["b_candidate"].ravel(),
        b_output=arrays["b_output"].ravel(),
        dense_w=arrays["dense_w"].ravel(),
        dense_b=float(scalars["dense_b"]),
        scale_min=float(scalars["scale_min"]),
        scale_max=float(scalars["scale_max"]),
    )
