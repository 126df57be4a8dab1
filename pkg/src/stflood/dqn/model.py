"""31-30-3 Q-network in float and scale-100 fixed-point form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stflood.core import DEFAULT_CONFIG, ValidationError

N_INPUT = DEFAULT_CONFIG.input_size
N_HIDDEN = 30
N_ACTIONS = 3
SCALE = 100
INT16_MAX = 32767
INT32_MIN, INT32_MAX = -(2**31), 2**31 - 1


class AccumulatorOverflow(ArithmeticError):
    """A fixed-point accumulator left the signed 32-bit range."""


def round_half_away(x):
    """Round to nearest integer, ties away from zero (works on scalars and arrays)."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        _check_shapes(self)
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contains non-finite weights")

    @classmethod
    def initialize(cls, rng: np.random.Generator, n_in=N_INPUT, n_hidden=N_HIDDEN, n_out=N_ACTIONS):
        """He-uniform hidden layer, small output layer."""
        lim1 = np.sqrt(6.0 / n_in)
        lim2 = np.sqrt(6.0 / (n_hidden + n_out))
        return cls(
            rng.uniform(-lim1, lim1, (n_in, n_hidden)),
            np.zeros(n_hidden),
            rng.uniform(-lim2, lim2, (n_hidden, n_out)) * 0.1,
            np.zeros(n_out),
        )

    @classmethod
    def zeros(cls, n_in=N_INPUT, n_hidden=N_HIDDEN, n_out=N_ACTIONS):
        return cls(np.zeros((n_in, n_hidden)), np.zeros(n_hidden), np.zeros((n_hidden, n_out)), np.zeros(n_out))

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: getattr(self, k).shape for k in ("w1", "b1", "w2", "b2")}

    def copy(self) -> "MlpModel":
        return MlpModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray):
        """Batch forward pass; returns (q, pre-activation, hidden) for backprop."""
        z1 = x @ self.w1 + self.b1
        h = np.maximum(z1, 0.0)
        return h @ self.w2 + self.b2, z1, h


@dataclass
class QuantizedModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    scale: int = SCALE
    clamped: int = 0

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name))
            if arr.size and not np.issubdtype(arr.dtype, np.integer):
                if not np.all(arr == np.round(arr)):
                    raise ValidationError(f"quantized {name} must hold integers")
            arr = arr.astype(np.int64)
            if np.any(np.abs(arr) > INT16_MAX):
                raise ValidationError(f"quantized {name} exceeds the 2-byte weight range")
            setattr(self, name, arr)
        _check_shapes(self)

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: getattr(self, k).shape for k in ("w1", "b1", "w2", "b2")}

    @property
    def payload_bytes(self) -> int:
        """Flash footprint at two bytes per stored weight or bias."""
        return 2 * sum(getattr(self, k).size for k in ("w1", "b1", "w2", "b2"))

    def dequantize(self) -> MlpModel:
        s = float(self.scale)
        return MlpModel(self.w1 / s, self.b1 / s, self.w2 / s, self.b2 / s)


def _check_shapes(m) -> None:
    n_in, n_hidden = np.shape(m.w1) if np.ndim(m.w1) == 2 else (None, None)
    if n_in is None:
        raise ValidationError("w1 must be a matrix")
    if np.shape(m.b1) != (n_hidden,):
        raise ValidationError(f"b1 must have shape ({n_hidden},), got {np.shape(m.b1)}")
    if np.ndim(m.w2) != 2 or np.shape(m.w2)[0] != n_hidden:
        raise ValidationError(f"w2 must have {n_hidden} rows, got {np.shape(m.w2)}")
    if np.shape(m.b2) != (np.shape(m.w2)[1],):
        raise ValidationError("b2 does not match w2")


def _as_input(model, x) -> np.ndarray:
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.shape[-1] != model.w1.shape[0]:
        raise ValidationError(f"expected {model.w1.shape[0]} input features, got {x.shape[-1]}")
    return x


def infer_float(model: MlpModel, x) -> np.ndarray:
    x = _as_input(model, x)
    return model.forward(x)[0]


def quantize(model: MlpModel, scale: int = SCALE) -> QuantizedModel:
    """Round-half-away-from-zero at ``scale``, then clamp into int16."""
    out = {}
    clamped = 0
    for name in ("w1", "b1", "w2", "b2"):
        q = round_half_away(getattr(model, name) * scale)
        over = np.abs(q) > INT16_MAX
        clamped += int(over.sum())
        out[name] = np.clip(q, -INT16_MAX, INT16_MAX)
    return QuantizedModel(scale=scale, clamped=clamped, **out)


def quantize_input(x, scale: int = SCALE) -> np.ndarray:
    return round_half_away(np.asarray(getattr(x, "values", x)) * scale)


def _div_round(acc: np.ndarray, scale: int) -> np.ndarray:
    # add scale/2 then truncate toward zero: round half away from zero
    return np.sign(acc) * ((np.abs(acc) + scale // 2) // scale)


def _check_acc(x: np.ndarray, w: np.ndarray, bias_term: np.ndarray, acc: np.ndarray) -> None:
    # sum of |terms| bounds every partial sum; only rows failing it need the exact prefix check
    bound = np.abs(x) @ np.abs(w) + np.abs(bias_term)
    suspect = np.nonzero(np.any(bound > INT32_MAX, axis=-1))[0] if x.ndim == 2 else (
        [0] if np.any(bound > INT32_MAX) else []
    )
    for row in suspect:
        xr = x[row] if x.ndim == 2 else x
        partial = bias_term + np.cumsum(xr[:, None] * w, axis=0)
        if np.any(partial > INT32_MAX) or np.any(partial < INT32_MIN):
            raise AccumulatorOverflow("fixed-point accumulator overflowed 32 bits")
    if np.any(acc > INT32_MAX) or np.any(acc < INT32_MIN):
        raise AccumulatorOverflow("fixed-point accumulator overflowed 32 bits")


def infer_fixed(qmodel: QuantizedModel, x, *, prequantized: bool = False) -> np.ndarray:
    """Integer-only forward pass; returns Q-values as integers at ``qmodel.scale``.

    Accepts a single input or a batch (rows). Float inputs are quantized first.
    """
    s = qmodel.scale
    xq = np.asarray(x, dtype=np.int64) if prequantized else quantize_input(_as_input(qmodel, x), s)
    if xq.shape[-1] != qmodel.w1.shape[0]:
        raise ValidationError(f"expected {qmodel.w1.shape[0]} input features, got {xq.shape[-1]}")
    bias1 = qmodel.b1 * s
    acc1 = xq @ qmodel.w1 + bias1
    _check_acc(xq, qmodel.w1, bias1, acc1)
    h = np.maximum(_div_round(acc1, s), 0)
    bias2 = qmodel.b2 * s
    acc2 = h @ qmodel.w2 + bias2
    _check_acc(h, qmodel.w2, bias2, acc2)
    return _div_round(acc2, s)


def greedy_action(q: np.ndarray) -> int:
    return int(np.argmax(q))


def random_valid_inputs(rng: np.random.Generator, count: int, config=DEFAULT_CONFIG) -> np.ndarray:
    """Uniform features, random one-hot N and random +-1 history flags."""
    k = config.k_nodes
    x = np.empty((count, config.input_size))
    x[:, : 2 * k] = rng.uniform(-1.0, 1.0, (count, 2 * k))
    onehot = np.zeros((count, config.n_max + 1))
    onehot[np.arange(count), rng.integers(0, config.n_max + 1, count)] = 1.0
    x[:, 2 * k : 2 * k + config.n_max + 1] = onehot
    x[:, 2 * k + config.n_max + 1 :] = rng.choice([-1.0, 1.0], (count, config.history_len))
    return x


def agreement_report(model: MlpModel, qmodel: QuantizedModel, samples: int = 100_000, seed: int = 0) -> dict:
    """Monte Carlo comparison of float and fixed-point inference on random valid inputs."""
    rng = np.random.default_rng(seed)
    x = random_valid_inputs(rng, samples)
    qf = infer_float(model, x)
    qi = infer_fixed(qmodel, x)
    agree = np.argmax(qf, axis=1) == np.argmax(qi, axis=1)
    err = np.abs(qi / qmodel.scale - qf)
    return {
        "samples": samples,
        "argmax_agreement": float(agree.mean()),
        "max_abs_error": float(err.max()),
        "mean_abs_error": float(err.mean()),
        "payload_bytes": qmodel.payload_bytes,
        "clamped_weights": qmodel.clamped,
        "scale": qmodel.scale,
    }
