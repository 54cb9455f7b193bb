"""GRU encoder-decoder with hand-written backpropagation through time.

Cell equations (no gate biases):

    g_r = sigmoid(W_ir x + W_hr h)
    r   = tanh(g_r * (W_h1 h) + W_x1 x)
    g_u = sigmoid(W_iu x + W_hu h)
    h'  = r * (1 - g_u) + g_u * h

Note the reset gate multiplies ``W_h1 h`` after the matrix product. The
decoder is autoregressive: its first input is the last encoder input and
each later input is the previous prediction. Everything works on batches
shaped ``(batch, time, features)``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import CorruptCheckpoint, DimensionMismatch, ParseError, StaleTape, VersionMismatch
from .numerics import make_rng

GATE_NAMES = ("w_ir", "w_hr", "w_iu", "w_hu", "w_x1", "w_h1")
CKPT_MAGIC = b"UAVGRU\0\0"
CKPT_VERSION = 1

PRESETS = {"small": (64, 2), "medium": (128, 3), "large": (256, 5)}


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 3
    output_dim: int = 3
    hidden_dim: int = 64
    num_layers: int = 2
    dropout_rate: float = 0.5
    in_len: int = 20
    out_len: int = 10

    def __post_init__(self):
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ValueError("hidden_dim and num_layers must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.input_dim != self.output_dim:
            raise ValueError("the autoregressive decoder feeds outputs back as inputs; dims must match")
        if self.in_len < 1 or self.out_len < 1:
            raise ValueError("window lengths must be >= 1")


def sigmoid(x):
    return expit(x)


def _outer_sum(d, a) -> np.ndarray:
    """``sum_t d[t].T @ a[t]`` as one matmul over the flattened (time, batch) axis."""
    return d.reshape(-1, d.shape[-1]).T @ a.reshape(-1, a.shape[-1])


@dataclass
class GruLayerWeights:
    w_ir: np.ndarray
    w_hr: np.ndarray
    w_iu: np.ndarray
    w_hu: np.ndarray
    w_x1: np.ndarray
    w_h1: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in GATE_NAMES]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        # input side (3H, in): reset | update | candidate ; hidden side (3H, H) in the same order
        return (np.concatenate([self.w_ir, self.w_iu, self.w_x1]),
                np.concatenate([self.w_hr, self.w_hu, self.w_h1]))

    @classmethod
    def zeros(cls, in_dim: int, hidden: int) -> "GruLayerWeights":
        shapes = {n: (hidden, in_dim) if n in ("w_ir", "w_iu", "w_x1") else (hidden, hidden) for n in GATE_NAMES}
        return cls(**{n: np.zeros(s) for n, s in shapes.items()})


@dataclass
class ModelParams:
    encoder: list[GruLayerWeights]
    decoder: list[GruLayerWeights]
    out_w: np.ndarray
    out_b: np.ndarray
    version: int = field(default=0, compare=False)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in the fixed checkpoint order."""
        out = []
        for layer in self.encoder + self.decoder:
            out.extend(layer.arrays())
        out.extend([self.out_w, self.out_b])
        return out

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        names = []
        for part, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, _ in enumerate(layers):
                names.extend(f"{part}.{i}.{n}" for n in GATE_NAMES)
        names += ["out_w", "out_b"]
        return list(zip(names, self.arrays()))

    def copy(self) -> "ModelParams":
        def cp(layers):
            return [GruLayerWeights(*[a.copy() for a in layer.arrays()]) for layer in layers]
        return ModelParams(cp(self.encoder), cp(self.decoder), self.out_w.copy(), self.out_b.copy(), self.version)

    def num_values(self) -> int:
        return sum(a.size for a in self.arrays())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(mine, theirs))

    __hash__ = None

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        H, L = config.hidden_dim, config.num_layers
        enc = [GruLayerWeights.zeros(config.input_dim if i == 0 else H, H) for i in range(L)]
        dec = [GruLayerWeights.zeros(config.output_dim if i == 0 else H, H) for i in range(L)]
        return cls(enc, dec, np.zeros((config.output_dim, H)), np.zeros(config.output_dim))


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Every entry uniform in [-1/sqrt(H), 1/sqrt(H)), drawn in checkpoint order."""
    params = ModelParams.zeros(config)
    bound = 1.0 / np.sqrt(config.hidden_dim)
    rng = make_rng(seed)
    for a in params.arrays():
        a[...] = rng.uniform(-bound, bound, size=a.shape)
    return params


def gru_cell_forward(x, h_prev, w: GruLayerWeights) -> np.ndarray:
    """One step of the cell for a single vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    H = w.w_hr.shape[0]
    if x.shape[-1] != w.w_ir.shape[1] or h_prev.shape[-1] != H:
        raise DimensionMismatch(f"x {x.shape} / h {h_prev.shape} do not fit weights (H={H}, in={w.w_ir.shape[1]})")
    g_r = sigmoid(x @ w.w_ir.T + h_prev @ w.w_hr.T)
    r = np.tanh(g_r * (h_prev @ w.w_h1.T) + x @ w.w_x1.T)
    g_u = sigmoid(x @ w.w_iu.T + h_prev @ w.w_hu.T)
    u = g_u * h_prev
    return r * (1.0 - g_u) + u


@dataclass
class _LayerTape:
    """Activations of one layer over a run of steps, each shaped (T, B, ...)."""
    x: np.ndarray
    h_prev: np.ndarray
    g_r: np.ndarray
    c: np.ndarray
    r: np.ndarray
    g_u: np.ndarray


@dataclass
class TapeCache:
    params: ModelParams
    params_version: int
    config: ModelConfig
    batched: bool
    encoder: list[_LayerTape]
    dropout_masks: list[np.ndarray | None]
    decoder: list[_LayerTape]
    dec_top: np.ndarray  # (K, B, H) top decoder hidden states fed to the head
    used: bool = False


def _cell_step(ax, h, Wh, H):
    """Shared forward for a step given the precomputed input projection ``ax`` (B, 3H)."""
    ah = h @ Wh.T
    gates = expit(ax[:, :2 * H] + ah[:, :2 * H])
    g_r, g_u = gates[:, :H], gates[:, H:]
    c = ah[:, 2 * H:]
    r = np.tanh(g_r * c + ax[:, 2 * H:])
    h_new = r * (1.0 - g_u) + g_u * h
    return h_new, g_r, c, r, g_u


def model_forward(inputs, params: ModelParams, config: ModelConfig, mode: str = "eval",
                  rng: np.random.Generator | None = None):
    """Run encoder and decoder; returns ``(outputs, tape)``.

    ``inputs`` is ``(in_len, 3)`` or ``(batch, in_len, 3)``; outputs match.
    ``mode="train"`` applies inverted dropout between encoder layers and
    needs ``rng``.
    """
    X = np.asarray(inputs, dtype=np.float64)
    batched = X.ndim == 3
    if not batched:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (config.in_len, config.input_dim):
        raise DimensionMismatch(f"expected (batch, {config.in_len}, {config.input_dim}), got {np.shape(inputs)}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train" and config.dropout_rate > 0
    if train and rng is None:
        raise ValueError("train mode needs an rng for dropout masks")
    B, T, _ = X.shape
    H, L, K = config.hidden_dim, config.num_layers, config.out_len
    keep = 1.0 - config.dropout_rate

    seq = X.transpose(1, 0, 2)  # (T, B, in)
    enc_tapes, masks, finals = [], [], []
    for li, layer in enumerate(params.encoder):
        Wx, Wh = layer.stacked()
        ax_all = seq @ Wx.T  # (T, B, 3H)
        h = np.zeros((B, H))
        hs = np.empty((T, B, H))
        tape = _LayerTape(seq, np.empty((T, B, H)), np.empty((T, B, H)), np.empty((T, B, H)),
                          np.empty((T, B, H)), np.empty((T, B, H)))
        for t in range(T):
            tape.h_prev[t] = h
            h, tape.g_r[t], tape.c[t], tape.r[t], tape.g_u[t] = _cell_step(ax_all[t], h, Wh, H)
            hs[t] = h
        enc_tapes.append(tape)
        finals.append(h)
        if train and li < L - 1:
            mask = (rng.random((T, B, H)) < keep) / keep
            masks.append(mask)
            seq = hs * mask
        else:
            masks.append(None)
            seq = hs

    dec_stacked = [layer.stacked() for layer in params.decoder]
    dec_tapes = [_LayerTape(np.empty((K, B, config.output_dim if i == 0 else H)), *(np.empty((K, B, H)) for _ in range(5)))
                 for i in range(L)]
    dec_top = np.empty((K, B, H))
    outputs = np.empty((K, B, config.output_dim))
    hidden = list(finals)
    y = X[:, -1, :]
    for k in range(K):
        inp = y
        for li, (Wx, Wh) in enumerate(dec_stacked):
            tape = dec_tapes[li]
            tape.x[k] = inp
            tape.h_prev[k] = hidden[li]
            h, tape.g_r[k], tape.c[k], tape.r[k], tape.g_u[k] = _cell_step(inp @ Wx.T, hidden[li], Wh, H)
            hidden[li] = h
            inp = h
        dec_top[k] = inp
        y = inp @ params.out_w.T + params.out_b
        outputs[k] = y

    out = outputs.transpose(1, 0, 2)
    tape = TapeCache(params, params.version, config, batched, enc_tapes, masks, dec_tapes, dec_top)
    return (out if batched else out[0]), tape


def _cell_backward(dh_new, tp: _LayerTape, t: int, H: int):
    """Backprop one step; returns (d_ax (B,3H), d_ah (B,3H), dh_prev_direct (B,H))."""
    g_r, c, r, g_u, h = tp.g_r[t], tp.c[t], tp.r[t], tp.g_u[t], tp.h_prev[t]
    dr = dh_new * (1.0 - g_u)
    dgu = dh_new * (h - r)
    dac = dr * (1.0 - r * r)
    dar = dac * c * g_r * (1.0 - g_r)
    dau = dgu * g_u * (1.0 - g_u)
    dc = dac * g_r
    d_ax = np.concatenate([dar, dau, dac], axis=1)
    d_ah = np.concatenate([dar, dau, dc], axis=1)
    return d_ax, d_ah, dh_new * g_u


def _unstack(dWx, dWh, H) -> GruLayerWeights:
    return GruLayerWeights(w_ir=dWx[:H], w_hr=dWh[:H], w_iu=dWx[H:2 * H], w_hu=dWh[H:2 * H],
                           w_x1=dWx[2 * H:], w_h1=dWh[2 * H:])


def model_backward(tape: TapeCache, d_output) -> ModelParams:
    """Exact gradient of ``sum(d_output * outputs)`` with respect to every parameter."""
    params, config = tape.params, tape.config
    if tape.params_version != params.version:
        raise StaleTape("parameters changed since this forward pass")
    dY = np.asarray(d_output, dtype=np.float64)
    if not tape.batched:
        dY = dY[None]
    K, L, H = config.out_len, config.num_layers, config.hidden_dim
    B = tape.dec_top.shape[1]
    if dY.shape != (B, K, config.output_dim):
        raise DimensionMismatch(f"d_output shape {np.shape(d_output)} does not match outputs")
    dY = dY.transpose(1, 0, 2)  # (K, B, out)

    grads = ModelParams.zeros(config)
    dy_total = np.empty_like(dY)  # direct gradient plus what flows back through the next step's input

    # decoder: step by step, top layer down, carrying the feedback gradient into the previous output
    dec_stacked = [layer.stacked() for layer in params.decoder]
    d_ax_all = [np.empty((K, B, 3 * H)) for _ in range(L)]
    d_ah_all = [np.empty((K, B, 3 * H)) for _ in range(L)]
    dh = [np.zeros((B, H)) for _ in range(L)]
    d_feedback = np.zeros((B, config.output_dim))
    for k in range(K - 1, -1, -1):
        dy = dY[k] + d_feedback
        dy_total[k] = dy
        d_in = dy @ params.out_w
        for li in range(L - 1, -1, -1):
            Wx, Wh = dec_stacked[li]
            d_ax, d_ah, dh_direct = _cell_backward(d_in + dh[li], tape.decoder[li], k, H)
            d_ax_all[li][k], d_ah_all[li][k] = d_ax, d_ah
            dh[li] = dh_direct + d_ah @ Wh
            d_in = d_ax @ Wx
        d_feedback = d_in if k > 0 else 0.0
    grads.out_w[...] = _outer_sum(dy_total, tape.dec_top)
    grads.out_b[...] = dy_total.sum(axis=(0, 1))
    for li in range(L):
        tp = tape.decoder[li]
        dWx = _outer_sum(d_ax_all[li], tp.x)
        dWh = _outer_sum(d_ah_all[li], tp.h_prev)
        grads.decoder[li] = _unstack(dWx, dWh, H)

    # encoder: each layer over its whole sequence, top layer first
    T = config.in_len
    d_seq_out = None  # gradient w.r.t. the (post-dropout) outputs of the current layer
    for li in range(L - 1, -1, -1):
        Wx, Wh = params.encoder[li].stacked()
        tp = tape.encoder[li]
        d_ax_seq = np.empty((T, B, 3 * H))
        d_ah_seq = np.empty((T, B, 3 * H))
        dh_carry = dh[li]  # from the decoder's use of the final state
        for t in range(T - 1, -1, -1):
            dh_t = dh_carry if d_seq_out is None else dh_carry + d_seq_out[t]
            d_ax, d_ah, dh_direct = _cell_backward(dh_t, tp, t, H)
            d_ax_seq[t], d_ah_seq[t] = d_ax, d_ah
            dh_carry = dh_direct + d_ah @ Wh
        dWx = _outer_sum(d_ax_seq, tp.x)
        dWh = _outer_sum(d_ah_seq, tp.h_prev)
        grads.encoder[li] = _unstack(dWx, dWh, H)
        if li > 0:
            d_seq_out = d_ax_seq @ Wx  # w.r.t. this layer's input = lower layer's dropped-out output
            mask = tape.dropout_masks[li - 1]
            if mask is not None:
                d_seq_out = d_seq_out * mask
    return grads


# ---------------------------------------------------------------- checkpoints

def _header(params: ModelParams, config: ModelConfig, stats) -> dict:
    return {
        "config": asdict(config),
        "channel": stats.channel.value,
        "norm_method": stats.method.value,
        "stats_fingerprint": stats.fingerprint(),
        "stats": stats.to_dict(),
        "shapes": [list(a.shape) for a in params.arrays()],
    }


def save_checkpoint(params: ModelParams, config: ModelConfig, stats, path) -> None:
    """Binary checkpoint.

    Layout (little-endian): 8-byte magic ``UAVGRU\\0\\0``, uint32 format
    version, uint32 header length, UTF-8 JSON header (config, channel,
    normalisation method, stats and their fingerprint, array shapes),
    float64 payload of ``ModelParams.arrays()`` in order, then an 8-byte
    BLAKE2b checksum of everything before it.
    """
    header = json.dumps(_header(params, config, stats), sort_keys=True).encode("utf-8")
    body = bytearray(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(header)) + header)
    for a in params.arrays():
        body += np.ascontiguousarray(a, dtype="<f8").tobytes()
    body += hashlib.blake2b(bytes(body), digest_size=8).digest()
    Path(path).write_bytes(bytes(body))


def load_checkpoint(path):
    """Returns ``(params, config, stats)``."""
    from .normalize import NormStats

    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:8] != CKPT_MAGIC:
        raise CorruptCheckpoint(f"{path}: not a checkpoint (bad magic)")
    body, checksum = raw[:-8], raw[-8:]
    if hashlib.blake2b(body, digest_size=8).digest() != checksum:
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    version, hlen = struct.unpack("<II", body[8:16])
    if version != CKPT_VERSION:
        raise VersionMismatch(f"checkpoint format {version} != {CKPT_VERSION}")
    try:
        header = json.loads(body[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: bad checkpoint header: {exc}") from None
    config = ModelConfig(**header["config"])
    stats = NormStats.from_dict(header["stats"])
    params = ModelParams.zeros(config)
    payload = np.frombuffer(body, dtype="<f8", offset=16 + hlen)
    if payload.size != params.num_values():
        raise CorruptCheckpoint(f"{path}: payload has {payload.size} values, expected {params.num_values()}")
    pos = 0
    for a in params.arrays():
        a[...] = payload[pos:pos + a.size].reshape(a.shape)
        pos += a.size
    return params, config, stats
