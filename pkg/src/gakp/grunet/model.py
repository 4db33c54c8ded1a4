"""GRU similarity network written directly in numpy.

Gates read the concatenation ``[h_{t-1}, x_t]``::

    r_t  = sigmoid(W_r [h_{t-1}, x_t] + b_r)
    z_t  = sigmoid(W_z [h_{t-1}, x_t] + b_z)
    hh_t = tanh(W_h [r_t * h_{t-1}, x_t] + b_h)
    h_t  = (1 - z_t) * h_{t-1} + z_t * hh_t
    y    = sigmoid(W_o h_T + b_o)

Batches hold variable-length sequences right-aligned in a padded array with
a step mask; masked steps leave the hidden state untouched, so padding is
exactly equivalent to running the shorter sequence from ``h_0 = 0``.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, InputError

HIDDEN_SIZE = 134
INPUT_SIZE = 134
SEQUENCE_LENGTH = 7
PARAM_NAMES = ("W_r", "b_r", "W_z", "b_z", "W_h", "b_h", "W_o", "b_o")
MODEL_MAGIC = b"GAKPGRU1"
MODEL_VERSION = 1
LOSS_CLAMP = 1e-7


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GruModel:
    W_r: np.ndarray
    b_r: np.ndarray
    W_z: np.ndarray
    b_z: np.ndarray
    W_h: np.ndarray
    b_h: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray
    hidden_size: int = field(init=False)
    input_size: int = field(init=False)

    def __post_init__(self):
        self.hidden_size = self.W_r.shape[0]
        self.input_size = self.W_r.shape[1] - self.hidden_size
        H, n = self.hidden_size, self.hidden_size + self.input_size
        expected = {"W_r": (H, n), "W_z": (H, n), "W_h": (H, n), "b_r": (H,), "b_z": (H,), "b_h": (H,),
                    "W_o": (1, H), "b_o": (1,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InputError(f"grunet: {name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def init(cls, hidden_size=HIDDEN_SIZE, input_size=INPUT_SIZE, seed=0):
        """Weights uniform in +-1/sqrt(fan_in), biases zero."""
        rng = np.random.default_rng(seed)
        n = hidden_size + input_size

        def w(rows, cols):
            bound = 1.0 / np.sqrt(cols)
            return rng.uniform(-bound, bound, (rows, cols))

        return cls(W_r=w(hidden_size, n), b_r=np.zeros(hidden_size),
                   W_z=w(hidden_size, n), b_z=np.zeros(hidden_size),
                   W_h=w(hidden_size, n), b_h=np.zeros(hidden_size),
                   W_o=w(1, hidden_size), b_o=np.zeros(1))

    @classmethod
    def zeros(cls, hidden_size=HIDDEN_SIZE, input_size=INPUT_SIZE):
        n = hidden_size + input_size
        z = np.zeros
        return cls(z((hidden_size, n)), z(hidden_size), z((hidden_size, n)), z(hidden_size),
                   z((hidden_size, n)), z(hidden_size), z((1, hidden_size)), z(1))

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return GruModel(**{k: v.copy() for k, v in self.params().items()})


def pack_sequences(sequences, input_size=None):
    """Right-align sequences of shape ``(L_i, input)`` into ``(B, T, input)``
    plus a ``(B, T)`` mask."""
    seqs = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sequences]
    if not seqs:
        raise InputError("grunet: empty batch")
    input_size = input_size or seqs[0].shape[1]
    T = max(len(s) for s in seqs)
    X = np.zeros((len(seqs), T, input_size))
    mask = np.zeros((len(seqs), T))
    for b, s in enumerate(seqs):
        if len(s) == 0:
            raise InputError("grunet: empty sequence")
        if s.shape[1] != input_size:
            raise InputError(f"grunet: feature size {s.shape[1]}, model expects {input_size}")
        X[b, T - len(s):] = s
        mask[b, T - len(s):] = 1.0
    return X, mask


def forward_batch(model, X, mask):
    """Returns ``(y, cache)`` with ``y`` of shape ``(B,)``."""
    if X.shape[2] != model.input_size:
        raise InputError(f"grunet: feature size {X.shape[2]}, model expects {model.input_size}")
    B, T, _ = X.shape
    Hs = model.hidden_size
    h = np.zeros((B, Hs))
    WrT, WzT, WhT = model.W_r.T, model.W_z.T, model.W_h.T
    steps = []
    for t in range(T):
        x = X[:, t]
        m = mask[:, t:t + 1]
        hx = np.concatenate([h, x], axis=1)
        r = sigmoid(hx @ WrT + model.b_r)
        z = sigmoid(hx @ WzT + model.b_z)
        rhx = np.concatenate([r * h, x], axis=1)
        hh = np.tanh(rhx @ WhT + model.b_h)
        h_new = (1.0 - z) * h + z * hh
        h_next = m * h_new + (1.0 - m) * h
        steps.append((h, hx, rhx, r, z, hh, m))
        h = h_next
    logit = h @ model.W_o[0] + model.b_o[0]
    y = sigmoid(logit)
    return y, {"steps": steps, "h_final": h, "y": y}


def gru_forward(model, sequence):
    """Run one sequence. Returns ``(similarity, hidden_trace)`` where
    ``hidden_trace`` has one hidden vector per step."""
    seq = np.atleast_2d(np.asarray(sequence, dtype=float))
    if not 1 <= len(seq) <= SEQUENCE_LENGTH:
        raise InputError(f"grunet: sequence length must be in [1, {SEQUENCE_LENGTH}], got {len(seq)}")
    if seq.shape[1] != model.input_size:
        raise InputError(f"grunet: feature size {seq.shape[1]}, model expects {model.input_size}")
    y, cache = forward_batch(model, seq[None], np.ones((1, len(seq))))
    trace = [s[0][0] for s in cache["steps"][1:]] + [cache["h_final"][0]]
    return float(y[0]), np.array(trace)


def bce_loss(y, labels):
    yc = np.clip(y, LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    t = np.asarray(labels, dtype=float)
    return float(np.mean(-(t * np.log(yc) + (1.0 - t) * np.log(1.0 - yc))))


def loss_and_grads_packed(model, X, mask, labels):
    """Mean binary cross-entropy and its gradient by backpropagation through
    time."""
    y, cache = forward_batch(model, X, mask)
    t = np.asarray(labels, dtype=float)
    B = len(y)
    loss = bce_loss(y, t)
    # d loss / d logit; zero where the clamp is active
    inside = (y > LOSS_CLAMP) & (y < 1.0 - LOSS_CLAMP)
    dlogit = np.where(inside, y - t, 0.0) / B

    Hs = model.hidden_size
    g = {name: np.zeros_like(p) for name, p in model.params().items()}
    g["W_o"][0] = dlogit @ cache["h_final"]
    g["b_o"][0] = dlogit.sum()
    dh = np.outer(dlogit, model.W_o[0])
    for h_prev, hx, rhx, r, z, hh, m in reversed(cache["steps"]):
        dh_new = m * dh
        dh_prev = (1.0 - m) * dh + dh_new * (1.0 - z)
        dz = dh_new * (hh - h_prev)
        dhh = dh_new * z
        da_h = dhh * (1.0 - hh * hh)
        g["W_h"] += da_h.T @ rhx
        g["b_h"] += da_h.sum(0)
        d_rh = (da_h @ model.W_h)[:, :Hs]
        dr = d_rh * h_prev
        dh_prev += d_rh * r
        da_z = dz * z * (1.0 - z)
        g["W_z"] += da_z.T @ hx
        g["b_z"] += da_z.sum(0)
        dh_prev += (da_z @ model.W_z)[:, :Hs]
        da_r = dr * r * (1.0 - r)
        g["W_r"] += da_r.T @ hx
        g["b_r"] += da_r.sum(0)
        dh_prev += (da_r @ model.W_r)[:, :Hs]
        dh = dh_prev
    return loss, g


def gru_loss_and_grads(model, batch):
    """Loss and gradients for a list of AssociationSample."""
    if not batch:
        raise InputError("grunet: empty batch")
    X, mask = pack_sequences([s.sequence for s in batch], model.input_size)
    return loss_and_grads_packed(model, X, mask, [s.label for s in batch])


def predict_similarity(model, sequences, chunk=4096):
    """Similarity for many sequences at once."""
    out = []
    for i in range(0, len(sequences), chunk):
        X, mask = pack_sequences(sequences[i:i + chunk], model.input_size)
        out.append(forward_batch(model, X, mask)[0])
    return np.concatenate(out) if out else np.zeros(0)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<iii", MODEL_VERSION, model.hidden_size, model.input_size))
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def load_model(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(MODEL_MAGIC):
        raise FormatError(f"grunet: {path} is not a GRU model file (bad magic)")
    if len(raw) < 20:
        raise FormatError(f"grunet: {path}: truncated header")
    version, hidden, inp = struct.unpack("<iii", raw[8:20])
    if version != MODEL_VERSION:
        raise FormatError(f"grunet: {path}: unsupported model version {version}")
    if hidden <= 0 or inp <= 0:
        raise FormatError(f"grunet: {path}: bad dimensions hidden={hidden} input={inp}")
    n = hidden + inp
    shapes = {"W_r": (hidden, n), "b_r": (hidden,), "W_z": (hidden, n), "b_z": (hidden,),
              "W_h": (hidden, n), "b_h": (hidden,), "W_o": (1, hidden), "b_o": (1,)}
    expected = 20 + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != expected:
        raise FormatError(f"grunet: {path}: size {len(raw)} bytes, expected {expected}")
    params, offset = {}, 20
    for name in PARAM_NAMES:
        count = int(np.prod(shapes[name]))
        params[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shapes[name]).copy()
        offset += 8 * count
    return GruModel(**params)
