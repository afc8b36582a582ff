"""Recurrent next-token model: an RWKV-style block stack run step by step.

Architecture per block, applied to the running (batch, d_embed) residual x:

    x += time_mix(ln1(x))      attention-like mix with a per-channel
                               exponential-decay state (a, b, p accumulators,
                               max-shifted so the exponentials never overflow)
    x += channel_mix(ln2(x))   squared-ReLU feed-forward
    x += shortcut @ block_input   per-block linear shortcut (d x d)

followed by a final layer norm and a (vocab, d_embed) output head. Token
shift feeds each mix the previous token's normalized activations, so the
per-stream state is five d-sized vectors per layer: two shift caches and the
(a, b, p) accumulators, p initialized to -1e30. The stored `time_decay`
tensor is used as -exp(time_decay), keeping the decay strictly negative.
There is deliberately no post-embedding layer norm.

All tensors and arithmetic are float32. Outputs are deterministic for a
given (platform, array shapes); batched and single-step calls may differ in
the last bit, so stream coding always runs encode and decode at the same
batch shape (see the coder module).

Weights files: magic "L3TW", version 1, the four config integers, then a
tensor directory (name, rank, dims, float32 payload) sorted by name, with a
trailing FNV-1a hash. Tensor names:

    emb.weight (V,d)
    blocks.{i}.ln1.weight/.bias, blocks.{i}.ln2.weight/.bias
    blocks.{i}.att.time_decay/.time_first/.time_mix_k/.time_mix_v/.time_mix_r
    blocks.{i}.att.key.weight/.value.weight/.receptance.weight/.output.weight
    blocks.{i}.ffn.time_mix_k/.time_mix_r
    blocks.{i}.ffn.key.weight (h,d), .receptance.weight (d,d), .value.weight (d,h)
    blocks.{i}.shortcut.weight (d,d)
    ln_out.weight/.bias
    head.weight (V,d)

Projections are stored (out_features, in_features). Unmerged reparameterized
branches live in tensors named blocks.{i}.{att|ffn}.{r|k|v}.hira.{m}.{A|B};
`load_model` refuses files containing them (merge first), while
`load_branched_model` accepts and validates them for merge tooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._binio import (ByteReader, ByteWriter, FormatError, atomic_write,
                     check_trailing_hash)

MAGIC = b"L3TW"
VERSION = 1

WKV_P_INIT = np.float32(-1.0e30)
LN_EPS = np.float32(1e-5)

# (n_layers, d_embed, d_hidden) for the published model sizes; the names
# reflect backbone parameter counts at a byte-scale vocabulary.
PRESETS = {
    "200k": (2, 96, 96),
    "800k": (2, 176, 192),
    "3.2m": (3, 256, 512),
    "12m": (4, 384, 1024),
}


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_embed: int
    d_hidden: int
    vocab_size: int

    def __post_init__(self) -> None:
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.d_embed < 1 or self.d_hidden < 1:
            raise ValueError("model widths must be positive")
        if not 1 <= self.vocab_size < (1 << 16):
            raise ValueError("vocab_size must be in [1, 65535]")


def preset(name: str, vocab_size: int) -> ModelConfig:
    key = name.lower().removeprefix("l3tc-")
    if key not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    n_layers, d_embed, d_hidden = PRESETS[key]
    return ModelConfig(n_layers, d_embed, d_hidden, vocab_size)


def _expected_tensors(cfg: ModelConfig):
    d, h, v = cfg.d_embed, cfg.d_hidden, cfg.vocab_size
    yield "emb.weight", (v, d)
    for i in range(cfg.n_layers):
        p = f"blocks.{i}."
        for ln in ("ln1", "ln2"):
            yield p + ln + ".weight", (d,)
            yield p + ln + ".bias", (d,)
        for name in ("time_decay", "time_first", "time_mix_k", "time_mix_v",
                     "time_mix_r"):
            yield p + "att." + name, (d,)
        for name in ("key", "value", "receptance", "output"):
            yield p + "att." + name + ".weight", (d, d)
        yield p + "ffn.time_mix_k", (d,)
        yield p + "ffn.time_mix_r", (d,)
        yield p + "ffn.key.weight", (h, d)
        yield p + "ffn.receptance.weight", (d, d)
        yield p + "ffn.value.weight", (d, h)
        yield p + "shortcut.weight", (d, d)
    yield "ln_out.weight", (d,)
    yield "ln_out.bias", (d,)
    yield "head.weight", (v, d)


_BRANCH_BASE = {
    ("att", "r"): "att.receptance.weight",
    ("att", "k"): "att.key.weight",
    ("att", "v"): "att.value.weight",
    ("ffn", "r"): "ffn.receptance.weight",
    ("ffn", "k"): "ffn.key.weight",
    ("ffn", "v"): "ffn.value.weight",
}


def branch_key(layer: int, block: str, proj: str, m: int, part: str) -> str:
    return f"blocks.{layer}.{block}.{proj}.hira.{m}.{part}"


def parse_branch_key(name: str):
    """Split a branch tensor name; None when the name is not one."""
    parts = name.split(".")
    if len(parts) != 7 or parts[0] != "blocks" or parts[4] != "hira":
        return None
    if not (parts[1].isdigit() and parts[5].isdigit()):
        return None
    if parts[2] not in ("att", "ffn") or parts[3] not in ("r", "k", "v"):
        return None
    if parts[6] not in ("A", "B"):
        return None
    return int(parts[1]), parts[2], parts[3], int(parts[5]), parts[6]


class ModelWeights:
    """Config plus a name -> float32 ndarray tensor map."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray],
                 content_hash: int | None = None) -> None:
        self.config = config
        self.tensors = {k: np.ascontiguousarray(v, dtype=np.float32)
                        for k, v in tensors.items()}
        self.content_hash = content_hash
        self._runtime = None
        self.validate()

    def validate(self) -> None:
        expected = dict(_expected_tensors(self.config))
        seen_branches: dict[tuple, dict] = {}
        for name, arr in self.tensors.items():
            if name in expected:
                if arr.shape != expected[name]:
                    raise FormatError(
                        f"tensor {name}: shape {arr.shape}, "
                        f"expected {expected[name]}")
                continue
            parsed = parse_branch_key(name)
            if parsed is None:
                raise FormatError(f"unexpected tensor {name!r}")
            layer, block, proj, m, part = parsed
            if layer >= self.config.n_layers:
                raise FormatError(f"branch tensor {name!r}: no such layer")
            seen_branches.setdefault((layer, block, proj, m), {})[part] = arr
        missing = expected.keys() - self.tensors.keys()
        if missing:
            raise FormatError(f"missing tensors: {sorted(missing)[:4]}...")
        for (layer, block, proj, m), parts in seen_branches.items():
            if set(parts) != {"A", "B"}:
                raise FormatError(
                    f"branch {layer}/{block}/{proj}/{m} needs both A and B")
            base = self.tensors[f"blocks.{layer}." + _BRANCH_BASE[block, proj]]
            a, b = parts["A"], parts["B"]
            if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
                raise FormatError("branch factor ranks do not line up")
            if a.shape[0] != base.shape[0] or b.shape[1] != base.shape[1]:
                raise FormatError("branch factors do not match the base shape")
        ms = sorted({k[3] for k in seen_branches})
        if ms and ms != list(range(len(ms))):
            raise FormatError("branch indices must be 0..m-1")

    @property
    def has_branches(self) -> bool:
        return any(".hira." in k for k in self.tensors)

    def param_count(self) -> int:
        return sum(int(a.size) for a in self.tensors.values())

    def identity_hash(self) -> int:
        """Hash this model would carry on disk; computed lazily."""
        if self.content_hash is None:
            data = save_model_bytes(self)
            self.content_hash = int.from_bytes(data[-4:], "little")
        return self.content_hash

    def invalidate(self) -> None:
        """Drop caches after in-place tensor edits."""
        self._runtime = None
        self.content_hash = None


class RecurrentState:
    """Per-stream recurrent state: (n_layers, batch, d_embed) arrays."""

    __slots__ = ("att_x", "ffn_x", "wkv_a", "wkv_b", "wkv_p")

    def __init__(self, att_x, ffn_x, wkv_a, wkv_b, wkv_p) -> None:
        self.att_x = att_x
        self.ffn_x = ffn_x
        self.wkv_a = wkv_a
        self.wkv_b = wkv_b
        self.wkv_p = wkv_p

    @property
    def batch(self) -> int:
        return self.att_x.shape[1]

    def copy(self) -> "RecurrentState":
        return RecurrentState(self.att_x.copy(), self.ffn_x.copy(),
                              self.wkv_a.copy(), self.wkv_b.copy(),
                              self.wkv_p.copy())

    def size_scalars(self) -> int:
        return sum(int(getattr(self, n).size) for n in self.__slots__)


def init_state(config: ModelConfig, batch: int = 1) -> RecurrentState:
    shape = (config.n_layers, batch, config.d_embed)
    z = lambda: np.zeros(shape, dtype=np.float32)
    p = np.full(shape, WKV_P_INIT, dtype=np.float32)
    return RecurrentState(z(), z(), z(), z(), p)


def state_size(config: ModelConfig) -> int:
    """Scalars of recurrent state per stream."""
    return 5 * config.n_layers * config.d_embed


class _Proj:
    __slots__ = ("wt", "branches")

    def __init__(self, w: np.ndarray, branches) -> None:
        self.wt = np.ascontiguousarray(w.T)
        # stored as (B_m^T, A_m^T) pairs, applied low-rank first
        self.branches = [(np.ascontiguousarray(b.T), np.ascontiguousarray(a.T))
                         for a, b in branches]

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = x @ self.wt
        for bt, at in self.branches:
            y += (x @ bt) @ at
        return y


class _Layer:
    __slots__ = ("ln1_w", "ln1_b", "ln2_w", "ln2_b", "att_w", "att_u",
                 "att_mk", "att_mv", "att_mr", "att_mk1", "att_mv1",
                 "att_mr1", "att_r", "att_k", "att_v", "att_o",
                 "ffn_mk", "ffn_mr", "ffn_mk1", "ffn_mr1",
                 "ffn_r", "ffn_k", "ffn_v", "shortcut_t")


def _collect_branches(tensors: dict, layer: int, block: str, proj: str):
    out = []
    m = 0
    while branch_key(layer, block, proj, m, "A") in tensors:
        out.append((tensors[branch_key(layer, block, proj, m, "A")],
                    tensors[branch_key(layer, block, proj, m, "B")]))
        m += 1
    return out


def _runtime(model: ModelWeights):
    if model._runtime is not None:
        return model._runtime
    t = model.tensors
    layers = []
    for i in range(model.config.n_layers):
        p = f"blocks.{i}."
        L = _Layer()
        L.ln1_w, L.ln1_b = t[p + "ln1.weight"], t[p + "ln1.bias"]
        L.ln2_w, L.ln2_b = t[p + "ln2.weight"], t[p + "ln2.bias"]
        L.att_w = -np.exp(t[p + "att.time_decay"])
        L.att_u = t[p + "att.time_first"]
        one = np.float32(1.0)
        L.att_mk = t[p + "att.time_mix_k"]
        L.att_mv = t[p + "att.time_mix_v"]
        L.att_mr = t[p + "att.time_mix_r"]
        L.att_mk1 = one - L.att_mk
        L.att_mv1 = one - L.att_mv
        L.att_mr1 = one - L.att_mr
        L.att_r = _Proj(t[p + "att.receptance.weight"],
                        _collect_branches(t, i, "att", "r"))
        L.att_k = _Proj(t[p + "att.key.weight"],
                        _collect_branches(t, i, "att", "k"))
        L.att_v = _Proj(t[p + "att.value.weight"],
                        _collect_branches(t, i, "att", "v"))
        L.att_o = _Proj(t[p + "att.output.weight"], [])
        L.ffn_mk = t[p + "ffn.time_mix_k"]
        L.ffn_mr = t[p + "ffn.time_mix_r"]
        L.ffn_mk1 = one - L.ffn_mk
        L.ffn_mr1 = one - L.ffn_mr
        L.ffn_r = _Proj(t[p + "ffn.receptance.weight"],
                        _collect_branches(t, i, "ffn", "r"))
        L.ffn_k = _Proj(t[p + "ffn.key.weight"],
                        _collect_branches(t, i, "ffn", "k"))
        L.ffn_v = _Proj(t[p + "ffn.value.weight"],
                        _collect_branches(t, i, "ffn", "v"))
        L.shortcut_t = np.ascontiguousarray(t[p + "shortcut.weight"].T)
        layers.append(L)
    rt = {
        "emb": t["emb.weight"],
        "layers": layers,
        "lnout_w": t["ln_out.weight"],
        "lnout_b": t["ln_out.bias"],
        "head_t": np.ascontiguousarray(t["head.weight"].T),
    }
    model._runtime = rt
    return rt


def _ln(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    return xc / np.sqrt(var + LN_EPS) * w + b


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.float32(1.0) / (np.float32(1.0) + np.exp(-z))


def forward_step_batch(model: ModelWeights, state: RecurrentState,
                       tokens: np.ndarray):
    """One step for a batch of independent streams.

    ``tokens`` is a (batch,) integer array. Returns (logits, state) where
    logits is (batch, vocab) float32 and ``state`` is the same object,
    advanced in place. Rows never interact.
    """
    rt = _runtime(model)
    if state.batch != len(tokens):
        raise ValueError("state batch does not match token batch")
    with np.errstate(over="ignore", under="ignore"):
        x = rt["emb"][np.asarray(tokens, dtype=np.int64)]
        for i, L in enumerate(rt["layers"]):
            xin = x
            xx = _ln(x, L.ln1_w, L.ln1_b)
            prev = state.att_x[i]
            xk = xx * L.att_mk + prev * L.att_mk1
            xv = xx * L.att_mv + prev * L.att_mv1
            xr = xx * L.att_mr + prev * L.att_mr1
            state.att_x[i] = xx
            r = _sigmoid(L.att_r.apply(xr))
            k = L.att_k.apply(xk)
            v = L.att_v.apply(xv)
            a = state.wkv_a[i]
            b = state.wkv_b[i]
            p = state.wkv_p[i]
            ww = L.att_u + k
            qq = np.maximum(p, ww)
            e1 = np.exp(p - qq)
            e2 = np.exp(ww - qq)
            wkv = (e1 * a + e2 * v) / (e1 * b + e2)
            ww = p + L.att_w
            qq = np.maximum(ww, k)
            e1 = np.exp(ww - qq)
            e2 = np.exp(k - qq)
            state.wkv_a[i] = e1 * a + e2 * v
            state.wkv_b[i] = e1 * b + e2
            state.wkv_p[i] = qq
            x = x + L.att_o.apply(r * wkv)
            xx = _ln(x, L.ln2_w, L.ln2_b)
            prev = state.ffn_x[i]
            xk = xx * L.ffn_mk + prev * L.ffn_mk1
            xr = xx * L.ffn_mr + prev * L.ffn_mr1
            state.ffn_x[i] = xx
            rr = _sigmoid(L.ffn_r.apply(xr))
            kk = L.ffn_k.apply(xk)
            np.maximum(kk, 0, out=kk)
            kk *= kk
            x = x + rr * L.ffn_v.apply(kk)
            x = x + xin @ L.shortcut_t
        x = _ln(x, rt["lnout_w"], rt["lnout_b"])
        logits = x @ rt["head_t"]
    return logits, state


def forward_step(model: ModelWeights, state: RecurrentState, token: int):
    """Single-stream step: returns ((vocab,) logits, state)."""
    logits, state = forward_step_batch(model, state,
                                       np.array([token], dtype=np.int64))
    return logits[0], state


def next_distribution_batch(model: ModelWeights, state: RecurrentState,
                            tokens: np.ndarray):
    """Probabilities over the next token for each stream, (batch, vocab)."""
    logits, state = forward_step_batch(model, state, tokens)
    m = logits.max(axis=1, keepdims=True)
    np.subtract(logits, m, out=logits)
    with np.errstate(under="ignore"):
        np.exp(logits, out=logits)
    s = logits.sum(axis=1, keepdims=True)
    np.divide(logits, s, out=logits)
    np.maximum(logits, np.float32(1e-45), out=logits)  # strictly positive
    return logits, state


def next_distribution(model: ModelWeights, state: RecurrentState, token: int):
    probs, state = next_distribution_batch(model, state,
                                           np.array([token], dtype=np.int64))
    return probs[0], state


def count_params(config: ModelConfig) -> int:
    """Total scalars, embedding and head included.

    Per layer: 4 d^2 attention projections, d^2 feed-forward receptance,
    d*h key and h*d value, the d^2 shortcut, 5 d-vectors in the attention
    mix (decay, bonus, 3 shift mixes), 2 in the feed-forward, 4 layer-norm
    vectors. Plus V*d embedding, V*d head, final norm.
    """
    d, h, v = config.d_embed, config.d_hidden, config.vocab_size
    per_layer = 6 * d * d + 2 * d * h + 11 * d
    return config.n_layers * per_layer + 2 * v * d + 2 * d


def count_macs_per_token(config: ModelConfig) -> int:
    """Multiply-accumulates per generated token.

    Counts matrix-vector products only (the elementwise state updates are
    a few dozen ops per channel and are excluded, as are embedding-table
    lookups, which are reads, not MACs). The output head d*V dominates at
    text-scale vocabularies.
    """
    d, h = config.d_embed, config.d_hidden
    per_layer = 6 * d * d + 2 * d * h
    return config.n_layers * per_layer + d * config.vocab_size


def random_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    """Deterministic random initialization for fixtures and benchmarks.

    Scaled to be stable over arbitrarily long step sequences: projections
    N(0, 1/sqrt(fan_in)), small shortcut, strictly negative effective decay.
    Not a substitute for trained weights.
    """
    rng = np.random.default_rng(seed)
    d = config.d_embed
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _expected_tensors(config):
        if name.endswith("ln1.weight") or name.endswith("ln2.weight") or \
                name == "ln_out.weight":
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias"):
            arr = np.zeros(shape, dtype=np.float32)
        elif name.endswith("att.time_decay"):
            arr = np.linspace(-3.0, 0.5, shape[0], dtype=np.float32)
            arr = arr + rng.normal(0, 0.1, shape).astype(np.float32)
        elif name.endswith("att.time_first"):
            arr = (0.3 + rng.normal(0, 0.1, shape)).astype(np.float32)
        elif "time_mix" in name:
            arr = rng.uniform(0.2, 0.9, shape).astype(np.float32)
        elif name.endswith("shortcut.weight"):
            arr = rng.normal(0, 0.05 / np.sqrt(d), shape).astype(np.float32)
        elif name == "emb.weight":
            arr = rng.normal(0, 0.3, shape).astype(np.float32)
        else:
            fan_in = shape[-1]
            arr = rng.normal(0, 1.0 / np.sqrt(fan_in), shape).astype(np.float32)
        tensors[name] = arr
    return ModelWeights(config, tensors)


def save_model_bytes(model: ModelWeights) -> bytes:
    w = ByteWriter()
    w.raw(MAGIC)
    w.u8(VERSION)
    cfg = model.config
    for field in (cfg.n_layers, cfg.d_embed, cfg.d_hidden, cfg.vocab_size):
        w.u32(field)
    names = sorted(model.tensors)
    w.u32(len(names))
    for name in names:
        arr = model.tensors[name]
        nb = name.encode("utf-8")
        w.u16(len(nb))
        w.raw(nb)
        w.u8(arr.ndim)
        for dim in arr.shape:
            w.u32(dim)
        w.raw(arr.astype("<f4").tobytes())
    return w.finish_with_hash()


def save_model(model: ModelWeights, path) -> int:
    """Write the weights file; returns its content hash."""
    data = save_model_bytes(model)
    atomic_write(path, data)
    model.content_hash = int.from_bytes(data[-4:], "little")
    return model.content_hash


def load_model_bytes(data: bytes, allow_branches: bool = False) -> ModelWeights:
    body, stored = check_trailing_hash(data, "weights file")
    r = ByteReader(body)
    if r.raw(4) != MAGIC:
        raise FormatError("not a weights file (bad magic)")
    if r.u8() != VERSION:
        raise FormatError("unsupported weights file version")
    cfg = ModelConfig(r.u32(), r.u32(), r.u32(), r.u32())
    n = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n):
        name = r.raw(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(r.raw(4 * count), dtype="<f4").reshape(shape)
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}")
        tensors[name] = arr.astype(np.float32)
    if not r.done():
        raise FormatError("trailing bytes after tensor directory")
    model = ModelWeights(cfg, tensors, content_hash=stored)
    if model.has_branches and not allow_branches:
        raise FormatError(
            "unmerged branch tensors present; merge them before inference")
    return model


def load_model(path, allow_branches: bool = False) -> ModelWeights:
    with open(path, "rb") as f:
        data = f.read()
    return load_model_bytes(data, allow_branches=allow_branches)


def load_branched_model(path) -> ModelWeights:
    return load_model(path, allow_branches=True)
