"""Spiking-transformer classifiers built from the attention zoo.

A model is: a direct-coding embedding conv stack (first conv consumes the
analog input and is MAC-counted; everything after runs on spikes), L
encoder blocks hosting one attention variant with either SEW (spike add)
or MS (membrane shortcut) residual wiring, and a time-averaged linear
classification head.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .attention import AttentionConfig, Variant, apply_variant, dssa
from .autograd import BatchNorm, Tensor, TensorError, matmul, reshape, tmean
from .neuron import LifParams, lif_over_time

CHECKPOINT_MAGIC = b"STCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    depth: int = 2
    dim: int = 64
    timesteps: int = 4
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    residual: str = "sew"  # "sew" | "ms"
    input_mode: str = "static2d"  # "static2d" | "sequential1d" | "synthetic"
    num_classes: int = 10
    mlp_ratio: int = 4
    in_channels: int = 3
    in_spatial: int = 32  # H(=W) for images, S for synthetic sequences
    embed_channels: int = 32

    def __post_init__(self):
        if self.residual not in ("sew", "ms"):
            raise ValueError(f"residual must be 'sew' or 'ms', got {self.residual}")
        if self.input_mode not in ("static2d", "sequential1d", "synthetic"):
            raise ValueError(f"unknown input_mode {self.input_mode}")

    @property
    def tokens(self):
        # embedding pools spatial extent twice by 2
        if self.input_mode == "static2d":
            side = self.in_spatial // 4
            return side * side
        return self.in_spatial // 4

    def to_dict(self):
        d = dict(self.__dict__)
        att = dict(self.attention.__dict__)
        att["variant"] = self.attention.variant.value
        att["lif"] = dict(self.attention.lif.__dict__)
        d["attention"] = att
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        att = dict(d.pop("attention"))
        att["lif"] = LifParams(**att["lif"])
        return ModelConfig(attention=AttentionConfig(**att), **d)


class Recorder:
    """Per-run collector of firing rates keyed by layer name.

    ``trace=True`` additionally keeps the raw arrays (used by
    instrumentation tests, too heavy for training loops).
    """

    def __init__(self, trace=False, time_axis=1):
        self.rates = {}
        self.per_timestep = {}
        self.arrays = {}
        self.trace = trace
        self.time_axis = time_axis

    def add(self, name, tensor, time_axis=None):
        data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
        ta = self.time_axis if time_axis is None else time_axis
        axes = tuple(i for i in range(data.ndim) if i != ta)
        self.rates[name] = float(data.mean())
        self.per_timestep[name] = data.mean(axis=axes)
        if self.trace:
            self.arrays[name] = data.copy()


def sequentialize(image):
    """Column-per-timestep reshaping: [.., C, H, W] -> [.., T=W, C, H]."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    return np.moveaxis(arr, -1, -3)


def desequentialize(sequence):
    """Inverse of :func:`sequentialize`: stack time slices back along width."""
    arr = sequence.data if isinstance(sequence, Tensor) else np.asarray(sequence)
    return np.moveaxis(arr, -3, -1)


def _lif_time(x, params, smooth=False):
    """LIF fold over axis 1 of [B, T, ...]; returns same shape."""
    xt = x.transpose(1, 0, *range(2, x.ndim))
    s, _ = lif_over_time(xt, params, smooth=smooth)
    return s.transpose(1, 0, *range(2, x.ndim))


def _bn_tokens(bn, x, training):
    """BatchNorm over the last (feature) axis of [B, T, N, D]."""
    d = x.shape[-1]
    return reshape(bn(reshape(x, (-1, d)), training=training), x.shape)


class _ConvStage:
    def __init__(self, rng, c_in, c_out, conv_dim, kernel=3):
        scale = np.sqrt(2.0 / (c_in * kernel**conv_dim))
        shape = (c_out, c_in) + (kernel,) * conv_dim
        self.w = Tensor(rng.normal(0.0, scale, shape), requires_grad=True)
        self.bn = BatchNorm(c_out)
        self.conv_dim = conv_dim
        self.kernel = kernel

    def __call__(self, x, training):
        conv = ag.conv2d if self.conv_dim == 2 else ag.conv1d
        return self.bn(conv(x, self.w, padding=self.kernel // 2), training=training)

    def parameters(self):
        return [self.w] + self.bn.parameters()

    def flops(self, out_spatial):
        return ag.conv_flops(self.w.shape, out_spatial)


class EncoderBlock:
    """Attention stage + MLP stage with SEW or MS residual wiring."""

    def __init__(self, rng, cfg: ModelConfig, name):
        d = cfg.dim
        hidden = d * cfg.mlp_ratio
        s = 1.0 / np.sqrt(d)
        self.name = name
        self.cfg = cfg
        self.w_q = Tensor(rng.normal(0, s, (d, d)), requires_grad=True)
        self.w_k = Tensor(rng.normal(0, s, (d, d)), requires_grad=True)
        self.w_v = Tensor(rng.normal(0, s, (d, d)), requires_grad=True)
        self.w_o = Tensor(rng.normal(0, s, (d, d)), requires_grad=True)
        self.w_m1 = Tensor(rng.normal(0, s, (d, hidden)), requires_grad=True)
        self.w_m2 = Tensor(rng.normal(0, 1.0 / np.sqrt(hidden), (hidden, d)),
                           requires_grad=True)
        self.bn_q, self.bn_k, self.bn_v = (BatchNorm(d) for _ in range(3))
        self.bn_o = BatchNorm(d)
        self.bn_m1 = BatchNorm(hidden)
        self.bn_m2 = BatchNorm(d)
        # DSSA replaces the q/k/v projections with a single projection
        self.w_dssa = Tensor(rng.normal(0, s, (d, d)), requires_grad=True)

    def parameters(self):
        ps = [self.w_q, self.w_k, self.w_v, self.w_o, self.w_m1, self.w_m2,
              self.w_dssa]
        for bn in (self.bn_q, self.bn_k, self.bn_v, self.bn_o, self.bn_m1,
                   self.bn_m2):
            ps += bn.parameters()
        return ps

    def named_parameters(self):
        out = {}
        for nm in ("w_q", "w_k", "w_v", "w_o", "w_m1", "w_m2", "w_dssa"):
            out[f"{self.name}.{nm}"] = getattr(self, nm)
        for nm in ("bn_q", "bn_k", "bn_v", "bn_o", "bn_m1", "bn_m2"):
            bn = getattr(self, nm)
            out[f"{self.name}.{nm}.gamma"] = bn.gamma
            out[f"{self.name}.{nm}.beta"] = bn.beta
        return out

    def named_batchnorms(self):
        return {f"{self.name}.{nm}": getattr(self, nm)
                for nm in ("bn_q", "bn_k", "bn_v", "bn_o", "bn_m1", "bn_m2")}

    def _qkv(self, s, lif, training, smooth, record):
        att = self.cfg.attention
        if record:
            record.add(f"{self.name}.qkv", s)
        q = _lif_time(_bn_tokens(self.bn_q, matmul(s, self.w_q), training), lif, smooth)
        k = _lif_time(_bn_tokens(self.bn_k, matmul(s, self.w_k), training), lif, smooth)
        v = _lif_time(_bn_tokens(self.bn_v, matmul(s, self.w_v), training), lif, smooth)
        if record:
            record.add(f"{self.name}.q", q)
            record.add(f"{self.name}.k", k)
            record.add(f"{self.name}.v", v)
        return q, k, v

    def _attend(self, s, lif, training, smooth, record):
        att = self.cfg.attention
        heads = att.heads
        if att.variant is Variant.DSSA:
            x_proj = dssa(s, self.w_dssa, alpha=att.alpha, lif=att.lif, smooth=smooth)
            # hosting choice: fold the N x N spike map back onto the tokens
            a = matmul(x_proj, s)
            if record:
                record.add(f"{self.name}.q", x_proj)
                record.add(f"{self.name}.k", s)
                record.add(f"{self.name}.v", s)
            return a
        q, k, v = self._qkv(s, lif, training, smooth, record)
        if heads == 1:
            return apply_variant(att.variant, q, k, v, att, smooth=smooth)
        dh = self.cfg.dim // heads
        parts = []
        for h in range(heads):
            sl = (Ellipsis, slice(h * dh, (h + 1) * dh))
            parts.append(apply_variant(att.variant, q[sl], k[sl], v[sl], att,
                                       smooth=smooth))
        return ag.concat(parts, axis=-1)

    def forward(self, x, training, smooth=False, record=None):
        cfg = self.cfg
        lif = cfg.attention.lif
        if cfg.residual == "ms":
            s = _lif_time(x, lif, smooth)
            a = self._attend(s, lif, training, smooth, record)
            if record:
                record.add(f"{self.name}.attn_out", a)
                record.add(f"{self.name}.proj", a)
            z = _bn_tokens(self.bn_o, matmul(a, self.w_o), training)
            u = x + z
            s2 = _lif_time(u, lif, smooth)
            if record:
                record.add(f"{self.name}.mlp1", s2)
            h = _lif_time(_bn_tokens(self.bn_m1, matmul(s2, self.w_m1), training),
                          lif, smooth)
            if record:
                record.add(f"{self.name}.mlp2", h)
            z2 = _bn_tokens(self.bn_m2, matmul(h, self.w_m2), training)
            out = u + z2
            if record and record.trace:
                record.arrays[f"{self.name}.shortcut"] = u.data.copy()
            return out
        # SEW: binary (integer after residual adds) spike pathway
        a = self._attend(x, lif, training, smooth, record)
        if record:
            record.add(f"{self.name}.attn_out", a)
            record.add(f"{self.name}.proj", a)
        z = _lif_time(_bn_tokens(self.bn_o, matmul(a, self.w_o), training), lif, smooth)
        x = x + z
        if record and record.trace:
            record.arrays[f"{self.name}.sew_add1"] = x.data.copy()
        if record:
            record.add(f"{self.name}.mlp1", x)
        h = _lif_time(_bn_tokens(self.bn_m1, matmul(x, self.w_m1), training), lif, smooth)
        if record:
            record.add(f"{self.name}.mlp2", h)
        z2 = _lif_time(_bn_tokens(self.bn_m2, matmul(h, self.w_m2), training), lif, smooth)
        out = x + z2
        if record and record.trace:
            record.arrays[f"{self.name}.sew_add2"] = out.data.copy()
        return out

    def zero_attention_weights(self):
        """Zero every weight feeding the attention stage (isolation checks)."""
        for w in (self.w_q, self.w_k, self.w_v, self.w_o, self.w_dssa):
            w.data[...] = 0.0
        for bn in (self.bn_q, self.bn_k, self.bn_v, self.bn_o):
            bn.gamma.data[...] = 0.0
            bn.beta.data[...] = 0.0


class SpikingClassifier:
    """Embedding stack -> L encoder blocks -> time-averaged linear head."""

    def __init__(self, config: ModelConfig, seed=0):
        rng = np.random.default_rng(seed)
        self.config = config
        c = config
        conv_dim = 2 if c.input_mode == "static2d" else 1
        e = c.embed_channels
        self.embed = [
            _ConvStage(rng, c.in_channels, e, conv_dim),
            _ConvStage(rng, e, e, conv_dim),
            _ConvStage(rng, e, c.dim, conv_dim),
        ]
        self.blocks = [EncoderBlock(rng, c, f"enc{i + 1}") for i in range(c.depth)]
        self.head_w = Tensor(
            rng.normal(0, 1.0 / np.sqrt(c.dim), (c.dim, c.num_classes)),
            requires_grad=True,
        )
        self.lif = c.attention.lif

    # -- parameter plumbing ------------------------------------------------

    def parameters(self):
        ps = []
        for st in self.embed:
            ps += st.parameters()
        for b in self.blocks:
            ps += b.parameters()
        ps.append(self.head_w)
        return ps

    def named_parameters(self):
        out = {}
        for i, st in enumerate(self.embed, 1):
            out[f"embed.conv{i}.w"] = st.w
            out[f"embed.bn{i}.gamma"] = st.bn.gamma
            out[f"embed.bn{i}.beta"] = st.bn.beta
        for b in self.blocks:
            out.update(b.named_parameters())
        out["head.w"] = self.head_w
        return out

    def named_batchnorms(self):
        bns = {f"embed.bn{i}": st.bn for i, st in enumerate(self.embed, 1)}
        for b in self.blocks:
            bns.update(b.named_batchnorms())
        return bns

    def named_buffers(self):
        """Non-trained state that checkpoints must carry: BN running stats."""
        out = {}
        for name, bn in self.named_batchnorms().items():
            out[f"{name}.running_mean"] = bn.running_mean
            out[f"{name}.running_var"] = bn.running_var
        return out

    def load_buffers(self, buffers):
        for name, bn in self.named_batchnorms().items():
            bn.running_mean = buffers[f"{name}.running_mean"].copy()
            bn.running_var = buffers[f"{name}.running_var"].copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    # -- forward -----------------------------------------------------------

    def _prepare_input(self, x):
        """Returns [B, T, C, spatial...] float input (direct coding)."""
        c = self.config
        arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
        if c.input_mode == "static2d":
            if arr.ndim != 4:
                raise TensorError(f"static2d expects [B,C,H,W], got {arr.shape}")
            rep = np.repeat(arr[:, None], c.timesteps, axis=1)
            return Tensor(rep)
        if c.input_mode == "sequential1d":
            if arr.ndim != 4:
                raise TensorError(f"sequential1d expects [B,C,H,W], got {arr.shape}")
            if arr.shape[-1] != c.timesteps:
                raise TensorError(
                    f"sequential1d requires T == image width: "
                    f"T={c.timesteps}, W={arr.shape[-1]}"
                )
            return Tensor(sequentialize(arr))
        if arr.ndim != 4 or arr.shape[1] != c.timesteps:
            raise TensorError(
                f"synthetic expects [B,T,C,S] with T={c.timesteps}, got {arr.shape}"
            )
        return Tensor(arr)

    def embed_forward(self, x, training=True, smooth=False, record=None):
        """Direct-coding embedding: float conv first, spikes after."""
        c = self.config
        xt = self._prepare_input(x)
        b, t = xt.shape[0], xt.shape[1]
        flat = reshape(xt, (b * t,) + xt.shape[2:])
        spikes = None
        for i, stage in enumerate(self.embed, 1):
            pre = stage(flat if spikes is None else spikes, training)
            pre = reshape(pre, (b, t) + pre.shape[1:])
            s = _lif_time(pre, self.lif, smooth)
            if i >= 2:
                # pool after the deeper convs to form tokens
                sf = reshape(s, (b * t,) + s.shape[2:])
                pool = ag.maxpool2d if c.input_mode == "static2d" else ag.maxpool1d
                sf = pool(sf, 2)
                s = reshape(sf, (b, t) + sf.shape[1:])
            if record:
                record.add(f"embed.spikes{i}", s)
            spikes = reshape(s, (b * t,) + s.shape[2:])
        s = reshape(spikes, (b, t) + spikes.shape[1:])
        # [B,T,D,spatial...] -> [B,T,N,D]
        s = reshape(s, (b, t, c.dim, -1))
        return s.transpose(0, 1, 3, 2)

    def forward(self, x, training=True, smooth=False, record=None,
                return_per_timestep=False):
        c = self.config
        s = self.embed_forward(x, training=training, smooth=smooth, record=record)
        h = s
        for blk in self.blocks:
            h = blk.forward(h, training, smooth=smooth, record=record)
        if c.residual == "ms":
            h = _lif_time(h, self.lif, smooth)
        if record:
            record.add("head", h)
        pooled = tmean(h, axis=2)  # [B,T,D]
        per_t = matmul(pooled, self.head_w)  # [B,T,K]
        logits = tmean(per_t, axis=1)
        if return_per_timestep:
            return logits, per_t
        return logits

    # -- energy accounting -------------------------------------------------

    def layer_costs(self):
        """Per-layer op counts per timestep for the energy model.

        Returns rows {layer, kind, ops, rate_key}; ``rate_key`` names the
        recorded firing rate of the spikes feeding that layer (None for the
        MAC-counted first conv). Attention rows carry ops = N*D^2 with the
        rate being S_Q + S_K + S_V.
        """
        c = self.config
        n = c.tokens
        if c.input_mode == "static2d":
            sp1 = (c.in_spatial, c.in_spatial)
            sp2 = sp1
            sp3 = (c.in_spatial // 2, c.in_spatial // 2)
        else:
            sp1 = (c.in_spatial,)
            sp2 = sp1
            sp3 = (c.in_spatial // 2,)
        rows = [
            {"layer": "embed.conv1", "kind": "MAC",
             "ops": self.embed[0].flops(sp1), "rate_key": None},
            {"layer": "embed.conv2", "kind": "AC",
             "ops": self.embed[1].flops(sp2), "rate_key": "embed.spikes1"},
            {"layer": "embed.conv3", "kind": "AC",
             "ops": self.embed[2].flops(sp3), "rate_key": "embed.spikes2"},
        ]
        d, hdim = c.dim, c.dim * c.mlp_ratio
        for i in range(1, c.depth + 1):
            nm = f"enc{i}"
            rows += [
                {"layer": f"{nm}.qkv", "kind": "AC", "ops": 3 * n * d * d,
                 "rate_key": f"{nm}.qkv"},
                {"layer": f"{nm}.attn", "kind": "AC", "ops": n * d * d,
                 "rate_key": (f"{nm}.q", f"{nm}.k", f"{nm}.v")},
                {"layer": f"{nm}.proj", "kind": "AC", "ops": n * d * d,
                 "rate_key": f"{nm}.proj"},
                {"layer": f"{nm}.mlp1", "kind": "AC", "ops": n * d * hdim,
                 "rate_key": f"{nm}.mlp1"},
                {"layer": f"{nm}.mlp2", "kind": "AC", "ops": n * hdim * d,
                 "rate_key": f"{nm}.mlp2"},
            ]
        rows.append({"layer": "head", "kind": "AC", "ops": d * c.num_classes,
                     "rate_key": "head"})
        return rows


# -- loss and training steps ----------------------------------------------


def cross_entropy(logits, labels):
    """Mean cross-entropy of [B, K] logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    m = logits.data.max(axis=1, keepdims=True)  # constant shift for stability
    z = logits - m
    lse = ag.log(ag.tsum(ag.exp(z), axis=1))
    onehot = np.zeros((b, k))
    onehot[np.arange(b), labels] = 1.0
    true = ag.tsum(z * onehot, axis=1)
    return tmean(lse - true)


def train_step(model, batch, optimizer, smooth=False):
    """One optimizer update on (inputs, labels); returns the scalar loss."""
    inputs, labels = batch
    record = Recorder()
    logits = model.forward(inputs, training=True, smooth=smooth, record=record)
    loss = cross_entropy(logits, labels)
    if not np.isfinite(loss.data):
        dump = "\n".join(f"  {k}: {v:.4f}" for k, v in sorted(record.rates.items()))
        raise RuntimeError(f"non-finite loss; layer firing rates:\n{dump}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss


def evaluate(model, inputs, labels, batch_size=256, record=None):
    """Accuracy and mean loss over a dataset, inference mode."""
    n = len(labels)
    correct = 0
    losses = []
    for start in range(0, n, batch_size):
        xb = inputs[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits = model.forward(xb, training=False, record=record)
        pred = logits.data.argmax(axis=1)
        correct += int((pred == yb).sum())
        losses.append(cross_entropy(logits, yb).item() * len(yb))
    return correct / n, sum(losses) / n


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(model, path):
    """Versioned binary container: config echo + named float64 tensors."""
    tensors = {name: p.data for name, p in model.named_parameters().items()}
    tensors.update(model.named_buffers())
    cfg_bytes = json.dumps(model.config.to_dict()).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_checkpoint(path):
    """Returns (config dict, {name: array})."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic {raw[:4]!r})")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (clen,) = struct.unpack_from("<I", raw, off)
    off += 4
    config = json.loads(raw[off : off + clen].decode())
    off += clen
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        tensors[name] = arr.copy()
    return config, tensors


def load_checkpoint(path):
    """Rebuild a model from a checkpoint file."""
    config, tensors = read_checkpoint(path)
    model = SpikingClassifier(ModelConfig.from_dict(config))
    params = model.named_parameters()
    needed = set(params) | set(model.named_buffers())
    missing = needed - set(tensors)
    if missing:
        raise ValueError(f"{path}: checkpoint missing tensors {sorted(missing)}")
    for name, p in params.items():
        p.data = tensors[name].astype(np.float64)
    model.load_buffers(tensors)
    return model
