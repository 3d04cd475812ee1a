"""The de-occlusion encoder-decoder network.

Structure: input 1x1 conv -> residual dilated-conv pyramid (3 groups of 6
parallel 3x3 convs at rates 1..32, concat + 1x1 fuse, residual add) ->
4 encoder blocks (two residual units plus a stride-2 downsampling unit
that doubles depth) -> 4 decoder blocks (transposed-conv unit halving
depth, skip concat with the matching-resolution encoder feature, 1x1
depth-halving fuse, two residual units) -> output 1x1 conv to 3 channels.

A (U, V) grid of RGB views stacked along channels gives U*V*3 input
channels; the bottleneck sits at 1/16 resolution with 16x the base depth.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Module,
    Tensor,
    add,
    concat,
    leaky_relu,
)

WEIGHTS_MAGIC = b"DOCN"
WEIGHTS_VERSION = 1


@dataclass
class NetworkConfig:
    angular_rows: int = 5
    angular_cols: int = 5
    base_depth: int = 64
    encoder_levels: int = 4
    aspp_rates: tuple = (1, 2, 4, 8, 16, 32)
    aspp_groups: int = 3
    leaky_slope: float = 0.1
    no_aspp: bool = False
    drop_outer_skip: bool = False

    @property
    def in_channels(self) -> int:
        return self.angular_rows * self.angular_cols * 3

    @property
    def bottleneck_depth(self) -> int:
        return self.base_depth * 2 ** self.encoder_levels

    @property
    def downscale(self) -> int:
        return 2 ** self.encoder_levels

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aspp_rates"] = list(self.aspp_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["aspp_rates"] = tuple(d.get("aspp_rates", (1, 2, 4, 8, 16, 32)))
        return cls(**d)


class ResidualUnit(Module):
    """BN -> [3x3 conv + leaky ReLU] added to a shortcut path.

    The shortcut is the identity when depth and resolution are unchanged,
    a strided 1x1 conv for downsampling units, and a stride-2 transposed
    conv for upsampling units.
    """

    def __init__(self, in_ch: int, out_ch: int, mode: str, slope: float,
                 rng: np.random.Generator):
        super().__init__()
        self.mode = mode
        self.slope = slope
        self.bn = BatchNorm2d(in_ch)
        if mode == "same":
            if in_ch != out_ch:
                raise ValueError("same-resolution units keep depth unchanged")
            self.conv = Conv2d(in_ch, out_ch, 3, stride=1, padding=1, rng=rng)
            self.shortcut = None
        elif mode == "down":
            self.conv = Conv2d(in_ch, out_ch, 3, stride=2, padding=1, rng=rng)
            self.shortcut = Conv2d(in_ch, out_ch, 1, stride=2, rng=rng)
        elif mode == "up":
            self.conv = ConvTranspose2d(in_ch, out_ch, 3, stride=2, padding=1,
                                        output_padding=1, rng=rng)
            self.shortcut = ConvTranspose2d(in_ch, out_ch, 1, stride=2, padding=0,
                                            output_padding=1, rng=rng)
        else:
            raise ValueError(f"unknown unit mode {mode!r}")

    def __call__(self, x: Tensor) -> Tensor:
        h = self.bn(x)
        a = leaky_relu(self.conv(h), self.slope)
        s = h if self.shortcut is None else self.shortcut(h)
        return add(a, s)


class ASPPGroup(Module):
    """Six parallel 3x3 dilated convs, concatenated, fused back to the
    input depth by a 1x1 conv, added residually to the group input."""

    def __init__(self, depth: int, rates, slope: float, rng: np.random.Generator):
        super().__init__()
        self.rates = tuple(rates)
        self.slope = slope
        for i, r in enumerate(self.rates):
            setattr(self, f"branch{i}", Conv2d(depth, depth, 3, dilation=r, padding=r, rng=rng))
        self.fuse = Conv2d(depth * len(self.rates), depth, 1, rng=rng)

    def __call__(self, x: Tensor) -> Tensor:
        feats = [leaky_relu(getattr(self, f"branch{i}")(x), self.slope)
                 for i in range(len(self.rates))]
        return add(x, self.fuse(concat(feats, axis=1)))


class EncoderBlock(Module):
    """Two same-resolution residual units, then a stride-2 unit doubling depth."""

    def __init__(self, depth: int, slope: float, rng: np.random.Generator):
        super().__init__()
        self.unit1 = ResidualUnit(depth, depth, "same", slope, rng)
        self.unit2 = ResidualUnit(depth, depth, "same", slope, rng)
        self.unit3 = ResidualUnit(depth, 2 * depth, "down", slope, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.unit3(self.unit2(self.unit1(x)))


class DecoderBlock(Module):
    """Transposed-conv unit halving depth/doubling resolution, optional
    skip concat followed by a 1x1 depth-halving fuse, two residual units."""

    def __init__(self, in_depth: int, slope: float, rng: np.random.Generator,
                 use_skip: bool = True):
        super().__init__()
        self.use_skip = use_skip
        out = in_depth // 2
        self.unit1 = ResidualUnit(in_depth, out, "up", slope, rng)
        if use_skip:
            self.fuse = Conv2d(in_depth, out, 1, rng=rng)
        self.unit2 = ResidualUnit(out, out, "same", slope, rng)
        self.unit3 = ResidualUnit(out, out, "same", slope, rng)

    def __call__(self, x: Tensor, skip: Tensor | None) -> Tensor:
        h = self.unit1(x)
        if self.use_skip:
            if skip is None:
                raise ValueError("decoder block expects a skip feature")
            h = self.fuse(concat([h, skip], axis=1))
        return self.unit3(self.unit2(h))


class DeOccNet(Module):
    def __init__(self, config: NetworkConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        d = config.base_depth
        self.in_conv = Conv2d(config.in_channels, d, 1, rng=rng)
        if not config.no_aspp:
            for g in range(config.aspp_groups):
                setattr(self, f"aspp{g}",
                        ASPPGroup(d, config.aspp_rates, config.leaky_slope, rng))
        for i in range(config.encoder_levels):
            setattr(self, f"enc{i}", EncoderBlock(d * 2 ** i, config.leaky_slope, rng))
        for j in range(config.encoder_levels):
            outermost = j == config.encoder_levels - 1
            use_skip = not (outermost and config.drop_outer_skip)
            setattr(self, f"dec{j}",
                    DecoderBlock(config.bottleneck_depth // 2 ** j, config.leaky_slope,
                                 rng, use_skip=use_skip))
        self.out_conv = Conv2d(d, 3, 1, rng=rng)
        # start near mid-gray so early training refines rather than rescales
        self.out_conv.weight.data *= 0.1
        self.out_conv.bias.data += 0.5

    def __call__(self, x: Tensor, collect: dict | None = None) -> Tensor:
        cfg = self.config
        n, c, h, w = x.shape
        if c != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {c}")
        if h % cfg.downscale or w % cfg.downscale:
            raise ValueError(
                f"spatial dims must be divisible by {cfg.downscale}, got {h}x{w}")
        f = self.in_conv(x)
        if not cfg.no_aspp:
            for g in range(cfg.aspp_groups):
                f = getattr(self, f"aspp{g}")(f)
        skips = [f]
        for i in range(cfg.encoder_levels):
            f = getattr(self, f"enc{i}")(f)
            if i < cfg.encoder_levels - 1:
                skips.append(f)
        if collect is not None:
            collect["bottleneck"] = f
        for j in range(cfg.encoder_levels):
            block = getattr(self, f"dec{j}")
            skip = skips[cfg.encoder_levels - 1 - j] if block.use_skip else None
            f = block(f, skip)
        return self.out_conv(f)


def build(cfg: NetworkConfig, seed: int = 0) -> DeOccNet:
    """Construct the network with seeded Kaiming-style initialization."""
    return DeOccNet(cfg, seed=seed)


def forward(net: DeOccNet, x: Tensor, mode: str = "eval") -> Tensor:
    """Run the network in "train" or "eval" mode."""
    if mode == "train":
        net.train()
    elif mode == "eval":
        net.eval()
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return net(x)


def receptive_field(cfg: NetworkConfig) -> int:
    """Analytic receptive-field size along the dilated-pyramid + encoder
    path (per group, the widest branch dominates)."""
    rf, jump = 1, 1
    chain = []
    if not cfg.no_aspp:
        chain += [(3, max(cfg.aspp_rates), 1)] * cfg.aspp_groups
    for _ in range(cfg.encoder_levels):
        chain += [(3, 1, 1), (3, 1, 1), (3, 1, 2)]
    for k, dil, stride in chain:
        rf += (k - 1) * dil * jump
        jump *= stride
    return rf


# ---------------------------------------------------------------------------
# weights serialization

class WeightsError(Exception):
    pass


def _named_tensors(net: DeOccNet):
    for name, p in net.named_parameters():
        yield name, p.data
    for name, b in net.named_buffers():
        yield name, b


def _write_blob(entries, config_dict: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(WEIGHTS_MAGIC)
    buf.write(struct.pack("<I", WEIGHTS_VERSION))
    cfg = json.dumps(config_dict, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    for name, arr in entries:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def _read_blob(data: bytes):
    buf = io.BytesIO(data)

    def take(n, what):
        b = buf.read(n)
        if len(b) != n:
            raise WeightsError(f"truncated weights file while reading {what}")
        return b

    if take(4, "magic") != WEIGHTS_MAGIC:
        raise WeightsError("bad magic bytes; not a weights file")
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != WEIGHTS_VERSION:
        raise WeightsError(f"unsupported weights version {version}")
    clen = struct.unpack("<I", take(4, "config length"))[0]
    config = json.loads(take(clen, "config").decode("utf-8"))
    entries = {}
    order = []
    while True:
        head = buf.read(4)
        if not head:
            break
        if len(head) != 4:
            raise WeightsError("truncated weights file while reading name length")
        nlen = struct.unpack("<I", head)[0]
        name = take(nlen, "name").decode("utf-8")
        ndim = struct.unpack("<I", take(4, "ndim"))[0]
        shape = tuple(struct.unpack("<I", take(4, "dim"))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(4 * count, f"data of {name}"), dtype="<f4").reshape(shape)
        entries[name] = arr
        order.append(name)
    return config, entries, order


def save_weights(net: DeOccNet, path):
    with open(path, "wb") as f:
        f.write(_write_blob(_named_tensors(net), net.config.to_dict()))


def _check_config(stored: dict, expected: dict):
    for key in sorted(set(stored) | set(expected)):
        if stored.get(key) != expected.get(key):
            raise WeightsError(
                f"config mismatch on field {key!r}: file has {stored.get(key)!r}, "
                f"model expects {expected.get(key)!r}")


def load_weights(net: DeOccNet, path):
    """Load parameters into an existing model; validates magic, version and
    config compatibility before mutating anything."""
    with open(path, "rb") as f:
        config, entries, _ = _read_blob(f.read())
    _check_config(config, net.config.to_dict())
    params = dict(net.named_parameters())
    buffers = dict(net.named_buffers())
    for name in list(params) + list(buffers):
        if name not in entries:
            raise WeightsError(f"weights file is missing tensor {name!r}")
    staged = {}
    for name, arr in entries.items():
        target = params.get(name)
        if target is not None:
            if target.data.shape != arr.shape:
                raise WeightsError(f"tensor {name!r}: shape {arr.shape} != {target.data.shape}")
            staged[name] = ("param", arr)
        elif name in buffers:
            if buffers[name].shape != arr.shape:
                raise WeightsError(f"buffer {name!r}: shape mismatch")
            staged[name] = ("buffer", arr)
        else:
            raise WeightsError(f"unknown tensor {name!r} in weights file")
    for name, (kind, arr) in staged.items():
        if kind == "param":
            params[name].data = arr.astype(np.float32).copy()
        else:
            buffers[name][...] = arr


def load_model(path, seed: int = 0) -> DeOccNet:
    """Build a model from the config stored in a weights file and load it."""
    with open(path, "rb") as f:
        config, _, _ = _read_blob(f.read())
    net = build(NetworkConfig.from_dict(config), seed=seed)
    load_weights(net, path)
    return net
