"""Shared-representation encoder for partial layouts.

A prefix of already-placed objects is encoded twice: a stacked bidirectional
GRU reads the object sequence (categories one-hot, geometry raw), and a small
conv stack reads the category-channel raster of the same prefix. The two
branch vectors are fused into a single latent consumed by every prediction
head of one generation step.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .data import rasterize


class EncoderError(Exception):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    num_categories: int
    gru_layers: int = 2
    gru_hidden: int = 128
    conv_layers: int = 5
    conv_channels: int = 16
    raster_res: int = 32
    spatial_width: int = 0  # 0 = match gru_hidden

    def __post_init__(self):
        if self.spatial_width == 0:
            object.__setattr__(self, "spatial_width", self.gru_hidden)
        for name in ("num_categories", "gru_layers", "gru_hidden", "conv_layers", "conv_channels", "spatial_width"):
            if getattr(self, name) <= 0:
                raise EncoderError(f"{name} must be positive")
        if self.raster_res < 8:
            raise EncoderError(f"raster_res must be at least 8, got {self.raster_res}")

    @property
    def token_width(self):
        return self.num_categories + 4

    @property
    def sequence_width(self):
        # final forward state ++ final backward state of the top layer
        return 2 * self.gru_hidden

    @property
    def shared_width(self):
        return self.sequence_width + self.spatial_width

    def conv_strides(self):
        # 2x spatial downsampling on every other layer
        return tuple(2 if i % 2 == 1 else 1 for i in range(self.conv_layers))

    def conv_output_res(self):
        res = self.raster_res
        for stride in self.conv_strides():
            res = -(-res // stride)
        return res

    @property
    def flatten_width(self):
        return self.conv_channels * self.conv_output_res() ** 2


@dataclass
class EncoderParams:
    start: dc.Tensor
    gru_stack: list  # [(forward GruParams, backward GruParams), ...]
    kernels: list
    conv_biases: list
    spatial_proj: dc.LinearParams
    fusion: dc.LinearParams

    @staticmethod
    def create(rng, config, prefix="encoder"):
        start = dc.uniform_init(rng, (1, config.token_width), config.token_width, name=f"{prefix}.start")
        gru_stack = []
        width = config.token_width
        for i in range(config.gru_layers):
            fwd = dc.GruParams.create(rng, width, config.gru_hidden, f"{prefix}.gru{i}.fwd")
            bwd = dc.GruParams.create(rng, width, config.gru_hidden, f"{prefix}.gru{i}.bwd")
            gru_stack.append((fwd, bwd))
            width = 2 * config.gru_hidden
        kernels, conv_biases = [], []
        channels = config.num_categories
        for i in range(config.conv_layers):
            fan_in = channels * 9
            kernels.append(dc.uniform_init(rng, (config.conv_channels, channels, 3, 3), fan_in, name=f"{prefix}.conv{i}.k"))
            conv_biases.append(dc.Tensor(np.zeros((config.conv_channels, 1, 1)), name=f"{prefix}.conv{i}.b"))
            channels = config.conv_channels
        spatial_proj = dc.LinearParams.create(rng, config.flatten_width, config.spatial_width, f"{prefix}.spatial")
        fusion = dc.LinearParams.create(rng, config.shared_width, config.shared_width, f"{prefix}.fusion")
        return EncoderParams(start, gru_stack, kernels, conv_biases, spatial_proj, fusion)

    def named(self):
        out = [(self.start.name, self.start)]
        for fwd, bwd in self.gru_stack:
            out.extend(fwd.named())
            out.extend(bwd.named())
        for k, b in zip(self.kernels, self.conv_biases):
            out.append((k.name, k))
            out.append((b.name, b))
        out.extend(self.spatial_proj.named())
        out.extend(self.fusion.named())
        return out


@dataclass
class SharedRepresentation:
    vector: dc.Tensor


def tokenize(objects, num_categories):
    """Rows of one-hot(category) ++ bbox for a reading-ordered prefix."""
    tokens = np.zeros((len(objects), num_categories + 4))
    for row, obj in enumerate(objects):
        tokens[row, obj.category] = 1.0
        tokens[row, num_categories:] = obj.bbox
    return tokens


def _tile_rows(t, batch):
    # differentiable broadcast of a (1, W) parameter to (batch, W)
    if batch == 1:
        return t
    return dc.matmul(dc.Tensor(np.ones((batch, 1))), t)


def encode_sequence_batch(prefixes, params, config):
    """X_layout rows for same-length prefixes: (B, 2 * gru_hidden)."""
    lengths = {len(p) for p in prefixes}
    if len(lengths) > 1:
        raise EncoderError(f"prefixes must share a length, got {sorted(lengths)}")
    batch = len(prefixes)
    stacked = np.stack([tokenize(p, config.num_categories) for p in prefixes])
    steps = [_tile_rows(params.start, batch)]
    steps.extend(dc.Tensor(stacked[:, t]) for t in range(stacked.shape[1]))
    fwd_states = bwd_states = None
    for fwd, bwd in params.gru_stack:
        fwd_states, bwd_states = dc.bigru(steps, fwd, bwd)
        steps = [dc.concat([f, b]) for f, b in zip(fwd_states, bwd_states)]
    return dc.concat([fwd_states[-1], bwd_states[0]])


def encode_spatial_batch(prefixes, params, config):
    """X_spatial rows for a batch of prefixes: (B, spatial_width)."""
    rasters = np.stack([rasterize(p, config.num_categories, config.raster_res) for p in prefixes])
    x = dc.Tensor(rasters)
    for kernel, bias, stride in zip(params.kernels, params.conv_biases, config.conv_strides()):
        x = dc.conv2d(x, kernel, stride=stride, padding="same") + bias
        x = x.relu()
    flat = x.reshape((len(prefixes), config.flatten_width))
    return dc.linear(flat, params.spatial_proj)


def encode_batch(prefixes, params, config):
    """Fused X_shared rows for same-length prefixes: (B, shared_width)."""
    x_layout = encode_sequence_batch(prefixes, params, config)
    x_spatial = encode_spatial_batch(prefixes, params, config)
    return dc.linear(dc.concat([x_layout, x_spatial]), params.fusion).relu()


def encode_rows(prefixes, params, config):
    """Encode mixed-length prefixes, returning rows in input order.

    Recurrent steps need equal lengths, so prefixes are grouped by length,
    encoded per group, and gathered back into the caller's order.
    """
    by_length = {}
    for pos, prefix in enumerate(prefixes):
        by_length.setdefault(len(prefix), []).append(pos)
    chunks, order = [], []
    for length in sorted(by_length):
        positions = by_length[length]
        chunks.append(encode_batch([prefixes[p] for p in positions], params, config))
        order.extend(positions)
    stacked = chunks[0] if len(chunks) == 1 else dc.concat(chunks, axis=0)
    inverse = np.empty(len(order), dtype=np.intp)
    inverse[np.asarray(order)] = np.arange(len(order))
    return dc.gather_rows(stacked, inverse)


def encode_sequence(prefix, params, config):
    return encode_sequence_batch([prefix], params, config)


def encode_spatial(prefix, params, config):
    return encode_spatial_batch([prefix], params, config)


def encode(prefix, params, config):
    return SharedRepresentation(vector=encode_batch([prefix], params, config))
