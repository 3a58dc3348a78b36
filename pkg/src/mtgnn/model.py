"""The full forecasting network: start conv, interleaved TC/GC blocks, skips, output head."""
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError, LengthError, ReceptiveFieldError
from .graph_conv import GCModule
from .graph_learning import MODES, GraphLearner
from .nn import Module, count_parameters, uniform_param
from .temporal_conv import INCEPTION_WIDTHS, TCModule, receptive_field


@dataclass
class MtgnnConfig:
    num_nodes: int = 8
    in_dim: int = 1
    input_len: int = 12
    output_len: int = 1
    layers: int = 3
    residual_channels: int = 32
    conv_channels: int = 32
    skip_channels: int = 64
    end_channels: int = 128
    dilation_rate: int = 1
    gcn_depth: int = 2
    retain_ratio: float = 0.05
    graph_mode: str = "uni_directed"
    top_k: int = 20
    saturation: float = 3.0
    embed_dim: int = 40
    dropout: float = 0.3
    pad_input: bool = True
    use_gc: bool = True
    use_mixhop_selection: bool = True
    use_inception: bool = True
    use_curriculum: bool = True

    @classmethod
    def single_step(cls, num_nodes, **overrides):
        """Single-step benchmark settings (168-step window, 5 blocks, rate-2 dilation)."""
        base = dict(num_nodes=num_nodes, in_dim=1, input_len=168, output_len=1, layers=5,
                    residual_channels=16, conv_channels=16, skip_channels=32, end_channels=64,
                    dilation_rate=2, top_k=min(20, num_nodes))
        base.update(overrides)
        return cls(**base)

    @classmethod
    def multi_step(cls, num_nodes, **overrides):
        """Multi-step benchmark settings (12 in, 12 out, 3 blocks, no dilation growth)."""
        base = dict(num_nodes=num_nodes, in_dim=2, input_len=12, output_len=12, layers=3,
                    residual_channels=32, conv_channels=32, skip_channels=64, end_channels=128,
                    dilation_rate=1, top_k=min(20, num_nodes))
        base.update(overrides)
        return cls(**base)

    @property
    def max_width(self):
        return max(INCEPTION_WIDTHS) if self.use_inception else 7

    @property
    def receptive_field(self):
        return receptive_field(self.layers, self.max_width, self.dilation_rate)

    @property
    def padded_len(self):
        return max(self.input_len, self.receptive_field) if self.pad_input else self.input_len

    def validate(self):
        positive = ("num_nodes", "in_dim", "input_len", "output_len", "layers", "residual_channels",
                    "conv_channels", "skip_channels", "end_channels", "dilation_rate", "gcn_depth",
                    "top_k", "embed_dim")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.graph_mode not in MODES:
            raise ConfigError(f"unknown graph_mode {self.graph_mode!r}; choose from {MODES}")
        if self.top_k > self.num_nodes:
            raise ConfigError(f"top_k={self.top_k} exceeds num_nodes={self.num_nodes}")
        if self.saturation <= 0:
            raise ConfigError("saturation must be positive")
        if not 0.0 <= self.retain_ratio <= 1.0:
            raise ConfigError("retain_ratio must lie in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.use_inception and self.conv_channels % len(INCEPTION_WIDTHS):
            raise ConfigError(f"conv_channels={self.conv_channels} must be divisible by 4 with inception")
        if self.use_gc and not self.use_mixhop_selection and self.conv_channels != self.residual_channels:
            raise ConfigError("without hop selection conv_channels must equal residual_channels")
        if not self.pad_input and self.input_len < self.receptive_field:
            raise ReceptiveFieldError(f"input_len={self.input_len} is below the receptive field "
                              f"{self.receptive_field} of the configured stack")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values)


class MtgnnModel(Module):
    """The forecasting network.

    Input windows are ``[b, in_dim, n, input_len]``; forecasts are
    ``[b, output_len, n]``. ``forward`` accepts an explicit adjacency or
    builds one from the graph learner, optionally restricted to the node
    subset ``idx``.

    Every block's temporal output is tapped by a skip convolution spanning
    its full length. The last block's output gets one more tap, so its
    graph convolution reaches the head as well.
    """

    def __init__(self, config, predefined_adjacency=None, seed=None):
        self.config = config.validate()
        c = config
        rng = np.random.default_rng(seed)
        self.dropout_rng = np.random.default_rng(rng.integers(2 ** 63))
        widths = INCEPTION_WIDTHS if c.use_inception else (7,)

        def conv(c_out, c_in, k):
            bound = 1.0 / np.sqrt(c_in * k)
            return uniform_param(rng, (c_out, c_in, 1, k), bound), uniform_param(rng, (c_out,), bound)

        if c.use_gc:
            self.graph = GraphLearner(c.num_nodes, c.embed_dim, c.saturation, c.top_k, c.graph_mode,
                                      in_dim=c.in_dim, predefined=predefined_adjacency, rng=rng)
        self.start_w, self.start_b = conv(c.residual_channels, c.in_dim, 1)
        self.tc = []
        self.gc = []
        self.skip_w = []
        self.skip_b = []
        self.norm_w = []
        self.norm_b = []
        self.lin_w = []
        self.lin_b = []
        length = c.padded_len
        for i in range(c.layers):
            d = c.dilation_rate ** i
            self.tc.append(TCModule(c.residual_channels, c.conv_channels, d, widths, rng))
            length -= d * (max(widths) - 1)
            if length < 1:
                raise ConfigError(f"input length {c.padded_len} is exhausted after block {i}")
            w, b = conv(c.skip_channels, c.conv_channels, length)
            self.skip_w.append(w)
            self.skip_b.append(b)
            if c.use_gc:
                self.gc.append(GCModule(c.conv_channels, c.residual_channels, c.gcn_depth,
                                        c.retain_ratio, c.use_mixhop_selection, rng))
            else:
                w, b = conv(c.residual_channels, c.conv_channels, 1)
                self.lin_w.append(w)
                self.lin_b.append(b)
            self.norm_w.append(T.Tensor(np.ones((c.residual_channels, c.num_nodes, 1)), requires_grad=True))
            self.norm_b.append(T.Tensor(np.zeros((c.residual_channels, c.num_nodes, 1)), requires_grad=True))
        # the last block's output reaches the head only through this tap
        self.skip_end_w, self.skip_end_b = conv(c.skip_channels, c.residual_channels, length)
        self.end_w, self.end_b = conv(c.end_channels, c.skip_channels, 1)
        self.out_w, self.out_b = conv(c.output_len, c.end_channels, 1)

    def block_lengths(self):
        """Sequence length after each block's temporal convolution."""
        c = self.config
        widths = INCEPTION_WIDTHS if c.use_inception else (7,)
        out, length = [], c.padded_len
        for i in range(c.layers):
            length -= c.dilation_rate ** i * (max(widths) - 1)
            out.append(length)
        return out

    def adjacency(self, idx=None, x=None):
        c = self.config
        if not c.use_gc:
            return None
        if c.graph_mode == "dynamic":
            x = T.as_tensor(x)
            return self.graph(idx, T.transpose(x.data[..., -1], (0, 2, 1)))
        return self.graph(idx)

    def forward(self, x, adj=None, idx=None):
        c = self.config
        x = T.as_tensor(x)
        n = c.num_nodes if idx is None else len(idx)
        if x.ndim != 4 or x.shape[1] != c.in_dim or x.shape[2] != n:
            raise DimensionError(f"expected input [b, {c.in_dim}, {n}, {c.input_len}], got {x.shape}")
        if x.shape[3] != c.input_len:
            raise LengthError(f"expected input length {c.input_len}, got {x.shape[3]}")
        if c.input_len < c.receptive_field:
            if not c.pad_input:
                raise LengthError(f"input length {c.input_len} below receptive field {c.receptive_field}")
            x = T.pad_left(x, c.receptive_field - c.input_len)
        if c.use_gc and adj is None:
            adj = self.adjacency(idx, x)

        h = T.conv1d_dilated(x, self.start_w, 1, self.start_b)
        skip = None
        for i in range(c.layers):
            residual = h
            h = self.tc[i](h)
            h = T.dropout(h, c.dropout, self.training, self.dropout_rng)
            s = T.conv1d_dilated(h, self.skip_w[i], 1, self.skip_b[i])
            skip = s if skip is None else T.add(skip, s)
            if c.use_gc:
                h = self.gc[i](h, adj)
            else:
                h = T.conv1d_dilated(h, self.lin_w[i], 1, self.lin_b[i])
            h = T.add(h, T.slice_last_steps(residual, h.shape[-1]))
            w, b = self.norm_w[i], self.norm_b[i]
            if idx is not None:
                w, b = T.take(w, idx, axis=1), T.take(b, idx, axis=1)
            h = T.layer_norm(h, (1,), w, b)

        skip = T.add(skip, T.conv1d_dilated(h, self.skip_end_w, 1, self.skip_end_b))
        out = T.relu(skip)
        out = T.relu(T.conv1d_dilated(out, self.end_w, 1, self.end_b))
        out = T.conv1d_dilated(out, self.out_w, 1, self.out_b)  # [b, Q, n, 1]
        return T.reshape(out, out.shape[:3])


__all__ = ["MtgnnConfig", "MtgnnModel", "count_parameters"]
