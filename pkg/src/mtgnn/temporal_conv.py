"""Gated temporal convolution built from dilated inception layers."""
import numpy as np

from . import tensor as T
from .exceptions import ConfigError, LengthError
from .nn import Module, uniform_param

INCEPTION_WIDTHS = (2, 3, 6, 7)


def receptive_field(m, c, q=1, mode=None):
    """Receptive field of ``m`` stacked width-``c`` convolutions.

    ``mode="linear"`` gives ``m*(c-1)+1``; ``mode="exponential"`` assumes the
    dilation grows by a factor ``q`` per layer starting from 1. By default the
    exponential form is used whenever ``q > 1``.
    """
    if q <= 0:
        raise ConfigError(f"dilation rate must be positive, got {q}")
    if m < 1 or c < 1:
        raise ConfigError(f"need m >= 1 and c >= 1, got m={m}, c={c}")
    if mode is None:
        mode = "exponential" if q > 1 else "linear"
    if mode == "linear":
        return m * (c - 1) + 1
    if mode != "exponential":
        raise ConfigError(f"unknown receptive field mode {mode!r}")
    if q == 1:
        return m * (c - 1) + 1
    # integer arithmetic keeps the result exact
    return 1 + (c - 1) * (q ** m - 1) // (q - 1)


class DilatedInceptionLayer(Module):
    """Parallel dilated convolutions of several widths, right-aligned and concatenated.

    Each branch produces ``c_out / len(widths)`` channels and is truncated to
    the length left by the widest filter.
    """

    def __init__(self, c_in, c_out, dilation=1, widths=INCEPTION_WIDTHS, rng=None):
        if c_out % len(widths):
            raise ConfigError(f"c_out={c_out} must be divisible by {len(widths)} branches")
        if dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {dilation}")
        rng = np.random.default_rng() if rng is None else rng
        self.widths = tuple(widths)
        self.dilation = int(dilation)
        per = c_out // len(widths)
        self.kernels = []
        self.biases = []
        for k in self.widths:
            bound = 1.0 / np.sqrt(c_in * k)
            self.kernels.append(uniform_param(rng, (per, c_in, 1, k), bound))
            self.biases.append(uniform_param(rng, (per,), bound))

    @property
    def shrink(self):
        return self.dilation * (max(self.widths) - 1)

    def fused(self):
        """All branches as one width-``max(widths)`` kernel and bias.

        Taps beyond a branch's width are zero, so after right-aligned
        truncation the single convolution equals the concatenated branches.
        """
        wmax = max(self.widths)
        kernels = [T.pad_last(K, 0, wmax - K.shape[-1]) for K in self.kernels]
        if len(kernels) == 1:
            return kernels[0], self.biases[0]
        return T.concat(kernels, axis=0), T.concat(self.biases, axis=0)

    def _check_length(self, t):
        if t - self.shrink < 1:
            raise LengthError(f"sequence length {t} too short: dilated inception at dilation "
                              f"{self.dilation} needs at least {self.shrink + 1} steps")

    def forward(self, z):
        z = T.as_tensor(z)
        self._check_length(z.shape[-1])
        K, b = self.fused()
        return T.conv1d_dilated(z, K, self.dilation, b)


class TCModule(Module):
    """``tanh(filter(x)) * sigmoid(gate(x))``."""

    def __init__(self, c_in, c_out, dilation=1, widths=INCEPTION_WIDTHS, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.filter = DilatedInceptionLayer(c_in, c_out, dilation, widths, rng)
        self.gate = DilatedInceptionLayer(c_in, c_out, dilation, widths, rng)

    def forward(self, x):
        x = T.as_tensor(x)
        self.filter._check_length(x.shape[-1])
        kf, bf = self.filter.fused()
        kg, bg = self.gate.fused()
        c = kf.shape[0]
        both = T.conv1d_dilated(x, T.concat([kf, kg], axis=0), self.filter.dilation,
                                T.concat([bf, bg], axis=0))
        return T.hadamard(T.tanh(T.narrow(both, 1, 0, c)), T.sigmoid(T.narrow(both, 1, c, c)))
