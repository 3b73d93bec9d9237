"""
The five instrument recognition networks and their input arrangements.

Every network maps a (B, C, 258, F) input to (B, 258, 7) logits; the sigmoid
that the layer plans end with is applied by forward()/forward_batch(), so the
training loss can work on logits.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..exceptions import InvalidVariantError, MissingComponentError, ShapeMismatchError
from .geometry import AXIS_INSTRUMENT, N_FRAMES, N_INSTRUMENTS, N_PITCH_BINS, FrameRaster
from .pitch import HSF_ORDERS

logger = logging.getLogger(__name__)

BASELINE_2D = 'baseline2d'
RESBLOCK_1D = 'resblock1d'
CQT_HSF = 'cqt_hsf'
CQT_PITCH_F = 'cqt_pitch_f'
CQT_PITCH_C = 'cqt_pitch_c'

VARIANTS = (BASELINE_2D, RESBLOCK_1D, CQT_HSF, CQT_PITCH_F, CQT_PITCH_C)
PITCH_VARIANTS = (CQT_HSF, CQT_PITCH_F, CQT_PITCH_C)

N_RES_BLOCKS = 3
CONVS_PER_BLOCK = 3
CONV_KINDS = ('conv1d', 'conv2d')


@dataclass(frozen=True)
class LayerSpec:
    """One entry of a layer plan."""
    kind: str  # conv1d, conv2d, pool_freq or global_freq_pool
    kernel: tuple
    in_channels: int
    out_channels: int
    norm: Optional[str] = 'batchnorm'
    activation: Optional[str] = 'relu'
    block: Optional[int] = None  # residual block index


@dataclass(frozen=True)
class ModelSpec:
    """
    Declarative description of a network variant.

    Args:
        variant: One of VARIANTS
        hsf_order: HSF order n for cqt_hsf, ignored otherwise
        width: Channel width of the residual stack; the 2-D baseline uses
            width/4, width/2, width, 2*width
    """
    variant: str
    hsf_order: Optional[int] = None
    width: int = 128

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidVariantError(
                f"Unknown variant {self.variant!r}; valid variants: {', '.join(VARIANTS)}",
                {'variant': self.variant, 'valid': list(VARIANTS)},
            )
        if self.variant == CQT_HSF and self.hsf_order not in HSF_ORDERS:
            raise InvalidVariantError(
                f"cqt_hsf needs an HSF order in 1..5, got {self.hsf_order!r}",
                {'variant': self.variant, 'hsf_order': self.hsf_order},
            )
        if self.variant != CQT_HSF and self.hsf_order is not None:
            object.__setattr__(self, 'hsf_order', None)

    @property
    def uses_pitch(self) -> bool:
        return self.variant in PITCH_VARIANTS

    @property
    def input_shape(self) -> tuple:
        """(channels, frames, bins) of one example."""
        if self.variant == CQT_PITCH_F:
            return 1, N_FRAMES, 2 * N_PITCH_BINS
        if self.variant in (CQT_HSF, CQT_PITCH_C):
            return 2, N_FRAMES, N_PITCH_BINS
        return 1, N_FRAMES, N_PITCH_BINS

    @property
    def input_arrangement(self) -> str:
        return {
            BASELINE_2D: 'CQT, 1 channel x 258 frames x 88 bins, 2-D convolutions',
            RESBLOCK_1D: 'CQT, 1 channel x 258 x 88, bins flattened into 1-D conv channels',
            CQT_HSF: 'CQT and HSF stacked as 2 channels x 258 x 88',
            CQT_PITCH_F: 'CQT and pitch salience concatenated along frequency, 1 channel x 258 x 176',
            CQT_PITCH_C: 'CQT and pitch salience stacked as 2 channels x 258 x 88',
        }[self.variant]

    @property
    def label(self) -> str:
        if self.variant == CQT_HSF:
            return f"CQT+HSF-{self.hsf_order}"
        return {
            BASELINE_2D: 'CQT only (2-D CNN)',
            RESBLOCK_1D: 'CQT only (ResBlock CNN)',
            CQT_PITCH_F: 'CQT+Pitch (F)',
            CQT_PITCH_C: 'CQT+Pitch (C)',
        }[self.variant]

    @property
    def layer_plan(self) -> tuple:
        if self.variant == BASELINE_2D:
            return _baseline_plan(self)
        return _resblock_plan(self)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['input_shape'] = list(self.input_shape)
        data['input_arrangement'] = self.input_arrangement
        data['layer_plan'] = [asdict(layer) for layer in self.layer_plan]
        data['n_conv_layers'] = count_conv_layers(self)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ModelSpec':
        return cls(variant=data['variant'], hsf_order=data.get('hsf_order'), width=data.get('width', 128))


def _resblock_plan(spec: ModelSpec) -> tuple:
    channels, _, bins = spec.input_shape
    width = spec.width
    plan = [LayerSpec('conv1d', (3,), channels * bins, width)]
    for block in range(N_RES_BLOCKS):
        for position in range(CONVS_PER_BLOCK):
            last = position == CONVS_PER_BLOCK - 1
            plan.append(LayerSpec('conv1d', (3,), width, width, activation=None if last else 'relu', block=block))
    plan.append(LayerSpec('conv1d', (1,), width, N_INSTRUMENTS, activation='sigmoid'))
    return tuple(plan)


def _baseline_plan(spec: ModelSpec) -> tuple:
    channels = spec.input_shape[0]
    widths = [spec.width // 4, spec.width // 2, spec.width, spec.width * 2]
    plan = []
    previous = channels
    for width in widths:
        plan.append(LayerSpec('conv2d', (3, 3), previous, width))
        plan.append(LayerSpec('pool_freq', (1, 2), width, width, norm=None, activation=None))
        previous = width
    plan.append(LayerSpec('global_freq_pool', (), previous, previous, norm=None, activation=None))
    plan.append(LayerSpec('conv1d', (1,), previous, N_INSTRUMENTS, activation='sigmoid'))
    return tuple(plan)


def count_conv_layers(spec: ModelSpec) -> int:
    """Number of convolutional layers in a ModelSpec's layer plan."""
    return sum(1 for layer in spec.layer_plan if layer.kind in CONV_KINDS)


def init_layer(layer: nn.Module) -> None:
    """Initialize a convolutional layer."""
    nn.init.xavier_uniform_(layer.weight)
    if layer.bias is not None:
        layer.bias.data.fill_(0.)


def init_bn(bn: nn.Module) -> None:
    """Initialize a batch-norm layer."""
    bn.bias.data.fill_(0.)
    bn.weight.data.fill_(1.)


class ConvBn1d(nn.Module):
    """Time convolution with same padding, followed by batch norm."""

    def __init__(self, layer: LayerSpec):
        super().__init__()
        kernel = layer.kernel[0]
        self.conv = nn.Conv1d(layer.in_channels, layer.out_channels, kernel_size=kernel,
                              stride=1, padding=kernel // 2, bias=False)
        self.bn = nn.BatchNorm1d(layer.out_channels)
        self.relu = layer.activation == 'relu'
        init_layer(self.conv)
        init_bn(self.bn)

    def forward(self, x):
        x = self.bn(self.conv(x))
        return F.relu(x) if self.relu else x


class ResidualBlock1d(nn.Module):
    """Three time convolutions with an additive skip: out = x + branch(x)."""

    def __init__(self, layers: list):
        super().__init__()
        self.layers = nn.ModuleList([ConvBn1d(layer) for layer in layers])

    def forward(self, x):
        branch = x
        for layer in self.layers:
            branch = layer(branch)
        return x + branch


class ResBlockNet1d(nn.Module):
    """
    Early conv, three residual blocks, late conv; 1-D convolutions along time
    with the (channel, bin) axes flattened into conv channels.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        plan = spec.layer_plan
        self.early = ConvBn1d(plan[0])
        self.blocks = nn.ModuleList([
            ResidualBlock1d([layer for layer in plan if layer.block == block])
            for block in range(N_RES_BLOCKS)
        ])
        self.late = ConvBn1d(plan[-1])

    def forward(self, x):
        # x: (batch, channels, frames, bins)
        batch, channels, frames, bins = x.shape
        x = x.permute(0, 1, 3, 2).reshape(batch, channels * bins, frames)
        x = self.early(x)
        for block in self.blocks:
            x = block(x)
        x = self.late(x)
        return x.transpose(1, 2)


class ConvBn2d(nn.Module):
    def __init__(self, layer: LayerSpec):
        super().__init__()
        self.conv = nn.Conv2d(layer.in_channels, layer.out_channels, kernel_size=layer.kernel,
                              stride=(1, 1), padding=(1, 1), bias=False)
        self.bn = nn.BatchNorm2d(layer.out_channels)
        init_layer(self.conv)
        init_bn(self.bn)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


class Baseline2dNet(nn.Module):
    """
    2-D CNN pooling only along frequency so that all 258 frames survive.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        plan = spec.layer_plan
        self.convs = nn.ModuleList([ConvBn2d(layer) for layer in plan if layer.kind == 'conv2d'])
        self.pool_sizes = [layer.kernel for layer in plan if layer.kind == 'pool_freq']
        self.late = ConvBn1d(plan[-1])

    def forward(self, x):
        # x: (batch, channels, frames, bins)
        for conv, pool_size in zip(self.convs, self.pool_sizes):
            x = F.max_pool2d(conv(x), kernel_size=pool_size)
        x = torch.amax(x, dim=3)
        x = self.late(x)
        return x.transpose(1, 2)


def build_model(spec: ModelSpec) -> nn.Module:
    """
    Instantiate the network described by a spec.

    Args:
        spec: Model spec

    Returns:
        torch module producing (B, 258, 7) logits
    """
    model = Baseline2dNet(spec) if spec.variant == BASELINE_2D else ResBlockNet1d(spec)
    logger.debug(f"Built {spec.label}: {count_parameters(model)} parameters")
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


@dataclass(frozen=True)
class PredictionRoll:
    """Per-frame instrument likelihoods, (258, 7) in [0, 1]."""
    data: FrameRaster


def assemble_input(spec: ModelSpec, cqt: FrameRaster, salience=None, hsf=None) -> np.ndarray:
    """
    Arrange the features a variant consumes into one input tensor.

    Args:
        spec: Model spec (or a variant name)
        cqt: (258, 88) CQT raster
        salience: PitchSalience, required by cqt_pitch_f and cqt_pitch_c
        hsf: Hsf, required by cqt_hsf

    Returns:
        float32 array shaped spec.input_shape

    Raises:
        MissingComponentError: Naming the variant and the absent component
    """
    if isinstance(spec, str):
        spec = ModelSpec(spec, hsf_order=HSF_ORDERS[0] if spec == CQT_HSF else None)

    x = cqt.data.astype(np.float32)
    if spec.variant in (BASELINE_2D, RESBLOCK_1D):
        return x[None]

    if spec.variant == CQT_HSF:
        if hsf is None:
            raise MissingComponentError(
                f"Variant {spec.variant} needs an HSF component",
                {'variant': spec.variant, 'component': 'hsf'},
            )
        second = hsf.data.data
    else:
        if salience is None:
            raise MissingComponentError(
                f"Variant {spec.variant} needs a pitch salience component",
                {'variant': spec.variant, 'component': 'salience'},
            )
        second = salience.data.data

    if second.shape != x.shape:
        raise ShapeMismatchError(
            f"Pitch component {second.shape} does not match CQT {x.shape}",
            {'cqt': list(x.shape), 'pitch': list(second.shape)},
        )

    second = second.astype(np.float32)
    if spec.variant == CQT_PITCH_F:
        return np.concatenate([x, second], axis=1)[None]
    return np.stack([x, second])


def _model_device(model: nn.Module) -> torch.device:
    return next(model.parameters()).device


def forward_batch(model: nn.Module, batch) -> np.ndarray:
    """
    Inference on a batch.

    Args:
        model: Network built by build_model
        batch: (B, C, 258, F) array or tensor matching the model's spec

    Returns:
        (B, 258, 7) float32 probabilities
    """
    expected = tuple(model.spec.input_shape)
    if tuple(batch.shape[1:]) != expected:
        raise ShapeMismatchError(
            f"{model.spec.variant} expects inputs of shape {expected}, got {tuple(batch.shape[1:])}",
            {'expected': list(expected), 'actual': list(batch.shape[1:])},
        )
    tensor = torch.as_tensor(np.asarray(batch, dtype=np.float32)) if not torch.is_tensor(batch) else batch.float()
    model.eval()
    with torch.no_grad():
        probabilities = torch.sigmoid(model(tensor.to(_model_device(model))))
    return probabilities.cpu().numpy()


def forward(model: nn.Module, inputs) -> PredictionRoll:
    """
    Inference on one example.

    Args:
        model: Network built by build_model
        inputs: (C, 258, F) input from assemble_input

    Returns:
        PredictionRoll of shape (258, 7)
    """
    if len(inputs.shape) != 3:
        raise ShapeMismatchError(f"Expected one (C, T, F) example, got shape {tuple(inputs.shape)}")
    probabilities = forward_batch(model, inputs[None])[0]
    return PredictionRoll(FrameRaster(probabilities, f_axis=AXIS_INSTRUMENT))
