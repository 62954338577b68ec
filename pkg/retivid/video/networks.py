"""
The three trainable subnetworks of the enhancement pass.

All of them are plain stacks of 3x3 convolutions; layer counts and widths
come from the MODEL config section.
"""
import logging
from collections import OrderedDict

import torch
from torch import nn

from retivid.video import constants, defaults

log = logging.getLogger(__name__)

FEEDBACK_CHANNELS = 6


class ConvStack(nn.Module):
    """
    `layers` 3x3 convolutions, LeakyReLU between them, no activation after
    the last one.

    Args:
        in_channels (int): input channels
        out_channels (int): output channels
        layers (int): number of convolutions, at least 2
        width (int): channels of the hidden convolutions
        zero_last (bool): zero initialize the last convolution so the stack
            outputs 0 before training

    """

    def __init__(self, in_channels, out_channels, layers, width,
                 zero_last=False):
        super().__init__()
        if layers < 2:
            raise ValueError(f"A conv stack needs 2 layers, got {layers}")
        modules = [
            nn.Conv2d(in_channels, width, 3, padding=1),
            nn.LeakyReLU(0.2),
        ]
        for _ in range(layers - 2):
            modules += [nn.Conv2d(width, width, 3, padding=1), nn.LeakyReLU(0.2)]
        last = nn.Conv2d(width, out_channels, 3, padding=1)
        if zero_last:
            nn.init.zeros_(last.weight)
            nn.init.zeros_(last.bias)
        modules.append(last)
        self.body = nn.Sequential(*modules)

    def forward(self, x):
        return self.body(x)


class DenoiseNet(nn.Module):
    """
    LD contract: 3 channels in, predicted noise residual (3 channels) out.
    Outputs 0 at initialization, so the first denoised frame is the input.
    """
    name = constants.LD_NET
    in_channels = 3
    out_channels = 3

    def __init__(self, layers=3, width=48):
        super().__init__()
        self.stack = ConvStack(
            self.in_channels, self.out_channels, layers, width, zero_last=True
        )

    def forward(self, x):
        return self.stack(x)


class IlluminationNet(nn.Module):
    """
    IE contract: denoised frame plus 6 feedback channels in, illumination S
    out, squashed into [s_min, 1].
    """
    name = constants.IE_NET
    in_channels = 3 + FEEDBACK_CHANNELS
    out_channels = 3

    def __init__(self, layers=3, width=48, s_min=defaults.S_MIN):
        super().__init__()
        self.s_min = s_min
        self.stack = ConvStack(
            self.in_channels, self.out_channels, layers, width
        )

    def forward(self, x):
        return self.s_min + (1.0 - self.s_min) * torch.sigmoid(self.stack(x))


class RefineNet(nn.Module):
    """
    RD contract: (R_IE, S_IE) plus 6 feedback channels in, refined (R, S)
    out. Residual on the (R_IE, S_IE) channels with a zero initialized last
    layer, so it starts as the identity on its input pair.
    """
    name = constants.RD_NET
    in_channels = 6 + FEEDBACK_CHANNELS
    out_channels = 6

    def __init__(self, layers=5, width=64):
        super().__init__()
        self.stack = ConvStack(
            self.in_channels, self.out_channels, layers, width, zero_last=True
        )

    def forward(self, x):
        return torch.clamp(x[:, :6] + self.stack(x), 0.0, 1.0)


class RetinexNets(nn.Module):
    """
    The LD, IE and RD subnetworks trained jointly, and the share of the
    warped previous reflectance blended into their output.
    """

    def __init__(self, ld, ie, rd, feedback_weight=defaults.FEEDBACK_WEIGHT):
        super().__init__()
        self.ld = ld
        self.ie = ie
        self.rd = rd
        feedback_weight = float(feedback_weight)
        if not 0.0 <= feedback_weight <= 1.0:
            raise ValueError(
                f"feedback_weight must lie in [0, 1], got {feedback_weight}"
            )
        self.feedback_weight = feedback_weight

    @classmethod
    def from_config(cls, model_cfg):
        """
        Build the networks from the MODEL config section

        Args:
            model_cfg (dict): MODEL section

        Returns:
            RetinexNets: freshly initialized networks

        """
        nets = cls(
            DenoiseNet(model_cfg['ld_layers'], model_cfg['ld_channels']),
            IlluminationNet(
                model_cfg['ie_layers'], model_cfg['ie_channels'],
                model_cfg.get('s_min', defaults.S_MIN),
            ),
            RefineNet(model_cfg['rd_layers'], model_cfg['rd_channels']),
            model_cfg.get('feedback_weight', defaults.FEEDBACK_WEIGHT),
        )
        log.debug(
            "Built networks with %d parameters",
            sum(p.numel() for p in nets.parameters()),
        )
        return nets

    def by_name(self):
        return OrderedDict(
            [(net.name, net) for net in (self.ld, self.ie, self.rd)]
        )

    def state_dicts(self):
        """
        Returns:
            OrderedDict: network name -> detached copy of its state dict

        """
        return OrderedDict(
            (name, OrderedDict(
                (key, value.detach().clone())
                for key, value in net.state_dict().items()
            ))
            for name, net in self.by_name().items()
        )

    def load_state_dicts(self, weights):
        """
        Load per network state dicts as produced by state_dicts()

        Args:
            weights (dict): network name -> state dict

        """
        for name, net in self.by_name().items():
            net.load_state_dict(weights[name])
