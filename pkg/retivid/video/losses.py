"""
Self-supervised losses of the enhancement pass.

Every term is mean reduced over its elements so magnitudes do not depend on
the frame size. The total is the weighted sum of the 11 terms, all weights
default to 1.0.

L_res1 / L_cons1 / L_over / L_pix follow their closed forms, with the
L_over and L_pix targets scaled into the range of S (see
compute_coefficients). The following terms are concretized here from their
prose description:

* L_res2 / L_cons2: the L_res1 / L_cons1 structure applied to RD, which is
  treated as the denoiser of the concatenated (R_IE, S_IE)
* L_inter: mean absolute luma difference of the two pair downsampled
  halves of R_RD
* L_var: squared difference of 5x5 local luma variances of R_RD and R_IE
* L_color: 1 - mean cosine similarity of the RGB vectors of R_RD and R_IE
"""
import logging
import math
from dataclasses import dataclass, field, fields

import torch
import torch.nn.functional as F

from retivid.video import constants, defaults
from retivid.video.retinex import pair_downsample

log = logging.getLogger(__name__)


@dataclass
class BrightnessCoefficients:
    """
    Brightness targets derived from the denoised frame.

    Attributes:
        alpha (torch.Tensor): shape (1,) in standard mode, (3,) per RGB
            channel in underwater mode, float64
        beta (torch.Tensor): alpha^-1 * 0.7^-exponent, same shape as alpha
        Y_L (torch.Tensor): floored mean luma (standard) or per channel
            means (underwater)
        mode (str): 'standard' or 'underwater'
        exponent (torch.Tensor): shape (1,), exponent of the pixel-wise
            curve; equals alpha in standard mode and target / mean(Y_Lc)
            in underwater mode
        scale (torch.Tensor): shape (1,), max(1, max alpha^-1); both
            targets are divided by it so they fit the range of S
        s_min (float): lower bound of the pixel-wise target

    """
    alpha: torch.Tensor
    beta: torch.Tensor
    Y_L: torch.Tensor
    mode: str = constants.MODE_STANDARD
    exponent: torch.Tensor = None
    scale: torch.Tensor = None
    s_min: float = defaults.S_MIN

    def __post_init__(self):
        if self.exponent is None:
            self.exponent = self.alpha.mean().reshape(1)
        if self.scale is None:
            self.scale = torch.ones_like(self.exponent)

    def view(self, value):
        return value.view(1, -1, 1, 1)


@dataclass
class LossReport:
    res1: float
    cons1: float
    over: float
    pix: float
    smooth: float
    res2: float
    cons2: float
    ill: float
    inter: float
    var: float
    color: float
    total: float
    graph: torch.Tensor = field(default=None, compare=False, repr=False)

    def terms(self):
        """
        Returns:
            dict: the 11 named loss values in summation order

        """
        return {name: getattr(self, name) for name in constants.LOSS_NAMES}

    def as_dict(self):
        values = {
            f.name: getattr(self, f.name) for f in fields(self)
            if f.name != 'graph'
        }
        return values

    def is_finite(self):
        return all(
            value == value and abs(value) != float('inf')
            for value in self.as_dict().values()
        )


def luminance(x):
    """
    Rec.601 luma of an N x 3 x H x W tensor, N x 1 x H x W
    """
    weights = torch.tensor(
        constants.LUMA_WEIGHTS, dtype=x.dtype, device=x.device
    ).view(1, 3, 1, 1)
    return (x * weights).sum(dim=1, keepdim=True)


def compute_coefficients(I_LD, mode=constants.MODE_STANDARD,
                         target_brightness=None, y_min=defaults.Y_MIN,
                         s_min=defaults.S_MIN):
    """
    Brightness coefficients of the L_over / L_pix targets.

    standard:   Y_L = mean luma,        alpha = target / max(Y_L, y_min)
    underwater: Y_Lc = channel means,   alpha_c = target / max(Y_Lc, y_min)
    beta = alpha^-1 * 0.7^-exponent in both modes.

    The pixel-wise curve of every channel uses one exponent so that both
    targets stay proportional to Y_Lc, and both targets are divided by
    max(1, max alpha^-1) so that the brightest channel's L_over target is
    at most 1. In standard mode the exponent is alpha and the division only
    applies to frames brighter than the target.

    Args:
        I_LD (torch.Tensor): denoised frame, N x 3 x H x W
        mode (str): 'standard' or 'underwater'
        target_brightness (float): 0.5 (standard) / 0.3 (underwater) when
            None
        y_min (float): floor of the mean
        s_min (float): lower bound of the pixel-wise target

    Returns:
        BrightnessCoefficients: float64 coefficients, detached from the
            graph

    """
    if mode not in constants.MODES:
        raise ValueError(f"Unknown loss mode {mode}")
    if target_brightness is None:
        target_brightness = defaults.TARGET_BRIGHTNESS[mode]
    x = I_LD.detach().to(torch.float64)
    if mode == constants.MODE_UNDERWATER:
        Y_L = x.mean(dim=(0, 2, 3))
    else:
        Y_L = luminance(x).mean().reshape(1)
    Y_L = torch.clamp(Y_L, min=y_min)
    alpha = target_brightness / Y_L
    exponent = (target_brightness / Y_L.mean()).reshape(1)
    scale = torch.clamp((1.0 / alpha).max(), min=1.0).reshape(1)
    beta = (1.0 / alpha) * torch.pow(
        torch.full_like(alpha, defaults.PIX_REFERENCE), -exponent
    )
    return BrightnessCoefficients(
        alpha=alpha, beta=beta, Y_L=Y_L, mode=mode, exponent=exponent,
        scale=scale, s_min=s_min,
    )


def _reduce_channels(squared, mode):
    per_channel = squared.mean(dim=(0, 2, 3))
    if mode == constants.MODE_UNDERWATER:
        return per_channel.sum()
    return per_channel.mean()


def _mse(a, b):
    return ((a - b) ** 2).mean()


def loss_res1(bundle):
    """
    |G1(I) - f(G1(I)) - G2(I)|^2 + |G2(I) - f(G2(I)) - G1(I)|^2
    """
    return (
        _mse(bundle.g1 - bundle.noise_g1, bundle.g2)
        + _mse(bundle.g2 - bundle.noise_g2, bundle.g1)
    )


def loss_cons1(bundle):
    """
    Denoise-then-downsample against downsample-then-denoise, both halves
    """
    denoised = pair_downsample(bundle.I - bundle.noise)
    return (
        _mse(bundle.g1 - bundle.noise_g1, denoised.g1)
        + _mse(bundle.g2 - bundle.noise_g2, denoised.g2)
    )


def loss_over(S_IE, coeffs):
    """
    |S_IE - alpha^-1 / scale|^2, summed over channels in underwater mode
    """
    target = coeffs.view(1.0 / (coeffs.alpha * coeffs.scale))
    return _reduce_channels((S_IE - target.to(S_IE.dtype)) ** 2, coeffs.mode)


def pix_target(I_LD, coeffs):
    """
    beta * (alpha * I_LD)^exponent / scale, clamped to [s_min, 1].

    Evaluated in float64 log space, (alpha * I_LD)^exponent overflows on
    near-black frames.

    Args:
        I_LD (torch.Tensor): denoised frame, N x 3 x H x W
        coeffs (BrightnessCoefficients): coefficients of the frame

    Returns:
        torch.Tensor: float64 target, detached, shape of I_LD

    """
    alpha = coeffs.view(coeffs.alpha)
    exponent = coeffs.view(coeffs.exponent)
    x = I_LD.detach().to(torch.float64)
    log_target = (
        exponent * (torch.log(alpha * x) - math.log(defaults.PIX_REFERENCE))
        - torch.log(alpha) - torch.log(coeffs.view(coeffs.scale))
    )
    # log(0) is -inf, exp gives 0 and the floor takes over
    return torch.exp(torch.clamp(log_target, max=0.0)).clamp(min=coeffs.s_min)


def loss_pix(S_IE, I_LD, coeffs):
    """
    |S_IE - pix_target(I_LD)|^2, per channel in underwater mode.
    The target is a constant of the step.
    """
    target = pix_target(I_LD, coeffs).to(S_IE.dtype)
    return _reduce_channels((S_IE - target) ** 2, coeffs.mode)


def loss_smooth(S_IE):
    """
    Mean absolute forward differences of S_IE, horizontal plus vertical
    """
    dx = S_IE[..., :, 1:] - S_IE[..., :, :-1]
    dy = S_IE[..., 1:, :] - S_IE[..., :-1, :]
    return dx.abs().mean() + dy.abs().mean()


def loss_res2(bundle):
    """
    L_res1 structure on RD: RD(G1(x)) against G2(x) and back, with
    x = (R_IE, S_IE)
    """
    return (
        _mse(bundle.rd_out_of_g1, bundle.rd_in_g2)
        + _mse(bundle.rd_out_of_g2, bundle.rd_in_g1)
    )


def loss_cons2(bundle):
    """
    L_cons1 structure on RD: RD(G(x)) against G(RD(x)), both halves
    """
    refined = pair_downsample(bundle.rd_out)
    return (
        _mse(bundle.rd_out_of_g1, refined.g1)
        + _mse(bundle.rd_out_of_g2, refined.g2)
    )


def loss_ill(S_RD, S_IE):
    return _mse(S_RD, S_IE)


def loss_inter(R_RD):
    """
    Mean absolute luma difference between the two pair downsampled halves
    """
    g1, g2 = pair_downsample(R_RD)
    return (luminance(g1) - luminance(g2)).abs().mean()


def local_variance(x, window=defaults.VAR_WINDOW):
    """
    Variance of every window x window neighbourhood of an N x 1 x H x W
    tensor, borders replicated, N x 1 x H x W
    """
    pad = window // 2
    padded = F.pad(x, (pad, pad, pad, pad), mode='replicate')
    patches = F.unfold(padded, window)
    variance = patches.var(dim=1, unbiased=False)
    return variance.view(x.shape[0], 1, x.shape[2], x.shape[3])


def loss_var(R_RD, R_IE):
    return _mse(
        local_variance(luminance(R_RD)), local_variance(luminance(R_IE))
    )


def loss_color(R_RD, R_IE, eps=defaults.COLOR_NORM_EPS):
    """
    1 - mean cosine similarity of per pixel RGB vectors; pixels with a
    near zero vector in either image are skipped
    """
    dot = (R_RD * R_IE).sum(dim=1)
    norms = R_RD.norm(dim=1) * R_IE.norm(dim=1)
    valid = (R_RD.norm(dim=1) > eps) & (R_IE.norm(dim=1) > eps)
    if not bool(valid.any()):
        return R_RD.sum() * 0.0
    cosine = dot[valid] / norms[valid]
    return torch.clamp(1.0 - cosine.mean(), min=0.0)


def loss_terms(bundle, coeffs):
    """
    All 11 loss tensors

    Args:
        bundle (Munch): intermediates of enhance_frame
        coeffs (BrightnessCoefficients): brightness targets

    Returns:
        dict: name -> scalar tensor, in summation order

    """
    terms = {
        'res1': loss_res1(bundle),
        'cons1': loss_cons1(bundle),
        'over': loss_over(bundle.S_IE, coeffs),
        'pix': loss_pix(bundle.S_IE, bundle.I_LP, coeffs),
        'smooth': loss_smooth(bundle.S_IE),
        'res2': loss_res2(bundle),
        'cons2': loss_cons2(bundle),
        'ill': loss_ill(bundle.S_RD, bundle.S_IE),
        'inter': loss_inter(bundle.R_RD),
        'var': loss_var(bundle.R_RD, bundle.R_IE),
        'color': loss_color(bundle.R_RD, bundle.R_IE),
    }
    return {name: terms[name] for name in constants.LOSS_NAMES}


def total_loss(bundle, coeffs, mode=None, weights=None):
    """
    Evaluate every loss term and their weighted total.

    Args:
        bundle (Munch): intermediates of enhance_frame
        coeffs (BrightnessCoefficients): brightness targets, their mode
            selects the standard or underwater L_over / L_pix
        mode (str): optional, must agree with coeffs.mode
        weights (dict): per term weights, 1.0 for missing names

    Returns:
        LossReport: float values of the 11 terms and the total; `graph`
            holds the differentiable total

    """
    if mode is not None and mode != coeffs.mode:
        raise ValueError(
            f"Coefficients were computed for {coeffs.mode}, not {mode}"
        )
    weights = weights or {}
    terms = loss_terms(bundle, coeffs)
    graph = None
    total = 0.0
    values = {}
    for name in constants.LOSS_NAMES:
        weight = float(weights.get(name, 1.0))
        weighted = terms[name] * weight
        graph = weighted if graph is None else graph + weighted
        values[name] = float(terms[name].detach())
        total += weight * values[name]
    return LossReport(total=total, graph=graph, **values)
