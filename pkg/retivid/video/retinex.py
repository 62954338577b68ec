"""
Enhancement forward pass.

A frame I is denoised by LD into I_LP, decomposed by IE into reflectance
R_IE and illumination S_IE with R_IE * S_IE ~ I_LP, and refined by RD into
(R_RD, S_RD). R_RD is the enhanced frame. IE and RD also receive the
previous frame's outputs warped onto the current frame (zeros for the first
frame), and valid warped reflectance is blended into R_RD.

Tensors are N x C x H x W; frames are H x W x 3 numpy arrays.
"""
import logging
from typing import NamedTuple

import numpy as np
import torch
from munch import Munch

from retivid.video import defaults
from retivid.video.exceptions import DegenerateInput

log = logging.getLogger(__name__)


class PairDownsampleOutput(NamedTuple):
    g1: object
    g2: object


class RetinexPair(NamedTuple):
    R: torch.Tensor
    S: torch.Tensor


class Feedback(NamedTuple):
    R: torch.Tensor
    S: torch.Tensor
    valid: bool = True


def frame_to_tensor(pixels, dtype=torch.float32, device='cpu'):
    """
    H x W x 3 array (or Frame) to a 1 x 3 x H x W tensor
    """
    pixels = getattr(pixels, 'pixels', pixels)
    array = np.ascontiguousarray(np.asarray(pixels).transpose(2, 0, 1))
    return torch.as_tensor(array[None], dtype=dtype, device=device).clone()


def tensor_to_array(tensor):
    """
    1 x 3 x H x W tensor to an H x W x 3 float32 array
    """
    return tensor.detach().cpu()[0].permute(1, 2, 0).numpy().astype(
        np.float32
    )


def zero_feedback(reference):
    """
    All-zero feedback shaped like the reference frame tensor
    """
    zeros = torch.zeros_like(reference)
    return Feedback(zeros, zeros.clone(), False)


def pair_downsample(img):
    """
    Split every 2x2 block [[a, b], [c, d]] into the anti-diagonal average
    g1 = (b + c) / 2 and the diagonal average g2 = (a + d) / 2. Odd inputs
    lose their last row / column first.

    Args:
        img: N x C x H x W tensor, or H x W x C numpy array

    Returns:
        PairDownsampleOutput: g1, g2 of the same type as img, with half
            the height and width

    Raises:
        DegenerateInput: if H < 2 or W < 2

    """
    if isinstance(img, np.ndarray):
        h_axis, w_axis = 0, 1
    else:
        h_axis, w_axis = img.dim() - 2, img.dim() - 1
    height, width = img.shape[h_axis], img.shape[w_axis]
    if height < 2 or width < 2:
        raise DegenerateInput(
            f"Pair downsampling needs at least 2x2 pixels, got "
            f"{height}x{width}"
        )

    def block(row, col):
        index = [slice(None)] * img.ndim
        index[h_axis] = slice(row, height - height % 2, 2)
        index[w_axis] = slice(col, width - width % 2, 2)
        return img[tuple(index)]

    a, b, c, d = block(0, 0), block(0, 1), block(1, 0), block(1, 1)
    return PairDownsampleOutput((b + c) / 2, (a + d) / 2)


def ld_denoise(I, net, with_noise=False):
    """
    I_LP = clamp(I - f_LD(I), 0, 1)

    Args:
        I (torch.Tensor): N x 3 x H x W frame
        net (callable): LD network returning the predicted noise
        with_noise (bool): also return the predicted noise

    Returns:
        torch.Tensor: denoised frame I_LP, same shape as I, or the tuple
            (I_LP, noise) when with_noise is set

    """
    noise = net(I)
    if noise.shape != I.shape:
        raise ValueError(
            f"LD output shape {tuple(noise.shape)} differs from input "
            f"{tuple(I.shape)}"
        )
    I_LP = torch.clamp(I - noise, 0.0, 1.0)
    if with_noise:
        return I_LP, noise
    return I_LP


def ie_decompose(I_LP, feedback, net, s_min=defaults.S_MIN):
    """
    Decompose I_LP into reflectance and illumination.
    S_IE comes from the network (in [s_min, 1]); R_IE = I_LP / S_IE,
    clamped to [0, 1].

    Args:
        I_LP (torch.Tensor): denoised frame
        feedback (Feedback): warped previous (R, S), zeros for frame 0
        net (callable): IE network returning S
        s_min (float): division guard

    Returns:
        RetinexPair: (R_IE, S_IE)

    """
    S = net(torch.cat([I_LP, feedback.R, feedback.S], dim=1))
    R = torch.clamp(I_LP / torch.clamp(S, min=s_min), 0.0, 1.0)
    return RetinexPair(R, S)


def rd_refine(pair, feedback, net):
    """
    Refine (R_IE, S_IE) with the RD network fed [R_IE, S_IE, R_fb, S_fb]

    Args:
        pair (RetinexPair): output of ie_decompose
        feedback (Feedback): warped previous (R, S)
        net (callable): RD network returning 6 channels in [0, 1]

    Returns:
        RetinexPair: (R_RD, S_RD); R_RD is the enhanced frame

    """
    out = net(torch.cat([pair.R, pair.S, feedback.R, feedback.S], dim=1))
    if out.shape[1] != 6:
        raise ValueError(f"RD must output 6 channels, got {out.shape[1]}")
    return RetinexPair(out[:, :3], out[:, 3:])


def blend_feedback(R, feedback, weight=defaults.FEEDBACK_WEIGHT):
    """
    (1 - weight) * R + weight * R_fb when the feedback is valid, R
    otherwise. S is never blended.

    Args:
        R (torch.Tensor): refined reflectance of the current frame
        feedback (Feedback): warped previous (R, S)
        weight (float): share of the warped previous reflectance, [0, 1]

    Returns:
        torch.Tensor: blended reflectance

    """
    if not feedback.valid or weight == 0:
        return R
    return (1.0 - weight) * R + weight * feedback.R


def enhance_frame(I, state, nets, s_min=defaults.S_MIN):
    """
    Full enhancement pass of one frame: ld_denoise, ie_decompose, rd_refine
    and the blend of R_RD with the warped previous reflectance.

    Args:
        I (torch.Tensor): 1 x 3 x H x W frame
        state: Feedback, TemporalState or None (zero feedback)
        nets (RetinexNets): the three subnetworks
        s_min (float): division guard of the decomposition

    Returns:
        tuple: (R_RD, RetinexPair of (R_RD, S_RD) for the feedback,
            bundle with every tensor the losses need)

    """
    feedback = as_feedback(state, I)
    I_LP, noise = ld_denoise(I, nets.ld, with_noise=True)
    ie_pair = ie_decompose(I_LP, feedback, nets.ie, s_min)
    refined = rd_refine(ie_pair, feedback, nets.rd)
    rd_pair = RetinexPair(
        blend_feedback(refined.R, feedback, nets.feedback_weight), refined.S
    )

    g1, g2 = pair_downsample(I)
    rd_in = torch.cat([ie_pair.R, ie_pair.S], dim=1)
    rd_out = torch.cat([refined.R, refined.S], dim=1)
    rd_in_g1, rd_in_g2 = pair_downsample(rd_in)
    fb = torch.cat([feedback.R, feedback.S], dim=1)
    fb_g1, fb_g2 = pair_downsample(fb)

    bundle = Munch(
        I=I,
        noise=noise,
        I_LP=I_LP,
        g1=g1,
        g2=g2,
        noise_g1=nets.ld(g1),
        noise_g2=nets.ld(g2),
        R_IE=ie_pair.R,
        S_IE=ie_pair.S,
        R_RD=rd_pair.R,
        S_RD=rd_pair.S,
        rd_in=rd_in,
        rd_out=rd_out,
        rd_in_g1=rd_in_g1,
        rd_in_g2=rd_in_g2,
        rd_out_of_g1=nets.rd(torch.cat([rd_in_g1, fb_g1], dim=1)),
        rd_out_of_g2=nets.rd(torch.cat([rd_in_g2, fb_g2], dim=1)),
    )
    return rd_pair.R, rd_pair, bundle


def as_feedback(state, reference):
    """
    Normalize the accepted feedback forms to a Feedback of tensors shaped,
    typed and placed like reference.
    """
    if state is None:
        return zero_feedback(reference)
    if isinstance(state, Feedback):
        return state
    # TemporalState: numpy H x W x 3 arrays
    return Feedback(
        frame_to_tensor(state.R_warped, reference.dtype, reference.device),
        frame_to_tensor(state.S_warped, reference.dtype, reference.device),
        bool(state.valid),
    )
