"""
Helper functions of the functional tests: synthetic clips with known
content, motion and brightness.
"""
import logging

import cv2
import numpy as np

from retivid.video import constants
from retivid.video.media import Clip, save_clip

logger = logging.getLogger(__name__)


def textured_scene(height, width, seed=0, margin=16):
    """
    Smooth random texture larger than the frame by `margin` on every side,
    so translated crops never leave the scene.

    Args:
        height (int): frame height
        width (int): frame width
        seed (int): texture seed
        margin (int): extra pixels on each side

    Returns:
        np.ndarray: (height + 2 margin) x (width + 2 margin) x 3 in [0, 1]

    """
    rng = np.random.default_rng(seed)
    noise = rng.random((height + 2 * margin, width + 2 * margin, 3))
    scene = cv2.GaussianBlur(noise.astype(np.float32), (0, 0), 2.0)
    scene = scene - scene.min()
    return (scene / scene.max()).astype(np.float64)


def translated_frames(scene, frames, height, width, step=(1, 0), margin=16):
    """
    Crops of the scene moving by `step` (dx, dy) pixels per frame
    """
    dx, dy = step
    return [
        scene[margin + t * dy:margin + t * dy + height,
              margin + t * dx:margin + t * dx + width]
        for t in range(frames)
    ]


def scale_luminance(frame, target):
    """
    Scale a frame so its mean luma is `target`
    """
    luma = frame @ np.asarray(constants.LUMA_WEIGHTS)
    return frame * (target / luma.mean())


def dark_noisy_clip(frames=8, size=64, mean=0.1, sigma=0.05, step=(1, 0),
                    seed=0, flicker=0.0):
    """
    Low light clip: a textured scene translated by `step` per frame, scaled
    to mean luma `mean`, with additive Gaussian noise.

    Args:
        frames (int): number of frames
        size (int): frame side
        mean (float): mean luma of the clean frames
        sigma (float): noise standard deviation
        step (tuple): integer (dx, dy) translation between frames
        seed (int): texture and noise seed
        flicker (float): relative brightness change, every other frame is
            scaled by (1 + flicker) and the others by (1 - flicker)

    Returns:
        Clip: the clip, values clipped to [0, 1]

    """
    margin = max(16, frames * max(abs(step[0]), abs(step[1])) + 1)
    scene = textured_scene(size, size, seed, margin)
    rng = np.random.default_rng(seed + 1000)
    arrays = []
    for t, frame in enumerate(
        translated_frames(scene, frames, size, size, step, margin)
    ):
        frame = scale_luminance(frame, mean)
        if flicker:
            frame = frame * (1.0 + flicker if t % 2 else 1.0 - flicker)
        frame = frame + rng.normal(0.0, sigma, frame.shape)
        arrays.append(np.clip(frame, 0.0, 1.0))
    logger.info(
        f"Synthetic clip: {frames} frames of {size}x{size}, mean {mean}, "
        f"sigma {sigma}, flicker {flicker}"
    )
    return Clip.from_arrays(arrays, source_id=f"dark{seed}")


def tinted_clip(frames=8, size=64, channel_means=(0.1, 0.3, 0.6), seed=0):
    """
    Underwater-like clip: every channel of a moving textured scene scaled
    to its own mean.
    """
    scene = textured_scene(size, size, seed)
    arrays = []
    for frame in translated_frames(scene, frames, size, size):
        tinted = np.stack([
            frame[..., c] * (channel_means[c] / frame[..., c].mean())
            for c in range(3)
        ], axis=-1)
        arrays.append(np.clip(tinted, 0.0, 1.0))
    return Clip.from_arrays(arrays, source_id=f"tinted{seed}")


def shifted_pair(size=96, shift=3, seed=0):
    """
    Textured frame pair with current(p) = previous(p + shift x)

    Returns:
        tuple: (previous, current) H x W x 3 arrays

    """
    margin = 16
    scene = textured_scene(size, size, seed, margin)
    previous = scene[margin:margin + size, margin:margin + size]
    current = scene[margin:margin + size, margin + shift:margin + shift + size]
    return previous, current


def write_clip_dir(clip, path, bit_depth=16):
    """
    Write a clip as a PNG frame directory, 16 bit by default so the
    quantization stays far below the test tolerances
    """
    save_clip(clip, str(path), bit_depth)
    return str(path)
