"""
Optical flow backends and the ZTFL flow record.

Backend call convention: estimate(a, b) returns a H x W x 2 field f of
(dx, dy) displacements with b(p + f(p)) ~ a(p). Sampling b at p + f(p)
therefore brings b onto the grid of a.

ZTFL record, little endian: magic 'ZTFL' | u32 H | u32 W | H*W*2 float32,
row major, (dx, dy) interleaved.
"""
import logging
import os
import struct
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.ndimage import map_coordinates, uniform_filter

from retivid.utility.retry import retry_call
from retivid.utility.templating import render_command
from retivid.utility.utils import create_directory_path, run_cmd
from retivid.video import constants
from retivid.video.exceptions import (
    BackendFailure, CommandFailed, UnknownFlowBackend, UnwritablePath,
)

log = logging.getLogger(__name__)

FLOW_HEADER = struct.Struct('<4sII')
FRAME_PAIR_HEADER = struct.Struct('<4sIII')


@dataclass
class FlowField:
    """
    Dense displacement field between two frames of a clip.

    Attributes:
        vectors (np.ndarray): H x W x 2 float32 (dx, dy) in pixels
        src_index (int): time index of the previous frame
        dst_index (int): time index of the current frame

    """
    vectors: np.ndarray
    src_index: int = -1
    dst_index: int = 0

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 3 or vectors.shape[2] != 2:
            raise ValueError(f"Flow must be H x W x 2, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("Flow contains non finite vectors")
        self.vectors = vectors

    @property
    def shape(self):
        return self.vectors.shape[:2]


def sample_bilinear(img, vectors):
    """
    Backward bilinear sampling: out(p) = img(p + vectors(p)), coordinates
    outside the image are clamped to the border.

    Args:
        img (np.ndarray): H x W or H x W x C array
        vectors (np.ndarray): H x W x 2 (dx, dy)

    Returns:
        np.ndarray: sampled array, shape and dtype of img

    """
    height, width = img.shape[:2]
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    coords = [rows + vectors[..., 1], cols + vectors[..., 0]]
    if img.ndim == 2:
        return map_coordinates(
            img, coords, order=1, mode='nearest'
        ).astype(img.dtype)
    channels = [
        map_coordinates(img[..., c], coords, order=1, mode='nearest')
        for c in range(img.shape[2])
    ]
    return np.stack(channels, axis=-1).astype(img.dtype)


def encode_flow(vectors):
    vectors = np.ascontiguousarray(vectors, dtype='<f4')
    height, width = vectors.shape[:2]
    return (
        FLOW_HEADER.pack(constants.FLOW_MAGIC, height, width)
        + vectors.tobytes()
    )


def decode_flow(data):
    """
    Parse one ZTFL record

    Args:
        data (bytes): the record

    Returns:
        np.ndarray: H x W x 2 float32 vectors

    Raises:
        BackendFailure: bad magic or length

    """
    if len(data) < FLOW_HEADER.size:
        raise BackendFailure(f"flow record of {len(data)} bytes is truncated")
    magic, height, width = FLOW_HEADER.unpack_from(data)
    if magic != constants.FLOW_MAGIC:
        raise BackendFailure(f"bad flow record magic {magic!r}")
    expected = FLOW_HEADER.size + height * width * 2 * 4
    if len(data) != expected:
        raise BackendFailure(
            f"flow record of {height}x{width} must be {expected} bytes, "
            f"got {len(data)}"
        )
    vectors = np.frombuffer(data, dtype='<f4', offset=FLOW_HEADER.size)
    return vectors.reshape(height, width, 2).astype(np.float32)


def write_flow(path, vectors):
    try:
        with open(path, 'wb') as fd:
            fd.write(encode_flow(vectors))
    except OSError as ex:
        raise UnwritablePath(f"{path}: {ex}")


def read_flow(path):
    with open(path, 'rb') as fd:
        return decode_flow(fd.read())


class FlowBackend:
    """
    Base class of the optical flow estimators. Implementations must be
    deterministic for fixed inputs.
    """
    name = None

    def estimate(self, img_a, img_b):
        """
        Args:
            img_a (np.ndarray): H x W x 3 frame in [0, 1]
            img_b (np.ndarray): H x W x 3 frame in [0, 1]

        Returns:
            np.ndarray: H x W x 2 vectors with img_b(p + f) ~ img_a(p)

        """
        raise NotImplementedError


def _gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img @ np.asarray(constants.LUMA_WEIGHTS)


class PyramidalLucasKanade(FlowBackend):
    """
    Dense coarse-to-fine Lucas-Kanade flow.

    Each level refines the upsampled flow of the coarser level with
    `iterations` Gauss-Newton steps: b is warped by the current flow and
    the 2x2 normal equations of every window x window neighbourhood are
    solved for the increment.

    Args:
        levels (int): pyramid levels, fewer when the frame is too small
        window (int): side of the square aggregation window
        iterations (int): refinement steps per level
        regularization (float): Tikhonov term added to the normal matrix

    """
    name = 'builtin'

    def __init__(self, levels=3, window=5, iterations=3,
                 regularization=1e-6):
        self.levels = max(int(levels), 1)
        self.window = int(window)
        self.iterations = int(iterations)
        self.regularization = regularization

    def _pyramid(self, img):
        pyramid = [img]
        for _ in range(self.levels - 1):
            top = pyramid[-1]
            height, width = top.shape[0] // 2, top.shape[1] // 2
            if min(height, width) < self.window:
                break
            blurred = cv2.GaussianBlur(top, (5, 5), 1)
            pyramid.append(
                cv2.resize(
                    blurred, (width, height), interpolation=cv2.INTER_LINEAR
                )
            )
        return pyramid

    def _refine(self, a, b, flow):
        for _ in range(self.iterations):
            warped = sample_bilinear(b, flow)
            grad_y, grad_x = np.gradient((a + warped) / 2.0)
            diff = warped - a
            a11 = uniform_filter(grad_x * grad_x, self.window)
            a12 = uniform_filter(grad_x * grad_y, self.window)
            a22 = uniform_filter(grad_y * grad_y, self.window)
            b1 = uniform_filter(grad_x * diff, self.window)
            b2 = uniform_filter(grad_y * diff, self.window)
            a11 += self.regularization
            a22 += self.regularization
            det = a11 * a22 - a12 * a12
            du = -(a22 * b1 - a12 * b2) / det
            dv = -(a11 * b2 - a12 * b1) / det
            step = np.stack([du, dv], axis=-1)
            step = np.clip(np.nan_to_num(step), -1.0, 1.0)
            flow = flow + step
        return flow

    def estimate(self, img_a, img_b):
        a, b = _gray(img_a), _gray(img_b)
        if a.shape != b.shape:
            raise BackendFailure(
                f"frame sizes differ: {a.shape} and {b.shape}"
            )
        pyramid_a, pyramid_b = self._pyramid(a), self._pyramid(b)
        flow = np.zeros(pyramid_a[-1].shape + (2,))
        for level in range(len(pyramid_a) - 1, -1, -1):
            level_a, level_b = pyramid_a[level], pyramid_b[level]
            if flow.shape[:2] != level_a.shape:
                height, width = level_a.shape
                scale_x = width / flow.shape[1]
                scale_y = height / flow.shape[0]
                flow = cv2.resize(
                    flow, (width, height), interpolation=cv2.INTER_LINEAR
                )
                flow[..., 0] *= scale_x
                flow[..., 1] *= scale_y
            flow = self._refine(level_a, level_b, flow)
        return flow.astype(np.float32)


def to_rgb24(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    return np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


class ExternalProcessBackend(FlowBackend):
    """
    Adapter of an external flow estimator, typically a pretrained network.

    The rendered command receives on stdin a 16 byte header (magic 'ZTFR',
    u32 H, u32 W, u32 channels) followed by the two RGB24 frames, and must
    print one ZTFL record on stdout.

    Args:
        command (str): jinja2 command template (no variables required)
        tries (int): attempts before giving up
        delay (float): initial delay between attempts in seconds

    """
    name = 'external'

    def __init__(self, command, tries=2, delay=1):
        if not command:
            raise BackendFailure("FLOW.external_command is not configured")
        self.command = render_command(command)
        self.tries = tries
        self.delay = delay

    def estimate(self, img_a, img_b):
        a, b = to_rgb24(img_a), to_rgb24(img_b)
        if a.shape != b.shape:
            raise BackendFailure(
                f"frame sizes differ: {a.shape} and {b.shape}"
            )
        height, width = a.shape[:2]
        payload = (
            FRAME_PAIR_HEADER.pack(
                constants.FRAME_PAIR_MAGIC, height, width, 3
            )
            + a.tobytes() + b.tobytes()
        )
        try:
            out = retry_call(
                run_cmd, CommandFailed, tries=self.tries, delay=self.delay,
                args=(self.command,),
                kwargs={'input_data': payload, 'decode': False},
            )
        except CommandFailed as ex:
            raise BackendFailure(str(ex))
        vectors = decode_flow(out)
        if vectors.shape[:2] != (height, width):
            raise BackendFailure(
                f"backend returned {vectors.shape[:2]} flow for "
                f"{height}x{width} frames"
            )
        return vectors


class FlowCache:
    """
    Directory of precomputed flow fields, one ZTFL file per frame pair,
    named <clip_id>_<t>.ztfl where t is the index of the current frame.
    """

    def __init__(self, path):
        self.path = path

    def file_path(self, clip_id, time_index):
        return os.path.join(
            self.path,
            f"{clip_id}_{time_index:06d}{constants.FLOW_CACHE_SUFFIX}",
        )

    def get(self, clip_id, time_index):
        """
        Returns:
            np.ndarray: cached vectors, None when the pair is not cached

        """
        path = self.file_path(clip_id, time_index)
        if not os.path.isfile(path):
            return None
        log.debug(f"Flow of {clip_id} t={time_index} read from {path}")
        return read_flow(path)

    def put(self, clip_id, time_index, vectors):
        try:
            create_directory_path(self.path)
        except OSError as ex:
            raise UnwritablePath(f"{self.path}: {ex}")
        path = self.file_path(clip_id, time_index)
        write_flow(path, vectors)
        return path


def build_backend(flow_cfg):
    """
    Instantiate the backend named by FLOW.backend

    Args:
        flow_cfg (dict): FLOW config section

    Returns:
        FlowBackend: the backend

    Raises:
        UnknownFlowBackend: FLOW.backend names no known backend

    """
    name = flow_cfg.get('backend', PyramidalLucasKanade.name)
    if name == PyramidalLucasKanade.name:
        return PyramidalLucasKanade(
            levels=flow_cfg.get('pyramid_levels', 3),
            window=flow_cfg.get('window', 5),
            iterations=flow_cfg.get('iterations', 3),
            regularization=flow_cfg.get('regularization', 1e-6),
        )
    if name == ExternalProcessBackend.name:
        return ExternalProcessBackend(
            flow_cfg.get('external_command'),
            tries=flow_cfg.get('external_tries', 2),
            delay=flow_cfg.get('external_delay', 1),
        )
    raise UnknownFlowBackend(
        name, [PyramidalLucasKanade.name, ExternalProcessBackend.name]
    )
