"""
Frame ingestion and output.

Frames live in memory as float H x W x 3 RGB arrays in [0, 1]. Integer
sources are divided by their max code value, never by the per frame range,
so absolute brightness survives ingestion.
"""
import glob
import json
import logging
import os
from dataclasses import dataclass
from typing import Tuple

import cv2
import numpy as np

from retivid.framework import config
from retivid.utility.templating import render_command
from retivid.utility.utils import create_directory_path, run_cmd
from retivid.video import constants
from retivid.video.exceptions import (
    DegenerateInput, InconsistentDimensions, InvalidFrame, MissingPath,
    UnreadableFrame, UnwritablePath,
)
from retivid.video.parallel import map_ordered

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Frame:
    """
    One RGB frame of a clip.

    Attributes:
        pixels (np.ndarray): H x W x 3 float array, values in [0, 1]. The
            array is exposed read only.
        time_index (int): position of the frame in its clip

    """
    pixels: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if not np.issubdtype(pixels.dtype, np.floating):
            raise InvalidFrame(
                f"Frame pixels must be floating point, got {pixels.dtype}"
            )
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise InvalidFrame(
                f"Frame must be H x W x 3, got shape {pixels.shape}"
            )
        if pixels.shape[0] < 2 or pixels.shape[1] < 2:
            raise InvalidFrame(
                f"Frame must be at least 2 x 2, got {pixels.shape[:2]}"
            )
        if not np.all(np.isfinite(pixels)):
            raise InvalidFrame("Frame contains non finite values")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise InvalidFrame(
                f"Frame values must lie in [0, 1], got "
                f"[{pixels.min()}, {pixels.max()}]"
            )
        if self.time_index < 0:
            raise InvalidFrame(f"Negative time index {self.time_index}")
        view = pixels.view()
        view.flags.writeable = False
        object.__setattr__(self, 'pixels', view)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class Clip:
    """
    Ordered, immutable sequence of frames sharing one resolution. Safe to
    share read only between threads.

    Attributes:
        frames (tuple): Frame objects, time_index consecutive from 0
        fps (float): frames per second, metadata only
        source_id (str): identifier of the source, used to key flow caches

    """
    frames: Tuple[Frame, ...]
    fps: float = 25.0
    source_id: str = 'clip'

    def __post_init__(self):
        frames = tuple(self.frames)
        for rank, frame in enumerate(frames):
            if frame.time_index != rank:
                raise InvalidFrame(
                    f"Frame at position {rank} has time index "
                    f"{frame.time_index}"
                )
            if frame.shape != frames[0].shape:
                raise InconsistentDimensions(0, rank)
        object.__setattr__(self, 'frames', frames)

    @classmethod
    def from_arrays(cls, arrays, fps=25.0, source_id='clip'):
        """
        Build a clip from H x W x 3 arrays, indexed by position

        Args:
            arrays (iterable): float arrays in [0, 1]
            fps (float): frames per second
            source_id (str): clip identifier

        Returns:
            Clip: the clip

        """
        frames = [
            Frame(np.asarray(pixels), index)
            for index, pixels in enumerate(arrays)
        ]
        return cls(frames, fps, source_id)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    @property
    def shape(self):
        return self.frames[0].shape if self.frames else None

    def arrays(self):
        return [frame.pixels for frame in self.frames]


def normalize_codes(codes, name='frame'):
    """
    Map integer code values to [0, 1] by the max code value of their dtype

    Args:
        codes (np.ndarray): uint8 or uint16 array
        name (str): used in error messages

    Returns:
        np.ndarray: float32 array

    Raises:
        UnreadableFrame: for any other dtype

    """
    if codes.dtype == np.uint8:
        max_code = constants.MAX_CODE[8]
    elif codes.dtype == np.uint16:
        max_code = constants.MAX_CODE[16]
    else:
        raise UnreadableFrame(name)
    return codes.astype(np.float32) / np.float32(max_code)


def read_png(path):
    """
    Read one 8 or 16 bit PNG as an RGB float array

    Args:
        path (str): PNG file

    Returns:
        np.ndarray: H x W x 3 float32 array in [0, 1]

    Raises:
        UnreadableFrame: if the file can not be decoded

    """
    name = os.path.basename(path)
    codes = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if codes is None:
        raise UnreadableFrame(name)
    if codes.ndim == 2:
        codes = np.repeat(codes[:, :, None], 3, axis=2)
    elif codes.shape[2] == 4:
        codes = cv2.cvtColor(codes, cv2.COLOR_BGRA2RGB)
    elif codes.shape[2] == 3:
        codes = cv2.cvtColor(codes, cv2.COLOR_BGR2RGB)
    else:
        raise UnreadableFrame(name)
    return normalize_codes(codes, name)


def write_png(pixels, path, bit_depth=8):
    """
    Quantize an RGB float array and write it as PNG

    Args:
        pixels (np.ndarray): H x W x 3 array in [0, 1]
        path (str): destination file
        bit_depth (int): 8 or 16

    Raises:
        UnwritablePath: if the file can not be written

    """
    max_code = constants.MAX_CODE[bit_depth]
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    codes = np.round(np.clip(pixels, 0.0, 1.0) * max_code).astype(dtype)
    try:
        written = cv2.imwrite(
            path, np.ascontiguousarray(codes[:, :, ::-1])
        )
    except cv2.error as ex:
        raise UnwritablePath(f"{path}: {ex}")
    if not written:
        raise UnwritablePath(path)


def probe_video(path, probe_command=None):
    """
    Ask the external probe for the geometry of a video container

    Args:
        path (str): video file
        probe_command (str): jinja2 command template, IO.probe_command by
            default

    Returns:
        tuple: (width, height, fps)

    """
    probe_command = probe_command or config.IO['probe_command']
    out = run_cmd(render_command(probe_command, input=path))
    try:
        stream = json.loads(out)['streams'][0]
        width, height = int(stream['width']), int(stream['height'])
    except (ValueError, KeyError, IndexError) as ex:
        raise UnreadableFrame(f"{path} (probe output: {ex})")
    fps = config.IO['default_fps']
    rate = stream.get('r_frame_rate')
    if rate:
        num, _, den = rate.partition('/')
        if float(den or 1):
            fps = float(num) / float(den or 1)
    return width, height, fps


def decode_video(path, decoder_command=None, probe_command=None):
    """
    Decode a video container by running the external decoder, which writes
    raw RGB24 frames to its standard output.

    Args:
        path (str): video file
        decoder_command (str): jinja2 command template, IO.decoder_command
            by default
        probe_command (str): jinja2 command template, IO.probe_command by
            default

    Returns:
        tuple: (list of H x W x 3 float32 arrays, fps)

    """
    width, height, fps = probe_video(path, probe_command)
    decoder_command = decoder_command or config.IO['decoder_command']
    raw = run_cmd(render_command(decoder_command, input=path), decode=False)
    frame_bytes = width * height * 3
    if not raw or len(raw) % frame_bytes:
        raise UnreadableFrame(
            f"{os.path.basename(path)} ({len(raw)} bytes is not a multiple "
            f"of {width}x{height} RGB24 frames)"
        )
    codes = np.frombuffer(raw, dtype=np.uint8).reshape(-1, height, width, 3)
    log.info(f"Decoded {codes.shape[0]} frames from {path}")
    return [normalize_codes(frame) for frame in codes], fps


def list_frame_files(path):
    """
    PNG frames of a directory in lexicographic order, which defines time

    Args:
        path (str): frame directory

    Returns:
        list: sorted file paths

    """
    return sorted(glob.glob(os.path.join(path, constants.FRAME_GLOB)))


def load_clip(path, kind=None, jobs=None, decoder_command=None,
              probe_command=None):
    """
    Load a clip from a directory of PNG frames or from a video container

    Args:
        path (str): frame directory or video file
        kind (str): 'frame_dir' or 'video_file', guessed from the path when
            not given
        jobs (int): number of frames decoded concurrently (default
            IO.jobs)
        decoder_command (str): decoder template for video files
        probe_command (str): probe template for video files

    Returns:
        Clip: frames normalized to [0, 1]

    Raises:
        MissingPath: path does not exist or holds no frames
        UnreadableFrame: a frame can not be decoded
        InconsistentDimensions: frames of different sizes

    """
    if not os.path.exists(path):
        raise MissingPath(path)
    if kind is None:
        kind = (
            constants.KIND_FRAME_DIR if os.path.isdir(path)
            else constants.KIND_VIDEO_FILE
        )
    source_id = os.path.splitext(os.path.basename(os.path.normpath(path)))[0]
    if kind == constants.KIND_FRAME_DIR:
        files = list_frame_files(path)
        if not files:
            raise MissingPath(path, reason="contains no PNG frames")
        jobs = jobs or config.IO['jobs']
        arrays = map_ordered(read_png, files, size=jobs)
        for index, pixels in enumerate(arrays):
            if pixels.shape != arrays[0].shape:
                raise InconsistentDimensions(
                    os.path.basename(files[0]),
                    os.path.basename(files[index]),
                )
        fps = config.IO['default_fps']
    elif kind == constants.KIND_VIDEO_FILE:
        arrays, fps = decode_video(path, decoder_command, probe_command)
    else:
        raise ValueError(f"Unknown clip kind {kind}")
    log.info(
        f"Loaded clip {source_id}: {len(arrays)} frames of "
        f"{arrays[0].shape[1]}x{arrays[0].shape[0]}"
    )
    return Clip.from_arrays(arrays, fps=fps, source_id=source_id)


def save_clip(clip, path, bit_depth=8):
    """
    Write the frames of a clip as zero padded numbered PNGs

    Args:
        clip (Clip): clip to write
        path (str): output directory, created when missing
        bit_depth (int): 8 or 16

    Returns:
        list: written file paths

    Raises:
        DegenerateInput: empty clip
        UnwritablePath: the directory or a frame can not be written

    """
    if not len(clip):
        raise DegenerateInput("Cannot save an empty clip")
    if bit_depth not in constants.MAX_CODE:
        raise ValueError(f"Unsupported bit depth {bit_depth}")
    try:
        create_directory_path(path)
    except OSError as ex:
        raise UnwritablePath(f"{path}: {ex}")
    written = []
    for frame in clip:
        file_path = os.path.join(
            path, constants.FRAME_NAME_TEMPLATE.format(index=frame.time_index)
        )
        write_png(frame.pixels, file_path, bit_depth)
        written.append(file_path)
    log.info(f"Saved {len(written)} frames ({bit_depth} bit) to {path}")
    return written
