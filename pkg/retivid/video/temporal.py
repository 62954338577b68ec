"""
Temporal feedback.

The previous frame's refined (R, S) is warped onto the current frame and
fed to IE and RD. The flow is estimated between the previous enhanced
frame R_RD(t-1) and the histogram equalized denoised current frame at
1/flow_scale resolution, then upsampled. The backend is called as
estimate(current, previous), which gives current -> previous vectors, and
the warp samples the previous frame at p + flow(p). This differs in
argument order from a forward (t-1 -> t) flow, which would need splatting.
"""
import logging
from dataclasses import dataclass

import cv2
import numpy as np
import torch

from retivid.video import defaults
from retivid.video.exceptions import BackendFailure, SequenceError
from retivid.video.flow import FlowCache, FlowField, sample_bilinear
from retivid.video.parallel import map_ordered
from retivid.video.retinex import tensor_to_array

log = logging.getLogger(__name__)


@dataclass
class TemporalState:
    """
    Feedback of one frame.

    Attributes:
        R_warped (np.ndarray): H x W x 3 previous reflectance on the
            current grid
        S_warped (np.ndarray): H x W x 3 previous illumination on the
            current grid
        valid (bool): False for the zero state
        time_index (int): frame the state was built for

    """
    R_warped: np.ndarray
    S_warped: np.ndarray
    valid: bool = False
    time_index: int = 0

    @classmethod
    def zero(cls, shape, time_index=0):
        height, width = shape[:2]
        zeros = np.zeros((height, width, 3), dtype=np.float32)
        return cls(zeros, zeros.copy(), False, time_index)


def _array(img):
    img = getattr(img, 'pixels', img)
    if isinstance(img, torch.Tensor):
        return tensor_to_array(img)
    return np.asarray(img)


def histogram_equalize(img, bins=defaults.HISTOGRAM_BINS):
    """
    Per channel histogram equalization on a 256 level grid. Every value is
    mapped to the CDF of its level, so the mapping is monotone and the
    output lies in (0, 1]. Channels holding a single value are returned
    unchanged.

    Args:
        img: H x W x C (or H x W) array or Frame, values in [0, 1]
        bins (int): number of levels

    Returns:
        np.ndarray: equalized float64 array, shape of img

    """
    img = np.asarray(_array(img), dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        channel = img[..., c]
        if channel.min() == channel.max():
            out[..., c] = channel
            continue
        levels = np.clip(
            np.round(channel * (bins - 1)), 0, bins - 1
        ).astype(np.int64)
        hist = np.bincount(levels.ravel(), minlength=bins)
        cdf = np.cumsum(hist) / levels.size
        out[..., c] = cdf[levels]
    return out[..., 0] if squeeze else out


def warp(img, flow):
    """
    Backward warp: out(p) = bilinear sample of img at p + flow(p), border
    clamped.

    Args:
        img (np.ndarray): H x W x C array
        flow: FlowField or H x W x 2 array of current -> previous vectors

    Returns:
        np.ndarray: warped array, shape and dtype of img

    """
    img = _array(img)
    vectors = getattr(flow, 'vectors', flow)
    if vectors.shape[:2] != img.shape[:2]:
        raise ValueError(
            f"Flow of {vectors.shape[:2]} can not warp an image of "
            f"{img.shape[:2]}"
        )
    if not np.any(vectors):
        return np.array(img, copy=True)
    return sample_bilinear(img, vectors)


def _resize(img, width, height):
    return cv2.resize(
        np.ascontiguousarray(img, dtype=np.float32), (width, height),
        interpolation=cv2.INTER_LINEAR,
    )


def estimate_flow(prev_enhanced, cur_equalized, backend, scale=3,
                  src_index=-1, dst_index=0):
    """
    Flow between the previous enhanced frame and the equalized current
    frame, estimated at 1/scale resolution.

    Both frames are bilinearly downsampled by `scale`, the backend is
    called as estimate(current, previous), and the vectors are upsampled
    bilinearly and multiplied by the size ratio.

    Args:
        prev_enhanced: R_RD of frame t-1, H x W x 3
        cur_equalized: equalized denoised frame t, H x W x 3
        backend (FlowBackend): estimator
        scale (int): downsample factor
        src_index (int): t-1
        dst_index (int): t

    Returns:
        FlowField: H x W x 2 current -> previous vectors

    Raises:
        BackendFailure: backend error or non finite flow

    """
    prev, cur = _array(prev_enhanced), _array(cur_equalized)
    if prev.shape != cur.shape:
        raise BackendFailure(
            f"frame sizes differ: {prev.shape} and {cur.shape}"
        )
    height, width = cur.shape[:2]
    small_w = min(width, max(2, int(round(width / scale))))
    small_h = min(height, max(2, int(round(height / scale))))
    try:
        vectors = backend.estimate(
            _resize(cur, small_w, small_h), _resize(prev, small_w, small_h)
        )
    except BackendFailure:
        raise
    except (ValueError, IndexError, cv2.error, np.linalg.LinAlgError) as ex:
        raise BackendFailure(f"{type(ex).__name__}: {ex}")
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.shape != (small_h, small_w, 2):
        raise BackendFailure(
            f"backend returned {vectors.shape} for {small_h}x{small_w} frames"
        )
    if not np.all(np.isfinite(vectors)):
        raise BackendFailure("backend returned non finite vectors")
    log.debug(f"Flow {src_index}->{dst_index} estimated at {small_w}x{small_h}")
    return upsample_flow(vectors, width, height, src_index, dst_index)


def upsample_flow(vectors, width, height, src_index=-1, dst_index=0):
    """
    Bilinear upsampling of a flow field, vectors scaled by the size ratio
    """
    small_h, small_w = vectors.shape[:2]
    full = _resize(vectors, width, height)
    full[..., 0] *= width / small_w
    full[..., 1] *= height / small_h
    return FlowField(full, src_index, dst_index)


def advance_state(prev_pair, prev_frame_out, cur_input_denoised, backend,
                  time_index=None, scale=3, cached_flow=None):
    """
    Build the feedback of the current frame.

    Args:
        prev_pair: RetinexPair (R_RD, S_RD) of frame t-1, None at t = 0
        prev_frame_out: enhanced frame t-1
        cur_input_denoised: LD output of frame t
        backend (FlowBackend): flow estimator
        time_index (int): t
        scale (int): flow downsample factor
        cached_flow (np.ndarray): precomputed full resolution vectors, the
            backend is not called when given

    Returns:
        TemporalState: warped (R, S), or the zero state at t = 0 and when
            the backend fails

    """
    cur = _array(cur_input_denoised)
    if time_index is None:
        time_index = getattr(cur_input_denoised, 'time_index', 0)
    if prev_pair is None:
        return TemporalState.zero(cur.shape, time_index)
    try:
        if cached_flow is not None:
            flow = FlowField(cached_flow, time_index - 1, time_index)
        else:
            flow = estimate_flow(
                prev_frame_out, histogram_equalize(cur), backend, scale,
                time_index - 1, time_index,
            )
        R_warped = warp(_array(prev_pair.R), flow)
        S_warped = warp(_array(prev_pair.S), flow)
    except (BackendFailure, ValueError) as ex:
        log.warning(
            f"Temporal feedback of frame {time_index} falls back to zeros: "
            f"{ex}"
        )
        return TemporalState.zero(cur.shape, time_index)
    return TemporalState(
        R_warped.astype(np.float32), S_warped.astype(np.float32), True,
        time_index,
    )


class TemporalFeedback:
    """
    Feedback state machine of one pass over a clip.

    Frames must be processed in time order: state_for(t) is only accepted
    after complete(t - 1), and every pass starts from the zero state.

    Args:
        backend (FlowBackend): flow estimator
        scale (int): flow downsample factor
        enabled (bool): zero feedback for every frame when False
        cache (FlowCache): optional precomputed flows
        clip_id (str): key of the clip in the cache

    """

    def __init__(self, backend, scale=3, enabled=True, cache=None,
                 clip_id='clip'):
        self.backend = backend
        self.scale = scale
        self.enabled = enabled
        self.cache = cache
        self.clip_id = clip_id
        self.reset()

    def reset(self):
        self._next_index = 0
        self._pending = None
        self._prev_pair = None
        self._prev_out = None

    def state_for(self, time_index, cur_input_denoised):
        """
        Feedback of frame time_index

        Raises:
            SequenceError: out of order call

        """
        if self._pending is not None:
            raise SequenceError(
                f"Frame {self._pending} was not completed before frame "
                f"{time_index}"
            )
        if time_index != self._next_index:
            raise SequenceError(
                f"Expected frame {self._next_index}, got {time_index}"
            )
        self._pending = time_index
        cur = _array(cur_input_denoised)
        if not self.enabled or self._prev_pair is None:
            return TemporalState.zero(cur.shape, time_index)
        cached = None
        if self.cache is not None:
            cached = self.cache.get(self.clip_id, time_index)
        return advance_state(
            self._prev_pair, self._prev_out, cur, self.backend, time_index,
            self.scale, cached,
        )

    def complete(self, time_index, pair, frame_out):
        """
        Record the outputs of frame time_index for the next frame

        Args:
            time_index (int): frame just enhanced
            pair: RetinexPair (R_RD, S_RD)
            frame_out: enhanced frame R_RD

        """
        if time_index != self._pending:
            raise SequenceError(
                f"Frame {time_index} completed while frame {self._pending} "
                f"is pending"
            )
        self._pending = None
        self._next_index = time_index + 1
        if self.enabled:
            self._prev_pair = type(pair)(_array(pair.R), _array(pair.S))
            self._prev_out = _array(frame_out)


def build_flow_cache(clip, backend, path, scale=3, jobs=1):
    """
    Precompute the flow of every consecutive frame pair of a clip.

    The enhanced frames are unknown before training, so the flow is
    estimated between the equalized input frames t-1 and t.

    Args:
        clip (Clip): input clip
        backend (FlowBackend): estimator
        path (str): cache directory
        scale (int): flow downsample factor
        jobs (int): frame pairs estimated concurrently

    Returns:
        list: written files

    """
    cache = FlowCache(path)
    equalized = map_ordered(histogram_equalize, clip.arrays(), size=jobs)

    def pair_flow(time_index):
        return estimate_flow(
            equalized[time_index - 1], equalized[time_index], backend,
            scale, time_index - 1, time_index,
        )

    indices = list(range(1, len(clip)))
    flows = map_ordered(pair_flow, indices, size=jobs)
    written = [
        cache.put(clip.source_id, flow.dst_index, flow.vectors)
        for flow in flows
    ]
    log.info(f"Cached {len(written)} flow fields of {clip.source_id} in {path}")
    return written
