"""
Evaluation of enhanced clips.

Full reference: PSNR and SSIM, raw and after histogram matching (HM).
Temporal: MABD, the absolute difference of mean luma between consecutive
frames, plus its centered moving average.
No reference (underwater): UIQM and UCIQE.
"""
import csv
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.ndimage import correlate1d
from skimage.color import rgb2lab
from skimage.filters import sobel

from retivid.framework import config
from retivid.utility.retry import retry
from retivid.utility.templating import Templating, render_command
from retivid.utility.utils import create_directory_path, run_cmd
from retivid.video import constants, defaults
from retivid.video.exceptions import CommandFailed, MetricInputError
from retivid.video.media import write_png
from retivid.video.parallel import map_ordered

log = logging.getLogger(__name__)


def _pixels(frame):
    return np.asarray(getattr(frame, 'pixels', frame), dtype=np.float64)


def _pair(a, b):
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise MetricInputError(f"Shapes differ: {a.shape} and {b.shape}")
    return a, b


def luma(img):
    return _pixels(img) @ np.asarray(constants.LUMA_WEIGHTS)


def psnr(a, b):
    """
    Peak signal to noise ratio for a peak of 1.0

    Returns:
        float: dB, inf for identical frames

    """
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size=defaults.SSIM_WINDOW, sigma=defaults.SSIM_SIGMA):
    offsets = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def ssim(a, b, window=defaults.SSIM_WINDOW, sigma=defaults.SSIM_SIGMA):
    """
    Single scale SSIM of the luma planes, Gaussian weighted, averaged over
    the positions where the window fits in the frame. Frames smaller than
    the window use the largest odd window that fits.

    Returns:
        float: SSIM in [-1, 1]

    """
    a, b = _pair(a, b)
    y_a, y_b = luma(a), luma(b)
    size = min(window, min(y_a.shape))
    if size % 2 == 0:
        size -= 1
    kernel = gaussian_window(size, sigma)
    pad = size // 2

    def blur(x):
        x = correlate1d(x, kernel, axis=0, mode='reflect')
        x = correlate1d(x, kernel, axis=1, mode='reflect')
        return x[pad:x.shape[0] - pad, pad:x.shape[1] - pad]

    mu_a, mu_b = blur(y_a), blur(y_b)
    var_a = blur(y_a * y_a) - mu_a ** 2
    var_b = blur(y_b * y_b) - mu_b ** 2
    cov = blur(y_a * y_b) - mu_a * mu_b
    c1, c2 = defaults.SSIM_C1, defaults.SSIM_C2
    ssim_map = (
        (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    )
    return float(ssim_map.mean())


def _levels(channel):
    return np.clip(np.round(channel * 255), 0, 255).astype(np.int64)


def _cdf(levels):
    hist = np.bincount(levels.ravel(), minlength=256)
    return np.cumsum(hist) / levels.size


def histogram_match(src, ref):
    """
    Per channel CDF matching of src to ref on the 8-bit grid. Every src
    level is mapped to the smallest ref level whose CDF reaches the CDF of
    the src level, so the output only holds values present in ref.

    Returns:
        np.ndarray: matched float64 H x W x 3 array

    """
    src = _pixels(src)
    ref = _pixels(ref)
    if src.ndim != 3 or ref.ndim != 3 or src.shape[2] != ref.shape[2]:
        raise MetricInputError(
            f"Can not match {src.shape} to {ref.shape}"
        )
    out = np.empty_like(src)
    for c in range(src.shape[2]):
        src_levels = _levels(src[..., c])
        ref_cdf = _cdf(_levels(ref[..., c]))
        mapping = np.searchsorted(ref_cdf, _cdf(src_levels), side='left')
        mapping = np.minimum(mapping, 255)
        out[..., c] = mapping[src_levels] / 255.0
    return out


def moving_average(series, window=defaults.MABD_WINDOW):
    """
    Centered moving average, the window is truncated at both ends
    """
    series = np.asarray(series, dtype=np.float64)
    half = window // 2
    cumsum = np.concatenate([[0.0], np.cumsum(series)])
    index = np.arange(series.size)
    lo = np.maximum(index - half, 0)
    hi = np.minimum(index + half + 1, series.size)
    return (cumsum[hi] - cumsum[lo]) / (hi - lo)


def mabd(clip, window=defaults.MABD_WINDOW):
    """
    Mean absolute brightness difference between consecutive frames

    Args:
        clip: Clip or sequence of H x W x 3 frames
        window (int): moving average window

    Returns:
        tuple: (series of len(clip) - 1 values, smoothed series)

    Raises:
        MetricInputError: fewer than 2 frames

    """
    frames = list(clip)
    if len(frames) < 2:
        raise MetricInputError("MABD needs at least 2 frames")
    means = np.array([luma(frame).mean() for frame in frames])
    series = np.abs(np.diff(means))
    return series, moving_average(series, window)


def trimmed_mean(values, alpha=defaults.UICM_ALPHA):
    """
    Mean of the sorted values with ceil(alpha * K) dropped on the left and
    floor(alpha * K) on the right
    """
    values = np.sort(np.ravel(values))
    count = values.size
    left = int(math.ceil(alpha * count))
    right = int(math.floor(alpha * count))
    return float(values[left:count - right].mean())


def uicm(rgb255):
    """
    Colorfulness from the alpha trimmed statistics of the RG and YB
    opponent planes
    """
    r, g, b = rgb255[..., 0], rgb255[..., 1], rgb255[..., 2]
    rg = (r - g).ravel()
    yb = ((r + g) / 2.0 - b).ravel()
    mu_rg, mu_yb = trimmed_mean(rg), trimmed_mean(yb)
    var_rg = np.mean((rg - mu_rg) ** 2)
    var_yb = np.mean((yb - mu_yb) ** 2)
    return float(
        -0.0268 * np.sqrt(mu_rg ** 2 + mu_yb ** 2)
        + 0.1586 * np.sqrt(var_rg + var_yb)
    )


def _blocks(plane, block):
    height, width = plane.shape
    block = min(block, height, width)
    rows, cols = height // block, width // block
    trimmed = plane[:rows * block, :cols * block]
    return trimmed.reshape(rows, block, cols, block).swapaxes(1, 2).reshape(
        rows * cols, block * block
    )


def eme(plane, block=defaults.UIQM_BLOCK):
    """
    Measure of enhancement: 2 / k * sum(log(max / min)) over the blocks,
    blocks with a zero minimum are skipped
    """
    blocks = _blocks(plane, block)
    high, low = blocks.max(axis=1), blocks.min(axis=1)
    valid = low > 0
    return float(
        2.0 / len(blocks) * np.sum(np.log(high[valid] / low[valid]))
    )


def uism(rgb255, block=defaults.UIQM_BLOCK):
    """
    Sharpness: EME of the Sobel edge maps weighted by the channels
    """
    weights = constants.LUMA_WEIGHTS
    return float(sum(
        weight * eme(sobel(rgb255[..., c]) * rgb255[..., c], block)
        for c, weight in enumerate(weights)
    ))


def uiconm(rgb255, block=defaults.UIQM_BLOCK):
    """
    Contrast: logAMEE of the luma plane
    """
    blocks = _blocks(rgb255 @ np.asarray(constants.LUMA_WEIGHTS), block)
    high, low = blocks.max(axis=1), blocks.min(axis=1)
    top, bottom = high - low, high + low
    valid = (top > 0) & (bottom > 0)
    ratio = top[valid] / bottom[valid]
    return float(-1.0 / len(blocks) * np.sum(ratio * np.log(ratio)))


def uiqm_components(frame):
    """
    Returns:
        tuple: (UICM, UISM, UIConM) on the 0-255 scale

    """
    rgb255 = _pixels(frame) * 255.0
    return uicm(rgb255), uism(rgb255), uiconm(rgb255)


def uiqm(frame):
    c1, c2, c3 = constants.UIQM_COEFFS
    colorfulness, sharpness, contrast = uiqm_components(frame)
    return float(c1 * colorfulness + c2 * sharpness + c3 * contrast)


def uciqe_components(frame):
    """
    Returns:
        tuple: (chroma standard deviation, luminance contrast between the
            1st and 99th percentile, mean saturation) with L in [0, 1] and
            a, b divided by 128

    """
    lab = rgb2lab(_pixels(frame))
    lightness = lab[..., 0] / 100.0
    chroma = np.sqrt((lab[..., 1] / 128.0) ** 2 + (lab[..., 2] / 128.0) ** 2)
    low, high = np.percentile(lightness, defaults.UCIQE_PERCENTILES)
    saturation = np.divide(
        chroma, lightness, out=np.zeros_like(chroma), where=lightness > 0
    )
    return float(chroma.std()), float(high - low), float(saturation.mean())


def uciqe(frame):
    c1, c2, c3 = constants.UCIQE_COEFFS
    sigma_c, contrast, saturation = uciqe_components(frame)
    return float(c1 * sigma_c + c2 * contrast + c3 * saturation)


@retry(CommandFailed, tries=2, delay=1)
def lpips_plugin(pred_path, ref_path, command):
    """
    Run the external LPIPS command on two PNG files

    Args:
        pred_path (str): predicted frame
        ref_path (str): reference frame
        command (str): jinja2 template with {{ pred }} and {{ ref }}

    Returns:
        float: the last number printed by the command

    """
    out = run_cmd(render_command(command, pred=pred_path, ref=ref_path))
    try:
        return float(out.split()[-1])
    except (IndexError, ValueError):
        raise MetricInputError(f"LPIPS command printed {out!r}")


@dataclass
class FrameScores:
    frame: int
    psnr: float = None
    psnr_hm: float = None
    ssim: float = None
    ssim_hm: float = None
    lpips: float = None
    lpips_hm: float = None
    uiqm: float = None
    uciqe: float = None


@dataclass
class MetricReport:
    """
    Scores of one clip. Full reference fields are None without a
    reference, uiqm / uciqe are None outside underwater evaluation.
    """
    rows: List[FrameScores] = field(default_factory=list)
    mabd_series: np.ndarray = None
    mabd_smoothed: np.ndarray = None
    hm_direction: str = constants.HM_REF_TO_PRED
    underwater: bool = False

    def column(self, name):
        values = [getattr(row, name) for row in self.rows]
        if any(value is None for value in values):
            return None
        return values

    def mean(self, name):
        values = self.column(name)
        if not values:
            return None
        return float(np.mean(values))

    @property
    def mabd_mean(self):
        if self.mabd_series is None or not self.mabd_series.size:
            return None
        return float(self.mabd_series.mean())

    @property
    def mabd_smoothed_mean(self):
        if self.mabd_smoothed is None or not self.mabd_smoothed.size:
            return None
        return float(self.mabd_smoothed.mean())

    @property
    def has_reference(self):
        return self.column('psnr') is not None

    @property
    def has_lpips(self):
        return self.column('lpips') is not None

    def columns(self):
        names = ['frame']
        if self.has_reference:
            names += ['psnr', 'psnr_hm', 'ssim', 'ssim_hm']
        if self.has_lpips:
            names += ['lpips', 'lpips_hm']
        if self.underwater:
            names += ['uiqm', 'uciqe']
        return names


def quantize(img):
    """
    Snap values to the 8-bit grid histogram_match outputs on
    """
    return _levels(_pixels(img)) / 255.0


def _hm_pair(pred, ref, direction):
    # both operands on the 8-bit grid
    if direction == constants.HM_REF_TO_PRED:
        return quantize(pred), histogram_match(ref, pred)
    return histogram_match(pred, ref), quantize(ref)


def score_frame(index, pred, ref=None, underwater=False,
                hm_direction=constants.HM_REF_TO_PRED, lpips_command=None,
                scratch_dir=None):
    """
    Scores of one frame pair

    Returns:
        FrameScores: the scores

    """
    row = FrameScores(frame=index)
    if ref is not None:
        pred_hm, ref_hm = _hm_pair(pred, ref, hm_direction)
        row.psnr, row.ssim = psnr(pred, ref), ssim(pred, ref)
        row.psnr_hm, row.ssim_hm = psnr(pred_hm, ref_hm), ssim(pred_hm, ref_hm)
        if lpips_command:
            paths = {}
            for name, img in (('pred', pred), ('ref', ref),
                              ('pred_hm', pred_hm), ('ref_hm', ref_hm)):
                paths[name] = os.path.join(
                    scratch_dir, f"{name}_{index:06d}.png"
                )
                write_png(_pixels(img), paths[name])
            row.lpips = lpips_plugin(paths['pred'], paths['ref'], lpips_command)
            row.lpips_hm = lpips_plugin(
                paths['pred_hm'], paths['ref_hm'], lpips_command
            )
    if underwater:
        row.uiqm, row.uciqe = uiqm(pred), uciqe(pred)
    return row


def evaluate(pred, ref=None, underwater=False, out_dir=None, jobs=None,
             hm_direction=None, mabd_window=None, lpips_command=None):
    """
    Evaluate a clip, optionally against a reference clip.

    Args:
        pred (Clip): enhanced clip
        ref (Clip): reference clip, full reference scores are skipped when
            None
        underwater (bool): add UIQM and UCIQE
        out_dir (str): where to write the report files, nothing is written
            when None
        jobs (int): frames scored concurrently (default METRICS.jobs)
        hm_direction (str): 'ref_to_pred' or 'pred_to_ref' (default
            METRICS.hm_direction)
        mabd_window (int): moving average window (default
            METRICS.mabd_window)
        lpips_command (str): LPIPS plugin template (default
            METRICS.lpips_command)

    Returns:
        MetricReport: the scores

    Raises:
        MetricInputError: clips of different length or size

    """
    metrics_cfg = config.METRICS
    jobs = jobs or metrics_cfg.get('jobs', 1)
    hm_direction = hm_direction or metrics_cfg.get(
        'hm_direction', constants.HM_REF_TO_PRED
    )
    if hm_direction not in constants.HM_DIRECTIONS:
        raise MetricInputError(f"Unknown HM direction {hm_direction}")
    mabd_window = mabd_window or metrics_cfg.get(
        'mabd_window', defaults.MABD_WINDOW
    )
    if lpips_command is None:
        lpips_command = metrics_cfg.get('lpips_command')
    pred_frames = [_pixels(frame) for frame in pred]
    ref_frames = None
    if ref is not None:
        ref_frames = [_pixels(frame) for frame in ref]
        if len(ref_frames) != len(pred_frames):
            raise MetricInputError(
                f"pred has {len(pred_frames)} frames, ref has "
                f"{len(ref_frames)}"
            )
        if ref_frames and ref_frames[0].shape != pred_frames[0].shape:
            raise MetricInputError(
                f"pred frames are {pred_frames[0].shape}, ref frames are "
                f"{ref_frames[0].shape}"
            )

    with tempfile.TemporaryDirectory(prefix='retivid-lpips-') as scratch:
        def score(index):
            return score_frame(
                index, pred_frames[index],
                ref_frames[index] if ref_frames else None, underwater,
                hm_direction, lpips_command if ref_frames else None, scratch,
            )

        try:
            rows = map_ordered(score, range(len(pred_frames)), size=jobs)
        except CommandFailed as ex:
            raise MetricInputError(f"LPIPS plugin failed: {ex}")

    report = MetricReport(
        rows=rows, hm_direction=hm_direction, underwater=underwater
    )
    if len(pred_frames) >= 2:
        report.mabd_series, report.mabd_smoothed = mabd(
            pred_frames, mabd_window
        )
    else:
        report.mabd_series = report.mabd_smoothed = np.zeros(0)
    log.info(
        f"Evaluated {len(rows)} frames: PSNR {report.mean('psnr')}, "
        f"SSIM {report.mean('ssim')}, MABD {report.mabd_mean}"
    )
    if out_dir:
        write_report(report, out_dir)
    return report


def _csv_value(value):
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return value


def write_report(report, out_dir):
    """
    Write frames.csv, mabd.csv and summary.txt

    Args:
        report (MetricReport): scores
        out_dir (str): report directory, created when missing

    Returns:
        dict: file name -> written path

    """
    create_directory_path(out_dir)
    paths = {
        name: os.path.join(out_dir, name) for name in (
            constants.FRAME_REPORT_CSV, constants.MABD_REPORT_CSV,
            constants.SUMMARY_FILE,
        )
    }
    columns = report.columns()
    with open(paths[constants.FRAME_REPORT_CSV], 'w', newline='') as fd:
        writer = csv.writer(fd)
        writer.writerow(columns)
        for row in report.rows:
            writer.writerow([_csv_value(getattr(row, c)) for c in columns])
    with open(paths[constants.MABD_REPORT_CSV], 'w', newline='') as fd:
        writer = csv.writer(fd)
        writer.writerow(['t', 'mabd', 'mabd_smoothed'])
        for t, (value, smoothed) in enumerate(
            zip(report.mabd_series, report.mabd_smoothed), start=1
        ):
            writer.writerow([t, repr(float(value)), repr(float(smoothed))])
    summary = Templating().render_template(
        constants.SUMMARY_TEMPLATE,
        {
            'frames': len(report.rows),
            'has_reference': report.has_reference,
            'has_lpips': report.has_lpips,
            'underwater': report.underwater,
            'hm_direction': report.hm_direction,
            'means': {
                name: report.mean(name) for name in (
                    'psnr', 'psnr_hm', 'ssim', 'ssim_hm', 'lpips',
                    'lpips_hm', 'uiqm', 'uciqe',
                )
            },
            'mabd_mean': report.mabd_mean,
            'mabd_smoothed_mean': report.mabd_smoothed_mean,
        },
    )
    with open(paths[constants.SUMMARY_FILE], 'w') as fd:
        fd.write(summary)
    log.info(f"Report written to {out_dir}")
    return paths
