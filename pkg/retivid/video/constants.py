"""
Constants module.

This module contains any values that are widely used across the framework,
utilities, or tests that will predominantly remain unchanged.

In the event values here have to be changed it should be under careful review
and with consideration of the entire project.

"""
import os

# Directories
TOP_DIR = os.path.dirname(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
)
TEMPLATE_DIR = os.path.join(TOP_DIR, "retivid", "templates")
SUMMARY_TEMPLATE = "reporting/summary.txt.j2"

# Loss modes
MODE_STANDARD = 'standard'
MODE_UNDERWATER = 'underwater'
MODES = (MODE_STANDARD, MODE_UNDERWATER)

# Clip kinds
KIND_FRAME_DIR = 'frame_dir'
KIND_VIDEO_FILE = 'video_file'

# Subnetworks
LD_NET = 'LD'
IE_NET = 'IE'
RD_NET = 'RD'

# Loss terms, in summation order
LOSS_NAMES = (
    'res1', 'cons1', 'over', 'pix', 'smooth', 'res2', 'cons2', 'ill',
    'inter', 'var', 'color',
)

# Rec.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Binary formats
CHECKPOINT_MAGIC = b'ZTIG'
CHECKPOINT_VERSION = 1
FLOW_MAGIC = b'ZTFL'
FRAME_PAIR_MAGIC = b'ZTFR'
FLOW_CACHE_SUFFIX = '.ztfl'

# Frame files
FRAME_GLOB = '*.png'
FRAME_NAME_TEMPLATE = 'frame_{index:06d}.png'
MAX_CODE = {8: 255, 16: 65535}

# HM directions
HM_REF_TO_PRED = 'ref_to_pred'
HM_PRED_TO_REF = 'pred_to_ref'
HM_DIRECTIONS = (HM_REF_TO_PRED, HM_PRED_TO_REF)

# Underwater metric coefficients of the published formulations
UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)

# Report files
RUN_MANIFEST = 'run-manifest.yaml'
FRAME_REPORT_CSV = 'frames.csv'
MABD_REPORT_CSV = 'mabd.csv'
SUMMARY_FILE = 'summary.txt'
