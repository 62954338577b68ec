"""
Defaults module. All the defaults used by retivid which are not part of the
layered config should reside in this module.
PYTEST_DONT_REWRITE - avoid pytest to rewrite, keep this msg here please!
"""
from retivid.video import constants

# target_brightness when TRAIN.target_brightness is null
TARGET_BRIGHTNESS = {
    constants.MODE_STANDARD: 0.5,
    constants.MODE_UNDERWATER: 0.3,
}
# reference brightness of the pixel-wise adjustment scaling factor
PIX_REFERENCE = 0.7
# share of the warped previous reflectance in R_RD when MODEL.feedback_weight
# is not set
FEEDBACK_WEIGHT = 0.6

S_MIN = 1e-3
Y_MIN = 1e-3
COLOR_NORM_EPS = 1e-6
VAR_WINDOW = 5

HISTOGRAM_BINS = 256

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

MABD_WINDOW = 15

UICM_ALPHA = 0.1
UIQM_BLOCK = 8
UCIQE_PERCENTILES = (1, 99)
