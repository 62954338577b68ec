import math

import pytest
from jinja2.exceptions import UndefinedError

from retivid.utility.templating import Templating, format_float, render_command
from retivid.video import constants


class TestRenderCommand:
    def test_render(self):
        rendered = render_command(
            "ffmpeg -i {{ input }} -f rawvideo -", input='/data/clip.mp4'
        )
        assert rendered == "ffmpeg -i /data/clip.mp4 -f rawvideo -"

    def test_missing_variable(self):
        with pytest.raises(UndefinedError):
            render_command("lpips {{ pred }} {{ ref }}", pred='a.png')


class TestFormatFloat:
    @pytest.mark.parametrize('value, expected', [
        (None, '-'),
        (math.inf, 'inf'),
        (1.0, '1.0000'),
        (20.123456, '20.1235'),
    ])
    def test_format(self, value, expected):
        assert format_float(value) == expected

    def test_digits(self):
        assert format_float(0.5, 2) == '0.50'


class TestSummaryTemplate:
    def render(self, **overrides):
        data = {
            'frames': 3,
            'has_reference': True,
            'has_lpips': False,
            'underwater': False,
            'hm_direction': constants.HM_REF_TO_PRED,
            'means': {
                'psnr': math.inf, 'psnr_hm': math.inf, 'ssim': 1.0,
                'ssim_hm': 1.0, 'lpips': None, 'lpips_hm': None,
                'uiqm': None, 'uciqe': None,
            },
            'mabd_mean': 0.0,
            'mabd_smoothed_mean': 0.0,
        }
        data.update(overrides)
        return Templating().render_template(constants.SUMMARY_TEMPLATE, data)

    def test_reference_columns(self):
        summary = self.render()
        assert 'frames: 3' in summary
        assert 'ref_to_pred' in summary
        assert '1.0000' in summary
        assert 'inf' in summary
        assert 'LPIPS' not in summary
        assert 'UIQM' not in summary

    def test_no_reference(self):
        summary = self.render(has_reference=False)
        assert 'full reference metrics skipped' in summary
        assert 'PSNR' not in summary

    def test_underwater(self):
        means = {
            'psnr': None, 'psnr_hm': None, 'ssim': None, 'ssim_hm': None,
            'lpips': None, 'lpips_hm': None, 'uiqm': 1.5, 'uciqe': 0.25,
        }
        summary = self.render(
            has_reference=False, underwater=True, means=means
        )
        assert 'UIQM mean:  1.5000' in summary
        assert 'UCIQE mean: 0.2500' in summary
