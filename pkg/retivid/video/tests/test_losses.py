import math

import pytest
import torch
from munch import Munch
from torch.autograd import gradcheck

from retivid.framework import config
from retivid.video import constants, losses
from retivid.video.networks import RetinexNets
from retivid.video.retinex import enhance_frame, pair_downsample


def checkerboard(height=4, width=4, channels=3):
    rows = torch.arange(height).view(-1, 1)
    cols = torch.arange(width).view(1, -1)
    board = ((rows + cols) % 2).to(torch.float64)
    return board.expand(1, channels, height, width).clone()


def random_input(seed, shape=(1, 3, 8, 8)):
    generator = torch.Generator().manual_seed(seed)
    tensor = torch.rand(shape, generator=generator, dtype=torch.float64)
    return (0.05 + 0.9 * tensor).requires_grad_()


def scaled_input(seed, scale, shape=(1, 3, 8, 8)):
    return (random_input(seed, shape) * scale).detach().requires_grad_()


def smooth_input(seed):
    # strictly monotone rows and columns, the absolute differences stay
    # away from their kink
    rows = torch.arange(8, dtype=torch.float64).view(-1, 1) * 0.1
    cols = torch.arange(8, dtype=torch.float64).view(1, -1) * 0.03
    jitter = random_input(seed).detach() * 0.001
    return (rows + cols + jitter).requires_grad_()


def gradient_matches(func, *inputs):
    return gradcheck(func, inputs, eps=1e-4, atol=1e-6, rtol=1e-3)


def coefficients(level, mode=constants.MODE_STANDARD, target=None):
    I_LD = torch.full((1, 3, 4, 4), level, dtype=torch.float64)
    return losses.compute_coefficients(I_LD, mode, target)


@pytest.fixture
def nets():
    torch.manual_seed(0)
    return RetinexNets.from_config(config.get_defaults()['MODEL'])


class TestCoefficients:
    def test_gray(self):
        coeffs = coefficients(0.5)
        assert coeffs.alpha.item() == pytest.approx(1.0)
        assert coeffs.beta.item() == pytest.approx(1 / 0.7, rel=1e-4)

    def test_quarter(self):
        coeffs = coefficients(0.25)
        assert coeffs.Y_L.item() == pytest.approx(0.25)
        assert coeffs.alpha.item() == pytest.approx(2.0)
        assert coeffs.beta.item() == pytest.approx(0.5 * 0.7 ** -2)

    def test_underwater_channels(self):
        I_LD = torch.ones(1, 3, 4, 4, dtype=torch.float64)
        I_LD[:, 0] *= 0.1
        I_LD[:, 1] *= 0.3
        I_LD[:, 2] *= 0.6
        coeffs = losses.compute_coefficients(I_LD, constants.MODE_UNDERWATER)
        assert coeffs.alpha.tolist() == pytest.approx([3.0, 1.0, 0.5])

    def test_black_is_floored(self):
        coeffs = coefficients(0.0)
        assert coeffs.Y_L.item() == pytest.approx(1e-3)
        assert math.isfinite(coeffs.alpha.item())

    def test_detached(self):
        I_LD = random_input(0)
        assert not losses.compute_coefficients(I_LD).alpha.requires_grad

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            coefficients(0.5, mode='foggy')

    def test_underwater_targets_fit_illumination(self):
        I_LD = torch.ones(1, 3, 4, 4, dtype=torch.float64)
        I_LD[:, 0] *= 0.1
        I_LD[:, 1] *= 0.3
        I_LD[:, 2] *= 0.6
        coeffs = losses.compute_coefficients(I_LD, constants.MODE_UNDERWATER)
        assert coeffs.scale.item() == pytest.approx(2.0)
        targets = 1.0 / (coeffs.alpha * coeffs.scale)
        assert targets.tolist() == pytest.approx([1 / 6, 0.5, 1.0])
        assert losses.loss_over(
            targets.view(1, 3, 1, 1).expand(1, 3, 4, 4), coeffs
        ).item() == pytest.approx(0.0, abs=1e-12)
        # pixel-wise targets keep the channel ratios of the means
        pix = losses.pix_target(I_LD, coeffs).mean(dim=(0, 2, 3))
        assert float(pix.max()) <= 1.0
        ratios = (pix / coeffs.Y_L).tolist()
        assert ratios == pytest.approx([ratios[0]] * 3)

    def test_near_black_is_finite(self):
        I_LD = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        I_LD[..., 0, 0] = 0.2
        coeffs = losses.compute_coefficients(I_LD)
        assert coeffs.alpha.item() == pytest.approx(160.0)
        assert math.isfinite(coeffs.beta.item())
        target = losses.pix_target(I_LD, coeffs)
        assert float(target.min()) >= coeffs.s_min
        assert float(target.max()) <= 1.0


class TestDenoiseLosses:
    def test_res1_constant(self):
        I = torch.full((1, 3, 4, 4), 0.4, dtype=torch.float64)
        g1, g2 = pair_downsample(I)
        bundle = Munch(
            g1=g1, g2=g2, noise_g1=torch.zeros_like(g1),
            noise_g2=torch.zeros_like(g2),
        )
        assert losses.loss_res1(bundle).item() == 0.0

    def test_res1_checkerboard(self):
        g1, g2 = pair_downsample(checkerboard())
        assert g1.unique().tolist() == [1.0]
        assert g2.unique().tolist() == [0.0]
        bundle = Munch(
            g1=g1, g2=g2, noise_g1=torch.zeros_like(g1),
            noise_g2=torch.zeros_like(g2),
        )
        assert losses.loss_res1(bundle).item() == pytest.approx(2.0)

    @pytest.mark.parametrize('noise_level', [0.0, 0.1])
    def test_cons1_constant_noise(self, noise_level):
        I = random_input(1).detach()
        g1, g2 = pair_downsample(I)
        bundle = Munch(
            I=I, noise=torch.full_like(I, noise_level), g1=g1, g2=g2,
            noise_g1=torch.full_like(g1, noise_level),
            noise_g2=torch.full_like(g2, noise_level),
        )
        assert losses.loss_cons1(bundle).item() == pytest.approx(0.0, abs=1e-12)

    def test_res1_gradient(self):
        def func(I, noise_g1, noise_g2):
            g1, g2 = pair_downsample(I)
            return losses.loss_res1(
                Munch(g1=g1, g2=g2, noise_g1=noise_g1, noise_g2=noise_g2)
            )

        shape = (1, 3, 4, 4)
        assert gradient_matches(
            func, random_input(2), random_input(3, shape),
            random_input(4, shape),
        )

    def test_cons1_gradient(self):
        def func(I, noise, noise_g1, noise_g2):
            g1, g2 = pair_downsample(I)
            return losses.loss_cons1(Munch(
                I=I, noise=noise, g1=g1, g2=g2, noise_g1=noise_g1,
                noise_g2=noise_g2,
            ))

        shape = (1, 3, 4, 4)
        assert gradient_matches(
            func, random_input(5), scaled_input(6, 0.1),
            random_input(7, shape), random_input(8, shape),
        )


class TestBrightnessLosses:
    def test_over_fixed_point(self):
        coeffs = coefficients(0.25)
        S_IE = torch.full((1, 3, 4, 4), 0.5, dtype=torch.float64)
        assert losses.loss_over(S_IE, coeffs).item() == pytest.approx(0.0)

    def test_over_zero_illumination(self):
        coeffs = coefficients(0.25)
        S_IE = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
        assert losses.loss_over(S_IE, coeffs).item() == pytest.approx(0.25)

    def test_pix_target(self):
        coeffs = coefficients(0.25)
        I_LD = torch.full((1, 3, 4, 4), 0.25, dtype=torch.float64)
        target = 0.5 * 0.7 ** -2 * 0.5 ** 2
        assert target == pytest.approx(0.2551, abs=1e-4)
        at_target = torch.full_like(I_LD, target)
        assert losses.loss_pix(at_target, I_LD, coeffs).item() == (
            pytest.approx(0.0, abs=1e-12)
        )
        zeros = torch.zeros_like(I_LD)
        assert losses.loss_pix(zeros, I_LD, coeffs).item() == (
            pytest.approx(target ** 2)
        )

    def test_gray_world_underwater(self):
        # equal channel means: underwater sums what standard averages
        I_LD = torch.full((1, 3, 6, 6), 0.2, dtype=torch.float64)
        underwater = losses.compute_coefficients(
            I_LD, constants.MODE_UNDERWATER
        )
        standard = losses.compute_coefficients(
            I_LD, constants.MODE_STANDARD, target_brightness=0.3
        )
        assert underwater.alpha.tolist() == pytest.approx([1.5] * 3)
        S_IE = random_input(9, (1, 3, 6, 6)).detach()
        assert losses.loss_over(S_IE, underwater).item() == pytest.approx(
            3 * losses.loss_over(S_IE, standard).item()
        )
        assert losses.loss_pix(S_IE, I_LD, underwater).item() == (
            pytest.approx(3 * losses.loss_pix(S_IE, I_LD, standard).item())
        )

    def test_pix_near_black_frame(self):
        I_LD = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        I_LD[..., 0, 0] = 0.2
        coeffs = losses.compute_coefficients(I_LD)
        S_IE = torch.full_like(I_LD, 0.5)
        assert math.isfinite(losses.loss_pix(S_IE, I_LD, coeffs).item())

    def test_pix_target_bounded(self):
        coeffs = coefficients(0.05)
        I_LD = torch.linspace(0, 1, 48, dtype=torch.float64).view(1, 3, 4, 4)
        target = losses.pix_target(I_LD, coeffs)
        assert float(target.min()) == pytest.approx(coeffs.s_min)
        assert float(target.max()) == 1.0

    @pytest.mark.parametrize('mode', constants.MODES)
    def test_over_pix_gradient(self, mode):
        I_LD = random_input(10).detach()
        coeffs = losses.compute_coefficients(I_LD, mode)
        assert gradient_matches(
            lambda S: losses.loss_over(S, coeffs), random_input(11)
        )
        assert gradient_matches(
            lambda S: losses.loss_pix(S, I_LD, coeffs), random_input(12)
        )


class TestSmoothnessLosses:
    def test_smooth_constant(self):
        S = torch.full((1, 3, 5, 5), 0.3, dtype=torch.float64)
        assert losses.loss_smooth(S).item() == 0.0

    def test_smooth_ramp(self):
        ramp = torch.arange(10, dtype=torch.float64) / 10
        S = ramp.expand(1, 3, 4, 10)
        assert losses.loss_smooth(S).item() == pytest.approx(0.1)

    def test_smooth_gradient(self):
        assert gradient_matches(losses.loss_smooth, smooth_input(13))

    def test_ill(self):
        S_IE = random_input(14).detach()
        assert losses.loss_ill(S_IE, S_IE).item() == 0.0
        assert losses.loss_ill(S_IE + 0.1, S_IE).item() == pytest.approx(0.01)
        assert losses.loss_ill(S_IE, S_IE + 0.1).item() == pytest.approx(
            losses.loss_ill(S_IE + 0.1, S_IE).item()
        )

    def test_inter(self):
        constant = torch.full((1, 3, 4, 4), 0.7, dtype=torch.float64)
        assert losses.loss_inter(constant).item() == pytest.approx(0.0)
        assert losses.loss_inter(checkerboard()).item() == pytest.approx(1.0)

    def test_ill_gradient(self):
        assert gradient_matches(
            losses.loss_ill, random_input(26), random_input(27)
        )

    def test_inter_gradient(self):
        # halves differ by ~0.4 everywhere, away from the kink of |.|
        jitter = random_input(28).detach() * 0.05
        R_RD = (0.3 + 0.4 * checkerboard(8, 8) + jitter).requires_grad_()
        assert gradient_matches(losses.loss_inter, R_RD)

    def test_var(self):
        dark = torch.full((1, 3, 6, 6), 0.2, dtype=torch.float64)
        bright = torch.full((1, 3, 6, 6), 0.8, dtype=torch.float64)
        assert losses.loss_var(dark, bright).item() == pytest.approx(0.0)
        R = random_input(15).detach()
        assert losses.loss_var(R, R).item() == 0.0

    def test_local_variance_brute_force(self):
        x = random_input(16, (1, 1, 7, 7)).detach()
        variance = losses.local_variance(x, window=5)
        padded = torch.nn.functional.pad(x, (2, 2, 2, 2), mode='replicate')
        for i in range(7):
            for j in range(7):
                patch = padded[0, 0, i:i + 5, j:j + 5]
                expected = ((patch - patch.mean()) ** 2).mean()
                assert variance[0, 0, i, j].item() == pytest.approx(
                    expected.item(), abs=1e-12
                )

    def test_var_gradient(self):
        R_IE = random_input(17).detach()
        assert gradient_matches(
            lambda R: losses.loss_var(R, R_IE), random_input(18)
        )

    def test_color(self):
        R_IE = random_input(19).detach()
        assert losses.loss_color(R_IE, R_IE).item() == pytest.approx(
            0.0, abs=1e-7
        )
        assert losses.loss_color(2 * R_IE, R_IE).item() == pytest.approx(
            0.0, abs=1e-7
        )

    def test_color_orthogonal(self):
        red = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
        red[:, 0] = 1.0
        green = torch.zeros_like(red)
        green[:, 1] = 1.0
        assert losses.loss_color(green, red).item() == pytest.approx(1.0)

    def test_color_black(self):
        black = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
        assert losses.loss_color(black, black).item() == 0.0

    def test_color_gradient(self):
        R_IE = random_input(20).detach()
        assert gradient_matches(
            lambda R: losses.loss_color(R, R_IE), random_input(21)
        )


class TestRefineLosses:
    def test_res2_constant_identity(self):
        pair = torch.full((1, 6, 4, 4), 0.3, dtype=torch.float64)
        g1, g2 = pair_downsample(pair)
        bundle = Munch(
            rd_in_g1=g1, rd_in_g2=g2, rd_out_of_g1=g1, rd_out_of_g2=g2,
            rd_out=pair,
        )
        assert losses.loss_res2(bundle).item() == 0.0
        assert losses.loss_cons2(bundle).item() == 0.0

    def test_cons2_identity_at_init(self, nets):
        I = torch.rand(1, 3, 8, 8)
        _, _, bundle = enhance_frame(I, None, nets)
        assert losses.loss_cons2(bundle).item() == pytest.approx(
            0.0, abs=1e-12
        )

    def test_res2_cons2_gradient(self):
        def res2(rd_in, out_g1, out_g2):
            g1, g2 = pair_downsample(rd_in)
            return losses.loss_res2(Munch(
                rd_in_g1=g1, rd_in_g2=g2, rd_out_of_g1=out_g1,
                rd_out_of_g2=out_g2,
            ))

        def cons2(rd_out, out_g1, out_g2):
            return losses.loss_cons2(Munch(
                rd_out=rd_out, rd_out_of_g1=out_g1, rd_out_of_g2=out_g2,
            ))

        half = (1, 6, 4, 4)
        full = (1, 6, 8, 8)
        for func in (res2, cons2):
            assert gradient_matches(
                func, random_input(22, full), random_input(23, half),
                random_input(24, half),
            )


class TestTotalLoss:
    @pytest.fixture
    def bundle(self, nets):
        I = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(3))
        return enhance_frame(I, None, nets)[2]

    def test_eleven_terms(self, bundle):
        coeffs = losses.compute_coefficients(bundle.I_LP)
        report = losses.total_loss(bundle, coeffs)
        assert tuple(report.terms()) == constants.LOSS_NAMES
        assert len(report.terms()) == 11
        assert report.is_finite()
        assert all(value >= 0.0 for value in report.terms().values())

    def test_total_is_sum(self, bundle):
        coeffs = losses.compute_coefficients(bundle.I_LP)
        report = losses.total_loss(bundle, coeffs)
        assert report.total == pytest.approx(sum(report.terms().values()))
        assert report.graph.item() == pytest.approx(report.total, rel=1e-5)

    def test_weights(self, bundle):
        coeffs = losses.compute_coefficients(bundle.I_LP)
        zero = {name: 0.0 for name in constants.LOSS_NAMES}
        assert losses.total_loss(bundle, coeffs, weights=zero).total == 0.0
        only_color = dict(zero, color=2.0)
        report = losses.total_loss(bundle, coeffs, weights=only_color)
        assert report.total == pytest.approx(2 * report.color)

    def test_mode_mismatch(self, bundle):
        coeffs = losses.compute_coefficients(bundle.I_LP)
        with pytest.raises(ValueError):
            losses.total_loss(bundle, coeffs, mode=constants.MODE_UNDERWATER)

    def test_backward(self, bundle, nets):
        coeffs = losses.compute_coefficients(bundle.I_LP)
        report = losses.total_loss(bundle, coeffs)
        report.graph.backward()
        grads = [p.grad for p in nets.parameters() if p.grad is not None]
        assert grads
        assert all(torch.all(torch.isfinite(grad)) for grad in grads)

    def test_near_black_frame(self, nets):
        I = torch.zeros(1, 3, 8, 8)
        I[..., 0, 0] = 0.2
        _, _, bundle = enhance_frame(I, None, nets)
        coeffs = losses.compute_coefficients(bundle.I_LP)
        assert losses.total_loss(bundle, coeffs).is_finite()
