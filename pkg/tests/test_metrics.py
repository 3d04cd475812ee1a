import numpy as np
import pytest

from lfdeocc.metrics import (
    EvalReport,
    EvalRow,
    assemble_report,
    evaluate_scene,
    mean_l1,
    psnr,
    ssim,
)


class TestMeanL1:
    def test_identical_images_zero(self):
        a = np.random.default_rng(0).random((16, 16, 3))
        assert mean_l1(a, a) == 0.0

    def test_constant_offset(self):
        a = np.zeros((8, 8, 3))
        assert abs(mean_l1(a, a + 0.3) - 0.3) < 1e-12

    def test_half_changed(self):
        a = np.zeros((4, 4))
        b = a.copy()
        b[:2] = 1.0
        assert abs(mean_l1(a, b) - 0.5) < 1e-12

    def test_sign_symmetric(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert mean_l1(a, b) == mean_l1(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mean_l1(np.zeros((4, 4)), np.zeros((5, 4)))


class TestPsnr:
    def test_identical_capped_99(self):
        a = np.random.default_rng(2).random((8, 8, 3))
        assert psnr(a, a) == 99.0

    def test_closed_form_constant_error(self):
        # MSE = 0.1^2 -> 10*log10(1/0.01) = 20 dB
        a = np.zeros((16, 16))
        assert abs(psnr(a, a + 0.1) - 20.0) < 1e-9

    def test_closed_form_half_error(self):
        # half the pixels off by 0.2 -> MSE = 0.02
        a = np.zeros((4, 4))
        b = a.copy()
        b[:2] = 0.2
        assert abs(psnr(a, b) - 10.0 * np.log10(1.0 / 0.02)) < 1e-9

    def test_peak_scaling(self):
        a = np.zeros((8, 8))
        b = a + 0.1
        assert abs(psnr(a * 255, b * 255, peak=255.0) - psnr(a, b)) < 1e-9

    def test_tiny_error_still_capped(self):
        a = np.zeros((8, 8))
        b = a.copy()
        b[0, 0] = 1e-12
        assert psnr(a, b) == 99.0


def ssim_naive(a, b, peak=1.0):
    """Independent per-pixel SSIM: explicit loops over window positions."""
    k = 11
    ax = np.arange(k, dtype=np.float64) - 5.0
    g = np.exp(-(ax ** 2) / (2 * 1.5 ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    h, w = a.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            pa = a[i:i + k, j:j + k]
            pb = b[i:i + k, j:j + k]
            mu1 = (win * pa).sum()
            mu2 = (win * pb).sum()
            v1 = (win * pa * pa).sum() - mu1 ** 2
            v2 = (win * pb * pb).sum() - mu2 ** 2
            cov = (win * pa * pb).sum() - mu1 * mu2
            vals.append(((2 * mu1 * mu2 + c1) * (2 * cov + c2))
                        / ((mu1 ** 2 + mu2 ** 2 + c1) * (v1 + v2 + c2)))
    return float(np.mean(vals))


class TestSsim:
    def test_identical_is_one(self):
        a = np.random.default_rng(3).random((16, 16))
        assert abs(ssim(a, a) - 1.0) < 1e-12

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(4)
        a = rng.random((20, 20))
        b = np.clip(a + rng.normal(0, 0.1, (20, 20)), 0, 1)
        assert abs(ssim(a, b) - ssim_naive(a, b)) < 1e-9

    def test_channel_mean(self):
        rng = np.random.default_rng(5)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        per = [ssim(a[:, :, k], b[:, :, k]) for k in range(3)]
        assert abs(ssim(a, b) - np.mean(per)) < 1e-12

    def test_constant_shift_below_one(self):
        a = np.full((16, 16), 0.4)
        b = np.full((16, 16), 0.6)
        s = ssim(a, b)
        # zero variance: SSIM reduces to the luminance term
        expect = (2 * 0.4 * 0.6 + 0.01 ** 2) / (0.4 ** 2 + 0.6 ** 2 + 0.01 ** 2)
        assert abs(s - expect) < 1e-9

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestReports:
    def test_evaluate_scene_perfect(self):
        a = np.random.default_rng(7).random((16, 16, 3))
        row = evaluate_scene(a, a, "x")
        assert row.l1 == 0.0 and row.psnr == 99.0 and abs(row.ssim - 1.0) < 1e-12

    def test_average_row(self):
        rows = [EvalRow("a", 0.1, 20.0, 0.5), EvalRow("b", 0.3, 30.0, 0.7)]
        rep = assemble_report(rows)
        assert rep.average.scene == "Average"
        assert abs(rep.average.l1 - 0.2) < 1e-12
        assert abs(rep.average.psnr - 25.0) < 1e-12
        assert abs(rep.average.ssim - 0.6) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            assemble_report([])

    def test_json_round_trip(self, tmp_path):
        rep = assemble_report([EvalRow("a", 0.1, 20.0, 0.5)])
        p = tmp_path / "rep.json"
        rep.save_json(p)
        back = EvalReport.load_json(p)
        assert back.to_dict() == rep.to_dict()

    def test_csv_has_header_and_average(self, tmp_path):
        rep = assemble_report([EvalRow("a", 0.1, 20.0, 0.5)])
        p = tmp_path / "rep.csv"
        rep.save_csv(p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "scene,l1,psnr,ssim"
        assert lines[-1].startswith("Average,")
