import json
import math

import pytest

import _srqat


def test_percentile_interpolation():
    sample = [float(i) for i in range(1, 101)]
    assert _srqat.percentile(sample, 99) == pytest.approx(99.01)
    assert _srqat.percentile(sample, 1) == pytest.approx(1.99)
    assert _srqat.percentile(sample, 100) == 100.0


def test_dual_bound_quantize_worked_example():
    codes, deq = _srqat.dual_quantize([0.4, 2.5, -1.7, 1.5], -1.0, 2.0, 2)
    assert codes == [1.0, 3.0, 0.0, 3.0]
    assert deq == [0.0, 2.0, -1.0, 2.0]


def test_symmetric_quantize_example():
    # bits=3, alpha=1: s = 2/3
    out = _srqat.symmetric_quantize([0.5, 5.0, 0.0], 1.0, 3)
    assert out[0] == pytest.approx(2.0 / 3.0)
    assert out[1] == pytest.approx(4.0 / 3.0)
    assert out[2] == 0.0


def test_wasted_levels():
    sample = [3.0 * i / 10000 for i in range(10001)]
    assert _srqat.wasted_levels_symmetric(sample, 3.0, 2) == 0.5
    assert _srqat.wasted_levels_dual(sample, 0.0, 3.0, 2) == 0.0


def test_select_gated_layers():
    assert _srqat.select_gated_layers([0.5, 2.0, 1.0, 0.1], 50.0) == [1, 2]
    assert _srqat.select_gated_layers([1.0, 1.0], 0.0) == []


def test_psnr_ssim():
    img = [(i * 7) % 200 for i in range(16 * 16 * 3)]  # 16x16 RGB, headroom for +10
    assert _srqat.psnr(img, img, 16, 16) == 100.0
    assert _srqat.ssim(img, img, 16, 16) == pytest.approx(1.0)
    other = [b + 10 for b in img]
    p = _srqat.psnr(img, other, 16, 16)
    assert p == pytest.approx(10 * math.log10(255**2 / 100.0))


def test_analyze_report():
    fp = json.loads(_srqat.analyze("edsr", scale=4, bits=32))
    assert fp["total_eff_params"] == pytest.approx(1_517_571)
    assert fp["total_bops"] == pytest.approx(532e12, rel=0.10)

    q = json.loads(_srqat.analyze("edsr", scale=4, bits=2, gates=10))
    assert q["total_eff_params"] == pytest.approx(414_801)
    assert q["gate_param_ratio"] < 0.01
