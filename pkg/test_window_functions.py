#!/usr/bin/env python3
"""
Tests for the window functions and their scaled, periodic versions
"""

import math
import os
import sys

import numpy as np
import pytest

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from closure_engine.errors import InvalidArgumentError
from closure_engine.window_functions import (WindowKernel, WindowKind, eval_periodic,
                                             eval_scaled, eval_window, kernel_cdf,
                                             scaled_mass, verify_conditions, window_cdf)

ETAS = [0.01, 0.1, 0.5, 0.9]


def test_closed_form_values():
    assert eval_window(WindowKind.CHARACTERISTIC, 0.0, 1.0) == pytest.approx(1.0)
    assert eval_window(WindowKind.GAUSSIAN, 0.0, 1.0) == pytest.approx(6.0 / math.sqrt(2.0 * math.pi))
    assert eval_window(WindowKind.QUARTIC, 0.5, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert eval_window(WindowKind.TRIANGLE, 0.25, 1.0) == pytest.approx(1.0)
    assert eval_window(WindowKind.QUADRATIC, 0.0, 1.0) == pytest.approx(1.5)
    assert eval_window(WindowKind.TRAPEZOID, 1.0, 1.0) == pytest.approx(0.25)


def test_scaled_values():
    assert eval_scaled(WindowKernel(WindowKind.CHARACTERISTIC, 1.0, 0.5), 0.0) == pytest.approx(2.0)
    assert eval_scaled(WindowKernel(WindowKind.GAUSSIAN, 1.0, 0.1), 0.0) == pytest.approx(23.936, rel=1e-4)
    assert eval_scaled(WindowKernel(WindowKind.TRIANGLE, 1.0, 0.1), 0.06) == 0.0


def test_invalid_arguments():
    with pytest.raises(InvalidArgumentError):
        eval_window(WindowKind.GAUSSIAN, 0.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        WindowKernel(WindowKind.GAUSSIAN, 1.0, 1.5)
    with pytest.raises(InvalidArgumentError):
        WindowKind.from_name("hann")


def test_config_names():
    names = ["char", "trapezoid", "triangle", "quadratic", "quartic", "gaussian"]
    assert [WindowKind.from_name(n) for n in names] == list(WindowKind)
    assert WindowKind.from_name(" Characteristic ") is WindowKind.CHARACTERISTIC
    assert WindowKind.GAUSSIAN.index == 6


def test_admissibility_conditions():
    for kind in WindowKind:
        report = verify_conditions(kind)
        assert report.nonnegative, kind
        assert report.unit_mass, (kind, report.mass)
        assert report.decays, kind
        expected_peak = kind not in (WindowKind.CHARACTERISTIC, WindowKind.TRAPEZOID)
        assert report.max_at_zero == expected_peak, kind


def test_cdf_matches_quadrature():
    xs = np.linspace(-2.0, 2.0, 200001)
    for kind in WindowKind:
        values = eval_window(kind, xs, 1.0)
        running = np.concatenate(([0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(xs))))
        cdf = window_cdf(kind, xs, 1.0)
        assert np.max(np.abs(cdf - cdf[0] - running)) < 1e-4, kind
        assert window_cdf(kind, 0.0, 1.0) == pytest.approx(0.5)


def test_scaled_unit_mass():
    for kind in WindowKind:
        for eta in ETAS:
            kernel = WindowKernel(kind, 1.0, eta)
            line, box = scaled_mass(kernel)
            assert line == pytest.approx(1.0, abs=1e-8), (kind, eta)
            assert box == pytest.approx(1.0, abs=5e-3), (kind, eta)


def test_compact_support():
    for kind in WindowKind:
        if not kind.is_compact:
            continue
        for eta in ETAS:
            kernel = WindowKernel(kind, 1.0, eta)
            edge = 1.5 * eta if kind is WindowKind.TRAPEZOID else 0.5 * eta
            outside = np.linspace(edge * 1.0001, edge * 3.0, 101)
            assert np.all(eval_scaled(kernel, outside) == 0.0)
            assert np.all(eval_scaled(kernel, -outside) == 0.0)


def test_periodic_images():
    kernel = WindowKernel(WindowKind.TRAPEZOID, 1.0, 0.5)
    assert kernel.image_count == 1
    d = np.linspace(-0.5, 0.5, 11)
    direct = sum(eval_scaled(kernel, d + n) for n in (-1, 0, 1))
    np.testing.assert_allclose(eval_periodic(kernel, d), direct, rtol=0, atol=1e-14)
    np.testing.assert_allclose(kernel.periodic(d + 3.0), kernel.periodic(d), atol=1e-12)

    narrow = WindowKernel(WindowKind.CHARACTERISTIC, 1.0, 0.1)
    assert narrow.image_count == 0


def test_segment_integral():
    kernel = WindowKernel(WindowKind.CHARACTERISTIC, 1.0, 0.2)
    # Segment [-0.05, 0.15] overlaps the support [-0.1, 0.1] on length 0.15
    assert kernel.segment_integral(-0.05, 0.2) == pytest.approx(0.15 / 0.2)
    # Wrapping across the box boundary
    assert kernel.segment_integral(0.95, 0.1) == pytest.approx(0.1 / 0.2)
    gaussian = WindowKernel(WindowKind.GAUSSIAN, 1.0, 0.1)
    assert gaussian.segment_integral(-0.5, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert kernel_cdf(gaussian, 0.0) == pytest.approx(0.5)


def main():
    print("Window Functions Test")
    print("=" * 40)
    tests = [
        test_closed_form_values,
        test_scaled_values,
        test_invalid_arguments,
        test_config_names,
        test_admissibility_conditions,
        test_cdf_matches_quadrature,
        test_scaled_unit_mass,
        test_compact_support,
        test_periodic_images,
        test_segment_integral,
    ]
    failures = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except Exception as e:
            failures += 1
            print(f"✗ {test.__name__}: {e}")
    print("=" * 40)
    print(f"{len(tests) - failures}/{len(tests)} passed")
    return failures == 0


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
