import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thznoma.constellation import SUPPORTED_ORDERS, build_qam
from thznoma.errors import LengthMismatch, UnsupportedOrder


def test_bpsk_points():
    assert sorted(build_qam(2, 1).points.real) == [-1.0, 1.0]


def test_qpsk_points():
    pts = set(np.round(build_qam(4, 2).points, 12))
    assert pts == {1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j}


def test_16qam_levels():
    c = build_qam(16, 1)
    assert np.allclose(sorted(set(np.round(c.points.real * np.sqrt(10), 9))), [-3, -1, 1, 3])
    assert abs(c.mean_energy() - 1) < 1e-12


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
@pytest.mark.parametrize("p", [0.01, 1.0, 7.5, 1e4])
def test_energy(order, p):
    assert abs(build_qam(order, p).mean_energy() - p) / p < 1e-12


def test_slice_examples():
    assert build_qam(4, 2).slice(1.2 + 0.9j) == 1 + 1j
    assert build_qam(2, 1).slice(0) == 1
    c = build_qam(16, 1)
    v = 0.1 - 0.8j
    assert c.slice(v) == c.points[np.argmin(np.abs(c.points - v))]


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_slice_idempotent(order):
    c = build_qam(order, 3.0)
    assert np.allclose(c.slice(c.points), c.points)


@given(st.sampled_from(SUPPORTED_ORDERS), st.floats(-3, 3), st.floats(-3, 3))
def test_slice_is_nearest(order, re, im):
    c = build_qam(order, 1.0)
    v = complex(re, im)
    d = np.abs(c.points - v)
    assert abs(abs(c.slice(v) - v) - d.min()) < 1e-12


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_label_round_trip(order):
    c = build_qam(order)
    labels = np.arange(order)
    assert np.array_equal(c.labels(c.symbols_from_labels(labels)), labels)
    assert len(set(np.round(c.points, 12))) == order


@pytest.mark.parametrize("order", [4, 16, 64])
def test_gray_neighbours(order):
    c = build_qam(order)
    step = 2 * c.scale
    for a, b in itertools.combinations(range(order), 2):
        pa, pb = c.points[a], c.points[b]
        if abs(abs(pa - pb) - step) < 1e-9:
            assert bin(a ^ b).count("1") == 1


@given(st.sampled_from(SUPPORTED_ORDERS), st.integers(0, 2**32 - 1))
def test_modulate_demap(order, seed):
    c = build_qam(order, 2.0)
    bits = np.random.default_rng(seed).integers(0, 2, (3, 4 * c.bits_per_symbol))
    x = c.modulate(bits)
    assert x.shape == (3, 4)
    assert np.array_equal(c.demap(x), bits)


def test_errors():
    with pytest.raises(UnsupportedOrder):
        build_qam(8)
    with pytest.raises(ValueError):
        build_qam(4, 0)
    with pytest.raises(LengthMismatch):
        build_qam(16).modulate([0, 1, 1])
