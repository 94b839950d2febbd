import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from ddlab import DDFrame, FrameDims, bpsk, demap_hard, make_constellation, modulate_bits, qam
from ddlab.constellation import Constellation
from ddlab.errors import DimensionError, ParameterError


@pytest.mark.parametrize("order", [4, 16, 64])
def test_qam_unit_energy_and_bijection(order):
    c = qam(order)
    assert abs(np.mean(np.abs(c.points) ** 2) - 1) < 1e-12
    labels = {tuple(r) for r in c.labels}
    assert len(labels) == order
    assert len(c.labeling()) == order


@pytest.mark.parametrize("order", [4, 16, 64])
def test_qam_gray_neighbours_differ_in_one_bit(order):
    c = qam(order)
    d = np.abs(c.points[:, None] - c.points[None, :])
    dmin = d[d > 0].min()
    hamming = c.bit_distance_table()
    i, j = np.nonzero(np.isclose(d, dmin))
    assert len(i) > 0
    assert np.all(hamming[i, j] == 1)


def test_rejects_non_unit_energy():
    with pytest.raises(ParameterError):
        Constellation(np.array([2.0, -2.0]))


def test_make_constellation_specs():
    assert make_constellation("4qam").order == 4
    assert make_constellation("16QAM").order == 16
    assert make_constellation("bpsk").order == 2
    assert make_constellation(2).name == "BPSK"
    with pytest.raises(ParameterError):
        make_constellation("8psk")


def test_all_zero_bits_give_label_zero_point():
    c = qam(4)
    f = modulate_bits(np.zeros(8, int), c, FrameDims(2, 2))
    assert np.all(f.vector == c.points[0])


def test_bits_in_label_order():
    c = qam(4)
    bits = [0, 0, 0, 1, 1, 1, 1, 0]
    f = modulate_bits(bits, c, FrameDims(2, 2))
    assert np.array_equal(f.vector, c.points[[0, 1, 3, 2]])
    # vector order is delay-major: q = m + M n
    assert f.symbols[1, 0] == c.points[1]
    assert f.symbols[0, 1] == c.points[3]


def test_length_mismatch():
    with pytest.raises(DimensionError):
        modulate_bits(np.zeros(7, int), qam(4), FrameDims(2, 2))


def test_random_bits_round_trip_identity_channel(rng):
    c = qam(16)
    dims = FrameDims(2, 2)
    bits = rng.integers(0, 2, 16)
    f = modulate_bits(bits, c, dims)
    assert np.array_equal(demap_hard(f.vector, c), bits)
    assert np.array_equal(f.bits(), bits)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_vectorization_round_trip(M, N, seed):
    dims = FrameDims(M, N)
    g = np.random.default_rng(seed).standard_normal((M, N)) + 0j
    f = DDFrame(dims, g)
    back = DDFrame.from_vector(f.vector, dims)
    assert np.array_equal(back.symbols, g)
    q = np.arange(dims.size)
    m, n = dims.coords(q)
    assert np.array_equal(f.vector, g[m, n])


def test_frame_is_immutable():
    f = DDFrame(FrameDims(2, 2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        f.symbols[0, 0] = 1


def test_bpsk():
    c = bpsk()
    assert c.bits_per_symbol == 1
    assert np.array_equal(c.nearest(np.array([0.3, -2.0])), [0, 1])
