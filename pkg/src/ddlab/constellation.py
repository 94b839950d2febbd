"""Constellations, DD grid dimensions and frames.

Frames are vectorized delay-major: entry ``q = m + M*n`` of the vector
holds grid entry ``x[m, n]`` (delay bin ``m``, Doppler bin ``n``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _gray(i):
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Finite unit-energy alphabet with a bit labeling.

    ``points[i]`` is the point carrying label ``i``; the label's bits are
    the ``bits_per_symbol`` binary digits of ``i``, most significant first.
    """

    points: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pts = _frozen(self.points, complex)
        q = pts.size
        if q < 2 or q & (q - 1):
            raise ParameterError(f"constellation size must be a power of two >= 2, got {q}")
        if len(np.unique(np.round(pts, 12))) != q:
            raise ParameterError("constellation points must be distinct")
        energy = np.mean(np.abs(pts) ** 2)
        if abs(energy - 1.0) > 1e-12:
            raise ParameterError(f"average symbol energy is {energy}, expected 1")
        object.__setattr__(self, "points", pts)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return int(self.order).bit_length() - 1

    @property
    def labels(self) -> np.ndarray:
        """(Q, bits_per_symbol) 0/1 array; row ``i`` is the label of ``points[i]``."""
        b = self.bits_per_symbol
        i = np.arange(self.order)[:, None]
        return ((i >> np.arange(b - 1, -1, -1)) & 1).astype(np.uint8)

    def labeling(self) -> dict:
        """Bit-pattern tuple -> point map."""
        return {tuple(int(v) for v in row): complex(p) for row, p in zip(self.labels, self.points)}

    def bits_to_indices(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        b = self.bits_per_symbol
        if bits.shape[-1] % b:
            raise DimensionError(f"bit count {bits.shape[-1]} is not a multiple of {b}")
        groups = bits.reshape(bits.shape[:-1] + (-1, b))
        return groups @ (1 << np.arange(b - 1, -1, -1))

    def indices_to_bits(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        bits = self.labels[idx]
        return bits.reshape(idx.shape[:-1] + (-1,)) if idx.ndim else bits

    def nearest(self, values) -> np.ndarray:
        """Index of the nearest point for every entry of ``values``."""
        values = np.asarray(values)
        d = np.abs(values[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def bit_distance_table(self) -> np.ndarray:
        """Hamming distance between the labels of every pair of points."""
        lab = self.labels
        return (lab[:, None, :] != lab[None, :, :]).sum(-1)


def qam(order: int) -> Constellation:
    """Square Gray-labeled QAM; the first half of each label selects the in-phase level."""
    b = int(order).bit_length() - 1
    if order < 4 or order != 1 << b or b % 2:
        raise ParameterError(f"square QAM needs order 4**k, got {order}")
    half = b // 2
    side = 1 << half
    # PAM level index carrying Gray label g
    level_of = np.empty(side, dtype=int)
    for i in range(side):
        level_of[_gray(i)] = i
    levels = 2 * np.arange(side) - (side - 1)
    labels = np.arange(order)
    re = levels[level_of[labels >> half]]
    im = levels[level_of[labels & (side - 1)]]
    pts = (re + 1j * im) / np.sqrt(2 * (order - 1) / 3)
    return Constellation(pts, name=f"{order}QAM")


def bpsk() -> Constellation:
    return Constellation(np.array([1.0, -1.0], dtype=complex), name="BPSK")


def make_constellation(spec) -> Constellation:
    """Build from ``"bpsk"``, ``"4qam"``, ``"16QAM"`` or an integer QAM order."""
    if isinstance(spec, Constellation):
        return spec
    if isinstance(spec, (int, np.integer)):
        return bpsk() if spec == 2 else qam(int(spec))
    s = str(spec).strip().lower()
    if s == "bpsk":
        return bpsk()
    if s.endswith("qam"):
        return qam(int(s[:-3]))
    raise ParameterError(f"unknown constellation {spec!r}")


@dataclass(frozen=True)
class FrameDims:
    M: int
    N: int

    def __post_init__(self):
        for name in ("M", "N"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DimensionError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))

    @property
    def size(self) -> int:
        return self.M * self.N

    def index(self, m, n):
        return m + self.M * n

    def coords(self, q):
        return q % self.M, q // self.M


@dataclass(frozen=True)
class DDFrame:
    """M x N grid of DD symbols with its delay-major vector view."""

    dims: FrameDims
    symbols: np.ndarray
    constellation: Optional[Constellation] = field(default=None, compare=False)

    def __post_init__(self):
        g = _frozen(self.symbols, complex)
        if g.shape != (self.dims.M, self.dims.N):
            raise DimensionError(f"grid shape {g.shape} does not match {self.dims}")
        object.__setattr__(self, "symbols", g)

    @property
    def vector(self) -> np.ndarray:
        return self.symbols.reshape(-1, order="F")

    @classmethod
    def from_vector(cls, v, dims: FrameDims, constellation=None) -> "DDFrame":
        v = np.asarray(v)
        if v.shape != (dims.size,):
            raise DimensionError(f"vector length {v.shape} does not match MN={dims.size}")
        return cls(dims, v.reshape((dims.M, dims.N), order="F"), constellation)

    def indices(self) -> np.ndarray:
        """Constellation index of every vector entry (nearest point)."""
        if self.constellation is None:
            raise ParameterError("frame has no attached constellation")
        return self.constellation.nearest(self.vector)

    def bits(self) -> np.ndarray:
        return self.constellation.indices_to_bits(self.indices())


def modulate_bits(bits, constellation: Constellation, dims: FrameDims) -> DDFrame:
    bits = np.asarray(bits).ravel()
    need = dims.size * constellation.bits_per_symbol
    if bits.size != need:
        raise DimensionError(f"expected {need} bits for {dims.M}x{dims.N} {constellation.name}, got {bits.size}")
    idx = constellation.bits_to_indices(bits)
    return DDFrame.from_vector(constellation.points[idx], dims, constellation)


def demap_hard(values, constellation: Constellation) -> np.ndarray:
    """Nearest-point hard decisions on a symbol vector, returned as a bit vector."""
    return constellation.indices_to_bits(constellation.nearest(np.ravel(values)))
