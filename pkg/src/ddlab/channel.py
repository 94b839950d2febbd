"""Integer-tap delay-Doppler channel realizations, generators and the noisy link."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constellation import DDFrame, FrameDims
from .errors import ChannelError, ParameterError


@dataclass(frozen=True)
class ChannelPath:
    gain: complex
    delay_tap: int
    doppler_tap: int

    def __post_init__(self):
        object.__setattr__(self, "gain", complex(self.gain))
        for name in ("delay_tap", "doppler_tap"):
            v = getattr(self, name)
            if int(v) != v:
                raise ChannelError(f"{name} must be an integer, got {v}")
            object.__setattr__(self, name, int(v))


@dataclass(frozen=True)
class ChannelRealization:
    """P paths with integer taps; ``L`` bounds the delay taps, ``K`` the |Doppler| taps."""

    paths: tuple
    L: int
    K: int

    def __post_init__(self):
        paths = tuple(self.paths)
        object.__setattr__(self, "paths", paths)
        if not paths:
            raise ChannelError("a channel needs at least one path")
        if self.L < 1 or self.K < 0:
            raise ChannelError(f"invalid tap bounds L={self.L}, K={self.K}")
        seen = set()
        for p in paths:
            if not 0 <= p.delay_tap <= self.L - 1:
                raise ChannelError(f"delay tap {p.delay_tap} outside [0, {self.L - 1}]")
            if abs(p.doppler_tap) > self.K:
                raise ChannelError(f"Doppler tap {p.doppler_tap} outside [-{self.K}, {self.K}]")
            key = (p.delay_tap, p.doppler_tap)
            if key in seen:
                raise ChannelError(f"duplicate tap pair {key}")
            seen.add(key)

    @classmethod
    def from_paths(cls, paths: Sequence, L=None, K=None) -> "ChannelRealization":
        """Build from ``ChannelPath`` objects or ``(gain, l, k)`` triples.

        Paths sharing a tap pair are merged by summing their gains.
        """
        merged = {}
        for p in paths:
            if not isinstance(p, ChannelPath):
                p = ChannelPath(*p)
            key = (p.delay_tap, p.doppler_tap)
            merged[key] = merged.get(key, 0j) + p.gain
        out = tuple(ChannelPath(g, l, k) for (l, k), g in merged.items())
        if L is None:
            L = max(p.delay_tap for p in out) + 1
        if K is None:
            K = max(abs(p.doppler_tap) for p in out)
        return cls(out, int(L), int(K))

    @property
    def P(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay_tap for p in self.paths], dtype=int)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler_tap for p in self.paths], dtype=int)

    def check_dims(self, dims: FrameDims):
        """Raise ``ChannelError`` unless every tap fits inside one frame."""
        if self.L > dims.M:
            raise ChannelError(f"delay span L={self.L} exceeds M={dims.M}")
        if self.K >= dims.N:
            raise ChannelError(f"Doppler span K={self.K} must be below N={dims.N}")
        wrapped = {(p.delay_tap, p.doppler_tap % dims.N) for p in self.paths}
        if len(wrapped) != self.P:
            raise ChannelError("two paths alias onto the same DD tap modulo N")

    def with_gains(self, gains) -> "ChannelRealization":
        gains = np.asarray(gains, dtype=complex)
        if gains.shape != (self.P,):
            raise ChannelError(f"expected {self.P} gains, got shape {gains.shape}")
        paths = tuple(ChannelPath(g, p.delay_tap, p.doppler_tap) for g, p in zip(gains, self.paths))
        return ChannelRealization(paths, self.L, self.K)

    # plain-text replay format
    def to_text(self) -> str:
        doc = {
            "P": self.P,
            "L": self.L,
            "K": self.K,
            "paths": [
                {"gain_re": p.gain.real, "gain_im": p.gain.imag, "l": p.delay_tap, "k": p.doppler_tap}
                for p in self.paths
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_text(cls, text: str) -> "ChannelRealization":
        doc = json.loads(text)
        paths = [ChannelPath(complex(d["gain_re"], d["gain_im"]), d["l"], d["k"]) for d in doc["paths"]]
        if len(paths) != doc["P"]:
            raise ChannelError(f"header says P={doc['P']} but {len(paths)} paths follow")
        return cls(tuple(paths), doc["L"], doc["K"])


def draw_gains(P, rng, powers=None, kind="complex"):
    """Zero-mean Gaussian gains with per-path variance ``powers`` (default 1/P each).

    ``kind="complex"`` draws circularly-symmetric gains (real and imaginary
    parts each with half the variance); ``kind="real"`` draws real gains.
    """
    powers = np.full(P, 1.0 / P) if powers is None else np.asarray(powers, float)
    if kind == "complex":
        g = rng.standard_normal(P) + 1j * rng.standard_normal(P)
        return g * np.sqrt(powers / 2)
    if kind == "real":
        return rng.standard_normal(P) * np.sqrt(powers) + 0j
    raise ParameterError(f"unknown gain model {kind!r}")


def random_channel(P, dims: FrameDims, rng, L=None, K=None, doppler="nonnegative", gains="complex"):
    """P paths on distinct taps drawn uniformly without replacement.

    Delay taps come from ``0..L-1``; Doppler taps from ``0..K`` when
    ``doppler="nonnegative"`` or ``-K..K`` when ``"signed"``. Defaults are
    ``L=M`` and ``K=N-1`` (nonnegative) or ``K=(N-1)//2`` (signed), so no two
    taps alias modulo N.
    """
    L = dims.M if L is None else L
    if doppler == "nonnegative":
        K = dims.N - 1 if K is None else K
        ks = np.arange(0, K + 1)
    elif doppler == "signed":
        K = (dims.N - 1) // 2 if K is None else K
        ks = np.arange(-K, K + 1)
    else:
        raise ParameterError(f"unknown Doppler range {doppler!r}")
    if ks.size > dims.N:
        raise ChannelError(f"Doppler range of {ks.size} taps aliases modulo N={dims.N}")
    grid = [(l, int(k)) for l in range(L) for k in ks]
    if P > len(grid):
        raise ChannelError(f"cannot place {P} distinct paths on {len(grid)} taps")
    pick = rng.choice(len(grid), size=P, replace=False)
    g = draw_gains(P, rng, kind=gains)
    paths = tuple(ChannelPath(g[i], *grid[j]) for i, j in enumerate(pick))
    ch = ChannelRealization(paths, L, K)
    ch.check_dims(dims)
    return ch


def fixed_tap_channel(taps, rng, L=None, K=None, gains="complex", powers=None):
    """Random gains on a fixed list of ``(l, k)`` taps."""
    taps = list(taps)
    g = draw_gains(len(taps), rng, powers=powers, kind=gains)
    return ChannelRealization.from_paths([(gi, l, k) for gi, (l, k) in zip(g, taps)], L=L, K=K)


def ntn_tdl_like(
    dims: FrameDims,
    rng,
    P=4,
    delay_spread=300e-9,
    doppler_spread=3750.0,
    subcarrier_spacing=15e3,
    normalized_delays=None,
    decay_db=3.0,
    gains="complex",
):
    """Simplified NTN tapped-delay-line stand-in on the integer DD grid.

    Path ``p`` sits at delay ``delay_spread * u_p`` with ``u_p`` evenly
    spaced on [0, 4] unless given, has mean power ``10**(-decay_db*p/10)``
    (renormalized to sum 1) and Doppler ``doppler_spread * cos(theta_p)``
    with uniform ``theta_p``. Delays and Dopplers are rounded to the DD grid
    (resolutions ``1/(M df)`` and ``df/N``); paths landing on the same tap
    are merged coherently.
    """
    u = np.linspace(0.0, 4.0, P) if normalized_delays is None else np.asarray(normalized_delays, float)
    if u.shape != (P,):
        raise ParameterError("normalized_delays must have one entry per path")
    powers = 10 ** (-decay_db * np.arange(P) / 10)
    powers /= powers.sum()
    l = np.rint(delay_spread * u * dims.M * subcarrier_spacing).astype(int)
    kmax = int(np.rint(doppler_spread * dims.N / subcarrier_spacing))
    theta = rng.uniform(0, 2 * np.pi, P)
    k = np.rint(doppler_spread * np.cos(theta) * dims.N / subcarrier_spacing).astype(int)
    g = draw_gains(P, rng, powers=powers, kind=gains)
    L = int(l.max()) + 1
    if L > dims.M or 2 * kmax >= dims.N:
        raise ChannelError(f"profile needs L={L}, K={kmax} which does not fit a {dims.M}x{dims.N} frame")
    ch = ChannelRealization.from_paths(list(zip(g, l, k)), L=L, K=kmax)
    ch.check_dims(dims)
    return ch


def apply_channel(H, x, noise_var, rng) -> np.ndarray:
    """``y = H x + z`` with circularly-symmetric complex Gaussian ``z`` of variance ``noise_var``."""
    if noise_var < 0:
        raise ParameterError(f"noise variance must be non-negative, got {noise_var}")
    xv = x.vector if isinstance(x, DDFrame) else np.asarray(x)
    y = H.matrix @ xv
    if noise_var == 0:
        return y
    z = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + np.sqrt(noise_var / 2) * z
