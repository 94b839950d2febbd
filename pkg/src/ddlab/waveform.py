"""Oversampled ODDM and OTFS waveforms and their spectra.

Time is measured in samples of width ``dt = T / (M * oversampling)`` with
``T = 1 / subcarrier_spacing``. One delay bin ``T/M`` is ``oversampling``
samples and one multicarrier symbol ``T`` is ``M * oversampling`` samples.

The transmit pulse ``a(t)`` is a truncated root-raised-cosine. Truncation
to ``2 Q_half`` delay bins breaks its Nyquist property, so by default the
taps are refined by a small constrained least-squares design that restores
exact zero crossings of the autocorrelation at nonzero multiples of ``T/M``
while keeping stopband energy low.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .constellation import DDFrame, FrameDims
from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class PulseConfig:
    Q_half: int = 16
    rolloff: float = 0.1
    oversampling: int = 8
    subcarrier_spacing: float = 15e3
    orthogonalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ParameterError(f"rolloff must lie in [0, 1], got {self.rolloff}")
        if self.oversampling < 2:
            raise ParameterError("oversampling must be at least 2 samples per delay bin")
        if self.Q_half < 1:
            raise ParameterError("Q_half must be a positive integer")
        if self.subcarrier_spacing <= 0:
            raise ParameterError("subcarrier spacing must be positive")

    def check(self, dims: FrameDims):
        if 2 * self.Q_half >= dims.M:
            raise DimensionError(f"pulse span 2*Q_half={2 * self.Q_half} must be below M={dims.M}")

    def dt(self, dims: FrameDims) -> float:
        return 1.0 / (self.subcarrier_spacing * dims.M * self.oversampling)

    def sample_rate(self, dims: FrameDims) -> float:
        return self.subcarrier_spacing * dims.M * self.oversampling


@dataclass(frozen=True)
class SampledWaveform:
    samples: np.ndarray
    sample_rate: float
    time_origin: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if not np.all(np.isfinite(s)):
            raise ParameterError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real) / self.sample_rate


def rrc(t, beta):
    """Root-raised-cosine with unit symbol period, ``rrc(0) = 1 - beta + 4 beta / pi``."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    zero = np.abs(t) < 1e-12
    out[zero] = 1 - beta + 4 * beta / np.pi
    if beta > 0:
        sing = np.abs(np.abs(t) - 1 / (4 * beta)) < 1e-9
        out[sing] = beta / np.sqrt(2) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
        )
    else:
        sing = np.zeros_like(zero)
    rest = ~(zero | sing)
    tt = t[rest]
    out[rest] = (np.sin(np.pi * tt * (1 - beta)) + 4 * beta * tt * np.cos(np.pi * tt * (1 + beta))) / (
        np.pi * tt * (1 - (4 * beta * tt) ** 2)
    )
    return out


def _nyquist_residual(h, Q, os_):
    """Autocorrelation at lags k*os (k = 1..2Q-1) and R[0]-1, with the Jacobian in ``h``."""
    H = len(h) - 1
    f = np.concatenate([h[:0:-1], h])
    R = np.correlate(f, f, "full")
    c = 2 * H
    lags = list(range(1, 2 * Q)) + [0]
    g = np.array([R[c + k * os_] for k in lags[:-1]] + [R[c] - 1.0])
    J = np.empty((len(lags), H + 1))
    for row, k in enumerate(lags):
        s = k * os_
        if k == 0:
            d = 2 * f
        else:
            d = np.zeros_like(f)
            if s < len(f):
                d[: len(f) - s] += f[s:]
                d[s:] += f[: len(f) - s]
        dh = d[H:].copy()
        dh[1:] += d[:H][::-1]
        J[row] = dh
    return g, J


@lru_cache(maxsize=16)
def _unit_pulse(Q, os_, beta, orthogonalize):
    """Symmetric pulse on samples ``-(Q os - 1) .. Q os - 1`` with unit sample energy."""
    H = Q * os_ - 1
    i = np.arange(-H, H + 1)
    f = rrc(i / os_, beta)
    f /= np.linalg.norm(f)
    if not orthogonalize:
        f.setflags(write=False)
        return f
    h = f[H:].copy()
    # stopband energy Gram matrix, frequency in cycles per delay bin
    f_stop = (1 + beta) / 2 + 0.05
    S = np.zeros((2 * H + 1, H + 1))
    S[H + np.arange(H + 1), np.arange(H + 1)] = 1
    S[H - np.arange(1, H + 1), np.arange(1, H + 1)] = 1
    if f_stop < os_ / 2:
        fs = np.linspace(f_stop, os_ / 2, 4000)
        E = np.cos(2 * np.pi * np.outer(fs, i) / os_) @ S
        G = E.T @ E / len(fs)
    else:
        G = np.zeros((H + 1, H + 1))
    A_inv = np.linalg.inv(G + 1e-3 * np.eye(H + 1))
    # SQP on min h'Gh subject to the sampled Nyquist conditions
    for _ in range(60):
        g, J = _nyquist_residual(h, Q, os_)
        b = -G @ h
        lam = np.linalg.solve(J @ A_inv @ J.T, J @ A_inv @ b + g)
        h = h + A_inv @ (b - J.T @ lam)
    # polish feasibility with minimum-norm Newton steps
    for _ in range(20):
        g, J = _nyquist_residual(h, Q, os_)
        if np.max(np.abs(g)) < 1e-15:
            break
        h = h - np.linalg.lstsq(J, g, rcond=None)[0]
    out = np.concatenate([h[:0:-1], h])
    out.setflags(write=False)
    return out


def make_srn_pulse(cfg: PulseConfig, dims: FrameDims):
    """Sampled ``a(t)``: ``(t_index, values)`` with ``t = t_index * dt`` and ``sum a^2 dt = 1/N``."""
    cfg.check(dims)
    f = _unit_pulse(cfg.Q_half, cfg.oversampling, cfg.rolloff, cfg.orthogonalize)
    H = (len(f) - 1) // 2
    a = f * math.sqrt(1.0 / (dims.N * cfg.dt(dims)))
    return np.arange(-H, H + 1), a


def pulse_train(cfg: PulseConfig, dims: FrameDims, with_cp=False):
    """``g_tx(t) = sum_n a(t - n T)`` over ``n = 0..N-1`` (``-1..N-1`` with CP).

    Returns ``(start_index, samples)``.
    """
    idx, a = make_srn_pulse(cfg, dims)
    T = dims.M * cfg.oversampling
    first = -1 if with_cp else 0
    start = first * T + idx[0]
    g = np.zeros((dims.N - first - 1) * T + len(a))
    for n in range(first, dims.N):
        off = (n - first) * T
        g[off : off + len(a)] += a
    return start, g


def _span(cfg: PulseConfig, dims: FrameDims, with_cp):
    idx, _ = make_srn_pulse(cfg, dims)
    os_, T = cfg.oversampling, dims.M * cfg.oversampling
    start = (-T if with_cp else 0) + idx[0]
    stop = (dims.N - 1) * T + (dims.M - 1) * os_ + idx[-1]
    return start, stop - start + 1


def synthesize_oddm(x: DDFrame, cfg: PulseConfig, with_cp=False, method="fast") -> SampledWaveform:
    """ODDM waveform ``sum_{m,n} x[m,n] g_tx(t - mT/M) exp(j2pi n (t - mT/M) / NT)``.

    With ``with_cp`` the pulse train carries one extra replica at ``-T``.
    ``method="direct"`` evaluates the double sum sample by sample.
    """
    dims = x.dims
    cfg.check(dims)
    M, N, os_ = dims.M, dims.N, cfg.oversampling
    T = M * os_
    NT = N * T
    start, length = _span(cfg, dims, with_cp)
    X = x.symbols
    out = np.zeros(length, dtype=complex)
    if method == "direct":
        g0, g = pulse_train(cfg, dims, with_cp)
        k = start + np.arange(length)
        n = np.arange(N)
        for m in range(M):
            rel = k - m * os_
            pos = rel - g0
            ok = (pos >= 0) & (pos < len(g))
            gm = np.zeros(length)
            gm[ok] = g[pos[ok]]
            carrier = np.exp(2j * np.pi * np.outer(rel, n) / NT) @ X[m]
            out += gm * carrier
    elif method == "fast":
        idx, a = make_srn_pulse(cfg, dims)
        n = np.arange(N)
        reps = np.arange(-1 if with_cp else 0, N)
        # within replica r the carrier is exp(j2pi n r / N) exp(j2pi n j / NT)
        ramp = np.exp(2j * np.pi * np.outer(idx, n) / NT)  # (J, N)
        rep_phase = np.exp(2j * np.pi * np.outer(n, reps % N) / N)  # (N, R)
        for m in range(M):
            Z = (ramp * X[m][None, :]) @ rep_phase  # (J, R)
            for c, r in enumerate(reps):
                lo = r * T + m * os_ + idx[0] - start
                out[lo : lo + len(idx)] += a * Z[:, c]
    else:
        raise ParameterError(f"unknown synthesis method {method!r}")
    return SampledWaveform(out, cfg.sample_rate(dims), start * cfg.dt(dims))


def isfft(x_grid):
    """DD grid ``x[l, k]`` to TF grid ``X[m, n]`` (unitary)."""
    return np.fft.ifft(np.fft.fft(x_grid, axis=0, norm="ortho"), axis=1, norm="ortho")


def sfft(X_tf):
    """Inverse of :func:`isfft`."""
    return np.fft.ifft(np.fft.fft(X_tf, axis=1, norm="ortho"), axis=0, norm="ortho")


def default_otfs_cp(cfg: PulseConfig, dims: FrameDims) -> int:
    return max(1, dims.M // 16) * cfg.oversampling


def synthesize_otfs(x: DDFrame, cfg: PulseConfig, cp_len=None) -> SampledWaveform:
    """ISFFT followed by rectangular-pulse OFDM with a per-symbol cyclic prefix.

    Subcarrier ``m`` sits at ``(m - M//2) * subcarrier_spacing`` so the band is
    centred on zero. ``cp_len`` is in samples (default ``M/16`` delay bins).
    """
    dims = x.dims
    M, N, os_ = dims.M, dims.N, cfg.oversampling
    L = M * os_
    cp = default_otfs_cp(cfg, dims) if cp_len is None else int(cp_len)
    if not 0 <= cp <= L:
        raise ParameterError("cyclic prefix must lie within one symbol")
    X = isfft(x.symbols)
    bins = (np.arange(M) - M // 2) % L
    grid = np.zeros((L, N), dtype=complex)
    grid[bins] = X
    dt = cfg.dt(dims)
    T = L * dt
    sym = np.fft.ifft(grid, axis=0) * L / math.sqrt(T)
    sym = np.concatenate([sym[L - cp :], sym]) if cp else sym
    return SampledWaveform(sym.T.ravel(), cfg.sample_rate(dims), -cp * dt)


def overlap_add(waves, period: int) -> SampledWaveform:
    """Place waveforms ``period`` samples apart (relative to their own origins) and sum."""
    if not waves:
        raise ParameterError("nothing to concatenate")
    n = max(len(w) for w in waves)
    out = np.zeros((len(waves) - 1) * period + n, dtype=complex)
    for i, w in enumerate(waves):
        out[i * period : i * period + len(w)] += w.samples
    return SampledWaveform(out, waves[0].sample_rate, waves[0].time_origin)


def estimate_psd(w: SampledWaveform, segment_len=1024, overlap=0.5, window="hann", ref_band=None):
    """Welch PSD in dB against frequency offset in Hz (two-sided, ascending).

    The level is referenced to the mean PSD over ``ref_band`` (Hz), or over
    the bins within 3 dB of the peak when no band is given.
    """
    x = np.asarray(w.samples)
    if x.size == 0:
        raise ParameterError("empty waveform")
    if segment_len > x.size:
        raise ParameterError(f"segment length {segment_len} exceeds waveform length {x.size}")
    if not 0 <= overlap < 1:
        raise ParameterError("overlap must lie in [0, 1)")
    f, p = signal.welch(
        x,
        fs=w.sample_rate,
        window=window,
        nperseg=segment_len,
        noverlap=int(round(overlap * segment_len)),
        return_onesided=False,
        detrend=False,
        scaling="density",
    )
    f, p = np.fft.fftshift(f), np.fft.fftshift(p)
    if ref_band is None:
        ref = np.mean(p[p >= 0.5 * p.max()])
    else:
        sel = (f >= ref_band[0]) & (f <= ref_band[1])
        if not np.any(sel):
            raise ParameterError("reference band holds no frequency bins")
        ref = np.mean(p[sel])
    return f, 10 * np.log10(np.maximum(p / ref, 1e-300))


def level_at(freqs, psd_db, offset):
    """PSD level (dB) at ``+offset`` and ``-offset`` averaged in linear scale."""
    lin = 10 ** (np.asarray(psd_db) / 10)
    vals = [lin[np.argmin(np.abs(freqs - s * offset))] for s in (1, -1)]
    return 10 * np.log10(np.mean(vals))


# -- file formats ------------------------------------------------------------

_MAGIC = "ddlab-waveform"


def write_waveform(w: SampledWaveform, path):
    """Text header line then interleaved little-endian float64 (re, im)."""
    path = Path(path)
    header = f"{_MAGIC} sample_rate={w.sample_rate!r} length={len(w)} time_origin={w.time_origin!r}\n"
    inter = np.empty(2 * len(w), dtype="<f8")
    inter[0::2] = w.samples.real
    inter[1::2] = w.samples.imag
    with path.open("wb") as f:
        f.write(header.encode("ascii"))
        f.write(inter.tobytes())
    return path


def read_waveform(path) -> SampledWaveform:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    fields = raw[:nl].decode("ascii").split()
    if not fields or fields[0] != _MAGIC:
        raise ParameterError(f"{path} is not a waveform file")
    meta = dict(kv.split("=", 1) for kv in fields[1:])
    data = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    n = int(meta["length"])
    if data.size != 2 * n:
        raise ParameterError(f"{path}: header says {n} samples, found {data.size // 2}")
    return SampledWaveform(data[0::2] + 1j * data[1::2], float(meta["sample_rate"]), float(meta["time_origin"]))


def write_psd_csv(freqs, psd_db, path, header_comment=None):
    path = Path(path)
    with path.open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["hz_offset", "db"])
        for a, b in zip(freqs, psd_db):
            w.writerow([repr(float(a)), repr(float(b))])
    return path


def read_psd_csv(path):
    rows = [r for r in Path(path).read_text().splitlines() if r and not r.startswith("#")]
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return data[:, 0], data[:, 1]
