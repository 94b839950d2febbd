"""Monte Carlo drivers, experiment configs and artifact writing.

Every frame block is seeded from ``SeedSequence([master_seed, snr_index,
block_index])``, and stopping is decided at block boundaries in block
order. Running blocks in parallel therefore gives the same counts as running
them one after another.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis
from .channel import ChannelRealization, draw_gains, ntn_tdl_like, random_channel
from .constellation import DDFrame, FrameDims, make_constellation
from .detect import ML_CAP, lmmse_estimate, ml_batch, mpa_frame, oamp_batch
from .effective import MODELS, _shift_entries, build_effective_channel_oddm, build_effective_channel_otfs
from .errors import InfeasibleError, ParameterError
from .waveform import (
    PulseConfig,
    default_otfs_cp,
    estimate_psd,
    level_at,
    overlap_add,
    synthesize_oddm,
    synthesize_otfs,
    write_psd_csv,
)

CONVENTIONS = ("EsN0", "EbN0")
DETECTORS = ("ml", "lmmse", "oamp", "mpa")


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpec:
    """How a channel is drawn for each frame.

    ``kind="random"`` picks ``P`` distinct taps per frame inside the delay and
    Doppler ranges; ``"taps"`` keeps the listed ``(l, k)`` taps and redraws
    only the gains; ``"ntn"`` uses the NTN-TDL-like profile.
    """

    kind: str = "random"
    P: int = 4
    L: int | None = None
    K: int | None = None
    doppler: str = "nonnegative"
    taps: tuple = ()
    gains: str = "complex"
    powers: tuple = ()
    model: str = "exact"
    modulation: str = "oddm"
    delay_spread: float = 300e-9
    doppler_spread: float = 3750.0
    subcarrier_spacing: float = 15e3
    decay_db: float = 3.0

    def __post_init__(self):
        if self.kind not in ("random", "taps", "ntn"):
            raise ParameterError(f"unknown channel kind {self.kind!r}")
        if self.model not in MODELS:
            raise ParameterError(f"unknown DD relation {self.model!r}")
        if self.modulation not in ("oddm", "otfs"):
            raise ParameterError(f"unknown modulation {self.modulation!r}")
        if self.kind == "taps" and not self.taps:
            raise ParameterError("channel kind 'taps' needs a tap list")
        object.__setattr__(self, "taps", tuple(tuple(int(v) for v in t) for t in self.taps))
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))

    def draw(self, dims: FrameDims, rng) -> ChannelRealization:
        if self.kind == "random":
            return random_channel(self.P, dims, rng, self.L, self.K, self.doppler, self.gains)
        if self.kind == "taps":
            powers = np.array(self.powers) if self.powers else None
            g = draw_gains(len(self.taps), rng, powers=powers, kind=self.gains)
            ks = [k for _, k in self.taps]
            K = max(max(ks), -min(ks), 0)
            L = max(l for l, _ in self.taps) + 1
            return ChannelRealization.from_paths([(gi, l, k) for gi, (l, k) in zip(g, self.taps)], L=L, K=K)
        return ntn_tdl_like(
            dims,
            rng,
            self.P,
            self.delay_spread,
            self.doppler_spread,
            self.subcarrier_spacing,
            decay_db=self.decay_db,
            gains=self.gains,
        )

    def build(self, ch: ChannelRealization, dims: FrameDims):
        if self.modulation == "otfs":
            return build_effective_channel_otfs(ch, dims, self.model)
        return build_effective_channel_oddm(ch, dims, self.model)


@dataclass(frozen=True)
class DetectorSpec:
    name: str = "ml"
    T: int = 10
    damping: float = 0.6
    mode: str = "eig"
    constants: str = "printed"

    def __post_init__(self):
        if self.name not in DETECTORS:
            raise ParameterError(f"unknown detector {self.name!r}; expected one of {DETECTORS}")


@dataclass(frozen=True)
class SimConfig:
    M: int = 2
    N: int = 2
    constellation: str = "4qam"
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    snr_db: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    snr_convention: str = "EsN0"
    min_frame_errors: int = 200
    max_frames: int = 200_000
    min_frames: int = 0
    block_frames: int = 256
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.snr_convention not in CONVENTIONS:
            raise ParameterError(f"snr_convention must be one of {CONVENTIONS}")
        if self.block_frames < 1 or self.max_frames < 1:
            raise ParameterError("frame budgets must be positive")
        if self.min_frames > self.max_frames:
            raise ParameterError("min_frames exceeds max_frames")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    @property
    def dims(self) -> FrameDims:
        return FrameDims(self.M, self.N)

    def esn0_db(self):
        """Es/N0 for each grid point, converting from Eb/N0 when that is the axis."""
        s = np.asarray(self.snr_db)
        if self.snr_convention == "EbN0":
            b = make_constellation(self.constellation).bits_per_symbol
            s = s + 10 * np.log10(b)
        return s

    def noise_vars(self):
        # unit-energy symbols, so N0 = 1 / (Es/N0)
        return 10 ** (-self.esn0_db() / 10)


@dataclass(frozen=True)
class IterationConfig:
    sim: SimConfig = field(
        default_factory=lambda: SimConfig(
            M=32,
            N=8,
            channel=ChannelSpec(kind="ntn"),
            detector=DetectorSpec(name="oamp"),
            snr_db=(14.0,),
            min_frame_errors=100,
            max_frames=4000,
            block_frames=32,
        )
    )
    T_grid: tuple = (1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20)
    detectors: tuple = ("oamp", "mpa")

    def __post_init__(self):
        object.__setattr__(self, "T_grid", tuple(int(t) for t in self.T_grid))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        for d in self.detectors:
            if d not in ("oamp", "mpa"):
                raise ParameterError(f"iteration study supports oamp and mpa, not {d!r}")
        if min(self.T_grid) < 1:
            raise ParameterError("iteration counts must be positive")


@dataclass(frozen=True)
class PsdConfig:
    M: int = 128
    N: int = 16
    constellation: str = "16qam"
    Q_half: int = 16
    rolloff: float = 0.1
    oversampling: int = 8
    subcarrier_spacing: float = 15e3
    orthogonalize: bool = True
    frames: int = 20
    segment_len: int = 1024
    overlap: float = 0.5
    otfs_cp: int | None = None
    offsets: tuple = (1.1, 1.25, 1.5, 2.0)
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))

    @property
    def pulse(self) -> PulseConfig:
        return PulseConfig(self.Q_half, self.rolloff, self.oversampling, self.subcarrier_spacing, self.orthogonalize)


@dataclass(frozen=True)
class BoundsConfig:
    M: int = 2
    N: int = 2
    constellation: str = "4qam"
    taps: tuple = ((0, 0), (0, 1), (1, 0), (1, 1))
    snr_db: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    form: str = "limit"
    model: str = "ideal"
    mode: str = "auto"
    samples: int = analysis.DEFAULT_SAMPLES
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple(tuple(int(v) for v in t) for t in self.taps))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    def channel(self) -> ChannelRealization:
        g = 1 / math.sqrt(len(self.taps))
        return ChannelRealization.from_paths([(g, l, k) for l, k in self.taps])


def from_dict(cls, data):
    """Build a (possibly nested) config dataclass from plain dicts; unknown keys are errors."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ParameterError(f"{cls.__name__} expects a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - names
    if extra:
        raise ParameterError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    defaults = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in data.items():
        t = hints[k]
        if dataclasses.is_dataclass(t) and isinstance(v, dict):
            # a partial mapping overlays the field's own default
            f = defaults[k]
            base = f.default_factory() if f.default_factory is not dataclasses.MISSING else t()
            v = from_dict(t, _merge(config_dict(base), v))
        elif isinstance(v, list):
            v = tuple(tuple(e) if isinstance(e, list) else e for e in v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ParameterError(str(e)) from e


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` strings; values are parsed as YAML scalars or lists."""
    import yaml

    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ParameterError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ParameterError(f"override {key!r} descends into a scalar")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


# execution settings that cannot change any result; kept out of hashes and artifacts
EXECUTION_KEYS = frozenset({"workers"})


def _strip(d):
    if isinstance(d, dict):
        return {k: _strip(v) for k, v in d.items() if k not in EXECUTION_KEYS}
    return d


def config_dict(cfg) -> dict:
    return _strip(json.loads(json.dumps(asdict(cfg))))


def config_hash(cfg) -> str:
    blob = json.dumps(config_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:10]


def make_run_dir(root, cfg, now=None) -> Path:
    now = now or datetime.now(timezone.utc)
    d = Path(root) / f"{now.strftime('%Y%m%dT%H%M%SZ')}-{config_hash(cfg)}"
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- BER simulation ------------------------------------------------------------


@dataclass
class BERCurve:
    snr_db: np.ndarray
    convention: str
    ber: np.ndarray
    frames: np.ndarray
    frame_errors: np.ndarray
    bit_errors: np.ndarray
    bits: np.ndarray
    ci95: np.ndarray
    label: str = ""


def ci_halfwidth(errors, bits):
    """Normal-approximation 95% half-width for a bit error rate."""
    p = np.asarray(errors, float) / np.asarray(bits, float)
    return 1.96 * np.sqrt(p * (1 - p) / np.asarray(bits, float))


def check_feasible(cfg: SimConfig):
    c = make_constellation(cfg.constellation)
    if cfg.detector.name == "ml":
        size = c.order ** cfg.dims.size
        if size > ML_CAP:
            raise InfeasibleError(f"ML detection at {cfg.M}x{cfg.N} with {c.name}", size, ML_CAP)
    cfg.channel.draw(cfg.dims, np.random.default_rng(0)).check_dims(cfg.dims)


def _block_rng(cfg: SimConfig, snr_index: int, block: int):
    return np.random.default_rng(np.random.SeedSequence([cfg.master_seed, snr_index, block]))


def _dense_stack(chs, dims, spec: ChannelSpec):
    n = dims.size
    if spec.modulation == "otfs" and spec.model == "exact":
        return np.array([spec.build(ch, dims).dense() for ch in chs])
    Hd = np.zeros((len(chs), n, n), dtype=complex)
    for b, ch in enumerate(chs):
        for p in ch.paths:
            r, c, v = _shift_entries(p.delay_tap, p.doppler_tap, dims, spec.model)
            g = p.gain
            if spec.modulation == "otfs":
                g = g * np.exp(-2j * np.pi * p.delay_tap * p.doppler_tap / n)
            Hd[b, r, c] += g * v
    return Hd


def _draw_block(cfg: SimConfig, snr_index: int, block: int, frames: int):
    """Channels, transmitted indices and received vectors for one block."""
    rng = _block_rng(cfg, snr_index, block)
    dims = cfg.dims
    c = make_constellation(cfg.constellation)
    nv = float(cfg.noise_vars()[snr_index])
    chs = [cfg.channel.draw(dims, rng) for _ in range(frames)]
    Hd = _dense_stack(chs, dims, cfg.channel)
    idx = rng.integers(0, c.order, (frames, dims.size))
    x = c.points[idx]
    z = rng.standard_normal((frames, dims.size, 2)) @ np.array([1.0, 1j]) * math.sqrt(nv / 2)
    Y = np.einsum("bij,bj->bi", Hd, x) + z
    return chs, Hd, idx, Y, nv, c


def _detect(cfg: SimConfig, chs, Hd, Y, nv, c, T=None, record=False):
    det = cfg.detector
    T = det.T if T is None else T
    if det.name == "ml":
        return ml_batch(Y, Hd, c.points)
    if det.name == "lmmse":
        return c.nearest(np.array([lmmse_estimate(y, H, nv) for y, H in zip(Y, Hd)]))
    if det.name == "oamp":
        out = oamp_batch(Y, Hd, c.points, nv, T, det.mode, det.constants, record=record)
        return out["path"] if record else out["idx"]
    res = []
    for ch, y in zip(chs, Y):
        H = cfg.channel.build(ch, cfg.dims)
        cols, vals = H.neighbors()
        res.append(mpa_frame(y, cols, vals, c.points, nv, T, det.damping, record=record))
    if record:
        return np.stack([r[1] for r in res], axis=1)
    return np.array(res)


def _count(c, idx, hat):
    bit_err = c.bit_distance_table()[idx, hat].sum(axis=-1)
    return int(np.count_nonzero(bit_err)), int(bit_err.sum())


def simulate_block(cfg: SimConfig, snr_index: int, block: int, frames: int):
    """Frame and bit error counts for one seeded block."""
    chs, Hd, idx, Y, nv, c = _draw_block(cfg, snr_index, block, frames)
    hat = _detect(cfg, chs, Hd, Y, nv, c)
    return _count(c, idx, hat)


def _block_sizes(cfg: SimConfig):
    done = 0
    while done < cfg.max_frames:
        n = min(cfg.block_frames, cfg.max_frames - done)
        yield n
        done += n


def _in_order(fn, args, workers, pool):
    """Yield ``fn(*a)`` for each ``a`` in order, evaluating waves of ``workers`` calls.

    Consumers may stop early; at most one wave of extra work is wasted, and
    the yielded sequence never depends on the worker count.
    """
    args = list(args)
    step = max(workers, 1)
    for b in range(0, len(args), step):
        wave = args[b : b + step]
        if pool is None:
            yield from (fn(*a) for a in wave)
        else:
            yield from list(pool.map(fn, *zip(*wave)))


def _pool(workers):
    return ProcessPoolExecutor(workers) if workers > 1 else None


def _sweep_point(cfg: SimConfig, s: int, pool):
    frames = fe = be = 0
    sizes = list(_block_sizes(cfg))
    args = [(cfg, s, i, n) for i, n in enumerate(sizes)]
    for n, (f_err, b_err) in zip(sizes, _in_order(simulate_block, args, cfg.workers, pool)):
        frames += n
        fe += f_err
        be += b_err
        if fe >= cfg.min_frame_errors and frames >= cfg.min_frames:
            break
    return frames, fe, be


def run_ber_sweep(cfg: SimConfig, label="") -> BERCurve:
    """BER versus SNR with per-frame channel redraw (block fading)."""
    check_feasible(cfg)
    bits_per_frame = cfg.dims.size * make_constellation(cfg.constellation).bits_per_symbol
    out = []
    pool = _pool(cfg.workers)
    try:
        for s in range(len(cfg.snr_db)):
            out.append(_sweep_point(cfg, s, pool))
    finally:
        if pool is not None:
            pool.shutdown()
    frames, fe, be = (np.array(v) for v in zip(*out))
    bits = frames * bits_per_frame
    ber = be / bits
    return BERCurve(np.array(cfg.snr_db), cfg.snr_convention, ber, frames, fe, be, bits, ci_halfwidth(be, bits), label)


def fit_slope(snr_db, ber, last=3):
    """Least-squares slope of log10(BER) against SNR in decades (snr_db / 10)."""
    snr_db = np.asarray(snr_db, float)[-last:]
    ber = np.asarray(ber, float)[-last:]
    if len(ber) < 2 or np.any(ber <= 0):
        return float("nan")
    return float(np.polyfit(snr_db / 10, np.log10(ber), 1)[0])


def lower_bound_for(cfg: SimConfig, taps=None, model=None, mode="auto"):
    """Rank-one census and lower bound curves on the config's Es/N0 grid."""
    c = make_constellation(cfg.constellation)
    dims = cfg.dims
    taps = taps or cfg.channel.taps
    if not taps:
        raise ParameterError("the rank-one lower bound needs a fixed tap set")
    ch = ChannelRealization.from_paths([(1 / math.sqrt(len(taps)), l, k) for l, k in taps])
    kappa = analysis.rank1_census(c, dims, ch, model or cfg.channel.model, mode)
    gamma = 10 ** (cfg.esn0_db() / 10)
    exact, asym = analysis.rank1_lower_bound(kappa.kappa, dims, c, gamma)
    return kappa, exact, asym


@dataclass
class FrameSizeResult:
    curves: list
    kappas: list
    lower_exact: list
    lower_asymptotic: list
    slopes: list
    bound_slopes: list


def run_frame_size_study(cfg_list, kappa_mode="family", bound_model="ideal") -> FrameSizeResult:
    """BER curves with each frame size's rank-one lower bound and high-SNR slopes.

    The census uses the same search mode for every size so the bounds are
    comparable; ``bound_model`` picks the DD relation the census runs under.
    """
    res = FrameSizeResult([], [], [], [], [], [])
    for cfg in cfg_list:
        curve = run_ber_sweep(cfg, label=f"{cfg.M}x{cfg.N}")
        kappa, ex, asym = lower_bound_for(cfg, model=bound_model, mode=kappa_mode)
        res.curves.append(curve)
        res.kappas.append(kappa)
        res.lower_exact.append(ex)
        res.lower_asymptotic.append(asym)
        res.slopes.append(fit_slope(curve.snr_db, curve.ber))
        res.bound_slopes.append(fit_slope(curve.snr_db, ex))
    return res


@dataclass
class IterationTable:
    T_grid: np.ndarray
    ber: dict
    bit_errors: dict
    bits: int
    frames: int
    summary: dict


def iteration_block(cfg: IterationConfig, block: int, frames: int):
    """Per-T bit and frame error counts of every detector on one seeded block."""
    sim = cfg.sim
    tsel = np.array(cfg.T_grid) - 1
    c = make_constellation(sim.constellation)
    chs, Hd, idx, Y, nv, _ = _draw_block(sim, 0, block, frames)
    bit_err, frame_err = {}, {}
    for d in cfg.detectors:
        dcfg = dataclasses.replace(sim, detector=dataclasses.replace(sim.detector, name=d))
        path = _detect(dcfg, chs, Hd, Y, nv, c, T=max(cfg.T_grid), record=True)[tsel]
        be = c.bit_distance_table()[idx[None], path].sum(axis=-1)
        bit_err[d] = be.sum(axis=1)
        frame_err[d] = np.count_nonzero(be, axis=1)
    return bit_err, frame_err


def run_iteration_study(cfg: IterationConfig) -> IterationTable:
    """BER against iteration count at one SNR, with common random numbers.

    Each detector runs once per block with the largest ``T`` and records its
    hard decisions after every iteration, so all ``T`` share the same
    channels, symbols and noise.
    """
    sim = cfg.sim
    if len(sim.snr_db) != 1:
        raise ParameterError("the iteration study runs at a single SNR point")
    tsel = np.array(cfg.T_grid) - 1
    c = make_constellation(sim.constellation)
    errs = {d: np.zeros(len(tsel), dtype=np.int64) for d in cfg.detectors}
    ferr = {d: np.zeros(len(tsel), dtype=np.int64) for d in cfg.detectors}
    frames = 0
    sizes = list(_block_sizes(sim))
    args = [(cfg, i, n) for i, n in enumerate(sizes)]
    pool = _pool(sim.workers)
    try:
        for n, (be, fe) in zip(sizes, _in_order(iteration_block, args, sim.workers, pool)):
            for d in cfg.detectors:
                errs[d] += be[d]
                ferr[d] += fe[d]
            frames += n
            if frames >= sim.min_frames and all(f.min() >= sim.min_frame_errors for f in ferr.values()):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    bits = frames * sim.dims.size * c.bits_per_symbol
    ber = {d: errs[d] / bits for d in cfg.detectors}
    summary = {}
    T = np.array(cfg.T_grid)
    for d in cfg.detectors:
        best = ber[d].min()
        # first T within 10% of the best BER reached on the grid
        within = np.flatnonzero(ber[d] <= 1.1 * best)
        rises = np.diff(ber[d])
        summary[d] = {
            "plateau_T": int(T[within[0]]),
            "best_ber": float(best),
            "nonincreasing": bool(np.all(rises <= 0)),
            "max_rise": float(max(rises.max(initial=0.0), 0.0)),
        }
    if set(cfg.detectors) == {"oamp", "mpa"}:
        a, m = ber["oamp"], ber["mpa"]
        cross = np.flatnonzero(a <= m)
        summary["oamp_beats_mpa_from_T"] = int(T[cross[0]]) if len(cross) else None
    return IterationTable(T, ber, errs, int(bits), frames, summary)


# -- spectra -------------------------------------------------------------------


@dataclass
class PsdResult:
    freqs: np.ndarray
    oddm_db: np.ndarray
    otfs_db: np.ndarray
    band_edge_hz: float
    levels: dict


def psd_frame(cfg: PsdConfig, frame: int, cp: int):
    """ODDM (with CP) and OTFS waveforms of one seeded random frame."""
    dims = FrameDims(cfg.M, cfg.N)
    c = make_constellation(cfg.constellation)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0xD5D, frame]))
    x = DDFrame.from_vector(c.points[rng.integers(0, c.order, dims.size)], dims, c)
    return synthesize_oddm(x, cfg.pulse, with_cp=True), synthesize_otfs(x, cfg.pulse, cp_len=cp)


def run_psd_study(cfg: PsdConfig) -> PsdResult:
    """PSDs of long random ODDM (with CP) and OTFS streams at the same dims."""
    dims = FrameDims(cfg.M, cfg.N)
    pulse = cfg.pulse
    T = dims.M * pulse.oversampling
    cp = default_otfs_cp(pulse, dims) if cfg.otfs_cp is None else cfg.otfs_cp
    pool = _pool(cfg.workers)
    try:
        pairs = list(_in_order(psd_frame, [(cfg, i, cp) for i in range(cfg.frames)], cfg.workers, pool))
    finally:
        if pool is not None:
            pool.shutdown()
    w_oddm, w_otfs = zip(*pairs)
    s_oddm = overlap_add(w_oddm, (dims.N + 1) * T)
    s_otfs = overlap_add(w_otfs, dims.N * (T + cp))
    edge = dims.M * pulse.subcarrier_spacing / 2
    band = (-0.8 * edge, 0.8 * edge)
    f1, p1 = estimate_psd(s_oddm, cfg.segment_len, cfg.overlap, ref_band=band)
    f2, p2 = estimate_psd(s_otfs, cfg.segment_len, cfg.overlap, ref_band=band)
    if not np.array_equal(f1, f2):
        raise ParameterError("PSD grids differ between modulations")
    levels = {}
    for o in cfg.offsets:
        lo, lt = level_at(f1, p1, o * edge), level_at(f2, p2, o * edge)
        levels[f"{o:g}"] = {"oddm_db": lo, "otfs_db": lt, "delta_db": lt - lo}
    return PsdResult(f1, p1, p2, edge, levels)


# -- artifacts -----------------------------------------------------------------


def _config_line(cfg, extra=None):
    meta = {"config": config_dict(cfg), **(extra or {})}
    return "# config: " + json.dumps(meta, sort_keys=True) + "\n"


def write_curve_csv(curve: BERCurve, path, cfg, extra=None):
    path = Path(path)
    with path.open("w") as f:
        f.write(_config_line(cfg, extra))
        f.write("snr_db,convention,ber,ci95,frames,frame_errors,bit_errors,bits\n")
        for i in range(len(curve.snr_db)):
            f.write(
                f"{float(curve.snr_db[i])!r},{curve.convention},{float(curve.ber[i])!r},{float(curve.ci95[i])!r},"
                f"{int(curve.frames[i])},{int(curve.frame_errors[i])},{int(curve.bit_errors[i])},{int(curve.bits[i])}\n"
            )
    return path


def read_curve_csv(path) -> BERCurve:
    rows = [r.split(",") for r in Path(path).read_text().splitlines() if r and not r.startswith("#")][1:]
    col = lambda j, t: np.array([t(r[j]) for r in rows])
    return BERCurve(
        col(0, float), rows[0][1] if rows else "EsN0", col(2, float), col(4, int), col(5, int), col(6, int), col(7, int), col(3, float)
    )


def write_sidecar(path, cfg, payload=None):
    path = Path(path)
    body = {"config": config_dict(cfg), "config_hash": config_hash(cfg), **(payload or {})}
    path.write_text(json.dumps(body, sort_keys=True, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if dataclasses.is_dataclass(v):
        return asdict(v)
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def write_iteration_csv(table: IterationTable, path, cfg):
    path = Path(path)
    dets = list(table.ber)
    with path.open("w") as f:
        f.write(_config_line(cfg))
        f.write("T," + ",".join(f"ber_{d},bit_errors_{d}" for d in dets) + ",bits\n")
        for i, T in enumerate(table.T_grid):
            vals = ",".join(f"{float(table.ber[d][i])!r},{int(table.bit_errors[d][i])}" for d in dets)
            f.write(f"{int(T)},{vals},{table.bits}\n")
    return path


def write_psd_pair(res: PsdResult, directory, cfg):
    directory = Path(directory)
    note = "config: " + json.dumps(config_dict(cfg), sort_keys=True)
    a = write_psd_csv(res.freqs, res.oddm_db, directory / "psd_oddm.csv", note)
    b = write_psd_csv(res.freqs, res.otfs_db, directory / "psd_otfs.csv", note)
    return a, b
