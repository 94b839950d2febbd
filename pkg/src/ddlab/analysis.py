"""Pairwise-error spectra, diversity order and BER bounds for ML detection.

The difference matrix of a pair is ``Delta = Phi(x) - Phi(x_hat) = Phi(x - x_hat)``,
so every quantity here depends on the pair only through the difference
vector ``d``. Sums over ordered pairs are therefore carried out over
difference classes: for a symbol-wise difference ``delta`` let ``n(delta)``
count the constellation points ``a`` with ``a - delta`` also a point. A class
``d`` then holds ``prod_i n(d_i)`` ordered pairs.

By default the analysis uses the ``"ideal"`` (pure shift) DD relation,
where a constant difference ``c * 1`` gives ``Delta = c * [1 ... 1]`` of rank
one. Pass ``model="exact"`` to analyse the matched-filter relation instead.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .channel import ChannelRealization
from .constellation import Constellation, DDFrame, FrameDims
from .effective import _check_model, build_phi_vector
from .errors import DomainError, InfeasibleError, ParameterError

RANK_TOL = 1e-9
CLASS_CAP = 2**20
DEFAULT_SAMPLES = 20000
FORMS = ("limit", "p_scaled")


@dataclass(frozen=True)
class PairSpectrum:
    singular_values: np.ndarray
    rank: int
    bit_distance: int | None = None
    tol: float = RANK_TOL


def _rank(s, tol=RANK_TOL):
    s = np.asarray(s)
    if s.shape[-1] == 0:
        return np.zeros(s.shape[:-1], dtype=int)
    top = s[..., :1]
    return np.sum((s > tol * top) & (top > 0), axis=-1)


def difference_spectra(d, ch: ChannelRealization, dims: FrameDims, model="ideal"):
    """Singular values (descending) of ``Phi(d)`` for a batch of differences ``d`` (..., MN)."""
    _check_model(model)
    ch.check_dims(dims)
    return np.linalg.svd(build_phi_vector(d, ch, dims, model), compute_uv=False)


def pair_spectrum(x: DDFrame, x_hat: DDFrame, ch: ChannelRealization, model="ideal", tol=RANK_TOL) -> PairSpectrum:
    """Spectrum of the MN x P difference matrix of a pair of frames."""
    if x.dims != x_hat.dims:
        raise DomainError("frames have different dimensions")
    d = x.vector - x_hat.vector
    if not np.any(d):
        raise DomainError("pair spectrum needs two distinct frames")
    s = difference_spectra(d, ch, x.dims, model)
    db = None
    c = x.constellation or x_hat.constellation
    if c is not None:
        table = c.bit_distance_table()
        db = int(table[c.nearest(x.vector), c.nearest(x_hat.vector)].sum())
    return PairSpectrum(s, int(_rank(s, tol)), db, tol)


def pep_upper(spectrum: PairSpectrum, gamma, P: int):
    """Rayleigh-averaged Chernoff bound ``prod_p 1 / (1 + gamma lam_p^2 / 4P)``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ParameterError("gamma must be positive")
    lam2 = np.asarray(spectrum.singular_values)[: spectrum.rank] ** 2
    out = np.prod(1.0 / (1.0 + np.multiply.outer(gamma, lam2) / (4 * P)), axis=-1)
    return float(out) if out.ndim == 0 else out


def pep_high_snr(spectrum: PairSpectrum, gamma, P: int, form="limit"):
    """High-SNR simplification of :func:`pep_upper`.

    ``"limit"`` is ``(prod lam^2)^-1 (gamma / 4P)^-r``, the large-gamma limit of the
    product bound. ``"p_scaled"`` is ``(prod lam^2 / P)^-1 (gamma / 4)^-r``, which
    is smaller by a factor ``P^(r-1)``.
    """
    if form not in FORMS:
        raise ParameterError(f"unknown form {form!r}; expected one of {FORMS}")
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ParameterError("gamma must be positive")
    r = spectrum.rank
    prod = float(np.prod(np.asarray(spectrum.singular_values)[:r] ** 2))
    if form == "limit":
        out = (gamma / (4 * P)) ** (-r) / prod
    else:
        out = P * (gamma / 4) ** (-r) / prod
    return float(out) if out.ndim == 0 else out


# -- difference classes ---------------------------------------------------


@dataclass(frozen=True)
class DifferenceAlphabet:
    """Symbol-wise differences of a constellation with pair counts and bit sums."""

    values: np.ndarray  # index 0 is the zero difference
    count: np.ndarray  # n(delta)
    bits: np.ndarray  # sum of Hamming distances over the n(delta) pairs

    @classmethod
    def of(cls, c: Constellation, decimals=9):
        diff = c.points[:, None] - c.points[None, :]
        ham = c.bit_distance_table()
        key = np.round(diff.real, decimals) + 1j * np.round(diff.imag, decimals)
        uniq, inv = np.unique(key.ravel(), return_inverse=True)
        count = np.bincount(inv, minlength=len(uniq))
        bits = np.bincount(inv, weights=ham.ravel(), minlength=len(uniq))
        zero = int(np.argmin(np.abs(uniq)))
        order = np.r_[zero, np.delete(np.arange(len(uniq)), zero)]
        # exact differences rather than the rounded keys
        exact = np.array([diff.ravel()[np.flatnonzero(inv == u)[0]] for u in order])
        return cls(exact, count[order], bits[order])


@dataclass(frozen=True)
class DifferenceCensus:
    """Difference classes with spectra and union-bound weights.

    ``pairs[c]`` is the number of ordered pairs in class ``c`` (a float
    estimate in sampled mode); ``bit_weight[c]`` is the class's contribution
    ``sum d_b / (MN log2 Q Q^MN)`` to the union sum before the PEP factor.
    """

    classes: np.ndarray  # (C, MN) indices into alphabet.values
    spectra: np.ndarray  # (C, P)
    ranks: np.ndarray
    pairs: np.ndarray
    bit_weight: np.ndarray
    mode: str
    alphabet: DifferenceAlphabet
    tol: float = RANK_TOL
    samples: int | None = None

    def differences(self):
        return self.alphabet.values[self.classes]


def _class_weights(cls_idx, alpha: DifferenceAlphabet, c: Constellation, n):
    cnt = alpha.count[cls_idx].astype(float)
    bits = alpha.bits[cls_idx].astype(float)
    pairs = np.prod(cnt, axis=1)
    # sum_i bits_i prod_{j != i} cnt_j, written without dividing by zero
    bitsum = np.zeros(len(cls_idx))
    for i in range(n):
        others = np.prod(np.delete(cnt, i, axis=1), axis=1)
        bitsum += bits[:, i] * others
    scale = n * c.bits_per_symbol * float(c.order) ** n
    return pairs, bitsum / scale


def _spectra_in_chunks(d, ch, dims, model, chunk=65536):
    out = np.empty((len(d), ch.P))
    for s in range(0, len(d), chunk):
        out[s : s + chunk] = difference_spectra(d[s : s + chunk], ch, dims, model)
    return out


def difference_census(
    c: Constellation,
    dims: FrameDims,
    ch: ChannelRealization,
    model="ideal",
    mode="auto",
    cap=CLASS_CAP,
    samples=DEFAULT_SAMPLES,
    seed=0,
    tol=RANK_TOL,
) -> DifferenceCensus:
    """Classify ordered pairs by difference vector.

    ``mode``: ``"full"`` enumerates every nonzero difference class (error if
    more than ``cap``); ``"family"`` keeps only constant differences and
    single-symbol differences; ``"sampled"`` draws ``samples`` uniform
    ordered pairs; ``"auto"`` is full when within the cap, else family.
    """
    if mode not in ("auto", "full", "family", "sampled"):
        raise ParameterError(f"unknown census mode {mode!r}")
    _check_model(model)
    ch.check_dims(dims)
    alpha = DifferenceAlphabet.of(c)
    n, D = dims.size, len(alpha.values)
    n_classes = D**n - 1
    if mode == "auto":
        mode = "full" if n_classes <= cap else "family"
    if mode == "full":
        if n_classes > cap:
            raise InfeasibleError("full pair enumeration", n_classes, cap)
        flat = np.arange(1, D**n)
        cls_idx = np.stack(np.unravel_index(flat, (D,) * n), axis=1)[:, ::-1]
        pairs, weight = _class_weights(cls_idx, alpha, c, n)
    elif mode == "family":
        nz = np.arange(1, D)
        const = np.repeat(nz[:, None], n, axis=1)
        single = np.zeros(((D - 1) * n, n), dtype=int) if n > 1 else np.zeros((0, n), dtype=int)
        if n > 1:
            rows = np.arange(len(single))
            single[rows, rows % n] = np.repeat(nz, n)
        cls_idx = np.concatenate([const, single])
        pairs, weight = _class_weights(cls_idx, alpha, c, n)
    else:
        rng = np.random.default_rng(seed)
        Q = c.order
        a = rng.integers(0, Q, (samples, n))
        b = rng.integers(0, Q, (samples, n))
        same = np.all(a == b, axis=1)
        while np.any(same):
            b[same] = rng.integers(0, Q, (int(same.sum()), n))
            same = np.all(a == b, axis=1)
        d = c.points[a] - c.points[b]
        key = np.abs(d[..., None] - alpha.values[None, None, :])
        cls_idx = np.argmin(key, axis=-1)
        db = c.bit_distance_table()[a, b].sum(axis=1)
        total = float(Q) ** n * (float(Q) ** n - 1)
        pairs = np.full(samples, total / samples)
        weight = db / (n * c.bits_per_symbol) * (float(Q) ** n - 1) / samples
    spectra = _spectra_in_chunks(alpha.values[cls_idx], ch, dims, model)
    ranks = _rank(spectra, tol)
    return DifferenceCensus(
        cls_idx, spectra, ranks, pairs, weight, mode, alpha, tol, samples if mode == "sampled" else None
    )


def _witness(census: DifferenceCensus, which: int, c: Constellation, dims: FrameDims):
    d = census.differences()[which]
    x = np.empty(dims.size, dtype=complex)
    for i, di in enumerate(d):
        ok = np.min(np.abs(c.points[:, None] - di - c.points[None, :]), axis=1) < 1e-9
        x[i] = c.points[np.flatnonzero(ok)[0]]
    return DDFrame.from_vector(x, dims, c), DDFrame.from_vector(x - d, dims, c)


class Diversity(NamedTuple):
    rho: int
    witness: tuple
    mode: str


def diversity_order(c: Constellation, dims: FrameDims, ch: ChannelRealization, model="ideal", mode="auto", cap=CLASS_CAP):
    """Minimum rank over difference matrices, with a witness pair.

    Among minimum-rank classes a constant difference is preferred as witness.
    """
    if mode == "sampled":
        raise ParameterError("diversity order needs full or family search")
    census = difference_census(c, dims, ch, model, mode, cap)
    rho = int(census.ranks.min())
    hits = np.flatnonzero(census.ranks == rho)
    cls = census.classes[hits]
    const = hits[np.all(cls == cls[:, :1], axis=1)]
    which = int(const[0] if len(const) else hits[0])
    return Diversity(rho, _witness(census, which, c, dims), census.mode)


class Kappa(NamedTuple):
    kappa: int
    mode: str
    tol: float


def rank1_census(c: Constellation, dims: FrameDims, ch: ChannelRealization, model="ideal", mode="auto", cap=CLASS_CAP):
    """Number of ordered pairs whose difference matrix has rank one.

    In family mode this counts only constant and single-symbol differences,
    so it is a lower bound on the full census.
    """
    if mode == "sampled":
        raise ParameterError("the rank-one census is an exact count")
    census = difference_census(c, dims, ch, model, mode, cap)
    k = int(round(float(np.sum(census.pairs[census.ranks == 1]))))
    return Kappa(k, census.mode, census.tol)


def union_bound_terms(census: DifferenceCensus, gamma, P: int, form="limit"):
    """Per-class union-bound contributions, shape (len(gamma), C)."""
    if form not in FORMS + ("product",):
        raise ParameterError(f"unknown bound form {form!r}")
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(gamma <= 0):
        raise ParameterError("gamma must be positive")
    r = census.ranks
    lam2 = census.spectra**2
    mask = np.arange(lam2.shape[1])[None, :] < r[:, None]
    if form == "product":
        f = np.where(mask[None], 1.0 / (1.0 + gamma[:, None, None] * lam2[None] / (4 * P)), 1.0)
        pep = np.prod(f, axis=-1)
    else:
        logprod = np.sum(np.where(mask, np.log(np.where(mask, lam2, 1.0)), 0.0), axis=1)
        g = gamma[:, None] / (4 * P) if form == "limit" else gamma[:, None] / 4
        pep = np.exp(-r[None, :] * np.log(g) - logprod[None, :])
        if form == "p_scaled":
            pep = P * pep
    return census.bit_weight[None, :] * pep


def bep_union_bound(census: DifferenceCensus, gamma, P: int, form="limit", clip=0.5):
    """Union bound on the average bit error probability, clipped at ``clip``."""
    total = union_bound_terms(census, gamma, P, form).sum(axis=1)
    return np.minimum(total, clip)


def rank1_lower_bound(kappa: int, dims: FrameDims, c: Constellation, gamma):
    """Diversity-one lower bound: ``(exact, asymptotic)`` arrays over ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ParameterError("gamma must be positive")
    MN = dims.size
    frac = kappa / float(c.order) ** MN
    exact = frac * 0.5 * (1 - np.sqrt(MN / (MN + 1.0 / gamma)))
    asym = frac / (4 * gamma * MN)
    return exact, asym


# -- report ----------------------------------------------------------------


@dataclass
class BoundReport:
    snr_db: np.ndarray
    union_upper: np.ndarray
    rank1_lower_exact: np.ndarray
    rank1_lower_asymptotic: np.ndarray
    kappa: int
    diversity_order: int
    meta: dict = field(default_factory=dict)

    @property
    def snr_grid(self):
        return 10 ** (np.asarray(self.snr_db) / 10)


def bound_report(
    c: Constellation,
    dims: FrameDims,
    ch: ChannelRealization,
    snr_db,
    form="limit",
    model="ideal",
    mode="auto",
    cap=CLASS_CAP,
    samples=DEFAULT_SAMPLES,
    seed=0,
) -> BoundReport:
    """Union upper bound and rank-one lower bounds over an Es/N0 grid (dB).

    The union sum needs full enumeration or sampling; family mode is refused
    for it because a partial class list does not bound the sum. The rank-one
    census falls back to family search when full enumeration is infeasible.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    gamma = 10 ** (snr_db / 10)
    if mode == "family":
        raise ParameterError("the union bound needs full or sampled enumeration")
    if mode == "auto":
        n_classes = len(DifferenceAlphabet.of(c).values) ** dims.size - 1
        mode = "full" if n_classes <= cap else "sampled"
    census = difference_census(c, dims, ch, model, mode, cap, samples, seed)
    upper = bep_union_bound(census, gamma, ch.P, form)
    if census.mode == "full":
        kappa, kmode = int(round(float(np.sum(census.pairs[census.ranks == 1])))), "full"
        rho = int(census.ranks.min())
    else:
        kappa, kmode = rank1_census(c, dims, ch, model, "family")[:2]
        rho = diversity_order(c, dims, ch, model, "family").rho
    exact, asym = rank1_lower_bound(kappa, dims, c, gamma)
    meta = {
        "M": dims.M,
        "N": dims.N,
        "P": ch.P,
        "constellation": c.name,
        "labeling": "gray" if "QAM" in c.name.upper() else "natural",
        "form": form,
        "model": model,
        "enumeration_mode": census.mode,
        "kappa_mode": kmode,
        "rank_tol": census.tol,
        "union_clip": 0.5,
        "lower_clip": 0.5,
        "samples": census.samples,
        "seed": seed if census.mode == "sampled" else None,
        "channel": json.loads(ch.to_text()),
    }
    return BoundReport(snr_db, upper, np.minimum(exact, 0.5), np.minimum(asym, 0.5), kappa, rho, meta)


def write_bound_report(report: BoundReport, path, extra_meta=None) -> tuple[Path, Path]:
    """CSV of the curves plus a JSON sidecar holding kappa, rho and settings."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    meta = {"kappa": report.kappa, "diversity_order": report.diversity_order, **report.meta, **(extra_meta or {})}
    with path.open("w", newline="") as f:
        f.write("# config: " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(f)
        w.writerow(["gamma_dB", "upper", "lower_exact", "lower_asymptotic"])
        for row in zip(report.snr_db, report.union_upper, report.rank1_lower_exact, report.rank1_lower_asymptotic):
            w.writerow([repr(float(v)) for v in row])
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path, sidecar


def read_bound_report(path) -> BoundReport:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    rows = [r for r in path.read_text().splitlines() if r and not r.startswith("#")]
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    kappa = meta.pop("kappa")
    rho = meta.pop("diversity_order")
    return BoundReport(data[:, 0], data[:, 1], data[:, 2], data[:, 3], kappa, rho, meta)


# -- OTFS alternate form ---------------------------------------------------


def doppler_major_permutation(dims: FrameDims) -> np.ndarray:
    """``perm[i]`` is the delay-major index ``m + M n`` of Doppler-inner index ``i = n + N m``."""
    i = np.arange(dims.size)
    m, n = i // dims.N, i % dims.N
    return m + dims.M * n


def otfs_alternate_form(x: DDFrame, ch: ChannelRealization, model="exact"):
    """Write the noise-free OTFS output as ``h' X`` (a 1 x MN row).

    ``h'_p = h_p exp(-j2pi l_p k_p / MN)`` and row ``p`` of ``X`` holds the
    input shifted by ``(l_p, k_p)`` on the Doppler-inner grid ``i = k + N l``.
    Under ``"ideal"`` the rows are pure shifts; ``"exact"`` keeps the residual
    phase ``exp(j2pi k_p l / MN)`` and the wrap phase of delays below ``l_p``.
    """
    _check_model(model)
    dims = x.dims
    ch.check_dims(dims)
    M, N, MN = dims.M, dims.N, dims.size
    g = x.symbols
    lgrid, kgrid = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")  # output delay, Doppler
    h_prime = ch.gains * np.exp(-2j * np.pi * ch.delays * ch.dopplers / MN)
    X = np.empty((ch.P, MN), dtype=complex)
    for p, path in enumerate(ch.paths):
        lp, kp = path.delay_tap, path.doppler_tap
        src_k = (kgrid - kp) % N
        row = g[(lgrid - lp) % M, src_k]
        if model == "exact":
            row = row * np.exp(2j * np.pi * kp * lgrid / MN)
            wrap = lgrid < lp
            row[wrap] *= np.exp(-2j * np.pi * src_k[wrap] / N)
        X[p] = row.ravel(order="C")  # C order over (l, k) gives i = k + N l
    return h_prime, X
