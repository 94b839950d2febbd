"""Effective DD-domain channel matrices.

Two input-output relations are supported:

``"exact"``
    The matched-filter ODDM relation. Path ``p`` moves symbol
    ``x[[m-l]_M, [n-k]_N]`` to ``y[m, n]`` with phase
    ``exp(j2pi k (m-l)/MN)``, times ``exp(-j2pi [n-k]_N / N)`` when the delay
    wraps (``m < l``).
``"ideal"``
    Every path is a pure cyclic DD shift with unit weight. This is the
    relation under which the pairwise-error analysis treats shifted symbol
    copies (and the alternate OTFS form of :mod:`ddlab.analysis`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .channel import ChannelRealization
from .constellation import DDFrame, FrameDims
from .errors import DimensionError, ParameterError

MODELS = ("exact", "ideal")


def _check_model(model):
    if model not in MODELS:
        raise ParameterError(f"unknown DD relation {model!r}; expected one of {MODELS}")


@dataclass(frozen=True)
class EffectiveChannel:
    dims: FrameDims
    matrix: sp.csr_matrix
    model: str = "exact"

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def nnz_per_row(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def neighbors(self):
        """Row-wise ``(cols, vals)`` arrays padded to the widest row.

        Padding entries point at column 0 with value 0.
        """
        H = self.matrix
        width = int(self.nnz_per_row.max())
        n = H.shape[0]
        cols = np.zeros((n, width), dtype=int)
        vals = np.zeros((n, width), dtype=complex)
        for r in range(n):
            lo, hi = H.indptr[r], H.indptr[r + 1]
            cols[r, : hi - lo] = H.indices[lo:hi]
            vals[r, : hi - lo] = H.data[lo:hi]
        return cols, vals


def _shift_entries(l, k, dims: FrameDims, model="exact"):
    """Row, column and weight of the single nonzero per row of one path's shift matrix."""
    M, N = dims.M, dims.N
    m, n = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    m = m.ravel(order="F")
    n = n.ravel(order="F")
    rows = m + M * n
    src_n = (n - k) % N
    cols = (m - l) % M + M * src_n
    if model == "ideal":
        vals = np.ones(dims.size, dtype=complex)
    else:
        vals = np.exp(2j * np.pi * k * (m - l) / dims.size)
        wrap = m < l
        vals[wrap] *= np.exp(-2j * np.pi * src_n[wrap] / N)
    return rows, cols, vals


def build_xi(path_index: int, ch: ChannelRealization, dims: FrameDims, model="exact") -> sp.csr_matrix:
    """Unit-modulus weighted permutation for path ``path_index`` (0-based)."""
    _check_model(model)
    if not 0 <= path_index < ch.P:
        raise IndexError(f"path index {path_index} out of range for P={ch.P}")
    ch.check_dims(dims)
    p = ch.paths[path_index]
    rows, cols, vals = _shift_entries(p.delay_tap, p.doppler_tap, dims, model)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dims.size, dims.size))


def build_effective_channel_oddm(ch: ChannelRealization, dims: FrameDims, model="exact") -> EffectiveChannel:
    """Sparse ``H = sum_p h_p Xi_p`` relating the vectorized DD input and output."""
    _check_model(model)
    ch.check_dims(dims)
    rows, cols, vals = [], [], []
    for p in ch.paths:
        r, c, v = _shift_entries(p.delay_tap, p.doppler_tap, dims, model)
        rows.append(r)
        cols.append(c)
        vals.append(p.gain * v)
    n = dims.size
    H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    return EffectiveChannel(dims, H, model)


def build_phi(x, ch: ChannelRealization, model="exact") -> np.ndarray:
    """MN x P matrix whose column ``p`` is ``Xi_p x``, so that ``Phi(x) h = H x``."""
    _check_model(model)
    if isinstance(x, DDFrame):
        dims, xv = x.dims, x.vector
    else:
        raise DimensionError("build_phi expects a DDFrame")
    ch.check_dims(dims)
    phi = np.empty((dims.size, ch.P), dtype=complex)
    for j, p in enumerate(ch.paths):
        rows, cols, vals = _shift_entries(p.delay_tap, p.doppler_tap, dims, model)
        phi[rows, j] = vals * xv[cols]
    return phi


def build_phi_vector(xv, ch: ChannelRealization, dims: FrameDims, model="exact") -> np.ndarray:
    """Batched ``Phi`` for raw vectors: ``xv`` of shape (..., MN) gives (..., MN, P)."""
    xv = np.asarray(xv)
    out = np.empty(xv.shape + (ch.P,), dtype=complex)
    for j, p in enumerate(ch.paths):
        rows, cols, vals = _shift_entries(p.delay_tap, p.doppler_tap, dims, model)
        out[..., rows, j] = vals * xv[..., cols]
    return out


def dft_matrix(N: int) -> np.ndarray:
    """Unitary N-point DFT matrix."""
    i = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(i, i) / N) / np.sqrt(N)


def build_effective_channel_otfs(ch: ChannelRealization, dims: FrameDims, model="exact", tol=1e-12) -> EffectiveChannel:
    """OTFS effective channel from the time-delay model.

    ``exact`` evaluates ``(F_N kron I_M) H_TD (F_N^H kron I_M)`` with
    ``H_TD = sum_i h_i Pi^{l_i} Delta^{k_i}``, one (output delay, input delay)
    N x N block at a time, and keeps entries above ``tol``. The result
    coincides with the exact ODDM matrix. ``ideal`` gives pure DD shifts
    weighted by ``h_i exp(-j2pi l_i k_i / MN)``.
    """
    _check_model(model)
    ch.check_dims(dims)
    M, N, MN = dims.M, dims.N, dims.size
    if model == "ideal":
        rows, cols, vals = [], [], []
        for p in ch.paths:
            r, c, v = _shift_entries(p.delay_tap, p.doppler_tap, dims, "ideal")
            rows.append(r)
            cols.append(c)
            vals.append(p.gain * np.exp(-2j * np.pi * p.delay_tap * p.doppler_tap / MN) * v)
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(MN, MN))
        return EffectiveChannel(dims, H.tocsr(), model)

    F = dft_matrix(N)
    blocks = {}
    t_slot = np.arange(N)
    for p in ch.paths:
        l, k = p.delay_tap, p.doppler_tap
        for m in range(M):
            # time samples t = m + M n' read from t - l (mod MN)
            src = (m + M * t_slot - l) % MN
            src_m, src_slot = src % M, src // M
            B = np.zeros((N, N), dtype=complex)
            B[t_slot, src_slot] = p.gain * np.exp(2j * np.pi * k * src / MN)
            key = (m, int(src_m[0]))
            blocks[key] = blocks.get(key, 0) + F @ B @ F.conj().T
    thr = tol * np.abs(ch.gains).max()
    rows, cols, vals = [], [], []
    for (m, mp), blk in blocks.items():
        nr, nc = np.nonzero(np.abs(blk) > thr)
        rows.append(m + M * nr)
        cols.append(mp + M * nc)
        vals.append(blk[nr, nc])
    H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(MN, MN))
    return EffectiveChannel(dims, H.tocsr(), model)
