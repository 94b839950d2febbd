"""Symbol detectors for ``y = H x + z``: exhaustive ML, LMMSE, OAMP and Gaussian MPA.

The public ``detect_*`` functions take a single received vector and an
:class:`~ddlab.effective.EffectiveChannel`. The underscored ``*_batch``
kernels operate on stacks of frames and are what the Monte Carlo harness
calls.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constellation import Constellation, DDFrame
from .errors import InfeasibleError, NumericError, ParameterError

ML_CAP = 2**20
NU_FLOOR = 1e-10


@dataclass(frozen=True)
class OampState:
    x_hat: np.ndarray
    nu_sq: float
    tau_sq: float
    iteration: int
    residual_norm: float = float("nan")


@dataclass
class DetectorResult:
    symbols_hard: DDFrame
    bits_hard: np.ndarray
    iterations_used: int
    per_iteration_mse: Optional[np.ndarray] = None
    trace: list = field(default_factory=list)


def _result(idx, H, constellation, iterations, mse=None, trace=None):
    frame = DDFrame.from_vector(constellation.points[idx], H.dims, constellation)
    return DetectorResult(frame, constellation.indices_to_bits(idx), iterations, mse, trace or [])


def _dense(H):
    return H.dense() if hasattr(H, "dense") else np.asarray(H)


# ---------------------------------------------------------------- ML

def _label_digits(i, Q, n):
    return (i[:, None] // (Q ** np.arange(n - 1, -1, -1, dtype=np.int64))) % Q


def ml_batch(Y, Hd, points, cap=ML_CAP):
    """Exhaustive ML over a stack of frames: ``Y`` (B, n), ``Hd`` (B, n, n).

    Hypotheses are visited in label order (first symbol most significant)
    and only a strictly smaller metric replaces the incumbent, so ties go to
    the lexicographically smallest bit label.
    """
    B, n = Y.shape
    Q = len(points)
    total = Q**n
    if total > cap:
        raise InfeasibleError("ML detection", total, cap)
    chunk = int(max(1, min(total, 2**22 // max(1, B * n))))
    best = np.full(B, np.inf)
    best_i = np.zeros(B, dtype=np.int64)
    rows = np.arange(B)
    for start in range(0, total, chunk):
        stop = min(total, start + chunk)
        S = points[_label_digits(np.arange(start, stop, dtype=np.int64), Q, n)]
        R = Y[:, None, :] - np.einsum("bij,cj->bci", Hd, S)
        d = np.sum(R.real**2 + R.imag**2, axis=-1)
        j = np.argmin(d, axis=1)
        v = d[rows, j]
        better = v < best
        best[better] = v[better]
        best_i[better] = start + j[better]
    return _label_digits(best_i, Q, n)


def detect_ml(y, H, constellation: Constellation, cap=ML_CAP) -> DetectorResult:
    """argmin over all x in A^MN of ||y - Hx||^2."""
    Hd = _dense(H)
    idx = ml_batch(np.asarray(y)[None], Hd[None], constellation.points, cap)[0]
    return _result(idx, H, constellation, 1)


# ---------------------------------------------------------------- LMMSE

def lmmse_estimate(y, Hd, noise_var):
    if noise_var <= 0:
        raise ParameterError("LMMSE needs a positive noise variance")
    A = Hd @ Hd.conj().T + noise_var * np.eye(Hd.shape[0])
    try:
        x = Hd.conj().T @ np.linalg.solve(A, y)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"LMMSE system is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericError("LMMSE produced non-finite values")
    return x


def detect_lmmse(y, H, constellation: Constellation, noise_var) -> DetectorResult:
    x = lmmse_estimate(np.asarray(y), _dense(H), noise_var)
    return _result(constellation.nearest(x), H, constellation, 1)


# ---------------------------------------------------------------- OAMP

def _posterior_mean(r, tau_sq, points):
    """Per-entry E{x | r} under r = x + CN(0, tau_sq) and a uniform prior on ``points``."""
    logits = -np.abs(r[..., None] - points) ** 2 / tau_sq[..., None, None]
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return w @ points


def oamp_batch(
    Y,
    Hd,
    points,
    noise_var,
    iterations,
    mode="direct",
    constants="printed",
    record=False,
):
    """OAMP recursion on a stack of frames.

    ``mode="direct"`` solves ``(HH^H + sigma^2/nu^2 I)`` afresh every
    iteration; ``mode="eig"`` factors ``HH^H`` once and applies the diagonal
    shift in its eigenbasis. ``constants`` picks the error-variance weights:
    ``"printed"`` uses (1/2MN, 1/4MN), ``"conventional"`` uses (1/MN, 1/MN).

    Returns a dict with the final hard indices ``idx`` (B, n), the soft
    estimate ``x_hat`` and, when ``record`` is set, per-iteration hard
    decisions ``path`` (T, B, n), soft estimates ``soft`` and the traces ``nu_sq``, ``tau_sq``,
    ``residual`` (T, B).
    """
    if iterations < 1:
        raise ParameterError("OAMP needs at least one iteration")
    if noise_var <= 0:
        raise ParameterError("OAMP needs a positive noise variance")
    if constants == "printed":
        c_b, c_w = 0.5, 0.25
    elif constants == "conventional":
        c_b, c_w = 1.0, 1.0
    else:
        raise ParameterError(f"unknown OAMP constants {constants!r}")
    Y = np.asarray(Y, dtype=complex)
    Hd = np.asarray(Hd, dtype=complex)
    B, n, _ = Hd.shape
    Hh = np.conj(np.swapaxes(Hd, 1, 2))
    tr_hh = np.sum(np.abs(Hd) ** 2, axis=(1, 2))
    x = np.zeros((B, n), dtype=complex)
    nu = np.ones(B)
    eye = np.eye(n)

    if mode == "eig":
        lam, U = np.linalg.eigh(Hd @ Hh)
        lam = np.clip(lam, 0.0, None)
        G = Hh @ U
        Uh = np.conj(np.swapaxes(U, 1, 2))
    elif mode != "direct":
        raise ParameterError(f"unknown OAMP mode {mode!r}")

    path, soft, nus, taus, res = [], [], [], [], []
    idx = None
    for t in range(iterations):
        shift = noise_var / nu
        resid = Y - np.einsum("bij,bj->bi", Hd, x)
        if mode == "direct":
            A = Hd @ Hh + shift[:, None, None] * eye
            W_hat = np.conj(np.swapaxes(np.linalg.solve(A, Hd), 1, 2))
            tr_wh = np.real(np.einsum("bij,bji->b", W_hat, Hd))
            W = (n / tr_wh)[:, None, None] * W_hat
            r = x + np.einsum("bij,bj->bi", W, resid)
            Bm = eye - W @ Hd
            tr_bb = np.sum(np.abs(Bm) ** 2, axis=(1, 2))
            tr_ww = np.sum(np.abs(W) ** 2, axis=(1, 2))
        else:
            wts = 1.0 / (lam + shift[:, None])
            tr_wh = np.sum(lam * wts, axis=1)
            s = n / tr_wh
            r = x + s[:, None] * np.einsum("bij,bj->bi", G, wts * np.einsum("bij,bj->bi", Uh, resid))
            tr_ww = s**2 * np.sum(lam * wts**2, axis=1)
            tr_bb = np.clip(s**2 * np.sum(lam**2 * wts**2, axis=1) - n, 0.0, None)
        tau = c_b / n * tr_bb * nu + c_w / n * tr_ww * noise_var
        tau = np.maximum(tau, NU_FLOOR)
        x = _posterior_mean(r, tau, points)
        resid_new = Y - np.einsum("bij,bj->bi", Hd, x)
        rn = np.sum(np.abs(resid_new) ** 2, axis=1)
        nu = np.maximum((rn - n * noise_var) / tr_hh, NU_FLOOR)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(x)) and np.all(np.isfinite(tau))):
            raise NumericError("OAMP produced non-finite values", iteration=t)
        # per-symbol MAP from the decoupled observation r = x + CN(0, tau)
        idx = np.argmin(np.abs(r[..., None] - points) ** 2, axis=-1)
        if record:
            path.append(idx)
            soft.append(x)
            nus.append(nu.copy())
            taus.append(tau.copy())
            res.append(np.sqrt(rn))
    out = {"idx": idx, "x_hat": x}
    if record:
        out.update(path=np.array(path), soft=np.array(soft), nu_sq=np.array(nus), tau_sq=np.array(taus), residual=np.array(res))
    return out


def detect_oamp(
    y,
    H,
    constellation: Constellation,
    noise_var,
    T_max=10,
    mode="direct",
    constants="printed",
    x_true=None,
    trace_csv=None,
) -> DetectorResult:
    """OAMP detection of one frame.

    With ``x_true`` the per-iteration MSE of the soft estimate is reported;
    ``trace_csv`` writes (t, nu^2, tau^2, residual norm) rows to that path.
    """
    y = np.asarray(y)
    out = oamp_batch(y[None], _dense(H)[None], constellation.points, noise_var, T_max, mode, constants, record=True)
    trace = [
        OampState(out["soft"][t, 0], float(out["nu_sq"][t, 0]), float(out["tau_sq"][t, 0]), t + 1, float(out["residual"][t, 0]))
        for t in range(T_max)
    ]
    mse = None
    if x_true is not None:
        xt = x_true.vector if isinstance(x_true, DDFrame) else np.asarray(x_true)
        mse = np.mean(np.abs(out["soft"][:, 0] - xt) ** 2, axis=1)
    if trace_csv is not None:
        write_trace_csv(trace_csv, trace)
    return _result(out["idx"][0], H, constellation, T_max, mse, trace)


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "nu_sq", "tau_sq", "residual_norm"])
        for s in trace:
            w.writerow([s.iteration, repr(s.nu_sq), repr(s.tau_sq), repr(s.residual_norm)])


# ---------------------------------------------------------------- MPA

def mpa_frame(y, cols, vals, points, noise_var, iterations, damping=0.6, record=False):
    """Gaussian-approximation message passing on the sparse factor graph of one frame.

    ``cols``/``vals`` give the nonzeros of each row of H (padding has value 0).
    Observation nodes treat the interference from all other connected
    symbols as Gaussian; variable-to-observation messages are extrinsic
    symbol pmfs, damped as ``damping * new + (1 - damping) * old``.
    """
    if not 0 < damping <= 1:
        raise ParameterError(f"damping must lie in (0, 1], got {damping}")
    if iterations < 1:
        raise ParameterError("MPA needs at least one iteration")
    if noise_var <= 0:
        raise ParameterError("MPA needs a positive noise variance")
    n, w = cols.shape
    Q = len(points)
    mask = vals != 0
    flat_cols = cols[mask]
    p2 = np.abs(points) ** 2
    prob = np.full((n, w, Q), 1.0 / Q)
    g2 = np.abs(vals) ** 2
    path = []
    total = None
    for t in range(iterations):
        mean = prob @ points
        var = np.clip(prob @ p2 - np.abs(mean) ** 2, 0.0, None)
        mu_all = np.sum(vals * mean, axis=1)
        var_all = np.sum(g2 * var, axis=1) + noise_var
        mu_ex = mu_all[:, None] - vals * mean
        var_ex = np.maximum(var_all[:, None] - g2 * var, noise_var)
        ll = -np.abs(y[:, None, None] - mu_ex[..., None] - vals[..., None] * points) ** 2 / var_ex[..., None]
        ll[~mask] = 0.0
        total = np.zeros((n, Q))
        np.add.at(total, flat_cols, ll[mask])
        ext = total[cols] - ll
        ext -= ext.max(axis=-1, keepdims=True)
        new = np.exp(ext)
        new /= new.sum(axis=-1, keepdims=True)
        prob = damping * new + (1 - damping) * prob
        if not np.all(np.isfinite(prob)):
            raise NumericError("MPA produced non-finite messages", iteration=t)
        if record:
            path.append(np.argmax(total, axis=1))
    idx = np.argmax(total, axis=1)
    return (idx, np.array(path)) if record else idx


def detect_mpa(y, H, constellation: Constellation, noise_var, T_max=20, damping=0.6) -> DetectorResult:
    cols, vals = H.neighbors()
    idx = mpa_frame(np.asarray(y), cols, vals, constellation.points, noise_var, T_max, damping)
    return _result(idx, H, constellation, T_max)
