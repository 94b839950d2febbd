"""Command-line entry point: ``ddlab <subcommand> [--config FILE] [--set key=value ...]``.

Every run writes into ``<out>/<UTC timestamp>-<config hash>/``. Any failed
precondition exits with status 2 and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis, harness
from .channel import ChannelRealization, apply_channel
from .constellation import DDFrame, FrameDims, make_constellation
from .detect import detect_lmmse, detect_ml, detect_mpa, detect_oamp, write_trace_csv
from .errors import DDLabError


def _load(cls, args):
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DDLabError(f"config file {path} not found")
        text = path.read_text()
        data = (json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)) or {}
        if not isinstance(data, dict):
            raise DDLabError(f"config file {path} must hold a mapping")
    overrides = list(args.set)
    if getattr(args, "full", False):
        prefix = "sim." if cls is harness.IterationConfig else ""
        overrides = [f"{prefix}M=64", f"{prefix}N=16"] + overrides
    data = harness.apply_overrides(data, overrides)
    return harness.from_dict(cls, data)


def _run_dir(args, cfg):
    d = harness.make_run_dir(args.out, cfg)
    print(d)
    return d


def cmd_simulate(args):
    cfg = _load(harness.SimConfig, args)
    curve = harness.run_ber_sweep(cfg)
    d = _run_dir(args, cfg)
    harness.write_curve_csv(curve, d / "ber.csv", cfg)
    payload = {"slope_last3": harness.fit_slope(curve.snr_db, curve.ber)}
    harness.write_sidecar(d / "ber.json", cfg, payload)
    for s, b, ci in zip(curve.snr_db, curve.ber, curve.ci95):
        print(f"{cfg.snr_convention}={s:g} dB  BER={b:.4e} +/- {ci:.1e}")


def _bounds_inputs(cfg):
    return make_constellation(cfg.constellation), FrameDims(cfg.M, cfg.N), cfg.channel()


def cmd_bounds(args):
    cfg = _load(harness.BoundsConfig, args)
    c, dims, ch = _bounds_inputs(cfg)
    rep = analysis.bound_report(c, dims, ch, cfg.snr_db, cfg.form, cfg.model, cfg.mode, samples=cfg.samples, seed=cfg.master_seed)
    d = _run_dir(args, cfg)
    analysis.write_bound_report(rep, d / "bounds.csv", {"config_hash": harness.config_hash(cfg)})
    print(f"kappa={rep.kappa} rho={rep.diversity_order} mode={rep.meta['enumeration_mode']}")


def cmd_diversity(args):
    cfg = _load(harness.BoundsConfig, args)
    c, dims, ch = _bounds_inputs(cfg)
    mode = "auto" if cfg.mode == "sampled" else cfg.mode
    div = analysis.diversity_order(c, dims, ch, cfg.model, mode)
    kap = analysis.rank1_census(c, dims, ch, cfg.model, mode)
    census = analysis.difference_census(c, dims, ch, cfg.model, div.mode)
    ranks, counts = np.unique(census.ranks, return_counts=True)
    pairs = {int(r): float(census.pairs[census.ranks == r].sum()) for r in ranks}
    x, xh = div.witness
    d = _run_dir(args, cfg)
    with (d / "ranks.csv").open("w") as f:
        f.write("rank,classes,ordered_pairs\n")
        for r, n in zip(ranks, counts):
            f.write(f"{int(r)},{int(n)},{pairs[int(r)]!r}\n")
    harness.write_sidecar(
        d / "diversity.json",
        cfg,
        {
            "rho": div.rho,
            "kappa": kap.kappa,
            "search": div.mode,
            "rank_tol": kap.tol,
            "witness_x": [[v.real, v.imag] for v in x.vector],
            "witness_x_hat": [[v.real, v.imag] for v in xh.vector],
        },
    )
    print(f"rho={div.rho} kappa={kap.kappa} search={div.mode}")


def cmd_iterations(args):
    cfg = _load(harness.IterationConfig, args)
    table = harness.run_iteration_study(cfg)
    d = _run_dir(args, cfg)
    harness.write_iteration_csv(table, d / "iterations.csv", cfg)
    harness.write_sidecar(d / "iterations.json", cfg, {"summary": table.summary, "frames": table.frames})
    for i, T in enumerate(table.T_grid):
        print(f"T={T:3d}  " + "  ".join(f"{k}={v[i]:.4e}" for k, v in table.ber.items()))


def cmd_psd(args):
    cfg = _load(harness.PsdConfig, args)
    res = harness.run_psd_study(cfg)
    d = _run_dir(args, cfg)
    harness.write_psd_pair(res, d, cfg)
    harness.write_sidecar(d / "psd.json", cfg, {"band_edge_hz": res.band_edge_hz, "levels": res.levels})
    for k, v in res.levels.items():
        print(f"{k} x band edge: ODDM {v['oddm_db']:.1f} dB  OTFS {v['otfs_db']:.1f} dB  delta {v['delta_db']:.1f} dB")


def cmd_detect_one(args):
    cfg = _load(harness.SimConfig, args)
    if len(cfg.snr_db) != 1:
        raise DDLabError("detect-one needs exactly one SNR point (use --set snr_db=[x])")
    dims = cfg.dims
    c = make_constellation(cfg.constellation)
    rng = np.random.default_rng(cfg.master_seed)
    if args.channel:
        ch = ChannelRealization.from_text(Path(args.channel).read_text())
    else:
        ch = cfg.channel.draw(dims, rng)
    H = cfg.channel.build(ch, dims)
    nv = float(cfg.noise_vars()[0])
    x = DDFrame.from_vector(c.points[rng.integers(0, c.order, dims.size)], dims, c)
    y = apply_channel(H, x, nv, rng)
    det = cfg.detector
    if det.name == "ml":
        res = detect_ml(y, H, c)
    elif det.name == "lmmse":
        res = detect_lmmse(y, H, c, nv)
    elif det.name == "oamp":
        res = detect_oamp(y, H, c, nv, det.T, det.mode, det.constants, x_true=x.vector)
    else:
        res = detect_mpa(y, H, c, nv, det.T, det.damping)
    errors = int(np.sum(res.bits_hard != x.bits()))
    d = _run_dir(args, cfg)
    (d / "channel.txt").write_text(ch.to_text())
    if args.trace and res.trace:
        write_trace_csv(d / "trace.csv", res.trace)
    harness.write_sidecar(d / "detect.json", cfg, {"bit_errors": errors, "bits": int(x.bits().size), "iterations": res.iterations_used})
    print(f"{det.name}: {errors} bit errors out of {x.bits().size}")


COMMANDS = {
    "simulate": (cmd_simulate, "BER sweep over an SNR grid"),
    "bounds": (cmd_bounds, "union upper bound and rank-one lower bounds"),
    "diversity": (cmd_diversity, "diversity order, rank census and witness pair"),
    "iterations": (cmd_iterations, "BER against detector iteration count"),
    "psd": (cmd_psd, "ODDM and OTFS power spectral densities"),
    "detect-one": (cmd_detect_one, "detect a single random frame"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="ddlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="YAML or JSON config file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field (dotted keys)")
        s.add_argument("--out", default="runs", help="parent directory for run folders")
        if name in ("simulate", "iterations"):
            s.add_argument("--full", action="store_true", help="use the full 64 x 16 frame instead of the desk-scale default")
        if name == "detect-one":
            s.add_argument("--channel", help="channel realization in text format")
            s.add_argument("--trace", action="store_true", help="write the per-iteration OAMP trace")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command][0](args)
    except DDLabError as e:
        print(f"ddlab {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
