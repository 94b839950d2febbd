"""BER and rank-one lower bounds for several frame sizes.

ML runs where exhaustive search is feasible; larger frames fall back to OAMP.
Every size uses the same constant/single-symbol rank-one census, so the bounds
are comparable across sizes.
"""

import dataclasses

import numpy as np
from _common import parser, pyplot, run_dir

from ddlab.harness import ChannelSpec, DetectorSpec, SimConfig, run_frame_size_study, write_curve_csv, write_sidecar

TAPS4 = ((0, 0), (0, 1), (1, 0), (1, 1))
SIZES = ((2, 2, "ml"), (2, 4, "ml"), (4, 4, "oamp"))


def main():
    args = parser(__doc__).parse_args()
    base = SimConfig(
        channel=ChannelSpec(kind="taps", taps=TAPS4, model="ideal"),
        snr_db=(0.0, 4.0, 8.0, 12.0, 16.0, 20.0),
        min_frame_errors=50 if args.quick else 200,
        max_frames=512 if args.quick else 200000,
        block_frames=256,
        workers=args.workers,
    )
    cfgs = [dataclasses.replace(base, M=M, N=N, detector=DetectorSpec(det)) for M, N, det in SIZES]
    d = run_dir(args, base)
    res = run_frame_size_study(cfgs)
    for cfg, curve, kap in zip(cfgs, res.curves, res.kappas):
        write_curve_csv(curve, d / f"ber_{cfg.M}x{cfg.N}.csv", cfg, {"kappa": kap.kappa, "kappa_mode": kap.mode})
    write_sidecar(
        d / "frame_size.json",
        base,
        {
            "sizes": [[M, N, det] for M, N, det in SIZES],
            "kappa": [k.kappa for k in res.kappas],
            "lower_exact": res.lower_exact,
            "ber_slopes": res.slopes,
            "bound_slopes": res.bound_slopes,
        },
    )
    for (M, N, det), kap, s in zip(SIZES, res.kappas, res.slopes):
        print(f"{M}x{N} {det}: kappa={kap.kappa} slope={s:.2f}")
    plt = pyplot(args)
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    for (M, N, det), curve, lb in zip(SIZES, res.curves, res.lower_exact):
        line = ax.semilogy(curve.snr_db, np.maximum(curve.ber, 1e-7), "o-", label=f"{det.upper()} {M}x{N}")[0]
        ax.semilogy(curve.snr_db, lb, ":", color=line.get_color(), label=f"lower bound {M}x{N}")
    ax.set_xlabel("Es/N0 (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(d / "frame_size.png", dpi=150)


if __name__ == "__main__":
    main()
