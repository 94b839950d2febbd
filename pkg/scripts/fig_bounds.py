"""ML BER at M=N=2 between the union upper bound and the rank-one lower bound.

Runs both DD relations so the shift-only bounds can be compared with the
exact-phase channel.
"""

import dataclasses

from _common import parser, pyplot, run_dir

from ddlab import FrameDims, make_constellation
from ddlab.analysis import bound_report, write_bound_report
from ddlab.harness import BoundsConfig, ChannelSpec, DetectorSpec, SimConfig, run_ber_sweep, write_curve_csv

TAPS4 = ((0, 0), (0, 1), (1, 0), (1, 1))


def main():
    args = parser(__doc__).parse_args()
    base = SimConfig(
        M=2,
        N=2,
        channel=ChannelSpec(kind="taps", taps=TAPS4, model="ideal"),
        detector=DetectorSpec("ml"),
        snr_db=(0.0, 4.0, 8.0, 12.0, 16.0, 20.0),
        min_frame_errors=50 if args.quick else 200,
        max_frames=20000 if args.quick else 10**6,
        block_frames=2048,
        workers=args.workers,
    )
    d = run_dir(args, base)
    c, dims = make_constellation(base.constellation), FrameDims(2, 2)
    results = {}
    for model in ("ideal", "exact"):
        cfg = dataclasses.replace(base, channel=dataclasses.replace(base.channel, model=model))
        curve = run_ber_sweep(cfg, label=f"ML ({model})")
        rep = bound_report(c, dims, BoundsConfig(M=2, N=2, taps=TAPS4).channel(), base.snr_db, model=model)
        write_curve_csv(curve, d / f"ber_{model}.csv", cfg)
        write_bound_report(rep, d / f"bounds_{model}.csv")
        results[model] = (curve, rep)
        print(f"{model}: kappa={rep.kappa} rho={rep.diversity_order}")
    plt = pyplot(args)
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    for model, style in (("ideal", "-"), ("exact", "--")):
        curve, rep = results[model]
        ax.semilogy(curve.snr_db, curve.ber, "o" + style, label=f"ML, {model}")
        ax.semilogy(rep.snr_db, rep.union_upper, style, label=f"union bound, {model}")
        if rep.kappa:
            ax.semilogy(rep.snr_db, rep.rank1_lower_exact, ":", label=f"rank-one bound, {model}")
    ax.set_xlabel("Es/N0 (dB)")
    ax.set_ylabel("BER")
    ax.set_ylim(1e-5, 1)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(d / "bounds.png", dpi=150)


if __name__ == "__main__":
    main()
