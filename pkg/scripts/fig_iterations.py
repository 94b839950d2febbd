"""OAMP and MPA BER against iteration count on the NTN-like channel."""

import dataclasses

from _common import parser, pyplot, run_dir

from ddlab.harness import IterationConfig, run_iteration_study, write_iteration_csv, write_sidecar


def main():
    p = parser(__doc__)
    p.add_argument("--snr", type=float, default=14.0, help="Es/N0 in dB")
    p.add_argument("--full", action="store_true", help="64 x 16 frame instead of 32 x 8")
    args = p.parse_args()
    cfg = IterationConfig()
    sim = dataclasses.replace(cfg.sim, snr_db=(args.snr,), workers=args.workers)
    if args.quick:
        sim = dataclasses.replace(sim, max_frames=128)
    if args.full:
        sim = dataclasses.replace(sim, M=64, N=16)
    cfg = dataclasses.replace(cfg, sim=sim)
    d = run_dir(args, cfg)
    tab = run_iteration_study(cfg)
    write_iteration_csv(tab, d / "iterations.csv", cfg)
    write_sidecar(d / "iterations.json", cfg, {"summary": tab.summary, "frames": tab.frames})
    for i, T in enumerate(tab.T_grid):
        print(f"T={T:3d}  " + "  ".join(f"{k}={v[i]:.3e}" for k, v in tab.ber.items()))
    plt = pyplot(args)
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, ber in tab.ber.items():
        ax.semilogy(tab.T_grid, ber, "o-", label=name.upper())
    ax.set_xlabel("iterations T")
    ax.set_ylabel("BER")
    ax.set_title(f"{sim.M}x{sim.N}, Es/N0 = {args.snr:g} dB")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(d / "iterations.png", dpi=150)


if __name__ == "__main__":
    main()
