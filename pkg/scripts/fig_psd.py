"""Power spectral densities of ODDM and OTFS streams around the band edge."""

import dataclasses

from _common import parser, pyplot, run_dir

from ddlab.harness import PsdConfig, run_psd_study, write_psd_pair, write_sidecar


def main():
    args = parser(__doc__).parse_args()
    cfg = PsdConfig(workers=args.workers)
    if args.quick:
        cfg = dataclasses.replace(cfg, frames=4)
    d = run_dir(args, cfg)
    res = run_psd_study(cfg)
    write_psd_pair(res, d, cfg)
    write_sidecar(d / "psd.json", cfg, {"band_edge_hz": res.band_edge_hz, "levels": res.levels})
    for k, v in res.levels.items():
        print(f"{k} x edge: ODDM {v['oddm_db']:.1f} dB  OTFS {v['otfs_db']:.1f} dB")
    plt = pyplot(args)
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    x = res.freqs / res.band_edge_hz
    ax.plot(x, res.otfs_db, lw=0.8, label="OTFS")
    ax.plot(x, res.oddm_db, lw=0.8, label="ODDM")
    for s in (-1, 1):
        ax.axvline(s, color="k", lw=0.5, ls=":")
    ax.set_xlim(-3, 3)
    ax.set_ylim(-100, 5)
    ax.set_xlabel("frequency / band edge")
    ax.set_ylabel("PSD (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(d / "psd.png", dpi=150)


if __name__ == "__main__":
    main()
