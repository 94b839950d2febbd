"""Shared plumbing for the figure scripts: run folders and optional plotting."""

import argparse
from pathlib import Path

from ddlab.harness import make_run_dir


def parser(doc):
    p = argparse.ArgumentParser(description=doc.splitlines()[0])
    p.add_argument("--out", default="runs", help="parent directory for the run folder")
    p.add_argument("--quick", action="store_true", help="fewer frames, for a smoke run")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-plot", action="store_true", help="write CSV only")
    return p


def run_dir(args, cfg):
    d = make_run_dir(args.out, cfg)
    print(d)
    return Path(d)


def pyplot(args):
    """matplotlib.pyplot, or None when plotting is off or unavailable."""
    if args.no_plot:
        return None
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the figure")
        return None
    return plt
