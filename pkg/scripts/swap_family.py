"""Square-pulse perfect swaps: (J T, U T) pairs and their three-level fidelity."""

import argparse
from pathlib import Path

from qratchet.cli import SwapFamilyConfig, cmd_swap_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=6)
    ap.add_argument("--out", type=Path, default=Path("results/swap_family"))
    args = ap.parse_args()
    cfg = SwapFamilyConfig(n_max=args.n_max)
    cfg.validate()
    cmd_swap_family(cfg, args.out)
    print((args.out / "swap_family.csv").read_text())


if __name__ == "__main__":
    main()
