"""Hopping, on-site overlap and band gap against the superlattice depth difference.

Optionally converts an optimised pulse (CSV from ``qratchet optimize``) into
lattice depths.
"""

import argparse
from pathlib import Path

from qratchet.cli import BandsConfig, cmd_bands


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/bands"))
    ap.add_argument("--pulse-file", default=None)
    ap.add_argument("--samples", type=int, default=40)
    args = ap.parse_args()
    cfg = BandsConfig(samples=args.samples, pulse_file=args.pulse_file)
    cfg.validate()
    cmd_bands(cfg, args.out)
    print((args.out / "bands.json").read_text())


if __name__ == "__main__":
    main()
