"""Average qubit position under the optimal T = 4pi/U modulation, for an even and an odd write port."""

import argparse
from pathlib import Path

from qratchet.cli import TransportConfig, cmd_transport


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/transport"))
    ap.add_argument("--L", type=int, default=6)
    ap.add_argument("--half-periods", type=int, default=6)
    ap.add_argument("--pulse", choices=("optimized", "square"), default="optimized")
    args = ap.parse_args()
    for port in (2, args.L - 1):
        cfg = TransportConfig(L_sites=args.L, write_port=port, n_half_periods=args.half_periods, pulse=args.pulse)
        cfg.validate()
        cmd_transport(cfg, args.out / f"port{port}")
        print(f"port {port}: see {args.out / f'port{port}' / 'transport.json'}")


if __name__ == "__main__":
    main()
