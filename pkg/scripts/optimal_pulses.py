"""Minimal-energy smooth swap pulses for (T = 2pi/U, M = 3) and (T = 4pi/U, M = 2)."""

import argparse
import json
import math
from pathlib import Path

from qratchet.cli import OptimizeConfig, cmd_optimize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/optimal_pulses"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name, T, M in (("solid", 2 * math.pi, 3), ("dashed", 4 * math.pi, 2), ("too_short", math.pi, 3)):
        cfg = OptimizeConfig(T_times_U=T, n_modes=M, seed=args.seed)
        code = cmd_optimize(cfg, args.out / name)
        rep = json.loads((args.out / name / "optimize.json").read_text())
        print(f"{name:10s} T*U={T:7.4f} M={M} exit={code} F={rep['F']:.8f} E={rep['E']:.5f}")


if __name__ == "__main__":
    main()
