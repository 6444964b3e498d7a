"""Compare the Monte Carlo rate with the analytic value at a configured point.

    python scripts/check_simulation.py configs/validate_k3_b4.cfg
"""

import argparse
import sys

from fbsecrecy.cli import SweepConfig, read_config, run_validate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--shift-thresholds", type=float, default=1.0,
                   help="scale the simulated thresholds (should make the check fail)")
    args = p.parse_args(argv)
    cfg = SweepConfig(**read_config(args.config))
    ok = run_validate(cfg, args.shift_thresholds)
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
