"""Run a sweep config and print the bounds as a table (one row per SNR).

    python scripts/bound_table.py configs/common_k3_bits.cfg --csv out.csv
"""

import argparse
import collections
import csv
import io
import sys
import time

from fbsecrecy.cli import SweepConfig, format_csv, read_config, run_sweep


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--csv", help="also write the full CSV here")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    values = read_config(args.config)
    values["workers"] = args.workers
    cfg = SweepConfig(**values)
    t0 = time.perf_counter()
    text = format_csv(run_sweep(cfg))
    elapsed = time.perf_counter() - t0
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(text)

    table = collections.defaultdict(dict)
    cols = []
    for r in csv.DictReader(io.StringIO(text)):
        if r["bound_kind"] == "perfect":
            col = f"K{r['K']} perfect"
        else:
            col = f"K{r['K']} b{r['b']} {r['bound_kind'][:2]}"
        if col not in cols:
            cols.append(col)
        table[float(r["snr_db"])][col] = float(r["value_npcu"])
    cols.sort(key=lambda c: (c.split()[0], "perfect" in c, c))
    print(f"{'snr_db':>7} " + " ".join(f"{c:>14}" for c in cols))
    for snr in sorted(table):
        print(f"{snr:7.1f} " + " ".join(f"{table[snr].get(c, float('nan')):14.6f}" for c in cols))
    print(f"# {cfg.scenario} scenario, values in nats per channel use, {elapsed:.0f} s", file=sys.stderr)


if __name__ == "__main__":
    main()
