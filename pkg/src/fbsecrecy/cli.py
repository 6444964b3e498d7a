"""Command-line front end: single bounds, sweeps, simulation and validation.

Exit status: 0 on success, 1 on usage or input errors, 2 when a validation
check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bounds as B
from .dist import ExponentialMean
from .errors import DomainError, NumericalError
from .quantize import Quantizer
from .sim import SimConfig, power_estimate, simulate

CSV_FIELDS = ["scenario", "K", "b", "mode", "snr_db", "bound_kind", "value_npcu", "diag_iters", "diag_gap"]
SCENARIOS = ("common", "sum")
THRESHOLD_MODES = ("optimized", "equiprobable")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration

def _split(text):
    return [t for t in str(text).replace(",", " ").split() if t]


def _floats(text):
    return [float(t) for t in _split(text)]


def _ints(text):
    out = []
    for t in _split(text):
        v = float(t)
        if v != int(v):
            raise ValueError(f"{t!r} is not an integer")
        out.append(int(v))
    return out


def _choice(options):
    def parse(text):
        v = str(text).strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _one(conv):
    def parse(text):
        vals = _split(text)
        if len(vals) != 1:
            raise ValueError("expected a single value")
        return conv(vals[0])
    return parse


CONFIG_KEYS = {
    "snr_db": _floats,
    "bits": _ints,
    "receivers": _ints,
    "scenario": _choice(SCENARIOS),
    "thresholds": _choice(THRESHOLD_MODES),
    "blocks": _one(lambda t: _ints(t)[0]),
    "seed": _one(lambda t: _ints(t)[0]),
    "out": str,
    "means": _floats,
    "eve_mean": _one(float),
    "workers": _one(lambda t: _ints(t)[0]),
    "grid_size": _one(lambda t: _ints(t)[0]),
}


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment.

    Errors name the file and line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        if not value:
            raise UsageError(f"{path}:{lineno}: empty value for {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


@dataclass(frozen=True)
class SweepConfig:
    snr_db: tuple
    bits: tuple
    receivers: tuple = (1,)
    scenario: str = "common"
    thresholds: str = "optimized"
    means: tuple = (1.0,)
    eve_mean: float = 1.0
    seed: int = 0
    blocks: int = 10 ** 6
    workers: int = 1
    grid_size: int = 512
    out: str | None = None

    def __post_init__(self):
        for name in ("snr_db", "bits", "receivers", "means"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise UsageError(f"{name} must not be empty")
        if not all(np.isfinite(self.snr_db)):
            raise UsageError("snr_db values must be finite")
        if any(b < 1 or b > 8 for b in self.bits):
            raise UsageError("bits must lie in 1..8")
        if any(k < 1 for k in self.receivers):
            raise UsageError("receivers must be positive")
        if any(m <= 0 for m in self.means) or self.eve_mean <= 0:
            raise UsageError("channel means must be positive")
        if len(self.means) > 1 and any(k != len(self.means) for k in self.receivers):
            raise UsageError("per-receiver means need receivers equal to their count")
        if self.scenario not in SCENARIOS:
            raise UsageError(f"scenario must be one of {SCENARIOS}")
        if self.thresholds not in THRESHOLD_MODES:
            raise UsageError(f"thresholds must be one of {THRESHOLD_MODES}")
        if self.blocks < 1 or self.workers < 1 or self.grid_size < 256:
            raise UsageError("blocks and workers must be positive and grid_size at least 256")

    def main_dists(self, K):
        means = self.means if len(self.means) > 1 else self.means * K
        return [ExponentialMean(float(m)) for m in means]

    @property
    def eve(self):
        return ExponentialMean(float(self.eve_mean))


def budget(snr_db: float) -> float:
    """Average power for unit-variance noise: ``10 ** (snr_db / 10)``."""
    return 10.0 ** (snr_db / 10.0)


# ---------------------------------------------------------------------------
# bound evaluation

def bound_pair(cfg: SweepConfig, K: int, b: int, snr_db: float, prev=(None, None)):
    """Lower and upper bounds at one point, warm-started from ``prev``."""
    P = budget(snr_db)
    dists = cfg.main_dists(K)
    kw = {"thresholds": cfg.thresholds, "seed": cfg.seed}
    if cfg.scenario == "common":
        lo = B.common_message_lower(dists, cfg.eve, b, P, warm_start=prev[0], **kw)
        up = B.common_message_upper(dists, cfg.eve, b, P, lower=lo, warm_start=prev[1], **kw)
    else:
        lo = B.sum_rate_lower(dists, K, cfg.eve, b, P, warm_start=prev[0], **kw)
        up = B.sum_rate_upper(dists, K, cfg.eve, b, P, lower=lo, warm_start=prev[1], **kw)
    return lo, up


def perfect(cfg: SweepConfig, K: int, snr_db: float):
    P = budget(snr_db)
    dists = cfg.main_dists(K)
    if cfg.scenario == "common":
        return B.perfect_csi_common(dists, cfg.eve, P, cfg.grid_size)
    return B.perfect_csi_sum(dists, K, cfg.eve, P, cfg.grid_size)


def _fmt(x):
    return repr(float(x))


def _row(cfg, K, b, mode, snr, kind, value, iters, gap):
    return {"scenario": cfg.scenario, "K": K, "b": b, "mode": mode, "snr_db": _fmt(snr), "bound_kind": kind,
            "value_npcu": _fmt(value), "diag_iters": int(iters), "diag_gap": "" if gap is None else _fmt(gap)}


def _sweep_unit(args):
    """All bit counts at one (K, SNR) point; b ascends so warm starts chain."""
    cfg, K, snr = args
    rows = []
    prev = (None, None)
    for b in sorted(set(cfg.bits)):
        lo, up = bound_pair(cfg, K, b, snr, prev)
        prev = (lo, up)
        gap = up.value - lo.value
        rows.append(_row(cfg, K, b, cfg.thresholds, snr, "lower", lo.value, lo.diagnostics.get("rounds", 0), gap))
        rows.append(_row(cfg, K, b, cfg.thresholds, snr, "upper", up.value, up.diagnostics.get("rounds", 0), gap))
    pc = perfect(cfg, K, snr)
    rows.append(_row(cfg, K, 0, "perfect", snr, "perfect", pc.value,
                     pc.diagnostics.get("multiplier_iterations", 0), None))
    return rows


_KIND_ORDER = {"lower": 0, "upper": 1, "perfect": 2}


def _sort_key(r):
    return (r["scenario"], r["K"], float(r["snr_db"]), r["mode"] == "perfect", r["b"], _KIND_ORDER[r["bound_kind"]])


def run_sweep(cfg: SweepConfig) -> list:
    """Rows for every (K, SNR, b) point plus the perfect-CSI rows, sorted."""
    units = [(cfg, K, snr) for K in sorted(set(cfg.receivers)) for snr in sorted(set(cfg.snr_db))]
    if cfg.workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_sweep_unit, units))
    else:
        parts = [_sweep_unit(u) for u in units]
    return sorted((r for p in parts for r in p), key=_sort_key)


def format_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# simulation

def operating_point(cfg: SweepConfig):
    """Lower-bound quantizer and powers at the single configured point."""
    K, b, snr = _single(cfg.receivers, "receivers"), _single(cfg.bits, "bits"), _single(cfg.snr_db, "snr-db")
    P = budget(snr)
    dists = cfg.main_dists(K)
    kw = {"thresholds": cfg.thresholds, "seed": cfg.seed}
    if cfg.scenario == "common":
        res = B.common_message_lower(dists, cfg.eve, b, P, **kw)
    else:
        res = B.sum_rate_lower(dists, K, cfg.eve, b, P, **kw)
    return K, dists, res


def _single(values, name):
    if len(values) != 1:
        raise UsageError(f"--{name} takes a single value for this command")
    return values[0]


def _selection(scenario):
    return "min" if scenario == "common" else "max"


def run_validate(cfg: SweepConfig, shift_thresholds: float = 1.0, zero_power: bool = False, stream=None):
    """Compare the analytic protocol rate with a Monte Carlo estimate at 3 sigma.

    ``shift_thresholds`` scales the simulated thresholds while the analytic
    value keeps the original ones (negative control); ``zero_power``
    silences the transmitter in both.
    """
    stream = stream or sys.stdout
    K, dists, res = operating_point(cfg)
    sel = _selection(cfg.scenario)
    quant = res.quantizer
    powers = np.zeros(quant.Q + 1) if zero_power else np.asarray(res.policy.powers)
    analytic = B.protocol_rate(quant, powers, dists, cfg.eve, sel)
    sim_quant = quant if shift_thresholds == 1.0 else Quantizer(tuple(quant.array * shift_thresholds), quant.b)
    outcome = simulate(SimConfig(cfg.blocks, sim_quant, tuple(powers), tuple(dists), cfg.eve,
                                 cfg.seed, cfg.workers), sel)
    diff = outcome.rate_estimate - analytic
    ok = abs(diff) <= 3 * outcome.std_error or (outcome.std_error == 0 and diff == 0)
    p_mean, p_se = power_estimate(outcome.trace)
    print(f"scenario={cfg.scenario} K={K} b={quant.b} snr_db={_single(cfg.snr_db, 'snr-db')} L={cfg.blocks}",
          file=stream)
    print(f"bound_value={res.value!r}", file=stream)
    print(f"analytic={analytic!r}", file=stream)
    print(f"estimate={outcome.rate_estimate!r}", file=stream)
    print(f"std_error={outcome.std_error!r}", file=stream)
    print(f"mean_power={p_mean!r} power_std_error={p_se!r}", file=stream)
    print(f"result={'PASS' if ok else 'FAIL'} (|diff|={abs(diff):.3g}, 3se={3 * outcome.std_error:.3g})", file=stream)
    return ok


# ---------------------------------------------------------------------------
# argument handling

def _list_arg(conv):
    def parse(text):
        try:
            return conv(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--snr-db", type=_list_arg(_floats), nargs="+", help="SNR values in dB (P_avg = 10^(snr/10))")
    common.add_argument("--bits", type=_list_arg(_ints), nargs="+", help="feedback bits per receiver")
    common.add_argument("--receivers", type=_list_arg(_ints), nargs="+", help="number of legitimate receivers K")
    common.add_argument("--scenario", choices=SCENARIOS)
    common.add_argument("--thresholds", choices=THRESHOLD_MODES)
    common.add_argument("--means", type=_list_arg(_floats), nargs="+",
                        help="main-channel mean gain (one value, or one per receiver)")
    common.add_argument("--eve-mean", type=float, help="eavesdropper mean gain")
    common.add_argument("--blocks", type=int, help="fading blocks to simulate")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="parallel workers (results do not depend on it)")
    common.add_argument("--grid-size", type=int, help="perfect-CSI quantile grid size")
    common.add_argument("--out", help="output file (default: stdout)")

    p = _Parser(prog="fbsecrecy", description="Secrecy-rate bounds for fading broadcast channels with b-bit feedback.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("bounds", parents=[common], help="lower/upper/perfect-CSI values at one point (CSV)")
    sub.add_parser("sweep", parents=[common], help="sweep SNR, bits and receivers (CSV)")
    sub.add_parser("optimize", parents=[common], help="dump optimised quantizer and powers (JSON)")
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo of the feedback protocol; --out gets the trace")
    s.add_argument("--summary-only", action="store_true", help="skip writing the trace")
    v = sub.add_parser("validate", parents=[common], help="analytic vs Monte Carlo at 3 standard errors")
    v.add_argument("--shift-thresholds", type=float, default=1.0,
                   help="scale simulated thresholds (negative control)")
    v.add_argument("--zero-power", action="store_true", help="use an all-zero power policy")
    return p


def _flatten(v):
    if v is None:
        return None
    return [x for part in v for x in part]


def resolve_config(args) -> SweepConfig:
    values = read_config(args.config) if args.config else {}
    flags = {
        "snr_db": _flatten(args.snr_db), "bits": _flatten(args.bits), "receivers": _flatten(args.receivers),
        "scenario": args.scenario, "thresholds": args.thresholds, "means": _flatten(args.means),
        "eve_mean": args.eve_mean, "blocks": args.blocks, "seed": args.seed, "workers": args.workers,
        "grid_size": args.grid_size, "out": args.out,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    for key in ("snr_db", "bits"):
        if key not in values:
            raise UsageError(f"--{key.replace('_', '-')} is required (flag or config)")
    return SweepConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "sweep":
            _emit(format_csv(run_sweep(cfg)), cfg.out)
        elif args.command == "bounds":
            for name in ("snr_db", "bits", "receivers"):
                _single(getattr(cfg, name), name.replace("_", "-"))
            _emit(format_csv(run_sweep(replace(cfg, workers=1))), cfg.out)
        elif args.command == "optimize":
            K = _single(cfg.receivers, "receivers")
            lo, up = bound_pair(cfg, K, _single(cfg.bits, "bits"), _single(cfg.snr_db, "snr-db"))
            doc = {"scenario": cfg.scenario, "K": K, "snr_db": cfg.snr_db[0],
                   "lower": lo.to_dict(), "upper": up.to_dict()}
            _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out)
        elif args.command == "simulate":
            K, dists, res = operating_point(cfg)
            outcome = simulate(SimConfig(cfg.blocks, res.quantizer, res.policy.powers, tuple(dists), cfg.eve,
                                         cfg.seed, cfg.workers), _selection(cfg.scenario))
            p_mean, p_se = power_estimate(outcome.trace)
            print(f"estimate={outcome.rate_estimate!r} std_error={outcome.std_error!r} "
                  f"mean_power={p_mean!r} power_std_error={p_se!r} bound_value={res.value!r}")
            if cfg.out and not args.summary_only:
                outcome.trace.to_csv(cfg.out)
        elif args.command == "validate":
            ok = run_validate(cfg, args.shift_thresholds, args.zero_power)
            return 0 if ok else 2
    except UsageError as exc:
        print(f"fbsecrecy: error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"fbsecrecy: invalid input: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"fbsecrecy: numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
