"""Command-line entry point.

Every subcommand writes a CSV (to ``--out`` or stdout) with a fixed header.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from . import harness
from .csi import CsiConfig, error_variance, estimate_from_noise, standard_complex_normal
from .rate_adapt import (
    build_lut,
    capacity,
    default_lut_grid,
    nonrobust_rate,
    outage_prob,
    read_lut_csv,
    robust_rate,
    robust_rates,
    write_lut_csv,
)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise SystemExit(f"cannot open {path}: {exc}")
    with fh:
        yield fh


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(x):
    return repr(float(x))


def _amplitudes(args):
    return np.linspace(args.g_min, args.g_max, args.points)


def cmd_rate_curve(args):
    rho = 10.0 ** (args.snr_db / 10.0)  # unit mean gain, so rho is the mean SNR
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["g_hat", "scheme", "eps", "p_target", "rate"])
        for g in _amplitudes(args):
            for eps in args.eps:
                for p in args.p_target:
                    w.writerow([_fmt(g), "robust", _fmt(eps), _fmt(p), _fmt(robust_rate(g, eps, rho, p).rate)])
            for a in args.backoff:
                w.writerow([_fmt(g), f"nonrobust-a{a:g}", "", "", _fmt(a * capacity(g, rho))])


def cmd_outage_curve(args):
    rho = 10.0 ** (args.snr_db / 10.0)
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["g_hat", "scheme", "eps", "p_target", "outage"])
        for g in _amplitudes(args):
            for eps in args.eps:
                for p in args.p_target:
                    d = robust_rate(g, eps, rho, p)
                    w.writerow([_fmt(g), "robust", _fmt(eps), _fmt(p), _fmt(d.p_out)])
                for a in args.backoff:
                    d = nonrobust_rate(g, rho, a, eps)
                    w.writerow([_fmt(g), f"nonrobust-a{a:g}", _fmt(eps), "", _fmt(d.p_out)])


def cmd_throughput_vs_target(args):
    """Mean delivered rate of a unit-gain link versus the target outage."""
    rho = 10.0 ** (args.snr_db / 10.0)
    rng = np.random.default_rng(args.seed)
    h = standard_complex_normal(rng, args.samples)
    noise = standard_complex_normal(rng, args.samples)
    targets = np.geomspace(args.p_min, args.p_max, args.points)
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["p_target", "eps", "throughput", "empirical_outage"])
        for eps in args.eps:
            h_hat = estimate_from_noise(h, eps, 1.0, noise)
            g_hat = np.abs(h_hat)
            cap = capacity(np.abs(h), rho)
            for p in targets:
                rates = robust_rates(g_hat, eps, rho, p)
                ok = rates <= cap
                w.writerow([_fmt(p), _fmt(eps), _fmt(np.mean(rates * ok)), _fmt(1.0 - ok.mean())])


def cmd_uncertainty_curve(args):
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["delay", "snr_db", "eps_normalized"])
        for snr_db in args.snr_db:
            for delay in range(args.max_delay + 1):
                cfg = CsiConfig(
                    delay=delay,
                    coherence_time=args.coherence_time,
                    snr=10.0 ** (snr_db / 10.0),
                    window=args.window,
                    pilots=args.pilots,
                    quant_bits=args.quant_bits,
                )
                w.writerow([delay, _fmt(snr_db), _fmt(error_variance(cfg))])


def _sim_config(args) -> harness.SimConfig:
    cfg = harness.SimConfig.from_json(args.config) if args.config else harness.SimConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.paper_scale:
        overrides["drops"] = harness.PAPER_DROPS
    if args.drops is not None:
        overrides["drops"] = args.drops
    if args.slots is not None:
        overrides["slots"] = args.slots
    if args.snr_db:
        overrides["snr_db"] = tuple(args.snr_db)
    if args.delay:
        overrides["delays"] = tuple(args.delay)
    if args.scheme:
        overrides["schemes"] = tuple(args.scheme)
    if args.lut:
        overrides["use_lut"] = True
    return replace(cfg, **overrides)


def cmd_schedule_sim(args):
    cfg = _sim_config(args)
    rows = harness.aggregate(cfg, harness.run_drops(cfg, args.workers))
    if args.out is None or args.out == "-":
        w = _writer(sys.stdout)
        w.writerow(harness.CSV_HEADER)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])
    else:
        harness.write_rows(rows, args.out)


def cmd_lut_build(args):
    rho = 10.0 ** (args.snr_db / 10.0)
    lut = build_lut(default_lut_grid(1.0, args.points), args.eps, rho, args.p_target)
    if args.out is None or args.out == "-":
        raise SystemExit("lut build needs --out")
    write_lut_csv(lut, args.out)


def cmd_lut_inspect(args):
    lut = read_lut_csv(args.path)
    monotone = bool(np.all(np.diff(lut.rates) >= 0))
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["points", "g_min", "g_max", "rate_min", "rate_max", "monotone", "snr", "eps", "p_target"])
        w.writerow([
            len(lut.grid), _fmt(lut.grid[0]), _fmt(lut.grid[-1]), _fmt(lut.rates.min()),
            _fmt(lut.rates.max()), monotone, _fmt(lut.snr), _fmt(lut.eps), _fmt(lut.p_target),
        ])
        if args.check:
            # Model outage at each stored rate, evaluated at its own grid amplitude.
            w.writerow([])
            w.writerow(["g_hat", "rate", "outage"])
            for g, r in zip(lut.grid, lut.rates):
                w.writerow([_fmt(g), _fmt(r), _fmt(outage_prob(r, g, lut.eps, lut.rho))])


def _curve_args(p, eps_default):
    p.add_argument("--snr-db", type=float, default=10.0, help="mean SNR of the unit-gain link")
    p.add_argument("--eps", type=float, nargs="+", default=eps_default, help="normalized error variance(s)")
    p.add_argument("--p-target", type=float, nargs="+", default=[0.1, 0.01])
    p.add_argument("--backoff", type=float, nargs="+", default=[1.0, 0.95])
    p.add_argument("--g-min", type=float, default=0.0)
    p.add_argument("--g-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustpf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate-curve", help="assigned rate versus estimate amplitude")
    _curve_args(p, [0.1])
    p.set_defaults(func=cmd_rate_curve)

    p = sub.add_parser("outage-curve", help="resulting outage versus estimate amplitude")
    _curve_args(p, [0.1])
    p.set_defaults(func=cmd_outage_curve)

    p = sub.add_parser("throughput-vs-target", help="delivered rate versus target outage")
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--eps", type=float, nargs="+", default=[0.1])
    p.add_argument("--p-min", type=float, default=1e-3)
    p.add_argument("--p-max", type=float, default=0.9)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_throughput_vs_target)

    p = sub.add_parser("uncertainty-curve", help="normalized CSI error variance versus delay")
    p.add_argument("--snr-db", type=float, nargs="+", default=[5.0, 10.0])
    p.add_argument("--max-delay", type=int, default=20)
    p.add_argument("--coherence-time", type=float, default=10.0)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--pilots", type=int, default=8)
    p.add_argument("--quant-bits", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_uncertainty_curve)

    p = sub.add_parser("schedule-sim", help="multi-user PF scheduling sweep over delay")
    p.add_argument("--config", help="JSON file with SimConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--drops", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--snr-db", type=float, nargs="+")
    p.add_argument("--delay", type=int, nargs="+")
    p.add_argument("--scheme", nargs="+", choices=harness.BASE_SCHEMES)
    p.add_argument("--lut", action="store_true", help="use discrete look-up-table robust rates")
    p.add_argument("--paper-scale", action="store_true", help=f"run {harness.PAPER_DROPS} drops")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_schedule_sim)

    lut = sub.add_parser("lut", help="robust-rate look-up tables")
    lsub = lut.add_subparsers(dest="lut_command", required=True)
    p = lsub.add_parser("build")
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--p-target", type=float, default=0.1)
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lut_build)
    p = lsub.add_parser("inspect")
    p.add_argument("path")
    p.add_argument("--check", action="store_true", help="also list the model outage per grid point")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lut_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
