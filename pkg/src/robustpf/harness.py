"""Monte-Carlo experiment driver for rate adaptation and PF scheduling.

A drop places the users, draws their fading and CSI noise once, and then
replays every (SNR, delay, scheme) combination on those same draws so
schemes differ only by their decisions.  Drops are independent and are
the unit of parallelism; drop ``i`` is seeded from ``(seed, i)`` so the
result does not depend on how drops are distributed over workers.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import scheduler as sch
from .channel import LinkParams, pathloss, standard_fading
from .csi import CsiConfig, error_variance, estimate_from_noise, standard_complex_normal
from .rate_adapt import (
    RateDecision,
    capacity,
    default_lut_grid,
    enforce_monotone,
    outage_probs,
    robust_rates,
)

PERFECT = "perfect-csi"
NONROBUST = "nonrobust"
ALG1 = "robust-alg1"
ALG2 = "robust-alg2"
BASE_SCHEMES = (PERFECT, NONROBUST, ALG1, ALG2)

MIN_TRANSMISSIONS = 20
FULFILLED_BAND = 0.1
PAPER_DROPS = 10_000

CSV_HEADER = [
    "scheme",
    "delay",
    "snr_db",
    "pf_utility",
    "pf_utility_se",
    "mean_throughput",
    "outage_rate",
    "fulfilled_fraction",
    "fulfilled_model_fraction",
    "drops",
    "seed",
]


@dataclass(frozen=True)
class SimConfig:
    users: int = 2
    radius: float = 250.0
    pathloss_alpha: float = 3.5
    pathloss_beta: float = 10.0**-14.45
    snr_db: tuple = (5.0, 10.0)
    coherence_time: float = 10.0
    pilots: int = 8
    quant_bits: float | None = None
    window: int = 1
    delays: tuple = tuple(range(0, 21, 2))
    p_target: float = 0.1
    backoffs: tuple = (1.0, 0.95)
    drops: int = 500
    slots: int = 100
    seed: int = 20150601
    schemes: tuple = BASE_SCHEMES
    use_lut: bool = False
    lut_points: int = 512

    def __post_init__(self):
        for name in ("users", "drops", "slots", "pilots", "window", "lut_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.schemes:
            raise ValueError("schemes must be nonempty")
        unknown = set(self.schemes) - set(BASE_SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")
        if not 0 < self.p_target < 1:
            raise ValueError("p_target must lie in (0, 1)")
        if any(d < 0 for d in self.delays):
            raise ValueError("delays must be nonnegative")
        # Lists from JSON become tuples so the config stays hashable.
        for name in ("snr_db", "delays", "backoffs", "schemes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def scheme_ids(self) -> list[str]:
        ids = []
        for s in self.schemes:
            if s == NONROBUST:
                ids.extend(nonrobust_id(a) for a in self.backoffs)
            else:
                ids.append(s)
        return ids

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def nonrobust_id(backoff: float) -> str:
    return f"{NONROBUST}-a{backoff:g}"


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    delay: int
    snr_db: float
    pf_utility: float
    pf_utility_se: float
    mean_throughput: float
    outage_rate: float
    fulfilled_fraction: float
    fulfilled_model_fraction: float
    drops: int
    seed: int

    def as_list(self) -> list:
        return [getattr(self, name) for name in CSV_HEADER]


@dataclass
class SchemeOutcome:
    """Per-drop result of one (SNR, delay, scheme) run."""

    throughput: np.ndarray
    scheduled: np.ndarray
    outages: np.ndarray
    model_ok: int
    selected: np.ndarray | None = None


# ----------------------------------------------------------------------
# Setup
# ----------------------------------------------------------------------


def calibrate_power(cfg: SimConfig, snr_db: float) -> float:
    """Transmit power giving mean SNR ``snr_db`` at the cell edge."""
    return 10.0 ** (snr_db / 10.0) / pathloss(cfg.radius, cfg.pathloss_alpha, cfg.pathloss_beta)


def drop_distances(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Distances of users placed uniformly over the cell disk."""
    return cfg.radius * np.sqrt(rng.random(cfg.users))


def drop_users(cfg: SimConfig, rng: np.random.Generator, snr_db: float) -> list[LinkParams]:
    rho = calibrate_power(cfg, snr_db)
    d = np.atleast_1d(drop_distances(cfg, rng))
    gains = np.atleast_1d(pathloss(d, cfg.pathloss_alpha, cfg.pathloss_beta))
    return [LinkParams(float(g), cfg.coherence_time, rho) for g in gains]


def drop_streams(seed: int, drop: int) -> tuple[np.random.Generator, ...]:
    """Placement, fading and CSI-noise generators for one drop."""
    children = np.random.SeedSequence([seed, drop]).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def fulfilled_fraction(
    outages, scheduled, p_target: float, min_tx: int = MIN_TRANSMISSIONS, band: float = FULFILLED_BAND
) -> float:
    """Share of users whose empirical outage lies within +-band (relative) of p_target.

    Only users with at least ``min_tx`` transmissions are counted; NaN if
    there are none.
    """
    outages = np.asarray(outages, dtype=float).ravel()
    scheduled = np.asarray(scheduled, dtype=float).ravel()
    eligible = scheduled >= min_tx
    if not np.any(eligible):
        return math.nan
    rate = outages[eligible] / scheduled[eligible]
    # Tiny slack so boundary rates such as 0.11 survive rounding.
    ok = np.abs(rate - p_target) <= band * p_target * (1.0 + 1e-9)
    return float(np.mean(ok))


# ----------------------------------------------------------------------
# One drop
# ----------------------------------------------------------------------


def _lut_rates(g_hat: np.ndarray, eps: np.ndarray, lam: np.ndarray, rho: float, cfg: SimConfig):
    out = np.empty_like(g_hat)
    for k in range(g_hat.shape[0]):
        grid = default_lut_grid(lam[k], cfg.lut_points)
        table = enforce_monotone(robust_rates(grid, eps[k], rho, cfg.p_target))
        idx = np.searchsorted(grid, g_hat[k], side="right") - 1
        out[k] = np.where(idx >= 0, table[np.maximum(idx, 0)], 0.0)
    return out


def _schedule(
    rates: np.ndarray,
    p_out: np.ndarray,
    cap: np.ndarray,
    delay: int,
    kind: str,
    p_target: float,
    rng: np.random.Generator,
    keep_sequence: bool = False,
) -> SchemeOutcome:
    n_users, n_slots = rates.shape
    ledgers = [sch.UserLedger(k, delay) for k in range(n_users)]
    expected = (1.0 - p_out) * rates
    model_ok = 0
    selected = np.empty(n_slots, dtype=int) if keep_sequence else None
    metrics = np.empty(n_users)
    for n in range(1, n_slots + 1):
        i = n - 1
        for k, led in enumerate(ledgers):
            if kind == PERFECT or kind == ALG2:
                # Perfect CSI makes every pending outcome certain (p_out = 0).
                metrics[k] = sch.metric_delayed(expected[k, i], led, n, rng)
            elif kind == ALG1:
                metrics[k] = sch.metric_immediate(expected[k, i], led.known_throughput())
            else:
                metrics[k] = sch.metric_immediate(rates[k, i], led.known_throughput())
        chosen = sch.select_user(metrics)
        if keep_sequence:
            selected[i] = chosen
        if abs(p_out[chosen, i] - p_target) <= FULFILLED_BAND * p_target:
            model_ok += 1
        for k, led in enumerate(ledgers):
            dec = RateDecision(float(rates[k, i]), float(p_out[k, i])) if k == chosen else None
            sch.resolve_and_advance(led, n, float(cap[k, i]), dec)
    return SchemeOutcome(
        throughput=np.array([led.throughput() for led in ledgers]),
        scheduled=np.array([led.scheduled for led in ledgers]),
        outages=np.array([led.outages for led in ledgers]),
        model_ok=model_ok,
        selected=selected,
    )


def run_drop(cfg: SimConfig, drop: int, keep_sequence: bool = False) -> dict:
    """Simulate one drop for every (snr_db, delay, scheme id).

    Returns a dict keyed by (snr_db, delay, scheme_id) of SchemeOutcome.
    """
    place_rng, fade_rng, csi_rng = drop_streams(cfg.seed, drop)
    dist = np.atleast_1d(drop_distances(cfg, place_rng))
    lam = np.atleast_1d(pathloss(dist, cfg.pathloss_alpha, cfg.pathloss_beta))
    unit_fading = np.stack(
        [standard_fading(cfg.coherence_time, cfg.slots, fade_rng) for _ in range(cfg.users)]
    )
    csi_noise = standard_complex_normal(csi_rng, (cfg.users, cfg.slots))
    # Fallback Monte-Carlo draws for huge pending windows; unused for nu <= NU_CAP.
    mc_seed = np.random.SeedSequence([cfg.seed, drop, 1])

    h = np.sqrt(lam)[:, None] * unit_fading
    out = {}
    for snr_db in cfg.snr_db:
        rho = calibrate_power(cfg, snr_db)
        cap = capacity(np.abs(h), rho)
        for delay in cfg.delays:
            eps = np.array(
                [
                    error_variance(
                        CsiConfig(
                            delay=delay,
                            coherence_time=cfg.coherence_time,
                            snr=rho * lam_k,
                            mean_gain=lam_k,
                            window=cfg.window,
                            pilots=cfg.pilots,
                            quant_bits=cfg.quant_bits,
                        )
                    )
                    for lam_k in lam
                ]
            )
            eps_b = np.broadcast_to(eps[:, None], h.shape)
            h_hat = estimate_from_noise(h, eps_b, lam[:, None], csi_noise)
            g_hat = np.abs(h_hat)
            for scheme in cfg.scheme_ids():
                rng = np.random.default_rng(mc_seed)
                if scheme == PERFECT:
                    rates, p_out, kind = cap, np.zeros_like(cap), PERFECT
                elif scheme.startswith(NONROBUST):
                    a = float(scheme[len(NONROBUST) + 2:])
                    rates = a * capacity(g_hat, rho)
                    p_out = outage_probs(rates, g_hat, eps_b, rho)
                    kind = NONROBUST
                else:
                    if cfg.use_lut:
                        rates = _lut_rates(g_hat, eps, lam, rho, cfg)
                    else:
                        rates = robust_rates(g_hat, eps_b, rho, cfg.p_target)
                    p_out = outage_probs(rates, g_hat, eps_b, rho)
                    kind = scheme
                out[(snr_db, delay, scheme)] = _schedule(
                    rates, p_out, cap, delay, kind, cfg.p_target, rng, keep_sequence
                )
    return out


# ----------------------------------------------------------------------
# Experiment
# ----------------------------------------------------------------------


def _run_drop_task(args):
    cfg, drop = args
    return run_drop(cfg, drop)


def run_drops(cfg: SimConfig, workers: int = 1) -> list[dict]:
    """Per-drop outcomes in drop order, optionally on a process pool."""
    tasks = [(cfg, i) for i in range(cfg.drops)]
    if workers <= 1:
        return [_run_drop_task(t) for t in tasks]
    chunk = max(1, cfg.drops // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_drop_task, tasks, chunksize=chunk))


def aggregate(cfg: SimConfig, results: list[dict]) -> list[MetricsRow]:
    rows = []
    n = len(results)
    for scheme in cfg.scheme_ids():
        for delay in cfg.delays:
            for snr_db in cfg.snr_db:
                outs = [r[(snr_db, delay, scheme)] for r in results]
                utils = np.array([sch.utility(o.throughput) for o in outs])
                thr = np.array([o.throughput for o in outs])
                scheduled = np.array([o.scheduled for o in outs])
                outages = np.array([o.outages for o in outs])
                total_tx = scheduled.sum()
                rows.append(
                    MetricsRow(
                        scheme=scheme,
                        delay=int(delay),
                        snr_db=float(snr_db),
                        pf_utility=float(utils.mean()),
                        pf_utility_se=float(utils.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
                        mean_throughput=float(thr.mean()),
                        outage_rate=float(outages.sum() / total_tx) if total_tx else math.nan,
                        fulfilled_fraction=fulfilled_fraction(outages, scheduled, cfg.p_target),
                        fulfilled_model_fraction=float(sum(o.model_ok for o in outs) / total_tx)
                        if total_tx
                        else math.nan,
                        drops=n,
                        seed=cfg.seed,
                    )
                )
    return rows


def write_rows(rows: list[MetricsRow], path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for row in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def run_experiment(cfg: SimConfig, out=None, workers: int = 1) -> list[MetricsRow]:
    rows = aggregate(cfg, run_drops(cfg, workers))
    if out is not None:
        write_rows(rows, out)
    return rows
