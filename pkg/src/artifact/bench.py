"""Experiment harness: paired seeded sweeps, validation gates and plot data."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import lobbymodel as lm
from .core import (BuildingSpec, CarState, ConfigError, Direction, DomainError, HallCall, _read_ini)
from .forecast import candidate_table, enumerate_scenarios, expected_profile, sample_profile
from .policy import POLICIES, SchedulerParams, assign_esa_dp, assign_esa_dp_la
from .sim import TrafficProfile, run_trial

CSV_COLUMNS = ("building", "floors", "shafts", "rate", "policy", "alpha", "beta", "seed",
               "avg_wait_s", "max_wait_s", "served", "unserved", "traffic_hash")


@dataclass(frozen=True)
class SweepConfig:
    buildings: tuple
    rates: tuple
    policies: tuple = POLICIES
    seeds: tuple = tuple(range(1000, 1020))
    fit_seeds: tuple = tuple(range(0, 20))
    alphas: tuple = (0.2,)
    betas: tuple = (0.02,)
    duration_s: float = 3600.0
    lobby_fraction: float = 0.8
    stop_wait_s: float = 60.0
    output: Optional[str] = None

    def __post_init__(self):
        for name in ("buildings", "rates", "policies", "seeds", "alphas", "betas"):
            if not getattr(self, name):
                raise DomainError(f"sweep {name} must be non-empty")
        for p in self.policies:
            if p not in POLICIES:
                raise DomainError(f"unknown policy {p!r}")
        overlap = set(self.seeds) & set(self.fit_seeds)
        if overlap:
            raise DomainError(f"fitting and test seeds overlap: {sorted(overlap)[:5]}")
        if len(set(self.seeds)) != len(self.seeds):
            raise DomainError("duplicate test seeds")
        if any(r < 0 for r in self.rates):
            raise DomainError("rates must be >= 0")


def default_sweep() -> SweepConfig:
    return SweepConfig(buildings=(BuildingSpec(8, 3), BuildingSpec(15, 6)), rates=(600, 1200, 1800, 2500))


def _parse_list(raw: str, cast, path, key):
    items = []
    for part in raw.replace("\n", ",").split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if cast is int and "-" in part[1:]:
                lo, hi = part.split("-", 1)
                items.extend(range(int(lo), int(hi) + 1))
            else:
                items.append(cast(part))
        except ValueError as exc:
            raise ConfigError(path, key, f"cannot parse {part!r}") from exc
    return tuple(items)


def _parse_building(token: str, kin: dict, path) -> BuildingSpec:
    try:
        floors, cars = token.lower().split("x")
        return BuildingSpec(int(floors), int(cars), **kin)
    except (ValueError, DomainError) as exc:
        raise ConfigError(path, "buildings", f"bad building {token!r}, expected FLOORSxCARS") from exc


_SWEEP_KEYS = {"buildings", "rates", "policies", "seeds", "fit_seeds", "alphas", "betas", "duration_s",
               "lobby_fraction", "stop_wait_s", "output", "dwell_s", "speed_mps", "floor_height_m",
               "lobby_height_m"}


def load_sweep_config(path) -> SweepConfig:
    """Read a ``[sweep]`` section, e.g. ``buildings = 8x3, 15x6`` and ``seeds = 1000-1019``."""
    parser = _read_ini(path)
    if not parser.has_section("sweep"):
        raise ConfigError(path, "sweep", "missing [sweep] section")
    sec = parser["sweep"]
    for key in sec:
        if key not in _SWEEP_KEYS:
            raise ConfigError(path, key, "unknown sweep key")
    kin = {}
    for key, attr in (("dwell_s", "stop_dwell_s"), ("speed_mps", "car_speed_mps"),
                      ("floor_height_m", "floor_height_m"), ("lobby_height_m", "lobby_height_m")):
        if key in sec:
            kin[attr] = _parse_list(sec[key], float, path, key)[0]
    for key in ("buildings", "rates"):
        if key not in sec:
            raise ConfigError(path, key, "required key missing")
    kwargs = {
        "buildings": tuple(_parse_building(tok.strip(), kin, path)
                           for tok in sec["buildings"].split(",") if tok.strip()),
        "rates": _parse_list(sec["rates"], float, path, "rates"),
    }
    if "policies" in sec:
        kwargs["policies"] = tuple(p.strip() for p in sec["policies"].split(",") if p.strip())
    for key in ("seeds", "fit_seeds"):
        if key in sec:
            kwargs[key] = _parse_list(sec[key], int, path, key)
    for key in ("alphas", "betas"):
        if key in sec:
            kwargs[key] = _parse_list(sec[key], float, path, key)
    for key in ("duration_s", "lobby_fraction", "stop_wait_s"):
        if key in sec:
            kwargs[key] = _parse_list(sec[key], float, path, key)[0]
    if "output" in sec:
        kwargs["output"] = sec["output"].strip()
    try:
        return SweepConfig(**kwargs)
    except DomainError as exc:
        raise ConfigError(path, "sweep", str(exc)) from exc


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if float(x).is_integer():
        return str(int(x))
    return format(float(x), ".6f")


def _run_cell(task) -> dict:
    building, rate, policy, alpha, beta, seed, duration, lobby_fraction = task
    profile = TrafficProfile(rate, lobby_fraction, duration, seed)
    params = SchedulerParams(alpha if alpha is not None else 0.2, beta if beta is not None else 0.02)
    m = run_trial(building, policy, profile, params)
    return {
        "building": building.label, "floors": building.num_floors, "shafts": building.num_cars,
        "rate": _fmt(rate), "policy": policy,
        "alpha": "" if alpha is None else _fmt(alpha), "beta": "" if beta is None else _fmt(beta),
        "seed": seed, "avg_wait_s": format(m.average_wait, ".6f"), "max_wait_s": format(m.max_wait, ".6f"),
        "served": m.served, "unserved": m.unserved, "traffic_hash": m.traffic_hash,
    }


def _row_key(row):
    return (int(row["floors"]), int(row["shafts"]), float(row["rate"]), int(row["seed"]), row["policy"],
            row["alpha"], row["beta"])


def run_sweep(config: SweepConfig, jobs: int = 1, which: str = "test") -> List[dict]:
    """One row per (building, rate, seed, policy, alpha, beta); alpha/beta are
    blank for policies that ignore them.

    Rates are run in ascending order per building; the ladder stops after the
    first rate at which some policy's seed-averaged wait exceeds ``stop_wait_s``.
    """
    if which not in ("test", "fit"):
        raise DomainError("which must be 'test' or 'fit'")
    seeds = config.seeds if which == "test" else config.fit_seeds
    rows = []
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for building in config.buildings:
            for rate in sorted(config.rates):
                tasks = []
                for seed in seeds:
                    for policy in config.policies:
                        combos = ([(a, b) for a in config.alphas for b in config.betas]
                                  if policy == "esa-dp-la" else [(None, None)])
                        for a, b in combos:
                            tasks.append((building, rate, policy, a, b, seed, config.duration_s,
                                          config.lobby_fraction))
                results = list(pool.map(_run_cell, tasks)) if pool else [_run_cell(t) for t in tasks]
                rows.extend(results)
                means: Dict[tuple, list] = {}
                for r in results:
                    means.setdefault((r["policy"], r["alpha"], r["beta"]), []).append(float(r["avg_wait_s"]))
                if any(np.mean(v) > config.stop_wait_s for v in means.values()):
                    break
    finally:
        if pool:
            pool.shutdown()
    rows.sort(key=_row_key)
    return rows


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in CSV_COLUMNS})
    return buf.getvalue()


def write_csv(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(rows_to_csv(rows), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> List[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


# plot data

PLOT_KINDS = ("vs-conventional", "vs-esa-dp", "beta-curve")


def _seed_means(rows, policy, alpha=None, beta=None):
    out: Dict[tuple, Dict[int, float]] = {}
    for r in rows:
        if r["policy"] != policy:
            continue
        if alpha is not None and (r["alpha"], r["beta"]) != (alpha, beta):
            continue
        cell = (r["building"], r["rate"])
        out.setdefault(cell, {})[int(r["seed"])] = float(r["avg_wait_s"])
    return out


def scatter_points(rows, baseline: str, target: str = "esa-dp-la") -> List[dict]:
    """One point per building x rate (x alpha, beta for the target) over the seeds both policies ran."""
    combos = sorted({(r["alpha"], r["beta"]) for r in rows if r["policy"] == target})
    base = _seed_means(rows, baseline)
    points = []
    for alpha, beta in combos:
        tgt = _seed_means(rows, target, alpha, beta) if target == "esa-dp-la" else _seed_means(rows, target)
        for cell in sorted(set(base) & set(tgt), key=lambda c: (c[0], float(c[1]))):
            seeds = sorted(set(base[cell]) & set(tgt[cell]))
            if not seeds:
                continue
            x = float(np.mean([base[cell][s] for s in seeds]))
            y = float(np.mean([tgt[cell][s] for s in seeds]))
            points.append({"building": cell[0], "rate": cell[1], "alpha": alpha, "beta": beta,
                           "x_wait_s": x, "y_wait_s": y, "speedup": (x - y) / x if x > 0 else 0.0,
                           "seeds": len(seeds)})
    return points


def beta_curve(rows) -> List[dict]:
    groups: Dict[tuple, list] = {}
    for r in rows:
        if r["policy"] == "esa-dp-la":
            groups.setdefault((r["building"], r["rate"], r["alpha"], r["beta"]), []).append(float(r["avg_wait_s"]))
    out = []
    for key in sorted(groups, key=lambda k: (k[0], float(k[1]), float(k[2]), float(k[3]))):
        v = np.array(groups[key])
        err = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append({"building": key[0], "rate": key[1], "alpha": key[2], "beta": key[3],
                    "mean_wait_s": float(v.mean()), "stderr_s": err, "n": len(v)})
    return out


def emit_plot_data(rows, kind: str, path, target: str = "esa-dp-la") -> Path:
    """Write scatter (``vs-conventional``, ``vs-esa-dp``) or ``beta-curve`` data as CSV."""
    if kind == "beta-curve":
        cols = ("building", "rate", "alpha", "beta", "mean_wait_s", "stderr_s", "n")
        data = beta_curve(rows)
    elif kind in ("vs-conventional", "vs-esa-dp"):
        cols = ("building", "rate", "alpha", "beta", "x_wait_s", "y_wait_s", "speedup", "seeds")
        data = scatter_points(rows, kind[3:], target)
    else:
        raise DomainError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for d in data:
        w.writerow([_fmt(d[c]) if isinstance(d[c], float) else d[c] for c in cols])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def sign_test(baseline: Sequence[float], candidate: Sequence[float]) -> dict:
    """One-sided paired sign test that ``candidate`` is lower; ties are dropped."""
    wins = sum(c < b for b, c in zip(baseline, candidate))
    losses = sum(c > b for b, c in zip(baseline, candidate))
    n = wins + losses
    p = stats.binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return {"wins": wins, "losses": losses, "n": n, "p_value": float(p)}


# validation gates

DECISION_SUITE_BUILDING = BuildingSpec(15, 6)


@lru_cache(maxsize=4)
def decision_suite(size: int = 100, seed: int = 4242) -> tuple:
    """Fixed (bank, call) states sampled evenly from one seeded ESA-DP trial."""
    states = []
    run_trial(DECISION_SUITE_BUILDING, "esa-dp", TrafficProfile(2500, duration_s=900, seed=seed),
              decision_hook=lambda bank, call, rec: states.append((bank, call)))
    if len(states) < size:
        raise DomainError(f"trial produced only {len(states)} decisions")
    step = len(states) // size
    return tuple(states[::step][:size])


def forecast_oracle_states() -> list:
    """Small car states (at most three waiting calls) with a 10-floor building."""
    b = BuildingSpec(10, 3)
    h = b.height
    up, down = Direction.UP, Direction.DOWN
    cars = [
        CarState(1, 0.0, Direction.IDLE, (), (HallCall(1, up, 9.0, 1),), 0.0),
        CarState(1, h(5) + 1.5, up, (8, 9), (HallCall(7, down, 3.0, 1), HallCall(3, up, 4.0, 2)), 0.0, True),
        CarState(1, h(6), down, (2,), (HallCall(4, down, 1.0, 1), HallCall(9, down, 2.0, 2),
                                       HallCall(1, up, 5.0, 3)), 14.0),
        CarState(1, h(3) - 0.7, down, (), (HallCall(8, up, 0.0, 1), HallCall(2, up, 6.0, 2)), 0.0, True),
        CarState(1, h(1), up, (4, 10), (HallCall(1, up, 8.0, 1), HallCall(6, down, 8.5, 2),
                                        HallCall(5, up, 9.5, 3)), 15.0),
    ]
    return [(b, car, 10.0) for car in cars]


@dataclass
class GateResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0


DEFAULT_TOLERANCES = {
    "closed_form": 1e-8,       # relative error vs quadrature
    "analytic_j0": 1e-12,
    "analytic_j1": 1e-10,
    "mc_vs_dp": 3.0,           # in standard errors
    "normalize_limit": 1e-3,   # relative
    "forecast_enum": 1e-9,     # walk vs exhaustive enumeration, seconds
    "forecast_mc": 3.0,        # in standard errors
    "policy_reduction": 0.0,   # fraction of suite decisions that differ
}


def _gate(name, errors_fn, tol):
    t0 = time.perf_counter()
    err, detail = errors_fn()
    err = float(err)
    return GateResult(name, bool(err <= tol), err, float(tol), detail, time.perf_counter() - t0)


def gate_closed_form():
    worst, where = 0.0, ""
    for j in range(8):
        for lam in (0.1, 0.7, 2.0):
            for beta in (0.0, 0.01, 0.02, 0.1):
                for dt in (0.5, 5.0, 30.0):
                    for ts in (0.0, 20.0):
                        a = lm.closed_form_cost(j, ts, dt, lam, beta, precise=True)
                        q = lm.quadrature_cost(j, ts, dt, lam, beta)
                        e = abs(a - q) / abs(q) if q else abs(a)
                        if e > worst:
                            worst, where = e, f"j={j} rate={lam} beta={beta} dt={dt} t_start={ts}"
    return worst, where


def gate_analytic(j):
    worst, where = 0.0, ""
    for lam in (0.1, 0.7, 2.0):
        for dt in (0.5, 5.0, 30.0):
            got = lm.closed_form_cost(j, 0.0, dt, lam, 0.0, precise=True)
            want = lam * dt * dt / 2 if j == 0 else lam * dt * dt / 2 - dt - math.expm1(-lam * dt) / lam
            e = abs(got - want) / want
            if e > worst:
                worst, where = e, f"rate={lam} dt={dt}"
    return worst, where


def mc_patterns(count: int = 10, seed: int = 7):
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for k in range(count):
        c = int(rng.integers(2, 7))
        lam = float(rng.uniform(0.1, 1.0))
        beta = (0.0, 0.02)[k % 2]
        times = sorted(float(x) for x in rng.uniform(0.0, 60.0, size=c))
        out.append((lm.canonicalize(times), lam, beta))
    return out


def gate_mc_vs_dp(reps: int = 100_000):
    worst, where = 0.0, ""
    for k, (pattern, lam, beta) in enumerate(mc_patterns()):
        dp = lm.expected_lobby_wait(pattern, lam, beta)
        mean, err = lm.mc_lobby_wait(pattern, lam, beta, reps, seed=1000 + k)
        z = abs(dp - mean) / err
        if z > worst:
            worst, where = z, f"pattern {k}: dp={dp:.6g} mc={mean:.6g}+-{err:.3g}"
    return worst, where


def gate_normalize_limit():
    worst, where = 0.0, ""
    for t1 in (5.0, 30.0, 120.0):
        lam, beta = 0.5, 1e-6
        v = lm.expected_lobby_wait(lm.canonicalize([t1]), lam, beta)
        vbar = lm.normalize_wait(v, beta, lam, t1)
        e = abs(vbar - t1 / 2) / (t1 / 2)
        if e > worst:
            worst, where = e, f"T1={t1}: V_bar={vbar:.6g}"
    return worst, where


def gate_forecast_enum():
    worst, where = 0.0, ""
    for k, (b, car, clock) in enumerate(forecast_oracle_states()):
        walk = expected_profile(car, b, clock)
        enum = expected_profile(car, b, clock, method="enumerate")
        total = math.fsum(s.probability for s in enumerate_scenarios(car, b))
        errs = [abs(walk.expected_landing - enum.expected_landing), abs(total - 1.0)]
        errs += [abs(x - y) for x, y in zip(walk.expected_waits, enum.expected_waits)]
        if max(errs) > worst:
            worst, where = max(errs), f"state {k}"
    return worst, where


def gate_forecast_mc(samples: int = 10_000):
    worst, where = 0.0, ""
    for k, (b, car, clock) in enumerate(forecast_oracle_states()):
        exact = expected_profile(car, b, clock)
        mean, err = sample_profile(car, b, clock, samples, seed=500 + k)
        pairs = [(exact.expected_landing, mean.expected_landing, err.expected_landing)]
        pairs += list(zip(exact.expected_waits, mean.expected_waits, err.expected_waits))
        for x, m, e in pairs:
            scale = max(1.0, abs(x))
            if e <= 1e-12 * scale:
                # deterministic across destinations: demand agreement to rounding
                z = 0.0 if abs(x - m) <= 1e-9 * scale else math.inf
            else:
                z = abs(x - m) / e
            if z > worst:
                worst, where = z, f"state {k}: exact={x:.6g} mc={m:.6g}+-{e:.3g}"
    return worst, where


def reduction_mismatches(alpha: float, beta: float, lobby_rate: float = 2000 / 3600) -> list:
    b = DECISION_SUITE_BUILDING
    bad = []
    for k, (bank, call) in enumerate(decision_suite()):
        table = candidate_table(bank, call, b)
        base = assign_esa_dp(bank, call, b, table)
        la = assign_esa_dp_la(bank, call, b, SchedulerParams(alpha, beta, lobby_rate), table)
        if la.chosen_car != base.chosen_car:
            bad.append(k)
    return bad


def gate_policy_reduction():
    a1 = reduction_mismatches(1.0, 0.02)
    b10 = reduction_mismatches(0.2, 10.0)
    n = len(decision_suite())
    return (len(a1) + len(b10)) / (2 * n), f"alpha=1 mismatches {a1}; beta=10 mismatches {b10}"


GATES = {
    "closed_form": gate_closed_form,
    "analytic_j0": lambda: gate_analytic(0),
    "analytic_j1": lambda: gate_analytic(1),
    "mc_vs_dp": gate_mc_vs_dp,
    "normalize_limit": gate_normalize_limit,
    "forecast_enum": gate_forecast_enum,
    "forecast_mc": gate_forecast_mc,
    "policy_reduction": gate_policy_reduction,
}


def validate_suite(tolerances: Optional[dict] = None, gates: Optional[Sequence[str]] = None) -> dict:
    """Run the oracle gates; ``tolerances`` overrides entries of DEFAULT_TOLERANCES."""
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in (tolerances or {}).items():
        if k not in tol:
            raise DomainError(f"unknown gate {k!r}")
        tol[k] = v
    names = list(gates) if gates else list(GATES)
    results = []
    for name in names:
        if name not in GATES:
            raise DomainError(f"unknown gate {name!r}")
        results.append(_gate(name, GATES[name], tol[name]))
    return {"passed": all(r.passed for r in results),
            "gates": [r.__dict__ for r in results]}
