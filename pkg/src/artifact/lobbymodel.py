"""Expected waits of future lobby passengers for a given car landing pattern.

Cars land at the lobby at known times. Lobby arrivals form a Poisson stream;
a car that lands on an empty lobby stays there until somebody boards it, and
one that lands on a queue takes everybody. The expected (discounted) integral
of the queue length up to the last landing comes out of a backward pass over a
small semi-Markov grid of states (i, j, m): i cars still to land, j cars idle
at the lobby, m cars gone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Tuple

import mpmath
import numpy as np
from scipy import integrate, special

from .core import DomainError


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class LandingPattern:
    times_s: tuple
    parked_count: int = 0

    @property
    def num_cars(self) -> int:
        return len(self.times_s)

    @property
    def horizon_s(self) -> float:
        return self.times_s[-1] if self.times_s else 0.0


def canonicalize(pattern) -> LandingPattern:
    """Sort landing times ascending; cars at time zero count as parked."""
    times = pattern.times_s if isinstance(pattern, LandingPattern) else pattern
    times = tuple(float(t) for t in times)
    for t in times:
        if not (t >= 0.0) or math.isinf(t):
            raise DomainError(f"landing times must be finite and >= 0, got {t}")
    times = tuple(sorted(times))
    return LandingPattern(times, sum(1 for t in times if t == 0.0))


def _check_rate_dt(rate, dt):
    if rate < 0 or dt < 0:
        raise DomainError(f"rate and dt must be >= 0, got rate={rate}, dt={dt}")


def poisson_pmf(rate: float, dt: float, x: int) -> float:
    """P[exactly x arrivals in dt], evaluated in log space."""
    _check_rate_dt(rate, dt)
    if x < 0:
        raise DomainError(f"count must be >= 0, got {x}")
    mu = rate * dt
    if mu == 0.0:
        return 1.0 if x == 0 else 0.0
    return math.exp(x * math.log(mu) - mu - math.lgamma(x + 1))


def tail_prob(rate: float, dt: float, n: int) -> float:
    """P[at least n arrivals in dt], the complement of the first n pmf terms."""
    _check_rate_dt(rate, dt)
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if n == 0:
        return 1.0
    head = math.fsum(poisson_pmf(rate, dt, x) for x in range(n))
    return min(1.0, max(0.0, 1.0 - head))


# Antiderivatives of the bold-transition cost density. Both take the
# integration constant as zero; only F(dt) - F(0) and G(dt) - G(0) matter.
# ``ctx`` is ``math`` for float evaluation or an mpmath context.

def closed_form_G(t, j: int, rate, ctx=math):
    """Undiscounted antiderivative: G(dt) - G(0) is the cost over an interval of length dt."""
    if rate == 0:
        return -j * t
    exp = ctx.exp
    lam = rate
    total = lam / 2 * t * t - j * t
    for x in range(j + 1):
        inner = 0
        for l in range(x + 1):
            inner += t ** (x - l) / (ctx.factorial(x - l) * lam ** (l + 1))
        total += lam ** x * exp(-lam * t) * (x - j) * inner
    return total


def closed_form_F(t, j: int, rate, beta, ctx=math):
    """Discounted antiderivative (beta > 0)."""
    if beta <= 0:
        raise DomainError("closed_form_F needs beta > 0; use closed_form_G for beta = 0")
    exp = ctx.exp
    lam = rate
    s = lam + beta
    total = (beta * j - beta * lam * t - lam) * exp(-beta * t) / beta ** 2
    for x in range(j + 1):
        inner = 0
        for l in range(x + 1):
            inner += t ** (x - l) / (ctx.factorial(x - l) * s ** (l + 1))
        total += lam ** x * exp(-s * t) * (x - j) * inner
    return total


def _antiderivative_difference(j, t_start, dt, rate, beta, ctx):
    if beta > 0:
        diff = closed_form_F(dt, j, rate, beta, ctx) - closed_form_F(0 * dt, j, rate, beta, ctx)
    else:
        diff = closed_form_G(dt, j, rate, ctx) - closed_form_G(0 * dt, j, rate, ctx)
    return ctx.exp(-beta * t_start) * diff


def closed_form_cost(j: int, t_start: float, dt: float, rate: float, beta: float,
                     precise: bool = False) -> float:
    """Expected discounted wait accrued on the bold transition out of a state with j idle cars.

    The float path evaluates the antiderivative difference term by term with
    regularized incomplete gammas, which is exact algebra but can lose relative
    accuracy when the cost is tiny next to j*dt. ``precise=True`` evaluates the
    antiderivatives themselves in extended precision, raising the working
    precision until two successive results agree to 1e-13.
    """
    if j < 0 or t_start < 0 or beta < 0:
        raise DomainError("j, t_start and beta must be >= 0")
    _check_rate_dt(rate, dt)
    if rate == 0 or dt == 0:
        return 0.0
    if precise:
        return _precise_cost(j, t_start, dt, rate, beta)
    return float(bold_costs(j, t_start, dt, rate, beta)[j])


def _precise_cost(j, t_start, dt, rate, beta):
    previous = None
    for dps in (40, 80, 160, 320, 640):
        with mpmath.workdps(dps):
            value = _antiderivative_difference(
                j, mpmath.mpf(t_start), mpmath.mpf(dt), mpmath.mpf(rate), mpmath.mpf(beta), mpmath)
        if previous is not None and abs(value - previous) <= 1e-13 * abs(value):
            return float(value)
        previous = value
    raise ArithmeticError(f"closed form did not stabilise for j={j}, dt={dt}, rate={rate}, beta={beta}")


def bold_costs(j_max: int, t_start: float, dt: float, rate: float, beta: float) -> np.ndarray:
    """Bold-transition costs for every idle count 0..j_max over one interval."""
    out = np.zeros(j_max + 1)
    if rate == 0 or dt == 0:
        return out
    lam = rate
    s = lam + beta
    bdt = beta * dt
    # integral of exp(-beta u) over [0, dt] and of u exp(-beta u)
    if bdt < 1e-4:
        e0 = dt * (1 - bdt / 2 + bdt * bdt / 6 - bdt ** 3 / 24)
        e1 = dt * dt * (0.5 - bdt / 3 + bdt * bdt / 8 - bdt ** 3 / 30)
    else:
        e0 = -math.expm1(-bdt) / beta
        e1 = (-math.expm1(-bdt) - bdt * math.exp(-bdt)) / beta ** 2
    sdt = s * dt
    xs = np.arange(j_max + 61)
    # lam^x / s^(x+1) * P(x+1, s dt) is the integral of exp(-beta u) p(x; lam u)
    log_ratio = xs * math.log(lam / s) - math.log(s)
    with np.errstate(divide="ignore"):
        # combined in log space so a tiny s cannot produce inf * 0
        exact_terms = np.exp(log_ratio + np.log(special.gammainc(xs + 1, sdt)))
    for j in range(j_max + 1):
        if sdt < (j + 1) / 2:
            # thin tail: sum it directly, terms at least halve each step
            out[j] = float(np.dot(xs[j + 1:] - j, exact_terms[j + 1:]))
        else:
            head = float(np.dot(j - xs[: j + 1], exact_terms[: j + 1]))
            out[j] = max(0.0, lam * e1 - j * e0 + head)
    return out * math.exp(-beta * t_start)


def _expected_excess(mu: float, j: int, tol: float) -> float:
    """E[(N - j)^+] for N ~ Poisson(mu), choosing the cancellation-free form."""
    if mu == 0.0:
        return 0.0
    if mu > j + 1:
        head = math.fsum((j - x) * math.exp(x * math.log(mu) - mu - math.lgamma(x + 1)) for x in range(j + 1))
        return mu - j + head
    total = 0.0
    x = j + 1
    log_mu = math.log(mu)
    while True:
        term = (x - j) * math.exp(x * log_mu - mu - math.lgamma(x + 1))
        total += term
        # terms shrink at least geometrically once x > mu; bound the remainder
        ratio = mu / (x + 1) * (x + 1 - j) / (x - j)
        if ratio < 1 and term * ratio / (1 - ratio) < tol / 100 * total:
            return total
        x += 1
        if x > j + 10_000:
            return total


def quadrature_cost(j: int, t_start: float, dt: float, rate: float, beta: float,
                    tol: float = 1e-12) -> float:
    """Adaptive numerical integral of the discounted expected-excess density."""
    if tol <= 0:
        raise DomainError("tol must be > 0")
    if j < 0 or t_start < 0 or beta < 0:
        raise DomainError("j, t_start and beta must be >= 0")
    _check_rate_dt(rate, dt)
    if rate == 0 or dt == 0:
        return 0.0

    def integrand(u):
        return math.exp(-beta * (t_start + u)) * _expected_excess(rate * u, j, tol)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(integrand, 0.0, dt, epsabs=0.0, epsrel=tol, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(
                f"quadrature failed for j={j}, t_start={t_start}, dt={dt}, rate={rate}, beta={beta}: {exc}"
            ) from exc
    if value > 0 and abserr > max(tol * 100, 1e-6) * value:
        raise QuadratureError(
            f"quadrature error estimate {abserr:.3e} too large for value {value:.3e} "
            f"(j={j}, dt={dt}, rate={rate}, beta={beta})")
    return value


@dataclass
class Transition:
    target: tuple
    probability: float
    duration_s: float
    cost: float  # expected discounted wait accrued over the interval (unconditional)
    arrivals: str  # "x" for an exact count, "n+" for the bold transition


@dataclass
class LobbyGrid:
    num_cars: int
    transitions: Dict[tuple, list] = field(default_factory=dict)
    cost_to_go: Dict[tuple, float] = field(default_factory=dict)

    @property
    def states(self) -> list:
        c = self.num_cars
        return [(i, j, c - i - j) for i in range(c, -1, -1) for j in range(c - i + 1)]


def build_grid(pattern: LandingPattern, rate: float, beta: float) -> LobbyGrid:
    """Transitions of every non-terminal state, costs pre-discounted to time zero."""
    if rate < 0 or beta < 0:
        raise DomainError("rate and beta must be >= 0")
    times = pattern.times_s
    c = len(times)
    grid = LobbyGrid(c)
    previous = 0.0
    for i in range(c, 0, -1):
        # next landing is car number c - i + 1
        t_start = previous
        t_end = times[c - i]
        dt = t_end - t_start
        previous = t_end
        costs = bold_costs(c, t_start, dt, rate, beta)
        pmf = [poisson_pmf(rate, dt, x) for x in range(c + 1)]
        for j in range(c - i + 1):
            m = c - i - j
            moves = [Transition((i - 1, j - x + 1, m + x), pmf[x], dt, 0.0, str(x)) for x in range(j + 1)]
            moves.append(Transition((i - 1, 0, m + j + 1), tail_prob(rate, dt, j + 1), dt,
                                    float(costs[j]), f"{j + 1}+"))
            grid.transitions[(i, j, m)] = moves
    return grid


def solve_grid(grid: LobbyGrid) -> LobbyGrid:
    c = grid.num_cars
    ctg = {}
    for j in range(c + 1):
        ctg[(0, j, c - j)] = 0.0
    for i in range(1, c + 1):
        for j in range(c - i + 1):
            state = (i, j, c - i - j)
            # costs are unconditional expectations over the interval, not per-branch
            ctg[state] = sum(t.probability * ctg[t.target] + t.cost for t in grid.transitions[state])
    grid.cost_to_go = ctg
    return grid


def expected_lobby_wait(pattern, rate: float, beta: float) -> float:
    """Expected discounted cumulative lobby wait up to the last landing."""
    pattern = canonicalize(pattern)
    if rate < 0 or beta < 0:
        raise DomainError("rate and beta must be >= 0")
    c = pattern.num_cars
    if c == 0 or rate == 0.0 or pattern.horizon_s == 0.0:
        return 0.0
    return _fast_lobby_wait(pattern.times_s, rate, beta)


def _fast_lobby_wait(times, rate, beta):
    """Backward pass over the grid without materialising transition objects."""
    c = len(times)
    # cost-to-go of row i - 1, indexed by j
    below = [0.0] * (c + 1)
    previous = 0.0
    intervals = []
    for t in times:
        intervals.append((previous, t - previous))
        previous = t
    # row i uses interval number c - i (0-based)
    for i in range(1, c + 1):
        t_start, dt = intervals[c - i]
        here = [0.0] * (c - i + 1)
        if dt == 0.0:
            for j in range(c - i + 1):
                here[j] = below[j + 1]
        else:
            costs = bold_costs(c - i, t_start, dt, rate, beta)
            mu = rate * dt
            if mu > 0.0:
                log_mu = math.log(mu)
                pmf = [math.exp(x * log_mu - mu - math.lgamma(x + 1)) for x in range(c - i + 1)]
            else:
                pmf = [1.0] + [0.0] * (c - i)
            tails = special.pdtrc(np.arange(c - i + 1), mu)
            for j in range(c - i + 1):
                acc = 0.0
                for x in range(j + 1):
                    acc += pmf[x] * below[j - x + 1]
                acc += tails[j] * below[0] + costs[j]
                here[j] = acc
        below = here + [0.0] * (c + 1 - len(here))
    return below[0]


def mc_lobby_wait(pattern, rate: float, beta: float, reps: int, seed: int) -> Tuple[float, float]:
    """Monte-Carlo estimate (mean, standard error) of the discounted lobby wait.

    Each replication plays the lobby queue forward event by event: an arrival
    takes an idle car if one is there and otherwise joins the queue; a landing
    car clears the queue or, finding nobody, becomes idle.
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    pattern = canonicalize(pattern)
    times = np.asarray(pattern.times_s, dtype=float)
    if rate == 0.0 or len(times) == 0 or times[-1] == 0.0:
        return 0.0, 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    n = reps
    clock = np.zeros(n)
    queue = np.zeros(n, dtype=np.int64)
    idle = np.zeros(n, dtype=np.int64)
    landed = np.zeros(n, dtype=np.int64)
    acc = np.zeros(n)
    next_arrival = rng.exponential(1.0 / rate, size=n)
    c = len(times)
    active = np.ones(n, dtype=bool)

    def weight(a, b):
        if beta == 0.0:
            return b - a
        return (np.exp(-beta * a) - np.exp(-beta * b)) / beta

    while active.any():
        idx = np.flatnonzero(active)
        landing_time = times[np.minimum(landed[idx], c - 1)]
        arrival_time = next_arrival[idx]
        # landings win ties so a car landing exactly at an arrival is available to it
        is_landing = landing_time <= arrival_time
        event_time = np.where(is_landing, landing_time, arrival_time)
        acc[idx] += queue[idx] * weight(clock[idx], event_time)
        clock[idx] = event_time

        land_idx = idx[is_landing]
        has_queue = queue[land_idx] > 0
        queue[land_idx[has_queue]] = 0
        idle[land_idx[~has_queue]] += 1
        landed[land_idx] += 1

        arr_idx = idx[~is_landing]
        has_idle = idle[arr_idx] > 0
        idle[arr_idx[has_idle]] -= 1
        queue[arr_idx[~has_idle]] += 1
        next_arrival[arr_idx] += rng.exponential(1.0 / rate, size=len(arr_idx))

        assert not np.any((idle > 0) & (queue > 0)), "idle cars coexist with a queue"
        active = landed < c
    mean = float(acc.mean())
    stderr = float(acc.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, stderr


def normalize_wait(v: float, beta: float, rate: float, t_last: float) -> float:
    """Convert a discounted cumulative wait into an average wait per lobby passenger."""
    if v < 0 or t_last < 0 or beta < 0:
        raise DomainError("v, beta and t_last must be >= 0")
    if rate == 0.0 or t_last == 0.0 or v == 0.0:
        return 0.0
    if rate < 0:
        raise DomainError("rate must be >= 0")
    bt = beta * t_last
    if bt < 1e-12:
        weight_total = t_last
    else:
        weight_total = -math.expm1(-bt) / beta
    return v / (rate * weight_total)
