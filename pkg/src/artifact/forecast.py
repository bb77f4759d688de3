"""Expected waits of existing passengers and expected lobby landing times per car.

Every car serves its commitments in LOOK order and, once empty, heads for the
lobby. The destinations of passengers who have not boarded yet are unknown;
each is uniform over the floors beyond the call floor in the call direction.

Two routes give the expectation over those destinations. ``simulate_delivery``
replays one fixed destination scenario and ``enumerate_scenarios`` lists them
all, so their weighted average is exact but exponential in the number of
waiting passengers. The default route walks the car floor by floor carrying a
probability vector over the number of riders whose destination is still
unknown. Conditioned on not having alighted yet, such a rider's destination
stays uniform over the floors still ahead, so the walk is exact and costs
O(floors * riders^2).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import (SILL_TOL_M, BankState, BuildingSpec, CarState, Direction, DomainError, HallCall,
                   next_stop, travel_time, travel_time_m)

DEFAULT_SCENARIO_CAP = 10_000


@dataclass(frozen=True)
class DestinationScenario:
    assignments: dict  # passenger key -> destination floor
    probability: float


@dataclass(frozen=True)
class Profile:
    """Expected pickup wait per unboarded passenger (aligned with ``assigned_unboarded``)
    and the expected time until the car, empty, reaches the lobby."""

    expected_waits: tuple
    expected_landing: float


@dataclass(frozen=True)
class CandidateTable:
    W: tuple
    N: int
    T_hat: tuple  # T_hat[i][j]: landing of car j+1 if the call goes to car i+1

    @property
    def num_cars(self) -> int:
        return len(self.W)


def destination_distribution(call: HallCall, building: BuildingSpec) -> Dict[int, float]:
    """Uniform prior over floors beyond the call floor in the call direction."""
    call.validate(building)
    if call.direction == Direction.UP:
        floors = range(call.floor + 1, building.num_floors + 1)
    else:
        floors = range(1, call.floor)
    floors = list(floors)
    if not floors:
        raise DomainError(f"call at floor {call.floor} has no feasible destination")
    p = 1.0 / len(floors)
    return {f: p for f in floors}


def _key(call: HallCall, index: int):
    return call.passenger_id if call.passenger_id is not None else ("call", index)


def enumerate_scenarios(car: CarState, building: BuildingSpec, cap: int = DEFAULT_SCENARIO_CAP,
                        seed: int = 0) -> List[DestinationScenario]:
    """All destination scenarios of the car's waiting passengers, or ``cap`` samples.

    Sampling kicks in when the full product would exceed ``cap``; sampled
    scenarios carry equal weight and are reproducible from ``seed``.
    """
    if cap < 1:
        raise DomainError("cap must be >= 1")
    calls = car.assigned_unboarded
    if not calls:
        return [DestinationScenario({}, 1.0)]
    keys = [_key(c, i) for i, c in enumerate(calls)]
    supports = [destination_distribution(c, building) for c in calls]
    total = math.prod(len(s) for s in supports)
    if total <= cap:
        scenarios = []
        items = [list(s.items()) for s in supports]
        for combo in itertools.product(*items):
            prob = math.prod(p for _, p in combo)
            scenarios.append(DestinationScenario(dict(zip(keys, (f for f, _ in combo))), prob))
        return scenarios
    rng = np.random.Generator(np.random.PCG64(seed))
    floors = [np.fromiter(s.keys(), dtype=np.int64) for s in supports]
    draws = np.stack([rng.integers(0, len(f), size=cap) for f in floors], axis=1)
    w = 1.0 / cap
    return [DestinationScenario({k: int(floors[i][row[i]]) for i, k in enumerate(keys)}, w)
            for row in draws]


def _initial_direction(floor_pos: float, calls, building) -> Direction:
    first = calls[0]
    here = building.height(first.floor)
    if abs(here - floor_pos) < SILL_TOL_M:
        return first.direction
    return Direction.UP if here > floor_pos else Direction.DOWN


def _standing_floor(car: CarState, building: BuildingSpec) -> Optional[int]:
    """Floor the car stands at, treating a moving car exactly at a sill with
    nothing ahead as standing (only a car heading to park can be like that)."""
    floor = building.floor_at(car.position_m)
    if not car.moving:
        if floor is None:
            raise DomainError(f"car {car.car_id} is stopped between floors at {car.position_m} m")
        return floor
    if floor is None:
        return None
    pickups = [(c.floor, c.direction) for c in car.assigned_unboarded]
    d = car.direction if car.direction != Direction.IDLE else Direction.DOWN
    if next_stop(car.position_m, d, car.onboard, pickups, building) is None and \
            next_stop(car.position_m, d.reverse(), car.onboard, pickups, building) is None:
        return floor
    return None


def simulate_delivery(car: CarState, scenario: DestinationScenario, building: BuildingSpec,
                      clock: float) -> Tuple[tuple, float]:
    """Play the car's commitments out with destinations fixed by ``scenario``.

    Returns the pickup wait of each waiting passenger (measured from their
    arrival, aligned with ``car.assigned_unboarded``) and the time from
    ``clock`` until the empty car reaches the lobby.
    """
    calls = car.assigned_unboarded
    keys = [_key(c, i) for i, c in enumerate(calls)]
    missing = [k for k in keys if k not in scenario.assignments]
    if missing:
        raise DomainError(f"scenario lacks destinations for {missing}")
    dwell = building.stop_dwell_s
    # pending pickups: [floor, direction, index, destination]
    pending = [[c.floor, c.direction, i, scenario.assignments[keys[i]]] for i, c in enumerate(calls)]
    onboard = list(car.onboard)
    picked = [None] * len(calls)
    t = 0.0
    pos = car.position_m
    d = car.direction

    def board(floor, direction, now):
        nonlocal pending
        keep = []
        n = 0
        for p in pending:
            if p[0] == floor and p[1] == direction:
                picked[p[2]] = now
                onboard.append(p[3])
                n += 1
            else:
                keep.append(p)
        pending = keep
        return n

    def ahead(direction):
        return next_stop(pos, direction, onboard, [(p[0], p[1]) for p in pending], building) is not None

    standing = _standing_floor(car, building)
    if standing is not None:
        if not onboard and not pending:
            landing = 0.0 if standing == 1 else max(0.0, car.busy_until_s - clock) + travel_time(standing, 1, building)
            return (), landing
        remaining = max(0.0, car.busy_until_s - clock) if not car.moving else 0.0
        dwelling = remaining > 0
        if d == Direction.IDLE or not (onboard or pending):
            d = _initial_direction(pos, calls, building) if calls else Direction.UP
        boarded = board(standing, d, 0.0)
        if not ahead(d):
            if any(p[0] == standing and p[1] == d.reverse() for p in pending):
                d = d.reverse()
                boarded += board(standing, d, 0.0)
            else:
                d = d.reverse()
        if boarded and not dwelling:
            remaining = dwell
        t = remaining
    else:
        if d == Direction.IDLE:
            d = Direction.DOWN
        if not onboard and not pending:
            return (), travel_time_m(pos, 1, building)
        if not ahead(d):
            d = d.reverse()

    while onboard or pending:
        stop = next_stop(pos, d, onboard, [(p[0], p[1]) for p in pending], building)
        if stop is None:
            d = d.reverse()
            stop = next_stop(pos, d, onboard, [(p[0], p[1]) for p in pending], building)
            if stop is None:
                raise AssertionError("commitments left but no stop reachable")
        t += travel_time_m(pos, stop, building)
        pos = building.height(stop)
        onboard = [x for x in onboard if x != stop]
        board(stop, d, t)
        if not ahead(d) and any(p[0] == stop and p[1] == d.reverse() for p in pending):
            d = d.reverse()
            board(stop, d, t)
        if stop == 1 and not onboard and not pending:
            return _waits(calls, picked, clock), t
        t += dwell
    landing = t + travel_time_m(pos, 1, building)
    return _waits(calls, picked, clock), landing


def _waits(calls, picked, clock):
    return tuple(clock + off - c.time_s for c, off in zip(calls, picked))


@lru_cache(maxsize=None)
def _alight_weights(k: int, n: int) -> tuple:
    """P[a of k riders alight here] when each alights with probability 1/n."""
    q = 1.0 / n
    return tuple(math.comb(k, a) * q ** a * (1 - q) ** (k - a) for a in range(k + 1))


def _walk_profile(car: CarState, building: BuildingSpec, clock: float) -> Profile:
    calls = car.assigned_unboarded
    n_floors = building.num_floors
    dwell = building.stop_dwell_s
    heights = [0.0] + [building.height(f) for f in range(1, n_floors + 1)]
    speed = building.car_speed_mps
    onboard = list(car.onboard)
    pending = list(range(len(calls)))
    picked = [0.0] * len(calls)
    d = car.direction
    k0 = 0
    t0 = 0.0
    pos = car.position_m

    def strictly_ahead(floor, direction, origin):
        return (heights[floor] - origin) * int(direction) >= SILL_TOL_M

    def any_ahead(direction, origin):
        return any(strictly_ahead(x, direction, origin) for x in onboard) or \
            any(strictly_ahead(calls[i].floor, direction, origin) for i in pending)

    standing = _standing_floor(car, building)
    if standing is not None:
        remaining = max(0.0, car.busy_until_s - clock) if not car.moving else 0.0
        if not onboard and not pending:
            landing = 0.0 if standing == 1 else remaining + travel_time(standing, 1, building)
            return Profile((), landing)
        dwelling = remaining > 0
        if d == Direction.IDLE or not onboard and not pending:
            d = _initial_direction(pos, calls, building)

        def absorb(direction):
            nonlocal pending
            here = [i for i in pending if calls[i].floor == standing and calls[i].direction == direction]
            pending = [i for i in pending if i not in here]
            return len(here)

        k0 = absorb(d)
        if k0 == 0 and not any_ahead(d, pos):
            d = d.reverse()
            k0 = absorb(d)
        if k0 and not dwelling:
            remaining = dwell
        t0 = remaining
    else:
        if d == Direction.IDLE:
            d = Direction.DOWN
        if not onboard and not pending:
            return Profile((), travel_time_m(pos, 1, building))
        if not any_ahead(d, pos):
            d = d.reverse()

    dirs = (d, d.reverse(), d)
    sweep_of = {}
    for i in pending:
        c = calls[i]
        if c.direction == d:
            sweep_of[i] = 0 if strictly_ahead(c.floor, d, pos) else 2
        else:
            sweep_of[i] = 1
    calls_at = [dict(), dict(), dict()]
    for i, s in sweep_of.items():
        calls_at[s].setdefault(calls[i].floor, []).append(i)
    known = {}
    for x in onboard:
        if not strictly_ahead(x, d, pos):
            raise DomainError(f"car {car.car_id}: onboard destination {x} is behind the car")
        known[x] = known.get(x, 0) + 1
    # farthest target (signed floor) for sweeps >= s, in that sweep's direction
    far = []
    for s in range(3):
        sign = int(dirs[s])
        floors = [calls[i].floor for i, ss in sweep_of.items() if ss >= s]
        if s == 0:
            floors += list(known)
        far.append(max((f * sign for f in floors), default=None))
    later = [any(ss > s for ss in sweep_of.values()) for s in range(3)]

    k_max = k0 + len(pending)
    injected = [dict(), dict(), dict(), dict()]  # sweep -> floor -> [P, PT, S]
    landing = 0.0
    land_prob = 0.0
    pick_prob = [0.0] * len(calls)

    # entry into sweep 0
    first = _first_floor_ahead(pos, d, heights, n_floors)
    if first is None:
        raise AssertionError("no floor ahead of a car with commitments ahead")
    carry_p = [0.0] * (k_max + 1)
    carry_t = [0.0] * (k_max + 1)
    carry_p[k0] = 1.0
    carry_t[k0] = t0 + abs(heights[first] - pos) / speed
    start = first

    for s in range(3):
        sign = int(dirs[s])
        if s > 0:
            if not injected[s]:
                break
            carry_p = [0.0] * (k_max + 1)
            carry_t = [0.0] * (k_max + 1)
            # begin at the injection floor farthest behind in this sweep's direction
            start = min(injected[s], key=lambda f: f * sign)
        f = start
        while True:
            inj = injected[s].pop(f, None)
            here = calls_at[s].get(f, ())
            n_ahead = n_floors - f + 1 if sign > 0 else f
            if here:
                tot_t = sum(carry_t) + (inj[1] if inj else 0.0)
                tot_p = sum(carry_p) + (inj[0] if inj else 0.0)
                for i in here:
                    picked[i] += tot_t
                    pick_prob[i] += tot_p
            forced = bool(here) or (s == 0 and known.get(f, 0) > 0)
            new_p = [0.0] * (k_max + 1)
            new_t = [0.0] * (k_max + 1)
            new_s = [0.0] * (k_max + 1)
            for k in range(k_max + 1):
                p = carry_p[k]
                if p == 0.0:
                    continue
                pt = carry_t[k]
                if k == 0:
                    new_p[0] += p
                    new_t[0] += pt
                    continue
                weights = _alight_weights(k, n_ahead)
                for a, w in enumerate(weights):
                    if w == 0.0:
                        continue
                    kk = k - a
                    new_p[kk] += p * w
                    new_t[kk] += pt * w
                    if a:
                        new_s[kk] += p * w
            if forced:
                new_s = list(new_p)
            board_n = len(here)
            if board_n:
                new_p = [0.0] * board_n + new_p[: k_max + 1 - board_n]
                new_t = [0.0] * board_n + new_t[: k_max + 1 - board_n]
                new_s = [0.0] * board_n + new_s[: k_max + 1 - board_n]
            if inj:
                new_p[board_n] += inj[0]
                new_t[board_n] += inj[1]
                new_s[board_n] += inj[0] if board_n else inj[2]
            if new_p[0] > 0.0 and (far[s] is None or f * sign >= far[s]):
                p0, pt0, st0 = new_p[0], new_t[0], new_s[0]
                new_p[0] = new_t[0] = new_s[0] = 0.0
                if later[s]:
                    slot = injected[s + 1].setdefault(f, [0.0, 0.0, 0.0])
                    slot[0] += p0
                    slot[1] += pt0
                    slot[2] += st0
                else:
                    land_prob += p0
                    if f == 1:
                        landing += pt0
                    else:
                        landing += pt0 + dwell * st0 + p0 * (heights[f] - heights[1]) / speed
            nxt = f + sign
            mass = any(x > 0.0 for x in new_p)
            if not (1 <= nxt <= n_floors):
                if mass:
                    raise AssertionError(f"probability mass ran off floor {f}")
                break
            if mass:
                hop = abs(heights[nxt] - heights[f]) / speed
                carry_p = new_p
                carry_t = [new_t[k] + dwell * new_s[k] + new_p[k] * hop for k in range(k_max + 1)]
            else:
                carry_p = [0.0] * (k_max + 1)
                carry_t = [0.0] * (k_max + 1)
                if not any(g * sign >= nxt * sign for g in injected[s]):
                    break
            f = nxt

    if abs(land_prob - 1.0) > 1e-9 or any(abs(p - 1.0) > 1e-9 for i, p in enumerate(pick_prob) if i in sweep_of):
        raise AssertionError(f"walk lost probability mass: landing {land_prob}, pickups {pick_prob}")
    waits = tuple(clock + picked[i] - c.time_s for i, c in enumerate(calls))
    return Profile(waits, landing)


def _first_floor_ahead(pos, direction, heights, n_floors):
    sign = int(direction)
    floors = range(1, n_floors + 1) if sign > 0 else range(n_floors, 0, -1)
    for f in floors:
        if (heights[f] - pos) * sign >= SILL_TOL_M:
            return f
    return None


def expected_profile(car: CarState, building: BuildingSpec, clock: float, method: str = "walk",
                     cap: int = DEFAULT_SCENARIO_CAP, seed: int = 0) -> Profile:
    """Expected pickup waits and lobby landing time of one car.

    ``method="walk"`` (default) is exact and fast. ``method="enumerate"``
    averages ``simulate_delivery`` over ``enumerate_scenarios``; exact under
    ``cap``, sampled above it.
    """
    if method == "walk":
        return _walk_profile(car, building, clock)
    if method != "enumerate":
        raise DomainError(f"unknown method {method!r}")
    scenarios = enumerate_scenarios(car, building, cap, seed)
    n = len(car.assigned_unboarded)
    waits = [0.0] * n
    landing = 0.0
    for sc in scenarios:
        w, land = simulate_delivery(car, sc, building, clock)
        for i in range(n):
            waits[i] += sc.probability * w[i]
        landing += sc.probability * land
    return Profile(tuple(waits), landing)


def sample_profile(car: CarState, building: BuildingSpec, clock: float, samples: int,
                   seed: int) -> Tuple[Profile, Profile]:
    """Monte-Carlo destination sampling oracle: (mean profile, standard-error profile)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    calls = car.assigned_unboarded
    supports = [list(destination_distribution(c, building)) for c in calls]
    keys = [_key(c, i) for i, c in enumerate(calls)]
    waits = np.zeros((samples, len(calls)))
    lands = np.zeros(samples)
    for r in range(samples):
        assignment = {k: sup[int(rng.integers(len(sup)))] for k, sup in zip(keys, supports)}
        w, land = simulate_delivery(car, DestinationScenario(assignment, 1.0 / samples), building, clock)
        waits[r] = w
        lands[r] = land
    mean = Profile(tuple(waits.mean(axis=0)), float(lands.mean()))
    if samples > 1:
        err = Profile(tuple(waits.std(axis=0, ddof=1) / math.sqrt(samples)),
                      float(lands.std(ddof=1) / math.sqrt(samples)))
    else:
        err = Profile(tuple(0.0 for _ in calls), 0.0)
    return mean, err


def candidate_table(bank: BankState, call: HallCall, building: BuildingSpec,
                    method: str = "walk") -> CandidateTable:
    """Expected total wait of all waiting passengers and expected landing pattern
    for each possible assignment of ``call``."""
    call.validate(building)
    clock = bank.clock_s
    cars = bank.cars
    base = [expected_profile(car, building, clock, method) for car in cars]
    base_wait = [sum(p.expected_waits) for p in base]
    base_land = [p.expected_landing for p in base]
    total_base = sum(base_wait)
    n_waiting = sum(len(car.assigned_unboarded) for car in cars) + 1
    W = []
    rows = []
    for i, car in enumerate(cars):
        prof = expected_profile(car.with_call(call), building, clock, method)
        W.append(total_base - base_wait[i] + sum(prof.expected_waits))
        row = list(base_land)
        row[i] = prof.expected_landing
        rows.append(tuple(row))
    return CandidateTable(tuple(W), n_waiting, tuple(rows))
