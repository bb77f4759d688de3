"""Discrete-event simulator of an elevator bank and the mixed up-peak traffic generator.

Cars move at constant speed and dwell a fixed time at every stop. Passengers
board and alight the moment a car arrives at their floor; a passenger assigned
to a car already dwelling at their floor, in their direction, boards at once.
Empty cars head for the lobby and park there unless configured otherwise.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .core import (BankState, BuildingSpec, CarState, ConfigError, Direction, DomainError,
                   Passenger, _get_float, _get_int, _read_ini, next_stop)
from .policy import (POLICIES, RateEstimator, SchedulerParams, assign_conventional, assign_esa_dp,
                     assign_esa_dp_la, update_rate_estimate)

# simultaneous events: cars landing (alight, board) first, then new passengers, then departures
CAR_ARRIVAL, PASSENGER_ARRIVAL, DWELL_END = 0, 1, 2

DEFAULT_DRAIN_S = 1800.0


@dataclass(frozen=True)
class TrafficProfile:
    rate_per_hour: float
    lobby_fraction: float = 0.8
    duration_s: float = 3600.0
    seed: int = 0

    def __post_init__(self):
        if not (self.rate_per_hour >= 0 and math.isfinite(self.rate_per_hour)):
            raise DomainError(f"rate_per_hour must be >= 0, got {self.rate_per_hour}")
        if not 0.0 <= self.lobby_fraction <= 1.0:
            raise DomainError(f"lobby_fraction must lie in [0, 1], got {self.lobby_fraction}")
        if not self.duration_s >= 0:
            raise DomainError(f"duration_s must be >= 0, got {self.duration_s}")


@dataclass(frozen=True)
class TrialMetrics:
    waits: tuple
    average_wait: float
    max_wait: float
    served: int
    unserved: int
    traffic_hash: str = ""
    decisions: int = 0
    passengers: tuple = field(default=(), repr=False, compare=False)


def generate_traffic(profile: TrafficProfile, building: BuildingSpec) -> List[Passenger]:
    """Poisson arrivals; lobby-origin trips go up uniformly, the rest travel
    uniformly between distinct upper floors."""
    rate = profile.rate_per_hour / 3600.0
    if rate == 0.0 or profile.duration_s == 0.0:
        return []
    if building.num_floors < 3 and profile.lobby_fraction < 1.0:
        raise DomainError("inter-floor traffic needs at least two floors above the lobby")
    rng = np.random.Generator(np.random.PCG64(profile.seed))
    top = building.num_floors
    out = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t > profile.duration_s:
            break
        if rng.random() < profile.lobby_fraction:
            origin = 1
            dest = int(rng.integers(2, top + 1))
        else:
            origin = int(rng.integers(2, top + 1))
            dest = int(rng.integers(2, top))  # top - 2 choices, skip the origin
            if dest >= origin:
                dest += 1
        out.append(Passenger(len(out), float(t), origin, dest))
    return out


def traffic_hash(passengers: Sequence[Passenger]) -> str:
    h = hashlib.sha256()
    for p in passengers:
        h.update(f"{p.id},{p.arrival_time_s!r},{p.origin_floor},{p.destination_floor}\n".encode())
    return h.hexdigest()[:16]


def load_traffic(path) -> TrafficProfile:
    """Read a ``[traffic]`` section from an INI-style file."""
    parser = _read_ini(path)
    if not parser.has_section("traffic"):
        raise ConfigError(path, "traffic", "missing [traffic] section")
    section = parser["traffic"]
    known = {"rate_per_hour", "lobby_fraction", "duration_s", "seed"}
    for key in section:
        if key not in known:
            raise ConfigError(path, key, "unknown traffic key")
    if "rate_per_hour" not in section:
        raise ConfigError(path, "rate_per_hour", "required key missing")
    kwargs = {"rate_per_hour": _get_float(section, "rate_per_hour", path)}
    if "lobby_fraction" in section:
        kwargs["lobby_fraction"] = _get_float(section, "lobby_fraction", path)
    if "duration_s" in section:
        kwargs["duration_s"] = _get_float(section, "duration_s", path)
    if "seed" in section:
        kwargs["seed"] = _get_int(section, "seed", path)
    try:
        return TrafficProfile(**kwargs)
    except DomainError as exc:
        raise ConfigError(path, "traffic", str(exc)) from exc


@dataclass
class _Car:
    car_id: int
    pos: float = 0.0
    pos_time: float = 0.0
    direction: Direction = Direction.IDLE
    moving: bool = False
    target: Optional[int] = None
    busy_until: float = 0.0
    dwelling: bool = False
    version: int = 0
    onboard: list = field(default_factory=list)
    assigned: list = field(default_factory=list)

    def position(self, now: float, speed: float) -> float:
        if not self.moving:
            return self.pos
        sign = 1.0 if self.direction == Direction.UP else -1.0
        return self.pos + sign * speed * (now - self.pos_time)

    @property
    def has_commitments(self) -> bool:
        return bool(self.onboard or self.assigned)


class _Trial:
    def __init__(self, building, policy, params, park_idle_at_lobby, rate_source, rate_decay_s,
                 decision_hook, coalesce_calls=False):
        if policy not in POLICIES:
            raise DomainError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")
        if rate_source not in ("lobby", "total"):
            raise DomainError(f"rate_source must be 'lobby' or 'total', got {rate_source!r}")
        self.b = building
        self.policy = policy
        self.params = params
        self.park = park_idle_at_lobby
        self.rate_source = rate_source
        self.estimator = RateEstimator(decay_s=rate_decay_s, prior=params.lobby_rate)
        self.hook = decision_hook
        self.coalesce = coalesce_calls
        self.cars = [_Car(i) for i in range(1, building.num_cars + 1)]
        self.events = []
        self.seq = 0
        self.decisions = 0

    def push(self, time, kind, payload):
        heapq.heappush(self.events, (time, kind, self.seq, payload))
        self.seq += 1

    def snapshot(self, now) -> BankState:
        cars = []
        for c in self.cars:
            cars.append(CarState(c.car_id, c.position(now, self.b.car_speed_mps), c.direction,
                                 tuple(p.destination_floor for p in c.onboard),
                                 tuple(p.hall_call() for p in c.assigned),
                                 c.busy_until if c.dwelling else 0.0, c.moving))
        return BankState(tuple(cars), now)

    # car mechanics

    def _pickups(self, car):
        return [(p.origin_floor, p.direction) for p in car.assigned]

    def _next(self, car, pos, direction):
        return next_stop(pos, direction, [p.destination_floor for p in car.onboard], self._pickups(car), self.b)

    def _board(self, car, floor, direction, now):
        cap = self.b.car_capacity
        keep = []
        n = 0
        for p in car.assigned:
            if p.origin_floor == floor and p.direction == direction and (cap is None or len(car.onboard) < cap):
                p.board_time_s = now
                car.onboard.append(p)
                n += 1
            else:
                keep.append(p)
        car.assigned = keep
        return n

    def _serve_here(self, car, floor, now):
        """Board in the car's direction; turn round for opposite calls here when nothing is ahead."""
        n = self._board(car, floor, car.direction, now)
        if self._next(car, car.pos, car.direction) is None:
            opposite = car.direction.reverse()
            if any(p.origin_floor == floor and p.direction == opposite for p in car.assigned):
                car.direction = opposite
                n += self._board(car, floor, opposite, now)
            elif car.has_commitments:
                car.direction = opposite
        return n

    def _start_dwell(self, car, now):
        car.dwelling = True
        car.busy_until = now + self.b.stop_dwell_s
        car.version += 1
        self.push(car.busy_until, DWELL_END, (car.car_id, car.version))

    def _depart(self, car, now):
        car.dwelling = False
        if not car.has_commitments:
            floor = self.b.floor_at(car.pos)
            if floor != 1 and self.park:
                self._move(car, Direction.DOWN, 1, now)
            else:
                car.direction = Direction.IDLE
                car.version += 1
            return
        stop = self._next(car, car.pos, car.direction)
        if stop is None:
            car.direction = car.direction.reverse()
            stop = self._next(car, car.pos, car.direction)
        if stop is None:
            raise AssertionError(f"car {car.car_id} has commitments but nowhere to go")
        self._move(car, car.direction, stop, now)

    def _move(self, car, direction, stop, now):
        car.direction = direction
        car.moving = True
        car.pos_time = now
        car.target = stop
        car.version += 1
        arrive = now + abs(self.b.height(stop) - car.pos) / self.b.car_speed_mps
        self.push(arrive, CAR_ARRIVAL, (car.car_id, car.version))

    def _retarget(self, car, now):
        """Re-plan a moving car after a new assignment."""
        car.pos = car.position(now, self.b.car_speed_mps)
        car.pos_time = now
        direction = car.direction
        stop = self._next(car, car.pos, direction)
        if stop is None:
            direction = direction.reverse()
            stop = self._next(car, car.pos, direction)
        if stop is None:
            # parking car exactly at a sill: treat it as standing there
            floor = self.b.floor_at(car.pos)
            car.pos = self.b.height(floor)
            car.moving = False
            car.target = None
            car.version += 1
            car.direction = direction.reverse()
            self._assign_standing(car, now, dwelling=False)
            return
        if stop != car.target or direction != car.direction:
            self._move(car, direction, stop, now)

    def _assign_standing(self, car, now, dwelling):
        floor = self.b.floor_at(car.pos)
        if car.direction == Direction.IDLE:
            first = car.assigned[0]
            if first.origin_floor == floor:
                car.direction = first.direction
            else:
                car.direction = Direction.UP if first.origin_floor > floor else Direction.DOWN
        boarded = self._serve_here(car, floor, now)
        if dwelling:
            return
        if boarded:
            self._start_dwell(car, now)
        else:
            self._depart(car, now)

    # event handlers

    def on_car_arrival(self, car, now):
        car.pos = self.b.height(car.target)
        car.pos_time = now
        car.moving = False
        floor = car.target
        car.target = None
        if not car.has_commitments:
            # parked at the lobby
            car.direction = Direction.IDLE
            car.version += 1
            return
        for p in [p for p in car.onboard if p.destination_floor == floor]:
            p.alight_time_s = now
            car.onboard.remove(p)
        self._serve_here(car, floor, now)
        self._start_dwell(car, now)

    def on_passenger(self, p, now):
        self.estimator = update_rate_estimate(self.estimator, p.origin_floor, now)
        lam = self.estimator.rate(self.rate_source, now)
        params = SchedulerParams(self.params.alpha, self.params.beta, lam)
        call = p.hall_call()
        lit = self._lit_button(call) if self.coalesce else None
        if lit is not None:
            self._give(lit, p, now)
            return
        bank = self.snapshot(now)
        if self.policy == "esa-dp-la":
            record = assign_esa_dp_la(bank, call, self.b, params)
        elif self.policy == "esa-dp":
            record = assign_esa_dp(bank, call, self.b)
        else:
            record = assign_conventional(bank, call, self.b)
        self.decisions += 1
        if self.hook is not None:
            self.hook(bank, call, record)
        self._give(self.cars[record.chosen_car - 1], p, now)

    def _lit_button(self, call):
        """Car already answering a pending call at the same floor and direction."""
        for car in self.cars:
            if any(q.origin_floor == call.floor and q.direction == call.direction for q in car.assigned):
                return car
        return None

    def _give(self, car, p, now):
        p.assigned_car = car.car_id
        was_idle = not car.has_commitments
        car.assigned.append(p)
        if car.moving:
            self._retarget(car, now)
        elif car.dwelling and now < car.busy_until:
            self._assign_standing(car, now, dwelling=True)
        elif car.dwelling or was_idle:
            # a dwell ending this instant counts as over: boarding restarts it
            self._assign_standing(car, now, dwelling=False)
        else:
            raise AssertionError(f"car {car.car_id} standing with commitments outside a dwell")

    def on_dwell_end(self, car, now):
        self._depart(car, now)


def run_trial(building: BuildingSpec, policy: str, traffic: Union[TrafficProfile, Sequence[Passenger]],
              params: SchedulerParams = SchedulerParams(), *, park_idle_at_lobby: bool = True,
              rate_source: str = "lobby", rate_decay_s: float = 300.0,
              drain_s: float = DEFAULT_DRAIN_S, coalesce_calls: bool = False,
              decision_hook: Optional[Callable] = None) -> TrialMetrics:
    """Simulate one trial.

    The policy is consulted once per passenger. With ``coalesce_calls`` a
    passenger whose hall button is already lit joins that pending call instead.

    After the last arrival the bank keeps running for up to ``drain_s`` seconds
    so that late passengers get picked up; whoever is still waiting then is
    reported as unserved.
    """
    if isinstance(traffic, TrafficProfile):
        passengers = generate_traffic(traffic, building)
    else:
        passengers = [Passenger(p.id, p.arrival_time_s, p.origin_floor, p.destination_floor) for p in traffic]
    times = [p.arrival_time_s for p in passengers]
    if any(b < a for a, b in zip(times, times[1:])):
        raise DomainError("traffic must be sorted by arrival time")
    for p in passengers:
        if not (1 <= p.origin_floor <= building.num_floors and 1 <= p.destination_floor <= building.num_floors):
            raise DomainError(f"passenger {p.id} has floors outside the building")
    trial = _Trial(building, policy, params, park_idle_at_lobby, rate_source, rate_decay_s, decision_hook,
                   coalesce_calls)
    for p in passengers:
        trial.push(p.arrival_time_s, PASSENGER_ARRIVAL, p)
    stop_at = (times[-1] if times else 0.0) + drain_s
    while trial.events:
        now, kind, _, payload = heapq.heappop(trial.events)
        if now > stop_at:
            break
        if kind == PASSENGER_ARRIVAL:
            trial.on_passenger(payload, now)
            continue
        car_id, version = payload
        car = trial.cars[car_id - 1]
        if version != car.version:
            continue
        if kind == CAR_ARRIVAL:
            trial.on_car_arrival(car, now)
        else:
            trial.on_dwell_end(car, now)
    waits = tuple(p.waiting_time_s for p in passengers if p.board_time_s is not None)
    served = len(waits)
    return TrialMetrics(waits, float(np.mean(waits)) if waits else 0.0, max(waits) if waits else 0.0,
                        served, len(passengers) - served, traffic_hash(passengers), trial.decisions,
                        tuple(passengers))
