"""Hall-call assignment policies and the online arrival-rate estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .core import BankState, BuildingSpec, Direction, DomainError, HallCall
from .forecast import CandidateTable, DestinationScenario, _key, candidate_table, simulate_delivery
from .lobbymodel import canonicalize, expected_lobby_wait, normalize_wait

POLICIES = ("conventional", "esa-dp", "esa-dp-la")


@dataclass(frozen=True)
class SchedulerParams:
    alpha: float = 0.2
    beta: float = 0.02
    lobby_rate: float = 0.0  # 1/s

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if not (self.lobby_rate >= 0 and math.isfinite(self.lobby_rate)):
            raise DomainError(f"lobby_rate must be >= 0, got {self.lobby_rate}")


@dataclass(frozen=True)
class DecisionRecord:
    W_bar: tuple
    V_bar: tuple
    score: tuple
    chosen_car: int  # car id, 1-based
    tie_broken: bool


def _argmin(scores) -> tuple:
    best = min(scores)
    winners = [i for i, s in enumerate(scores) if s == best]
    return winners[0] + 1, len(winners) > 1


def assign_esa_dp(bank: BankState, call: HallCall, building: BuildingSpec,
                  table: Optional[CandidateTable] = None) -> DecisionRecord:
    """Car minimizing the expected total wait of existing passengers."""
    table = table or candidate_table(bank, call, building)
    w_bar = tuple(w / table.N for w in table.W)
    car, tie = _argmin(w_bar)
    return DecisionRecord(w_bar, tuple(0.0 for _ in w_bar), w_bar, car, tie)


def lookahead_terms(table: CandidateTable, params: SchedulerParams) -> tuple:
    """Normalized expected future-lobby wait for each candidate assignment."""
    lam, beta = params.lobby_rate, params.beta
    if lam == 0.0:
        return tuple(0.0 for _ in table.W)
    out = []
    for row in table.T_hat:
        pattern = canonicalize(row)
        v = expected_lobby_wait(pattern, lam, beta)
        out.append(normalize_wait(v, beta, lam, pattern.horizon_s))
    return tuple(out)


def assign_esa_dp_la(bank: BankState, call: HallCall, building: BuildingSpec,
                     params: SchedulerParams, table: Optional[CandidateTable] = None) -> DecisionRecord:
    """Mix existing-passenger and future-lobby average waits; lowest car id wins ties."""
    table = table or candidate_table(bank, call, building)
    w_bar = tuple(w / table.N for w in table.W)
    v_bar = lookahead_terms(table, params)
    a = params.alpha
    scores = tuple(a * w + (1.0 - a) * v for w, v in zip(w_bar, v_bar))
    car, tie = _argmin(scores)
    return DecisionRecord(w_bar, v_bar, scores, car, tie)


def _placeholder(call: HallCall, building: BuildingSpec) -> int:
    return building.num_floors if call.direction == Direction.UP else 1


def assign_conventional(bank: BankState, call: HallCall, building: BuildingSpec) -> DecisionRecord:
    """Round-trip baseline: every waiting passenger is assumed to ride to the end
    of the shaft in their direction, and the car minimizing the summed time for
    all cars to get back to the lobby is chosen."""
    call.validate(building)
    clock = bank.clock_s

    def round_trip(car):
        scenario = DestinationScenario(
            {_key(c, k): _placeholder(c, building) for k, c in enumerate(car.assigned_unboarded)}, 1.0)
        return simulate_delivery(car, scenario, building, clock)[1]

    base = [round_trip(car) for car in bank.cars]
    total = sum(base)
    costs = tuple(total - base[i] + round_trip(car.with_call(call)) for i, car in enumerate(bank.cars))
    car, tie = _argmin(costs)
    zeros = tuple(0.0 for _ in costs)
    return DecisionRecord(zeros, zeros, costs, car, tie)


def decide(policy: str, bank: BankState, call: HallCall, building: BuildingSpec,
           params: SchedulerParams) -> DecisionRecord:
    if policy == "esa-dp-la":
        return assign_esa_dp_la(bank, call, building, params)
    if policy == "esa-dp":
        return assign_esa_dp(bank, call, building)
    if policy == "conventional":
        return assign_conventional(bank, call, building)
    raise DomainError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")


@dataclass(frozen=True)
class RateEstimator:
    """Exponentially decayed arrival counts per origin class.

    The decayed count is divided by the decay filter's own mass since
    ``origin_s``, which removes the start-up bias of a zero-initialized filter.
    """

    decay_s: float = 300.0
    prior: float = 0.0
    origin_s: float = 0.0
    last_s: Optional[float] = None
    lobby_mass: float = 0.0
    above_mass: float = 0.0

    def __post_init__(self):
        if not self.decay_s > 0:
            raise DomainError(f"decay_s must be positive, got {self.decay_s}")
        if self.prior < 0:
            raise DomainError(f"prior must be >= 0, got {self.prior}")

    def _mass(self, which: str, now: float) -> float:
        mass = self.lobby_mass if which == "lobby" else self.above_mass
        if self.last_s is None or mass == 0.0:
            return 0.0
        if now < self.last_s:
            raise DomainError(f"time went backwards: {now} < {self.last_s}")
        return mass * math.exp(-(now - self.last_s) / self.decay_s)

    def rate(self, which: str = "lobby", now: Optional[float] = None) -> float:
        """Estimated arrivals per second for ``which`` in {"lobby", "above", "total"}."""
        if which == "total":
            return self.rate("lobby", now) + self.rate("above", now)
        if which not in ("lobby", "above"):
            raise DomainError(f"unknown origin class {which!r}")
        now = self.last_s if now is None else now
        mass = self._mass(which, now) if now is not None else 0.0
        if mass == 0.0:
            return self.prior
        elapsed = max(now - self.origin_s, 1.0)
        return mass / (self.decay_s * -math.expm1(-elapsed / self.decay_s))


def update_rate_estimate(estimator: RateEstimator, origin_floor: int, time_s: float) -> RateEstimator:
    """Record one arrival at ``origin_floor``."""
    if estimator.last_s is not None and time_s < estimator.last_s:
        raise DomainError(f"arrival at {time_s} precedes previous arrival at {estimator.last_s}")
    lobby = estimator._mass("lobby", time_s)
    above = estimator._mass("above", time_s)
    if origin_floor == 1:
        lobby += 1.0
    else:
        above += 1.0
    return replace(estimator, last_s=time_s, lobby_mass=lobby, above_mass=above)
