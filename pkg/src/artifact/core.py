"""Domain types and car kinematics shared by the forecaster and the simulator.

Floors are numbered 1..num_floors with floor 1 the lobby. Heights are measured
in meters above the floor-1 sill; floor 2 sits one lobby storey up and every
floor after that one regular storey higher.
"""
from __future__ import annotations

import configparser
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

# positions closer than this to a sill count as at that floor; anything else is ahead or behind
SILL_TOL_M = 1e-9


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


class ConfigError(ValueError):
    """Raised when a config file is missing, unreadable or has a bad key."""

    def __init__(self, path, key, message):
        self.path = str(path)
        self.key = key
        super().__init__(f"{path}: {key}: {message}" if key else f"{path}: {message}")


class Direction(enum.IntEnum):
    DOWN = -1
    IDLE = 0
    UP = 1

    def reverse(self) -> "Direction":
        return Direction(-int(self))


@dataclass(frozen=True)
class BuildingSpec:
    num_floors: int
    num_cars: int
    floor_height_m: float = 4.0
    lobby_height_m: float = 5.0
    car_speed_mps: float = 3.0
    stop_dwell_s: float = 8.0
    car_capacity: Optional[int] = None  # None means unbounded

    def __post_init__(self):
        if int(self.num_floors) != self.num_floors or self.num_floors < 2:
            raise DomainError(f"num_floors must be an integer >= 2, got {self.num_floors}")
        if int(self.num_cars) != self.num_cars or self.num_cars < 1:
            raise DomainError(f"num_cars must be an integer >= 1, got {self.num_cars}")
        for name in ("floor_height_m", "lobby_height_m", "car_speed_mps", "stop_dwell_s"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value}")
        if self.car_capacity is not None and self.car_capacity < 1:
            raise DomainError(f"car_capacity must be >= 1, got {self.car_capacity}")
        heights = [0.0] + [self.lobby_height_m + (k - 2) * self.floor_height_m
                           for k in range(2, self.num_floors + 1)]
        object.__setattr__(self, "_heights", tuple(heights))

    @property
    def top_floor(self) -> int:
        return self.num_floors

    @property
    def label(self) -> str:
        return f"{self.num_floors}fl-{self.num_cars}sh"

    def height(self, floor: int) -> float:
        """Height of ``floor`` above the lobby sill, in meters."""
        check_floor(floor, self)
        return self._heights[floor - 1]

    def floor_at(self, position_m: float) -> Optional[int]:
        """Floor whose sill is exactly at ``position_m``, or None between floors."""
        for k, h in enumerate(self._heights, start=1):
            if abs(h - position_m) < SILL_TOL_M:
                return k
        return None


def check_floor(floor: int, building: BuildingSpec) -> None:
    if not isinstance(floor, (int,)) or isinstance(floor, bool) or not 1 <= floor <= building.num_floors:
        raise DomainError(f"floor {floor!r} outside 1..{building.num_floors}")


@dataclass(frozen=True)
class HallCall:
    """One passenger's hall-button press.

    Policies are invoked once per passenger, so every call carries the id of
    the single passenger who made it.
    """

    floor: int
    direction: Direction
    time_s: float
    passenger_id: Optional[int] = None

    def validate(self, building: BuildingSpec) -> None:
        check_floor(self.floor, building)
        if self.direction == Direction.DOWN and self.floor == 1:
            raise DomainError("no Down call at the lobby")
        if self.direction == Direction.UP and self.floor == building.num_floors:
            raise DomainError("no Up call at the top floor")
        if self.direction == Direction.IDLE:
            raise DomainError("a hall call needs a direction")


@dataclass
class Passenger:
    id: int
    arrival_time_s: float
    origin_floor: int
    destination_floor: int
    assigned_car: Optional[int] = None
    board_time_s: Optional[float] = None
    alight_time_s: Optional[float] = None

    def __post_init__(self):
        if self.origin_floor == self.destination_floor:
            raise DomainError(f"passenger {self.id}: origin equals destination")

    @property
    def direction(self) -> Direction:
        return Direction.UP if self.destination_floor > self.origin_floor else Direction.DOWN

    @property
    def waiting_time_s(self) -> Optional[float]:
        if self.board_time_s is None:
            return None
        return self.board_time_s - self.arrival_time_s

    def hall_call(self) -> HallCall:
        return HallCall(self.origin_floor, self.direction, self.arrival_time_s, self.id)


@dataclass(frozen=True)
class CarState:
    """Snapshot of one car.

    ``onboard`` holds the registered destinations of riders already in the car.
    ``moving`` distinguishes a car travelling past a floor sill from one that
    is standing there (dwelling or idle).
    """

    car_id: int
    position_m: float
    direction: Direction = Direction.IDLE
    onboard: tuple = ()
    assigned_unboarded: tuple = ()
    busy_until_s: float = 0.0
    moving: bool = False

    def with_call(self, call: HallCall) -> "CarState":
        return CarState(self.car_id, self.position_m, self.direction, self.onboard,
                        self.assigned_unboarded + (call,), self.busy_until_s, self.moving)

    @property
    def has_commitments(self) -> bool:
        return bool(self.onboard or self.assigned_unboarded)


@dataclass(frozen=True)
class BankState:
    cars: tuple
    clock_s: float = 0.0

    def __post_init__(self):
        ids = sorted(c.car_id for c in self.cars)
        if ids != list(range(1, len(self.cars) + 1)):
            raise DomainError(f"car ids must be 1..C, got {ids}")

    @property
    def waiting_calls(self) -> list:
        return [call for car in self.cars for call in car.assigned_unboarded]


def parked_bank(building: BuildingSpec, clock_s: float = 0.0) -> BankState:
    """All cars idle at the lobby."""
    return BankState(tuple(CarState(i, 0.0) for i in range(1, building.num_cars + 1)), clock_s)


def travel_time(origin_floor: int, dest_floor: int, building: BuildingSpec) -> float:
    """Constant-velocity travel time between two floors, seconds."""
    return abs(building.height(dest_floor) - building.height(origin_floor)) / building.car_speed_mps


def travel_time_m(position_m: float, dest_floor: int, building: BuildingSpec) -> float:
    return abs(building.height(dest_floor) - position_m) / building.car_speed_mps


def itinerary_duration(stop_sequence: Sequence[int], start_floor: int, building: BuildingSpec) -> float:
    """Travel through ``stop_sequence`` from ``start_floor`` with one dwell per listed stop."""
    if not stop_sequence:
        raise DomainError("stop_sequence must be non-empty")
    check_floor(start_floor, building)
    total = 0.0
    here = start_floor
    for stop in stop_sequence:
        total += travel_time(here, stop, building) + building.stop_dwell_s
        here = stop
    return total


def next_stop(position_m: float, direction: Direction, onboard: Iterable[int],
              pickups: Iterable[tuple], building: BuildingSpec) -> Optional[int]:
    """Nearest floor strictly ahead of ``position_m`` where a LOOK sweep stops.

    ``pickups`` are (floor, direction) pairs. The car stops ahead for an onboard
    destination or a pickup in its own direction; an opposite-direction pickup
    only stops the car if it is the farthest target ahead, where the car turns.
    Returns None when nothing lies ahead.
    """
    sign = int(direction)
    if sign == 0:
        return None
    ahead = []
    turn_candidates = []
    for dest in onboard:
        if (building.height(dest) - position_m) * sign >= SILL_TOL_M:
            ahead.append(dest)
    for floor, pdir in pickups:
        if (building.height(floor) - position_m) * sign >= SILL_TOL_M:
            if pdir == direction:
                ahead.append(floor)
            else:
                turn_candidates.append(floor)
    if not ahead and not turn_candidates:
        return None
    farthest = max(ahead + turn_candidates, key=lambda f: f * sign)
    if farthest in turn_candidates:
        ahead.append(farthest)
    return min(ahead, key=lambda f: f * sign)


def load_building(path) -> BuildingSpec:
    """Read a ``[building]`` section from an INI-style file."""
    parser = _read_ini(path)
    if not parser.has_section("building"):
        raise ConfigError(path, "building", "missing [building] section")
    return building_from_section(parser["building"], path)


_BUILDING_KEYS = {"floors", "cars", "floor_height_m", "lobby_height_m", "speed_mps", "dwell_s", "capacity"}


def building_from_section(section, path="<config>") -> BuildingSpec:
    unknown = set(section) - _BUILDING_KEYS
    if unknown:
        raise ConfigError(path, sorted(unknown)[0], "unknown building key")
    kwargs = {}
    for key in ("floors", "cars"):
        if key not in section:
            raise ConfigError(path, key, "required key missing")
    try:
        kwargs["num_floors"] = _get_int(section, "floors", path)
        kwargs["num_cars"] = _get_int(section, "cars", path)
        for key, attr in (("floor_height_m", "floor_height_m"), ("lobby_height_m", "lobby_height_m"),
                          ("speed_mps", "car_speed_mps"), ("dwell_s", "stop_dwell_s")):
            if key in section:
                kwargs[attr] = _get_float(section, key, path)
        if "capacity" in section:
            raw = section["capacity"].strip().lower()
            kwargs["car_capacity"] = None if raw in ("", "none", "unbounded", "inf") else _get_int(section, "capacity", path)
        return BuildingSpec(**kwargs)
    except DomainError as exc:
        raise ConfigError(path, "building", str(exc)) from exc


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError as exc:
        raise ConfigError(path, None, "file not found") from exc
    except configparser.Error as exc:
        raise ConfigError(path, None, f"parse error: {exc}") from exc
    return parser


def _get_int(section, key, path) -> int:
    try:
        return int(section[key])
    except ValueError as exc:
        raise ConfigError(path, key, f"expected an integer, got {section[key]!r}") from exc


def _get_float(section, key, path) -> float:
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(path, key, f"expected a number, got {section[key]!r}") from exc
