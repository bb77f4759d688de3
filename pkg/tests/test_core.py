import math

import pytest
from hypothesis import given, strategies as st

from artifact.core import (BankState, BuildingSpec, CarState, ConfigError, Direction, DomainError, HallCall,
                           Passenger, itinerary_duration, load_building, next_stop, parked_bank,
                           travel_time)

B = BuildingSpec(12, 3)


def test_travel_time_examples(building):
    assert travel_time(3, 3, building) == 0.0
    assert travel_time(1, 2, building) == pytest.approx(5 / 3)
    assert travel_time(1, 4, building) == pytest.approx(13 / 3)
    assert travel_time(4, 1, building) == travel_time(1, 4, building)


def test_travel_time_rejects_bad_floor(building):
    with pytest.raises(DomainError):
        travel_time(0, 3, building)
    with pytest.raises(DomainError):
        travel_time(1, 9, building)


def test_itinerary_examples(building):
    assert itinerary_duration([3], 3, building) == 8.0
    assert itinerary_duration([2, 4], 1, building) == pytest.approx(5 / 3 + 8 + 8 / 3 + 8)
    with pytest.raises(DomainError):
        itinerary_duration([], 1, building)


floors = st.integers(1, 12)


@given(floors, floors, floors)
def test_travel_time_is_a_line_metric(a, b, c):
    assert travel_time(a, b, B) == travel_time(b, a, B)
    assert (travel_time(a, b, B) == 0) == (a == b)
    lo, mid, hi = sorted((a, b, c))
    assert travel_time(lo, hi, B) == pytest.approx(travel_time(lo, mid, B) + travel_time(mid, hi, B))


@given(st.lists(floors, min_size=1, max_size=6), floors, st.integers(0, 5), floors)
def test_itinerary_monotone_in_dwell_and_stops(stops, start, pos, extra):
    longer = BuildingSpec(12, 3, stop_dwell_s=9.0)
    assert itinerary_duration(stops, start, longer) >= itinerary_duration(stops, start, B)
    pos = min(pos, len(stops))
    inserted = stops[:pos] + [extra] + stops[pos:]
    assert itinerary_duration(inserted, start, B) >= itinerary_duration(stops, start, B) - 1e-9


def test_building_validation():
    with pytest.raises(DomainError):
        BuildingSpec(1, 2)
    with pytest.raises(DomainError):
        BuildingSpec(5, 0)
    with pytest.raises(DomainError):
        BuildingSpec(5, 2, car_speed_mps=0.0)
    assert BuildingSpec(5, 2).height(1) == 0.0
    assert BuildingSpec(5, 2).floor_at(9.0) == 3
    assert BuildingSpec(5, 2).floor_at(8.0) is None


def test_hall_call_rules(building):
    with pytest.raises(DomainError):
        HallCall(1, Direction.DOWN, 0.0).validate(building)
    with pytest.raises(DomainError):
        HallCall(8, Direction.UP, 0.0).validate(building)
    HallCall(8, Direction.DOWN, 0.0).validate(building)


def test_passenger_wait():
    p = Passenger(1, 10.0, 1, 5)
    assert p.direction == Direction.UP and p.waiting_time_s is None
    p.board_time_s = 14.5
    assert p.waiting_time_s == 4.5
    with pytest.raises(DomainError):
        Passenger(2, 0.0, 3, 3)


def test_bank_ids_complete(building):
    assert len(parked_bank(building).cars) == 2
    with pytest.raises(DomainError):
        BankState((CarState(1, 0.0), CarState(3, 0.0)))


def test_next_stop_sweep_rules():
    h = B.height
    # onboard and same-direction pickups ahead, nearest first
    assert next_stop(h(3), Direction.UP, [9], [(6, Direction.UP)], B) == 6
    # an opposite-direction pickup ahead is passed unless it is the farthest target
    assert next_stop(h(3), Direction.UP, [9], [(6, Direction.DOWN)], B) == 9
    assert next_stop(h(3), Direction.UP, [5], [(8, Direction.DOWN)], B) == 5
    assert next_stop(h(6), Direction.UP, [], [(8, Direction.DOWN)], B) == 8
    # nothing strictly ahead
    assert next_stop(h(6), Direction.UP, [2], [(6, Direction.UP)], B) is None
    assert next_stop(h(6), Direction.IDLE, [2], [], B) is None


def test_load_building(tmp_path):
    f = tmp_path / "b.ini"
    f.write_text("[building]\nfloors = 10\ncars = 4\ndwell_s = 6\ncapacity = 12\n")
    b = load_building(f)
    assert (b.num_floors, b.num_cars, b.stop_dwell_s, b.car_capacity) == (10, 4, 6.0, 12)
    f.write_text("[building]\nfloors = ten\ncars = 4\n")
    with pytest.raises(ConfigError, match="floors"):
        load_building(f)
    f.write_text("[building]\nfloors = 10\ncars = 4\nwings = 2\n")
    with pytest.raises(ConfigError, match="wings"):
        load_building(f)
    with pytest.raises(ConfigError, match="not found"):
        load_building(tmp_path / "missing.ini")


def test_heights_follow_lobby_then_storeys():
    b = BuildingSpec(4, 1, floor_height_m=3.5, lobby_height_m=6.0)
    assert [b.height(k) for k in range(1, 5)] == [0.0, 6.0, 9.5, 13.0]
    assert math.isclose(travel_time(2, 4, b), 7.0 / 3.0)
