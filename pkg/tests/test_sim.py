import math

import pytest
from hypothesis import given, settings, strategies as st

from artifact import sim as S
from artifact.core import BuildingSpec, ConfigError, DomainError, Passenger, travel_time
from artifact.forecast import DestinationScenario, simulate_delivery
from artifact.policy import SchedulerParams
from artifact.sim import TrafficProfile, generate_traffic, load_traffic, run_trial, traffic_hash

B = BuildingSpec(12, 4)


def test_no_traffic():
    assert generate_traffic(TrafficProfile(0.0), B) == []
    m = run_trial(B, "esa-dp-la", TrafficProfile(0.0))
    assert (m.served, m.unserved, m.average_wait) == (0, 0, 0.0)


def test_traffic_concentration():
    pax = generate_traffic(TrafficProfile(1200, seed=5), B)
    assert abs(len(pax) - 1200) <= 3 * math.sqrt(1200)
    lobby = sum(p.origin_floor == 1 for p in pax) / len(pax)
    assert abs(lobby - 0.8) <= 0.04
    assert all(p.destination_floor != 1 and p.destination_floor != p.origin_floor for p in pax)
    assert all(a.arrival_time_s <= b.arrival_time_s for a, b in zip(pax, pax[1:]))


def test_traffic_seeded():
    a = generate_traffic(TrafficProfile(900, duration_s=600, seed=2), B)
    assert a == generate_traffic(TrafficProfile(900, duration_s=600, seed=2), B)
    assert a != generate_traffic(TrafficProfile(900, duration_s=600, seed=3), B)


def test_lobby_passenger_boards_parked_car_at_once():
    m = run_trial(BuildingSpec(8, 1), "esa-dp", [Passenger(0, 5.0, 1, 6)])
    assert m.waits == (0.0,)


def test_upper_floor_passenger_waits_for_travel():
    b = BuildingSpec(8, 1)
    m = run_trial(b, "esa-dp", [Passenger(0, 5.0, 5, 2)])
    assert m.waits[0] == pytest.approx(travel_time(1, 5, b))


def test_unserved_reported_when_drain_is_short():
    b = BuildingSpec(8, 1)
    m = run_trial(b, "esa-dp", [Passenger(0, 0.0, 8, 2)], drain_s=1.0)
    assert (m.served, m.unserved) == (0, 1)


def test_rejects_unsorted_traffic():
    with pytest.raises(DomainError):
        run_trial(B, "esa-dp", [Passenger(0, 5.0, 1, 3), Passenger(1, 2.0, 1, 4)])


@pytest.mark.parametrize("policy", ["conventional", "esa-dp", "esa-dp-la"])
def test_conservation(policy):
    prof = TrafficProfile(2000, duration_s=300, seed=11)
    m = run_trial(B, policy, prof)
    assert m.served + m.unserved == len(generate_traffic(prof, B))
    assert m.average_wait == pytest.approx(sum(m.waits) / len(m.waits))
    for p in m.passengers:
        if p.board_time_s is not None:
            assert p.board_time_s >= p.arrival_time_s
            assert p.alight_time_s is not None and p.alight_time_s > p.board_time_s


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.sampled_from(["conventional", "esa-dp", "esa-dp-la"]))
def test_trials_are_deterministic(seed, policy):
    prof = TrafficProfile(1500, duration_s=150, seed=seed)
    assert run_trial(B, policy, prof) == run_trial(B, policy, prof)


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_traffic_independent_of_policy(seed):
    prof = TrafficProfile(1500, duration_s=150, seed=seed)
    hashes = {run_trial(B, pol, prof).traffic_hash for pol in ("conventional", "esa-dp", "esa-dp-la")}
    assert hashes == {traffic_hash(generate_traffic(prof, B))}


def test_unbounded_capacity_leaves_nobody_behind(monkeypatch):
    left = []
    original = S._Trial._serve_here

    def serve(self, car, floor, now):
        n = original(self, car, floor, now)
        left.extend(p for p in car.assigned if p.origin_floor == floor and p.direction == car.direction)
        return n

    monkeypatch.setattr(S._Trial, "_serve_here", serve)
    run_trial(B, "esa-dp-la", TrafficProfile(2500, duration_s=300, seed=4))
    assert left == []


def test_capacity_limits_boarding():
    b = BuildingSpec(8, 1, car_capacity=2)
    pax = [Passenger(k, 1.0, 1, 5) for k in range(5)]
    m = run_trial(b, "esa-dp", pax)
    assert m.served == 5
    assert sorted(m.waits)[:2] == [0.0, 0.0] and min(sorted(m.waits)[2:]) > 0


def test_simulator_follows_forecast_itineraries(monkeypatch):
    """With traffic cut after some call, every car's actual pickups and lobby
    landing match the forecast replay with the true destinations."""
    pax = generate_traffic(TrafficProfile(2500, duration_s=300, seed=7), B)
    landings = {}
    original = S._Trial.on_car_arrival

    def arrival(self, car, now):
        original(self, car, now)
        if now >= self._cut and car.pos == 0.0 and not car.has_commitments and car.car_id not in landings:
            landings[car.car_id] = now

    monkeypatch.setattr(S._Trial, "on_car_arrival", arrival)
    mismatches = 0
    checked = 0
    for k in range(5, len(pax), 9):
        sub = [Passenger(p.id, p.arrival_time_s, p.origin_floor, p.destination_floor) for p in pax[:k]]
        monkeypatch.setattr(S._Trial, "_cut", sub[-1].arrival_time_s, raising=False)
        for policy in ("esa-dp", "conventional"):
            seen = {}
            landings.clear()
            m = run_trial(B, policy, sub, SchedulerParams(), decision_hook=lambda bank, call, rec: seen.update(
                bank=bank, call=call, rec=rec))
            boards = {p.id: p.board_time_s for p in m.passengers}
            bank, clock = seen["bank"], seen["bank"].clock_s
            for car in bank.cars:
                c = car.with_call(seen["call"]) if car.car_id == seen["rec"].chosen_car else car
                sc = DestinationScenario({h.passenger_id: sub[h.passenger_id].destination_floor
                                          for h in c.assigned_unboarded}, 1.0)
                waits, landing = simulate_delivery(c, sc, B, clock)
                for h, w in zip(c.assigned_unboarded, waits):
                    mismatches += abs(boards[h.passenger_id] - h.time_s - w) > 1e-6
                actual = landings.get(car.car_id)
                if actual is None and car.position_m == 0.0 and not c.has_commitments and not car.moving:
                    actual = clock
                mismatches += actual is None or abs(actual - clock - landing) > 1e-6
                checked += 1
    assert checked > 50 and mismatches == 0


def test_load_traffic(tmp_path):
    f = tmp_path / "t.ini"
    f.write_text("[traffic]\nrate_per_hour = 1800\nseed = 3\n")
    assert load_traffic(f) == TrafficProfile(1800.0, seed=3)
    f.write_text("[traffic]\nrate_per_hour = 1800\nlobby_fraction = 2\n")
    with pytest.raises(ConfigError, match="lobby_fraction"):
        load_traffic(f)
    f.write_text("[traffic]\nseed = 3\n")
    with pytest.raises(ConfigError, match="rate_per_hour"):
        load_traffic(f)


def test_coalescing_changes_decision_count():
    prof = TrafficProfile(2500, duration_s=300, seed=9)
    plain = run_trial(B, "esa-dp", prof)
    merged = run_trial(B, "esa-dp", prof, coalesce_calls=True)
    assert merged.decisions < plain.decisions == plain.served + plain.unserved
