import numpy as np
import pytest

from swarmwatch.clock import VirtualClock
from swarmwatch.crawler import (STOP_BUDGET, STOP_ERROR, STOP_SATURATED,
                                CrawlJob, enumerate_swarm, run_schedule)
from swarmwatch.geo import fixture_table
from swarmwatch.sim import MockTracker, PopulationSpec, generate, sim_infohash
from swarmwatch.snapshots import parse_snapshot
from swarmwatch.trackers import TrackerClient


@pytest.fixture(scope="module")
def geo():
    return fixture_table()


def make_world(geo, sizes, *, seed=5, churn=0.0, duration=7200.0, clock=None,
               tracker_seed=7, mix=None):
    spec = PopulationSpec(
        swarm_sizes=sizes,
        region_mix=mix or {"europe": 0.5, "north_america": 0.3, "australia": 0.2},
        churn=churn, duration_s=duration, seed=seed)
    truth = generate(spec, geo)
    clock = clock or VirtualClock(0.0)
    tracker = MockTracker(truth, clock, seed=tracker_seed)
    return truth, tracker, clock


def job_for(truth, tracker, tid, *, interval=120.0, transport="udp"):
    url = tracker.udp_url if transport == "udp" else tracker.http_url
    return CrawlJob(torrent=truth.torrent_meta(tid, [url]), torrent_id=tid,
                    cycle_interval=interval)


def test_static_population_saturates_in_1_plus_k_rounds(geo):
    truth, tracker, clock = make_world(geo, {1: 40})
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        result = enumerate_swarm(job_for(truth, tracker, 1), client,
                                 numwant=200, saturation_rounds=3,
                                 clock=clock)
    assert result.stop_reason == STOP_SATURATED
    assert result.announce_rounds == 1 + 3
    assert result.peers == {(p.ip_str, p.port) for p in truth.swarm_members(1)}
    assert result.distinct_ips == 40


def test_empty_swarm_takes_1_plus_k_rounds(geo):
    truth, tracker, clock = make_world(geo, {1: 40})
    clock.set(10_000.0)  # past the simulated window: nobody online
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        result = enumerate_swarm(job_for(truth, tracker, 1), client,
                                 saturation_rounds=3, clock=clock)
    assert result.peers == set()
    assert result.announce_rounds == 1 + 3
    assert result.stop_reason == STOP_SATURATED


def test_round_budget_stops_enumeration(geo):
    truth, tracker, clock = make_world(geo, {1: 500})
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        result = enumerate_swarm(job_for(truth, tracker, 1), client,
                                 numwant=25, saturation_rounds=10,
                                 round_budget=5, clock=clock)
    assert result.stop_reason == STOP_BUDGET
    assert result.announce_rounds == 5


def coupon_collector_oracle(population: int, sample: int, budget: int,
                            k: int, seed: int) -> float:
    """Independent simulation of the same stop rule over uniform sampling
    without replacement: fraction of the population recovered."""
    rng = np.random.default_rng(seed)
    seen = set()
    zero_streak = 0
    for rounds in range(1, budget + 1):
        drawn = rng.choice(population, size=min(sample, population),
                           replace=False)
        new = set(drawn.tolist()) - seen
        seen |= new
        if rounds > 1:
            if new:
                zero_streak = 0
            else:
                zero_streak += 1
                if zero_streak >= k:
                    break
    return len(seen) / population


def test_sampled_enumeration_recovers_99_percent(geo):
    # random 25-peer samples of a 500-peer population; the oracle first
    # shows the stop rule's expected coverage crosses 99% at these settings
    oracle_recalls = [coupon_collector_oracle(500, 25, 600, 12, seed=s)
                      for s in range(20)]
    assert np.mean(oracle_recalls) >= 0.99
    truth, tracker, clock = make_world(geo, {1: 500})
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        result = enumerate_swarm(job_for(truth, tracker, 1), client,
                                 numwant=25, saturation_rounds=12,
                                 round_budget=600, clock=clock)
    population = {p.ip_str for p in truth.swarm_members(1)}
    recovered = {ip for ip, _ in result.peers}
    assert len(recovered & population) / len(population) >= 0.99


def test_all_trackers_unreachable_marks_error(geo):
    truth, tracker, clock = make_world(geo, {1: 5})
    # never started: both URLs refer to a closed port
    job = CrawlJob(torrent=truth.torrent_meta(1, ["udp://127.0.0.1:9/announce",
                                                  "http://127.0.0.1:9/announce"]),
                   torrent_id=1)
    client = TrackerClient(timeout=0.2, udp_backoff=(0.1,))
    result = enumerate_swarm(job, client, clock=clock)
    assert result.stop_reason == STOP_ERROR
    assert result.error == "all trackers unreachable"
    assert result.peers == set()


def test_rotation_unions_trackers(geo):
    # same tracker twice: rotation must still saturate and union results
    truth, tracker, clock = make_world(geo, {1: 30})
    with tracker:
        job = CrawlJob(torrent=truth.torrent_meta(1, [tracker.udp_url,
                                                      tracker.http_url]),
                       torrent_id=1)
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        result = enumerate_swarm(job, client, numwant=200, clock=clock)
    assert result.distinct_ips == 30


def test_schedule_counts_cycles_and_snapshots(geo, tmp_path):
    truth, tracker, clock = make_world(geo, {1: 10, 2: 10}, duration=40.0)
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        jobs = [job_for(truth, tracker, 1, interval=10.0),
                job_for(truth, tracker, 2, interval=10.0)]
        results = list(run_schedule(jobs, 35.0, client=client, geo=geo,
                                    snapshot_dir=tmp_path, clock=clock,
                                    saturation_rounds=2))
    # cycles start at t=0, 10, 20, 30 -> 4 cycles x 2 jobs
    assert len(results) == 8
    files = sorted(tmp_path.rglob("*.xml"))
    assert len(files) == 8
    per_dir = {d.name for d in tmp_path.iterdir()}
    assert per_dir == {sim_infohash(1).hex(), sim_infohash(2).hex()}


def test_schedule_overrun_runs_back_to_back(geo):
    truth, tracker, clock = make_world(geo, {1: 5}, duration=1000.0)

    class SlowClock:
        """Each announce costs 3 virtual seconds via a wrapping client."""
        def __init__(self, inner):
            self.inner = inner
        def now(self):
            return self.inner.now()
        def sleep(self, s):
            self.inner.sleep(s)

    with tracker:
        slow = SlowClock(clock)
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        orig = client.udp_announce
        def announce_with_cost(url, req):
            clock.advance(3.0)
            return orig(url, req)
        client.udp_announce = announce_with_cost
        # each cycle: 3 rounds x 3s = 9s > 2s interval -> zero sleep
        jobs = [CrawlJob(torrent=truth.torrent_meta(1, [tracker.udp_url]),
                         torrent_id=1, cycle_interval=2.0)]
        results = list(run_schedule(jobs, 30.0, client=client, geo=geo,
                                    clock=slow, saturation_rounds=2))
    starts = [r.started_at for r in results]
    gaps = np.diff(starts)
    assert all(gap >= 9.0 for gap in gaps)  # back-to-back, no idle sleep
    assert len(results) >= 3


def test_schedule_partial_cycle_still_flushed(geo, tmp_path):
    truth, tracker, clock = make_world(geo, {1: 5, 2: 5}, duration=1000.0)
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        jobs = [job_for(truth, tracker, 1, interval=100.0),
                job_for(truth, tracker, 2, interval=100.0)]
        # stop_at is hit while the first cycle is underway (stop_at > 0 so
        # the cycle starts; everything in it still flushes)
        results = list(run_schedule(jobs, 0.5, client=client, geo=geo,
                                    snapshot_dir=tmp_path, clock=clock,
                                    saturation_rounds=2))
    assert len(results) == 2
    assert len(list(tmp_path.rglob("*.xml"))) == 2


def test_snapshot_roundtrip_reproduces_peer_set(geo, tmp_path):
    truth, tracker, clock = make_world(geo, {1: 25})
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        jobs = [job_for(truth, tracker, 1)]
        results = list(run_schedule(jobs, 1.0, client=client, geo=geo,
                                    snapshot_dir=tmp_path, clock=clock,
                                    saturation_rounds=2))
    path = next(tmp_path.rglob("*.xml"))
    snap = parse_snapshot(path.read_bytes())
    assert {(ip, port) for ip, port, _ in snap.peers} == results[0].peers
    assert snap.peer_count == len(results[0].peers)


def test_parallel_cycle_matches_ground_truth(geo):
    truth, tracker, clock = make_world(geo, {1: 20, 2: 25})
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        jobs = [job_for(truth, tracker, 1, interval=60.0),
                job_for(truth, tracker, 2, interval=60.0)]
        results = list(run_schedule(jobs, 1.0, client=client, geo=geo,
                                    clock=clock, saturation_rounds=2,
                                    parallel=True))
    assert len(results) == 2
    by_id = {r.torrent_id: r for r in results}
    for tid in (1, 2):
        assert by_id[tid].peers == {(p.ip_str, p.port)
                                    for p in truth.swarm_members(tid)}


def test_window_union_matches_active_population(geo):
    """Union of all cycle results over a window equals the simulator's
    active set, with at most 1% slack for peers online under one cycle."""
    truth, tracker, clock = make_world(geo, {1: 200}, churn=1.0,
                                       duration=14400.0, seed=19)
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        jobs = [job_for(truth, tracker, 1, interval=600.0)]
        union = set()
        for result in run_schedule(jobs, truth.end, client=client, geo=geo,
                                   clock=clock, saturation_rounds=2):
            union |= {ip for ip, _ in result.peers}
    from swarmwatch.util import ip_to_int
    observed = {ip_to_int(ip) for ip in union}
    active = truth.active_ips()
    long_lived = truth.active_ips(min_span=600.0)
    assert long_lived <= observed            # nobody spanning a cycle missed
    assert len(active - observed) <= max(1, 0.01 * len(active))
    assert observed <= active                # never invents peers


def test_cycle_result_invariants(geo):
    truth, tracker, clock = make_world(geo, {1: 40})
    with tracker:
        client = TrackerClient(timeout=5, udp_backoff=(3.0,))
        result = enumerate_swarm(job_for(truth, tracker, 1), client,
                                 clock=clock, saturation_rounds=2)
    assert result.ended_at >= result.started_at
    assert result.announce_rounds >= 1
    assert result.seeders >= 0 and result.leechers >= 0


def test_job_validation(geo):
    truth, tracker, clock = make_world(geo, {1: 1})
    with pytest.raises(ValueError):
        CrawlJob(torrent=truth.torrent_meta(1, ["udp://t:1"]), torrent_id=1,
                 cycle_interval=0.5)
    with pytest.raises(ValueError):
        CrawlJob(torrent=truth.torrent_meta(1, ["udp://t:1"]), torrent_id=0)
    with pytest.raises(ValueError):
        run_schedule([], 10.0, client=None, clock=clock).__next__()
