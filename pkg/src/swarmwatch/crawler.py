"""The monitoring loop: enumerate each swarm until no new IPs turn up,
snapshot every result, restart the whole pass on a fixed cadence.

Swarms are crawled sequentially within a cycle.  Enumeration announces
repeatedly (rotating across the job's trackers) and stops once a number of
consecutive rounds discover no new IP, or a round budget is hit.  The
first round is the baseline; the saturation streak is counted from round
two, so an instantly-saturated (or empty) swarm still takes 1+K rounds.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .bencode import TorrentMeta
from .clock import SYSTEM_CLOCK
from .geo import GeoTable
from .snapshots import build_snapshot, write_snapshot_file
from .trackers import (DEFAULT_NUMWANT, AnnounceRequest, TrackerClient,
                       TrackerClientError, new_peer_id)

log = logging.getLogger(__name__)

DEFAULT_CYCLE_INTERVAL = 120.0
DEFAULT_SATURATION_ROUNDS = 3
DEFAULT_ROUND_BUDGET = 50

STOP_SATURATED = "saturated"
STOP_BUDGET = "budget"
STOP_ERROR = "error"


class AllTrackersUnreachable(TrackerClientError):
    pass


@dataclass
class CrawlJob:
    torrent: TorrentMeta
    torrent_id: int
    trackers: tuple = ()
    cycle_interval: float = DEFAULT_CYCLE_INTERVAL

    def __post_init__(self):
        if not self.trackers:
            self.trackers = tuple(self.torrent.announce_urls)
        if self.cycle_interval < 1:
            raise ValueError("cycle_interval must be >= 1 second")
        if self.torrent_id < 1:
            raise ValueError("torrent_id must be >= 1")


@dataclass
class CrawlCycleResult:
    torrent_id: int
    started_at: float
    ended_at: float
    peers: set                    # {(ip, port)}
    announce_rounds: int
    seeders: int = 0
    leechers: int = 0
    stop_reason: str = STOP_SATURATED
    error: str = None

    @property
    def distinct_ips(self) -> int:
        return len({ip for ip, _ in self.peers})


def enumerate_swarm(job: CrawlJob, client: TrackerClient, *,
                    numwant: int = DEFAULT_NUMWANT,
                    saturation_rounds: int = DEFAULT_SATURATION_ROUNDS,
                    round_budget: int = DEFAULT_ROUND_BUDGET,
                    peer_id: bytes = None,
                    port: int = 6881,
                    clock=SYSTEM_CLOCK) -> CrawlCycleResult:
    """One enumeration pass over one swarm.  Never raises for tracker
    trouble: an unreachable cycle comes back empty and error-marked so the
    scheduler keeps going."""
    if not job.trackers:
        raise ValueError("job has no trackers")
    if saturation_rounds < 1 or round_budget < 1:
        raise ValueError("saturation_rounds and round_budget must be >= 1")

    peer_id = peer_id or new_peer_id()
    started = clock.now()
    peers = set()
    ips = set()
    seeders = leechers = 0
    rounds = 0
    zero_streak = 0
    tracker_i = 0
    stop_reason = None
    error = None

    while True:
        response = None
        for _ in range(len(job.trackers)):
            url = job.trackers[tracker_i % len(job.trackers)]
            tracker_i += 1
            request = AnnounceRequest(
                infohash=job.torrent.infohash, peer_id=peer_id, port=port,
                event="started" if rounds == 0 else "none",
                numwant=numwant,
            )
            try:
                response = client.announce(url, request)
                break
            except TrackerClientError as exc:
                log.debug("announce to %s failed: %s", url, exc)
        if response is None:
            error = "all trackers unreachable"
            stop_reason = STOP_ERROR
            break

        rounds += 1
        new_ips = {ip for ip, _ in response.peers} - ips
        ips |= new_ips
        peers.update(response.peers)
        seeders, leechers = response.seeders, response.leechers

        if rounds > 1:
            if new_ips:
                zero_streak = 0
            else:
                zero_streak += 1
                if zero_streak >= saturation_rounds:
                    stop_reason = STOP_SATURATED
                    break
        if rounds >= round_budget:
            stop_reason = STOP_BUDGET
            break

    return CrawlCycleResult(
        torrent_id=job.torrent_id,
        started_at=started,
        ended_at=clock.now(),
        peers=peers,
        announce_rounds=max(rounds, 1),
        seeders=seeders,
        leechers=leechers,
        stop_reason=stop_reason,
        error=error,
    )


def run_schedule(jobs, stop_at: float, *, client: TrackerClient,
                 geo: GeoTable = None, snapshot_dir=None,
                 clock=SYSTEM_CLOCK, on_snapshot=None,
                 numwant: int = DEFAULT_NUMWANT,
                 saturation_rounds: int = DEFAULT_SATURATION_ROUNDS,
                 round_budget: int = DEFAULT_ROUND_BUDGET,
                 parallel: bool = False):
    """Crawl all jobs per cycle until ``stop_at``; a cycle in progress when
    the deadline hits still completes and flushes.  Yields every
    CrawlCycleResult; each is written as an XML snapshot (and handed to
    ``on_snapshot``) before the next cycle begins.

    Jobs run sequentially within a cycle by default; ``parallel=True``
    enumerates them concurrently (peer accumulation stays per-job)."""
    jobs = list(jobs)
    if not jobs:
        raise ValueError("no jobs to schedule")
    interval = max(job.cycle_interval for job in jobs)

    def crawl_one(job):
        return enumerate_swarm(
            job, client, numwant=numwant,
            saturation_rounds=saturation_rounds,
            round_budget=round_budget, clock=clock,
        )

    def flush(job, result):
        snap = build_snapshot(
            torrent_id=job.torrent_id,
            infohash=job.torrent.infohash,
            time=result.started_at,
            peers=result.peers,
            seeders=result.seeders,
            leechers=result.leechers,
            geo=geo,
        )
        path = None
        if snapshot_dir is not None:
            path = write_snapshot_file(snapshot_dir, snap)
        if on_snapshot is not None:
            on_snapshot(result, snap, path)

    while clock.now() < stop_at:
        cycle_start = clock.now()
        if parallel and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
                results = list(pool.map(crawl_one, jobs))
            for job, result in zip(jobs, results):
                flush(job, result)
                yield result
        else:
            for job in jobs:
                result = crawl_one(job)
                flush(job, result)
                yield result
        elapsed = clock.now() - cycle_start
        if elapsed < interval:
            clock.sleep(interval - elapsed)
