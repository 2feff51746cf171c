"""Desk-scale ground truth: synthetic peer populations with regional
diurnal activity and churn, served by a mock tracker that speaks the real
HTTP and UDP announce wire formats on a virtual clock.

The diurnal model per region is an online probability

    p(t) = floor + amplitude * max(0, sin(pi * x / 12)),
    x = (local_hour(t) - peak_hour + 6) mod 24,  hump while x <= 12

evaluated at fixed activation slots of one mean session length; churn is
the probability a peer re-rolls its online state at a slot boundary.  The
expected online count is therefore closed-form, which the tests lean on.

Synthetic IPs are drawn from the bundled geo fixture's ranges so
geolocation is exact by construction; a configurable share is drawn from
the gaps between ranges to model unresolvable peers.
"""

import bisect
import hashlib
import json
import logging
import math
import random
import socket
import struct
import threading
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import bencode
from .clock import SYSTEM_CLOCK
from .geo import GeoTable, classify_region
from .trackers import (UDP_ACTION_ANNOUNCE, UDP_ACTION_CONNECT,
                       UDP_ACTION_ERROR, UDP_PROTOCOL_MAGIC,
                       encode_compact_peers)
from .util import int_to_ip, ip_to_int, is_bogon

log = logging.getLogger(__name__)

REGIONS = ("europe", "north_america", "australia", "other")

# Offsets used to evaluate each region's local clock during generation.
# The 12-hour half-sine humps overlap heavily on a 24-hour clock, so the
# defaults space the three evening peaks exactly 8 hours apart (19:30,
# 03:30 and 11:30 UTC): any closer and a region's peak merges into a
# neighbour's shoulder in the summed series.
DEFAULT_REGION_OFFSETS = {
    "europe": 1.0,
    "north_america": -7.0,
    "australia": 9.0,
    "other": 5.5,
}


class InfeasibleSpec(ValueError):
    pass


@dataclass
class PopulationSpec:
    swarm_sizes: dict                 # torrent id -> base population
    region_mix: dict                  # region -> share, sums to 1
    diurnal_amplitude: float = 0.7
    peak_local_hour: float = 20.5
    activity_floor: float = 0.1
    mean_session_s: float = 1800.0
    churn: float = 1.0
    cross_membership: dict = field(default_factory=dict)  # {i: {j: prob}}
    region_offsets: dict = field(default_factory=lambda: dict(DEFAULT_REGION_OFFSETS))
    seeder_share: float = 0.25
    unresolvable_share: float = 0.0
    start: float = 0.0
    duration_s: float = 86400.0
    seed: int = 0

    def validate(self) -> None:
        if not self.swarm_sizes:
            raise InfeasibleSpec("at least one swarm required")
        for tid, size in self.swarm_sizes.items():
            if tid < 1 or size < 0:
                raise InfeasibleSpec(f"bad swarm {tid}: size {size}")
        if abs(sum(self.region_mix.values()) - 1.0) > 1e-9:
            raise InfeasibleSpec("region shares must sum to 1")
        for region, share in self.region_mix.items():
            if region not in REGIONS:
                raise InfeasibleSpec(f"unknown region {region!r}")
            if not 0 <= share <= 1:
                raise InfeasibleSpec(f"share for {region} outside [0, 1]")
        if self.diurnal_amplitude < 0 or self.activity_floor < 0:
            raise InfeasibleSpec("amplitude and floor must be non-negative")
        if self.diurnal_amplitude + self.activity_floor > 1:
            raise InfeasibleSpec("floor + amplitude exceeds probability 1")
        if not 0 <= self.peak_local_hour < 24:
            raise InfeasibleSpec("peak hour outside [0, 24)")
        if self.mean_session_s <= 0 or self.duration_s <= 0:
            raise InfeasibleSpec("session length and duration must be positive")
        if not 0 <= self.churn <= 1:
            raise InfeasibleSpec("churn outside [0, 1]")
        for share in (self.seeder_share, self.unresolvable_share):
            if not 0 <= share <= 1:
                raise InfeasibleSpec("share outside [0, 1]")
        for i, row in self.cross_membership.items():
            if i not in self.swarm_sizes:
                raise InfeasibleSpec(f"cross row for unknown swarm {i}")
            for j, prob in row.items():
                if j not in self.swarm_sizes:
                    raise InfeasibleSpec(f"cross column for unknown swarm {j}")
                if i == j and prob:
                    raise InfeasibleSpec("cross membership diagonal must be 0")
                if not 0 <= prob <= 1:
                    raise InfeasibleSpec("cross membership outside [0, 1]")

    def online_probability(self, region: str, t: float) -> float:
        offset = self.region_offsets.get(region, 0.0)
        hour = (t / 3600.0 + offset) % 24.0
        x = (hour - self.peak_local_hour + 6.0) % 24.0
        if x <= 12.0:
            return self.activity_floor + self.diurnal_amplitude * math.sin(math.pi * x / 12.0)
        return self.activity_floor

    def to_json(self) -> dict:
        return {
            "swarm_sizes": {str(k): v for k, v in self.swarm_sizes.items()},
            "region_mix": dict(self.region_mix),
            "diurnal_amplitude": self.diurnal_amplitude,
            "peak_local_hour": self.peak_local_hour,
            "activity_floor": self.activity_floor,
            "mean_session_s": self.mean_session_s,
            "churn": self.churn,
            "cross_membership": {str(i): {str(j): p for j, p in row.items()}
                                 for i, row in self.cross_membership.items()},
            "region_offsets": dict(self.region_offsets),
            "seeder_share": self.seeder_share,
            "unresolvable_share": self.unresolvable_share,
            "start": self.start,
            "duration_s": self.duration_s,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PopulationSpec":
        spec = cls(
            swarm_sizes={int(k): int(v)
                         for k, v in payload["swarm_sizes"].items()},
            region_mix=dict(payload["region_mix"]),
            diurnal_amplitude=payload.get("diurnal_amplitude", 0.7),
            peak_local_hour=payload.get("peak_local_hour", 20.5),
            activity_floor=payload.get("activity_floor", 0.1),
            mean_session_s=payload.get("mean_session_s", 1800.0),
            churn=payload.get("churn", 1.0),
            cross_membership={int(i): {int(j): float(p) for j, p in row.items()}
                              for i, row in payload.get("cross_membership", {}).items()},
            region_offsets=dict(payload.get("region_offsets", DEFAULT_REGION_OFFSETS)),
            seeder_share=payload.get("seeder_share", 0.25),
            unresolvable_share=payload.get("unresolvable_share", 0.0),
            start=payload.get("start", 0.0),
            duration_s=payload.get("duration_s", 86400.0),
            seed=payload.get("seed", 0),
        )
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "PopulationSpec":
        with open(path, "r", encoding="utf-8") as fp:
            return cls.from_json(json.load(fp))


@dataclass
class SimPeer:
    ip: int
    port: int
    region: str
    country: str
    seeder: bool
    resolvable: bool
    swarms: frozenset
    online: tuple  # ((start, end), ...) non-overlapping, sorted

    def online_at(self, t: float) -> bool:
        idx = bisect.bisect_right(self._flat, t)
        return idx % 2 == 1

    def __post_init__(self):
        flat = []
        for a, b in self.online:
            flat.append(a)
            flat.append(b)
        self._flat = flat

    @property
    def ip_str(self) -> str:
        return int_to_ip(self.ip)

    def online_span(self, window=None) -> float:
        """Total online seconds, optionally clipped to a window."""
        total = 0.0
        for a, b in self.online:
            if window is not None:
                a, b = max(a, window[0]), min(b, window[1])
            if b > a:
                total += b - a
        return total


def sim_infohash(torrent_id: int) -> bytes:
    return hashlib.sha1(b"swarm-sim-%d" % torrent_id).digest()


@dataclass
class GroundTruth:
    spec: PopulationSpec
    peers: list

    @property
    def start(self) -> float:
        return self.spec.start

    @property
    def end(self) -> float:
        return self.spec.start + self.spec.duration_s

    def swarm_members(self, torrent_id: int) -> list:
        return [p for p in self.peers if torrent_id in p.swarms]

    def infohashes(self) -> dict:
        return {tid: sim_infohash(tid) for tid in sorted(self.spec.swarm_sizes)}

    def torrent_meta(self, torrent_id: int, trackers=()) -> bencode.TorrentMeta:
        return bencode.TorrentMeta(
            infohash=sim_infohash(torrent_id),
            name=f"sim-torrent-{torrent_id}".encode(),
            total_size=0,
            announce_urls=tuple(trackers),
        )

    def online_counts(self, times, *, torrent_id=None, region=None) -> np.ndarray:
        """Realized online population at each (sorted, regular) instant."""
        times = np.asarray(times, dtype=np.float64)
        diff = np.zeros(len(times) + 1, dtype=np.int64)
        for peer in self.peers:
            if torrent_id is not None and torrent_id not in peer.swarms:
                continue
            if region is not None and peer.region != region:
                continue
            for a, b in peer.online:
                lo = int(np.searchsorted(times, a, side="left"))
                hi = int(np.searchsorted(times, b, side="left"))
                diff[lo] += 1
                diff[hi] -= 1
        return np.cumsum(diff[:-1])

    def expected_counts(self, times, *, region=None) -> np.ndarray:
        """Closed-form expectation of the online count."""
        times = np.asarray(times, dtype=np.float64)
        totals = np.zeros(len(times))
        by_region = {}
        for peer in self.peers:
            by_region[peer.region] = by_region.get(peer.region, 0) + 1
        for reg, count in by_region.items():
            if region is not None and reg != region:
                continue
            totals += count * np.array(
                [self.spec.online_probability(reg, t) for t in times])
        return totals

    def active_ips(self, window=None, min_span: float = 0.0) -> set:
        window = window or (self.start, self.end)
        out = set()
        for peer in self.peers:
            span = peer.online_span(window)
            if span > 0 and span >= min_span:
                out.add(peer.ip)
        return out

    def export_csv(self, fp) -> int:
        fp.write("ip,port,region,country,seeder,resolvable,swarms,online\n")
        for p in self.peers:
            swarms = "+".join(str(t) for t in sorted(p.swarms))
            online = ";".join(f"{a:.0f}-{b:.0f}" for a, b in p.online)
            fp.write(f"{p.ip_str},{p.port},{p.region},{p.country},"
                     f"{int(p.seeder)},{int(p.resolvable)},{swarms},{online}\n")
        return len(self.peers)


# ---------------------------------------------------------------------------
# generation

def _address_pools(geo: GeoTable):
    """Per-region address pools from the fixture ranges, plus a pool of
    unresolvable addresses from the gaps between ranges."""
    pools = {region: [] for region in REGIONS}
    for record in geo.records:
        region = classify_region(record.country)
        key = region.value if region.value in pools else "other"
        pools[key].append((record.range_start, record.range_end, record.country))

    gaps = []
    prev_end = None
    for record in geo.records:
        if prev_end is not None and record.range_start > prev_end + 1:
            lo, hi = prev_end + 1, record.range_start - 1
            if not is_bogon(lo) and not is_bogon(hi):
                gaps.append((lo, hi, ""))
        prev_end = record.range_end
    return pools, gaps


class _Allocator:
    """Draws unique addresses from a list of (start, end, country) ranges."""

    def __init__(self, ranges, rng: np.random.Generator):
        self.ranges = ranges
        self.rng = rng
        self.sizes = np.array([end - start + 1 for start, end, _ in ranges],
                              dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.capacity = int(self.offsets[-1])
        self.used = set()

    def take(self) -> tuple:
        flat = None
        for _ in range(64):
            candidate = int(self.rng.integers(0, self.capacity))
            if candidate not in self.used:
                flat = candidate
                break
        if flat is None:  # nearly full: fall back to explicit free list
            free = [f for f in range(self.capacity) if f not in self.used]
            if not free:
                raise InfeasibleSpec("address pool exhausted")
            flat = free[int(self.rng.integers(0, len(free)))]
        self.used.add(flat)
        idx = int(np.searchsorted(self.offsets, flat, side="right")) - 1
        start, _end, country = self.ranges[idx]
        return start + (flat - int(self.offsets[idx])), country


def generate(spec: PopulationSpec, geo: GeoTable) -> GroundTruth:
    """Deterministic synthetic population for a spec and geo table."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    pools, gaps = _address_pools(geo)
    allocators = {region: _Allocator(ranges, rng)
                  for region, ranges in pools.items() if ranges}
    gap_alloc = _Allocator(gaps, rng) if gaps else None

    regions = [r for r in REGIONS if spec.region_mix.get(r, 0) > 0]
    shares = np.array([spec.region_mix[r] for r in regions])
    shares = shares / shares.sum()

    n_slots = max(1, int(math.ceil(spec.duration_s / spec.mean_session_s)))
    slot_starts = spec.start + np.arange(n_slots) * spec.mean_session_s
    p_by_region = {
        r: np.array([spec.online_probability(r, t) for t in slot_starts])
        for r in regions
    }

    peers = []
    for tid in sorted(spec.swarm_sizes):
        for _ in range(spec.swarm_sizes[tid]):
            region = regions[int(rng.choice(len(regions), p=shares))]
            swarms = {tid}
            for j, prob in spec.cross_membership.get(tid, {}).items():
                if rng.random() < prob:
                    swarms.add(j)
            resolvable = not (spec.unresolvable_share and
                              rng.random() < spec.unresolvable_share)
            if resolvable:
                if region not in allocators:
                    raise InfeasibleSpec(
                        f"geo table has no ranges for region {region!r}")
                ip, country = allocators[region].take()
            else:
                if gap_alloc is None:
                    raise InfeasibleSpec("geo table has no gaps for "
                                         "unresolvable addresses")
                ip, country = gap_alloc.take()
            peers.append(SimPeer(
                ip=ip,
                port=int(rng.integers(1025, 65535)),
                region=region,
                country=country,
                seeder=bool(rng.random() < spec.seeder_share),
                resolvable=resolvable,
                swarms=frozenset(swarms),
                online=(),
            ))

    # slot-resolved online states, vectorized per region
    end = spec.start + spec.duration_s
    by_region = {}
    for i, peer in enumerate(peers):
        by_region.setdefault(peer.region, []).append(i)
    for region, indices in by_region.items():
        n = len(indices)
        probs = p_by_region[region]
        if spec.churn == 0:
            states = np.ones((n, n_slots), dtype=bool)
        else:
            draws = rng.random((n, n_slots))
            rerolls = rng.random((n, n_slots)) < spec.churn
            states = np.empty((n, n_slots), dtype=bool)
            states[:, 0] = draws[:, 0] < probs[0]
            for k in range(1, n_slots):
                fresh = draws[:, k] < probs[k]
                states[:, k] = np.where(rerolls[:, k], fresh, states[:, k - 1])
        for row, peer_i in enumerate(indices):
            intervals = []
            k = 0
            while k < n_slots:
                if states[row, k]:
                    j = k
                    while j < n_slots and states[row, j]:
                        j += 1
                    a = float(slot_starts[k])
                    b = float(min(spec.start + (j) * spec.mean_session_s, end))
                    intervals.append((a, b))
                    k = j
                else:
                    k += 1
            peers[peer_i] = SimPeer(
                ip=peers[peer_i].ip, port=peers[peer_i].port,
                region=peers[peer_i].region, country=peers[peer_i].country,
                seeder=peers[peer_i].seeder,
                resolvable=peers[peer_i].resolvable,
                swarms=peers[peer_i].swarms, online=tuple(intervals))

    return GroundTruth(spec=spec, peers=peers)


# ---------------------------------------------------------------------------
# mock tracker

@dataclass
class FaultConfig:
    http_failure_reason: str = None
    udp_error_message: str = None
    udp_drop: bool = False
    udp_wrong_transaction_id: bool = False


class MockTracker:
    """Serves a GroundTruth over real HTTP and UDP announce wire formats.
    Answers are uniform random samples of the peers online at the virtual
    clock's current instant; it never returns a peer outside the
    ground-truth online set."""

    def __init__(self, truth: GroundTruth, clock=SYSTEM_CLOCK, *,
                 faults: FaultConfig = None, seed: int = 0):
        self.truth = truth
        self.clock = clock
        self.faults = faults or FaultConfig()
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self._members = {sim_infohash(tid): truth.swarm_members(tid)
                         for tid in truth.spec.swarm_sizes}
        self._httpd = None
        self._udp_sock = None
        self._threads = []
        self.interval = 120

    # -- shared behavior --------------------------------------------------

    def sample(self, infohash: bytes, numwant: int):
        """(seeders, leechers, [(ip, port)]) among currently-online peers."""
        members = self._members.get(infohash, [])
        now = self.clock.now()
        online = [p for p in members if p.online_at(now)]
        seeders = sum(1 for p in online if p.seeder)
        with self._lock:
            picked = self._rng.sample(online, min(max(numwant, 0), len(online)))
        return seeders, len(online) - seeders, [(p.ip_str, p.port) for p in picked]

    def counters(self, infohash: bytes):
        """(seeders, leechers, completed) for scrape; completed counts the
        swarm's seeder-flagged peers."""
        members = self._members.get(infohash)
        if members is None:
            return None
        now = self.clock.now()
        online = [p for p in members if p.online_at(now)]
        seeders = sum(1 for p in online if p.seeder)
        completed = sum(1 for p in members if p.seeder)
        return seeders, len(online) - seeders, completed

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "MockTracker":
        self._start_http()
        self._start_udp()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._udp_sock is not None:
            self._udp_running = False
            try:
                # poke the blocking recvfrom so the loop notices shutdown
                poke = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                poke.sendto(b"", self._udp_sock.getsockname())
                poke.close()
            except OSError:
                pass
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout=2)
        self._threads = []
        if self._udp_sock is not None:
            self._udp_sock.close()
            self._udp_sock = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def http_url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}/announce"

    @property
    def udp_url(self) -> str:
        host, port = self._udp_sock.getsockname()
        return f"udp://{host}:{port}/announce"

    # -- HTTP --------------------------------------------------------------

    def _start_http(self) -> None:
        tracker = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _send(self, payload: bytes) -> None:
                self.send_response(200)
                self.send_header("Content-Type", "text/plain")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def do_GET(self):
                split = urllib.parse.urlsplit(self.path)
                params = {}
                hashes = []
                for pair in split.query.split("&"):
                    if not pair:
                        continue
                    key, _, value = pair.partition("=")
                    if key == "info_hash":
                        hashes.append(urllib.parse.unquote_to_bytes(value))
                    else:
                        params[key] = urllib.parse.unquote(value)
                if split.path.endswith("/scrape"):
                    self._send(tracker._http_scrape(hashes))
                elif split.path.endswith("/announce"):
                    self._send(tracker._http_announce(hashes, params))
                else:
                    self.send_error(404)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._httpd.daemon_threads = True
        thread = threading.Thread(target=self._httpd.serve_forever,
                                  name="mock-tracker-http", daemon=True)
        thread.start()
        self._threads.append(thread)

    def _http_announce(self, hashes, params) -> bytes:
        if self.faults.http_failure_reason:
            return bencode.encode({b"failure reason":
                                   self.faults.http_failure_reason.encode()})
        if not hashes:
            return bencode.encode({b"failure reason": b"missing info_hash"})
        numwant = int(params.get("numwant", 50))
        seeders, leechers, peers = self.sample(hashes[0], numwant)
        return bencode.encode({
            b"interval": self.interval,
            b"complete": seeders,
            b"incomplete": leechers,
            b"peers": encode_compact_peers(peers),
        })

    def _http_scrape(self, hashes) -> bytes:
        files = {}
        for ih in hashes:
            stats = self.counters(ih)
            if stats is None:
                continue  # unknown hashes are simply absent
            seeders, leechers, completed = stats
            files[ih] = {b"complete": seeders, b"incomplete": leechers,
                         b"downloaded": completed}
        return bencode.encode({b"files": files})

    # -- UDP ---------------------------------------------------------------

    def _start_udp(self) -> None:
        self._udp_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._udp_sock.bind(("127.0.0.1", 0))
        self._udp_running = True
        self._udp_connections = set()
        thread = threading.Thread(target=self._udp_loop,
                                  name="mock-tracker-udp", daemon=True)
        thread.start()
        self._threads.append(thread)

    def _udp_loop(self) -> None:
        sock = self._udp_sock
        while self._udp_running:
            try:
                data, addr = sock.recvfrom(4096)
            except OSError:
                break
            if not self._udp_running:
                break
            try:
                reply = self._udp_reply(data)
            except Exception as exc:  # keep serving on malformed input
                log.debug("udp request dropped: %s", exc)
                continue
            if reply is not None:
                sock.sendto(reply, addr)

    def _udp_reply(self, data: bytes):
        if self.faults.udp_drop or len(data) < 16:
            return None
        action = struct.unpack(">I", data[8:12])[0]
        tid = struct.unpack(">I", data[12:16])[0]
        if self.faults.udp_wrong_transaction_id:
            tid = (tid + 1) & 0xFFFFFFFF
        if self.faults.udp_error_message:
            return struct.pack(">II", UDP_ACTION_ERROR, tid) + \
                self.faults.udp_error_message.encode()

        if action == UDP_ACTION_CONNECT:
            magic = struct.unpack(">Q", data[:8])[0]
            if magic != UDP_PROTOCOL_MAGIC:
                return None
            conn_id = self._rng.getrandbits(63)
            self._udp_connections.add(conn_id)
            return struct.pack(">IIQ", UDP_ACTION_CONNECT, tid, conn_id)

        if action == UDP_ACTION_ANNOUNCE and len(data) >= 98:
            conn_id = struct.unpack(">Q", data[:8])[0]
            if conn_id not in self._udp_connections:
                return struct.pack(">II", UDP_ACTION_ERROR, tid) + b"bad connection id"
            infohash = data[16:36]
            numwant = struct.unpack(">i", data[92:96])[0]
            if numwant < 0:
                numwant = 50
            seeders, leechers, peers = self.sample(infohash, numwant)
            return struct.pack(">IIIII", UDP_ACTION_ANNOUNCE, tid,
                               self.interval, leechers, seeders) + \
                encode_compact_peers(peers)

        return struct.pack(">II", UDP_ACTION_ERROR, tid) + b"unsupported action"


def serve(truth: GroundTruth, clock=SYSTEM_CLOCK, *, faults=None,
          seed: int = 0) -> MockTracker:
    return MockTracker(truth, clock, faults=faults, seed=seed).start()


# ---------------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class ScoreReport:
    recall: float
    precision: float
    truth_active: int
    observed: int
    matched: int
    region_recall: dict
    span_error_mean: float
    span_error_median: float


def score(truth: GroundTruth, store, *, window=None,
          min_span: float = 0.0) -> ScoreReport:
    """Crawl accuracy against ground truth: recall/precision over peers
    whose online span within the window reaches ``min_span``, per-region
    recall, and first/last-seen span error for matched peers."""
    window = window or (truth.start, truth.end)
    if window[0] < truth.start or window[1] > truth.end:
        raise ValueError("scoring window outside the simulated span")

    active = {}
    for peer in truth.peers:
        span = peer.online_span(window)
        if span > 0 and span >= min_span:
            active[peer.ip] = peer

    observed = {ip_to_int(record.ip): record for record in store.iter_peers()}

    matched = set(active) & set(observed)
    recall = len(matched) / len(active) if active else 0.0
    truth_ips = {p.ip for p in truth.peers}
    truth_hits = sum(1 for ip in observed if ip in truth_ips)
    precision = truth_hits / len(observed) if observed else 0.0

    region_recall = {}
    for region in REGIONS:
        region_active = [ip for ip, p in active.items() if p.region == region]
        if region_active:
            hit = sum(1 for ip in region_active if ip in observed)
            region_recall[region] = hit / len(region_active)

    errors = []
    for ip in matched:
        peer = active[ip]
        starts = [max(a, window[0]) for a, b in peer.online if b > window[0] and a < window[1]]
        ends = [min(b, window[1]) for a, b in peer.online if b > window[0] and a < window[1]]
        if not starts:
            continue
        true_span = max(ends) - min(starts)
        record = observed[ip]
        obs_span = record.last_seen - record.first_seen
        errors.append(abs(obs_span - true_span))
    span_mean = float(np.mean(errors)) if errors else 0.0
    span_median = float(np.median(errors)) if errors else 0.0

    return ScoreReport(
        recall=recall,
        precision=precision,
        truth_active=len(active),
        observed=len(observed),
        matched=len(matched),
        region_recall=region_recall,
        span_error_mean=span_mean,
        span_error_median=span_median,
    )
