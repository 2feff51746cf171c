"""Peer and crawl-summary persistence.

Two collections, mirroring the measurement database:

* ``peer`` — one row per distinct IP with geolocation frozen at first
  sighting, a membership bitfield of torrent flags (t_1..t_N, N from the
  registry, multi-word beyond 64), first/last seen and a hit counter.
* ``crawl_files`` — one row per ingested snapshot (time, network,
  peer_count, torrent_id, EuroCount, NACount, AUSCount).

Peers live in columnar numpy arrays so distinct-IP set queries over
arbitrary torrent subsets run through the bitfield kernels.  Persistence
is an append-only JSONL ingest log plus an optional compacting checkpoint;
opening a store loads the checkpoint then replays the log tail.  A
content-hash ledger skips byte-identical snapshot files.
"""

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import _kernels
from .geo import GeoTable
from .snapshots import CrawlSnapshot, parse_snapshot
from .util import int_to_ip, ip_to_int, is_bogon, iso_utc

REGISTRY_FILE = "registry.json"
LOG_FILE = "ingest.log"
CHECKPOINT_FILE = "checkpoint.json"
LOCK_FILE = "store.lock"


class StoreError(Exception):
    pass


class UnknownTorrentId(StoreError):
    pass


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class TorrentEntry:
    torrent_id: int
    infohash: bytes
    name: str
    size: int = 0
    show: str = ""
    season: int = 0
    episode: int = 0
    release_tag: str = ""

    @property
    def episode_label(self) -> str:
        return f"{self.show} S{self.season:02d}E{self.episode:02d}"


class TorrentRegistry:
    """Maps dense torrent ids 1..N to identity and show/episode labels."""

    def __init__(self, entries):
        entries = sorted(entries, key=lambda e: e.torrent_id)
        ids = [e.torrent_id for e in entries]
        if not entries:
            raise ValueError("registry cannot be empty")
        if ids != list(range(1, len(entries) + 1)):
            raise ValueError("torrent ids must be dense 1..N")
        hashes = [e.infohash for e in entries]
        if len(set(hashes)) != len(hashes):
            raise ValueError("duplicate infohash in registry")
        self.entries = {e.torrent_id: e for e in entries}
        self.by_infohash = {e.infohash: e for e in entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, torrent_id: int) -> bool:
        return torrent_id in self.entries

    def __iter__(self):
        return iter(self.entries.values())

    def get(self, torrent_id: int) -> TorrentEntry:
        try:
            return self.entries[torrent_id]
        except KeyError:
            raise UnknownTorrentId(f"torrent id {torrent_id} not registered") from None

    def ids_for_show(self, show: str) -> set:
        return {e.torrent_id for e in self if e.show == show}

    def ids_for_episode(self, show: str, season: int, episode: int) -> set:
        return {e.torrent_id for e in self
                if (e.show, e.season, e.episode) == (show, season, episode)}

    def episodes(self):
        """Episode labels with their id sets, in first-id order."""
        groups = {}
        for e in self:
            groups.setdefault((e.show, e.season, e.episode), []).append(e.torrent_id)
        ordered = sorted(groups.items(), key=lambda kv: min(kv[1]))
        return [(TorrentEntry(ids[0], b"\0" * 20, "", show=show, season=season,
                              episode=episode).episode_label, set(ids))
                for (show, season, episode), ids in ordered]

    def shows(self):
        ordered = []
        for e in sorted(self, key=lambda e: e.torrent_id):
            if e.show not in ordered:
                ordered.append(e.show)
        return ordered

    def to_json(self) -> dict:
        return {"torrents": [
            {"id": e.torrent_id, "infohash": e.infohash.hex(), "name": e.name,
             "size": e.size, "show": e.show, "season": e.season,
             "episode": e.episode, "release_tag": e.release_tag}
            for e in self
        ]}

    @classmethod
    def from_json(cls, payload: dict) -> "TorrentRegistry":
        entries = []
        for row in payload.get("torrents", []):
            entries.append(TorrentEntry(
                torrent_id=int(row["id"]),
                infohash=bytes.fromhex(row["infohash"]),
                name=row.get("name", ""),
                size=int(row.get("size", 0)),
                show=row.get("show", ""),
                season=int(row.get("season", 0)),
                episode=int(row.get("episode", 0)),
                release_tag=row.get("release_tag", ""),
            ))
        return cls(entries)

    @classmethod
    def load(cls, path) -> "TorrentRegistry":
        with open(path, "r", encoding="utf-8") as fp:
            return cls.from_json(json.load(fp))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(self.to_json(), fp, indent=2)
            fp.write("\n")


# ---------------------------------------------------------------------------
# records

@dataclass(frozen=True)
class SnapshotRecord:
    time: float
    network: str
    peer_count: int
    torrent_id: int
    euro_count: int
    na_count: int
    aus_count: int


@dataclass(frozen=True)
class PeerRecord:
    ip: str
    country: str
    state: str
    city: str
    isp: str
    longitude: float
    latitude: float
    torrent_ids: frozenset
    first_seen: float
    last_seen: float
    hit_count: int


@dataclass
class IngestStats:
    files: int = 0
    snapshots: int = 0
    peers_seen: int = 0
    new_peers: int = 0
    deduped: int = 0

    def merge(self, other: "IngestStats") -> None:
        self.files += other.files
        self.snapshots += other.snapshots
        self.peers_seen += other.peers_seen
        self.new_peers += other.new_peers
        self.deduped += other.deduped


_GROW = 1024


class _PeerColumns:
    """Growable columnar peer table keyed by IP."""

    def __init__(self, n_words: int):
        self.n_words = n_words
        self.n = 0
        cap = _GROW
        self.ip = np.zeros(cap, dtype=np.uint32)
        self.memb = np.zeros((cap, n_words), dtype=np.uint64)
        self.first = np.zeros(cap, dtype=np.float64)
        self.last = np.zeros(cap, dtype=np.float64)
        self.hits = np.zeros(cap, dtype=np.int64)
        self.lon = np.zeros(cap, dtype=np.float64)
        self.lat = np.zeros(cap, dtype=np.float64)
        self.country = []
        self.state = []
        self.city = []
        self.isp = []
        self.index = {}  # ip int -> row

    def _ensure(self, extra: int) -> None:
        need = self.n + extra
        cap = len(self.ip)
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        for name in ("ip", "memb", "first", "last", "hits", "lon", "lat"):
            old = getattr(self, name)
            shape = (cap,) + old.shape[1:]
            new = np.zeros(shape, dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def add_row(self, ip_int: int, t: float) -> int:
        self._ensure(1)
        row = self.n
        self.n += 1
        self.ip[row] = ip_int
        self.first[row] = t
        self.last[row] = t
        self.country.append("")
        self.state.append("")
        self.city.append("")
        self.isp.append("")
        self.index[ip_int] = row
        return row


class PeerStore:
    """Single-writer, many-reader store.  ``path=None`` gives an ephemeral
    in-memory store (fixtures, simulations); otherwise the directory holds
    registry.json, ingest.log and checkpoint.json."""

    def __init__(self, registry: TorrentRegistry, path=None):
        self.registry = registry
        self.path = Path(path) if path is not None else None
        self.n_words = (len(registry) + 63) // 64
        self._cols = _PeerColumns(self.n_words)
        self._snapshots = []
        self._snapshot_ips = []  # per snapshot: np.uint32 distinct non-bogon IPs
        self._dedup = set()
        self._log_fp = None
        self._lock = FileLock(str(self.path / LOCK_FILE)) if self.path else None

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(cls, path, registry: TorrentRegistry) -> "PeerStore":
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        if (path / LOG_FILE).exists():
            raise StoreError(f"store already exists at {path}")
        registry.save(path / REGISTRY_FILE)
        (path / LOG_FILE).touch()
        return cls(registry, path)

    @classmethod
    def open(cls, path) -> "PeerStore":
        path = Path(path)
        if not (path / REGISTRY_FILE).exists():
            raise StoreError(f"no store at {path}")
        registry = TorrentRegistry.load(path / REGISTRY_FILE)
        store = cls(registry, path)
        offset = store._load_checkpoint()
        store._replay_log(offset)
        return store

    def close(self) -> None:
        if self._log_fp is not None:
            self._log_fp.close()
            self._log_fp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- basic accessors ------------------------------------------------

    @property
    def peer_count(self) -> int:
        return self._cols.n

    @property
    def total_hits(self) -> int:
        return int(self._cols.hits[: self._cols.n].sum())

    def snapshots(self, torrent_id=None):
        if torrent_id is None:
            return list(self._snapshots)
        return [s for s in self._snapshots if s.torrent_id == torrent_id]

    # -- ingest -----------------------------------------------------------

    def _mask_words(self, ids) -> np.ndarray:
        words = np.zeros(self.n_words, dtype=np.uint64)
        for tid in ids:
            if tid not in self.registry:
                raise UnknownTorrentId(f"torrent id {tid} not registered")
            bit = tid - 1
            words[bit // 64] |= np.uint64(1 << (bit % 64))
        return words

    def _upsert(self, ip_int: int, torrent_id: int, t: float, geo: GeoTable,
                geo_override=None) -> bool:
        cols = self._cols
        row = cols.index.get(ip_int)
        new = row is None
        if new:
            row = cols.add_row(ip_int, t)
            record = geo.lookup(ip_int) if geo is not None else None
            if geo_override is not None:
                (cols.country[row], cols.state[row], cols.city[row],
                 cols.isp[row], cols.lon[row], cols.lat[row]) = geo_override
            elif record is not None:
                cols.country[row] = record.country
                cols.state[row] = record.state
                cols.city[row] = record.city
                cols.isp[row] = record.isp
                cols.lon[row] = record.longitude
                cols.lat[row] = record.latitude
        bit = torrent_id - 1
        cols.memb[row, bit // 64] |= np.uint64(1 << (bit % 64))
        cols.hits[row] += 1
        if t < cols.first[row]:
            cols.first[row] = t
        if t > cols.last[row]:
            cols.last[row] = t
        return new

    def _apply_snapshot(self, snap_key: str, time: float, network: str,
                        torrent_id: int, peer_count: int, euro: int, na: int,
                        aus: int, ip_ints, geo, geo_rows=None):
        stats = IngestStats(snapshots=1)
        new_rows = {}
        for ip_int in ip_ints:
            override = geo_rows.get(str(ip_int)) if geo_rows else None
            if self._upsert(ip_int, torrent_id, time, geo, override):
                stats.new_peers += 1
                row = self._cols.index[ip_int]
                new_rows[ip_int] = row
            stats.peers_seen += 1
        self._snapshots.append(SnapshotRecord(
            time=time, network=network, peer_count=peer_count,
            torrent_id=torrent_id, euro_count=euro, na_count=na,
            aus_count=aus))
        self._snapshot_ips.append(np.array(sorted(ip_ints), dtype=np.uint32))
        self._dedup.add(snap_key)
        return stats, new_rows

    def ingest_snapshot(self, data, geo: GeoTable = None) -> IngestStats:
        """Ingest one snapshot (bytes or a parsed CrawlSnapshot).  Upserts
        every non-bogon peer, appends the crawl record, and skips
        byte-identical re-ingests via the content-hash ledger."""
        if isinstance(data, CrawlSnapshot):
            snap = data
            raw = None
            key = hashlib.sha256(repr((
                snap.torrent_id, snap.time, snap.network,
                tuple(snap.peers))).encode()).hexdigest()
        else:
            raw = bytes(data)
            key = hashlib.sha256(raw).hexdigest()
            snap = None

        if key in self._dedup:
            return IngestStats(deduped=1)
        if snap is None:
            snap = parse_snapshot(raw)
        if snap.torrent_id not in self.registry:
            raise UnknownTorrentId(f"torrent id {snap.torrent_id} not registered")

        ip_ints = sorted({ip_to_int(ip) for ip, _port, bogon in snap.peers
                          if not bogon and not is_bogon(ip)})
        if self._lock is not None:
            self._lock.acquire()
        try:
            stats, new_rows = self._apply_snapshot(
                key, snap.time, snap.network, snap.torrent_id,
                snap.peer_count, snap.euro_count, snap.na_count,
                snap.aus_count, ip_ints, geo)
            self._append_log(key, snap, ip_ints, new_rows)
        finally:
            if self._lock is not None:
                self._lock.release()
        return stats

    def ingest_file(self, path, geo: GeoTable = None) -> IngestStats:
        stats = self.ingest_snapshot(Path(path).read_bytes(), geo)
        stats.files = 1
        return stats

    # -- persistence ------------------------------------------------------

    def _append_log(self, key: str, snap: CrawlSnapshot, ip_ints, new_rows) -> None:
        if self.path is None:
            return
        if self._log_fp is None:
            self._log_fp = open(self.path / LOG_FILE, "a", encoding="utf-8")
        cols = self._cols
        geo_rows = {
            str(ip): [cols.country[row], cols.state[row], cols.city[row],
                      cols.isp[row], cols.lon[row], cols.lat[row]]
            for ip, row in new_rows.items()
        }
        line = json.dumps({
            "sha": key,
            "time": snap.time,
            "network": snap.network,
            "torrent_id": snap.torrent_id,
            "peer_count": snap.peer_count,
            "euro_count": snap.euro_count,
            "na_count": snap.na_count,
            "aus_count": snap.aus_count,
            "ips": list(map(int, ip_ints)),
            "geo": geo_rows,
        }, separators=(",", ":"))
        self._log_fp.write(line + "\n")
        self._log_fp.flush()

    def _replay_log(self, offset: int) -> None:
        log_path = self.path / LOG_FILE
        if not log_path.exists():
            return
        with open(log_path, "r", encoding="utf-8") as fp:
            fp.seek(offset)
            for line in fp:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry["sha"] in self._dedup:
                    continue
                self._apply_snapshot(
                    entry["sha"], entry["time"], entry["network"],
                    entry["torrent_id"], entry["peer_count"],
                    entry["euro_count"], entry["na_count"],
                    entry["aus_count"], entry["ips"], None,
                    geo_rows=entry.get("geo") or {})

    def checkpoint(self) -> None:
        """Compact current state so re-opening only replays the log tail."""
        if self.path is None:
            return
        cols = self._cols
        n = cols.n
        if self._lock is not None:
            self._lock.acquire()
        try:
            log_offset = os.path.getsize(self.path / LOG_FILE)
            payload = {
                "log_offset": log_offset,
                "dedup": sorted(self._dedup),
                "snapshots": [
                    [s.time, s.network, s.peer_count, s.torrent_id,
                     s.euro_count, s.na_count, s.aus_count]
                    for s in self._snapshots
                ],
                "snapshot_ips": [ips.tolist() for ips in self._snapshot_ips],
                "peers": {
                    "ip": cols.ip[:n].tolist(),
                    "memb": cols.memb[:n].tolist(),
                    "first": cols.first[:n].tolist(),
                    "last": cols.last[:n].tolist(),
                    "hits": cols.hits[:n].tolist(),
                    "lon": cols.lon[:n].tolist(),
                    "lat": cols.lat[:n].tolist(),
                    "country": cols.country[:n],
                    "state": cols.state[:n],
                    "city": cols.city[:n],
                    "isp": cols.isp[:n],
                },
            }
            tmp = self.path / (CHECKPOINT_FILE + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fp:
                json.dump(payload, fp, separators=(",", ":"))
            tmp.replace(self.path / CHECKPOINT_FILE)
        finally:
            if self._lock is not None:
                self._lock.release()

    def _load_checkpoint(self) -> int:
        cp_path = self.path / CHECKPOINT_FILE
        if not cp_path.exists():
            return 0
        with open(cp_path, "r", encoding="utf-8") as fp:
            payload = json.load(fp)
        peers = payload["peers"]
        n = len(peers["ip"])
        cols = self._cols
        cols._ensure(n)
        cols.n = n
        cols.ip[:n] = np.array(peers["ip"], dtype=np.uint32)
        if n:
            cols.memb[:n] = np.array(peers["memb"], dtype=np.uint64).reshape(n, self.n_words)
        cols.first[:n] = peers["first"]
        cols.last[:n] = peers["last"]
        cols.hits[:n] = peers["hits"]
        cols.lon[:n] = peers["lon"]
        cols.lat[:n] = peers["lat"]
        cols.country = list(peers["country"])
        cols.state = list(peers["state"])
        cols.city = list(peers["city"])
        cols.isp = list(peers["isp"])
        cols.index = {int(ip): row for row, ip in enumerate(peers["ip"])}
        self._snapshots = [SnapshotRecord(*row) for row in payload["snapshots"]]
        self._snapshot_ips = [np.array(ips, dtype=np.uint32)
                              for ips in payload.get("snapshot_ips", [])]
        self._dedup = set(payload["dedup"])
        return int(payload["log_offset"])

    # -- fixtures / bulk --------------------------------------------------

    def seed_peers(self, ip_ints, membership, *, time: float = 0.0,
                   hits_each: int = None, geo: GeoTable = None) -> int:
        """Bulk-load peers sharing one membership id-set; fixtures call this
        once per membership combination.  New IPs take the vectorized
        append path, already-present IPs are upserted.  In-memory only
        until checkpoint()."""
        ip_ints = np.asarray(ip_ints, dtype=np.uint32)
        membership = set(membership)
        if not membership:
            raise ValueError("peers need at least one membership bit")
        mask = self._mask_words(membership)
        hit_inc = len(membership) if hits_each is None else hits_each

        cols = self._cols
        index = cols.index
        fresh = [int(ip) for ip in ip_ints if int(ip) not in index]
        if len(set(fresh)) != len(fresh):
            raise ValueError("duplicate IPs in seed batch")
        n_new = len(fresh)

        if n_new:
            cols._ensure(n_new)
            start, end = cols.n, cols.n + n_new
            fresh_arr = np.array(fresh, dtype=np.uint32)
            cols.ip[start:end] = fresh_arr
            cols.memb[start:end] = mask
            cols.first[start:end] = time
            cols.last[start:end] = time
            cols.hits[start:end] = hit_inc
            if geo is not None:
                idx = geo.lookup_many(fresh_arr)
                for k in range(n_new):
                    i = idx[k]
                    if i < 0 or is_bogon(fresh[k]):
                        cols.country.append("")
                        cols.state.append("")
                        cols.city.append("")
                        cols.isp.append("")
                        continue
                    record = geo.records[i]
                    cols.country.append(record.country)
                    cols.state.append(record.state)
                    cols.city.append(record.city)
                    cols.isp.append(record.isp)
                    cols.lon[start + k] = record.longitude
                    cols.lat[start + k] = record.latitude
            else:
                for name in ("country", "state", "city", "isp"):
                    getattr(cols, name).extend([""] * n_new)
            cols.n = end
            index.update(zip(fresh, range(start, end)))

        if n_new != len(ip_ints):
            fresh_set = set(fresh)
            for ip in ip_ints:
                ip_int = int(ip)
                if ip_int in fresh_set:
                    continue
                row = index[ip_int]
                cols.memb[row] |= mask
                cols.hits[row] += hit_inc
                if time < cols.first[row]:
                    cols.first[row] = time
                if time > cols.last[row]:
                    cols.last[row] = time
        return n_new

    def regeolocate(self, geo: GeoTable) -> int:
        """Re-run geolocation for every stored peer against a fresh table
        (geo is otherwise frozen at first sighting)."""
        cols = self._cols
        changed = 0
        for row in range(cols.n):
            record = geo.lookup(int(cols.ip[row]))
            new = ("", "", "", "", 0.0, 0.0) if record is None else (
                record.country, record.state, record.city, record.isp,
                record.longitude, record.latitude)
            old = (cols.country[row], cols.state[row], cols.city[row],
                   cols.isp[row], cols.lon[row], cols.lat[row])
            if new != old:
                (cols.country[row], cols.state[row], cols.city[row],
                 cols.isp[row], cols.lon[row], cols.lat[row]) = new
                changed += 1
        return changed

    # -- queries ----------------------------------------------------------

    def _memb_matrix(self) -> np.ndarray:
        return self._cols.memb[: self._cols.n]

    def distinct_count(self, torrent_ids, mode: str = "union") -> int:
        """Distinct IPs across a torrent-id selection.

        union: any selected bit; intersection: all selected bits;
        exact: exactly the selected bits and no others.
        """
        ids = set(torrent_ids)
        if not ids:
            raise ValueError("selector cannot be empty")
        mask = self._mask_words(ids)
        memb = self._memb_matrix()
        if mode == "union":
            return _kernels.count_union(memb, mask)
        if mode == "intersection":
            return _kernels.count_intersection(memb, mask)
        if mode == "exact":
            return _kernels.count_exact(memb, mask)
        raise ValueError(f"unknown mode {mode!r}")

    def venn_exact_counts(self, selectors) -> dict:
        """For labeled selector id-sets, the count of peers in every exact
        combination of selectors (key: bitmask over selector positions)."""
        sel_masks = np.stack([self._mask_words(s) for s in selectors])
        fam = _kernels.family_masks(self._memb_matrix(), sel_masks)
        counts = np.bincount(fam, minlength=1 << len(selectors))
        return {m: int(counts[m]) for m in range(1, 1 << len(selectors))}

    def _row_record(self, row: int) -> PeerRecord:
        cols = self._cols
        mask = 0
        for w in range(self.n_words):
            mask |= int(cols.memb[row, w]) << (64 * w)
        ids = frozenset(tid for tid in self.registry.entries
                        if mask >> (tid - 1) & 1)
        return PeerRecord(
            ip=int_to_ip(int(cols.ip[row])),
            country=cols.country[row], state=cols.state[row],
            city=cols.city[row], isp=cols.isp[row],
            longitude=float(cols.lon[row]), latitude=float(cols.lat[row]),
            torrent_ids=ids,
            first_seen=float(cols.first[row]), last_seen=float(cols.last[row]),
            hit_count=int(cols.hits[row]),
        )

    def peers_matching(self, *, country=None, state=None, city=None,
                       isp=None, member_any=None, member_all=None,
                       member_exact=None):
        """Stream PeerRecords in ascending IP order, filtered conjunctively
        on geo equality and membership mode selectors."""
        cols = self._cols
        n = cols.n
        any_mask = self._mask_words(member_any) if member_any else None
        all_mask = self._mask_words(member_all) if member_all else None
        exact_mask = self._mask_words(member_exact) if member_exact is not None else None
        for row in np.argsort(cols.ip[:n], kind="stable"):
            if country is not None and cols.country[row] != country:
                continue
            if state is not None and cols.state[row] != state:
                continue
            if city is not None and cols.city[row] != city:
                continue
            if isp is not None and cols.isp[row] != isp:
                continue
            memb = cols.memb[row]
            if any_mask is not None and not (memb & any_mask).any():
                continue
            if all_mask is not None and not ((memb & all_mask) == all_mask).all():
                continue
            if exact_mask is not None and not (memb == exact_mask).all():
                continue
            yield self._row_record(int(row))

    def iter_peers(self):
        return self.peers_matching()

    def snapshot_ip_arrays(self):
        """Per-snapshot distinct non-bogon IPs, aligned with snapshots()."""
        return list(zip(self._snapshots, self._snapshot_ips))

    # -- exports ----------------------------------------------------------

    def export_peers(self, fp, fmt: str = "csv") -> int:
        """Emit the peer collection with the measurement field names:
        IP, country, state, city, ISP, longitude, latitude, t_1..t_N."""
        n_torrents = len(self.registry)
        flags = [f"t_{i}" for i in range(1, n_torrents + 1)]
        count = 0
        writer = None
        if fmt == "csv":
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(["IP", "country", "state", "city", "ISP",
                             "longitude", "latitude"] + flags)
        for record in self.iter_peers():
            bits = [tid in record.torrent_ids for tid in range(1, n_torrents + 1)]
            if writer is not None:
                writer.writerow(
                    [record.ip, record.country, record.state, record.city,
                     record.isp, record.longitude, record.latitude]
                    + ["true" if b else "false" for b in bits])
            else:
                obj = {"IP": record.ip, "country": record.country,
                       "state": record.state, "city": record.city,
                       "ISP": record.isp, "longitude": record.longitude,
                       "latitude": record.latitude}
                obj.update({flag: bool(b) for flag, b in zip(flags, bits)})
                fp.write(json.dumps(obj) + "\n")
            count += 1
        return count

    def export_crawls(self, fp, fmt: str = "csv") -> int:
        """Emit the crawl_files collection: time, network, peer_count,
        torrent_id, EuroCount, NACount, AUSCount."""
        count = 0
        writer = None
        if fmt == "csv":
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(["time", "network", "peer_count", "torrent_id",
                             "EuroCount", "NACount", "AUSCount"])
        for s in self._snapshots:
            if writer is not None:
                writer.writerow([iso_utc(s.time), s.network, s.peer_count,
                                 s.torrent_id, s.euro_count, s.na_count,
                                 s.aus_count])
            else:
                fp.write(json.dumps({
                    "time": iso_utc(s.time), "network": s.network,
                    "peer_count": s.peer_count, "torrent_id": s.torrent_id,
                    "EuroCount": s.euro_count, "NACount": s.na_count,
                    "AUSCount": s.aus_count}) + "\n")
            count += 1
        return count
