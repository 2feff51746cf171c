"""Command-line entry point.

Subcommands: crawl, ingest, report, simulate, export.  Options can come
from a JSON config file (--config), individual flags override it, and the
SWARMWATCH_STORE environment variable supplies the default store path.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import analytics, bencode
from .clock import SYSTEM_CLOCK, VirtualClock
from .crawler import (DEFAULT_CYCLE_INTERVAL, DEFAULT_ROUND_BUDGET,
                      DEFAULT_SATURATION_ROUNDS, CrawlJob, run_schedule)
from .geo import GeoTable, fixture_table
from .sim import MockTracker, PopulationSpec, generate, score
from .snapshots import render_snapshot
from .store import PeerStore, StoreError, TorrentEntry, TorrentRegistry
from .trackers import DEFAULT_NUMWANT, TrackerClient
from .util import iso_utc, parse_iso_utc

ENV_STORE = "SWARMWATCH_STORE"


@dataclass
class RunConfig:
    store: str = None
    geo: str = None
    registry: str = None
    interval: float = DEFAULT_CYCLE_INTERVAL
    saturation_k: int = DEFAULT_SATURATION_ROUNDS
    round_budget: int = DEFAULT_ROUND_BUDGET
    numwant: int = DEFAULT_NUMWANT
    out: str = None
    json_output: bool = False

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        config = cls()
        if getattr(args, "config", None):
            with open(args.config, "r", encoding="utf-8") as fp:
                payload = json.load(fp)
            for key in ("store", "geo", "registry", "interval",
                        "saturation_k", "round_budget", "numwant", "out"):
                if key in payload:
                    setattr(config, key, payload[key])
        config.store = getattr(args, "store", None) or config.store \
            or os.environ.get(ENV_STORE)
        for key in ("geo", "registry", "out", "interval", "saturation_k",
                    "round_budget", "numwant"):
            value = getattr(args, key, None)
            if value is not None:
                setattr(config, key, value)
        config.json_output = bool(getattr(args, "json", False))
        return config

    def load_geo(self) -> GeoTable:
        if self.geo in (None, "fixture"):
            return fixture_table()
        return GeoTable.load(self.geo)

    def require_store(self) -> str:
        if not self.store:
            raise SystemExit("no store path; pass --store or set "
                             f"{ENV_STORE}")
        return self.store


def _open_or_create_store(config: RunConfig) -> PeerStore:
    path = Path(config.require_store())
    if (path / "registry.json").exists():
        return PeerStore.open(path)
    if not config.registry:
        raise SystemExit(f"store {path} does not exist; --registry needed "
                         "to create it")
    registry = TorrentRegistry.load(config.registry)
    return PeerStore.create(path, registry)


def _out_stream(config: RunConfig):
    if config.out:
        Path(config.out).parent.mkdir(parents=True, exist_ok=True)
        return open(config.out, "w", encoding="utf-8", newline="")
    return None


class _Writer:
    """CSV (default) or line-delimited JSON report writer."""

    def __init__(self, fp, json_output: bool):
        self.fp = fp or sys.stdout
        self.json = json_output
        self._csv = None

    def header(self, columns) -> None:
        if not self.json:
            self._csv = csv.writer(self.fp, lineterminator="\n")
            self._csv.writerow(columns)
        self._columns = list(columns)

    def row(self, values) -> None:
        if self.json:
            self.fp.write(json.dumps(dict(zip(self._columns, values))) + "\n")
        else:
            self._csv.writerow(values)

    def close(self, opened: bool) -> None:
        if opened:
            self.fp.close()


# ---------------------------------------------------------------------------
# crawl

def cmd_crawl(args) -> int:
    config = RunConfig.from_args(args)
    try:
        geo = config.load_geo()
    except Exception as exc:
        print(f"error: cannot load geo table: {exc}", file=sys.stderr)
        return 2

    metas = []
    for source in args.torrents:
        try:
            if source.startswith("magnet:"):
                metas.append(bencode.parse_magnet(source))
            else:
                metas.append(bencode.parse_torrent(Path(source).read_bytes()))
        except (OSError, ValueError) as exc:
            print(f"error: cannot parse {source!r}: {exc}", file=sys.stderr)
            return 2

    store_path = Path(config.require_store())
    if (store_path / "registry.json").exists():
        store = PeerStore.open(store_path)
    else:
        if config.registry:
            registry = TorrentRegistry.load(config.registry)
        elif args.auto_register:
            registry = TorrentRegistry([
                TorrentEntry(torrent_id=i + 1, infohash=m.infohash,
                             name=m.display_name, size=m.total_size,
                             show=m.display_name)
                for i, m in enumerate(metas)
            ])
        else:
            print("error: no registry; pass --registry or --auto-register",
                  file=sys.stderr)
            return 2
        store = PeerStore.create(store_path, registry)

    jobs = []
    for meta in metas:
        entry = store.registry.by_infohash.get(meta.infohash)
        if entry is None:
            print(f"error: infohash {meta.infohash_hex} not in registry",
                  file=sys.stderr)
            return 2
        trackers = tuple(args.tracker) if args.tracker else meta.announce_urls
        if not trackers:
            print(f"error: no trackers for {meta.display_name}", file=sys.stderr)
            return 2
        jobs.append(CrawlJob(torrent=meta, torrent_id=entry.torrent_id,
                             trackers=trackers,
                             cycle_interval=config.interval))

    client = TrackerClient(timeout=args.timeout,
                           udp_backoff=(args.timeout,) * 3)
    clock = SYSTEM_CLOCK
    snapshot_dir = store_path / "snapshots"
    warnings = 0

    def on_snapshot(result, snap, path):
        nonlocal warnings
        store.ingest_file(path, geo)
        line = (f"{iso_utc(result.started_at)} t{result.torrent_id:02d} "
                f"peers={len(result.peers)} seeders={result.seeders} "
                f"leechers={result.leechers} rounds={result.announce_rounds} "
                f"stop={result.stop_reason}")
        if result.error:
            warnings += 1
            line += f" error={result.error!r}"
        print(line)

    stop_at = clock.now() + args.duration
    for _ in run_schedule(jobs, stop_at, client=client, geo=geo,
                          snapshot_dir=snapshot_dir, clock=clock,
                          on_snapshot=on_snapshot, numwant=config.numwant,
                          saturation_rounds=config.saturation_k,
                          round_budget=config.round_budget,
                          parallel=args.parallel):
        pass
    store.checkpoint()
    store.close()
    if warnings:
        print(f"done with {warnings} error-marked cycle(s)", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# ingest

def cmd_ingest(args) -> int:
    config = RunConfig.from_args(args)
    geo = config.load_geo()
    store = _open_or_create_store(config)

    files = []
    for source in args.snapshots:
        path = Path(source)
        if path.is_dir():
            files.extend(sorted(path.rglob("*.xml"),
                                key=lambda p: (p.name, str(p))))
        else:
            files.append(path)
    files.sort(key=lambda p: (p.name, str(p)))

    from .store import IngestStats
    totals = IngestStats()
    failures = []
    for path in files:
        try:
            totals.merge(store.ingest_file(path, geo))
        except Exception as exc:
            failures.append((path, exc))
            print(f"error: {path}: {exc}", file=sys.stderr)
    store.checkpoint()
    store.close()
    print(f"files={totals.files} snapshots={totals.snapshots} "
          f"peers_seen={totals.peers_seen} new_peers={totals.new_peers} "
          f"deduped={totals.deduped} failed={len(failures)}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# report

def _resolve_selector(registry: TorrentRegistry, label: str) -> set:
    """A selector label is a show name, an episode label like
    'Show S05E09', or an explicit id list like '1+2'."""
    if all(part.isdigit() for part in label.split("+")):
        return {int(part) for part in label.split("+")}
    ids = registry.ids_for_show(label)
    if ids:
        return ids
    for episode_label, episode_ids in registry.episodes():
        if episode_label == label:
            return episode_ids
    raise SystemExit(f"selector {label!r} matches no show, episode or id list")


def cmd_report(args) -> int:
    config = RunConfig.from_args(args)
    fp = _out_stream(config)
    writer = _Writer(fp, config.json_output)

    store = None
    if not (args.report in ("swarms", "episodes") and args.seed_counts) \
            and not (args.report == "activity" and args.total_hits is not None):
        store = PeerStore.open(config.require_store())

    try:
        _run_report(args, config, store, writer)
    finally:
        if store is not None:
            store.close()
        writer.close(fp is not None)
    return 0


def _run_report(args, config, store, writer) -> None:
    kind = args.report

    if kind in ("swarms", "episodes"):
        if args.seed_counts:
            if not args.global_total:
                raise SystemExit("--seed-counts requires --global-total")
            pairs = []
            with open(args.seed_counts, "r", encoding="utf-8", newline="") as fp:
                for row in csv.reader(fp):
                    if not row or row[0] == "label":
                        continue
                    pairs.append((row[0], int(row[1])))
            report = analytics.participation_from_counts(pairs, args.global_total)
        elif kind == "swarms":
            report = analytics.swarm_table(store)
        else:
            report = analytics.episode_table(store)
        writer.header(["label", "distinct_ips", "overall_pct"])
        for row in report.rows:
            writer.row([row.label, row.distinct_ips, f"{row.overall_pct:.2f}"])
        return

    if kind == "venn":
        if not 2 <= len(args.sets) <= 3:
            raise SystemExit("venn takes 2 or 3 --sets labels")
        selectors = {label: _resolve_selector(store.registry, label)
                     for label in args.sets}
        report = analytics.cross_participation(store, selectors)
        writer.header(["kind", "labels", "count", "pct"])
        for region in report.regions:
            writer.row(["exact", "&".join(region.labels), region.count,
                        f"{region.pct_of_union:.2f}"])
        for (a, b), share in report.pairwise.items():
            writer.row(["pair", f"{a}|{b}", share.intersection,
                        f"{share.pct:.2f}"])
        return

    if kind == "geo":
        rows = analytics.geo_top(store, args.level, args.n, scope=args.scope)
        writer.header(["rank", "label", "country", "distinct_ips", "pct",
                       "cumulative_pct"])
        for row in rows:
            writer.row([row.rank, row.label, row.country, row.distinct_ips,
                        f"{row.pct:.2f}", f"{row.cumulative_pct:.2f}"])
        return

    if kind in ("timeseries", "peaks"):
        if not args.window_start or not args.window_end:
            raise SystemExit(f"{kind} needs --from and --to (ISO UTC)")
        window = (parse_iso_utc(args.window_start), parse_iso_utc(args.window_end))
        series = analytics.timeseries(store, args.torrent_id, window,
                                      bucket_width=args.bucket)
        if kind == "timeseries":
            writer.header(["bucket_start", "total", "europe",
                           "north_america", "australia"])
            for i, start in enumerate(series.bucket_starts):
                def cell(arr):
                    value = arr[i]
                    return "" if value != value else int(value)  # NaN guard
                writer.row([iso_utc(start), cell(series.total),
                            cell(series.europe), cell(series.north_america),
                            cell(series.australia)])
        else:
            peaks = analytics.detect_peaks(
                series, smoothing=args.smoothing,
                min_prominence=args.prominence, region=args.region)
            writer.header(["bucket_start", "magnitude", "local_time"])
            for peak in peaks:
                writer.row([iso_utc(peak.bucket_start),
                            f"{peak.magnitude:.2f}", peak.local_time])
        return

    if kind == "activity":
        if args.total_hits is not None:
            if not args.distinct_ips:
                raise SystemExit("--total-hits requires --distinct-ips")
            stats = analytics.activity_from_totals(
                args.total_hits, args.distinct_ips, args.cycle_interval)
        else:
            stats = analytics.activity_stats(store, args.cycle_interval)
        writer.header(["total_hits", "distinct_ips", "avg_hits_per_ip",
                       "est_avg_activity_hours"])
        writer.row([stats.total_hits, stats.distinct_ips,
                    f"{stats.avg_hits_per_ip:.2f}",
                    f"{stats.est_avg_activity_hours:.2f}"])
        return

    if kind == "sessions":
        rows = analytics.session_durations(store, per_torrent=args.per_torrent)
        writer.header(["ip", "torrent_id", "first_seen", "last_seen",
                       "span_s"])
        for row in rows:
            writer.row([row.ip, row.torrent_id, iso_utc(row.first_seen),
                        iso_utc(row.last_seen), int(row.span)])
        return

    raise SystemExit(f"unknown report {kind!r}")


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    config = RunConfig.from_args(args)
    spec = PopulationSpec.load(args.spec)
    geo = config.load_geo()
    truth = generate(spec, geo)

    if args.export_truth:
        Path(args.export_truth).parent.mkdir(parents=True, exist_ok=True)
        with open(args.export_truth, "w", encoding="utf-8") as fp:
            truth.export_csv(fp)

    intervals = []
    for value in args.intervals.split(","):
        interval = float(value)
        if interval in intervals:
            print(f"warning: duplicate interval {value} dropped",
                  file=sys.stderr)
            continue
        intervals.append(interval)

    registry = TorrentRegistry([
        TorrentEntry(torrent_id=tid, infohash=truth.infohashes()[tid],
                     name=f"sim-torrent-{tid}", show="simulation",
                     season=1, episode=tid)
        for tid in sorted(spec.swarm_sizes)
    ])

    fp = _out_stream(config)
    writer = _Writer(fp, config.json_output)
    writer.header(["interval_s", "recall", "precision", "matched",
                   "truth_active", "observed"])

    for interval in intervals:
        clock = VirtualClock(start=truth.start)
        tracker = MockTracker(truth, clock, seed=spec.seed).start()
        store = PeerStore(registry)
        client = TrackerClient(timeout=5.0, udp_backoff=(5.0, 5.0))
        url = tracker.udp_url if args.transport == "udp" else tracker.http_url
        jobs = [CrawlJob(torrent=truth.torrent_meta(tid, [url]),
                         torrent_id=tid, cycle_interval=max(interval, 1.0))
                for tid in sorted(spec.swarm_sizes)]
        try:
            for _ in run_schedule(
                    jobs, truth.end, client=client, geo=geo, clock=clock,
                    on_snapshot=lambda r, snap, p: store.ingest_snapshot(
                        render_snapshot(snap), geo),
                    numwant=config.numwant,
                    saturation_rounds=config.saturation_k,
                    round_budget=config.round_budget):
                pass
            result = score(truth, store, min_span=args.min_span)
        finally:
            tracker.stop()
        writer.row([int(interval), f"{result.recall:.4f}",
                    f"{result.precision:.4f}", result.matched,
                    result.truth_active, result.observed])

    writer.close(fp is not None)
    return 0


# ---------------------------------------------------------------------------
# export

def cmd_export(args) -> int:
    config = RunConfig.from_args(args)
    store = PeerStore.open(config.require_store())
    fp = _out_stream(config) or sys.stdout
    fmt = "jsonl" if config.json_output else "csv"
    if args.collection == "peers":
        store.export_peers(fp, fmt)
    else:
        store.export_crawls(fp, fmt)
    if fp is not sys.stdout:
        fp.close()
    store.close()
    return 0


def cmd_regeolocate(args) -> int:
    config = RunConfig.from_args(args)
    geo = config.load_geo()
    store = PeerStore.open(config.require_store())
    changed = store.regeolocate(geo)
    total = store.peer_count
    store.checkpoint()
    store.close()
    print(f"re-geolocated {changed} of {total} peers")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmwatch",
        description="BitTorrent swarm monitoring and cross-swarm analytics")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override")
        p.add_argument("--store", help=f"store directory (or ${ENV_STORE})")
        p.add_argument("--geo", help="geo CSV path, or 'fixture' for the "
                       "bundled table")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--json", action="store_true",
                       help="line-delimited JSON instead of CSV")

    p = sub.add_parser("crawl", help="crawl live or mock swarms")
    common(p)
    p.add_argument("torrents", nargs="+",
                   help=".torrent files or magnet URIs")
    p.add_argument("--registry", help="registry JSON (required for a new store)")
    p.add_argument("--auto-register", action="store_true",
                   help="build a registry from the given torrents")
    p.add_argument("--tracker", action="append",
                   help="override announce URL(s)")
    p.add_argument("--duration", type=float, default=600.0,
                   help="seconds to keep crawling (default 600)")
    p.add_argument("--interval", type=float, help="cycle interval seconds")
    p.add_argument("--saturation", dest="saturation_k", type=int,
                   help="consecutive no-new-IP rounds to stop (default 3)")
    p.add_argument("--round-budget", dest="round_budget", type=int,
                   help="max announce rounds per cycle (default 50)")
    p.add_argument("--numwant", type=int, help="peers requested per announce")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--parallel", action="store_true",
                   help="enumerate jobs concurrently within a cycle "
                        "(default: sequential)")
    p.set_defaults(func=cmd_crawl)

    p = sub.add_parser("ingest", help="ingest XML snapshots into the store")
    common(p)
    p.add_argument("snapshots", nargs="+", help="snapshot files or directories")
    p.add_argument("--registry", help="registry JSON (required for a new store)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="run an analytics report")
    common(p)
    p.add_argument("report", choices=["swarms", "episodes", "venn", "geo",
                                      "timeseries", "peaks", "activity",
                                      "sessions"])
    p.add_argument("--seed-counts", help="CSV of label,distinct rows to "
                   "report from instead of the store")
    p.add_argument("--global-total", type=int,
                   help="global distinct total for --seed-counts")
    p.add_argument("--sets", nargs="+", default=[],
                   help="venn: 2-3 selector labels (show, episode or id+id)")
    p.add_argument("--level", choices=["country", "state", "city", "isp"],
                   default="city")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--scope", help="country scope for geo reports")
    p.add_argument("--torrent-id", type=int, default=1)
    p.add_argument("--from", dest="window_start",
                   help="window start, ISO UTC")
    p.add_argument("--to", dest="window_end", help="window end, ISO UTC")
    p.add_argument("--bucket", type=float, default=120.0,
                   help="bucket width seconds (default 120)")
    p.add_argument("--smoothing", type=int, default=5,
                   help="moving-average window in buckets")
    p.add_argument("--prominence", type=float, default=0.10,
                   help="min prominence as fraction of range")
    p.add_argument("--region", choices=["europe", "north_america", "australia"],
                   help="render peak times in this region's local clock")
    p.add_argument("--cycle-interval", dest="cycle_interval", type=float,
                   default=120.0)
    p.add_argument("--total-hits", dest="total_hits", type=int,
                   help="activity: seed total hits instead of the store")
    p.add_argument("--distinct-ips", dest="distinct_ips", type=int,
                   help="activity: seed distinct IPs")
    p.add_argument("--per-torrent", action="store_true",
                   help="sessions: per-(ip, torrent) resolution")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate",
                       help="ground-truth simulation: recall vs crawl interval")
    common(p)
    p.add_argument("--spec", required=True, help="PopulationSpec JSON file")
    p.add_argument("--intervals", default="120,600,3600",
                   help="comma-separated crawl intervals in seconds")
    p.add_argument("--transport", choices=["http", "udp"], default="udp")
    p.add_argument("--min-span", dest="min_span", type=float, default=0.0,
                   help="score only peers online at least this long")
    p.add_argument("--export-truth", dest="export_truth",
                   help="also write the ground-truth population as CSV")
    p.add_argument("--saturation", dest="saturation_k", type=int)
    p.add_argument("--round-budget", dest="round_budget", type=int)
    p.add_argument("--numwant", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="emit the peer / crawl_files collections")
    common(p)
    p.add_argument("collection", choices=["peers", "crawls"])
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("regeolocate",
                       help="re-run geolocation for every stored peer "
                            "against a refreshed table")
    common(p)
    p.set_defaults(func=cmd_regeolocate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"error: {exc.code}", file=sys.stderr)
            return 2
        raise
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
