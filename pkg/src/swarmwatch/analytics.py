"""Cross-swarm and geolocational analytics over a peer store.

Covers swarm- and episode-level distinct-IP participation tables,
exact-region Venn breakdowns with pairwise overlap shares, top-N
geographic/ISP distributions with cumulative coverage, bucketed swarm-size
time series with regional decomposition, peak detection, activity
statistics, and per-peer session durations.

Percentages are rounded half-up to two decimals everywhere they are
printed.  The pairwise share of two selections A, B is |A∩B| / |A∪B|.
"""

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from . import _kernels
from .store import PeerStore
from .util import int_to_ip

# Fixed representative UTC offsets used only to render peak times in a
# region's local clock; regions are whole-continent aggregates.
REGION_RENDER_OFFSETS = {
    "europe": 1.0,
    "north_america": -5.0,
    "australia": 10.0,
}

DEFAULT_BUCKET_WIDTH = 120.0
DEFAULT_SMOOTHING = 5
DEFAULT_MIN_PROMINENCE = 0.10


class EmptyStore(ValueError):
    pass


class SelectorArity(ValueError):
    pass


class BadScope(ValueError):
    pass


class EmptyWindow(ValueError):
    pass


class SeriesTooShort(ValueError):
    pass


def round_pct(numerator: int, denominator: int) -> float:
    """100 * numerator / denominator, rounded half-up to 2 decimals."""
    if denominator == 0:
        return 0.0
    pct = Decimal(numerator) * 100 / Decimal(denominator)
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# participation tables

@dataclass(frozen=True)
class ParticipationRow:
    label: str
    distinct_ips: int
    overall_pct: float


@dataclass(frozen=True)
class ParticipationReport:
    rows: tuple
    global_distinct: int


def participation_from_counts(pairs, global_total: int) -> ParticipationReport:
    """Build a participation table from precomputed (label, distinct)
    counts against a global distinct total."""
    if global_total <= 0:
        raise EmptyStore("global distinct total must be positive")
    rows = tuple(ParticipationRow(label, count, round_pct(count, global_total))
                 for label, count in pairs)
    return ParticipationReport(rows=rows, global_distinct=global_total)


def swarm_table(store: PeerStore) -> ParticipationReport:
    """One row per monitored torrent: distinct IPs and share of the global
    distinct total."""
    if store.peer_count == 0:
        raise EmptyStore("no peers stored")
    total = store.peer_count
    pairs = [(entry.name or f"torrent {entry.torrent_id}",
              store.distinct_count({entry.torrent_id}, "union"))
             for entry in store.registry]
    return participation_from_counts(pairs, total)


def episode_table(store: PeerStore) -> ParticipationReport:
    """One row per episode: the union of that episode's torrent ids."""
    if store.peer_count == 0:
        raise EmptyStore("no peers stored")
    total = store.peer_count
    pairs = [(label, store.distinct_count(ids, "union"))
             for label, ids in store.registry.episodes()]
    return participation_from_counts(pairs, total)


# ---------------------------------------------------------------------------
# cross-swarm Venn

@dataclass(frozen=True)
class VennRegion:
    labels: tuple       # which selectors this exact region belongs to
    count: int
    pct_of_union: float


@dataclass(frozen=True)
class PairShare:
    intersection: int
    union: int
    pct: float          # 100 * |A n B| / |A u B|


@dataclass(frozen=True)
class VennReport:
    labels: tuple
    regions: tuple      # every nonempty exact region
    union: int
    pairwise: dict      # (label_a, label_b) -> PairShare


def cross_participation(store: PeerStore, selectors: dict) -> VennReport:
    """Exact-region Venn over 2-3 labeled torrent-id selections, plus the
    pairwise overlap share |A∩B|/|A∪B| for every pair."""
    if not 2 <= len(selectors) <= 3:
        raise SelectorArity("venn takes 2 or 3 selectors")
    labels = tuple(selectors.keys())
    id_sets = [set(selectors[label]) for label in labels]
    exact = store.venn_exact_counts(id_sets)
    union = sum(exact.values())

    regions = []
    for mask in sorted(exact):
        members = tuple(labels[j] for j in range(len(labels)) if mask >> j & 1)
        regions.append(VennRegion(
            labels=members,
            count=exact[mask],
            pct_of_union=round_pct(exact[mask], union) if union else 0.0,
        ))

    pairwise = {}
    for a in range(len(labels)):
        for b in range(a + 1, len(labels)):
            inter = sum(c for m, c in exact.items() if m >> a & 1 and m >> b & 1)
            pair_union = sum(c for m, c in exact.items()
                             if m >> a & 1 or m >> b & 1)
            pairwise[(labels[a], labels[b])] = PairShare(
                intersection=inter, union=pair_union,
                pct=round_pct(inter, pair_union) if pair_union else 0.0)

    return VennReport(labels=labels, regions=tuple(regions), union=union,
                      pairwise=pairwise)


# ---------------------------------------------------------------------------
# geographic / ISP distributions

@dataclass(frozen=True)
class GeoTopRow:
    rank: int
    label: str
    country: str
    distinct_ips: int
    pct: float
    cumulative_pct: float


_GEO_LEVELS = ("country", "state", "city", "isp")


def geo_top(store: PeerStore, level: str, n: int, scope: str = None):
    """Top-N rows at country/state/city/ISP level, count-descending with
    lexicographic tie-break, plus cumulative coverage of the scope total.
    State level requires scope US or CA; any level accepts a country scope.
    """
    if level not in _GEO_LEVELS:
        raise BadScope(f"level must be one of {_GEO_LEVELS}")
    if level == "state" and scope not in ("US", "CA"):
        raise BadScope("state level requires scope US or CA")
    if n < 1:
        raise ValueError("n must be >= 1")

    counts = {}
    scope_total = 0
    for record in store.iter_peers():
        if scope is not None and record.country != scope:
            continue
        scope_total += 1
        if level == "country":
            key = (record.country, record.country)
        elif level == "state":
            key = (record.state, record.country)
        elif level == "city":
            key = (record.city, record.country)
        else:
            key = (record.isp, record.country)
        if not key[0]:
            continue  # unresolved peers stay in the denominator only
        counts[key] = counts.get(key, 0) + 1

    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    rows = []
    cumulative = 0
    for rank, ((label, country), count) in enumerate(ranked[:n], start=1):
        cumulative += count
        rows.append(GeoTopRow(
            rank=rank, label=label, country=country, distinct_ips=count,
            pct=round_pct(count, scope_total),
            cumulative_pct=round_pct(cumulative, scope_total),
        ))
    return rows


# ---------------------------------------------------------------------------
# time series

@dataclass(frozen=True)
class SwarmTimeSeries:
    bucket_starts: np.ndarray   # float64 UTC seconds
    total: np.ndarray           # float64, NaN for missing cycles
    europe: np.ndarray
    north_america: np.ndarray
    australia: np.ndarray
    bucket_width: float


def timeseries(store: PeerStore, torrent_id: int, window,
               bucket_width: float = DEFAULT_BUCKET_WIDTH) -> SwarmTimeSeries:
    """Bucketed swarm-size series for one torrent from its crawl records.
    Buckets are contiguous over the window; cycles without a snapshot are
    explicit NaN gaps.  When several snapshots land in one bucket the
    latest wins."""
    t0, t1 = float(window[0]), float(window[1])
    if t1 <= t0:
        raise EmptyWindow("window end must be after start")
    snaps = [s for s in store.snapshots(torrent_id) if t0 <= s.time < t1]
    if not snaps:
        raise EmptyWindow(f"no snapshots for torrent {torrent_id} in window")

    n = int(np.ceil((t1 - t0) / bucket_width))
    starts = t0 + np.arange(n, dtype=np.float64) * bucket_width
    total = np.full(n, np.nan)
    europe = np.full(n, np.nan)
    na = np.full(n, np.nan)
    aus = np.full(n, np.nan)
    for s in sorted(snaps, key=lambda s: s.time):
        b = int((s.time - t0) // bucket_width)
        total[b] = s.peer_count
        europe[b] = s.euro_count
        na[b] = s.na_count
        aus[b] = s.aus_count
    return SwarmTimeSeries(bucket_starts=starts, total=total, europe=europe,
                           north_america=na, australia=aus,
                           bucket_width=bucket_width)


@dataclass(frozen=True)
class Peak:
    bucket_start: float
    magnitude: float
    local_time: str = ""


def _local_label(t: float, offset_hours: float) -> str:
    tz = timezone(timedelta(hours=offset_hours))
    return datetime.fromtimestamp(int(t), tz=tz).strftime("%Y-%m-%d %H:%M")


def detect_peaks(series: SwarmTimeSeries, *,
                 smoothing: int = DEFAULT_SMOOTHING,
                 min_prominence: float = DEFAULT_MIN_PROMINENCE,
                 field_name: str = "total",
                 region: str = None):
    """Smooth with a centered moving average, then keep local maxima whose
    topographic prominence reaches ``min_prominence`` of the smoothed
    range.  With a region lens, peaks also carry the local-time rendering
    at that region's fixed representative offset."""
    values = getattr(series, field_name)
    if smoothing < 1:
        raise ValueError("smoothing must be >= 1")
    window = smoothing | 1  # centered windows are odd
    if len(values) <= window:
        raise SeriesTooShort(f"series of {len(values)} buckets needs > {window}")
    smooth = _kernels.moving_average(values, window)

    finite = np.isfinite(smooth)
    if not finite.any():
        return []
    span = float(np.nanmax(smooth) - np.nanmin(smooth))
    if span == 0.0:
        return []
    threshold = min_prominence * span

    peaks = []
    n = len(smooth)
    i = 0
    while i < n:
        if not finite[i]:
            i += 1
            continue
        # plateau of equal values [i, j)
        j = i + 1
        while j < n and finite[j] and smooth[j] == smooth[i]:
            j += 1
        left_ok = i > 0 and finite[i - 1] and smooth[i - 1] < smooth[i]
        right_ok = j < n and finite[j] and smooth[j] < smooth[i]
        if left_ok and right_ok:
            mid = (i + j - 1) // 2
            prom = _prominence(smooth, finite, i, j - 1)
            if prom >= threshold:
                t = float(series.bucket_starts[mid])
                local = ""
                if region is not None:
                    try:
                        local = _local_label(t, REGION_RENDER_OFFSETS[region])
                    except KeyError:
                        raise ValueError(f"unknown region {region!r}") from None
                peaks.append(Peak(bucket_start=t,
                                  magnitude=float(smooth[mid]),
                                  local_time=local))
        i = j
    return peaks


def _prominence(values, finite, lo: int, hi: int) -> float:
    """Topographic prominence of the peak spanning [lo, hi]: height above
    the higher of the two side minima, where each side's walk extends to
    the next higher value, a NaN gap, or the series border."""
    height = values[lo]
    left_min = height
    k = lo - 1
    while k >= 0 and finite[k] and values[k] <= height:
        left_min = min(left_min, values[k])
        k -= 1

    right_min = height
    k = hi + 1
    while k < len(values) and finite[k] and values[k] <= height:
        right_min = min(right_min, values[k])
        k += 1

    return float(height - max(left_min, right_min))


# ---------------------------------------------------------------------------
# activity and sessions

@dataclass(frozen=True)
class ActivityStats:
    total_hits: int
    distinct_ips: int
    avg_hits_per_ip: float
    est_avg_activity_s: float

    @property
    def est_avg_activity_hours(self) -> float:
        return self.est_avg_activity_s / 3600.0


def activity_from_totals(total_hits: int, distinct_ips: int,
                         cycle_interval: float = DEFAULT_BUCKET_WIDTH) -> ActivityStats:
    if distinct_ips <= 0:
        raise EmptyStore("distinct IP count must be positive")
    avg = total_hits / distinct_ips
    return ActivityStats(
        total_hits=total_hits,
        distinct_ips=distinct_ips,
        avg_hits_per_ip=avg,
        est_avg_activity_s=avg * cycle_interval,
    )


def activity_stats(store: PeerStore,
                   cycle_interval: float = DEFAULT_BUCKET_WIDTH) -> ActivityStats:
    """Average observations per IP and the implied mean swarm-activity
    time at the configured cycle interval."""
    if store.peer_count == 0:
        raise EmptyStore("no peers stored")
    return activity_from_totals(store.total_hits, store.peer_count,
                                cycle_interval)


@dataclass(frozen=True)
class SessionRow:
    ip: str
    torrent_id: int          # 0 in cross-torrent mode
    first_seen: float
    last_seen: float

    @property
    def span(self) -> float:
        return self.last_seen - self.first_seen


def session_durations(store: PeerStore, *, per_torrent: bool = False):
    """Per-peer first/last appearance and span.

    Cross-torrent mode reads the peer index; per-torrent mode rescans the
    stored snapshot membership for (ip, torrent) resolution.
    """
    if not per_torrent:
        return [SessionRow(r.ip, 0, r.first_seen, r.last_seen)
                for r in store.iter_peers()]
    spans = {}
    for snap, ips in store.snapshot_ip_arrays():
        for ip in ips.tolist():
            key = (ip, snap.torrent_id)
            window = spans.get(key)
            if window is None:
                spans[key] = [snap.time, snap.time]
            else:
                window[0] = min(window[0], snap.time)
                window[1] = max(window[1], snap.time)
    return [SessionRow(int_to_ip(ip), tid, first, last)
            for (ip, tid), (first, last) in sorted(spans.items())]
