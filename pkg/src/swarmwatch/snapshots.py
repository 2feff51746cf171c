"""Per-cycle XML snapshots.

Schema (UTF-8):

    <crawl torrent_id="" infohash="" network="" time="" peer_count=""
           seeders="" leechers="" euro_count="" na_count="" aus_count="">
      <peer ip="" port="" bogon=""/>
      ...
    </crawl>

``time`` is ISO-8601 UTC with seconds.  ``peer_count`` equals the number
of <peer> elements; the regional counters are computed over distinct IPs
at write time, so euro+na+aus never exceeds peer_count.  Files are laid
out as <infohash-hex>/<time-compact>.xml.
"""

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .geo import GeoTable, RegionClass, classify_region
from .util import compact_utc, ip_to_int, is_bogon, iso_utc, parse_iso_utc

NETWORK_TRACKER = "tracker"


class SchemaViolation(ValueError):
    pass


@dataclass
class CrawlSnapshot:
    torrent_id: int
    infohash: bytes
    network: str
    time: float
    peer_count: int
    seeders: int
    leechers: int
    euro_count: int
    na_count: int
    aus_count: int
    peers: list  # [(ip, port, bogon)]


def build_snapshot(*, torrent_id: int, infohash: bytes, time: float,
                   peers, seeders: int = 0, leechers: int = 0,
                   geo: GeoTable = None,
                   network: str = NETWORK_TRACKER) -> CrawlSnapshot:
    """Assemble a snapshot from enumerated (ip, port) endpoints, resolving
    the regional counters through ``geo``."""
    ordered = sorted(set(peers), key=lambda p: (ip_to_int(p[0]), p[1]))
    entries = [(ip, port, is_bogon(ip)) for ip, port in ordered]

    counts = {RegionClass.EUROPE: 0, RegionClass.NORTH_AMERICA: 0,
              RegionClass.AUSTRALIA: 0}
    seen_ips = set()
    for ip, _port, bogon in entries:
        if bogon or ip in seen_ips:
            continue
        seen_ips.add(ip)
        record = geo.lookup(ip) if geo is not None else None
        if record is None:
            continue  # unresolvable: in peer_count, in no regional count
        region = classify_region(record.country)
        if region in counts:
            counts[region] += 1

    return CrawlSnapshot(
        torrent_id=torrent_id,
        infohash=infohash,
        network=network,
        time=time,
        peer_count=len(entries),
        seeders=seeders,
        leechers=leechers,
        euro_count=counts[RegionClass.EUROPE],
        na_count=counts[RegionClass.NORTH_AMERICA],
        aus_count=counts[RegionClass.AUSTRALIA],
        peers=entries,
    )


def render_snapshot(snap: CrawlSnapshot) -> bytes:
    root = ET.Element("crawl", {
        "torrent_id": str(snap.torrent_id),
        "infohash": snap.infohash.hex(),
        "network": snap.network,
        "time": iso_utc(snap.time),
        "peer_count": str(snap.peer_count),
        "seeders": str(snap.seeders),
        "leechers": str(snap.leechers),
        "euro_count": str(snap.euro_count),
        "na_count": str(snap.na_count),
        "aus_count": str(snap.aus_count),
    })
    for ip, port, bogon in snap.peers:
        ET.SubElement(root, "peer", {
            "ip": ip,
            "port": str(port),
            "bogon": "true" if bogon else "false",
        })
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True)


def _attr(elem, name, convert=str):
    value = elem.get(name)
    if value is None:
        raise SchemaViolation(f"missing attribute {name!r}")
    try:
        return convert(value)
    except ValueError as exc:
        raise SchemaViolation(f"bad attribute {name}={value!r}") from exc


def parse_snapshot(data: bytes) -> CrawlSnapshot:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise SchemaViolation(f"not well-formed XML: {exc}") from exc
    if root.tag != "crawl":
        raise SchemaViolation(f"root element is <{root.tag}>, expected <crawl>")

    infohash_hex = _attr(root, "infohash")
    try:
        infohash = bytes.fromhex(infohash_hex)
    except ValueError:
        raise SchemaViolation(f"bad infohash {infohash_hex!r}") from None
    if len(infohash) != 20:
        raise SchemaViolation("infohash is not 20 bytes")

    peers = []
    for child in root:
        if child.tag != "peer":
            raise SchemaViolation(f"unexpected element <{child.tag}>")
        ip = _attr(child, "ip")
        ip_to_int(ip)  # validates
        port = _attr(child, "port", int)
        bogon_text = _attr(child, "bogon")
        if bogon_text not in ("true", "false"):
            raise SchemaViolation(f"bad bogon flag {bogon_text!r}")
        peers.append((ip, port, bogon_text == "true"))

    snap = CrawlSnapshot(
        torrent_id=_attr(root, "torrent_id", int),
        infohash=infohash,
        network=_attr(root, "network"),
        time=_attr(root, "time", parse_iso_utc),
        peer_count=_attr(root, "peer_count", int),
        seeders=_attr(root, "seeders", int),
        leechers=_attr(root, "leechers", int),
        euro_count=_attr(root, "euro_count", int),
        na_count=_attr(root, "na_count", int),
        aus_count=_attr(root, "aus_count", int),
        peers=peers,
    )
    if snap.peer_count != len(peers):
        raise SchemaViolation(
            f"peer_count={snap.peer_count} but {len(peers)} peer elements")
    if snap.euro_count + snap.na_count + snap.aus_count > snap.peer_count:
        raise SchemaViolation("regional counts exceed peer_count")
    return snap


def snapshot_path(root, infohash: bytes, time: float) -> Path:
    return Path(root) / infohash.hex() / f"{compact_utc(time)}.xml"


def write_snapshot_file(root, snap: CrawlSnapshot) -> Path:
    path = snapshot_path(root, snap.infohash, snap.time)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_snapshot(snap))
    return path
