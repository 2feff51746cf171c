"""Tracker wire protocols: HTTP(S) announce/scrape and UDP announce.

The HTTP query string carries the urlencoded binary infohash/peer_id with
compact=1 always set; responses are bencoded with peers packed 6 bytes each
(4 IP + 2 port, network byte order).  The UDP path speaks the standard
connect/announce framing with exponential-backoff retries.  IPv6 peer
blocks (18-byte entries) are parsed but kept out of the IPv4 peer list the
analytics consume.
"""

import secrets
import socket
import struct
import time
import urllib.parse
from dataclasses import dataclass, field

import requests

from . import bencode

DEFAULT_NUMWANT = 200
DEFAULT_PORT = 6881
PEER_ID_PREFIX = b"-SW0100-"

UDP_PROTOCOL_MAGIC = 0x41727101980
UDP_ACTION_CONNECT = 0
UDP_ACTION_ANNOUNCE = 1
UDP_ACTION_SCRAPE = 2
UDP_ACTION_ERROR = 3
UDP_CONNECTION_TTL = 60.0  # seconds a connection id stays valid

_EVENT_CODES = {"none": 0, "completed": 1, "started": 2, "stopped": 3}


class TrackerClientError(Exception):
    pass


class TransportError(TrackerClientError):
    pass


class Timeout(TransportError):
    pass


class TrackerFailure(TrackerClientError):
    """Bencoded 'failure reason' carried through from the tracker."""


class TrackerError(TrackerClientError):
    """UDP error action (3) with the tracker's message."""


class TransactionIdMismatch(TrackerClientError):
    pass


class MalformedResponse(TrackerClientError):
    pass


def new_peer_id() -> bytes:
    """Recognizable client tag plus random suffix."""
    return PEER_ID_PREFIX + secrets.token_bytes(12)


@dataclass
class AnnounceRequest:
    infohash: bytes
    peer_id: bytes = field(default_factory=new_peer_id)
    port: int = DEFAULT_PORT
    uploaded: int = 0
    downloaded: int = 0
    # left > 0: the crawler presents itself as a leecher and never
    # announces 'completed', so trackers hand it peers.
    left: int = 1
    event: str = "none"
    numwant: int = DEFAULT_NUMWANT

    def __post_init__(self):
        if len(self.infohash) != 20:
            raise ValueError("infohash must be exactly 20 bytes")
        if len(self.peer_id) != 20:
            raise ValueError("peer_id must be exactly 20 bytes")
        if not 1 <= self.port <= 65535:
            raise ValueError("port out of range")
        if self.numwant < 0:
            raise ValueError("numwant must be >= 0")
        if self.event not in _EVENT_CODES:
            raise ValueError(f"unknown event {self.event!r}")


@dataclass
class AnnounceResponse:
    interval: int
    seeders: int
    leechers: int
    peers: list          # [(ipv4, port)], deduplicated, ports nonzero
    peers_v6: list = field(default_factory=list)  # parsed but not analyzed


@dataclass(frozen=True)
class ScrapeStats:
    seeders: int
    leechers: int
    completed: int


def parse_compact_peers(blob: bytes) -> list:
    """Split a compact peers blob into (ip, port) tuples."""
    if len(blob) % 6:
        raise MalformedResponse(f"compact peers blob of {len(blob)} bytes")
    peers = []
    for i in range(0, len(blob), 6):
        ip = socket.inet_ntoa(blob[i : i + 4])
        port = struct.unpack(">H", blob[i + 4 : i + 6])[0]
        peers.append((ip, port))
    return peers


def encode_compact_peers(peers) -> bytes:
    return b"".join(
        socket.inet_aton(ip) + struct.pack(">H", port) for ip, port in peers
    )


def parse_compact_peers6(blob: bytes) -> list:
    if len(blob) % 18:
        raise MalformedResponse(f"compact peers6 blob of {len(blob)} bytes")
    peers = []
    for i in range(0, len(blob), 18):
        ip = socket.inet_ntop(socket.AF_INET6, blob[i : i + 16])
        port = struct.unpack(">H", blob[i + 16 : i + 18])[0]
        peers.append((ip, port))
    return peers


def _dedupe_nonzero(peers) -> list:
    seen = set()
    out = []
    for ip, port in peers:
        if port == 0 or (ip, port) in seen:
            continue
        seen.add((ip, port))
        out.append((ip, port))
    return out


def _quote(raw: bytes) -> str:
    return urllib.parse.quote(raw, safe="")


class TrackerClient:
    """Announce/scrape client; immutable configuration, no shared state
    across calls beyond a connection-id cache, so concurrent use against
    different trackers is fine."""

    def __init__(self, *, timeout: float = 10.0,
                 udp_backoff=(15.0, 30.0, 60.0), session=None):
        self.timeout = timeout
        self.udp_backoff = tuple(udp_backoff)
        self._session = session or requests.Session()
        self._udp_connections: dict = {}

    # -- dispatch ---------------------------------------------------------

    def announce(self, url: str, req: AnnounceRequest) -> AnnounceResponse:
        scheme = urllib.parse.urlsplit(url).scheme.lower()
        if scheme in ("http", "https"):
            return self.http_announce(url, req)
        if scheme == "udp":
            return self.udp_announce(url, req)
        raise TransportError(f"unsupported tracker scheme {scheme!r}")

    # -- HTTP -------------------------------------------------------------

    def http_announce(self, url: str, req: AnnounceRequest) -> AnnounceResponse:
        scheme = urllib.parse.urlsplit(url).scheme.lower()
        if scheme not in ("http", "https"):
            raise TransportError(f"not an http(s) tracker: {url}")
        query = [
            ("info_hash", _quote(req.infohash)),
            ("peer_id", _quote(req.peer_id)),
            ("port", str(req.port)),
            ("uploaded", str(req.uploaded)),
            ("downloaded", str(req.downloaded)),
            ("left", str(req.left)),
            ("compact", "1"),
            ("numwant", str(req.numwant)),
        ]
        if req.event != "none":
            query.append(("event", req.event))
        qs = "&".join(f"{k}={v}" for k, v in query)
        full = url + ("&" if "?" in url else "?") + qs
        try:
            resp = self._session.get(full, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code != 200:
            raise TransportError(f"tracker returned HTTP {resp.status_code}")
        return self._parse_http_announce(resp.content)

    @staticmethod
    def _parse_http_announce(body: bytes) -> AnnounceResponse:
        try:
            payload = bencode.decode(body, strict=False)
        except bencode.BencodeError as exc:
            raise MalformedResponse(f"announce body is not bencoded: {exc}") from exc
        if not isinstance(payload, dict):
            raise MalformedResponse("announce body is not a dictionary")
        if b"failure reason" in payload:
            reason = payload[b"failure reason"]
            raise TrackerFailure(reason.decode("utf-8", "replace")
                                 if isinstance(reason, bytes) else str(reason))

        raw_peers = payload.get(b"peers", b"")
        if isinstance(raw_peers, bytes):
            peers = parse_compact_peers(raw_peers)
        elif isinstance(raw_peers, list):  # non-compact dict model
            peers = []
            for entry in raw_peers:
                try:
                    peers.append((entry[b"ip"].decode("ascii"), entry[b"port"]))
                except (TypeError, KeyError, AttributeError):
                    raise MalformedResponse("bad dict-model peer entry") from None
        else:
            raise MalformedResponse("peers field has unexpected type")

        peers_v6 = []
        if isinstance(payload.get(b"peers6"), bytes):
            peers_v6 = parse_compact_peers6(payload[b"peers6"])

        return AnnounceResponse(
            interval=int(payload.get(b"interval", 1800)),
            seeders=int(payload.get(b"complete", 0)),
            leechers=int(payload.get(b"incomplete", 0)),
            peers=_dedupe_nonzero(peers),
            peers_v6=_dedupe_nonzero(peers_v6),
        )

    # -- UDP --------------------------------------------------------------

    @staticmethod
    def _udp_target(target):
        if isinstance(target, tuple):
            return target
        split = urllib.parse.urlsplit(target)
        if split.scheme.lower() != "udp" or not split.hostname or not split.port:
            raise TransportError(f"not a udp tracker endpoint: {target!r}")
        return split.hostname, split.port

    def udp_announce(self, target, req: AnnounceRequest) -> AnnounceResponse:
        host, port = self._udp_target(target)
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.connect((host, port))
            for attempt_timeout in self.udp_backoff:
                sock.settimeout(attempt_timeout)
                try:
                    conn_id = self._udp_connect(sock, (host, port))
                    return self._udp_announce_once(sock, conn_id, req)
                except socket.timeout:
                    self._udp_connections.pop((host, port), None)
                    continue
            raise Timeout(f"udp tracker {host}:{port} did not respond "
                          f"after {len(self.udp_backoff)} attempts")
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        finally:
            sock.close()

    def _udp_connect(self, sock, addr) -> int:
        cached = self._udp_connections.get(addr)
        if cached and cached[1] > time.monotonic():
            return cached[0]
        tid = secrets.randbits(32)
        sock.send(struct.pack(">QII", UDP_PROTOCOL_MAGIC, UDP_ACTION_CONNECT, tid))
        data = sock.recv(2048)
        if len(data) < 8:
            raise MalformedResponse(f"short connect response ({len(data)} bytes)")
        action, rtid = struct.unpack(">II", data[:8])
        if rtid != tid:
            raise TransactionIdMismatch(f"sent {tid:#x}, got {rtid:#x}")
        if action == UDP_ACTION_ERROR:
            raise TrackerError(data[8:].decode("utf-8", "replace"))
        if action != UDP_ACTION_CONNECT or len(data) < 16:
            raise MalformedResponse(f"unexpected connect response (action "
                                    f"{action}, {len(data)} bytes)")
        conn_id = struct.unpack(">Q", data[8:16])[0]
        self._udp_connections[addr] = (conn_id, time.monotonic() + UDP_CONNECTION_TTL)
        return conn_id

    def _udp_announce_once(self, sock, conn_id: int, req: AnnounceRequest) -> AnnounceResponse:
        tid = secrets.randbits(32)
        packet = struct.pack(
            ">QII20s20sQQQIIIiH",
            conn_id, UDP_ACTION_ANNOUNCE, tid,
            req.infohash, req.peer_id,
            req.downloaded, req.left, req.uploaded,
            _EVENT_CODES[req.event],
            0,                       # IP: default, tracker sees source addr
            secrets.randbits(32),    # key
            req.numwant,
            req.port,
        )
        sock.send(packet)
        data = sock.recv(65535)
        if len(data) < 8:
            raise MalformedResponse(f"short announce response ({len(data)} bytes)")
        action, rtid = struct.unpack(">II", data[:8])
        if rtid != tid:
            raise TransactionIdMismatch(f"sent {tid:#x}, got {rtid:#x}")
        if action == UDP_ACTION_ERROR:
            raise TrackerError(data[8:].decode("utf-8", "replace"))
        if action != UDP_ACTION_ANNOUNCE or len(data) < 20:
            raise MalformedResponse(f"unexpected announce action {action}")
        interval, leechers, seeders = struct.unpack(">III", data[8:20])
        peers = parse_compact_peers(data[20:])
        return AnnounceResponse(
            interval=interval,
            seeders=seeders,
            leechers=leechers,
            peers=_dedupe_nonzero(peers),
        )

    # -- scrape -----------------------------------------------------------

    @staticmethod
    def scrape_url(announce_url: str) -> str:
        """Standard convention: swap the last 'announce' path segment."""
        split = urllib.parse.urlsplit(announce_url)
        head, _, last = split.path.rpartition("/")
        if last.startswith("announce"):
            last = "scrape" + last[len("announce"):]
        path = f"{head}/{last}" if head or split.path.startswith("/") else last
        return urllib.parse.urlunsplit(split._replace(path=path))

    def scrape(self, url: str, infohashes) -> dict:
        """Per-infohash ScrapeStats; unknown hashes are simply absent."""
        infohashes = list(infohashes)
        if not 1 <= len(infohashes) <= 74:
            raise ValueError("scrape takes between 1 and 74 infohashes")
        for ih in infohashes:
            if len(ih) != 20:
                raise ValueError("infohash must be exactly 20 bytes")
        qs = "&".join(f"info_hash={_quote(ih)}" for ih in infohashes)
        full = self.scrape_url(url)
        full += ("&" if "?" in full else "?") + qs
        try:
            resp = self._session.get(full, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code != 200:
            raise TransportError(f"tracker returned HTTP {resp.status_code}")
        try:
            payload = bencode.decode(resp.content, strict=False)
        except bencode.BencodeError as exc:
            raise MalformedResponse(f"scrape body is not bencoded: {exc}") from exc
        if not isinstance(payload, dict):
            raise MalformedResponse("scrape body is not a dictionary")
        if b"failure reason" in payload:
            reason = payload[b"failure reason"]
            raise TrackerFailure(reason.decode("utf-8", "replace")
                                 if isinstance(reason, bytes) else str(reason))
        files = payload.get(b"files")
        if not isinstance(files, dict):
            raise MalformedResponse("scrape response lacks files dictionary")
        out = {}
        for ih, stats in files.items():
            if not isinstance(stats, dict):
                raise MalformedResponse("bad scrape stats entry")
            out[ih] = ScrapeStats(
                seeders=int(stats.get(b"complete", 0)),
                leechers=int(stats.get(b"incomplete", 0)),
                completed=int(stats.get(b"downloaded", 0)),
            )
        return out
