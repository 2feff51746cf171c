"""Shared helpers: IPv4 packing, bogon detection, UTC timestamp formatting."""

import struct
from datetime import datetime, timezone


def ip_to_int(ip: str) -> int:
    parts = ip.split(".")
    if len(parts) != 4:
        raise ValueError(f"not a dotted-quad IPv4 address: {ip!r}")
    value = 0
    for part in parts:
        if not part.isdigit():
            raise ValueError(f"not a dotted-quad IPv4 address: {ip!r}")
        octet = int(part)
        if octet > 255:
            raise ValueError(f"octet out of range in {ip!r}")
        value = (value << 8) | octet
    return value


def int_to_ip(value: int) -> str:
    if not 0 <= value <= 0xFFFFFFFF:
        raise ValueError(f"not a 32-bit address: {value}")
    return ".".join(str(b) for b in struct.pack(">I", value))


# Private/reserved ranges excluded from geolocation analytics, as
# (network, prefix_length) pairs.
BOGON_RANGES = (
    (0x00000000, 8),   # 0.0.0.0/8
    (0x0A000000, 8),   # 10.0.0.0/8
    (0x7F000000, 8),   # 127.0.0.0/8
    (0xAC100000, 12),  # 172.16.0.0/12
    (0xC0A80000, 16),  # 192.168.0.0/16
    (0xE0000000, 4),   # 224.0.0.0/4
)

_BOGON_MASKS = tuple(
    (net, 0xFFFFFFFF << (32 - bits) & 0xFFFFFFFF) for net, bits in BOGON_RANGES
)


def is_bogon(ip) -> bool:
    """True for addresses in private/reserved IPv4 space."""
    value = ip if isinstance(ip, int) else ip_to_int(ip)
    return any(value & mask == net for net, mask in _BOGON_MASKS)


def iso_utc(t: float) -> str:
    """ISO-8601 UTC with whole seconds, e.g. 2013-08-12T12:00:00Z."""
    return datetime.fromtimestamp(int(t), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def compact_utc(t: float) -> str:
    """Filesystem-friendly UTC stamp, e.g. 20130812T120000Z."""
    return datetime.fromtimestamp(int(t), tz=timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def parse_iso_utc(s: str) -> float:
    return datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc).timestamp()
