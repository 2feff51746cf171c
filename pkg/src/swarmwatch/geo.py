"""IPv4 range geolocation from an open CSV database, plus the
Europe / North America / Australia region classifier.

CSV schema (header required, range bounds as dotted quads or integers):

    range_start,range_end,country,state,city,isp,longitude,latitude

Loaded tables are sorted, overlap-free and immutable; lookups binary-search
the range bounds.  ``state`` is kept only for US/Canadian rows.  A bundled
~200-row fixture table covers the cities used throughout the test suite.
"""

import bisect
import csv
import enum
import importlib.resources
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .util import int_to_ip, ip_to_int, is_bogon


class GeoError(ValueError):
    pass


class ParseError(GeoError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OverlapError(GeoError):
    def __init__(self, line_a: int, line_b: int):
        super().__init__(f"ranges on lines {line_a} and {line_b} overlap")
        self.line_a = line_a
        self.line_b = line_b


class RegionClass(enum.Enum):
    EUROPE = "europe"
    NORTH_AMERICA = "north_america"
    AUSTRALIA = "australia"
    OTHER = "other"
    UNKNOWN = "unknown"


# Pinned membership for the EuroCount classifier: EU/EEA/UK/CH plus the
# remaining geographic-Europe ISO-3166 alpha-2 codes.
EUROPE_COUNTRIES = frozenset({
    "AD", "AL", "AT", "AX", "BA", "BE", "BG", "BY", "CH", "CY", "CZ", "DE",
    "DK", "EE", "ES", "FI", "FO", "FR", "GB", "GG", "GI", "GR", "HR", "HU",
    "IE", "IM", "IS", "IT", "JE", "LI", "LT", "LU", "LV", "MC", "MD", "ME",
    "MK", "MT", "NL", "NO", "PL", "PT", "RO", "RS", "RU", "SE", "SI", "SJ",
    "SK", "SM", "UA", "VA", "XK",
})

NORTH_AMERICA_COUNTRIES = frozenset({"US", "CA"})

AUSTRALIA_COUNTRIES = frozenset({"AU"})


def classify_region(country: str) -> RegionClass:
    """Total, deterministic country-code classifier behind the regional
    swarm-size counters."""
    if not country:
        return RegionClass.UNKNOWN
    code = country.upper()
    if code in EUROPE_COUNTRIES:
        return RegionClass.EUROPE
    if code in NORTH_AMERICA_COUNTRIES:
        return RegionClass.NORTH_AMERICA
    if code in AUSTRALIA_COUNTRIES:
        return RegionClass.AUSTRALIA
    return RegionClass.OTHER


@dataclass(frozen=True)
class GeoRecord:
    range_start: int
    range_end: int
    country: str
    state: str
    city: str
    isp: str
    longitude: float
    latitude: float

    @property
    def start_ip(self) -> str:
        return int_to_ip(self.range_start)

    @property
    def end_ip(self) -> str:
        return int_to_ip(self.range_end)


_HEADER = ["range_start", "range_end", "country", "state", "city", "isp",
           "longitude", "latitude"]


def _parse_bound(text: str, line: int) -> int:
    text = text.strip()
    try:
        if "." in text:
            return ip_to_int(text)
        value = int(text)
    except ValueError:
        raise ParseError(line, f"bad range bound {text!r}") from None
    if not 0 <= value <= 0xFFFFFFFF:
        raise ParseError(line, f"range bound {value} outside 32-bit space")
    return value


class GeoTable:
    """Immutable, sorted, overlap-free IP range table."""

    def __init__(self, records):
        self.records = tuple(records)
        self._starts_list = [r.range_start for r in self.records]
        self.starts = np.array(self._starts_list, dtype=np.uint32)
        self.ends = np.array([r.range_end for r in self.records], dtype=np.uint32)

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def load(cls, source) -> "GeoTable":
        """Load and validate a CSV table; rejects bad rows and overlapping
        ranges with the offending line numbers."""
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            with open(source, "r", encoding="utf-8", newline="") as fp:
                return cls._load_fp(fp)
        return cls._load_fp(source)

    @classmethod
    def _load_fp(cls, fp) -> "GeoTable":
        reader = csv.reader(fp)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        if [h.strip() for h in header] != _HEADER:
            raise ParseError(1, f"header must be {','.join(_HEADER)}")

        rows = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(_HEADER):
                raise ParseError(line, f"expected {len(_HEADER)} columns, got {len(row)}")
            start = _parse_bound(row[0], line)
            end = _parse_bound(row[1], line)
            if start > end:
                raise ParseError(line, "range_start exceeds range_end")
            country = row[2].strip().upper()
            if len(country) != 2 or not country.isalpha():
                raise ParseError(line, f"bad country code {row[2]!r}")
            state = row[3].strip().upper()
            if country not in NORTH_AMERICA_COUNTRIES:
                state = ""  # subdivisions kept only for US/CA
            try:
                longitude = float(row[6])
                latitude = float(row[7])
            except ValueError:
                raise ParseError(line, "bad coordinate") from None
            if abs(latitude) > 90 or abs(longitude) > 180:
                raise ParseError(line, "coordinate out of range")
            rows.append((line, GeoRecord(start, end, country, state,
                                         row[4].strip(), row[5].strip(),
                                         longitude, latitude)))

        rows.sort(key=lambda pair: pair[1].range_start)
        for (line_a, a), (line_b, b) in zip(rows, rows[1:]):
            if b.range_start <= a.range_end:
                raise OverlapError(line_a, line_b)
        return cls(record for _, record in rows)

    def lookup(self, ip):
        """GeoRecord containing ``ip``, or None (bogons short-circuit)."""
        value = ip if isinstance(ip, int) else ip_to_int(ip)
        if is_bogon(value):
            return None
        idx = bisect.bisect_right(self._starts_list, value) - 1
        if idx >= 0 and value <= self.records[idx].range_end:
            return self.records[idx]
        return None

    def lookup_many(self, ips) -> np.ndarray:
        """Vectorized lookup: int64 record indices, -1 where unmatched.
        Bogon filtering is the caller's concern on this path."""
        return _kernels.range_lookup(self.starts, self.ends, ips)


def fixture_table() -> GeoTable:
    """The bundled fixture table used by tests and the simulator."""
    text = importlib.resources.files("swarmwatch.data").joinpath(
        "geo_fixture.csv").read_text(encoding="utf-8")
    return GeoTable.load(io.StringIO(text))
