import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmwatch.geo import (EUROPE_COUNTRIES, GeoTable, OverlapError,
                            ParseError, RegionClass, classify_region,
                            fixture_table)
from swarmwatch.util import int_to_ip, ip_to_int, is_bogon

HEADER = "range_start,range_end,country,state,city,isp,longitude,latitude\n"


def load_csv(body: str) -> GeoTable:
    return GeoTable.load(io.StringIO(HEADER + body))


def test_load_two_disjoint_ranges():
    table = load_csv("1.0.0.0,1.0.0.255,DE,,Berlin,ISP,13.4,52.5\n"
                     "2.0.0.0,2.0.0.255,FR,,Paris,ISP,2.3,48.9\n")
    assert len(table) == 2


def test_load_accepts_integer_bounds():
    table = load_csv("16777216,16777471,DE,,Berlin,ISP,13.4,52.5\n")
    assert table.records[0].start_ip == "1.0.0.0"
    assert table.records[0].end_ip == "1.0.0.255"


def test_overlap_rejected_with_line_numbers():
    with pytest.raises(OverlapError) as err:
        load_csv("1.0.0.0,1.0.1.0,DE,,B,I,0,0\n"
                 "1.0.0.128,1.0.2.0,FR,,P,I,0,0\n")
    assert err.value.line_a == 2
    assert err.value.line_b == 3


def test_duplicate_range_rejected():
    with pytest.raises(OverlapError):
        load_csv("1.0.0.0,1.0.0.255,DE,,B,I,0,0\n"
                 "1.0.0.0,1.0.0.255,DE,,B,I,0,0\n")


@pytest.mark.parametrize("row", [
    "9.0.0.0,8.0.0.0,DE,,B,I,0,0",        # start > end
    "x,1.0.0.1,DE,,B,I,0,0",              # bad bound
    "1.0.0.0,1.0.0.1,GER,,B,I,0,0",       # bad country
    "1.0.0.0,1.0.0.1,DE,,B,I,200,0",      # bad longitude
    "1.0.0.0,1.0.0.1,DE,,B,I,0,91",       # bad latitude
    "1.0.0.0,1.0.0.1,DE,,B,I,0",          # short row
])
def test_bad_rows_rejected(row):
    with pytest.raises(ParseError):
        load_csv(row + "\n")


def test_header_must_match():
    with pytest.raises(ParseError):
        GeoTable.load(io.StringIO("start,end\n1,2\n"))


def test_state_kept_only_for_us_ca():
    table = load_csv("1.0.0.0,1.0.0.1,US,CA,LA,I,0,0\n"
                     "2.0.0.0,2.0.0.1,CA,ON,Toronto,I,0,0\n"
                     "3.0.0.0,3.0.0.1,DE,BY,Munich,I,0,0\n")
    assert table.records[0].state == "CA"
    assert table.records[1].state == "ON"
    assert table.records[2].state == ""


def test_lookup_hit_gap_and_bogon():
    table = load_csv("1.0.0.0,1.0.0.255,DE,,Berlin,ISP,13.4,52.5\n"
                     "2.0.0.0,2.0.0.255,FR,,Paris,ISP,2.3,48.9\n")
    assert table.lookup("1.0.0.7").city == "Berlin"
    assert table.lookup("1.0.1.0") is None       # gap between ranges
    assert table.lookup("127.0.0.1") is None     # bogon short-circuit
    assert table.lookup("10.1.2.3") is None


def test_lookup_10k_rows_matches_linear_scan():
    rng = np.random.default_rng(42)
    starts = np.sort(rng.choice(np.arange(2**25, 2**31, 512), size=10_000,
                                replace=False)).astype(np.uint32)
    rows = "".join(
        f"{int(s)},{int(s) + 255},DE,,City{i},ISP,0,0\n"
        for i, s in enumerate(starts))
    table = load_csv(rows)
    assert len(table) == 10_000

    queries = rng.integers(2**25, 2**31, size=1000).astype(np.uint32)

    def linear_scan(q):
        for rec in table.records:
            if rec.range_start <= q <= rec.range_end:
                return rec
        return None

    idx = table.lookup_many(queries)
    for q, i in zip(queries, idx):
        expect = linear_scan(int(q))
        if i < 0:
            assert expect is None
        else:
            assert table.records[i] is expect
        got = table.lookup(int(q))
        if is_bogon(int(q)):
            assert got is None
        else:
            assert got is expect


@given(st.lists(st.integers(min_value=2**25, max_value=2**26), min_size=1,
                max_size=24, unique=True),
       st.lists(st.integers(min_value=2**25 - 64, max_value=2**26 + 640),
                min_size=1, max_size=32))
@settings(max_examples=60, deadline=None)
def test_lookup_equals_linear_scan_property(starts, queries):
    starts = sorted(starts)
    rows = []
    prev_end = None
    for i, s in enumerate(starts):
        if prev_end is not None and s <= prev_end:
            continue
        end = s + 9
        rows.append(f"{s},{end},DE,,C{i},I,0,0\n")
        prev_end = end
    table = load_csv("".join(rows))
    for q in queries:
        expect = None
        for rec in table.records:
            if rec.range_start <= q <= rec.range_end:
                expect = rec
                break
        assert table.lookup(q) is expect


@pytest.mark.parametrize("country,region", [
    ("DE", RegionClass.EUROPE),
    ("GB", RegionClass.EUROPE),
    ("GR", RegionClass.EUROPE),
    ("US", RegionClass.NORTH_AMERICA),
    ("CA", RegionClass.NORTH_AMERICA),
    ("AU", RegionClass.AUSTRALIA),
    ("BR", RegionClass.OTHER),
    ("JP", RegionClass.OTHER),
    ("MX", RegionClass.OTHER),   # NA is pinned to US/CA
    ("", RegionClass.UNKNOWN),
])
def test_classify_region(country, region):
    assert classify_region(country) is region


def test_classify_region_total_and_single_valued():
    import itertools
    import string
    for a, b in itertools.islice(
            itertools.product(string.ascii_uppercase, repeat=2), 0, None, 7):
        assert classify_region(a + b) in RegionClass


def test_europe_list_is_self_consistent():
    assert "US" not in EUROPE_COUNTRIES
    assert "AU" not in EUROPE_COUNTRIES
    assert {"DE", "FR", "GB", "GR", "RU", "UA", "CH", "NO"} <= EUROPE_COUNTRIES


def test_fixture_table_covers_top_cities():
    table = fixture_table()
    assert len(table) == 200
    cities = {(r.city, r.country) for r in table.records}
    for city, country in [("Athens", "GR"), ("London", "GB"),
                          ("Perth", "AU"), ("Brisbane", "AU"),
                          ("Mumbai", "IN"), ("Toronto", "CA"),
                          ("Sydney", "AU"), ("Islamabad", "PK"),
                          ("Melbourne", "AU"), ("Delhi", "IN")]:
        assert (city, country) in cities


def test_ip_helpers_roundtrip():
    for value in (0, 1, 2**32 - 1, 0x7F000001):
        assert ip_to_int(int_to_ip(value)) == value
    with pytest.raises(ValueError):
        ip_to_int("1.2.3")
    with pytest.raises(ValueError):
        ip_to_int("1.2.3.999")


@pytest.mark.parametrize("ip,expected", [
    ("0.1.2.3", True), ("10.0.0.1", True), ("127.0.0.1", True),
    ("172.16.0.1", True), ("172.31.255.255", True), ("172.32.0.0", False),
    ("192.168.1.1", True), ("224.0.0.1", True), ("239.255.255.255", True),
    ("8.8.8.8", False), ("20.0.0.1", False), ("193.0.0.1", False),
])
def test_is_bogon(ip, expected):
    assert is_bogon(ip) is expected
