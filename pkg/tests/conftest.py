import io

import pytest

from swarmwatch.geo import GeoTable, fixture_table
from swarmwatch.store import PeerStore, TorrentEntry, TorrentRegistry

STUB_GEO_CSV = """range_start,range_end,country,state,city,isp,longitude,latitude
20.0.0.0,20.0.0.255,DE,,Berlin,Deutsche Telekom,13.41,52.52
20.0.2.0,20.0.2.255,US,CA,Los Angeles,Comcast,-118.24,34.05
20.0.4.0,20.0.4.255,JP,,Tokyo,NTT Communications,139.69,35.69
20.0.6.0,20.0.6.255,GR,,Athens,OTE,23.73,37.98
20.0.8.0,20.0.8.255,AU,,Perth,iiNet,115.86,-31.95
"""


@pytest.fixture(scope="session")
def fixture_geo() -> GeoTable:
    return fixture_table()


@pytest.fixture()
def stub_geo() -> GeoTable:
    return GeoTable.load(io.StringIO(STUB_GEO_CSV))


def make_registry(n: int = 2) -> TorrentRegistry:
    entries = []
    for i in range(1, n + 1):
        entries.append(TorrentEntry(
            torrent_id=i,
            infohash=bytes([i]) * 20,
            name=f"torrent-{i}",
            show=f"Show {(i + 1) // 2}",
            season=1,
            episode=(i + 1) // 2,
        ))
    return TorrentRegistry(entries)


@pytest.fixture()
def registry2() -> TorrentRegistry:
    return make_registry(2)


@pytest.fixture()
def registry4() -> TorrentRegistry:
    return make_registry(4)


@pytest.fixture()
def mem_store(registry2) -> PeerStore:
    return PeerStore(registry2)
