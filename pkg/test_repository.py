"""
test_repository.py — loading the location repository CSV

Run from the project root:
  python test_repository.py      (or: pytest test_repository.py)
"""

import io
import sys
import tempfile
from pathlib import Path

import pytest

from modules.errors import DuplicateLocationError, InvalidParameterError, MalformedRowError
from modules.geo_mapper import GeoPoint
from modules.repository import derive_domain_locations, load_locations, read_locations
from utils.script_runner import run_module_tests

HEADER = "location_id,name,lat,lon,url\n"
ROWS = (
    "L1,Eyre Square,53.2744,-9.0494,http://eyresquare.example/\n"
    "L2,Cathedral,53.2755,-9.0573,http://cathedral.example/ http://cathedral.example/visit\n"
    "L3,Online Shop,,,http://shop.example/\n"
)


def test_three_valid_rows():
    registry, report = read_locations(io.StringIO(HEADER + ROWS))
    assert registry.ids() == ["L1", "L2", "L3"]
    assert (report.loaded, report.rejected, report.virtual_only) == (3, 0, 1)
    assert registry.point("L1") == GeoPoint(53.2744, -9.0494)
    assert registry.point("L3") is None
    assert registry.location_for("http://cathedral.example/visit") == "L2"
    assert registry.get("L2").name == "Cathedral"


def test_duplicate_id_keeps_first_unless_strict():
    text = HEADER + ROWS + "L1,Other,53.0,-9.0,http://other.example/\n"
    registry, report = read_locations(io.StringIO(text))
    assert report.rejected == 1
    assert registry.get("L1").name == "Eyre Square"
    assert report.reasons[0][0] == 5
    with pytest.raises(DuplicateLocationError):
        read_locations(io.StringIO(text), strict=True)


def test_shared_coordinate_rejected():
    text = HEADER + ROWS + "L4,Copy,,,http://EYRESQUARE.example/\n"
    registry, report = read_locations(io.StringIO(text))
    assert "L4" not in registry
    assert report.rejected == 1


def test_malformed_rows():
    bad = ("L5,Half,53.0,,http://half.example/\n"
           "L6,NoUrl,53.0,-9.0,\n"
           "L7,Far,95.0,-9.0,http://far.example/\n"
           ",Anon,,,http://anon.example/\n")
    registry, report = read_locations(io.StringIO(HEADER + ROWS + bad))
    assert report.loaded == 3
    assert report.rejected == 4
    with pytest.raises(MalformedRowError):
        read_locations(io.StringIO(HEADER + bad), strict=True)


def test_missing_column():
    with pytest.raises(MalformedRowError):
        read_locations(io.StringIO("location_id,name,url\nL1,A,http://a.example/\n"))


def test_load_from_file():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp, "locations.csv")
        path.write_text(HEADER + ROWS, encoding="utf-8")
        registry, report = load_locations(path)
        assert len(registry) == 3
        with pytest.raises(InvalidParameterError):
            load_locations(Path(tmp, "absent.csv"))


def test_domain_derived_locations():
    urls = ["http://www.hotel-x.example/a", "https://book.hotel-x.example/", "http://hotel-y.example/"]
    locations = derive_domain_locations(urls)
    assert [loc.id for loc in locations] == ["hotel-x.example", "hotel-y.example"]
    assert len(locations[0].coordinates) == 2


def test_domain_derived_locations_under_multi_label_suffixes():
    urls = [
        "http://www.hotel-x.co.uk/", "http://www.hotel-y.co.uk/",
        "https://galway.gov.ie/parking", "https://www.galway.gov.ie/",
    ]
    locations = derive_domain_locations(urls)
    assert [loc.id for loc in locations] == ["galway.gov.ie", "hotel-x.co.uk", "hotel-y.co.uk"]
    assert len(locations[0].coordinates) == 2


if __name__ == "__main__":
    sys.exit(run_module_tests(globals(), "repository.py"))
