"""GHCN-Daily fixed-width parsing and complete-record dataset assembly.

The `.dly` format packs one station-month per 269-character line: station
id (11 chars), year (4), month (2), element (4), then 31 day groups of a
5-char value plus three flag characters. Values are integers in the
element's native unit (tenths of degrees Celsius for TMAX) with -9999 as
the missing sentinel. Station coordinates come from the companion
`ghcnd-stations.txt` fixed-width table.

Ingestion keeps stations whose requested element has a value for every
calendar day of the configured year range (leap days included), converts
tenths to degrees, and min-max normalizes longitude/latitude into the
unit square, recording the constants so coordinates round-trip.
"""

import calendar
import json
import pathlib
import urllib.request
from dataclasses import dataclass

import numpy as np

DLY_LINE_LENGTH = 269
DAY_GROUP_START = 21
DAY_GROUP_WIDTH = 8
MISSING_SENTINEL = -9999

DEFAULT_VALUE_BOUNDS = (-800, 800)

ARCHIVE_URL = "https://www.ncei.noaa.gov/pub/data/ghcn/daily/all/"


class MalformedLineError(ValueError):
    """A line violates the fixed-width layout; the message carries where."""


class TruncatedRecordError(MalformedLineError):
    """A line ends before the 31 day groups do."""


class EmptySelectionError(ValueError):
    """No station survived the filters; the message says which stage emptied."""


class InconsistentLengthError(ValueError):
    """Assembled series disagree in length."""


@dataclass(frozen=True)
class MonthRecord:
    """One station-month of one element; values align with real calendar
    days only (no day-30 slot for February)."""

    station_id: str
    year: int
    month: int
    element: str
    values: tuple


@dataclass(frozen=True)
class StationInfo:
    """Identity and position of one station from the metadata table."""

    station_id: str
    latitude: float
    longitude: float
    state: str


@dataclass(frozen=True)
class StationRecord:
    """A station with a gap-free daily series over the configured range."""

    station_id: str
    latitude: float
    longitude: float
    state: str
    element: str
    start_year: int
    end_year: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class IngestConfig:
    """What to extract: element, year range, state filter, flag policy."""

    element: str = "TMAX"
    start_year: int = 1980
    end_year: int = 1999
    state_filter: tuple = None
    drop_flagged: bool = True
    value_bounds: tuple = DEFAULT_VALUE_BOUNDS

    def __post_init__(self):
        if self.start_year > self.end_year:
            raise ValueError("start_year must not exceed end_year")
        if self.state_filter is not None:
            object.__setattr__(self, "state_filter",
                               tuple(s.upper() for s in self.state_filter))


def days_in_range(start_year, end_year):
    """Calendar days in [Jan 1 start_year, Dec 31 end_year]."""
    return sum(calendar.monthrange(y, m)[1]
               for y in range(start_year, end_year + 1)
               for m in range(1, 13))


def _source_lines(source):
    """Yield (line_number, text). Paths and str are opened as files;
    bytes and file objects are treated as content."""
    if isinstance(source, (str, pathlib.Path)):
        with open(source, "rb") as handle:
            raw = handle.read()
    elif hasattr(source, "read"):
        raw = source.read()
    else:
        raw = source
    if isinstance(raw, bytes):
        raw = raw.decode("ascii")
    for number, line in enumerate(raw.splitlines(), start=1):
        yield number, line


def _parse_day_value(line, day, lineno, bounds, drop_flagged):
    offset = DAY_GROUP_START + DAY_GROUP_WIDTH * day
    raw = line[offset:offset + 5]
    try:
        value = int(raw)
    except ValueError:
        raise MalformedLineError(
            f"line {lineno}, columns {offset + 1}-{offset + 5}: "
            f"unreadable value field {raw!r}") from None
    if value == MISSING_SENTINEL:
        return None
    if drop_flagged and line[offset + 6] != " ":
        return None
    if bounds is not None and not (bounds[0] <= value <= bounds[1]):
        raise MalformedLineError(
            f"line {lineno}, columns {offset + 1}-{offset + 5}: "
            f"value {value} outside plausible bounds {bounds}")
    return value


def parse_dly(source, element="TMAX", value_bounds=DEFAULT_VALUE_BOUNDS,
              drop_flagged=True):
    """Parse a `.dly` stream into month records of the requested element.

    Every line is either consumed or raises a positioned error; lines for
    other elements are consumed without value parsing. A non-blank
    quality flag makes that day missing unless ``drop_flagged`` is off.
    """
    records = []
    for lineno, line in _source_lines(source):
        line = line.rstrip("\r\n")
        if not line:
            continue
        if len(line) < DLY_LINE_LENGTH:
            raise TruncatedRecordError(
                f"line {lineno}: {len(line)} characters, expected {DLY_LINE_LENGTH}")
        if len(line) > DLY_LINE_LENGTH:
            raise MalformedLineError(
                f"line {lineno}: {len(line)} characters, expected {DLY_LINE_LENGTH}")
        if line[17:21] != element:
            continue
        try:
            year = int(line[11:15])
            month = int(line[15:17])
        except ValueError:
            raise MalformedLineError(
                f"line {lineno}: unreadable year/month {line[11:17]!r}") from None
        if not 1 <= month <= 12:
            raise MalformedLineError(f"line {lineno}: month {month} out of range")
        n_days = calendar.monthrange(year, month)[1]
        values = tuple(
            _parse_day_value(line, day, lineno, value_bounds, drop_flagged)
            for day in range(n_days))
        records.append(MonthRecord(station_id=line[0:11], year=year,
                                   month=month, element=element, values=values))
    return records


def parse_stations(source):
    """Parse `ghcnd-stations.txt` into {station_id: StationInfo}."""
    stations = {}
    for lineno, line in _source_lines(source):
        line = line.rstrip("\r\n")
        if not line:
            continue
        if len(line) < 40:
            raise TruncatedRecordError(
                f"stations line {lineno}: {len(line)} characters, expected >= 40")
        try:
            latitude = float(line[12:20])
            longitude = float(line[21:30])
        except ValueError:
            raise MalformedLineError(
                f"stations line {lineno}: unreadable coordinates "
                f"{line[12:30]!r}") from None
        station_id = line[0:11]
        stations[station_id] = StationInfo(
            station_id=station_id, latitude=latitude, longitude=longitude,
            state=line[38:40].strip())
    return stations


def _iter_months(config):
    for year in range(config.start_year, config.end_year + 1):
        for month in range(1, 13):
            yield year, month


def select_complete_stations(records, stations_meta, config):
    """Stations with a value for every day of the range, metadata joined.

    The state filter (when given) applies before completeness. Raises
    EmptySelectionError naming the stage that emptied the selection.
    """
    by_station = {}
    for rec in records:
        if rec.element != config.element:
            continue
        by_station.setdefault(rec.station_id, {})[(rec.year, rec.month)] = rec.values

    candidates = sorted(set(by_station) & set(stations_meta))
    if not candidates:
        raise EmptySelectionError(
            "no station appears in both the data files and the metadata table")

    if config.state_filter is not None:
        known_states = {info.state for info in stations_meta.values()}
        unknown = [s for s in config.state_filter if s not in known_states]
        if unknown:
            raise EmptySelectionError(
                f"state code(s) {', '.join(unknown)} match no station in the metadata")
        candidates = [sid for sid in candidates
                      if stations_meta[sid].state in config.state_filter]
        if not candidates:
            raise EmptySelectionError(
                "state filter removed every station with data")

    months = list(_iter_months(config))
    selected = []
    for sid in candidates:
        blocks = by_station[sid]
        series = []
        complete = True
        for key in months:
            values = blocks.get(key)
            if values is None or any(v is None for v in values):
                complete = False
                break
            series.extend(values)
        if complete:
            info = stations_meta[sid]
            selected.append(StationRecord(
                station_id=sid, latitude=info.latitude,
                longitude=info.longitude, state=info.state,
                element=config.element, start_year=config.start_year,
                end_year=config.end_year, values=np.asarray(series, dtype=np.float64)))

    if not selected:
        raise EmptySelectionError(
            f"no station has a complete {config.element} record for "
            f"{config.start_year}-{config.end_year} "
            f"({len(candidates)} candidate(s) checked)")
    return selected


def _axis_normalization(values):
    lo = float(np.min(values))
    span = float(np.max(values) - lo)
    return {"offset": lo, "scale": span if span > 0.0 else 1.0}


def build_dataset(stations, config):
    """Assemble the fit-ready dataset from complete stations.

    Returns (dataset, normalization): observations in degrees Celsius,
    longitude/latitude min-max mapped to the unit square (longitude is
    the first coordinate), and the constants that undo the mapping.
    """
    from .likelihood import SpatioTemporalDataSet

    if not stations:
        raise EmptySelectionError("no stations to assemble")
    lengths = {st.values.shape[0] for st in stations}
    if len(lengths) != 1:
        raise InconsistentLengthError(
            f"stations disagree on series length: {sorted(lengths)}")
    expected = days_in_range(config.start_year, config.end_year)
    if lengths != {expected}:
        raise InconsistentLengthError(
            f"series length {lengths.pop()} does not match the "
            f"{expected}-day calendar range")

    stations = sorted(stations, key=lambda st: st.station_id)
    lons = np.array([st.longitude for st in stations])
    lats = np.array([st.latitude for st in stations])
    norm = {"x1": _axis_normalization(lons), "x2": _axis_normalization(lats)}
    locations = np.column_stack([
        (lons - norm["x1"]["offset"]) / norm["x1"]["scale"],
        (lats - norm["x2"]["offset"]) / norm["x2"]["scale"],
    ])
    observations = np.vstack([st.values for st in stations]) / 10.0
    dataset = SpatioTemporalDataSet(
        locations=locations, observations=observations,
        site_ids=tuple(st.station_id for st in stations))
    return dataset, norm


def denormalize_coords(coords, normalization):
    """Map unit-square coordinates back to (longitude, latitude)."""
    coords = np.asarray(coords, dtype=np.float64)
    return np.column_stack([
        coords[:, 0] * normalization["x1"]["scale"] + normalization["x1"]["offset"],
        coords[:, 1] * normalization["x2"]["scale"] + normalization["x2"]["offset"],
    ])


def write_dataset_bundle(directory, dataset, normalization=None):
    """Write locations.csv, observations.csv, and normalization.json."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = dataset.site_ids or tuple(
        f"site{i:04d}" for i in range(dataset.n_sites))
    with open(directory / "locations.csv", "w") as handle:
        handle.write("site_id,x1,x2\n")
        for sid, (x1, x2) in zip(ids, dataset.locations):
            handle.write(f"{sid},{x1:.17g},{x2:.17g}\n")
    np.savetxt(directory / "observations.csv", dataset.observations,
               delimiter=",", fmt="%.17g")
    if normalization is not None:
        with open(directory / "normalization.json", "w") as handle:
            json.dump(normalization, handle, sort_keys=True, indent=2)
            handle.write("\n")


def read_dataset_bundle(directory):
    """Read a bundle back into (dataset, normalization-or-None)."""
    from .likelihood import SpatioTemporalDataSet

    directory = pathlib.Path(directory)
    ids = []
    coords = []
    with open(directory / "locations.csv") as handle:
        header = handle.readline()
        if header.strip() != "site_id,x1,x2":
            raise MalformedLineError(
                f"unexpected locations.csv header: {header.strip()!r}")
        for line in handle:
            if not line.strip():
                continue
            sid, x1, x2 = line.strip().split(",")
            ids.append(sid)
            coords.append((float(x1), float(x2)))
    observations = np.loadtxt(directory / "observations.csv",
                              delimiter=",", ndmin=2)
    normalization = None
    norm_path = directory / "normalization.json"
    if norm_path.exists():
        with open(norm_path) as handle:
            normalization = json.load(handle)
    dataset = SpatioTemporalDataSet(locations=np.asarray(coords),
                                    observations=observations,
                                    site_ids=tuple(ids))
    return dataset, normalization


def fetch_station_files(station_ids, dest_dir, base_url=ARCHIVE_URL):
    """Download per-station `.dly` files, skipping complete local copies.

    Network access is optional plumbing; nothing in the fitting pipeline
    calls this. Returns the list of local paths.
    """
    dest = pathlib.Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    paths = []
    for sid in station_ids:
        target = dest / f"{sid}.dly"
        if not (target.exists() and target.stat().st_size > 0):
            with urllib.request.urlopen(f"{base_url}{sid}.dly") as response:
                data = response.read()
            tmp = target.with_suffix(".dly.part")
            tmp.write_bytes(data)
            tmp.replace(target)
        paths.append(target)
    return paths
