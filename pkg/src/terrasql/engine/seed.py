"""Toy spatial dataset for the embedded engine.

Nine tables with hand-placed geometries: states, counties, points of
interest, roads, weather stations with observations, protected areas, time
zones and an assessment-score table with a deliberately awkward name. The
literals below are the single source of truth; tests compute expected
answers from them directly.
"""

from __future__ import annotations

import datetime

from .embedded import EmbeddedEngine


def _rect(xmin: float, ymin: float, xmax: float, ymax: float, srid: int = 4326) -> str:
    ring = (f"{xmin} {ymin}, {xmax} {ymin}, {xmax} {ymax}, "
            f"{xmin} {ymax}, {xmin} {ymin}")
    return f"SRID={srid};POLYGON(({ring}))"


def _point(x: float, y: float, srid: int = 4326) -> str:
    return f"SRID={srid};POINT({x} {y})"


def _line(coords: list[tuple[float, float]], srid: int = 4326) -> str:
    body = ", ".join(f"{x} {y}" for x, y in coords)
    return f"SRID={srid};LINESTRING({body})"


# (id, name, fips, population, (xmin, ymin, xmax, ymax))
STATES = [
    (1, "Pennsylvania", "42", 13002700, (-80.52, 39.72, -74.69, 42.27)),
    (2, "North Carolina", "37", 10439388, (-84.32, 33.84, -75.46, 36.59)),
    (3, "Florida", "12", 21538187, (-87.63, 24.52, -80.03, 31.00)),
]

# (id, name, state, (xmin, ymin, xmax, ymax)); state holds the owning FIPS code
COUNTIES = [
    (1, "Centre", "42", (-78.255, 40.6934, -77.465, 40.8934)),
    (2, "Allegheny", "42", (-80.36, 40.19, -79.69, 40.67)),
    (3, "Philadelphia", "42", (-75.28, 39.87, -75.047, 40.0352)),
    (4, "Henderson", "37", (-82.65, 35.15, -82.15, 35.55)),
    (5, "Miami-Dade", "12", (-80.87, 25.14, -80.12, 25.98)),
]

# (id, name, fclass, state_fk, lon, lat)
POIS = [
    (1, "Nittany Lion Shrine", "monument", 1, -77.8677, 40.7982),
    (2, "Beaver Stadium", "stadium", 1, -77.8563, 40.8122),
    (3, None, "bench", 1, -77.859, 40.794),
    (4, "Liberty Bell", "monument", 1, -75.1503, 39.9496),
    (5, "Philadelphia Museum of Art", "museum", 1, -75.20, 39.97),
    (6, "Point State Park", "park", 1, -80.0089, 40.4417),
    (7, "Jump Off Rock", "viewpoint", 2, -82.5014, 35.3131),
    (8, "Everglades Visitor Center", "information", 3, -80.583, 25.395),
    (9, "Rothrock Trailhead", "trailhead", 1, -77.75, 40.72),
]

# (id, name, highway, [(lon, lat), ...])
ROADS = [
    (1, "College Avenue", "secondary", [(-77.875, 40.7925), (-77.845, 40.796)]),
    (2, "Atherton Street", "primary", [(-77.88, 40.775), (-77.855, 40.805)]),
    (3, None, "service", [(-77.861, 40.795), (-77.8605, 40.7965)]),
    (4, "Blue Ridge Parkway", "scenic",
     [(-82.55, 35.45), (-82.40, 35.50), (-82.30, 35.49)]),
]

# (id, station_id, name, lon, lat, elev)
GHCN_STATIONS = [
    (1, "USC00368449", "STATE COLLEGE", -77.8597, 40.7939, 357.8),
    (2, "US1PACT0008", "BOALSBURG 2.1 WNW", -77.822, 40.7557, 396.2),
    (3, "US1PACT0012", "PORT MATILDA 3.0 SE", -78.02, 40.757, None),
    (4, "US1PACT0002", "PHILIPSBURG", -78.22, 40.915, 488.0),
    (5, "USW00014777", "WILLIAMSPORT RGNL AP", -76.92, 41.243, 160.0),
    (6, "USC00366233", "NEVILLE ISLAND", -80.10, 40.50, 224.0),
    (7, "US1NCHR0026", "HENDERSONVILLE 1.6 ESE", -82.4345, 35.2994, 657.1),
    (8, "US1NCBC0005", "ASHEVILLE 1.3 S", -82.55, 35.56, 650.1),
    (9, "USW00012839", "MIAMI INTL AP", -80.30, 25.79, 8.8),
    (10, "USC00084570", "EVERGLADES CITY", -81.38, 25.85, None),
]

# Observation ids whose precipitation value is missing.
OBS_NULL_PRECIP_IDS = frozenset({7, 19, 33, 47, 58, 71, 88})
_QFLAG_CYCLE = [None, "G", "7", "T"]


def ghcn_obs_rows() -> list[tuple[int, int, str, str | None, str | None, int]]:
    """100 observations spanning 2015-01-01 through 2020-12-31."""
    rows = []
    start = datetime.date(2015, 1, 1)
    running = 0
    for i in range(100):
        obs_id = i + 1
        station_fk = (i % 10) + 1
        obs_date = (start + datetime.timedelta(days=round(i * 2191 / 99))).isoformat()
        if obs_id in OBS_NULL_PRECIP_IDS:
            precip = None
        else:
            running += 1
            precip = str(running)
        qflag = _QFLAG_CYCLE[i % 4]
        tmax = ((i * 37) % 400) - 100
        rows.append((obs_id, station_fk, obs_date, precip, qflag, tmax))
    return rows


# (id, name, designation, (xmin, ymin, xmax, ymax))
PROTECTED_AREAS = [
    (1, "Everglades National Park", "national_park", (-81.2, 25.0, -80.4, 25.6)),
    (2, "Biscayne National Park", "national_park", (-80.34, 25.32, -80.12, 25.65)),
    (3, "Big Cypress National Preserve", "national_preserve",
     (-81.55, 25.62, -80.85, 26.06)),
    (4, "Rothrock State Forest", "state_forest", (-77.90, 40.62, -77.55, 40.78)),
]

# (id, tz_name, utc_offset, places, (xmin, ymin, xmax, ymax))
TIME_ZONES = [
    (1, "Pacific/Auckland", 12.0, "New Zealand", (166.0, -47.5, 178.6, -34.0)),
    (2, "America/New_York", -5.0, "Eastern United States", (-80.5, 38.0, -74.0, 45.0)),
    (3, "Europe/London", 0.0, "United Kingdom", (-8.2, 49.9, 1.8, 60.9)),
]

# (id, state, year, average_scale_score)
MATH_SCORES = [
    (1, "Pennsylvania", 2013, 290),
    (2, "North Carolina", 2013, 286),
    (3, "Florida", 2013, 281),
    (4, "Pennsylvania", 2015, 284),
    (5, "North Carolina", 2015, 282),
    (6, "Florida", 2015, 275),
    (7, "Pennsylvania", 2017, 293),
    (8, "North Carolina", 2017, 282),
    (9, "Florida", 2017, 274),
    (10, "Pennsylvania", 2019, 290),
    (11, "North Carolina", 2019, 284),
    (12, "Florida", 2019, 279),
]

_DDL = """
CREATE TABLE states (
    id INTEGER PRIMARY KEY,
    name TEXT UNIQUE NOT NULL,
    fips TEXT UNIQUE NOT NULL,
    population INTEGER,
    geom "GEOMETRY(POLYGON, 4326)"
);
CREATE TABLE counties (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    state TEXT REFERENCES states(fips),
    geom "GEOMETRY(POLYGON, 4326)"
);
CREATE TABLE poi (
    id INTEGER PRIMARY KEY,
    name TEXT,
    fclass TEXT,
    state_fk INTEGER REFERENCES states(id),
    geom "GEOMETRY(POINT, 4326)"
);
CREATE TABLE roads (
    id INTEGER PRIMARY KEY,
    name TEXT,
    highway TEXT,
    geom "GEOMETRY(LINESTRING, 4326)"
);
CREATE TABLE ghcn (
    id INTEGER PRIMARY KEY,
    station_id TEXT UNIQUE NOT NULL,
    name TEXT,
    lon REAL,
    lat REAL,
    elev REAL,
    geom "GEOMETRY(POINT, 4326)"
);
CREATE TABLE ghcn_obs (
    id INTEGER PRIMARY KEY,
    station_fk INTEGER REFERENCES ghcn(id),
    obs_date TEXT,
    precip_text TEXT,
    qflag TEXT,
    tmax INTEGER
);
CREATE INDEX ghcn_obs_station_idx ON ghcn_obs(station_fk);
CREATE INDEX poi_state_idx ON poi(state_fk);
CREATE TABLE ne_protected_areas (
    id INTEGER PRIMARY KEY,
    unit_name TEXT NOT NULL,
    designation TEXT,
    geom "GEOMETRY(POLYGON, 4326)"
);
CREATE TABLE ne_time_zones (
    id INTEGER PRIMARY KEY,
    tz_name TEXT NOT NULL,
    utc_offset REAL,
    places TEXT,
    geom "GEOMETRY(POLYGON, 4326)"
);
CREATE TABLE ndecoreexcel_math_grade8 (
    id INTEGER PRIMARY KEY,
    state TEXT NOT NULL,
    year INTEGER NOT NULL,
    average_scale_score INTEGER
);
"""


def seed_toy_database(engine: EmbeddedEngine) -> None:
    engine.executescript_raw(_DDL)
    conn = engine._conn
    conn.executemany(
        "INSERT INTO states VALUES (?, ?, ?, ?, ?)",
        [(i, n, f, p, _rect(*r)) for i, n, f, p, r in STATES])
    conn.executemany(
        "INSERT INTO counties VALUES (?, ?, ?, ?)",
        [(i, n, f, _rect(*r)) for i, n, f, r in COUNTIES])
    conn.executemany(
        "INSERT INTO poi VALUES (?, ?, ?, ?, ?)",
        [(i, n, c, s, _point(x, y)) for i, n, c, s, x, y in POIS])
    conn.executemany(
        "INSERT INTO roads VALUES (?, ?, ?, ?)",
        [(i, n, h, _line(cs)) for i, n, h, cs in ROADS])
    conn.executemany(
        "INSERT INTO ghcn VALUES (?, ?, ?, ?, ?, ?, ?)",
        [(i, sid, n, x, y, e, _point(x, y)) for i, sid, n, x, y, e in GHCN_STATIONS])
    conn.executemany(
        "INSERT INTO ghcn_obs VALUES (?, ?, ?, ?, ?, ?)", ghcn_obs_rows())
    conn.executemany(
        "INSERT INTO ne_protected_areas VALUES (?, ?, ?, ?)",
        [(i, n, d, _rect(*r)) for i, n, d, r in PROTECTED_AREAS])
    conn.executemany(
        "INSERT INTO ne_time_zones VALUES (?, ?, ?, ?, ?)",
        [(i, t, o, p, _rect(*r)) for i, t, o, p, r in TIME_ZONES])
    conn.executemany(
        "INSERT INTO ndecoreexcel_math_grade8 VALUES (?, ?, ?, ?)", MATH_SCORES)
    conn.commit()


def create_toy_engine(path: str = ":memory:") -> EmbeddedEngine:
    """A seeded, read-only engine ready for query traffic."""
    engine = EmbeddedEngine(path)
    seed_toy_database(engine)
    engine.freeze()
    return engine
