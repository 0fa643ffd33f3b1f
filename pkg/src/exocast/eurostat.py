"""Statistical-office catalog and dataset client with an offline-first cache.

The funnel mirrors a three-stage narrowing of the full dataset catalog:
monthly frequency, relevant indicator parameters, and coverage since a cutoff
month; one representative series per surviving dataset is extracted and
cached. All parsing sits behind two functions (`_parse_catalog_payload`,
`_parse_dataset_payload`) so a wire-format migration touches only this
module. Cached runs make zero network calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .errors import NotCachedError, PayloadError
from .series import Month, MonthlySeries, read_series_csv, write_series_csv

__all__ = [
    "DatasetDescriptor",
    "CatalogSnapshot",
    "SeriesKey",
    "RawDataset",
    "FunnelReport",
    "fetch_catalog",
    "filter_catalog",
    "fetch_dataset",
    "pick_representative",
    "store_catalog",
    "load_catalog",
    "store_series",
    "load_series",
    "list_cached_series",
    "write_manifest",
    "read_manifest",
    "run_funnel",
    "DEFAULT_KEYWORDS",
]

log = logging.getLogger(__name__)

BASE_URL_ENV = "EXOCAST_EUROSTAT_BASE"
DEFAULT_BASE_URL = "https://ec.europa.eu/eurostat/api/dissemination"
CATALOG_PATH = "/catalogue/toc.json"
DATA_PATH = "/statistics/1.0/data/{code}?format=JSON&lang=en"
REQUEST_TIMEOUT = 30.0
MIN_REQUEST_INTERVAL = 0.25

# Default indicator-parameter keywords; a replacement list can be supplied
# per run. These mirror the broad business/economy categories a demand
# forecaster cares about.
DEFAULT_KEYWORDS = (
    "business",
    "trade",
    "industry",
    "producer prices",
    "import prices",
    "retail",
    "consumer",
    "construction",
    "energy",
    "finance",
    "interest rate",
    "tourism",
    "turnover",
    "employment",
)

MANIFEST_SCHEMA = "exocast.eurostat.manifest/1"
CATALOG_SCHEMA = "exocast.eurostat.catalog/1"


@dataclass(frozen=True)
class DatasetDescriptor:
    code: str
    title: str
    frequency: str  # monthly | quarterly | annual | other
    dimension_names: tuple[str, ...]
    earliest_period: Month | None
    source_parameters: tuple[str, ...]


@dataclass(frozen=True)
class CatalogSnapshot:
    fetched_at: str
    descriptors: tuple[DatasetDescriptor, ...]

    def __len__(self) -> int:
        return len(self.descriptors)

    def codes(self) -> tuple[str, ...]:
        return tuple(d.code for d in self.descriptors)


@dataclass(frozen=True)
class SeriesKey:
    dataset_code: str
    dimension_values: tuple[tuple[str, str], ...]

    def canonical(self) -> str:
        return "|".join(f"{name}={value}" for name, value in self.dimension_values)

    def digest(self) -> str:
        return hashlib.sha1(self.canonical().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RawDataset:
    code: str
    dimension_names: tuple[str, ...]  # excluding the time axis
    periods: tuple[Month, ...]
    observations: Mapping[tuple[str, ...], Mapping[Month, float]]


@dataclass
class FunnelReport:
    endpoint: str
    initial: int = 0
    after_monthly: int = 0
    after_parameters: int = 0
    after_coverage: int = 0
    stored: list[str] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)


class _Throttle:
    """Spacing between live requests; polite batch client."""

    def __init__(self, interval: float = MIN_REQUEST_INTERVAL):
        self.interval = interval
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            delta = self._last + self.interval - now
            if delta > 0:
                time.sleep(delta)
            self._last = time.monotonic()


_throttle = _Throttle()
_inflight_locks: dict[str, threading.Lock] = {}
_inflight_guard = threading.Lock()


def _single_flight(code: str) -> threading.Lock:
    with _inflight_guard:
        return _inflight_locks.setdefault(code, threading.Lock())


def base_url() -> str:
    return os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL).rstrip("/")


def _http_get(url: str, timeout: float) -> str:
    _throttle.wait()
    log.info("GET %s", url)
    response = requests.get(url, timeout=timeout)
    response.raise_for_status()
    return response.text


def _now_utc() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _parse_period(text: str) -> Month | None:
    text = text.strip()
    if not text:
        return None
    if "-Q" in text or "Q" in text and "-" not in text:
        text = text.replace("-", "")
        year, _, quarter = text.partition("Q")
        try:
            return Month(int(year), (int(quarter) - 1) * 3 + 1)
        except ValueError:
            return None
    if "-" in text:
        try:
            return Month.parse(text)
        except ValueError:
            return None
    try:
        return Month(int(text), 1)
    except ValueError:
        return None


def _parse_frequency(text: str) -> str:
    norm = text.strip().lower()
    if norm in ("m", "monthly"):
        return "monthly"
    if norm in ("q", "quarterly"):
        return "quarterly"
    if norm in ("a", "annual", "annually", "yearly"):
        return "annual"
    return "other"


def _parse_catalog_payload(payload: str) -> tuple[DatasetDescriptor, ...]:
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise PayloadError(f"catalog payload is not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        entries = doc.get("datasets")
        if entries is None:
            raise PayloadError("catalog payload has no 'datasets' key")
    elif isinstance(doc, list):
        entries = doc
    else:
        raise PayloadError(f"unexpected catalog payload type: {type(doc).__name__}")

    descriptors: list[DatasetDescriptor] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or not entry.get("code"):
            raise PayloadError(f"catalog entry {i} has no dataset code")
        code = str(entry["code"])
        if code in seen:
            log.warning("duplicate dataset code %r in catalog; keeping first", code)
            continue
        seen.add(code)
        descriptors.append(
            DatasetDescriptor(
                code=code,
                title=str(entry.get("title", "")),
                frequency=_parse_frequency(str(entry.get("frequency", ""))),
                dimension_names=tuple(entry.get("dimensions", ())),
                earliest_period=_parse_period(str(entry.get("earliest_period", ""))),
                source_parameters=tuple(entry.get("parameters", ())),
            )
        )
    return tuple(descriptors)


def fetch_catalog(
    endpoint: str | None = None,
    offline_fixture: str | Path | None = None,
    *,
    timeout: float = REQUEST_TIMEOUT,
) -> CatalogSnapshot:
    """Fetch and parse the dataset catalog; a fixture file bypasses the network."""
    if offline_fixture is not None:
        payload = Path(offline_fixture).read_text()
        source = str(offline_fixture)
    else:
        url = endpoint or (base_url() + CATALOG_PATH)
        payload = _http_get(url, timeout)
        source = url
    descriptors = _parse_catalog_payload(payload)
    log.info("catalog from %s: %d datasets", source, len(descriptors))
    return CatalogSnapshot(fetched_at=_now_utc(), descriptors=descriptors)


def filter_catalog(
    snapshot: CatalogSnapshot,
    stage: str,
    *,
    keywords: Iterable[str] = (),
    since: Month | None = None,
) -> CatalogSnapshot:
    """Apply one funnel stage: 'monthly', 'parameters' or 'coverage'."""
    if stage == "monthly":
        kept = tuple(d for d in snapshot.descriptors if d.frequency == "monthly")
    elif stage == "parameters":
        wanted = {k.strip().lower() for k in keywords}
        if not wanted:
            raise ValueError("parameters stage needs a keyword list")
        kept = tuple(
            d
            for d in snapshot.descriptors
            if wanted & {p.strip().lower() for p in d.source_parameters}
        )
    elif stage == "coverage":
        if since is None:
            raise ValueError("coverage stage needs a cutoff month")
        kept = tuple(
            d
            for d in snapshot.descriptors
            if d.earliest_period is not None and d.earliest_period <= since
        )
    else:
        raise ValueError(f"unknown filter stage {stage!r}")
    return CatalogSnapshot(fetched_at=snapshot.fetched_at, descriptors=kept)


def _parse_dataset_payload(code: str, payload: str) -> RawDataset:
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise PayloadError(f"dataset {code}: payload is not valid JSON: {exc}") from exc
    try:
        dim_order = list(doc["id"])
        sizes = [int(v) for v in doc["size"]]
        dimensions = doc["dimension"]
        values = doc["value"]
    except (KeyError, TypeError) as exc:
        raise PayloadError(f"dataset {code}: missing JSON-stat field {exc}") from exc
    if len(dim_order) != len(sizes):
        raise PayloadError(f"dataset {code}: id/size length mismatch")
    if "time" not in dim_order:
        raise PayloadError(f"dataset {code}: no time dimension")

    def categories(name: str) -> list[str]:
        index = dimensions[name]["category"]["index"]
        if isinstance(index, dict):
            return [k for k, _ in sorted(index.items(), key=lambda kv: kv[1])]
        return list(index)

    labels = {name: categories(name) for name in dim_order}
    for name, cats in labels.items():
        if len(cats) != sizes[dim_order.index(name)]:
            raise PayloadError(f"dataset {code}: size mismatch for dimension {name!r}")

    time_axis = dim_order.index("time")
    periods: list[Month] = []
    for text in labels["time"]:
        month = _parse_period(text)
        if month is None:
            raise PayloadError(f"dataset {code}: unparseable period {text!r}")
        periods.append(month)

    non_time = [name for name in dim_order if name != "time"]
    observations: dict[tuple[str, ...], dict[Month, float]] = {}
    strides = [1] * len(sizes)
    for i in range(len(sizes) - 2, -1, -1):
        strides[i] = strides[i + 1] * sizes[i + 1]
    for flat_str, value in values.items():
        if value is None:
            continue  # explicit nulls stay missing
        flat = int(flat_str)
        coords_all = []
        for i, size in enumerate(sizes):
            coords_all.append((flat // strides[i]) % size)
        key = tuple(
            labels[name][coords_all[dim_order.index(name)]] for name in non_time
        )
        month = periods[coords_all[time_axis]]
        observations.setdefault(key, {})[month] = float(value)
    if not observations:
        raise PayloadError(f"dataset {code}: no observations")
    return RawDataset(
        code=code,
        dimension_names=tuple(non_time),
        periods=tuple(periods),
        observations=observations,
    )


def fetch_dataset(
    code: str,
    offline_fixture: str | Path | None = None,
    *,
    base: str | None = None,
    timeout: float = REQUEST_TIMEOUT,
) -> RawDataset:
    """Fetch one dataset's observations; a fixture file bypasses the network."""
    with _single_flight(code):
        if offline_fixture is not None:
            payload = Path(offline_fixture).read_text()
        else:
            url = (base or base_url()) + DATA_PATH.format(code=code)
            payload = _http_get(url, timeout)
    return _parse_dataset_payload(code, payload)


def pick_representative(dataset: RawDataset, since: Month) -> tuple[SeriesKey, MonthlySeries]:
    """One series per dataset: complete coverage from `since` wins, then
    fewest gaps, ties broken by lexicographically smallest coordinates."""
    candidates = []
    last: Month | None = None
    for months in dataset.observations.values():
        top = max(months)
        if last is None or top > last:
            last = top
    if last is None or last < since:
        raise PayloadError(f"dataset {dataset.code}: no values at or after {since}")
    span = since.months_until(last) + 1
    for coords in sorted(dataset.observations):
        months = dataset.observations[coords]
        values = [months.get(since.shift(i)) for i in range(span)]
        present = sum(v is not None for v in values)
        if present == 0:
            continue
        candidates.append((span - present, coords, values))
    if not candidates:
        raise PayloadError(f"dataset {dataset.code}: no series has values after {since}")
    missing, coords, values = min(candidates, key=lambda c: (c[0], c[1]))
    key = SeriesKey(dataset.code, tuple(zip(dataset.dimension_names, coords)))
    return key, MonthlySeries(dataset.code, since, values)


# ---------------------------------------------------------------------------
# Cache: catalog.json + <code>/<key-hash>.csv (+ sidecar key) + manifest.json

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _descriptor_to_dict(d: DatasetDescriptor) -> dict:
    return {
        "code": d.code,
        "title": d.title,
        "frequency": d.frequency,
        "dimensions": list(d.dimension_names),
        "earliest_period": None if d.earliest_period is None else str(d.earliest_period),
        "parameters": list(d.source_parameters),
    }


def store_catalog(root: str | Path, snapshot: CatalogSnapshot) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / "catalog.json"
    doc = {
        "schema": CATALOG_SCHEMA,
        "fetched_at": snapshot.fetched_at,
        "datasets": [_descriptor_to_dict(d) for d in snapshot.descriptors],
    }
    _atomic_write(path, json.dumps(doc, indent=2))
    return path


def load_catalog(root: str | Path) -> CatalogSnapshot:
    path = Path(root) / "catalog.json"
    if not path.exists():
        raise NotCachedError(f"no catalog cached under {root}")
    doc = json.loads(path.read_text())
    if doc.get("schema") != CATALOG_SCHEMA:
        raise PayloadError(f"unknown catalog schema {doc.get('schema')!r}")
    descriptors = tuple(
        DatasetDescriptor(
            code=e["code"],
            title=e["title"],
            frequency=e["frequency"],
            dimension_names=tuple(e["dimensions"]),
            earliest_period=None
            if e["earliest_period"] is None
            else Month.parse(e["earliest_period"]),
            source_parameters=tuple(e["parameters"]),
        )
        for e in doc["datasets"]
    )
    return CatalogSnapshot(fetched_at=doc["fetched_at"], descriptors=descriptors)


def store_series(root: str | Path, key: SeriesKey, series: MonthlySeries) -> Path:
    folder = Path(root) / key.dataset_code
    folder.mkdir(parents=True, exist_ok=True)
    csv_path = folder / f"{key.digest()}.csv"
    tmp = csv_path.with_suffix(".csv.tmp")
    write_series_csv(series, tmp)
    os.replace(tmp, csv_path)
    sidecar = {
        "dataset_code": key.dataset_code,
        "dimension_values": [list(p) for p in key.dimension_values],
        "series_id": series.id,
    }
    _atomic_write(folder / f"{key.digest()}.key.json", json.dumps(sidecar, indent=2))
    return csv_path


def _load_one(folder: Path, digest: str) -> tuple[SeriesKey, MonthlySeries]:
    sidecar = json.loads((folder / f"{digest}.key.json").read_text())
    key = SeriesKey(
        sidecar["dataset_code"],
        tuple((n, v) for n, v in sidecar["dimension_values"]),
    )
    series = read_series_csv(folder / f"{digest}.csv", id=sidecar["series_id"])
    return key, series


def load_series(
    root: str | Path, dataset_code: str, key: SeriesKey | None = None
) -> tuple[SeriesKey, MonthlySeries]:
    folder = Path(root) / dataset_code
    if not folder.is_dir():
        raise NotCachedError(f"no cached series for {dataset_code} under {root}")
    if key is not None:
        if not (folder / f"{key.digest()}.csv").exists():
            raise NotCachedError(f"series {key.canonical()} not cached for {dataset_code}")
        return _load_one(folder, key.digest())
    digests = sorted(p.stem for p in folder.glob("*.csv"))
    if not digests:
        raise NotCachedError(f"no cached series for {dataset_code} under {root}")
    return _load_one(folder, digests[0])


def list_cached_series(root: str | Path) -> list[tuple[SeriesKey, MonthlySeries]]:
    root = Path(root)
    out = []
    if not root.is_dir():
        return out
    for folder in sorted(p for p in root.iterdir() if p.is_dir()):
        for csv_path in sorted(folder.glob("*.csv")):
            out.append(_load_one(folder, csv_path.stem))
    return out


def write_manifest(
    root: str | Path, endpoint: str, fetched_at: str, filters: Sequence[str]
) -> Path:
    path = Path(root) / "manifest.json"
    doc = {
        "schema": MANIFEST_SCHEMA,
        "endpoint": endpoint,
        "fetched_at": fetched_at,
        "filters": list(filters),
    }
    _atomic_write(path, json.dumps(doc, indent=2))
    return path


def read_manifest(root: str | Path) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise NotCachedError(f"no manifest under {root}")
    return json.loads(path.read_text())


def run_funnel(
    cache_root: str | Path,
    since: Month,
    keywords: Iterable[str] = DEFAULT_KEYWORDS,
    *,
    endpoint: str | None = None,
    offline: bool = False,
    catalog_fixture: str | Path | None = None,
    dataset_fixture_dir: str | Path | None = None,
) -> FunnelReport:
    """Catalog -> monthly -> parameters -> coverage -> one cached series per
    dataset. Offline mode never opens a connection: it uses fixtures or the
    existing cache and fails a dataset otherwise."""
    cache_root = Path(cache_root)
    keywords = tuple(keywords)
    source = endpoint or (base_url() + CATALOG_PATH)
    if catalog_fixture is not None:
        snapshot = fetch_catalog(offline_fixture=catalog_fixture)
        source = str(catalog_fixture)
    elif offline:
        snapshot = load_catalog(cache_root)
        source = f"cache:{cache_root}"
    else:
        snapshot = fetch_catalog(endpoint)

    report = FunnelReport(endpoint=source, initial=len(snapshot))
    snapshot = filter_catalog(snapshot, "monthly")
    report.after_monthly = len(snapshot)
    snapshot = filter_catalog(snapshot, "parameters", keywords=keywords)
    report.after_parameters = len(snapshot)
    snapshot = filter_catalog(snapshot, "coverage", since=since)
    report.after_coverage = len(snapshot)

    store_catalog(cache_root, snapshot)
    fixture_dir = None if dataset_fixture_dir is None else Path(dataset_fixture_dir)
    for descriptor in snapshot.descriptors:
        code = descriptor.code
        try:
            fixture = None
            if fixture_dir is not None and (fixture_dir / f"{code}.json").exists():
                fixture = fixture_dir / f"{code}.json"
            if fixture is None and offline:
                try:
                    load_series(cache_root, code)
                    report.stored.append(code)
                    continue
                except NotCachedError:
                    raise NotCachedError(
                        f"offline mode: no fixture or cache for dataset {code}"
                    )
            dataset = fetch_dataset(code, offline_fixture=fixture)
            key, series = pick_representative(dataset, since)
            store_series(cache_root, key, series)
            report.stored.append(code)
        except Exception as exc:  # noqa: BLE001 - recorded per dataset
            report.failures[code] = f"{type(exc).__name__}: {exc}"
            log.warning("dataset %s failed: %s", code, exc)
    write_manifest(
        cache_root,
        endpoint=source,
        fetched_at=snapshot.fetched_at,
        filters=[
            "monthly",
            f"parameters:{','.join(keywords)}",
            f"coverage:{since}",
        ],
    )
    return report
