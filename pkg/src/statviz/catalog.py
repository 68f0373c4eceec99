"""Client for a national-statistics OData v3 catalog.

Tables are identified by an alphanumeric code (for example ``85332ENG``).
`fetch_metadata` reads the table's description and column properties,
`fetch_table` pages through the typed row resource, and `materialize` writes
the dataset into the local data directory every downstream module reads:

    <data_dir>/<id>.csv        header = column names, one line per row
    <data_dir>/<id>.meta.json  title, description, column specs, null counts

Responses can be cached on disk keyed by (endpoint, ref, resource), which is
how the test suite replays recorded fixtures without a network.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import requests

from .errors import (
    EmptyTableError,
    NotFoundError,
    PartialFetchError,
    PayloadError,
    TransportError,
)

_REF_PATTERN = re.compile(r"^[A-Za-z0-9]+$")
_YEAR_PREFIX = re.compile(r"^\d{4}")


@dataclass(frozen=True)
class TableRef:
    id: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("table ref must be non-empty")
        if not _REF_PATTERN.match(self.id):
            raise ValueError(
                f"table ref {self.id!r} must be alphanumeric with no separators")

    def __str__(self) -> str:
        return self.id


class ColumnKind(Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"
    PERIOD = "period-string"
    KEY = "key"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: ColumnKind
    unit: str | None = None


@dataclass(frozen=True)
class TableMetadata:
    ref: TableRef
    title: str
    description: str
    columns: tuple[ColumnSpec, ...]
    source_url: str

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError(f"table {self.ref}: description must be non-empty")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"table {self.ref}: duplicate column names")


@dataclass
class DataTable:
    ref: TableRef
    columns: list[ColumnSpec]
    rows: list[tuple]

    def __post_init__(self) -> None:
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(
                    f"row {i} has {len(row)} values for {width} columns")

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class StoredDataset:
    csv_path: Path
    meta_path: Path


# ---------------------------------------------------------------------------
# HTTP layer with on-disk caching
# ---------------------------------------------------------------------------

def _cache_key(endpoint: str, ref: str, resource: str) -> str:
    digest = hashlib.sha256(f"{endpoint}|{ref}|{resource}".encode("utf-8")).hexdigest()
    return f"{digest[:32]}.json"


def _get_json(url: str, *, endpoint: str, ref: str, resource: str,
              cache_dir: Path | None, session: requests.Session | None,
              timeout_s: float) -> dict:
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / _cache_key(endpoint, ref, resource)
        if cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))

    http = session or requests
    try:
        response = http.get(url, timeout=timeout_s)
    except requests.RequestException as exc:
        raise TransportError(f"GET {url} failed: {exc}") from exc
    if response.status_code == 404:
        raise NotFoundError(f"catalog has no resource {resource!r} for table {ref!r}")
    if response.status_code >= 500:
        raise TransportError(f"GET {url} returned HTTP {response.status_code}")
    if response.status_code != 200:
        raise PayloadError(f"GET {url} returned HTTP {response.status_code}",
                           fragment=response.text[:200])
    try:
        payload = response.json()
    except ValueError as exc:
        raise PayloadError(f"GET {url} returned non-JSON body",
                           fragment=response.text[:200]) from exc
    if not isinstance(payload, dict) or "value" not in payload:
        raise PayloadError(f"GET {url}: expected an envelope with a 'value' array",
                           fragment=payload)

    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_path.with_suffix(".tmp")
        # Key order is significant: row-object keys define column order, so
        # the cache must replay payloads exactly as the server sent them.
        tmp.write_text(json.dumps(payload), encoding="utf-8")
        os.replace(tmp, cache_path)
    return payload


def record_response(cache_dir: Path | str, endpoint: str, ref: str,
                    resource: str, payload: dict) -> Path:
    """Seed the on-disk cache with a recorded response.

    Lets fetches against a real endpoint replay offline: the cache is keyed by
    (endpoint, ref, resource), so a seeded entry short-circuits the network.
    Row pages use the resource form ``TypedDataSet?$skip=<n>&$top=<m>``.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / _cache_key(endpoint, ref, resource)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def typed_dataset_url(endpoint: str, ref: TableRef) -> str:
    return f"{endpoint.rstrip('/')}/ODataApi/OData/{ref.id}/TypedDataSet"


def _resource_url(endpoint: str, ref: TableRef, resource: str) -> str:
    return f"{endpoint.rstrip('/')}/ODataApi/OData/{ref.id}/{resource}"


# ---------------------------------------------------------------------------
# Fetching
# ---------------------------------------------------------------------------

_NUMERIC_DATATYPES = {"Double", "Float", "Long", "Integer", "Decimal"}


def _kind_from_property(prop: Mapping[str, object]) -> ColumnKind:
    prop_type = str(prop.get("Type", ""))
    if prop_type == "TimeDimension":
        return ColumnKind.PERIOD
    if prop_type in ("Dimension", "GeoDimension", "GeoDetail"):
        return ColumnKind.CATEGORICAL
    if str(prop.get("Datatype", "")) in _NUMERIC_DATATYPES:
        return ColumnKind.NUMERIC
    return ColumnKind.CATEGORICAL


def fetch_metadata(ref: TableRef | str, endpoint: str, *,
                   cache_dir: Path | str | None = None,
                   session: requests.Session | None = None,
                   timeout_s: float = 30.0) -> TableMetadata:
    """Fetch a table's description and column properties.

    Raises NotFoundError for unknown refs, TransportError on network trouble,
    and PayloadError when the server answers with an unexpected shape.
    """
    ref = ref if isinstance(ref, TableRef) else TableRef(ref)
    cache = Path(cache_dir) if cache_dir is not None else None

    infos = _get_json(
        _resource_url(endpoint, ref, "TableInfos"),
        endpoint=endpoint, ref=ref.id, resource="TableInfos",
        cache_dir=cache, session=session, timeout_s=timeout_s)
    if not infos["value"]:
        raise PayloadError(f"table {ref}: TableInfos is empty", fragment=infos)
    info = infos["value"][0]
    title = str(info.get("Title", "")).strip()
    description = ""
    for key in ("Description", "Summary", "ShortDescription"):
        candidate = str(info.get(key, "") or "").strip()
        if candidate:
            description = candidate
            break
    if not description:
        raise PayloadError(f"table {ref}: no usable description field", fragment=info)

    props = _get_json(
        _resource_url(endpoint, ref, "DataProperties"),
        endpoint=endpoint, ref=ref.id, resource="DataProperties",
        cache_dir=cache, session=session, timeout_s=timeout_s)
    columns = []
    for prop in props["value"]:
        key = str(prop.get("Key", "") or "")
        if not key:
            continue
        unit = prop.get("Unit")
        columns.append(ColumnSpec(name=key, kind=_kind_from_property(prop),
                                  unit=str(unit) if unit else None))

    return TableMetadata(
        ref=ref,
        title=title or ref.id,
        description=description,
        columns=tuple(columns),
        source_url=typed_dataset_url(endpoint, ref),
    )


def infer_column_kind(name: str, values: Iterable[object]) -> ColumnKind:
    """Assign a kind from observed values.

    ``ID`` is the row key. A column named ``Periods``, or whose non-null
    values all start with a four-digit year, is a period string — period
    columns stay strings on purpose, so the hazard is visible in metadata.
    Otherwise numeric if every non-null value parses as a number, else
    categorical.
    """
    if name == "ID":
        return ColumnKind.KEY
    non_null = [v for v in values if v is not None and v != ""]
    if name == "Periods":
        return ColumnKind.PERIOD
    if non_null and all(isinstance(v, str) and _YEAR_PREFIX.match(v) for v in non_null):
        return ColumnKind.PERIOD
    if non_null and all(_parses_as_number(v) for v in non_null):
        return ColumnKind.NUMERIC
    return ColumnKind.CATEGORICAL


def _parses_as_number(value: object) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, float)):
        return True
    try:
        float(str(value))
        return True
    except ValueError:
        return False


def fetch_table(ref: TableRef | str, endpoint: str, page_size: int,
                metadata: TableMetadata, *,
                cache_dir: Path | str | None = None,
                session: requests.Session | None = None,
                timeout_s: float = 30.0) -> DataTable:
    """Page through the typed row resource and assemble the full table.

    Pages are concatenated in server order. A failure mid-pagination raises
    PartialFetchError naming the last page that was retrieved successfully.
    Column kinds are re-inferred from the actual values; units come from the
    metadata when column names line up.
    """
    ref = ref if isinstance(ref, TableRef) else TableRef(ref)
    if page_size < 1:
        raise ValueError("page_size must be positive")
    cache = Path(cache_dir) if cache_dir is not None else None

    raw_rows: list[dict] = []
    page = 0
    while True:
        resource = f"TypedDataSet?$skip={page * page_size}&$top={page_size}"
        url = f"{typed_dataset_url(endpoint, ref)}?$skip={page * page_size}&$top={page_size}"
        try:
            payload = _get_json(url, endpoint=endpoint, ref=ref.id, resource=resource,
                                cache_dir=cache, session=session, timeout_s=timeout_s)
        except TransportError as exc:
            raise PartialFetchError(
                f"table {ref}: page {page + 1} failed after {page} good pages: {exc}",
                last_good_page=page) from exc
        batch = payload["value"]
        if not isinstance(batch, list):
            raise PayloadError(f"table {ref}: 'value' is not an array", fragment=payload)
        raw_rows.extend(batch)
        page += 1
        if len(batch) < page_size:
            break

    if not raw_rows:
        return DataTable(ref=ref, columns=list(metadata.columns), rows=[])

    names = list(raw_rows[0].keys())
    units = {c.name: c.unit for c in metadata.columns}
    columns = [
        ColumnSpec(
            name=name,
            kind=infer_column_kind(name, (row.get(name) for row in raw_rows)),
            unit=units.get(name),
        )
        for name in names
    ]
    rows = [tuple(row.get(name) for name in names) for row in raw_rows]
    return DataTable(ref=ref, columns=columns, rows=rows)


# ---------------------------------------------------------------------------
# Materialization
# ---------------------------------------------------------------------------

def canonical_value(value: object) -> str:
    """The string form written to CSV; None becomes the empty field."""
    if value is None:
        return ""
    if value is True:
        return "true"
    if value is False:
        return "false"
    return str(value)


def sample_row(table: DataTable) -> tuple:
    """The first row, deterministically; the one row a prompt may contain."""
    if not table.rows:
        raise EmptyTableError(f"table {table.ref} has no rows to sample")
    return table.rows[0]


def materialize(table: DataTable, meta: TableMetadata,
                data_dir: Path | str) -> StoredDataset:
    """Write ``<id>.csv`` and ``<id>.meta.json`` atomically into data_dir.

    Re-materializing overwrites both files in place (write-temp-then-rename),
    so a crash never leaves a half-written dataset behind.
    """
    import csv as _csv

    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory {data_dir} does not exist")
    if not os.access(data_dir, os.W_OK):
        raise PermissionError(f"data directory {data_dir} is not writable")
    if not table.rows:
        raise EmptyTableError(f"refusing to materialize empty table {table.ref}")

    csv_path = data_dir / f"{table.ref.id}.csv"
    meta_path = data_dir / f"{table.ref.id}.meta.json"

    null_counts = {
        col.name: sum(1 for row in table.rows if row[i] is None or row[i] == "")
        for i, col in enumerate(table.columns)
    }
    sidecar = {
        "id": table.ref.id,
        "title": meta.title,
        "description": meta.description,
        "source_url": meta.source_url,
        "columns": [
            {"name": c.name, "kind": c.kind.value, "unit": c.unit}
            for c in table.columns
        ],
        "null_counts": null_counts,
        "row_count": len(table.rows),
    }

    fd, tmp_csv = tempfile.mkstemp(dir=data_dir, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(table.column_names())
            for row in table.rows:
                writer.writerow([canonical_value(v) for v in row])
        fd2, tmp_meta = tempfile.mkstemp(dir=data_dir, suffix=".json.tmp")
        try:
            with os.fdopen(fd2, "w", encoding="utf-8") as fh:
                json.dump(sidecar, fh, indent=2)
                fh.write("\n")
            os.replace(tmp_csv, csv_path)
            os.replace(tmp_meta, meta_path)
        except BaseException:
            if os.path.exists(tmp_meta):
                os.unlink(tmp_meta)
            raise
    except BaseException:
        if os.path.exists(tmp_csv):
            os.unlink(tmp_csv)
        raise
    return StoredDataset(csv_path=csv_path, meta_path=meta_path)


def load_stored(data_dir: Path | str, ref: TableRef | str) -> tuple[DataTable, dict]:
    """Reload a materialized dataset: (table with string values, sidecar dict)."""
    import csv as _csv

    ref = ref if isinstance(ref, TableRef) else TableRef(ref)
    data_dir = Path(data_dir)
    csv_path = data_dir / f"{ref.id}.csv"
    meta_path = data_dir / f"{ref.id}.meta.json"
    if not csv_path.exists() or not meta_path.exists():
        raise NotFoundError(f"dataset {ref} is not materialized under {data_dir}")

    sidecar = json.loads(meta_path.read_text(encoding="utf-8"))
    columns = [
        ColumnSpec(name=c["name"], kind=ColumnKind(c["kind"]), unit=c.get("unit"))
        for c in sidecar["columns"]
    ]
    with csv_path.open(encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = [tuple(row) for row in reader]
    if header != [c.name for c in columns]:
        raise PayloadError(f"dataset {ref}: CSV header does not match sidecar columns",
                           fragment=header)
    return DataTable(ref=ref, columns=columns, rows=rows), sidecar


def stored_metadata(data_dir: Path | str, ref: TableRef | str) -> TableMetadata:
    """Rebuild TableMetadata from a materialized sidecar."""
    _, sidecar = load_stored(data_dir, ref)
    return TableMetadata(
        ref=TableRef(sidecar["id"]),
        title=sidecar["title"],
        description=sidecar["description"],
        columns=tuple(
            ColumnSpec(name=c["name"], kind=ColumnKind(c["kind"]), unit=c.get("unit"))
            for c in sidecar["columns"]
        ),
        source_url=sidecar["source_url"],
    )


def list_materialized(data_dir: Path | str) -> list[TableRef]:
    """Refs of every dataset with both files present, sorted by id."""
    data_dir = Path(data_dir)
    refs = []
    for meta_path in sorted(data_dir.glob("*.meta.json")):
        table_id = meta_path.name[: -len(".meta.json")]
        if (data_dir / f"{table_id}.csv").exists():
            refs.append(TableRef(table_id))
    return refs
