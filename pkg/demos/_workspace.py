"""Shared setup for the demo scripts: a tiny offline catalog.

The catalog client replays recorded responses from its on-disk cache, so the
demos seed the cache with canned OData envelopes and then "fetch" from the
public endpoint without any network. Everything lands under demos/out/.
"""

from __future__ import annotations

from pathlib import Path

from statviz.catalog import TableRef, fetch_metadata, fetch_table, materialize, record_response

ENDPOINT = "https://opendata.cbs.nl"
OUT_DIR = Path(__file__).resolve().parent / "out"

PAGE_SIZE = 500

TABLES = {
    "7425eng": {
        "title": "Milk supply and dairy production by factories",
        "description": "Monthly volume of raw cows' milk delivered to dairy "
                       "factories and the production of cheese and butter.",
        "properties": [
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "RawCowsMilkDelivered_1", "Type": "Topic",
             "Datatype": "Double", "Unit": "mln kg"},
            {"Key": "CheeseProduction_2", "Type": "Topic",
             "Datatype": "Double", "Unit": "mln kg"},
        ],
        "rows": [
            {"ID": i, "Periods": f"{2010 + i // 12}MM{i % 12 + 1:02d}",
             "RawCowsMilkDelivered_1": round(920 + 60 * ((i * 7) % 10) / 10, 1),
             "CheeseProduction_2": round(62 + 9 * ((i * 3) % 10) / 10, 1)}
            for i in range(72)
        ],
    },
    "85332ENG": {
        "title": "Caribbean Netherlands; births, fertility, age of mother",
        "description": "Live born children by sex and region of the "
                       "Caribbean Netherlands.",
        "properties": [
            {"Key": "Regions", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "LiveBornBoys_1", "Type": "Topic", "Datatype": "Long",
             "Unit": "number"},
            {"Key": "LiveBornGirls_2", "Type": "Topic", "Datatype": "Long",
             "Unit": "number"},
        ],
        "rows": [
            {"ID": 0, "Regions": "Bonaire", "Periods": "2022JJ00",
             "LiveBornBoys_1": 97, "LiveBornGirls_2": 88},
            {"ID": 1, "Regions": "St Eustatius", "Periods": "2022JJ00",
             "LiveBornBoys_1": 18, "LiveBornGirls_2": 15},
            {"ID": 2, "Regions": "Saba", "Periods": "2022JJ00",
             "LiveBornBoys_1": 12, "LiveBornGirls_2": 7},
        ],
    },
    "83131ENG": {
        "title": "Consumer prices; price index 2015=100",
        "description": "Consumer price index figures for all household "
                       "expenditure categories.",
        "properties": [
            {"Key": "ExpenditureCategories", "Type": "Dimension",
             "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "CPI_1", "Type": "Topic", "Datatype": "Double",
             "Unit": "2015=100"},
        ],
        "rows": [
            {"ID": 0, "ExpenditureCategories": "All items",
             "Periods": "2023MM01", "CPI_1": 117.8},
            {"ID": 1, "ExpenditureCategories": "All items",
             "Periods": "2023MM02", "CPI_1": 118.6},
            {"ID": 2, "ExpenditureCategories": "Food",
             "Periods": "2023MM01", "CPI_1": 126.4},
        ],
    },
}


def seed_cache(cache_dir: Path) -> None:
    for table_id, spec in TABLES.items():
        record_response(cache_dir, ENDPOINT, table_id, "TableInfos",
                        {"value": [{"Title": spec["title"],
                                    "Description": spec["description"]}]})
        record_response(cache_dir, ENDPOINT, table_id, "DataProperties",
                        {"value": spec["properties"]})
        record_response(cache_dir, ENDPOINT, table_id,
                        f"TypedDataSet?$skip=0&$top={PAGE_SIZE}",
                        {"value": spec["rows"]})


def materialize_all(workspace: Path) -> Path:
    """Fetch every demo table from the seeded cache into workspace/data."""
    cache_dir = workspace / "cache"
    data_dir = workspace / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    seed_cache(cache_dir)
    for table_id in TABLES:
        ref = TableRef(table_id)
        meta = fetch_metadata(ref, ENDPOINT, cache_dir=cache_dir)
        table = fetch_table(ref, ENDPOINT, PAGE_SIZE, meta, cache_dir=cache_dir)
        materialize(table, meta, data_dir)
    return data_dir


def fresh_workspace(name: str) -> Path:
    import shutil

    workspace = OUT_DIR / name
    if workspace.exists():
        shutil.rmtree(workspace)
    workspace.mkdir(parents=True)
    return workspace
