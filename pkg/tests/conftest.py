"""Shared fixtures: an in-process OData fixture server, a seven-table fixture
catalog, deterministic embedding providers, and scripted-turn helpers.

Everything runs offline; the "remote" catalog is a loopback HTTP server
serving canned OData v3 envelopes.
"""

from __future__ import annotations

import http.server
import json
import random
import threading
import urllib.parse
from dataclasses import dataclass, field

import pytest

from statviz.catalog import TableRef, fetch_metadata, fetch_table, materialize
from statviz.gateway import FinishReason, ModelTurn, ToolCall
from statviz.retrieval import PrecomputedEmbeddings, build_index, corpus_text

# ---------------------------------------------------------------------------
# Fixture catalog: seven tables mirroring the evaluation domains
# ---------------------------------------------------------------------------


@dataclass
class FixtureTable:
    title: str
    description: str
    properties: list[dict]
    rows: list[dict]


def _milk_rows() -> list[dict]:
    # 300 rows: 25 years x 12 months of monthly milk deliveries.
    rng = random.Random(7425)
    rows = []
    for i, (year, month) in enumerate(
            (y, m) for y in range(1998, 2023) for m in range(1, 13)):
        rows.append({
            "ID": i,
            "Periods": f"{year}MM{month:02d}",
            "RawCowsMilkDelivered_1": round(900 + 80 * rng.random(), 1),
            "CheeseProduction_2": round(60 + 12 * rng.random(), 1),
        })
    return rows


def make_fixture_catalog() -> dict[str, FixtureTable]:
    milk = FixtureTable(
        title="Milk supply and dairy production by factories",
        description="Monthly volume of raw cows' milk delivered to dairy "
                    "factories and the production of cheese, butter and "
                    "milk powder in the Netherlands.",
        properties=[
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "RawCowsMilkDelivered_1", "Type": "Topic",
             "Datatype": "Double", "Unit": "mln kg"},
            {"Key": "CheeseProduction_2", "Type": "Topic",
             "Datatype": "Double", "Unit": "mln kg"},
        ],
        rows=_milk_rows(),
    )
    births = FixtureTable(
        title="Caribbean Netherlands; births, fertility, age of mother",
        description="Live born children by sex and region of the Caribbean "
                    "Netherlands: Bonaire, St Eustatius and Saba.",
        properties=[
            {"Key": "Regions", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "LiveBornBoys_1", "Type": "Topic", "Datatype": "Long",
             "Unit": "number"},
            {"Key": "LiveBornGirls_2", "Type": "Topic", "Datatype": "Long",
             "Unit": "number"},
        ],
        rows=[
            {"ID": 0, "Regions": "Bonaire", "Periods": "2021JJ00",
             "LiveBornBoys_1": 83, "LiveBornGirls_2": 95},
            {"ID": 1, "Regions": "Bonaire", "Periods": "2022JJ00",
             "LiveBornBoys_1": 97, "LiveBornGirls_2": 88},
            {"ID": 2, "Regions": "St Eustatius", "Periods": "2021JJ00",
             "LiveBornBoys_1": 14, "LiveBornGirls_2": 16},
            {"ID": 3, "Regions": "St Eustatius", "Periods": "2022JJ00",
             "LiveBornBoys_1": 18, "LiveBornGirls_2": None},
            {"ID": 4, "Regions": "Saba", "Periods": "2021JJ00",
             "LiveBornBoys_1": 9, "LiveBornGirls_2": 11},
            {"ID": 5, "Regions": "Saba", "Periods": "2022JJ00",
             "LiveBornBoys_1": 12, "LiveBornGirls_2": 7},
        ],
    )
    prices = FixtureTable(
        title="Consumer prices; price index 2015=100",
        description="Consumer price index figures for all household "
                    "expenditure categories, monthly and yearly.",
        properties=[
            {"Key": "ExpenditureCategories", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "CPI_1", "Type": "Topic", "Datatype": "Double", "Unit": "2015=100"},
        ],
        rows=[
            {"ID": 0, "ExpenditureCategories": "All items", "Periods": "2022MM01", "CPI_1": 109.3},
            {"ID": 1, "ExpenditureCategories": "All items", "Periods": "2022MM02", "CPI_1": 110.1},
            {"ID": 2, "ExpenditureCategories": "Food", "Periods": "2022MM01", "CPI_1": 112.7},
            {"ID": 3, "ExpenditureCategories": "Food", "Periods": "2022MM02", "CPI_1": 113.4},
        ],
    )
    industry = FixtureTable(
        title="Industry; production and sales, changes and index",
        description="Seasonally adjusted daily turnover for domestic and "
                    "foreign markets per industrial sector.",
        properties=[
            {"Key": "SectorBranchesSIC2008", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "TurnoverDomestic_1", "Type": "Topic", "Datatype": "Double",
             "Unit": "2021=100"},
            {"Key": "TurnoverForeign_2", "Type": "Topic", "Datatype": "Double",
             "Unit": "2021=100"},
        ],
        rows=[
            {"ID": 0, "SectorBranchesSIC2008": "16 Manufacture of wood products",
             "Periods": "2020MM01", "TurnoverDomestic_1": 98.2, "TurnoverForeign_2": 95.1},
            {"ID": 1, "SectorBranchesSIC2008": "16 Manufacture of wood products",
             "Periods": "2020MM02", "TurnoverDomestic_1": 99.0, "TurnoverForeign_2": 96.4},
            {"ID": 2, "SectorBranchesSIC2008": "All sectors",
             "Periods": "2020MM01", "TurnoverDomestic_1": 101.5, "TurnoverForeign_2": 100.8},
        ],
    )
    producer = FixtureTable(
        title="Producer price index; output and import prices by product",
        description="Producer prices of industrial products sold on the "
                    "domestic market and abroad.",
        properties=[
            {"Key": "ProductsPROD", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "OutputPrices_1", "Type": "Topic", "Datatype": "Double",
             "Unit": "2021=100"},
        ],
        rows=[
            {"ID": 0, "ProductsPROD": "Food products", "Periods": "2022MM01",
             "OutputPrices_1": 118.9},
            {"ID": 1, "ProductsPROD": "Food products", "Periods": "2022MM02",
             "OutputPrices_1": 120.2},
        ],
    )
    municipal = FixtureTable(
        title="Municipal accounts; balance sheet by region and size class",
        description="Balance sheet items of municipal accounts: assets, "
                    "liabilities and reserves per municipality group.",
        properties=[
            {"Key": "Regions", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "FixedAssets_1", "Type": "Topic", "Datatype": "Long",
             "Unit": "mln euro"},
            {"Key": "Reserves_2", "Type": "Topic", "Datatype": "Long",
             "Unit": "mln euro"},
        ],
        rows=[
            {"ID": 0, "Regions": "Amsterdam", "Periods": "2021JJ00",
             "FixedAssets_1": 9120, "Reserves_2": 2233},
            {"ID": 1, "Regions": "Rotterdam", "Periods": "2021JJ00",
             "FixedAssets_1": 7440, "Reserves_2": 1821},
        ],
    )
    population = FixtureTable(
        title="Population; sex, age, generation and migration background",
        description="Population of the Netherlands on 1 January by sex, age "
                    "group, generation and migration background.",
        properties=[
            {"Key": "Sex", "Type": "Dimension", "Datatype": "String"},
            {"Key": "MigrationBackground", "Type": "Dimension", "Datatype": "String"},
            {"Key": "Periods", "Type": "TimeDimension", "Datatype": "String"},
            {"Key": "Population_1", "Type": "Topic", "Datatype": "Long",
             "Unit": "number"},
        ],
        rows=[
            {"ID": 0, "Sex": "Total", "MigrationBackground": "Dutch background",
             "Periods": "2010JJ00", "Population_1": 13215000},
            {"ID": 1, "Sex": "Total", "MigrationBackground": "Morocco",
             "Periods": "2010JJ00", "Population_1": 349000},
            {"ID": 2, "Sex": "Total", "MigrationBackground": "Turkey",
             "Periods": "2010JJ00", "Population_1": 384000},
        ],
    )
    return {
        "7425eng": milk,
        "85332ENG": births,
        "83131ENG": prices,
        "83838ENG": industry,
        "81234ENG": producer,
        "83642ENG": municipal,
        "37325eng": population,
    }


# ---------------------------------------------------------------------------
# Fixture OData server
# ---------------------------------------------------------------------------

class FixtureODataServer:
    """Loopback OData v3 server over a fixture catalog.

    Table id ``FAILPAGE1`` is reserved: its first page succeeds, every later
    page answers HTTP 500, which exercises the partial-fetch error path.
    """

    def __init__(self, tables: dict[str, FixtureTable]):
        self.tables = tables
        self.request_count = 0
        server = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet
                pass

            def do_GET(self):
                server.request_count += 1
                status, payload = server.respond(self.path)
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    def respond(self, path: str) -> tuple[int, dict]:
        parsed = urllib.parse.urlparse(path)
        parts = [p for p in parsed.path.split("/") if p]
        if len(parts) != 4 or parts[:2] != ["ODataApi", "OData"]:
            return 404, {"error": "unknown path"}
        table_id, resource = parts[2], parts[3]

        if table_id == "EMPTY0":
            if resource == "TableInfos":
                return 200, {"value": [{"Title": "Empty table",
                                        "Description": "A table with no rows."}]}
            if resource == "DataProperties":
                return 200, {"value": [{"Key": "Value_1", "Type": "Topic",
                                        "Datatype": "Long"}]}
            if resource == "TypedDataSet":
                return 200, {"value": []}

        if table_id == "FAILPAGE1":
            query = urllib.parse.parse_qs(parsed.query)
            skip = int(query.get("$skip", ["0"])[0])
            if resource == "TableInfos":
                return 200, {"value": [{"Title": "Flaky table",
                                        "Description": "A table whose later pages fail."}]}
            if resource == "DataProperties":
                return 200, {"value": [{"Key": "Value_1", "Type": "Topic",
                                        "Datatype": "Long"}]}
            if resource == "TypedDataSet":
                if skip == 0:
                    top = int(query.get("$top", ["100"])[0])
                    return 200, {"value": [{"ID": i, "Value_1": i} for i in range(top)]}
                return 500, {"error": "flaky page"}

        table = self.tables.get(table_id)
        if table is None:
            return 404, {"error": f"unknown table {table_id}"}
        if resource == "TableInfos":
            return 200, {"value": [{"Title": table.title,
                                    "Description": table.description}]}
        if resource == "DataProperties":
            return 200, {"value": table.properties}
        if resource == "TypedDataSet":
            query = urllib.parse.parse_qs(parsed.query)
            skip = int(query.get("$skip", ["0"])[0])
            top = int(query.get("$top", [str(len(table.rows))])[0])
            return 200, {"value": table.rows[skip:skip + top]}
        return 404, {"error": f"unknown resource {resource}"}

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def start(self):
        self._thread.start()

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture(scope="session")
def fixture_catalog() -> dict[str, FixtureTable]:
    return make_fixture_catalog()


@pytest.fixture(scope="session")
def odata_server(fixture_catalog):
    server = FixtureODataServer(fixture_catalog)
    server.start()
    yield server
    server.stop()


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory, odata_server, fixture_catalog):
    """All seven fixture tables fetched and materialized; treat as read-only."""
    directory = tmp_path_factory.mktemp("data")
    for table_id in fixture_catalog:
        ref = TableRef(table_id)
        meta = fetch_metadata(ref, odata_server.endpoint)
        table = fetch_table(ref, odata_server.endpoint, 100, meta)
        materialize(table, meta, directory)
    return directory


# ---------------------------------------------------------------------------
# Embedding fixtures
# ---------------------------------------------------------------------------

TASK_PROMPTS = {
    "7425eng": "Plot the monthly volume of raw cow's milk delivered by dairy "
               "farmers between 2010-2015",
    "85332ENG": "Plot the regional distribution of newborn boys and girls in Caribbean.",
    "83838ENG": "Plot the seasonally adjusted daily turnover for domestic and "
                "foreign markets for sector '16 Manufacture of wood products' "
                "between 2020-2021",
}


@pytest.fixture(scope="session")
def planted_embedder(data_dir):
    """Lookup provider: each table's corpus text gets a distinct one-hot
    vector; a few known task prompts map onto their gold table's vector."""
    from statviz.catalog import list_materialized, stored_metadata

    refs = [ref.id for ref in list_materialized(data_dir)]
    dim = len(refs)
    mapping: dict[str, list[float]] = {}
    position = {}
    for i, table_id in enumerate(sorted(refs)):
        meta = stored_metadata(data_dir, table_id)
        vector = [0.0] * dim
        vector[i] = 1.0
        mapping[corpus_text(meta)] = vector
        position[table_id] = i
    for table_id, prompt in TASK_PROMPTS.items():
        vector = [0.1] * dim
        vector[position[table_id]] = 1.0
        mapping[prompt] = vector
    return PrecomputedEmbeddings(mapping, provider_id="planted-onehot")


@pytest.fixture(scope="session")
def built_index(data_dir, planted_embedder):
    from statviz.catalog import list_materialized, stored_metadata

    metas = [stored_metadata(data_dir, ref) for ref in list_materialized(data_dir)]
    return build_index(metas, planted_embedder)


# ---------------------------------------------------------------------------
# Scripted turn helpers
# ---------------------------------------------------------------------------

def tool_turn(name: str, arguments: dict, call_id: str = "call_1",
              text: str | None = None) -> ModelTurn:
    return ModelTurn(text=text,
                     tool_calls=[ToolCall(id=call_id, name=name, arguments=arguments)],
                     finish_reason=FinishReason.TOOL_USE)


def stop_turn(text: str = "Done.") -> ModelTurn:
    return ModelTurn(text=text, finish_reason=FinishReason.STOP)


# ---------------------------------------------------------------------------
# Acceptance summary
# ---------------------------------------------------------------------------

_ACCEPTANCE_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(criterion, label): marks a test as part of a numbered "
        "acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    marker_info = getattr(report, "_acceptance", None)
    if marker_info is None:
        return
    criterion, label = marker_info
    entry = _ACCEPTANCE_RESULTS.setdefault(criterion, {"label": label, "passed": True})
    if report.outcome != "passed":
        entry["passed"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker:
        report._acceptance = (marker.kwargs["criterion"], marker.kwargs["label"])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE_RESULTS):
        entry = _ACCEPTANCE_RESULTS[criterion]
        verdict = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(
            f"criterion {criterion}: {verdict} - {entry['label']}")
