import json
from importlib.resources import files

import jsonschema
import pytest
from referencing import Registry, Resource

_SCHEMA_DIR = files("perceived_personality") / "schemas"


def _load_schemas():
    schemas = {p.name: json.loads(p.read_text()) for p in _SCHEMA_DIR.iterdir() if p.name.endswith(".schema.json")}
    registry = Registry().with_resources([(name, Resource.from_contents(s)) for name, s in schemas.items()])
    return schemas, registry


@pytest.fixture(scope="session")
def validate_report():
    schemas, registry = _load_schemas()

    def validate(report: dict, command: str) -> None:
        schema = schemas[f"{command}.schema.json"]
        jsonschema.Draft202012Validator(schema, registry=registry).validate(report)

    return validate


# Acceptance criteria: one PASS/FAIL line each in the terminal summary.

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[marker.args[0]] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}".rstrip())
