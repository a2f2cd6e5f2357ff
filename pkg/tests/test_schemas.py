import json
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator

from vnlab.cli import validate_document

ROOT = Path(__file__).resolve().parents[1]
PACKAGED = ROOT / "src" / "vnlab" / "schemas"
DOCS = ROOT / "docs" / "schemas"


def test_docs_copies_match_packaged_schemas():
    packaged = sorted(p.name for p in PACKAGED.glob("*.json"))
    assert packaged == sorted(p.name for p in DOCS.glob("*.json"))
    for name in packaged:
        assert json.loads((PACKAGED / name).read_text()) == json.loads((DOCS / name).read_text())


@pytest.mark.parametrize("path", sorted(PACKAGED.glob("*.json")), ids=lambda p: p.name)
def test_schemas_are_valid(path):
    Draft202012Validator.check_schema(json.loads(path.read_text()))


@pytest.mark.parametrize("name,schema", [
    ("rejected_table.json", "weights"),
    ("varopoulos_weights.json", "weights"),
    ("unitary_a.json", "weights"),
    ("diagonal_weights.json", "weights"),
    ("contraction_d1.json", "tuple"),
    ("poly_d1.json", "polynomial"),
    ("pv.json", "polynomial"),
    ("matrix_poly_d2.json", "polynomial"),
])
def test_fixtures_conform(fixtures, name, schema):
    validate_document(json.loads((fixtures / name).read_text()), schema)
