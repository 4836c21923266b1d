import json
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellsentry.model import (
    CellKind,
    CellRef,
    DanglingNameError,
    DuplicateNameError,
    DuplicateSheetError,
    ErrorValue,
    OutOfBoundsError,
    RangeRef,
    SchemaError,
    UnknownNameError,
    col_to_letters,
    fingerprint_model,
    letters_to_col,
    load_workbook,
    resolve_name,
    save_workbook,
    workbook_from_dict,
    workbook_to_dict,
)
from conftest import book, book_doc

EMPTY_SHA256 = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_load_single_number(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"sheets": [{"name": "S", "cells": {"A1": {"v": 5}}}]}))
    wb = load_workbook(path)
    assert len(wb.sheets) == 1
    cell = wb.cell(CellRef("S", 1, 1))
    assert cell.kind is CellKind.NUMBER and cell.value == 5.0


def test_cell_kinds():
    wb = book({"S": {"A1": 1, "A2": "x", "A3": True, "A4": {"e": "#N/A"}, "A5": {"f": "=A1", "v": 1}, "A6": {"f": "=1/0", "e": "#DIV/0!"}}})
    kinds = [wb.cell(CellRef("S", 1, r)).kind for r in range(1, 8)]
    assert kinds == [CellKind.NUMBER, CellKind.LABEL, CellKind.BOOL, CellKind.ERROR, CellKind.FORMULA, CellKind.FORMULA, CellKind.BLANK]
    assert wb.cell(CellRef("S", 1, 6)).cached == ErrorValue("#DIV/0!")


def test_duplicate_sheet_names_rejected():
    with pytest.raises(DuplicateSheetError):
        book({"P&L": {}, "p&l": {}})


def test_duplicate_defined_names_rejected():
    with pytest.raises(DuplicateNameError):
        workbook_from_dict(book_doc({"S": {}}, None) | {"names": [{"name": "A_", "ref": "S!A1"}, {"name": "a_", "ref": "S!A2"}]})


def test_out_of_bounds_cell_key():
    with pytest.raises(OutOfBoundsError):
        book({"S": {"XFE1": 1}})
    with pytest.raises(OutOfBoundsError):
        book({"S": {"A1048577": 1}})
    assert book({"S": {"XFD1048576": 1}}).sheets[0].cells


@pytest.mark.parametrize(
    "doc",
    [
        {},
        {"sheets": [{"name": "S"}]},
        {"sheets": [{"name": "S", "cells": {"A1": {}}}]},
        {"sheets": [{"name": "S", "cells": {"A1": {"v": 1, "e": "#N/A"}}}]},
        {"sheets": [{"name": "S", "cells": {"A1": {"f": "A1"}}}]},
        {"sheets": [{"name": "S", "cells": {"A1": {"e": "#ERR"}}}]},
        {"sheets": [{"name": "S", "cells": {"$A$1": {"v": 1}}}]},
        {"sheets": [{"name": "S", "cells": {"A1": {"v": None}}}]},
        {"sheets": [], "extra": 1},
        {"sheets": [{"name": "S", "cells": {}}], "names": [{"name": "A1", "ref": "S!A1"}]},
    ],
)
def test_schema_violations(doc):
    with pytest.raises(SchemaError):
        workbook_from_dict(doc)


def test_schema_error_carries_path():
    with pytest.raises(SchemaError) as info:
        workbook_from_dict({"sheets": [{"name": "S", "cells": {"B2": {"q": 1}}}]})
    assert "/sheets/0/cells/B2" in str(info.value)


def test_not_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(SchemaError):
        load_workbook(path)


def test_fingerprint_empty_and_copies(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_bytes(b"")
    fp = fingerprint_model(empty)
    assert fp.content_hash == EMPTY_SHA256 and fp.byte_size == 0

    a = tmp_path / "a.bin"
    a.write_bytes(b"x" * 1024)
    b = tmp_path / "b.bin"
    shutil.copy(a, b)
    fa, fb = fingerprint_model(a), fingerprint_model(b)
    assert fa.byte_size == 1024
    assert fa.content_hash == fb.content_hash and fa.file_name != fb.file_name
    assert fa.same_content(fb)
    assert fa.modified_timestamp.endswith("Z")


def test_resolve_name():
    wb = book({"P&L": {"A1": 1}, "S": {}}, names={"Rev": "'P&L'!$A$1:$A$5", "Ghost": "Old!$A$1", "Bad": "nonsense"})
    target = RangeRef.parse("'P&L'!A1:A5")
    assert resolve_name(wb, "Rev") == target
    assert resolve_name(wb, "rev") == target
    with pytest.raises(DanglingNameError):
        resolve_name(wb, "Ghost")
    with pytest.raises(DanglingNameError):
        resolve_name(wb, "Bad")
    with pytest.raises(UnknownNameError):
        resolve_name(wb, "Nope")


def test_sheet_lookup_case_insensitive():
    wb = book({"Data": {"A1": 3}})
    assert wb.cell(CellRef("DATA", 1, 1)).value == 3.0
    assert wb.canonical_sheet("data") == "Data"


def test_letters():
    assert col_to_letters(1) == "A" and col_to_letters(26) == "Z" and col_to_letters(27) == "AA"
    assert col_to_letters(16384) == "XFD" and letters_to_col("XFD") == 16384


def test_ref_parsing():
    assert CellRef.parse("'Debt Sched'!$C$3") == CellRef("Debt Sched", 3, 3, True, True)
    assert CellRef.parse("'Debt Sched'!$C$3").a1() == "'Debt Sched'!$C$3"
    assert RangeRef.parse("S!B3:A1") == RangeRef.parse("S!A1:B3")
    assert RangeRef.parse("S!A1:B3").area == 6
    assert RangeRef.parse("S!A1:B3").intersect(RangeRef.parse("S!B2:C9")) == RangeRef.parse("S!B2:B3")


values = st.one_of(
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.text(max_size=5),
    st.booleans(),
    st.sampled_from(["=A1+1", "=SUM(A1:B2)"]),
)
addresses = st.builds(lambda c, r: CellRef(None, c, r).a1(), st.integers(1, 30), st.integers(1, 30))


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from(["S", "P&L", "x y"]), st.dictionaries(addresses, values, max_size=6), min_size=1))
def test_serialize_round_trip(sheets):
    wb = book(sheets)
    again = workbook_from_dict(json.loads(json.dumps(workbook_to_dict(wb))))
    assert again == wb


def test_loading_does_not_mutate(tmp_path):
    path = tmp_path / "m.json"
    save_workbook(book({"S": {"A1": 1, "B1": "=A1"}}, names={"One": "S!$A$1"}), path)
    before = path.read_bytes()
    assert load_workbook(path) == load_workbook(path)
    assert path.read_bytes() == before
