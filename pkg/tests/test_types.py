from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, strategies as st

from docrag.types import (
    BBox,
    CellTriple,
    ComponentLabel,
    HeaderPath,
    MalformedHeaderPath,
    PageRef,
    RegionOrigin,
    StructuredRegion,
    parse_header_path,
    serialize_header_path,
)


class TestHeaderPath:
    def test_parse_multi_level(self):
        assert parse_header_path("2024 -> Q1 -> Revenue").levels == ("2024", "Q1", "Revenue")

    def test_parse_single_level(self):
        assert parse_header_path("Notes").levels == ("Notes",)

    def test_no_split_without_spaces(self):
        # the separator is exactly " -> "; "A->B" must stay one level
        assert parse_header_path("A->B").levels == ("A->B",)

    def test_serialize_two_levels(self):
        assert serialize_header_path(HeaderPath(("2023", "Revenue"))) == "2023 -> Revenue"

    def test_serialize_single(self):
        assert serialize_header_path(HeaderPath(("Notes",))) == "Notes"

    def test_empty_input_rejected(self):
        with pytest.raises(MalformedHeaderPath):
            parse_header_path("")

    def test_empty_level_rejected(self):
        with pytest.raises(MalformedHeaderPath):
            parse_header_path("A ->  -> B")
        with pytest.raises(MalformedHeaderPath):
            parse_header_path("A -> ")

    def test_level_containing_separator_rejected(self):
        with pytest.raises(MalformedHeaderPath):
            HeaderPath(("A -> B",))

    def test_round_trip_random_level_lists(self):
        # 1000 random level lists that avoid the separator substring
        rng = random.Random(20240901)
        alphabet = "abcdefgh ->$%,()0123456789é"
        count = 0
        while count < 1000:
            levels = tuple(
                "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
                for _ in range(rng.randint(1, 5))
            )
            if any(not lvl or " -> " in lvl for lvl in levels):
                continue
            count += 1
            path = HeaderPath(levels)
            assert parse_header_path(serialize_header_path(path)) == path

    @given(
        st.lists(
            st.text(min_size=1).filter(lambda s: " -> " not in s),
            min_size=1,
            max_size=6,
        )
    )
    def test_parse_serialize_identity_property(self, levels):
        path = HeaderPath(tuple(levels))
        serialized = serialize_header_path(path)
        assert parse_header_path(serialized) == path
        # serialize . parse is the identity on serialized strings
        assert serialize_header_path(parse_header_path(serialized)) == serialized


class TestCellTriple:
    def test_wire_keys_and_null(self):
        triple = CellTriple(row="A", column="B", value=None)
        assert json.loads(json.dumps(triple.to_json_obj())) == {
            "row": "A",
            "column": "B",
            "value": None,
        }

    def test_value_verbatim(self):
        value = "(1,234.5) $ -6%"
        assert CellTriple(row="r", column="c", value=value).value == value

    def test_empty_row_rejected(self):
        with pytest.raises(ValueError):
            CellTriple(row="", column="c", value="v")


class TestPageRefAndBBox:
    def test_page_ref_validation(self):
        with pytest.raises(ValueError):
            PageRef(doc_id="", page_index=0)
        with pytest.raises(ValueError):
            PageRef(doc_id="d", page_index=-1)
        assert PageRef("d", 3).page_name == "d_p3"

    def test_bbox_validation(self):
        with pytest.raises(ValueError):
            BBox(10, 0, 10, 5)
        with pytest.raises(ValueError):
            BBox(-1, 0, 10, 5)
        box = BBox(1, 2, 11, 22)
        assert (box.width, box.height) == (10, 20)


class TestStructuredRegion:
    def test_table_requires_cells(self):
        with pytest.raises(ValueError):
            StructuredRegion(
                component_id="c", kind=ComponentLabel.TABLE, origin=RegionOrigin.REGION
            )

    def test_text_region_rejects_cells(self):
        with pytest.raises(ValueError):
            StructuredRegion(
                component_id="c",
                kind=ComponentLabel.TEXT,
                origin=RegionOrigin.REGION,
                cells=(CellTriple("r", "c", "v"),),
                text="x",
            )

    def test_page_fallback_pairing(self):
        region = StructuredRegion(
            component_id="c",
            kind=ComponentLabel.PAGE,
            origin=RegionOrigin.PAGE_FALLBACK,
            text="whole page",
        )
        assert region.origin is RegionOrigin.PAGE_FALLBACK
        with pytest.raises(ValueError):
            StructuredRegion(
                component_id="c",
                kind=ComponentLabel.TEXT,
                origin=RegionOrigin.PAGE_FALLBACK,
                text="x",
            )
