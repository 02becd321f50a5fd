"""Core domain types shared across the pipeline, plus header-path algebra.

All types here are immutable values; they can be shared freely between
concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

HEADER_SEPARATOR = " -> "

ImageRef = Union[Path, bytes]


class MalformedHeaderPath(ValueError):
    """Raised when a header-path string or level list cannot be represented."""


@dataclass(frozen=True)
class PageRef:
    """One single-page unit of a corpus, identified by (doc_id, page_index)."""

    doc_id: str
    page_index: int

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if self.page_index < 0:
            raise ValueError(f"page_index must be >= 0, got {self.page_index}")

    @property
    def page_name(self) -> str:
        return f"{self.doc_id}_p{self.page_index}"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in page-image pixel coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate bbox ({self.x0}, {self.y0}, {self.x1}, {self.y1})")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def clipped(self, page_width: float, page_height: float) -> "BBox":
        """Clip to page bounds. Raises ValueError if nothing remains."""
        return BBox(
            x0=max(0.0, min(self.x0, page_width)),
            y0=max(0.0, min(self.y0, page_height)),
            x1=max(0.0, min(self.x1, page_width)),
            y1=max(0.0, min(self.y1, page_height)),
        )

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


class ComponentLabel(str, Enum):
    TABLE = "table"
    TEXT = "text"
    TITLE = "title"
    FIGURE = "figure"
    LIST = "list"
    PAGE = "page"  # reserved for the whole-page fallback component


@dataclass(frozen=True)
class LayoutComponent:
    """A detected page region: box, label and the cropped image it covers."""

    component_id: str
    page: PageRef
    bbox: BBox
    label: ComponentLabel
    crop: ImageRef
    confidence: float = 1.0
    attached_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.component_id:
            raise ValueError("component_id must be non-empty")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")

    def to_json_obj(self) -> dict:
        crop = str(self.crop) if isinstance(self.crop, Path) else None
        return {
            "component_id": self.component_id,
            "doc_id": self.page.doc_id,
            "page_index": self.page.page_index,
            "bbox": self.bbox.as_list(),
            "label": self.label.value,
            "confidence": self.confidence,
            "crop": crop,
            "attached_ids": list(self.attached_ids),
        }


@dataclass(frozen=True)
class HeaderPath:
    """Multi-level column header; serialized with the " -> " separator."""

    levels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise MalformedHeaderPath("header path needs at least one level")
        for level in self.levels:
            if not level:
                raise MalformedHeaderPath("header path level must be non-empty")
            if HEADER_SEPARATOR in level:
                raise MalformedHeaderPath(
                    f"level {level!r} contains the reserved separator {HEADER_SEPARATOR!r}"
                )


def parse_header_path(s: str) -> HeaderPath:
    """Split a serialized column header on the exact 4-character separator.

    Everything else is preserved verbatim; "A->B" stays a single level.
    """
    if not s:
        raise MalformedHeaderPath("empty header path string")
    levels = s.split(HEADER_SEPARATOR)
    if any(not level for level in levels):
        raise MalformedHeaderPath(f"empty level in header path {s!r}")
    return HeaderPath(tuple(levels))


def serialize_header_path(p: HeaderPath) -> str:
    return HEADER_SEPARATOR.join(p.levels)


@dataclass(frozen=True)
class CellTriple:
    """One table cell: row label, serialized column path, verbatim value.

    The value keeps parentheses, minus signs, commas and currency symbols
    exactly as extracted; None marks a blank cell.
    """

    row: str
    column: str
    value: str | None = None

    def __post_init__(self) -> None:
        if not self.row:
            raise ValueError("cell row must be non-empty")
        if not self.column:
            raise ValueError("cell column must be non-empty")

    def to_json_obj(self) -> dict:
        return {"row": self.row, "column": self.column, "value": self.value}


class RegionOrigin(str, Enum):
    REGION = "region"
    PAGE_FALLBACK = "page_fallback"


@dataclass(frozen=True)
class StructuredRegion:
    """Structured representation of one component: cells for tables, text otherwise."""

    component_id: str
    kind: ComponentLabel
    origin: RegionOrigin
    cells: tuple[CellTriple, ...] = ()
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind is ComponentLabel.TABLE:
            if not self.cells or self.text is not None:
                raise ValueError("table region must carry cells and no text")
        else:
            if self.text is None or self.cells:
                raise ValueError(f"{self.kind.value} region must carry text and no cells")
        if self.origin is RegionOrigin.PAGE_FALLBACK and self.kind is not ComponentLabel.PAGE:
            raise ValueError("page-fallback regions must have kind=page")
        if self.kind is ComponentLabel.PAGE and self.origin is not RegionOrigin.PAGE_FALLBACK:
            raise ValueError("page regions only arise from the whole-page fallback")

    def to_json_obj(self) -> dict:
        return {
            "component_id": self.component_id,
            "kind": self.kind.value,
            "origin": self.origin.value,
            "cells": [c.to_json_obj() for c in self.cells] if self.kind is ComponentLabel.TABLE else None,
            "text": self.text,
        }


class RationaleMode(str, Enum):
    TEMPLATE = "template"
    MODEL = "model"
    PASSTHROUGH = "passthrough"


@dataclass(frozen=True)
class Rationale:
    """Natural-language description of a structured region, the unit of retrieval.

    Page-fallback rationales differ from region rationales only in origin
    metadata; retrieval treats them identically.
    """

    rationale_id: str
    page: PageRef
    component_id: str
    origin: RegionOrigin
    text: str
    mode: RationaleMode

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("rationale text must be non-empty")
        if not self.rationale_id:
            raise ValueError("rationale_id must be non-empty")


def full_page_bbox(width: float, height: float) -> BBox:
    return BBox(0.0, 0.0, float(width), float(height))
