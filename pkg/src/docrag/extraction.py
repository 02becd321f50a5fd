"""Vision-model extraction: one prompt per component kind, a tolerant parser
for the model's table JSON, and per-page orchestration with the whole-page
fallback.

Repair of model output is deliberately limited to fence-stripping and
bracket-slicing; anything the model got structurally wrong stays an error so
the fallback path remains meaningful.
"""

from __future__ import annotations

import json
import logging
import re
from enum import Enum

from . import prompts
from .layout import fallback_component, read_image_bytes
from .types import (
    CellTriple,
    ComponentLabel,
    ImageRef,
    LayoutComponent,
    PageRef,
    RegionOrigin,
    StructuredRegion,
)

logger = logging.getLogger(__name__)

PROMPT_FILES = {
    ComponentLabel.TABLE: "table.txt",
    ComponentLabel.TEXT: "text.txt",
    ComponentLabel.TITLE: "title.txt",
    ComponentLabel.FIGURE: "figure.txt",
    ComponentLabel.PAGE: "page.txt",
    ComponentLabel.LIST: "text.txt",  # no dedicated list prompt exists
}

_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*$")

REQUIRED_KEYS = {"row", "column", "value"}


class ExtractionError(RuntimeError):
    """Base for extraction failures; may carry the failing component id."""

    component_id: str | None = None


class NoArrayFound(ExtractionError):
    pass


class ParseFailure(ExtractionError):
    pass


class EmptyExtraction(ExtractionError):
    pass


class PageExtractionFailed(ExtractionError):
    """Every extraction on the page, including the fallback, failed."""


class FallbackPolicy(str, Enum):
    ALWAYS = "always"
    ON_FAILURE_ONLY = "on_failure_only"


def build_prompt(kind: ComponentLabel) -> str:
    """The bundled prompt for a component kind, byte-exact."""
    return prompts.load(PROMPT_FILES[kind])


def _strip_fences(raw: str) -> str:
    lines = raw.strip().split("\n")
    kept = [line for line in lines if not _FENCE_RE.match(line)]
    return "\n".join(kept)


def parse_cell_triples(raw: str) -> list[CellTriple]:
    """Parse a model response into cell triples.

    Pipeline: strip code fences, slice from the first '[' to the last ']',
    parse as JSON, then validate elements. Extra keys are dropped with a
    warning; elements missing a required key, with wrong value types, or
    with an empty row/column are dropped and counted. Raises NoArrayFound,
    ParseFailure or EmptyExtraction so callers can trigger the fallback.
    """
    text = _strip_fences(raw)
    start, end = text.find("["), text.rfind("]")
    if start == -1 or end == -1 or end < start:
        raise NoArrayFound("no JSON array found in response")
    try:
        parsed = json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"invalid JSON after repair: {exc}") from exc
    if not isinstance(parsed, list):
        raise NoArrayFound(f"expected a JSON array, got {type(parsed).__name__}")

    triples: list[CellTriple] = []
    dropped = 0
    for index, element in enumerate(parsed):
        if not isinstance(element, dict) or not REQUIRED_KEYS.issubset(element):
            dropped += 1
            continue
        extra = set(element) - REQUIRED_KEYS
        if extra:
            logger.warning("cell %d: dropping extra keys %s", index, sorted(extra))
        row, column, value = element["row"], element["column"], element["value"]
        if not isinstance(row, str) or not isinstance(column, str):
            dropped += 1
            continue
        if value is not None and not isinstance(value, str):
            dropped += 1
            continue
        if not row or not column:
            dropped += 1
            continue
        triples.append(CellTriple(row=row, column=column, value=value))
    if dropped:
        logger.warning("dropped %d invalid cell element(s) of %d", dropped, len(parsed))
    if not triples:
        raise EmptyExtraction(f"no valid cell triples ({dropped} dropped, {len(parsed)} seen)")
    return triples


def extract_region(component: LayoutComponent, gateway, vlm_role: str = "vlm") -> StructuredRegion:
    """One structured region for one component: cells for tables, trimmed
    text for everything else. Errors propagate tagged with the component id."""
    from .gateway.client import ImagePart, TextPart

    prompt = build_prompt(component.label)
    image = read_image_bytes(component.crop)
    try:
        response = gateway.chat_parts(vlm_role, [TextPart(prompt), ImagePart(image)])
        if component.label is ComponentLabel.TABLE:
            cells = parse_cell_triples(response.text)
            return StructuredRegion(
                component_id=component.component_id,
                kind=ComponentLabel.TABLE,
                origin=RegionOrigin.REGION,
                cells=tuple(cells),
            )
    except Exception as exc:
        if getattr(exc, "component_id", None) is None:
            try:
                exc.component_id = component.component_id  # type: ignore[attr-defined]
            except Exception:
                pass
        raise
    origin = (
        RegionOrigin.PAGE_FALLBACK
        if component.label is ComponentLabel.PAGE
        else RegionOrigin.REGION
    )
    return StructuredRegion(
        component_id=component.component_id,
        kind=component.label,
        origin=origin,
        text=response.text.strip(),
    )


def extract_page(
    page: PageRef,
    image: ImageRef,
    components: list[LayoutComponent],
    gateway,
    policy: FallbackPolicy = FallbackPolicy.ALWAYS,
    vlm_role: str = "vlm",
) -> list[StructuredRegion]:
    """Extract every region of a page, in reading order, plus the whole-page
    component according to the fallback policy. Per-region failures are
    logged and skipped; only a page with zero successful extractions raises
    PageExtractionFailed.
    """
    regions: list[StructuredRegion] = []
    failures: list[tuple[str, Exception]] = []
    table_ids = [c.component_id for c in components if c.label is ComponentLabel.TABLE]
    failed_ids: set[str] = set()
    for component in components:
        if component.label is ComponentLabel.PAGE:
            continue  # the page component is built below, never taken from input
        try:
            regions.append(extract_region(component, gateway, vlm_role))
        except Exception as exc:
            logger.warning("%s: region extraction failed: %s", component.component_id, exc)
            failures.append((component.component_id, exc))
            failed_ids.add(component.component_id)

    if policy is FallbackPolicy.ALWAYS:
        run_fallback = True
    else:
        all_tables_failed = bool(table_ids) and all(t in failed_ids for t in table_ids)
        # also fire when nothing at all succeeded, so a degraded page still
        # yields content instead of PageExtractionFailed
        run_fallback = not components or all_tables_failed or not regions

    if run_fallback:
        try:
            page_component = fallback_component(page, image)
            regions.append(extract_region(page_component, gateway, vlm_role))
        except Exception as exc:
            logger.warning("%s: page fallback failed: %s", page.page_name, exc)
            failures.append((f"{page.page_name}_page", exc))

    if not regions:
        detail = "; ".join(f"{cid}: {err}" for cid, err in failures) or "no components"
        raise PageExtractionFailed(f"{page.page_name}: all extractions failed ({detail})")
    return regions
