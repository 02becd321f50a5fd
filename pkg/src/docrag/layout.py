"""Layout detection providers, component grouping, and the whole-page fallback.

Detection itself is delegated: either to precomputed per-page JSON files or
to an HTTP service. The pipeline never runs a layout model in-process.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import httpx
from PIL import Image

from .types import (
    BBox,
    ComponentLabel,
    ImageRef,
    LayoutComponent,
    PageRef,
    full_page_bbox,
)

logger = logging.getLogger(__name__)

# grouping heuristic (declared, not from any reference): a text/title block is
# attached to a table/figure when it sits within 3% of the page height and
# overlaps it horizontally by at least half of the narrower box
VERTICAL_GAP_FRACTION = 0.03
HORIZONTAL_OVERLAP_MIN = 0.5

_KNOWN_LABELS = {
    "table": ComponentLabel.TABLE,
    "text": ComponentLabel.TEXT,
    "title": ComponentLabel.TITLE,
    "figure": ComponentLabel.FIGURE,
    "list": ComponentLabel.LIST,
}


class LayoutUnavailable(RuntimeError):
    """Detection could not run; the caller must fall back, never abort the page."""


@dataclass(frozen=True)
class PrecomputedFiles:
    """Reads one JSON file per page, named {doc_id}_p{page_index}.layout.json."""

    dir: Path


@dataclass(frozen=True)
class HttpService:
    """POSTs the page image to a detection service (multipart, /detect)."""

    base_url: str
    timeout: float = 30.0
    # injectable for tests; a plain httpx.Client is built per call otherwise
    client: httpx.Client | None = None


LayoutProvider = Union[PrecomputedFiles, HttpService, None]


def read_image_bytes(image: ImageRef) -> bytes:
    if isinstance(image, bytes):
        return image
    return Path(image).read_bytes()


def page_size(image: ImageRef) -> tuple[int, int]:
    with Image.open(io.BytesIO(read_image_bytes(image))) as im:
        return im.width, im.height


def crop_image(image: ImageRef, bbox: BBox, size: tuple[int, int] | None = None) -> bytes:
    """PNG bytes for the bbox region. A full-page box passes the original
    bytes through untouched (no re-encode)."""
    data = read_image_bytes(image)
    width, height = size if size is not None else page_size(data)
    if bbox.x0 == 0 and bbox.y0 == 0 and bbox.x1 >= width and bbox.y1 >= height:
        return data
    with Image.open(io.BytesIO(data)) as im:
        region = im.crop((int(bbox.x0), int(bbox.y0), round(bbox.x1), round(bbox.y1)))
        buf = io.BytesIO()
        region.save(buf, format="PNG")
        return buf.getvalue()


def _components_from_payload(
    payload: dict, page: PageRef, image: ImageRef, size: tuple[int, int]
) -> list[LayoutComponent]:
    width, height = size
    entries = payload.get("components")
    if not isinstance(entries, list):
        raise LayoutUnavailable(f"{page.page_name}: layout payload missing 'components' list")
    components: list[LayoutComponent] = []
    for index, entry in enumerate(entries):
        try:
            x0, y0, x1, y1 = (float(v) for v in entry["bbox"])
            raw_label = str(entry.get("label", "text")).lower()
            score = float(entry.get("score", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutUnavailable(f"{page.page_name}: bad layout entry {index}: {exc}") from exc
        x0, x1 = max(0.0, min(x0, width)), max(0.0, min(x1, width))
        y0, y1 = max(0.0, min(y0, height)), max(0.0, min(y1, height))
        if x1 <= x0 or y1 <= y0:
            logger.warning("%s: dropping empty box after clipping (entry %d)", page.page_name, index)
            continue
        label = _KNOWN_LABELS.get(raw_label, ComponentLabel.TEXT)
        bbox = BBox(x0, y0, x1, y1)
        components.append(
            LayoutComponent(
                component_id=f"{page.page_name}_r{index}",
                page=page,
                bbox=bbox,
                label=label,
                crop=crop_image(image, bbox, size),
                confidence=min(1.0, max(0.0, score)),
            )
        )
    return components


def detect_layout(
    page: PageRef, image: ImageRef, provider: LayoutProvider
) -> list[LayoutComponent]:
    """Detected components with boxes clipped to page bounds, unknown labels
    mapped to text. Raises LayoutUnavailable on any provider failure."""
    if provider is None:
        raise LayoutUnavailable(f"{page.page_name}: no layout provider configured")

    try:
        size = page_size(image)
    except Exception as exc:
        raise LayoutUnavailable(f"{page.page_name}: unreadable page image: {exc}") from exc

    if isinstance(provider, PrecomputedFiles):
        path = Path(provider.dir) / f"{page.page_name}.layout.json"
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise LayoutUnavailable(f"{page.page_name}: cannot read {path}: {exc}") from exc
        return _components_from_payload(payload, page, image, size)

    if isinstance(provider, HttpService):
        url = provider.base_url.rstrip("/") + "/detect"
        files = {"image": (f"{page.page_name}.png", read_image_bytes(image), "image/png")}
        try:
            if provider.client is not None:
                response = provider.client.post(url, files=files)
            else:
                with httpx.Client(timeout=provider.timeout) as client:
                    response = client.post(url, files=files)
            response.raise_for_status()
            payload = response.json()
        except (httpx.HTTPError, json.JSONDecodeError, ValueError) as exc:
            raise LayoutUnavailable(f"{page.page_name}: layout service failed: {exc}") from exc
        return _components_from_payload(payload, page, image, size)

    raise LayoutUnavailable(f"unknown layout provider {provider!r}")


def _vertical_gap(a: BBox, b: BBox) -> float:
    if a.y1 <= b.y0:
        return b.y0 - a.y1
    if b.y1 <= a.y0:
        return a.y0 - b.y1
    return 0.0


def _horizontal_overlap_ratio(a: BBox, b: BBox) -> float:
    overlap = min(a.x1, b.x1) - max(a.x0, b.x0)
    narrower = min(a.width, b.width)
    if overlap <= 0 or narrower <= 0:
        return 0.0
    return overlap / narrower


def group_components(
    components: list[LayoutComponent], page_height: float | None = None
) -> list[LayoutComponent]:
    """Sort into reading order and attach nearby text/title blocks to
    tables and figures. Depends only on the set of inputs; idempotent."""
    if not components:
        return []
    ordered = sorted(components, key=lambda c: (c.bbox.y0, c.bbox.x0, c.component_id))
    if page_height is None:
        page_height = max(c.bbox.y1 for c in ordered)
    max_gap = VERTICAL_GAP_FRACTION * page_height

    texts = [c for c in ordered if c.label in (ComponentLabel.TEXT, ComponentLabel.TITLE)]
    grouped: list[LayoutComponent] = []
    for comp in ordered:
        if comp.label not in (ComponentLabel.TABLE, ComponentLabel.FIGURE):
            grouped.append(comp)
            continue
        attached = tuple(
            t.component_id
            for t in texts
            if _vertical_gap(t.bbox, comp.bbox) <= max_gap
            and _horizontal_overlap_ratio(t.bbox, comp.bbox) >= HORIZONTAL_OVERLAP_MIN
        )
        grouped.append(
            LayoutComponent(
                component_id=comp.component_id,
                page=comp.page,
                bbox=comp.bbox,
                label=comp.label,
                crop=comp.crop,
                confidence=comp.confidence,
                attached_ids=attached,
            )
        )
    return grouped


def fallback_component(page: PageRef, image: ImageRef) -> LayoutComponent:
    """Whole-page component; emitted for every page regardless of detection."""
    width, height = page_size(image)
    return LayoutComponent(
        component_id=f"{page.page_name}_page",
        page=page,
        bbox=full_page_bbox(width, height),
        label=ComponentLabel.PAGE,
        crop=image,
        confidence=1.0,
    )
