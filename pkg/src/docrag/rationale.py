"""Turn structured regions into natural-language rationales for embedding.

Tables go through either a deterministic sentence templater or the language
model; the templater doubles as the validator and fallback for model output.
Non-table regions pass their extracted text through untouched.
"""

from __future__ import annotations

import json
import logging
import re

from . import prompts
from .types import (
    CellTriple,
    ComponentLabel,
    MalformedHeaderPath,
    PageRef,
    Rationale,
    RationaleMode,
    StructuredRegion,
    parse_header_path,
)

logger = logging.getLogger(__name__)

MISSING_VALUE_TEXT = "not specified"
LLM_PROMPT_FILE = "llm_table.txt"

# a lone header like "2019 $ million" reads as year + measure
_YEAR_PREFIX_RE = re.compile(r"^([12]\d{3})\s+(\S.*)$")


def _verb(last_level: str) -> str:
    return "are" if last_level.lower().endswith("s") else "is"


def render_cell_sentence(cell: CellTriple) -> str:
    """One sentence for one cell, following the worked mapping:

    1 level:   The {row} {L1} is {value}.
    2 levels:  In {L1}, the {row} {L2} is {value}.
    3+ levels: In {L2} of {L1}[, {L3}...], the {row} {Ln} is {value}.

    with "are" for plural-looking last levels and "not specified" for blanks.
    A single-level header starting with a four-digit year splits into the
    year clause plus the remainder.
    """
    try:
        levels = parse_header_path(cell.column).levels
    except MalformedHeaderPath:
        # a column that does not parse (stray separators) is used whole
        levels = (cell.column,)
    if len(levels) == 1:
        year_split = _YEAR_PREFIX_RE.match(levels[0])
        if year_split:
            levels = (year_split.group(1), year_split.group(2))
    value = cell.value if cell.value is not None else MISSING_VALUE_TEXT
    last = levels[-1]
    verb = _verb(last)
    if len(levels) == 1:
        return f"The {cell.row} {last} {verb} {value}."
    if len(levels) == 2:
        return f"In {levels[0]}, the {cell.row} {last} {verb} {value}."
    middles = "".join(f", {level}" for level in levels[2:-1])
    return f"In {levels[1]} of {levels[0]}{middles}, the {cell.row} {last} {verb} {value}."


def template_rationale(cells: list[CellTriple]) -> str:
    """One line per cell, input order preserved. Deterministic."""
    if not cells:
        raise ValueError("template_rationale requires at least one cell")
    return "\n".join(render_cell_sentence(cell) for cell in cells)


def _cells_payload(cells: tuple[CellTriple, ...]) -> str:
    lines = [json.dumps(c.to_json_obj(), ensure_ascii=False) for c in cells]
    return "[\n" + ",\n".join(lines) + "\n]"


def _valid_model_output(text: str, cells: tuple[CellTriple, ...]) -> bool:
    lines = [line for line in text.strip().split("\n") if line.strip()]
    if len(lines) != len(cells):
        return False
    for line, cell in zip(lines, cells):
        if cell.value is not None and cell.value not in line:
            return False
    return True


def rationalize(
    region: StructuredRegion,
    page: PageRef,
    gateway=None,
    llm_role: str = "llm",
    mode: RationaleMode = RationaleMode.TEMPLATE,
) -> Rationale:
    """Rationale for one region.

    Tables render via the templater, or via the language model when
    mode=MODEL; invalid or failed model output falls back to the templater
    rather than erroring. Everything else is passed through verbatim.
    """
    if region.kind is not ComponentLabel.TABLE:
        return Rationale(
            rationale_id=region.component_id,
            page=page,
            component_id=region.component_id,
            origin=region.origin,
            text=region.text or "",
            mode=RationaleMode.PASSTHROUGH,
        )

    text: str | None = None
    used_mode = RationaleMode.TEMPLATE
    if mode is RationaleMode.MODEL and gateway is not None:
        from .gateway.client import TextPart

        prompt = prompts.load(LLM_PROMPT_FILE) + "\n\nInput:\n" + _cells_payload(region.cells)
        try:
            response = gateway.chat_parts(llm_role, [TextPart(prompt)])
            if _valid_model_output(response.text, region.cells):
                text = response.text.strip()
                used_mode = RationaleMode.MODEL
            else:
                logger.warning("%s: model rationale failed validation; using template",
                               region.component_id)
        except Exception as exc:
            logger.warning("%s: model rationale unavailable (%s); using template",
                           region.component_id, exc)
    if text is None:
        text = template_rationale(list(region.cells))
    return Rationale(
        rationale_id=region.component_id,
        page=page,
        component_id=region.component_id,
        origin=region.origin,
        text=text,
        mode=used_mode,
    )
