"""Builders for the offline fixture corpus used across the test suite.

The corpus is five single-page PNGs. Each page image carries an "FX:pg<i>"
marker in its trailing bytes so the mock gateway can serve page-specific
extraction fixtures; precomputed layout declares one full-page table per
page, so ingest yields a table record plus the page-fallback record per page.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

from PIL import Image


def make_png(width: int = 200, height: int = 120, color=(250, 250, 250),
             marker: bytes | None = None) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    data = buf.getvalue()
    if marker:
        data += marker
    return data


def page_cells(i: int) -> list[dict]:
    return [
        {"row": f"Alpha{i}", "column": "2019 -> Revenue", "value": f"10{i}.5"},
        {"row": f"Beta{i}", "column": "2019 -> Cost", "value": f"(2{i})"},
    ]


def fenced_cells_json(i: int) -> str:
    body = json.dumps(page_cells(i), indent=2)
    return f"```json\n{body}\n```"


def expected_table_line(i: int) -> str:
    return f"In 2019, the Alpha{i} Revenue is 10{i}.5."


@dataclass
class FixtureCorpus:
    root: Path
    manifest: Path
    config: Path
    fixtures_dir: Path
    layout_dir: Path
    qa_generation: Path
    qa_retrieval: Path
    pages: int
    doc_id: str = "rpt"


def build_fixture_corpus(root: Path, pages: int = 5, dims: int = 64,
                         workers: int = 2) -> FixtureCorpus:
    root.mkdir(parents=True, exist_ok=True)
    images_dir = root / "images"
    layout_dir = root / "layout"
    fixtures_dir = root / "fixtures"
    for d in (images_dir, layout_dir, fixtures_dir):
        d.mkdir(exist_ok=True)

    width, height = 200, 120
    manifest_pages = []
    for i in range(pages):
        image = images_dir / f"rpt_p{i}.png"
        image.write_bytes(make_png(width, height, marker=f"FX:pg{i}".encode()))
        manifest_pages.append({"doc_id": "rpt", "page_index": i, "image": f"images/rpt_p{i}.png"})
        (layout_dir / f"rpt_p{i}.layout.json").write_text(json.dumps({
            "components": [{"bbox": [0, 0, width, height], "label": "table", "score": 0.97}]
        }))
        (fixtures_dir / f"pg{i}.txt").write_text(fenced_cells_json(i), encoding="utf-8")
    (fixtures_dir / "default.txt").write_text("__ECHO__", encoding="utf-8")

    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"pages": manifest_pages}, indent=2))

    config = root / "config.json"
    config.write_text(json.dumps({
        "roles": {
            "vlm": {"base_url": "mock://fixtures", "model": "mock-vlm"},
            "llm": {"base_url": "mock://fixtures", "model": "mock-llm"},
            "judge": {"base_url": "mock://fixtures", "model": "mock-judge"},
            "embedder": {"base_url": "mock://fixtures", "model": "mock-embed", "dims": dims},
        },
        "embedder": "hashing",
        "hashing_dims": dims,
        "policy": "always",
        "rationale_mode": "template",
        "k": 10,
        "workers": workers,
        "layout": {"provider": "precomputed", "dir": "layout"},
    }, indent=2))

    qa_generation = root / "qa_generation.jsonl"
    with qa_generation.open("w", encoding="utf-8") as fh:
        for i in range(pages):
            fh.write(json.dumps({
                "question": f"What is the Alpha{i} Revenue in 2019?",
                "answers": [f"10{i}.5"],
                "doc_id": "rpt",
                "page_index": i,
            }) + "\n")

    qa_retrieval = root / "qa_retrieval.jsonl"
    with qa_retrieval.open("w", encoding="utf-8") as fh:
        for i in range(pages):
            fh.write(json.dumps({
                "question": expected_table_line(i),
                "answers": [f"10{i}.5"],
                "doc_id": "rpt",
                "page_index": i,
            }) + "\n")

    return FixtureCorpus(
        root=root,
        manifest=manifest,
        config=config,
        fixtures_dir=fixtures_dir,
        layout_dir=layout_dir,
        qa_generation=qa_generation,
        qa_retrieval=qa_retrieval,
        pages=pages,
    )
