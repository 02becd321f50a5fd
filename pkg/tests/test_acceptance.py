"""Acceptance suite: one test per release criterion, each printing a PASS
line (a pytest failure is the corresponding FAIL line).

Run with: pytest tests/test_acceptance.py -v -s
"""

from __future__ import annotations

import hashlib
import json
import random
import subprocess
import sys
import time

from corpus_helpers import build_fixture_corpus
from docrag import prompts
from docrag.evaluation import exact_match, l3score, mrr_at_10, run_retrieval_eval, QaItem
from docrag.extraction import build_prompt, parse_cell_triples
from docrag.gateway.client import ChatResponse, TokenAlternative, TokenLogprob
from docrag.rationale import render_cell_sentence, template_rationale
from docrag.store import (
    HashingEmbedder,
    RetrievalHit,
    build_store,
    load as load_store,
    persist,
    retrieve_top_k,
)
from docrag.types import CellTriple, ComponentLabel, PageRef, Rationale, RationaleMode, RegionOrigin

# ---------------------------------------------------------------------------
# frozen oracle data

GOLDEN_16_INPUT = [
    ("Sales", "2024 -> Q1 -> Revenue", "1,000"),
    ("Sales", "2024 -> Q1 -> Profit", "300"),
    ("Sales", "2024 -> Q2 -> Revenue", "900"),
    ("Sales", "2024 -> Q2 -> Profit", "250"),
    ("Sales", "2023 -> Revenue", "1,700"),
    ("Sales", "2023 -> Profit", "550"),
    ("Sales", "Growth %", "12%"),
    ("Sales", "Notes", "N/A"),
    ("Cost", "2024 -> Q1 -> Revenue", "(200)"),
    ("Cost", "2024 -> Q1 -> Profit", "(50)"),
    ("Cost", "2024 -> Q2 -> Revenue", "-180"),
    ("Cost", "2024 -> Q2 -> Profit", "-40"),
    ("Cost", "2023 -> Revenue", "(380)"),
    ("Cost", "2023 -> Profit", "(90)"),
    ("Cost", "Growth %", "N/A"),
    ("Cost", "Notes", "Adjusted"),
]

GOLDEN_16_OUTPUT = """\
In Q1 of 2024, the Sales Revenue is 1,000.
In Q1 of 2024, the Sales Profit is 300.
In Q2 of 2024, the Sales Revenue is 900.
In Q2 of 2024, the Sales Profit is 250.
In 2023, the Sales Revenue is 1,700.
In 2023, the Sales Profit is 550.
The Sales Growth % is 12%.
The Sales Notes are N/A.
In Q1 of 2024, the Cost Revenue is (200).
In Q1 of 2024, the Cost Profit is (50).
In Q2 of 2024, the Cost Revenue is -180.
In Q2 of 2024, the Cost Profit is -40.
In 2023, the Cost Revenue is (380).
In 2023, the Cost Profit is (90).
The Cost Growth % is N/A.
The Cost Notes are Adjusted."""

REPAIR_CORPUS = """\
```json
[
    {"row": "Non-current assets", "column": "2019 $ million", "value": "196.9"},
    {"row": "Non-current assets", "column": "2018 $ million", "value": "184.6"},
    {"row": "Americas", "column": "2019 $ million", "value": "7.4"},
    {"row": "Asia Pacific", "column": "2019 $ million", "value": "11.5"},
    {"row": "Europe, Middle East and Africa", "column": "2019 $ million", "value": "215.8"},
    {"row": "Non-current assets", "column": "2018 $ million", "value": "4.4"},
    {"row": "Americas", "column": "2018 $ million", "value": "5.1"},
    {"row": "Asia Pacific", "column": "2018 $ million", "value": "194.1"}
]
```"""

# sha256 of the bundled prompt fixtures, frozen at authoring time
PROMPT_CHECKSUMS = {
    "table.txt": "5824028dbd10dab0088ed46302174ad0498da4aa524d8d1fb1e3918101677110",
    "text.txt": "ccecf605febb12ec36c40975f891869ca2fc77de2e2c02a13eb9ec16c3e11860",
    "title.txt": "0c2e1f6c4e4b7c6ecc556e6e1e32bb1de790a733c447d369b7426be8c8ec5bac",
    "figure.txt": "7de230b3ca828f914ee00b85525bfcc189139900e17c278b8555bca9a6e3bb28",
    "page.txt": "5d50303c178a95be3eb59072732a64e91214516fd98d1c192e50091d451cfe1a",
    "llm_table.txt": "a9bbb4b7f82eb0d7bf1978c44779ff4889657b555c5f31f0aca7b2e5f585cf24",
}


def ok(name: str) -> None:
    print(f"\nACCEPTANCE PASS: {name}")


# ---------------------------------------------------------------------------


def test_templater_golden_sixteen_lines():
    cells = [CellTriple(row=r, column=c, value=v) for r, c, v in GOLDEN_16_INPUT]
    assert template_rationale(cells) == GOLDEN_16_OUTPUT
    ok("templater reproduces all 16 worked-example lines byte-exactly")


def test_repair_corpus_eight_triples_verbatim():
    triples = parse_cell_triples(REPAIR_CORPUS)
    assert len(triples) == 8
    assert [t.value for t in triples] == [
        "196.9", "184.6", "7.4", "11.5", "215.8", "4.4", "5.1", "194.1",
    ]
    assert {t.value for t in triples} == {
        "196.9", "184.6", "7.4", "11.5", "215.8", "4.4", "5.1", "194.1",
    }
    assert triples[4].row == "Europe, Middle East and Africa"
    ok("fenced extraction output repairs to exactly 8 verbatim triples")


def test_prompt_fidelity_checksums():
    for name, want in PROMPT_CHECKSUMS.items():
        got = hashlib.sha256(prompts.load(name).encode("utf-8")).hexdigest()
        assert got == want, f"prompt fixture {name} drifted"
    # build_prompt must serve the same bytes the fixtures hold
    for kind, name in (
        (ComponentLabel.TABLE, "table.txt"),
        (ComponentLabel.TEXT, "text.txt"),
        (ComponentLabel.TITLE, "title.txt"),
        (ComponentLabel.FIGURE, "figure.txt"),
        (ComponentLabel.PAGE, "page.txt"),
    ):
        assert (
            hashlib.sha256(build_prompt(kind).encode("utf-8")).hexdigest()
            == PROMPT_CHECKSUMS[name]
        )
    ok("all five extraction prompts and the LLM prompt match fixtures by checksum")


class _ScriptedJudge:
    def __init__(self, token: str, logprob: float):
        self.token = token
        self.logprob = logprob

    def chat_parts(self, role, parts, want_logprobs=False, **kwargs):
        entry = TokenLogprob(
            token=self.token,
            logprob=self.logprob,
            top_alternatives=(TokenAlternative(self.token, self.logprob),),
        )
        return ChatResponse(text=self.token, token_logprobs=(entry,))


def test_metric_kernels():
    # MRR over first-relevant ranks [1, 2, 5] -> 17/30
    gold = PageRef("d", 0)
    other = PageRef("d", 1)

    def query(first_relevant_rank: int):
        hits = []
        for rank in range(1, first_relevant_rank + 1):
            page = gold if rank == first_relevant_rank else other
            hits.append((RetrievalHit(record_id=f"r{rank}", score=0.5, rank=rank), page))
        return hits

    report = mrr_at_10([query(1), query(2), query(5)], [gold] * 3)
    assert abs(report.value - 17.0 / 30.0) < 1e-12

    # exact-match truth table
    assert exact_match("revenue was 1,234 in 2024", ["1,234"]) is True
    assert exact_match("only 1,234 appears here", ["1,234", "2024"]) is False
    assert exact_match("", ["1,234"]) is False

    # judge-confidence mock cases
    assert l3score("c", "g", "q", _ScriptedJudge("Yes", 0.0)) == 1.0
    assert l3score("c", "g", "q", _ScriptedJudge("No", 0.0)) == 0.0
    assert l3score("c", "g", "q", _ScriptedJudge("Maybe", 0.0)) == 0.0
    ok("metric kernels: MRR=17/30 within 1e-12, exact-match truth table, l3score {1,0,0}")


def _synthetic_tables(count: int = 50, cells_per_table: int = 4):
    tables = []
    for i in range(count):
        cells = [
            CellTriple(
                row=f"entry{i}x{j}",
                column=f"yr{i} -> field{i}u{j}",
                value=f"{i * 10 + j}.{j}",
            )
            for j in range(cells_per_table)
        ]
        tables.append(cells)
    return tables


def test_retrieval_closed_loop_50_tables():
    started = time.monotonic()
    tables = _synthetic_tables(50)
    rationales = [
        Rationale(
            rationale_id=f"t{i:03d}",
            page=PageRef("synth", i),
            component_id=f"t{i:03d}",
            origin=RegionOrigin.REGION,
            text=template_rationale(cells),
            mode=RationaleMode.TEMPLATE,
        )
        for i, cells in enumerate(tables)
    ]
    embedder = HashingEmbedder(256)
    store = build_store(rationales, embedder)

    items = []
    for i, cells in enumerate(tables):
        quoted_line = render_cell_sentence(cells[i % len(cells)])
        assert quoted_line in store.get(f"t{i:03d}").rationale.text
        items.append(QaItem(question=quoted_line, answers=["-"], gold=PageRef("synth", i)))

    report = run_retrieval_eval(store, items, embedder, k=10)
    assert report.value == 1.0

    # determinism: rebuilding from a shuffled rationale list changes nothing
    shuffled = rationales[:]
    random.Random(99).shuffle(shuffled)
    rebuilt = build_store(shuffled, embedder)
    for item in items:
        assert retrieve_top_k(item.question, rebuilt, 10, embedder) == retrieve_top_k(
            item.question, store, 10, embedder
        )

    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"closed loop took {elapsed:.1f}s"
    ok(f"retrieval closed loop: MRR@10=1.0 over 50 tables, shuffle-stable, {elapsed:.1f}s")


def _run_cli(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "docrag.cli", *args],
        capture_output=True,
        text=True,
        timeout=120,
    )


def test_end_to_end_offline_cli(tmp_path):
    started = time.monotonic()
    corpus = build_fixture_corpus(tmp_path / "corpus")
    out_store = tmp_path / "ragstore.jsonl"

    # endpoints use the in-process mock transport (mock:// scheme); nothing
    # leaves the machine
    ingest = _run_cli(
        "ingest",
        "--manifest", str(corpus.manifest),
        "--config", str(corpus.config),
        "--store", str(out_store),
        "--json",
    )
    assert ingest.returncode == 0, ingest.stderr or ingest.stdout
    report = json.loads(ingest.stdout)["report"]
    assert report["records"] >= 1

    loaded = load_store(out_store)
    round_trip = tmp_path / "round_trip.jsonl"
    persist(loaded, round_trip)
    assert load_store(round_trip) == loaded
    assert round_trip.read_bytes() == out_store.read_bytes()

    evaluated = _run_cli(
        "eval",
        "--mode", "generation",
        "--store", str(out_store),
        "--qa", str(corpus.qa_generation),
        "--config", str(corpus.config),
        "--json",
    )
    assert evaluated.returncode == 0, evaluated.stderr or evaluated.stdout
    result = json.loads(evaluated.stdout)
    assert result["metric"] == "accuracy"
    assert result["value"] == 1.0

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"end-to-end run took {elapsed:.1f}s"
    ok(f"offline CLI ingest+eval: exit 0, store round-trips, accuracy 1.0, {elapsed:.1f}s")


def test_store_properties_thousand_records():
    rng = random.Random(314159)
    vocab = [f"term{i}" for i in range(80)]
    rationales = []
    for i in range(1000):
        text = " ".join(rng.choices(vocab, k=rng.randint(1, 12)))
        rationales.append(
            Rationale(
                rationale_id=f"r{i:04d}",
                page=PageRef("prop", i),
                component_id=f"r{i:04d}",
                origin=RegionOrigin.REGION,
                text=text,
                mode=RationaleMode.TEMPLATE,
            )
        )
    embedder = HashingEmbedder(128)
    store = build_store(rationales, embedder)
    assert len(store) == 1000

    queries = [" ".join(rng.choices(vocab, k=5)) for _ in range(10)] + ["term0", "no overlap zz"]
    for query in queries:
        for k in (1, 7, 40):
            head = retrieve_top_k(query, store, k, embedder)
            extended = retrieve_top_k(query, store, k + 5, embedder)
            assert extended[:len(head)] == head, "top-k prefix changed with larger k"
            assert all(-1.0 <= h.score <= 1.0 for h in extended), "cosine out of bounds"
            for a, b in zip(extended, extended[1:]):
                assert a.score >= b.score, "scores not descending"
                if a.score == b.score:
                    assert a.record_id < b.record_id, "tie not broken by record_id"
        # determinism across repeated calls
        assert retrieve_top_k(query, store, 25, embedder) == retrieve_top_k(
            query, store, 25, embedder
        )
    ok("1000-record store: top-k monotonicity, tie determinism, cosine bounds")
