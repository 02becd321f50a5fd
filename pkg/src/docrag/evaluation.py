"""QA evaluation: exact-match accuracy, judge-confidence scoring (L3Score),
and MRR@10 retrieval ranking, plus the eval drivers that run them over a
QA corpus.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .gateway.client import Gateway, TextPart
from .gateway.config import ConfigError
from .pipeline import build_generation_prompt
from .store import Embedder, RagStore, RetrievalHit, retrieve_top_k
from .types import PageRef

logger = logging.getLogger(__name__)

JUDGE_PROMPT_FILE = "judge.txt"


class JudgeUnsupported(RuntimeError):
    """The judge endpoint did not return token logprobs."""


@dataclass(frozen=True)
class QaItem:
    question: str
    answers: tuple[str, ...]
    gold: PageRef

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValueError("QA item needs at least one answer")


def load_qa(path: Path | str) -> list[QaItem]:
    """QA corpus: JSONL lines {"question", "answers": [...], "doc_id", "page_index"}."""
    path = Path(path)
    items: list[QaItem] = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read QA file {path}: {exc}") from exc
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            items.append(
                QaItem(
                    question=str(raw["question"]),
                    answers=tuple(str(a) for a in raw["answers"]),
                    gold=PageRef(doc_id=str(raw["doc_id"]), page_index=int(raw["page_index"])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad QA line {number} in {path}: {exc}") from exc
    return items


def normalize_answer(s: str) -> str:
    """Compatibility-normalize, lowercase, strip everything but letters,
    digits and whitespace, and collapse whitespace runs."""
    text = unicodedata.normalize("NFKC", s).lower()
    kept = [ch if ch.isalnum() else (" " if ch.isspace() else "") for ch in text]
    return " ".join("".join(kept).split())


def exact_match(response: str, golds: list[str] | tuple[str, ...]) -> bool:
    """True iff every normalized gold answer appears in the normalized response."""
    if not golds:
        raise ValueError("exact_match requires at least one gold answer")
    normalized = normalize_answer(response)
    return all(normalize_answer(gold) in normalized for gold in golds)


@dataclass
class PerItem:
    index: int
    value: float
    rank: int | None = None
    matched: bool | None = None

    def to_json_obj(self) -> dict:
        out: dict = {"index": self.index, "value": self.value}
        if self.rank is not None:
            out["rank"] = self.rank
        if self.matched is not None:
            out["matched"] = self.matched
        return out


@dataclass
class EvalReport:
    metric: str
    value: float
    per_item: list[PerItem]
    stderr: float
    skipped: list[dict] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "stderr": self.stderr,
            "count": len(self.per_item),
            "skipped": self.skipped,
            "per_item": [p.to_json_obj() for p in self.per_item],
        }


def _report(metric: str, per_item: list[PerItem], skipped: list[dict] | None = None) -> EvalReport:
    if not per_item:
        raise ValueError(f"{metric}: no items evaluated")
    values = [p.value for p in per_item]
    mean = sum(values) / len(values)
    stderr = statistics.stdev(values) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return EvalReport(
        metric=metric, value=mean, per_item=per_item, stderr=stderr, skipped=skipped or []
    )


def mrr_at_10(
    per_query_hits: list[list[tuple[RetrievalHit, PageRef]]],
    golds: list[PageRef],
) -> EvalReport:
    """Mean over queries of 1/rank of the first hit on the gold page within
    the top 10, else 0."""
    if len(per_query_hits) != len(golds):
        raise ValueError("hits and golds must have equal length")
    per_item: list[PerItem] = []
    for index, (hits, gold) in enumerate(zip(per_query_hits, golds)):
        if len(hits) > 10:
            raise ValueError(f"query {index}: more than 10 hits")
        first_rank: int | None = None
        for hit, page in hits:
            if hit.rank < 1:
                raise ValueError(f"query {index}: invalid rank {hit.rank}")
            if page == gold and first_rank is None:
                first_rank = hit.rank
        value = 1.0 / first_rank if first_rank is not None else 0.0
        per_item.append(PerItem(index=index, value=value, rank=first_rank))
    return _report("mrr@10", per_item)


def _token_probability(entry, wanted: str) -> float:
    pool = [(entry.token, entry.logprob)] + [
        (alt.token, alt.logprob) for alt in entry.top_alternatives
    ]
    best: float | None = None
    for token, logprob in pool:
        if token.strip().lower() == wanted:
            best = logprob if best is None else max(best, logprob)
    return math.exp(best) if best is not None else 0.0


def l3score(
    candidate: str,
    gold: str,
    question: str,
    gateway: Gateway,
    judge_role: str = "judge",
    prompt_template: str | None = None,
) -> float:
    """Judge-confidence score in [0,1] from the yes/no token probabilities of
    an equivalence judgment: p_yes when yes dominates, 1 - p_no otherwise,
    0 when neither token appears."""
    template = prompt_template if prompt_template is not None else prompts.load(JUDGE_PROMPT_FILE)
    prompt = template.format(question=question, gold=gold, candidate=candidate)
    response = gateway.chat_parts(judge_role, [TextPart(prompt)], want_logprobs=True)
    if not response.token_logprobs:
        raise JudgeUnsupported(f"judge role {judge_role!r} returned no token logprobs")
    first = response.token_logprobs[0]
    p_yes = _token_probability(first, "yes")
    p_no = _token_probability(first, "no")
    if p_yes == 0.0 and p_no == 0.0:
        return 0.0
    if p_yes >= p_no:
        return min(1.0, p_yes)
    return min(1.0, max(0.0, 1.0 - p_no))


def run_retrieval_eval(
    store: RagStore,
    qa_items: list[QaItem],
    embedder: Embedder,
    k: int = 10,
) -> EvalReport:
    """Retrieve top-k for each question and score MRR@10 against gold pages."""
    if not qa_items:
        raise ValueError("no QA items to evaluate")
    per_query: list[list[tuple[RetrievalHit, PageRef]]] = []
    for item in qa_items:
        hits = retrieve_top_k(item.question, store, k, embedder)
        per_query.append([(h, store.get(h.record_id).rationale.page) for h in hits])
    return mrr_at_10(per_query, [item.gold for item in qa_items])


def run_generation_eval(
    store: RagStore,
    qa_items: list[QaItem],
    gateway: Gateway,
    embedder: Embedder,
    *,
    metric: str = "accuracy",
    context: str = "gold_page",
    k: int = 10,
    llm_role: str = "llm",
    judge_role: str = "judge",
    workers: int = 4,
) -> EvalReport:
    """Generate an answer per QA item and score it.

    context="gold_page" prompts with every rationale of the item's gold page
    (the ground-truth-document protocol); context="retrieval" prompts with
    the top-k retrieved rationales. Items whose gold page is absent from the
    store are skipped and reported.
    """
    if metric not in ("accuracy", "l3score"):
        raise ValueError(f"unknown generation metric {metric!r}")
    if context not in ("gold_page", "retrieval"):
        raise ValueError(f"unknown context mode {context!r}")
    if not qa_items:
        raise ValueError("no QA items to evaluate")

    def evaluate(indexed: tuple[int, QaItem]) -> tuple[int, PerItem | None, dict | None]:
        index, item = indexed
        if context == "gold_page":
            records = store.records_for_page(item.gold)
            if not records:
                return index, None, {"index": index, "reason": "gold page not in store"}
            texts = [r.rationale.text for r in records]
        else:
            hits = retrieve_top_k(item.question, store, k, embedder)
            texts = [store.get(h.record_id).rationale.text for h in hits]
        prompt = build_generation_prompt(texts, item.question)
        response = gateway.chat_parts(llm_role, [TextPart(prompt)])
        if metric == "accuracy":
            matched = exact_match(response.text, item.answers)
            return index, PerItem(index=index, value=1.0 if matched else 0.0, matched=matched), None
        score = l3score(response.text, item.answers[0], item.question, gateway, judge_role)
        return index, PerItem(index=index, value=score), None

    indexed_items = list(enumerate(qa_items))
    if workers <= 1 or len(indexed_items) <= 1:
        results = [evaluate(pair) for pair in indexed_items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, indexed_items))

    results.sort(key=lambda r: r[0])
    per_item = [r[1] for r in results if r[1] is not None]
    skipped = [r[2] for r in results if r[2] is not None]
    return _report(metric, per_item, skipped)
