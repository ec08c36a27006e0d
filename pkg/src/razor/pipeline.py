"""Greedy debiasing loop: score, rank, rewrite the top-k, replace, repeat.

Each iteration freezes corpus statistics and embeddings, selects the k
highest-scoring documents, generates and verifies rewrite candidates for
them, and commits replacements one at a time against a live per-class
unit-vector ledger. Gated on strict per-document improvement, every commit
raises the cross-class alignment objective, so the objective measured on the
iteration's own embeddings never decreases.

The loop stops when an iteration makes no replacements, when the relative
objective improvement falls below epsilon, or at the iteration cap.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .corpus import (
    Dataset,
    LabeledDocument,
    TokenizerConfig,
    load_dataset,
    replace_text,
    save_dataset,
)
from .errors import BackendError, ConfigError
from .rewriter import (
    GeneratorConfig,
    PromptTemplate,
    RewriteCandidate,
    generate_candidates,
    select_replacement,
    verify_label,
)
from .surface import (
    DEFAULT_LAMBDA,
    class_alignment_objective,
    class_unit_sums,
    compute_embeddings,
    corpus_stats,
    shortcut_scores,
    surface_embedding,
)

log = logging.getLogger("razor")

STOP_CONVERGED = "converged"
STOP_NO_REPLACEMENTS = "no-replacements"
STOP_MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class RunConfig:
    """Loop parameters. ``k`` is either an absolute document count (int) or a
    fraction of the dataset (float in (0, 1]); the default rewrites 10% of
    the documents per iteration."""

    k: float = 0.1
    lam: int = DEFAULT_LAMBDA
    epsilon: float = 1e-4
    max_iterations: int = 10
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.k, float) and not self.k.is_integer():
            if not (0.0 < self.k <= 1.0):
                raise ConfigError(f"fractional k must be in (0, 1], got {self.k}")
        elif int(self.k) < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.lam <= 0 or self.lam % 2 != 0:
            raise ConfigError(f"encoding width must be a positive even integer, got {self.lam}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


def resolve_k(k: float, n_documents: int) -> int:
    """Concrete per-iteration selection size for a dataset of ``n_documents``."""
    if isinstance(k, float) and not k.is_integer():
        return max(1, int(k * n_documents))
    return int(k)


@dataclass
class IterationTrace:
    """Observability record for one iteration. ``replaced_ids`` and
    ``kept_ids`` partition ``selected_ids``."""

    iteration: int
    objective_before: float
    objective_after: float
    selected_ids: list[str]
    replaced_ids: list[str]
    kept_ids: list[str]
    llm_calls: dict[str, int]
    wall_time: float
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "IterationTrace":
        return cls(**data)


class RewriteJournal:
    """Per-iteration record of generated candidates, keyed by document id.

    Flushed after each document completes, so an aborted run can resume
    without re-querying the backend for documents already processed.
    """

    def __init__(self, path: Optional[Path] = None):
        self.path = path
        self._entries: dict[str, list[dict]] = {}
        self._lock = threading.Lock()
        if path is not None and path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    self._entries[row["doc_id"]] = row["candidates"]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._entries

    def get(self, doc_id: str) -> list[dict]:
        return self._entries[doc_id]

    def record(self, doc_id: str, candidates: list[dict]) -> None:
        with self._lock:
            self._entries[doc_id] = candidates
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"doc_id": doc_id, "candidates": candidates}) + "\n")
                    fh.flush()


def rank_and_select(dataset: Dataset, embeddings, k: int) -> list[str]:
    """Ids of the k highest-scoring documents, score-descending with ascending
    id as the tie-break. Selects every scoreable document (with a warning)
    when fewer than k exist."""
    scores = shortcut_scores(dataset, embeddings)
    ranked = sorted(scores, key=lambda doc_id: (-scores[doc_id], doc_id))
    if len(ranked) < k:
        log.warning("only %d scoreable documents for k=%d; selecting all", len(ranked), k)
        return ranked
    return ranked[:k]


def _gather_candidates(
    dataset: Dataset,
    selected: list[str],
    backend,
    config: RunConfig,
    journal: RewriteJournal,
    template: Optional[PromptTemplate],
) -> dict[str, list[dict]]:
    """Generate and verify candidates for each selected document, replaying
    journaled documents without touching the backend."""
    docs = {doc.id: doc for doc in dataset}
    label_names = dict(dataset.label_names)

    def process(doc_id: str) -> tuple[str, list[dict]]:
        if doc_id in journal:
            return doc_id, journal.get(doc_id)
        doc = docs[doc_id]
        texts = generate_candidates(
            doc, backend, config.generator, label_names, template, dataset.schema
        )
        candidates = [
            {
                "text": text,
                "verified": verify_label(
                    text, doc, backend, config.generator, label_names, template, dataset.schema
                ),
            }
            for text in texts
        ]
        journal.record(doc_id, candidates)
        return doc_id, candidates

    results: dict[str, list[dict]] = {}
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            for doc_id, candidates in pool.map(process, selected):
                results[doc_id] = candidates
    else:
        for doc_id in selected:
            doc_id, candidates = process(doc_id)
            results[doc_id] = candidates
    return results


def run_iteration(
    dataset: Dataset,
    config: RunConfig,
    backend,
    iteration: int = 1,
    journal: Optional[RewriteJournal] = None,
    template: Optional[PromptTemplate] = None,
) -> tuple[Dataset, IterationTrace]:
    """One pass of the loop. Returns the (possibly unchanged) dataset and the
    iteration's trace; on backend failure the dataset is returned unchanged
    and the trace records the error."""
    start = time.monotonic()
    journal = journal if journal is not None else RewriteJournal()
    stats = corpus_stats(dataset, generation_stamp=iteration)
    embeddings = compute_embeddings(dataset, stats, config.lam)
    objective_before = class_alignment_objective(dataset, embeddings)
    k = resolve_k(config.k, len(dataset))
    selected = rank_and_select(dataset, embeddings, k)

    calls_before = {"generate": backend.calls.count("generate"), "verify": backend.calls.count("verify")}

    def call_delta() -> dict[str, int]:
        return {
            "generate": backend.calls.count("generate") - calls_before["generate"],
            "verify": backend.calls.count("verify") - calls_before["verify"],
        }

    try:
        candidate_map = _gather_candidates(dataset, selected, backend, config, journal, template)
    except BackendError as exc:
        log.error("iteration %d aborted: %s", iteration, exc)
        trace = IterationTrace(
            iteration=iteration,
            objective_before=objective_before,
            objective_after=objective_before,
            selected_ids=list(selected),
            replaced_ids=[],
            kept_ids=list(selected),
            llm_calls=call_delta(),
            wall_time=time.monotonic() - start,
            error=str(exc),
        )
        return dataset, trace

    # Commit replacements one at a time against a live per-class unit-vector
    # ledger: each strict improvement raises the pair objective, so the whole
    # iteration is monotone even when both sides of a class pair are rewritten.
    sums, counts = class_unit_sums(dataset, embeddings)
    docs = {doc.id: doc for doc in dataset}
    replaced: dict[str, LabeledDocument] = {}
    replaced_ids: list[str] = []
    kept_ids: list[str] = []
    for doc_id in selected:
        doc = docs[doc_id]
        opposite_sum = None
        opposite_count = 0
        for label, vec in sums.items():
            if label == doc.label:
                continue
            opposite_sum = vec.copy() if opposite_sum is None else opposite_sum + vec
            opposite_count += counts[label]
        if opposite_sum is None or opposite_count == 0:
            kept_ids.append(doc_id)
            continue
        accepted = [
            RewriteCandidate(c["text"], True)
            for c in candidate_map.get(doc_id, [])
            if c["verified"]
        ]
        decision = select_replacement(
            doc,
            accepted,
            stats,
            opposite_sum,
            opposite_count,
            embeddings[doc_id],
            config.lam,
            config.tokenizer,
        )
        if not decision.replaced:
            kept_ids.append(doc_id)
            continue
        new_doc = replace_text(doc, decision.candidate.text, config.tokenizer)
        new_emb = surface_embedding(new_doc, stats, config.lam, unseen_df=1)
        sums[doc.label] = sums[doc.label] - embeddings[doc_id].unit + new_emb.unit
        embeddings[doc_id] = new_emb
        replaced[doc_id] = new_doc
        replaced_ids.append(doc_id)

    labels = sorted(sums)
    objective_after = 0.0
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            objective_after += float(sums[a] @ sums[b])

    new_dataset = dataset.with_documents(
        replaced.get(doc.id, doc) for doc in dataset
    )
    trace = IterationTrace(
        iteration=iteration,
        objective_before=objective_before,
        objective_after=objective_after,
        selected_ids=list(selected),
        replaced_ids=replaced_ids,
        kept_ids=kept_ids,
        llm_calls=call_delta(),
        wall_time=time.monotonic() - start,
    )
    return new_dataset, trace


@dataclass
class RunResult:
    dataset: Dataset
    traces: list[IterationTrace]
    stop_reason: str


class Checkpoint:
    """Run state on disk: iteration-numbered dataset snapshots, per-iteration
    rewrite journals, and a trace file with the accumulated iteration traces
    and stop reason."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def snapshot_path(self, iteration: int) -> Path:
        return self.directory / f"iteration_{iteration:03d}.jsonl"

    def journal_path(self, iteration: int) -> Path:
        return self.directory / f"journal_{iteration:03d}.jsonl"

    @property
    def trace_path(self) -> Path:
        return self.directory / "trace.json"

    def write_snapshot(self, dataset: Dataset, iteration: int) -> None:
        save_dataset(dataset, self.snapshot_path(iteration))

    def write_traces(self, traces: list[IterationTrace], stop_reason: Optional[str]) -> None:
        payload = {
            "stop_reason": stop_reason,
            "iterations": [t.to_dict() for t in traces],
        }
        with open(self.trace_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    def completed_iterations(self) -> int:
        last = -1
        for path in sorted(self.directory.glob("iteration_*.jsonl")):
            try:
                last = max(last, int(path.stem.split("_")[1]))
            except (IndexError, ValueError):
                continue
        return last

    def load_state(
        self, dataset: Dataset
    ) -> tuple[Dataset, list[IterationTrace], Optional[str], int]:
        """Resume point: (current dataset, completed traces, stop reason, last
        completed iteration). Falls back to the given input dataset when the
        directory holds no snapshots."""
        last = self.completed_iterations()
        traces: list[IterationTrace] = []
        stop_reason = None
        if self.trace_path.exists():
            with open(self.trace_path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            stop_reason = payload.get("stop_reason")
            traces = [
                IterationTrace.from_dict(t)
                for t in payload.get("iterations", [])
                if t.get("error") is None and t.get("iteration", 0) <= last
            ]
        if last < 0:
            return dataset, [], None, -1
        current = load_dataset(
            self.snapshot_path(last),
            dataset.schema,
            dataset.label_names,
        )
        return current, traces, stop_reason, last


def run_razor(
    dataset: Dataset,
    config: RunConfig,
    backend,
    checkpoint: Optional[Checkpoint] = None,
    template: Optional[PromptTemplate] = None,
) -> RunResult:
    """Iterate :func:`run_iteration` to convergence, checkpointing after every
    iteration. If the checkpoint directory already holds state, the run
    resumes from it, replaying any partially journaled iteration instead of
    repeating its backend calls. Raises BackendError (checkpoint intact) when
    the backend gives out mid-run."""
    traces: list[IterationTrace] = []
    start_iteration = 1
    if checkpoint is not None:
        dataset, traces, stop_reason, last = checkpoint.load_state(dataset)
        if stop_reason == STOP_MAX_ITERATIONS and config.max_iterations > last:
            log.info("checkpoint stopped at its iteration cap (%d); continuing", last)
        elif stop_reason is not None:
            log.info("checkpoint already finished (%s); returning its result", stop_reason)
            return RunResult(dataset, traces, stop_reason)
        if last < 0:
            checkpoint.write_snapshot(dataset, 0)
            last = 0
        start_iteration = last + 1

    stop_reason = STOP_MAX_ITERATIONS
    for iteration in range(start_iteration, config.max_iterations + 1):
        journal = RewriteJournal(checkpoint.journal_path(iteration) if checkpoint else None)
        dataset_next, trace = run_iteration(
            dataset, config, backend, iteration, journal, template
        )
        traces.append(trace)
        if trace.error is not None:
            if checkpoint is not None:
                checkpoint.write_traces(traces, None)
            raise BackendError(trace.error)
        dataset = dataset_next
        if checkpoint is not None:
            checkpoint.write_snapshot(dataset, iteration)
            checkpoint.write_traces(traces, None)
        if not trace.replaced_ids:
            stop_reason = STOP_NO_REPLACEMENTS
            break
        improvement = trace.objective_after - trace.objective_before
        if improvement / max(1.0, abs(trace.objective_before)) < config.epsilon:
            stop_reason = STOP_CONVERGED
            break

    if checkpoint is not None:
        checkpoint.write_traces(traces, stop_reason)
    return RunResult(dataset, traces, stop_reason)
