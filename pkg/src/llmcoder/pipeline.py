"""Execute a promptbook over a corpus: render, call, strictly parse, validate,
and persist one structured row per document with a full audit trail.

Run directory layout (all append-only while running):

    table.csv      one row per document; header = doc_id, status, variables
    raw_log.jsonl  one CallRecord per line, every invocation ever made
    processed.txt  one doc id per line; the recovery source of truth
    manifest.json  run identity, config snapshot, counts

Workers render/call/parse concurrently; a single writer emits rows in corpus
order, so the finished table is byte-identical for any worker count and an
interrupted run resumed later converges to the uninterrupted result.
"""

from __future__ import annotations

import csv
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__ as TOOL_VERSION
from .corpus import Corpus, sample
from .gateway import CallRecord, Gateway, ModelConfig
from .promptbook import (
    MISSING,
    OutputSchema,
    Promptbook,
    ResponseEnvelopeError,
    ValidatedRecord,
    render_prompt,
    schema_of,
    validate_record,
)

REASK_INSTRUCTION = "Return only the JSON array."

ROW_STATUSES = ("ok", "violations", "failed_parse", "failed_call")

_FENCE_RE = re.compile(r"^```[A-Za-z]*[ \t]*\n(.*?)\s*```$", re.DOTALL)


class PipelineError(RuntimeError):
    pass


class RunAborted(PipelineError):
    """Fatal provider condition (auth failure) stopped the run."""


class ParseFailure(Exception):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind  # "non_json" | "envelope_mismatch"
        super().__init__(message or kind)


def strip_code_fence(raw: str) -> str:
    """Remove a single leading/trailing code-fence pair, nothing else."""
    text = raw.strip()
    m = _FENCE_RE.match(text)
    return m.group(1) if m else text


def parse_response(raw: str, schema: OutputSchema, doc_text: str, doc_id: str = "") -> ValidatedRecord:
    """Strict parse: one defensive fence strip, then real JSON or nothing.

    No repair, no partial acceptance; prose around the payload is a failure.
    Schema violations do not raise, they ride along in the record.
    """
    text = strip_code_fence(raw)
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseFailure("non_json", f"not JSON: {exc.msg}") from exc
    try:
        return validate_record(schema, parsed, doc_text, doc_id=doc_id)
    except ResponseEnvelopeError as exc:
        raise ParseFailure("envelope_mismatch", str(exc)) from exc


@dataclass
class Row:
    doc_id: str
    status: str
    call_id: str
    values: dict  # name -> typed value | MISSING | None
    violations: tuple = ()
    error: str | None = None  # failure kind for failed_* rows


@dataclass
class AnnotationTable:
    columns: tuple[str, ...]  # variable names in promptbook order
    rows: dict  # doc_id -> Row, in corpus order

    def counts(self) -> dict:
        out = {status: 0 for status in ROW_STATUSES}
        for row in self.rows.values():
            out[row.status] += 1
        return out


@dataclass
class RunManifest:
    run_id: str
    pilot: bool
    repeat_index: int
    promptbook_id: str
    promptbook_version: str
    promptbook_hash: str
    variables: list
    model: dict
    seed: int
    workers: int
    backend_kind: str
    corpus_digest: str
    corpus_size: int
    started: str
    finished: str
    processed_ids: list
    counts: dict
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> RunManifest:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})

    def comparable(self) -> dict:
        """Everything that must replicate across identical runs."""
        out = self.to_dict()
        out.pop("started")
        out.pop("finished")
        return out


@dataclass
class RunResult:
    table: AnnotationTable
    manifest: RunManifest
    records: list  # CallRecords written during THIS invocation
    out_dir: Path
    interrupted: bool = False


def _cell(variable_sentinels: dict, name: str, value) -> str:
    if value is MISSING:
        return variable_sentinels[name]
    if value is None:
        return ""
    return str(value)


def run_id_for(pb: Promptbook, corpus: Corpus, config: ModelConfig, seed: int, repeat_index: int, pilot: bool) -> str:
    parts = [
        pb.content_hash[:8],
        corpus.manifest_digest[:8],
        config.model_id,
        f"s{seed}",
        f"r{repeat_index}",
    ]
    if pilot:
        parts.append("pilot")
    return "-".join(parts)


class _RawLog:
    def __init__(self, path: Path):
        self._fh = path.open("a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, record: CallRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


@dataclass
class _DocOutcome:
    row: Row
    records: list = field(default_factory=list)


def _process_document(doc, system, user_template, schema, gateway, abort: threading.Event) -> _DocOutcome:
    if abort.is_set():
        raise RunAborted("aborted")
    user = user_template.replace("{document}", doc.text)
    outcome = _DocOutcome(row=Row(doc.id, "failed_call", "", {n: None for n in schema.names}))

    first = gateway.complete(system, user, tag=doc.id, call_id=f"{doc.id}#1")
    outcome.records.append(first)
    outcome.row.call_id = first.call_id
    if not first.ok:
        outcome.row.error = first.status.kind
        return outcome

    try:
        record = parse_response(first.raw_output, schema, doc.text, doc_id=doc.id)
    except ParseFailure as failure:
        # exactly one re-ask with a terse corrective instruction
        if abort.is_set():
            raise RunAborted("aborted")
        second = gateway.complete(
            system,
            user + "\n\n" + REASK_INSTRUCTION,
            tag=doc.id,
            call_id=f"{doc.id}#2",
            base_retries=1,
        )
        outcome.records.append(second)
        outcome.row.call_id = second.call_id
        if not second.ok:
            outcome.row.error = second.status.kind
            return outcome
        try:
            record = parse_response(second.raw_output, schema, doc.text, doc_id=doc.id)
        except ParseFailure as second_failure:
            outcome.row.status = "failed_parse"
            outcome.row.error = f"{failure.kind}, then {second_failure.kind}"
            return outcome

    outcome.row.values = record.values
    outcome.row.violations = record.violations
    outcome.row.status = "ok" if record.ok else "violations"
    return outcome


def _load_table_rows(path: Path) -> list[list[str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def _compact_for_resume(out_dir: Path, header: list[str], corpus: Corpus) -> list[str]:
    """Reconcile a previous partial run: keep rows that are both in the
    processed list and the table, in corpus order. Returns kept doc ids."""
    table_path = out_dir / "table.csv"
    processed_path = out_dir / "processed.txt"
    processed: set[str] = set()
    if processed_path.exists():
        processed = {
            line.strip() for line in processed_path.read_text(encoding="utf-8").splitlines() if line.strip()
        }
    rows_by_id: dict[str, list[str]] = {}
    if table_path.exists():
        existing = _load_table_rows(table_path)
        if existing and existing[0] != header:
            raise PipelineError(
                f"cannot resume: existing table header {existing[0]} does not match this promptbook"
            )
        for row in existing[1:]:
            rows_by_id[row[0]] = row
    kept: list[str] = [
        d.id for d in corpus.documents if d.id in processed and d.id in rows_by_id
    ]
    with table_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for doc_id in kept:
            writer.writerow(rows_by_id[doc_id])
    processed_path.write_text("".join(f"{i}\n" for i in kept), encoding="utf-8")
    return kept


def run(
    corpus: Corpus,
    pb: Promptbook,
    gateway: Gateway,
    out_dir: str | Path,
    workers: int = 1,
    repeat_index: int = 1,
    resume: bool = False,
    seed: int = 0,
    pilot: bool = False,
    backend_kind: str = "live",
    stop_after: int | None = None,
) -> RunResult:
    """Process every corpus document through the promptbook.

    Exactly one row per document lands in table.csv, ok or failed; raw and
    structured outputs are both persisted. With resume=True, ids already in
    processed.txt are skipped; the returned table then holds only this
    invocation's rows (load_run reads the complete file). ``stop_after`` ends
    the run cleanly after that many newly written rows (interruption hook for
    tests and dry runs).
    """
    if len(corpus) == 0:
        raise PipelineError("corpus is empty")
    if workers < 1:
        raise PipelineError("workers must be >= 1")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "table.csv"
    schema = schema_of(pb)
    sentinels = {v.name: v.missing_sentinel for v in pb.variables}
    header = ["doc_id", "status", *schema.names]

    if not resume and table_path.exists() and table_path.stat().st_size > 0:
        raise PipelineError(
            f"{out_dir} already contains a run; pass resume=True or use a fresh directory"
        )

    if resume:
        kept = _compact_for_resume(out_dir, header, corpus)
        done = set(kept)
    else:
        with table_path.open("w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(header)
        (out_dir / "processed.txt").write_text("", encoding="utf-8")
        (out_dir / "raw_log.jsonl").write_text("", encoding="utf-8")
        done = set()

    pending = [d for d in corpus.documents if d.id not in done]
    rendered = render_prompt(pb)
    raw_log = _RawLog(out_dir / "raw_log.jsonl")
    abort = threading.Event()
    started = datetime.now(timezone.utc).isoformat()

    rows: dict[str, Row] = {}
    new_records: list[CallRecord] = []
    interrupted = False
    fatal: RunAborted | None = None

    def job(doc):
        outcome = _process_document(
            doc, rendered.system, rendered.user_template, schema, gateway, abort
        )
        for rec in outcome.records:
            raw_log.append(rec)
        return outcome

    try:
        with table_path.open("a", encoding="utf-8", newline="") as table_fh, (
            out_dir / "processed.txt"
        ).open("a", encoding="utf-8") as processed_fh:
            writer = csv.writer(table_fh, lineterminator="\n")
            written = 0
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [(doc, pool.submit(job, doc)) for doc in pending]
                for doc, future in futures:
                    if interrupted or fatal:
                        future.cancel()
                        continue
                    try:
                        outcome = future.result()
                    except RunAborted:
                        continue
                    new_records.extend(outcome.records)
                    row = outcome.row
                    if row.status == "failed_call" and row.error == "auth_failed":
                        abort.set()
                        fatal = RunAborted(
                            f"authentication failed while processing '{doc.id}'; run aborted"
                        )
                        continue
                    writer.writerow(
                        [row.doc_id, row.status]
                        + [_cell(sentinels, n, row.values.get(n)) for n in schema.names]
                    )
                    table_fh.flush()
                    processed_fh.write(row.doc_id + "\n")
                    processed_fh.flush()
                    rows[row.doc_id] = row
                    written += 1
                    if stop_after is not None and written >= stop_after:
                        interrupted = True
                        abort.set()
    finally:
        raw_log.close()

    if fatal is not None:
        raise fatal

    table = AnnotationTable(columns=schema.names, rows=rows)
    all_processed = sorted(done | set(rows))
    counts = _counts_from_table(out_dir)
    manifest = RunManifest(
        run_id=run_id_for(pb, corpus, gateway.config, seed, repeat_index, pilot),
        pilot=pilot,
        repeat_index=repeat_index,
        promptbook_id=pb.id,
        promptbook_version=pb.version,
        promptbook_hash=pb.content_hash,
        variables=[
            {
                "name": v.name,
                "task": v.task_kind,
                "type": v.answer_type,
                "missing_sentinel": v.missing_sentinel,
            }
            for v in pb.variables
        ],
        model=gateway.config.to_dict(),
        seed=seed,
        workers=workers,
        backend_kind=backend_kind,
        corpus_digest=corpus.manifest_digest,
        corpus_size=len(corpus),
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        processed_ids=all_processed,
        counts=counts,
        tool_version=TOOL_VERSION,
    )
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return RunResult(
        table=table, manifest=manifest, records=new_records, out_dir=out_dir, interrupted=interrupted
    )


def _counts_from_table(out_dir: Path) -> dict:
    counts = {status: 0 for status in ROW_STATUSES}
    for row in _load_table_rows(out_dir / "table.csv")[1:]:
        counts[row[1]] += 1
    return counts


def pilot_run(
    corpus: Corpus,
    pb: Promptbook,
    gateway: Gateway,
    out_dir: str | Path,
    n: int = 15,
    seed: int = 0,
    **kwargs,
) -> RunResult:
    """Full run over a seeded random n-document subset, flagged pilot."""
    subset = sample(corpus, n, seed=seed)
    return run(subset, pb, gateway, out_dir, seed=seed, pilot=True, **kwargs)


# ---------------------------------------------------------------------------
# Reading run artifacts back
# ---------------------------------------------------------------------------


def typed_value(answer_type: str, cell: str, sentinel: str = "N/A"):
    """Convert a table.csv cell back to a typed value; '' and the missing
    sentinel both come back as None (missing data for the metrics layer)."""
    if cell == "" or cell.strip() == sentinel:
        return None
    try:
        if answer_type in ("binary", "integer"):
            return int(cell)
        if answer_type == "decimal":
            return float(cell)
    except ValueError:
        raise ValueError(f"cannot read {cell!r} as {answer_type}") from None
    return cell


def load_run(out_dir: str | Path) -> tuple[RunManifest, list[dict]]:
    """Load a run directory: manifest plus raw table rows as dicts."""
    out_dir = Path(out_dir)
    manifest = RunManifest.from_dict(
        json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    )
    table_rows = _load_table_rows(out_dir / "table.csv")
    header = table_rows[0]
    rows = [dict(zip(header, row)) for row in table_rows[1:]]
    return manifest, rows
