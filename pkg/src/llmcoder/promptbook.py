"""Promptbook compiler: parse and lint a declarative codebook file, render it
into an LLM prompt, derive the strict output schema, and validate model
responses against that schema (including the verbatim substring check).

A promptbook file is a UTF-8 JSON document:

    {
      "id": "...",
      "version": "...",
      "role": "You are ...",
      "variables": [
        {"name": "AN_X", "task": "annotation", "instruction": "...",
         "type": "binary", "categories": [...], "verbatim": false,
         "missing_sentinel": "N/A"},
        ...
      ]
    }

Text fields are whitespace-canonicalized at parse time (runs of whitespace
collapse to single spaces), so the content hash, the rendered prompt, and the
serialized form are all pure functions of the semantic content.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

TASK_KINDS = ("annotation", "summarization", "extraction")
ANSWER_TYPES = ("string", "integer", "decimal", "binary", "categorical")

TASK_PREFIXES = {"annotation": "AN_", "summarization": "SU_", "extraction": "IE_"}

# JSON primitive kind advertised in the rendered schema block.
_JSON_KINDS = {
    "string": "string",
    "integer": "integer",
    "binary": "integer",
    "decimal": "number",
    "categorical": "string",
}

DEFAULT_SENTINEL = "N/A"
DOCUMENT_PLACEHOLDER = "{document}"

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ELLIPSIS_RE = re.compile(r"\.{3}|…")


class PromptbookError(ValueError):
    """Raised when a promptbook document fails to parse or lint."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class ResponseEnvelopeError(ValueError):
    """Model response is not a one-object JSON array or a bare JSON object."""


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    location: str = ""
    line: int | None = None

    def __str__(self) -> str:
        loc = self.location
        if self.line is not None:
            loc = f"line {self.line}, {loc}" if loc else f"line {self.line}"
        return f"{self.severity}: {loc}: {self.message}" if loc else f"{self.severity}: {self.message}"


@dataclass(frozen=True)
class Variable:
    name: str
    task_kind: str
    instruction: str
    answer_type: str
    categories: tuple[str, ...] = ()
    verbatim: bool = False
    missing_sentinel: str = DEFAULT_SENTINEL


@dataclass(frozen=True)
class Promptbook:
    id: str
    version: str
    role_preamble: str
    variables: tuple[Variable, ...]

    @property
    def content_hash(self) -> str:
        """Stable digest of the canonical (whitespace-collapsed) serialization."""
        raw = json.dumps(_canonical_dict(self), separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True)
class FieldSpec:
    """Expected JSON shape and constraints for one output field."""

    name: str
    kind: str  # "string" | "integer" | "number"
    categories: tuple[str, ...] = ()
    binary: bool = False
    verbatim: bool = False
    missing_sentinel: str = DEFAULT_SENTINEL


@dataclass(frozen=True)
class OutputSchema:
    fields: tuple[FieldSpec, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)


class Missing:
    """Singleton marker for a sentinel-matched (explicitly absent) value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"


MISSING = Missing()


@dataclass(frozen=True)
class Violation:
    variable: str
    kind: str  # missing_field | wrong_type | category_out_of_set | verbatim_mismatch


@dataclass(frozen=True)
class ValidatedRecord:
    doc_id: str
    values: dict[str, object]  # name -> typed value | MISSING | None (violated)
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class RenderedPrompt:
    system: str
    user_template: str

    def fill(self, doc_text: str) -> str:
        """Inject document text into the template slot (literal replacement,
        never str.format, so braces in documents are inert)."""
        if self.user_template.count(DOCUMENT_PLACEHOLDER) != 1:
            raise ValueError("template must contain exactly one document slot")
        return self.user_template.replace(DOCUMENT_PLACEHOLDER, doc_text)


def _collapse_ws(text: str) -> str:
    return " ".join(text.split())


def _line_of(source: str, needle: str) -> int | None:
    """Best-effort 1-based line of the first occurrence of a quoted value."""
    idx = source.find(f'"{needle}"')
    if idx < 0:
        return None
    return source.count("\n", 0, idx) + 1


def lint_promptbook(
    source: str, prefix_policy: str = "error"
) -> tuple[Promptbook | None, list[Diagnostic]]:
    """Parse and lint a promptbook document.

    Returns the compiled Promptbook (None when errors were found) plus all
    diagnostics. ``prefix_policy`` controls whether a name-prefix/task
    mismatch is an "error" or a "warn"-level diagnostic.
    """
    if prefix_policy not in ("error", "warn"):
        raise ValueError(f"prefix_policy must be 'error' or 'warn', got {prefix_policy!r}")
    diags: list[Diagnostic] = []

    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        diags.append(Diagnostic("error", f"malformed document: {exc.msg}", line=exc.lineno))
        return None, diags
    if not isinstance(doc, dict):
        diags.append(Diagnostic("error", "malformed document: top level must be a JSON object"))
        return None, diags

    for key in ("id", "version", "role"):
        val = doc.get(key)
        if not isinstance(val, str) or not val.strip():
            diags.append(Diagnostic("error", f"missing or empty field '{key}'", location=key))
    raw_vars = doc.get("variables")
    if not isinstance(raw_vars, list):
        diags.append(Diagnostic("error", "missing 'variables' list", location="variables"))
        return None, diags
    if not raw_vars:
        diags.append(Diagnostic("error", "promptbook has no variables", location="variables"))
        return None, diags

    variables: list[Variable] = []
    seen: dict[str, int] = {}
    for i, raw in enumerate(raw_vars):
        loc = f"variables[{i}]"
        if not isinstance(raw, dict):
            diags.append(Diagnostic("error", "variable entry must be an object", location=loc))
            continue
        name = raw.get("name")
        if not isinstance(name, str) or not _NAME_RE.match(name):
            diags.append(
                Diagnostic("error", f"invalid or missing variable name: {name!r}", location=loc)
            )
            continue
        line = _line_of(source, name)
        loc = f"{loc} ({name})"

        if name in seen:
            diags.append(
                Diagnostic(
                    "error",
                    f"duplicate variable name {name} (first declared at entry {seen[name]})",
                    location=loc,
                    line=line,
                )
            )
            continue
        seen[name] = i

        task = raw.get("task")
        if task not in TASK_KINDS:
            diags.append(
                Diagnostic(
                    "error",
                    f"unknown task {task!r} (expected one of {', '.join(TASK_KINDS)})",
                    location=loc,
                    line=line,
                )
            )
            continue

        answer_type = raw.get("type")
        if answer_type not in ANSWER_TYPES:
            diags.append(
                Diagnostic(
                    "error",
                    f"unknown answer type {answer_type!r} (expected one of {', '.join(ANSWER_TYPES)})",
                    location=loc,
                    line=line,
                )
            )
            continue

        instruction = raw.get("instruction")
        if not isinstance(instruction, str) or not instruction.strip():
            diags.append(
                Diagnostic("error", "missing or empty instruction", location=loc, line=line)
            )
            continue

        expected_prefix = TASK_PREFIXES[task]
        if not name.startswith(expected_prefix):
            severity = "error" if prefix_policy == "error" else "warning"
            diags.append(
                Diagnostic(
                    severity,
                    f"name {name} does not carry the {task} prefix {expected_prefix!r}",
                    location=loc,
                    line=line,
                )
            )
            if severity == "error":
                continue

        raw_cats = raw.get("categories")
        categories: tuple[str, ...] = ()
        if answer_type == "categorical":
            if not isinstance(raw_cats, list) or not raw_cats:
                diags.append(
                    Diagnostic(
                        "error",
                        "categorical variable requires a non-empty 'categories' list",
                        location=loc,
                        line=line,
                    )
                )
                continue
            cats = [c for c in raw_cats]
            if any(not isinstance(c, str) or not c.strip() for c in cats):
                diags.append(
                    Diagnostic("error", "categories must be non-empty strings", location=loc, line=line)
                )
                continue
            cats = [_collapse_ws(c) for c in cats]
            if len(set(cats)) != len(cats):
                diags.append(
                    Diagnostic("error", "categories must be pairwise distinct", location=loc, line=line)
                )
                continue
            lowered = [c.lower() for c in cats]
            if len(set(lowered)) != len(lowered):
                diags.append(
                    Diagnostic(
                        "warning",
                        "categories differ only by letter case; matching is case-sensitive",
                        location=loc,
                        line=line,
                    )
                )
            categories = tuple(cats)
        elif raw_cats:
            diags.append(
                Diagnostic(
                    "warning",
                    f"'categories' ignored for {answer_type} variable",
                    location=loc,
                    line=line,
                )
            )

        verbatim = raw.get("verbatim", False)
        if not isinstance(verbatim, bool):
            diags.append(Diagnostic("error", "'verbatim' must be a boolean", location=loc, line=line))
            continue
        if verbatim and answer_type != "string":
            diags.append(
                Diagnostic(
                    "error",
                    "verbatim=true is only permitted for string variables",
                    location=loc,
                    line=line,
                )
            )
            continue

        sentinel = raw.get("missing_sentinel", DEFAULT_SENTINEL)
        if not isinstance(sentinel, str) or not sentinel.strip():
            diags.append(
                Diagnostic("error", "'missing_sentinel' must be a non-empty string", location=loc, line=line)
            )
            continue

        variables.append(
            Variable(
                name=name,
                task_kind=task,
                instruction=_collapse_ws(instruction),
                answer_type=answer_type,
                categories=categories,
                verbatim=verbatim,
                missing_sentinel=sentinel.strip(),
            )
        )

    if any(d.severity == "error" for d in diags):
        return None, diags

    pb = Promptbook(
        id=_collapse_ws(doc["id"]),
        version=_collapse_ws(doc["version"]),
        role_preamble=_collapse_ws(doc["role"]),
        variables=tuple(variables),
    )
    return pb, diags


def parse_promptbook(source: str, prefix_policy: str = "error") -> Promptbook:
    """Compile a promptbook document, raising PromptbookError on any error."""
    pb, diags = lint_promptbook(source, prefix_policy=prefix_policy)
    errors = [d for d in diags if d.severity == "error"]
    if errors or pb is None:
        raise PromptbookError(errors or diags)
    return pb


def _canonical_dict(pb: Promptbook) -> dict:
    out: dict = {"id": pb.id, "version": pb.version, "role": pb.role_preamble, "variables": []}
    for v in pb.variables:
        entry: dict = {
            "name": v.name,
            "task": v.task_kind,
            "instruction": v.instruction,
            "type": v.answer_type,
        }
        if v.categories:
            entry["categories"] = list(v.categories)
        if v.verbatim:
            entry["verbatim"] = True
        if v.missing_sentinel != DEFAULT_SENTINEL:
            entry["missing_sentinel"] = v.missing_sentinel
        out["variables"].append(entry)
    return out


def serialize_promptbook(pb: Promptbook) -> str:
    """Canonical textual form; parse(serialize(pb)) == pb."""
    return json.dumps(_canonical_dict(pb), indent=2, ensure_ascii=False) + "\n"


def schema_of(pb: Promptbook) -> OutputSchema:
    """One schema field per variable, in promptbook order."""
    fields = []
    for v in pb.variables:
        fields.append(
            FieldSpec(
                name=v.name,
                kind=_JSON_KINDS[v.answer_type],
                categories=v.categories,
                binary=v.answer_type == "binary",
                verbatim=v.verbatim,
                missing_sentinel=v.missing_sentinel,
            )
        )
    return OutputSchema(fields=tuple(fields))


def render_prompt(pb: Promptbook) -> RenderedPrompt:
    """Render the coding-manual prompt. Pure: identical books render to
    byte-identical output."""
    manual = "\n".join(f"- {v.name} = {v.instruction}" for v in pb.variables)
    schema_obj = {v.name: _JSON_KINDS[v.answer_type] for v in pb.variables}
    schema_block = json.dumps([schema_obj], indent=2, ensure_ascii=False)
    user_template = (
        "Please use the following coding manual to code the text.\n"
        "\n"
        f"{manual}\n"
        "\n"
        "Output Format\n"
        "\n"
        "Return **ONLY** a JSON array of objects. Do not include markdown "
        "formatting like ```json or intro text. Use this exact schema:\n"
        "\n"
        f"{schema_block}\n"
        "\n"
        "Text to code:\n"
        "\n"
        f"{DOCUMENT_PLACEHOLDER}"
    )
    return RenderedPrompt(system=pb.role_preamble, user_template=user_template)


def normalize_envelope(parsed: object) -> dict:
    """Accept a JSON array containing exactly one object, or a bare object."""
    if isinstance(parsed, list):
        if len(parsed) != 1 or not isinstance(parsed[0], dict):
            raise ResponseEnvelopeError(
                f"expected a one-object array, got array of length {len(parsed)}"
            )
        return parsed[0]
    if isinstance(parsed, dict):
        return parsed
    raise ResponseEnvelopeError(f"expected a JSON object or one-object array, got {type(parsed).__name__}")


def verbatim_ok(value: str, doc_text: str) -> bool:
    """Whitespace-normalized, case-sensitive substring check. Values joined
    from multiple snippets with '...' are split and each part tested alone."""
    haystack = _collapse_ws(doc_text)
    for part in _ELLIPSIS_RE.split(value):
        part = _collapse_ws(part)
        if part and part not in haystack:
            return False
    return True


def _check_type(spec: FieldSpec, value: object) -> str | None:
    """Return a violation kind, or None when the value fits the field."""
    if isinstance(value, bool):
        return "wrong_type"
    if spec.categories:
        if not isinstance(value, str):
            return "wrong_type"
        if value not in spec.categories:
            return "category_out_of_set"
        return None
    if spec.kind == "string":
        return None if isinstance(value, str) else "wrong_type"
    if spec.kind == "integer":
        if not isinstance(value, int):
            return "wrong_type"
        if spec.binary and value not in (0, 1):
            return "wrong_type"
        return None
    if spec.kind == "number":
        return None if isinstance(value, (int, float)) else "wrong_type"
    raise AssertionError(f"unreachable field kind {spec.kind}")


def validate_record(schema: OutputSchema, parsed: object, doc_text: str, doc_id: str = "") -> ValidatedRecord:
    """Resolve every schema field of a parsed JSON response to a typed value,
    the MISSING marker (sentinel match), or a violation.

    Raises ResponseEnvelopeError when ``parsed`` is not a bare object or a
    one-object array. Unknown response keys are ignored.
    """
    obj = normalize_envelope(parsed)
    values: dict[str, object] = {}
    violations: list[Violation] = []
    for spec in schema.fields:
        if spec.name not in obj:
            values[spec.name] = None
            violations.append(Violation(spec.name, "missing_field"))
            continue
        value = obj[spec.name]
        if isinstance(value, str) and value.strip() == spec.missing_sentinel:
            values[spec.name] = MISSING
            continue
        kind = _check_type(spec, value)
        if kind is not None:
            values[spec.name] = None
            violations.append(Violation(spec.name, kind))
            continue
        if spec.verbatim and isinstance(value, str) and not verbatim_ok(value, doc_text):
            values[spec.name] = None
            violations.append(Violation(spec.name, "verbatim_mismatch"))
            continue
        values[spec.name] = value
    return ValidatedRecord(doc_id=doc_id, values=values, violations=tuple(violations))
