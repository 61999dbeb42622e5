"""Wire grammar for agent task outputs.

Structured tasks exchange a fenced JSON block; scoring exchanges free text
with a final ``SCORE: x/10`` line. ``parse_response(render_response(d)) == d``
holds for every valid structured document, which is what keeps both providers
behind one parser.
"""

from __future__ import annotations

import json
import re

from ..errors import GrammarError

TASK_KINDS = (
    "infer_complexity",
    "summarize",
    "verify",
    "elicit_matrix",
    "leader_constraints",
    "score",
    "report_prose",
)

# Payload keys each task kind must carry. Optional keys are documented in the
# prompt templates (http provider) and the mock handlers.
REQUIRED_PAYLOAD_KEYS = {
    "infer_complexity": ("goal",),
    "summarize": ("texts", "parent_label"),
    "verify": ("child_label", "parent_label"),
    "elicit_matrix": ("criteria",),
    "leader_constraints": ("criteria",),
    "score": ("alternative", "criterion"),
    "report_prose": ("facts",),
}

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)
_SCORE_RE = re.compile(
    r"^\s*SCORE:\s*([0-9]+(?:\.[0-9]+)?)\s*/\s*([0-9]+(?:\.[0-9]+)?)\s*$",
    re.MULTILINE,
)


def validate_payload(task_kind: str, payload: dict) -> None:
    if task_kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind: {task_kind!r}")
    missing = [k for k in REQUIRED_PAYLOAD_KEYS[task_kind] if k not in payload]
    if missing:
        raise ValueError(f"payload for {task_kind} missing keys: {missing}")


def extract_json_block(text: str) -> dict | None:
    """First parseable JSON object in ``text``: fenced block, whole body,
    or first brace-delimited span, in that order."""
    for match in _FENCE_RE.finditer(text):
        try:
            value = json.loads(match.group(1))
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    try:
        value = json.loads(text)
        if isinstance(value, dict):
            return value
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if 0 <= start < end:
        try:
            value = json.loads(text[start : end + 1])
            if isinstance(value, dict):
                return value
        except json.JSONDecodeError:
            pass
    return None


def _format_number(value: float) -> str:
    if float(value) == int(value):
        return str(int(value))
    return repr(float(value))


def render_response(task_kind: str, parsed: dict) -> str:
    """Canonical raw text for a parsed document (used by the mock provider
    and by round-trip tests)."""
    if task_kind == "score":
        rationale = str(parsed.get("rationale", "")).strip()
        line = (
            f"SCORE: {_format_number(parsed['score_raw'])}"
            f"/{_format_number(parsed['scale'])}"
        )
        return f"{rationale}\n{line}" if rationale else line
    if task_kind == "report_prose":
        return str(parsed["text"])
    return "```json\n" + json.dumps(parsed, sort_keys=True) + "\n```"


def _require(doc: dict, key: str, kinds, task_kind: str, raw: str):
    if key not in doc:
        raise GrammarError(f"{task_kind} output missing {key!r}", raw_text=raw)
    value = doc[key]
    if not isinstance(value, kinds):
        raise GrammarError(
            f"{task_kind} output field {key!r} has wrong type "
            f"({type(value).__name__})",
            raw_text=raw,
        )
    return value


def parse_response(task_kind: str, raw_text: str) -> dict:
    """Parse raw provider text into the task's structured document.

    Raises GrammarError (carrying the raw text) when the output does not
    match the task grammar.
    """
    if task_kind == "score":
        matches = list(_SCORE_RE.finditer(raw_text))
        if not matches:
            raise GrammarError("no SCORE: x/y line found", raw_text=raw_text)
        match = matches[-1]
        scale = float(match.group(2))
        if scale <= 0:
            raise GrammarError("score scale must be positive", raw_text=raw_text)
        rationale = (raw_text[: match.start()] + raw_text[match.end() :]).strip()
        return {
            "rationale": rationale,
            "score_raw": float(match.group(1)),
            "scale": scale,
        }

    if task_kind == "report_prose":
        if not raw_text.strip():
            raise GrammarError("empty prose response", raw_text=raw_text)
        return {"text": raw_text}

    doc = extract_json_block(raw_text)
    if doc is None:
        raise GrammarError(
            f"no JSON block found in {task_kind} output", raw_text=raw_text
        )

    if task_kind == "infer_complexity":
        k_max = _require(doc, "k_max", (int, float), task_kind, raw_text)
        d_max = _require(doc, "d_max", (int, float), task_kind, raw_text)
        if isinstance(k_max, bool) or isinstance(d_max, bool):
            raise GrammarError("complexity fields must be numeric", raw_text=raw_text)
        return {"k_max": int(k_max), "d_max": int(d_max)}

    if task_kind == "summarize":
        label = _require(doc, "label", str, task_kind, raw_text)
        description = _require(doc, "description", str, task_kind, raw_text)
        if not label.strip():
            raise GrammarError("empty criterion label", raw_text=raw_text)
        return {"label": label, "description": description}

    if task_kind == "verify":
        score = _require(doc, "score", (int, float), task_kind, raw_text)
        if isinstance(score, bool):
            raise GrammarError("verify score must be numeric", raw_text=raw_text)
        return {"score": float(score)}

    if task_kind == "elicit_matrix":
        rows = _require(doc, "comparisons", list, task_kind, raw_text)
        comparisons = []
        for row in rows:
            if (
                not isinstance(row, dict)
                or not isinstance(row.get("i"), str)
                or not isinstance(row.get("j"), str)
                or not isinstance(row.get("value"), (int, float))
                or isinstance(row.get("value"), bool)
            ):
                raise GrammarError(
                    f"malformed comparison entry: {row!r}", raw_text=raw_text
                )
            comparisons.append(
                {"i": row["i"], "j": row["j"], "value": float(row["value"])}
            )
        return {"comparisons": comparisons}

    if task_kind == "leader_constraints":
        rows = _require(doc, "constraints", list, task_kind, raw_text)
        constraints = []
        for row in rows:
            if (
                not isinstance(row, dict)
                or not isinstance(row.get("i"), str)
                or not isinstance(row.get("j"), str)
                or not isinstance(row.get("beta"), (int, float))
                or isinstance(row.get("beta"), bool)
            ):
                raise GrammarError(
                    f"malformed constraint entry: {row!r}", raw_text=raw_text
                )
            constraints.append(
                {"i": row["i"], "j": row["j"], "beta": float(row["beta"])}
            )
        return {"constraints": constraints}

    raise ValueError(f"unknown task kind: {task_kind!r}")
