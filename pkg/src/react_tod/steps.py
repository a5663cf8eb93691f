"""Grammar for agent reasoning steps: rendering and parsing of model output.

A completion is parsed into one step: a tool invocation (Action + Input),
a Final Answer, or a bare Thought. Parsing is lenient about prose before
the first marker and about a missing Thought line, but requires the exact
"Action:" / "Input:" / "Final Answer:" markers at line starts.

Input documents accept strict JSON and the looser brace syntax models
actually emit ({domain: hotel, state: {hotel: {stars: 3}}}), including
unquoted keys, bare multi-word values and clock times.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Sequence, Union


@dataclass(frozen=True)
class Thought:
    text: str


@dataclass(frozen=True)
class Action:
    tool: str
    input: dict
    thought: str | None = None


@dataclass(frozen=True)
class Observation:
    text: str


@dataclass(frozen=True)
class FinalAnswer:
    text: str
    thought: str | None = None


AgentStep = Union[Thought, Action, Observation, FinalAnswer]


@dataclass(frozen=True)
class ParseFailure:
    reason: str
    raw: str = ""

    def correction_message(self, tool_names: Sequence[str] = ()) -> str:
        names = ", ".join(tool_names) if tool_names else "the provided tools"
        return (
            f"Your response could not be parsed ({self.reason}). Use the exact format:\n"
            "Thought: your reasoning\n"
            f"Action: the tool name, one of [{names}]\n"
            "Input: a JSON object with the tool parameters\n"
            "or finish with:\n"
            "Final Answer: your answer to the user"
        )


class InputDocumentError(ValueError):
    pass


_MARKERS = ("Final Answer:", "Observation:", "Action:", "Input:", "Thought:")
_MARKER_RE = re.compile(
    r"^[ \t]*(Final Answer|Observation|Action|Input|Thought):", re.MULTILINE
)


def render_step(step: AgentStep) -> str:
    if isinstance(step, Thought):
        return f"Thought: {step.text}"
    if isinstance(step, Observation):
        return f"Observation: {step.text}"
    if isinstance(step, Action):
        prefix = f"Thought: {step.thought}\n" if step.thought is not None else ""
        return f"{prefix}Action: {step.tool}\nInput: {render_tool_input(step.input)}"
    if isinstance(step, FinalAnswer):
        prefix = f"Thought: {step.thought}\n" if step.thought is not None else ""
        return f"{prefix}Final Answer: {step.text}"
    raise TypeError(f"not an AgentStep: {step!r}")


def render_tool_input(doc: dict) -> str:
    return json.dumps(doc, ensure_ascii=False)


def parse_step(text: str, tool_names: Sequence[str] | None = None) -> AgentStep | ParseFailure:
    """Parse one model completion into an AgentStep, or report why it cannot be.

    When `tool_names` is given, an Action naming anything else is a failure
    (the caller feeds the correction back to the model as an Observation).
    """
    segments = _split_segments(text)
    if not segments:
        return ParseFailure("no Thought/Action/Final Answer marker found", raw=text)

    thought: str | None = None
    for index, (marker, content, start) in enumerate(segments):
        if marker == "Thought":
            thought = content if thought is None else f"{thought}\n{content}"
        elif marker == "Final Answer":
            answer = text[start:].strip()
            return FinalAnswer(answer, thought=thought)
        elif marker == "Action":
            return _parse_action(segments, index, thought, tool_names, raw=text)
        elif marker == "Input":
            return ParseFailure("Input without a preceding Action", raw=text)
        elif marker == "Observation":
            return Observation(content)
    if thought is not None:
        return Thought(thought)
    return ParseFailure("no actionable marker found", raw=text)


def _parse_action(
    segments: list[tuple[str, str, int]],
    index: int,
    thought: str | None,
    tool_names: Sequence[str] | None,
    raw: str,
) -> Action | ParseFailure:
    name = segments[index][1].strip().strip("`'\"")
    if not name or len(name.split()) != 1:
        return ParseFailure(f"tool name must be a single token, got {name!r}", raw=raw)
    if tool_names is not None and name not in tool_names:
        return ParseFailure(
            f"unknown tool '{name}'; available tools: [{', '.join(tool_names)}]", raw=raw
        )
    if index + 1 >= len(segments) or segments[index + 1][0] != "Input":
        return ParseFailure("Action must be followed by an Input line", raw=raw)
    try:
        doc = parse_tool_input(segments[index + 1][1])
    except InputDocumentError as exc:
        return ParseFailure(f"could not parse Input document: {exc}", raw=raw)
    return Action(name, doc, thought=thought)


def _split_segments(text: str) -> list[tuple[str, str, int]]:
    """(marker, content, content_start) for each marker line, in document order."""
    matches = list(_MARKER_RE.finditer(text))
    segments = []
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        segments.append((match.group(1), text[start:end].strip(), start))
    return segments


def parse_tool_input(text: str) -> dict:
    """Parse an Input document: strict JSON first, then the relaxed brace syntax."""
    stripped = text.strip()
    if not stripped:
        raise InputDocumentError("empty document")
    try:
        doc = json.loads(stripped)
    except json.JSONDecodeError:
        doc = _RelaxedParser(stripped).parse()
    if not isinstance(doc, dict):
        raise InputDocumentError(f"expected a JSON object, got {type(doc).__name__}")
    return doc


_INT_RE = re.compile(r"-?\d+$")
_FLOAT_RE = re.compile(r"-?\d+\.\d+$")
_BARE_WORDS = {"true": True, "false": False, "null": None, "none": None}


class _RelaxedParser:
    """Recursive-descent parser for brace documents with unquoted keys/values.

    Bare values run to the next comma or closing bracket, so multi-word
    strings ("london kings cross") and clock times ("14:15") parse without
    quotes. Single- and double-quoted strings are also accepted.
    """

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self) -> Any:
        value = self._value()
        self._skip_ws()
        if self.pos != len(self.text):
            raise InputDocumentError(f"trailing data at position {self.pos}")
        return value

    def _error(self, message: str) -> InputDocumentError:
        return InputDocumentError(f"{message} at position {self.pos}")

    def _peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def _expect(self, char: str) -> None:
        if self._peek() != char:
            raise self._error(f"expected '{char}'")
        self.pos += 1

    def _value(self) -> Any:
        self._skip_ws()
        char = self._peek()
        if char == "{":
            return self._object()
        if char == "[":
            return self._array()
        if char in "\"'":
            return self._quoted(char)
        return self._bare(terminators=",}]")

    def _object(self) -> dict:
        self._expect("{")
        out: dict = {}
        self._skip_ws()
        if self._peek() == "}":
            self.pos += 1
            return out
        while True:
            self._skip_ws()
            key = self._key()
            self._skip_ws()
            self._expect(":")
            out[key] = self._value()
            self._skip_ws()
            if self._peek() == ",":
                self.pos += 1
                continue
            self._expect("}")
            return out

    def _array(self) -> list:
        self._expect("[")
        out: list = []
        self._skip_ws()
        if self._peek() == "]":
            self.pos += 1
            return out
        while True:
            out.append(self._value())
            self._skip_ws()
            if self._peek() == ",":
                self.pos += 1
                continue
            self._expect("]")
            return out

    def _key(self) -> str:
        char = self._peek()
        if char in "\"'":
            return self._quoted(char)
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ":{}[],":
            self.pos += 1
        key = self.text[start : self.pos].strip()
        if not key:
            raise self._error("empty object key")
        return key

    def _quoted(self, quote: str) -> str:
        self._expect(quote)
        out: list[str] = []
        while True:
            if self.pos >= len(self.text):
                raise self._error("unterminated string")
            char = self.text[self.pos]
            if char == "\\" and self.pos + 1 < len(self.text):
                escape = self.text[self.pos + 1]
                out.append({"n": "\n", "t": "\t"}.get(escape, escape))
                self.pos += 2
                continue
            if char == quote:
                self.pos += 1
                return "".join(out)
            out.append(char)
            self.pos += 1

    def _bare(self, terminators: str) -> Any:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in terminators:
            self.pos += 1
        token = self.text[start : self.pos].strip()
        return _coerce_bare(token)


def _coerce_bare(token: str) -> Any:
    lowered = token.lower()
    if lowered in _BARE_WORDS:
        return _BARE_WORDS[lowered]
    if _INT_RE.fullmatch(token):
        return int(token)
    if _FLOAT_RE.fullmatch(token):
        return float(token)
    return token
