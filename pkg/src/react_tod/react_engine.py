"""The system agent: prompt assembly, tool dispatch and the reasoning loop.

Each turn the agent iterates assemble -> complete -> parse -> dispatch,
appending tool Observations to the scratchpad, until the model emits a
Final Answer or hits the step cap. Malformed completions get a correction
Observation and a bounded number of retries before the fallback answer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import domain_db
from .domain_db import ASSETS_DIR, BeliefState, BookingLedger, DomainDatabase, ToolError
from .llm_backend import BackendError, CompletionRequest, Usage
from .logs import AgentTrace, DialogueLog, ToolCall, TurnRecord
from .steps import (
    Action,
    AgentStep,
    FinalAnswer,
    Observation,
    ParseFailure,
    Thought,
    parse_step,
    render_step,
)

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE_PATH = ASSETS_DIR / "prompts" / "react_prompt.txt"
EXEMPLARS_DIR = ASSETS_DIR / "prompts" / "exemplars"

PLACEHOLDERS = ("{tools}", "{tool_names}", "{examples}", "{history}", "{input}", "{agent_scratchpad}")

FALLBACK_ANSWER = "I'm sorry, I was unable to process that request."


@dataclass(frozen=True)
class _RawOutput:
    """Unparseable completion kept verbatim in the scratchpad during retries."""

    text: str


@dataclass
class ToolSpec:
    name: str
    description: str
    params: list[str]
    handler: object  # callable(dict) -> str, may raise ToolError

    def render(self) -> str:
        return f"{self.name}({', '.join(self.params)}) - {self.description}"


class Toolkit:
    def __init__(self, tools: list[ToolSpec]):
        self.tools: dict[str, ToolSpec] = {}
        for tool in tools:
            if tool.name in self.tools:
                raise ValueError(f"duplicate tool name {tool.name}")
            if len(tool.name.split()) != 1:
                raise ValueError(f"tool name must be a single token: {tool.name!r}")
            self.tools[tool.name] = tool

    @property
    def names(self) -> list[str]:
        return list(self.tools)

    def dispatch(self, name: str, doc: dict) -> tuple[str, bool]:
        """Run a tool; ToolErrors become error Observations rather than crashes."""
        tool = self.tools[name]
        try:
            return tool.handler(doc), True
        except ToolError as exc:
            return f"Error: {exc}", False


def render_tool_descriptions(toolkit: Toolkit) -> str:
    return "\n".join(tool.render() for tool in toolkit.tools.values())


def _require(doc: dict, key: str) -> object:
    if key not in doc:
        raise ToolError(f"missing required parameter: {key}")
    return doc[key]


def extract_query_state(doc: dict) -> dict[str, dict]:
    """Normalize a db_query Input into a domain -> constraints map.

    Models usually nest constraints under the domain ({state: {hotel: {...}}});
    a flat map ({state: {stars: 3}}) is interpreted as constraints for the
    queried domain.
    """
    domain = doc.get("domain")
    state = doc.get("state", {})
    if not isinstance(state, dict):
        raise ToolError("state must be a JSON object")
    if state and all(isinstance(v, dict) for v in state.values()):
        return {str(d): dict(c) for d, c in state.items()}
    if not isinstance(domain, str):
        raise ToolError("missing required parameter: domain")
    return {domain: dict(state)}


def build_toolkit(db: DomainDatabase, ledger: BookingLedger, strict_slots: bool = True) -> Toolkit:
    """Bind the four database tools to a database and a session booking ledger."""

    def _list_domains(doc: dict) -> str:
        return "[" + ", ".join(domain_db.list_domains(db)) + "]"

    def _list_slots(doc: dict) -> str:
        domain = str(_require(doc, "domain"))
        return "[" + ", ".join(domain_db.list_slots(db, domain)) + "]"

    def _db_query(doc: dict) -> str:
        domain = str(_require(doc, "domain"))
        state = extract_query_state(doc)
        topk_raw = doc.get("topk", 1)
        try:
            topk = int(topk_raw)
        except (TypeError, ValueError):
            raise ToolError(f"topk must be a positive integer, got {topk_raw!r}") from None
        results, warnings = domain_db.db_query(db, domain, state, topk=topk, strict=strict_slots)
        text = domain_db.render_entity_list(db, results)
        if warnings:
            text += " (warning: " + "; ".join(warnings) + ")"
        return text

    def _get_booking_reference(doc: dict) -> str:
        domain = str(_require(doc, "domain"))
        utterance = doc.get("utterance")
        return domain_db.get_booking_reference(db, ledger, domain, utterance)

    return Toolkit(
        [
            ToolSpec(
                "list_domains",
                "This function lists the domains available in the database. Use this tool "
                "first to find the available domains and identify the correct domain for "
                "the user's request.",
                [],
                _list_domains,
            ),
            ToolSpec(
                "list_slots",
                "This function lists the slot names available for a given domain. Use this "
                "function after list_domains and before using db_query to identify the "
                "slots available for the selected domain.",
                ["domain"],
                _list_slots,
            ),
            ToolSpec(
                "db_query",
                "This function is used to query the database to retrieve information in "
                "the belief state. Form the belief state with the domain and slots that "
                "were identified using list_domains and list_slots tools.",
                ["domain: str", "state: dict", "topk=1"],
                _db_query,
            ),
            ToolSpec(
                "get_booking_reference",
                "This function is used to generate a booking reference for the service "
                "selected by the user.",
                ["domain", "utterance=None"],
                _get_booking_reference,
            ),
        ]
    )


class PromptTemplate:
    """Prompt skeleton with the six placeholders, each required exactly once."""

    def __init__(self, skeleton: str):
        for placeholder in PLACEHOLDERS:
            if skeleton.count(placeholder) != 1:
                raise ValueError(f"template must contain {placeholder} exactly once")
        self.skeleton = skeleton

    @classmethod
    def load(cls, path: str | Path = PROMPT_TEMPLATE_PATH) -> "PromptTemplate":
        return cls(Path(path).read_text())

    def fill(self, **values: str) -> str:
        text = self.skeleton
        for placeholder in PLACEHOLDERS:
            text = text.replace(placeholder, values[placeholder.strip("{}")])
        return text


@dataclass
class ExemplarLibrary:
    generic: str
    by_domain: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, directory: str | Path = EXEMPLARS_DIR) -> "ExemplarLibrary":
        directory = Path(directory)
        generic = (directory / "generic.txt").read_text()
        by_domain = {
            path.stem: path.read_text()
            for path in sorted(directory.glob("*.txt"))
            if path.stem != "generic"
        }
        return cls(generic=generic, by_domain=by_domain)


def select_exemplar(mode: str, goal, library: ExemplarLibrary) -> str:
    """Generic mode: the fixed hotel exemplar. Domain mode: one exemplar per goal domain."""
    if mode == "generic" or goal is None:
        return library.generic
    if mode != "domain":
        raise ValueError(f"unknown exemplar mode: {mode}")
    domains = list(goal.domains)
    missing = [d for d in domains if d not in library.by_domain]
    if missing:
        logger.warning("no exemplar for domains %s; falling back to generic", missing)
        return library.generic
    return "\n".join(library.by_domain[d] for d in domains)


def render_history(history: list[tuple[str, str]]) -> str:
    lines = []
    for role, text in history:
        lines.append(("User: " if role == "user" else "System: ") + text)
    return "\n".join(lines)


def render_scratchpad(steps: list) -> str:
    parts = []
    for step in steps:
        parts.append(step.text if isinstance(step, _RawOutput) else render_step(step))
    return "".join(part + "\n" for part in parts)


def assemble_prompt(
    template: PromptTemplate,
    toolkit: Toolkit,
    exemplar: str,
    history: list[tuple[str, str]],
    user_input: str,
    scratchpad: list,
) -> str:
    return template.fill(
        tools=render_tool_descriptions(toolkit),
        tool_names=", ".join(toolkit.names),
        examples=exemplar,
        history=render_history(history),
        input=user_input,
        agent_scratchpad=render_scratchpad(scratchpad),
    )


@dataclass
class TurnResult:
    answer: str
    trace: AgentTrace
    usage: Usage
    parse_retries: int
    steps: list = field(default_factory=list)


@dataclass
class SessionState:
    db: DomainDatabase
    toolkit: Toolkit
    template: PromptTemplate
    exemplars: ExemplarLibrary
    ledger: BookingLedger
    exemplar_mode: str = "generic"
    goal: object | None = None
    model: str = "gpt-3.5-turbo-0301"
    history: list[tuple[str, str]] = field(default_factory=list)
    belief: BeliefState = field(default_factory=BeliefState)

    def append_exchange(self, user_text: str, system_text: str) -> None:
        self.history.append(("user", user_text))
        self.history.append(("system", system_text))


def make_session(
    db: DomainDatabase,
    ledger: BookingLedger | None = None,
    exemplar_mode: str = "generic",
    goal=None,
    model: str = "gpt-3.5-turbo-0301",
    strict_slots: bool = True,
) -> SessionState:
    ledger = ledger if ledger is not None else BookingLedger()
    return SessionState(
        db=db,
        toolkit=build_toolkit(db, ledger, strict_slots=strict_slots),
        template=PromptTemplate.load(),
        exemplars=ExemplarLibrary.load(),
        ledger=ledger,
        exemplar_mode=exemplar_mode,
        goal=goal,
        model=model,
    )


def run_turn(
    session: SessionState,
    utterance: str,
    backend,
    max_steps: int = 8,
    max_parse_retries: int = 2,
) -> TurnResult:
    exemplar = select_exemplar(session.exemplar_mode, session.goal, session.exemplars)
    scratchpad: list = []
    trace = AgentTrace()
    usage = Usage()
    answer: str | None = None

    for _ in range(max_steps):
        prompt = assemble_prompt(
            session.template, session.toolkit, exemplar, session.history, utterance, scratchpad
        )
        text, step_usage = backend.complete(CompletionRequest(prompt=prompt, model=session.model))
        usage.add(step_usage)
        trace.raw_outputs.append(text)

        step = parse_step(text, tool_names=session.toolkit.names)
        if isinstance(step, ParseFailure):
            if trace.parse_retries >= max_parse_retries:
                trace.fallback = True
                answer = FALLBACK_ANSWER
                break
            trace.parse_retries += 1
            scratchpad.append(_RawOutput(text.strip()))
            scratchpad.append(Observation(step.correction_message(session.toolkit.names)))
            continue

        scratchpad.append(step)
        if isinstance(step, FinalAnswer):
            answer = step.text
            break
        if isinstance(step, Action):
            observation, ok = session.toolkit.dispatch(step.tool, step.input)
            trace.tool_calls.append(ToolCall(step.tool, step.input, observation, ok))
            if ok and step.tool == "db_query":
                _maybe_snapshot_belief(session, step.input)
            scratchpad.append(Observation(observation))
        # A bare Thought (or stray Observation) just extends the scratchpad.

    if answer is None:
        trace.fallback = True
        answer = FALLBACK_ANSWER

    trace.rendered_steps = [
        step.text if isinstance(step, _RawOutput) else render_step(step) for step in scratchpad
    ]
    session.append_exchange(utterance, answer)
    return TurnResult(
        answer=answer, trace=trace, usage=usage, parse_retries=trace.parse_retries, steps=scratchpad
    )


def _maybe_snapshot_belief(session: SessionState, doc: dict) -> None:
    """Merge a db_query input into the session belief state if it is schema-valid."""
    try:
        state = extract_query_state(doc)
    except ToolError:
        return
    candidate = BeliefState({d: {s: str(v) for s, v in c.items()} for d, c in state.items()})
    if candidate.is_valid(session.db):
        session.belief.merge_from(candidate.constraints)


class DialogueAborted(BackendError):
    """Fatal backend failure mid-dialogue; carries the partial log."""

    def __init__(self, cause: BackendError, partial_log: DialogueLog):
        super().__init__(str(cause), retryable=False)
        self.partial_log = partial_log


def run_dialogue(
    session: SessionState,
    user_agent,
    backend,
    max_turns: int = 20,
    max_steps: int = 8,
    max_parse_retries: int = 2,
) -> DialogueLog:
    """Alternate simulated-user and system turns until goodbye or the turn cap.

    The user agent supplies `next_user_utterance() -> (text, acts, done)` and
    `update(system_text) -> system acts`; `done` is true when the goodbye was
    produced, which still receives one final system reply.
    """
    turns: list[TurnRecord] = []
    usage = Usage()
    termination = "max_turns"

    for turn_index in range(max_turns):
        user_text, user_acts, done = user_agent.next_user_utterance()
        session.ledger.turn_index = turn_index
        try:
            result = run_turn(
                session, user_text, backend, max_steps=max_steps, max_parse_retries=max_parse_retries
            )
        except BackendError as exc:
            partial = DialogueLog(
                goal=user_agent.goal,
                turns=turns,
                usage=usage,
                termination="backend_error",
                abandoned_domains=sorted(getattr(user_agent, "abandoned_domains", [])),
            )
            raise DialogueAborted(exc, partial) from exc
        usage.add(result.usage)
        system_acts = user_agent.update(result.answer)
        turns.append(
            TurnRecord(
                user_text=user_text,
                user_acts=list(user_acts),
                system_text=result.answer,
                system_acts=list(system_acts),
                trace=result.trace,
                belief=session.belief.copy().constraints,
            )
        )
        if done:
            termination = "goodbye"
            break

    return DialogueLog(
        goal=user_agent.goal,
        turns=turns,
        usage=usage,
        termination=termination,
        abandoned_domains=sorted(getattr(user_agent, "abandoned_domains", [])),
    )
