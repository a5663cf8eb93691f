"""Seeded goal generation and the agenda-based simulated user.

Goals are sampled from actual database records so every goal is satisfiable.
The agenda is a stack of pending user acts initialized from the goal; each
turn pops one or two compatible acts, renders them through seeded templates,
and system replies are parsed back into semantic acts by a pattern NLU
grounded in the database (entity names and attribute values), which then
updates the agenda.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from . import acts
from .acts import SystemAct, UserAct
from .domain_db import DomainDatabase, Entity, db_query, matches, normalize
from .logs import DialogueLog

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

# Slots never used as goal material or detected as informed values.
_STRUCTURAL_SLOTS = ("id", "location", "Ref", "introduction", "takesbookings")


@dataclass
class GoalSpec:
    info: dict[str, str] = field(default_factory=dict)
    reqt: list[str] = field(default_factory=list)
    book: dict[str, str] | None = None


@dataclass
class Goal:
    specs: dict[str, GoalSpec]

    @property
    def domains(self) -> list[str]:
        return list(self.specs)

    def to_dict(self) -> dict:
        out: dict = {}
        for domain, spec in self.specs.items():
            entry: dict = {"info": dict(spec.info), "reqt": {slot: "?" for slot in spec.reqt}}
            if spec.book is not None:
                entry["book"] = dict(spec.book)
            out[domain] = entry
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Goal":
        specs = {}
        for domain, entry in data.items():
            specs[domain] = GoalSpec(
                info={k: str(v) for k, v in entry.get("info", {}).items()},
                reqt=list(entry.get("reqt", {})),
                book={k: str(v) for k, v in entry["book"].items()} if "book" in entry else None,
            )
        return cls(specs)


def generate_goal(db: DomainDatabase, seed: int) -> Goal:
    """Deterministic goal for (db, seed): 1-3 domains, info values drawn from real entities."""
    rng = random.Random(seed)
    domain_pool = [d for d in db.domain_names if db.entities.get(d)]
    if not domain_pool:
        raise ValueError("database has no entities to build goals from")
    count = rng.choices([1, 2, 3], weights=[0.6, 0.3, 0.1])[0]
    count = min(count, len(domain_pool))
    domains = rng.sample(domain_pool, count)

    specs: dict[str, GoalSpec] = {}
    for domain in domains:
        schema = db.schemas[domain]
        entity = rng.choice(db.entities_for(domain))
        usable = [
            slot
            for slot in schema.informable
            if slot not in _STRUCTURAL_SLOTS
            and entity.get(slot) is not None
            and normalize(entity.get(slot)) not in ("", "?", "dontcare")
        ]
        k_info = rng.randint(0, min(3, len(usable))) if usable else 0
        info = {slot: normalize(entity.get(slot)) for slot in rng.sample(usable, k_info)}
        requestable = [s for s in schema.requestable if s not in info]
        k_reqt = rng.randint(1, min(3, len(requestable)))
        reqt = rng.sample(requestable, k_reqt)
        book = _sample_booking(rng, domain) if schema.bookable and rng.random() < 0.5 else None
        specs[domain] = GoalSpec(info=info, reqt=reqt, book=book)

    goal = Goal(specs)
    for domain, spec in goal.specs.items():
        found, _ = db_query(db, domain, {domain: spec.info}, topk=1)
        if not found:
            raise AssertionError(f"generated unsatisfiable goal for {domain}: {spec.info}")
    return goal


def _sample_booking(rng: random.Random, domain: str) -> dict[str, str]:
    book = {"people": str(rng.randint(1, 8))}
    if domain in ("hotel", "restaurant"):
        book["day"] = rng.choice(WEEKDAYS)
    if domain == "hotel":
        book["stay"] = str(rng.randint(1, 7))
    return book


class Agenda:
    """Stack of pending user acts; Goodbye sits at the bottom.

    Tracks the active domain and per-domain retry counts so that a first
    NoResult re-pushes the subgoal's informs and a second abandons it.
    """

    def __init__(self, stack: list[UserAct]):
        self.stack = stack  # top of stack is the end of the list
        self.active_domain: str | None = None
        self.no_result_counts: dict[str, int] = {}
        self.abandoned: set[str] = set()

    def __len__(self) -> int:
        return len(self.stack)

    @property
    def empty(self) -> bool:
        return not self.stack

    def peek(self) -> UserAct | None:
        return self.stack[-1] if self.stack else None

    def pop(self) -> UserAct:
        act = self.stack.pop()
        if act.domain:
            self.active_domain = act.domain
        return act

    def push(self, act: UserAct) -> None:
        self.stack.append(act)

    def remove_matching(self, predicate) -> int:
        kept = [a for a in self.stack if not predicate(a)]
        removed = len(self.stack) - len(kept)
        self.stack = kept
        return removed

    def pending(self, kind: str, domain: str = "", slot: str = "") -> bool:
        return any(
            a.kind == kind
            and (not domain or a.domain == domain)
            and (not slot or a.slot == slot)
            for a in self.stack
        )


def init_agenda(goal: Goal) -> Agenda:
    """Goodbye at the bottom; per domain BookRequest, then Requests, then Informs on top."""
    stack: list[UserAct] = [acts.goodbye()]
    for domain in reversed(goal.domains):
        spec = goal.specs[domain]
        if spec.book is not None:
            stack.append(acts.book_request(domain, spec.book))
        for slot in reversed(spec.reqt):
            stack.append(acts.request(domain, slot))
        for slot, value in reversed(list(spec.info.items())):
            stack.append(acts.inform(domain, slot, value))
    return Agenda(stack)


_REF_RE = re.compile(r"(?<!\d)(\d{8})(?!\d)")
_NO_RESULT_PATTERNS = (
    r"\bno \w+ (?:found|available)\b",
    r"(?:sorry|unfortunately|afraid)[^.?!]*(?:couldn'?t|could not|unable to|cannot|can'?t) find",
    r"\bcouldn'?t find\b",
    r"\bcould not find\b",
    r"\bno (?:matching|results?|entities)\b",
    r"\bnothing (?:was )?found\b",
    r"\bthere (?:are|is) no\b",
)

# Surface forms a question must contain to count as asking for a slot.
SLOT_QUESTION_PHRASES: dict[str, tuple[str, ...]] = {
    "pricerange": ("price range",),
    "leaveAt": ("departure time", "leave at", "time you want to leave"),
    "arriveBy": ("arrival time", "arrive by"),
    "entrance fee": ("entrance fee",),
    "trainID": ("train id",),
    "taxi_colors": ("car color", "car colour"),
    "taxi_types": ("car type", "type of car"),
    "taxi_phone": ("contact number",),
}


def _slot_question_forms(slot: str) -> tuple[str, ...]:
    return SLOT_QUESTION_PHRASES.get(slot, (slot.lower(),))


def parse_system_response(
    text: str, context: list[SystemAct], db: DomainDatabase
) -> list[SystemAct]:
    """Pattern NLU over a system utterance, grounded in the database.

    Detects booking references (8-digit codes), offered entities (database
    names appearing in the text), informed slot values (attribute values of
    offered entities), no-result apologies and slot-naming questions.
    """
    found: list[SystemAct] = []
    lowered = text.lower()

    for match in _REF_RE.finditer(text):
        found.append(acts.booking_ref(match.group(1), span=match.span()))

    offered: dict[tuple[str, str], tuple[int, int]] = {}
    for domain, name in db.all_entity_names():
        key = (domain, normalize(name))
        if key in offered:
            continue
        span = _find_word(lowered, name.lower())
        if span:
            offered[key] = span
    for (domain, name), span in offered.items():
        found.append(acts.offer_entity(domain, name, span=span))

    candidate_entities = _candidate_entities(db, context, offered)
    seen_values: set[tuple[str, str, str]] = set()
    for entity in candidate_entities:
        for slot, value in entity.attributes.items():
            if slot in _STRUCTURAL_SLOTS or slot in ("name", "trainID"):
                continue
            rendered = normalize(value)
            if len(rendered) < 2 or rendered in ("yes", "no", "?", "dontcare"):
                continue
            span = _find_word(lowered, rendered)
            if not span:
                continue
            key = (entity.domain, slot, rendered)
            if key in seen_values:
                continue
            seen_values.add(key)
            found.append(acts.inform_value(entity.domain, slot, rendered, span=span))

    for pattern in _NO_RESULT_PATTERNS:
        match = re.search(pattern, lowered)
        if match:
            found.append(acts.no_result(span=match.span()))
            break

    found.extend(_detect_requests(text, lowered, db, context, offered))

    if not found:
        return [acts.other()]
    found.sort(key=lambda act: act.span)
    return found


def _find_word(haystack: str, needle: str) -> tuple[int, int] | None:
    pattern = r"(?<!\w)" + re.escape(needle) + r"(?!\w)"
    match = re.search(pattern, haystack)
    return match.span() if match else None


def _candidate_entities(
    db: DomainDatabase,
    context: list[SystemAct],
    offered: dict[tuple[str, str], tuple[int, int]],
) -> list[Entity]:
    names: list[tuple[str, str]] = list(offered)
    for act in context:
        if act.kind == "offer_entity":
            key = (act.domain, normalize(act.value))
            if key not in names:
                names.append(key)
    entities = []
    for domain, name in names:
        entity = db.find_entity(domain, name)
        if entity is not None:
            entities.append(entity)
    return entities


def _detect_requests(
    text: str,
    lowered: str,
    db: DomainDatabase,
    context: list[SystemAct],
    offered: dict[tuple[str, str], tuple[int, int]],
) -> list[SystemAct]:
    domains = {domain for domain, _ in offered}
    domains.update(act.domain for act in context if act.domain)
    for domain in db.domain_names:
        if re.search(rf"\b{re.escape(domain)}s?\b", lowered):
            domains.add(domain)

    out: list[SystemAct] = []
    position = 0
    for sentence in re.split(r"(?<=[.?!])", text):
        start = position
        position += len(sentence)
        if "?" not in sentence:
            continue
        sentence_lower = sentence.lower()
        for domain in db.domain_names:
            if domain not in domains:
                continue
            for slot in db.schemas[domain].slots:
                if slot in _STRUCTURAL_SLOTS:
                    continue
                if any(form in sentence_lower for form in _slot_question_forms(slot)):
                    out.append(acts.request_info(domain, slot, span=(start, position)))
    return out


def update_agenda(agenda: Agenda, system_acts: list[SystemAct], goal: Goal) -> Agenda:
    """Apply the system's acts: answered requests and satisfied bookings come off
    the stack, questions about goal constraints push the matching inform, and
    a NoResult retries the active subgoal once before abandoning it."""
    for act in system_acts:
        if act.kind == "inform_value":
            agenda.remove_matching(
                lambda a: a.kind == "request" and a.domain == act.domain and a.slot == act.slot
            )
        elif act.kind == "booking_ref":
            for index in range(len(agenda.stack) - 1, -1, -1):
                if agenda.stack[index].kind == "book_request":
                    del agenda.stack[index]
                    break
        elif act.kind == "request_info":
            spec = goal.specs.get(act.domain)
            if spec and act.slot in spec.info:
                if not agenda.pending("inform", act.domain, act.slot):
                    agenda.push(acts.inform(act.domain, act.slot, spec.info[act.slot]))
        elif act.kind == "no_result":
            _handle_no_result(agenda, goal)
    return agenda


def _handle_no_result(agenda: Agenda, goal: Goal) -> None:
    domain = agenda.active_domain
    if domain is None or domain in agenda.abandoned:
        return
    count = agenda.no_result_counts.get(domain, 0)
    agenda.no_result_counts[domain] = count + 1
    if count == 0:
        spec = goal.specs.get(domain)
        if spec:
            for slot, value in reversed(list(spec.info.items())):
                if not agenda.pending("inform", domain, slot):
                    agenda.push(acts.inform(domain, slot, value))
    else:
        agenda.remove_matching(lambda a: a.domain == domain)
        agenda.abandoned.add(domain)


INFORM_OPEN_TEMPLATES = (
    "I am looking for a {domain} {phrases} .",
    "I need a {domain} {phrases} .",
    "Hello , can you find me a {domain} {phrases} ?",
    "I would like a {domain} {phrases} .",
)
INFORM_FOLLOWUP_TEMPLATES = (
    "The {domain} should be {phrases} .",
    "I would prefer one {phrases} .",
    "It should be {phrases} .",
)
REQUEST_OPEN_TEMPLATES = (
    "Hello , I am looking for a {domain} . Can you give me the {slots} ?",
    "I need a {domain} . What is the {slots} ?",
    "Can you find me a {domain} and tell me the {slots} ?",
)
REQUEST_FOLLOWUP_TEMPLATES = (
    "Can you give me the {slots} please ?",
    "What is the {slots} ?",
    "Could you tell me the {slots} ?",
    "Can I please have the {slots} ?",
)
BOOK_TEMPLATES = (
    "Can you book it {clauses} please ?",
    "I would like to make a reservation {clauses} .",
    "Please book it {clauses} .",
)
GOODBYE_TEMPLATES = (
    "You were great . Goodbye .",
    "Thank you , goodbye .",
    "That is all I needed . Thank you , goodbye .",
    "Thanks for your help . Goodbye .",
)

SLOT_DISPLAY = {
    "phone": "phone number",
    "pricerange": "price range",
    "leaveAt": "departure time",
    "arriveBy": "arrival time",
    "trainID": "train ID",
    "taxi_colors": "car color",
    "taxi_types": "car type",
    "taxi_phone": "contact number",
}


def _constraint_phrase(slot: str, value: str) -> str:
    if slot == "stars":
        return f"{value} star"
    if slot == "internet":
        return "free wifi" if value == "yes" else "no wifi"
    if slot == "parking":
        return "free parking" if value == "yes" else "no parking"
    if slot == "area":
        return f"in the {value}"
    if slot == "pricerange":
        return f"in the {value} price range"
    if slot == "food":
        return f"serving {value} food"
    if slot == "type":
        return f"of type {value}"
    if slot == "name":
        return f"called {value}"
    if slot == "day":
        return f"on {value}"
    if slot == "leaveAt":
        return f"leaving after {value}"
    if slot == "arriveBy":
        return f"arriving by {value}"
    if slot == "departure":
        return f"departing from {value}"
    if slot == "destination":
        return f"going to {value}"
    if slot == "department":
        return f"with a {value}"
    return f"with {slot} {value}"


def _book_clauses(constraints: dict[str, str]) -> str:
    parts = []
    if "people" in constraints:
        parts.append(f"for {constraints['people']} people")
    if "day" in constraints:
        parts.append(f"on {constraints['day']}")
    if "stay" in constraints:
        parts.append(f"for {constraints['stay']} nights")
    for key, value in constraints.items():
        if key not in ("people", "day", "stay"):
            parts.append(f"with {key} {value}")
    return " ".join(parts) if parts else "for me"


def next_user_utterance(
    agenda: Agenda, rng: random.Random, mentioned: set[str] | None = None
) -> tuple[str, list[UserAct], bool]:
    """Pop 1-2 compatible acts and render them; done is true when Goodbye popped."""
    if agenda.empty:
        raise ValueError("agenda is empty; Goodbye was already popped")
    mentioned = mentioned if mentioned is not None else set()
    first = agenda.pop()

    if first.kind == "goodbye":
        return rng.choice(GOODBYE_TEMPLATES), [first], True

    popped = [first]
    if first.kind in ("inform", "request"):
        second = agenda.peek()
        if (
            second is not None
            and second.kind == first.kind
            and second.domain == first.domain
            and rng.random() < 0.7
        ):
            popped.append(agenda.pop())

    domain = first.domain
    opening = domain not in mentioned
    mentioned.add(domain)

    if first.kind == "inform":
        phrases = " and ".join(_constraint_phrase(a.slot, a.value) for a in popped)
        family = INFORM_OPEN_TEMPLATES if opening else INFORM_FOLLOWUP_TEMPLATES
        text = rng.choice(family).format(domain=domain, phrases=phrases)
    elif first.kind == "request":
        slots = " and ".join(SLOT_DISPLAY.get(a.slot, a.slot) for a in popped)
        family = REQUEST_OPEN_TEMPLATES if opening else REQUEST_FOLLOWUP_TEMPLATES
        text = rng.choice(family).format(domain=domain, slots=slots)
    else:  # book_request
        clauses = _book_clauses(dict(first.constraints))
        text = rng.choice(BOOK_TEMPLATES).format(clauses=clauses)

    return text, popped, False


class AgendaUser:
    """Simulated user for one dialogue: owns the goal, agenda and pattern NLU."""

    def __init__(self, goal: Goal, db: DomainDatabase, seed: int = 0):
        self.goal = goal
        self.db = db
        self.rng = random.Random(seed)
        self.agenda = init_agenda(goal)
        self.context_acts: list[SystemAct] = []
        self.mentioned: set[str] = set()

    @property
    def abandoned_domains(self) -> set[str]:
        return self.agenda.abandoned

    def next_user_utterance(self) -> tuple[str, list[UserAct], bool]:
        return next_user_utterance(self.agenda, self.rng, self.mentioned)

    def update(self, system_text: str) -> list[SystemAct]:
        found = parse_system_response(system_text, self.context_acts, self.db)
        self.context_acts.extend(found)
        update_agenda(self.agenda, found, self.goal)
        return found


class ScriptedUser:
    """Replays canned user turns; system replies are still parsed by the pattern NLU."""

    def __init__(
        self,
        goal: Goal,
        db: DomainDatabase,
        turns: list[dict],
    ):
        self.goal = goal
        self.db = db
        self.turns = turns
        self.cursor = 0
        self.context_acts: list[SystemAct] = []
        self.abandoned_domains: set[str] = set()

    def next_user_utterance(self) -> tuple[str, list[UserAct], bool]:
        if self.cursor >= len(self.turns):
            raise ValueError("scripted user exhausted")
        turn = self.turns[self.cursor]
        self.cursor += 1
        user_acts = [UserAct.from_dict(a) for a in turn.get("acts", [])]
        done = bool(turn.get("done", self.cursor == len(self.turns)))
        return turn["text"], user_acts, done

    def update(self, system_text: str) -> list[SystemAct]:
        found = parse_system_response(system_text, self.context_acts, self.db)
        self.context_acts.extend(found)
        return found


@dataclass
class SlotAnswer:
    value: str | None
    correct: bool


@dataclass
class BookOutcome:
    reference: str | None
    valid: bool


@dataclass
class FulfillmentReport:
    answers: dict[str, dict[str, SlotAnswer]]
    bookings: dict[str, BookOutcome]
    violations: list[str] = field(default_factory=list)

    @property
    def total_requests(self) -> int:
        return sum(len(slots) for slots in self.answers.values())

    @property
    def answered_requests(self) -> int:
        return sum(1 for slots in self.answers.values() for a in slots.values() if a.value is not None)

    @property
    def correct_requests(self) -> int:
        return sum(1 for slots in self.answers.values() for a in slots.values() if a.correct)

    @property
    def total_bookings(self) -> int:
        return len(self.bookings)

    @property
    def valid_bookings(self) -> int:
        return sum(1 for outcome in self.bookings.values() if outcome.valid)


def goal_status(goal: Goal, log: DialogueLog, db: DomainDatabase) -> FulfillmentReport:
    """Recompute fulfillment purely from the annotated log.

    A requested slot counts as correctly answered when some informed value
    matches a database entity consistent with the goal's info constraints;
    a booking counts when a reference was issued in a turn whose belief
    state satisfies the goal's info (and schema-relevant book) constraints.
    """
    answers: dict[str, dict[str, SlotAnswer]] = {}
    violations: list[str] = []

    for domain, spec in goal.specs.items():
        slot_answers: dict[str, SlotAnswer] = {}
        for slot in spec.reqt:
            given = [
                act.value
                for turn in log.turns
                for act in turn.system_acts
                if act.kind == "inform_value" and act.domain == domain and act.slot == slot
            ]
            correct_value = next(
                (v for v in given if _answer_correct(db, domain, spec.info, slot, v)), None
            )
            if correct_value is not None:
                slot_answers[slot] = SlotAnswer(correct_value, True)
            elif given:
                slot_answers[slot] = SlotAnswer(given[-1], False)
                violations.append(f"{domain}.{slot}: answered {given[-1]!r}, inconsistent with goal")
            else:
                slot_answers[slot] = SlotAnswer(None, False)
        answers[domain] = slot_answers

    bookings: dict[str, BookOutcome] = {}
    consumed: set[tuple[int, str]] = set()
    for domain, spec in goal.specs.items():
        if spec.book is None:
            continue
        outcome = BookOutcome(None, False)
        for turn_index, turn in enumerate(log.turns):
            for act in turn.system_acts:
                if act.kind != "booking_ref" or (turn_index, act.value) in consumed:
                    continue
                outcome.reference = outcome.reference or act.value
                if _booking_consistent(db, domain, spec, turn.belief):
                    consumed.add((turn_index, act.value))
                    outcome = BookOutcome(act.value, True)
                    break
            if outcome.valid:
                break
        if outcome.reference is not None and not outcome.valid:
            violations.append(f"{domain}: booking reference issued under constraints violating the goal")
        bookings[domain] = outcome

    return FulfillmentReport(answers=answers, bookings=bookings, violations=violations)


def _answer_correct(
    db: DomainDatabase, domain: str, info: dict[str, str], slot: str, value: str
) -> bool:
    wanted = normalize(value)
    for entity in db.entities.get(domain, []):
        if entity.get(slot) is None:
            continue
        if normalize(entity.get(slot)) == wanted and matches(entity, info):
            return True
    return False


def _booking_consistent(
    db: DomainDatabase, domain: str, spec: GoalSpec, belief: dict[str, dict[str, str]]
) -> bool:
    constraints = dict(spec.info)
    schema = db.schemas.get(domain)
    if spec.book and schema:
        for key, value in spec.book.items():
            if key in schema.slots:
                constraints[key] = value
    if not constraints:
        return True
    held = belief.get(domain, {})
    return all(normalize(held.get(slot, "")) == normalize(value) for slot, value in constraints.items())
