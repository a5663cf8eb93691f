"""Multi-domain venue/travel database and the data semantics behind the four agent tools.

The database is loaded once from a JSON document and is immutable afterwards;
it can be shared freely across concurrent sessions. Booking references come
from a per-session BookingLedger, which is the only mutable piece of state
here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

ASSETS_DIR = Path(__file__).resolve().parent / "assets"
FIXTURE_DB_PATH = ASSETS_DIR / "db" / "multiwoz_fixture.json"

# Slots compared as clock times rather than plain text.
TIME_SLOTS = ("leaveAt", "arriveBy")

_TIME_RE = re.compile(r"(\d{1,2}):(\d{2})")


class ToolError(Exception):
    """Recoverable tool failure; the message is fed back to the LLM as an Observation."""


class DatabaseLoadError(Exception):
    """The database document is malformed; names the offending domain/entity."""


@dataclass(frozen=True)
class DomainSchema:
    name: str
    slots: tuple[str, ...]
    informable: tuple[str, ...]
    requestable: tuple[str, ...]
    bookable: bool


@dataclass(frozen=True)
class Entity:
    domain: str
    attributes: dict[str, Any]

    @property
    def entity_id(self) -> int:
        return int(self.attributes["id"])

    def get(self, slot: str, default: Any = None) -> Any:
        return self.attributes.get(slot, default)

    @property
    def name(self) -> str | None:
        """Human-facing identifier: `name` where present, else `trainID`."""
        value = self.attributes.get("name") or self.attributes.get("trainID")
        return str(value) if value is not None else None


@dataclass
class BeliefState:
    """Per-domain slot->constraint map accumulated across turns."""

    constraints: dict[str, dict[str, Any]] = field(default_factory=dict)

    def for_domain(self, domain: str) -> dict[str, Any]:
        return self.constraints.get(domain, {})

    def invalid_domains(self, db: "DomainDatabase") -> list[str]:
        return [d for d in self.constraints if d not in db.schemas]

    def invalid_slots(self, db: "DomainDatabase", domain: str) -> list[str]:
        schema = db.schemas.get(domain)
        if schema is None:
            return list(self.for_domain(domain))
        return [s for s in self.for_domain(domain) if s not in schema.slots]

    def is_valid(self, db: "DomainDatabase") -> bool:
        if self.invalid_domains(db):
            return False
        return all(not self.invalid_slots(db, d) for d in self.constraints)

    def copy(self) -> "BeliefState":
        return BeliefState({d: dict(c) for d, c in self.constraints.items()})

    def merge_from(self, other: dict[str, dict[str, Any]]) -> None:
        for domain, constraints in other.items():
            self.constraints[domain] = dict(constraints)


@dataclass
class BookingLedger:
    """Issues unique 8-digit booking references, monotonically increasing per run."""

    counter: int = 0
    turn_index: int = 0
    issued: list[tuple[str, str, int]] = field(default_factory=list)

    def next_reference(self, domain: str) -> str:
        self.counter += 1
        code = f"{self.counter:08d}"
        self.issued.append((code, domain, self.turn_index))
        return code


class DomainDatabase:
    """Ordered domain schemas plus per-domain entity lists. Immutable after load."""

    def __init__(self, schemas: list[DomainSchema], entities: dict[str, list[Entity]]):
        self.schemas: dict[str, DomainSchema] = {s.name: s for s in schemas}
        self.entities: dict[str, list[Entity]] = entities

    @property
    def domain_names(self) -> list[str]:
        return list(self.schemas)

    def schema(self, domain: str) -> DomainSchema:
        try:
            return self.schemas[domain]
        except KeyError:
            raise ToolError(
                f"unknown domain: {domain}. Valid domains: [{', '.join(self.schemas)}]"
            ) from None

    def entities_for(self, domain: str) -> list[Entity]:
        self.schema(domain)
        return self.entities.get(domain, [])

    def find_entity(self, domain: str, name: str) -> Entity | None:
        wanted = normalize(name)
        for entity in self.entities.get(domain, []):
            if entity.name is not None and normalize(entity.name) == wanted:
                return entity
        return None

    def all_entity_names(self) -> list[tuple[str, str]]:
        """(domain, display name) pairs for every entity with an identifier."""
        out = []
        for domain, entities in self.entities.items():
            for entity in entities:
                if entity.name:
                    out.append((domain, entity.name))
        return out


def normalize(value: Any) -> str:
    """Canonical comparison form: rendered, trimmed, lowercased."""
    return render_value(value).strip().lower()


def is_dontcare(text: str) -> bool:
    return normalize(text) in ("dontcare", "don't care", "dont care", "do not care", "any")


def parse_time(text: str) -> tuple[int, int] | None:
    """Extract an HH:MM clock time, tolerating prefixes like 'after 14:15'."""
    match = _TIME_RE.search(str(text))
    if not match:
        return None
    hours, minutes = int(match.group(1)), int(match.group(2))
    if hours > 23 or minutes > 59:
        return None
    return hours, minutes


def load_database(source: str | Path | dict) -> DomainDatabase:
    """Load a database document (path or already-parsed mapping) and validate invariants."""
    if isinstance(source, (str, Path)):
        try:
            document = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DatabaseLoadError(f"cannot read database document: {exc}") from exc
    else:
        document = source

    if not isinstance(document, dict) or "domains" not in document:
        raise DatabaseLoadError("database document must contain a top-level 'domains' map")

    schemas: list[DomainSchema] = []
    for name, spec in document.get("domains", {}).items():
        try:
            schema = DomainSchema(
                name=name,
                slots=tuple(spec["slots"]),
                informable=tuple(spec.get("informable", [])),
                requestable=tuple(spec.get("requestable", [])),
                bookable=bool(spec.get("bookable", False)),
            )
        except (KeyError, TypeError) as exc:
            raise DatabaseLoadError(f"domain '{name}': malformed schema ({exc})") from exc
        for slot in schema.informable + schema.requestable:
            if slot not in schema.slots:
                raise DatabaseLoadError(f"domain '{name}': slot '{slot}' not in slot list")
        schemas.append(schema)

    by_name = {s.name: s for s in schemas}
    if len(by_name) != len(schemas):
        raise DatabaseLoadError("duplicate domain names")

    entities: dict[str, list[Entity]] = {s.name: [] for s in schemas}
    for domain, records in document.get("entities", {}).items():
        schema = by_name.get(domain)
        if schema is None:
            raise DatabaseLoadError(f"entities listed for unknown domain '{domain}'")
        seen_ids: set[int] = set()
        for record in records:
            if "id" not in record:
                raise DatabaseLoadError(f"domain '{domain}': entity without id: {record}")
            for key in record:
                if key == "Ref":
                    continue
                if key not in schema.slots:
                    raise DatabaseLoadError(
                        f"domain '{domain}': entity id {record['id']} has unknown slot '{key}'"
                    )
            entity_id = int(record["id"])
            if entity_id in seen_ids:
                raise DatabaseLoadError(f"domain '{domain}': duplicate entity id {entity_id}")
            seen_ids.add(entity_id)
            if schema.bookable and record.get("Ref") != f"{entity_id:08d}":
                raise DatabaseLoadError(
                    f"domain '{domain}': entity id {entity_id} needs Ref {entity_id:08d}"
                )
            entities[domain].append(Entity(domain=domain, attributes=dict(record)))

    return DomainDatabase(schemas, entities)


def load_fixture_database() -> DomainDatabase:
    return load_database(FIXTURE_DB_PATH)


def list_domains(db: DomainDatabase) -> list[str]:
    return db.domain_names


def list_slots(db: DomainDatabase, domain: str) -> list[str]:
    return list(db.schema(domain).slots)


def matches(entity: Entity, constraints: dict[str, Any]) -> bool:
    """True iff the entity satisfies every constraint.

    Text slots compare by normalized equality, numeric values numerically,
    and the travel-time slots by direction: an entity satisfies `leaveAt`
    when it leaves at or after the constraint, `arriveBy` when it arrives
    at or before it. 'dontcare' on either side always matches.
    """
    for slot, wanted in constraints.items():
        wanted_text = normalize(wanted)
        have = entity.get(slot)
        have_text = normalize(have) if have is not None else ""
        if is_dontcare(wanted_text) or is_dontcare(have_text):
            continue
        if have is None:
            return False
        if slot in TIME_SLOTS:
            want_time = parse_time(wanted_text)
            have_time = parse_time(have_text)
            if want_time is not None and have_time is not None:
                if slot == "leaveAt" and have_time < want_time:
                    return False
                if slot == "arriveBy" and have_time > want_time:
                    return False
                continue
        want_num = _as_number(wanted_text)
        have_num = _as_number(have_text)
        if want_num is not None and have_num is not None:
            if want_num != have_num:
                return False
            continue
        if wanted_text != have_text:
            return False
    return True


def _as_number(text: str) -> float | None:
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


def db_query(
    db: DomainDatabase,
    domain: str,
    state: BeliefState | dict,
    topk: int | None = 1,
    strict: bool = True,
) -> tuple[list[Entity], list[str]]:
    """Return up to `topk` entities matching the belief-state constraints, in database order.

    Constraint slots missing from the domain schema raise a ToolError in
    strict mode; in lenient mode they are dropped and reported in the
    returned warning list. `topk=None` returns every match.
    """
    schema = db.schema(domain)
    if isinstance(state, dict):
        state = BeliefState({k: dict(v) for k, v in state.items() if isinstance(v, dict)})
    constraints = dict(state.for_domain(domain))

    invalid = [s for s in constraints if s not in schema.slots]
    warnings: list[str] = []
    if invalid:
        if strict:
            raise ToolError(f"Invalid slots: {invalid}. Valid slots: {list(schema.slots)}")
        for slot in invalid:
            constraints.pop(slot)
        warnings.append(f"ignored invalid slots: {invalid}")

    if topk is not None and topk < 1:
        raise ToolError(f"topk must be a positive integer, got {topk}")

    results = []
    for entity in db.entities_for(domain):
        if matches(entity, constraints):
            results.append(entity)
            if topk is not None and len(results) >= topk:
                break
    return results, warnings


def get_booking_reference(
    db: DomainDatabase,
    ledger: BookingLedger,
    domain: str,
    utterance: str | None = None,
) -> str:
    schema = db.schema(domain)
    if not schema.bookable:
        raise ToolError(f"domain '{domain}' does not take bookings")
    return ledger.next_reference(domain)


def render_value(value: Any) -> str:
    """Render an attribute value in the observation style: bare tokens, no quotes."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(render_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {render_value(v)}" for k, v in value.items()) + "}"
    return repr(value) if isinstance(value, float) else str(value)


def render_entity(db: DomainDatabase, entity: Entity) -> str:
    """One-entity text in schema slot order, with Ref trailing (as the agent sees it)."""
    schema = db.schemas[entity.domain]
    parts = [
        f"{slot}: {render_value(entity.attributes[slot])}"
        for slot in schema.slots
        if slot in entity.attributes
    ]
    if "Ref" in entity.attributes:
        parts.append(f"Ref: {entity.attributes['Ref']}")
    return "{" + ", ".join(parts) + "}"


def render_entity_list(db: DomainDatabase, entities: Iterable[Entity]) -> str:
    return "[" + ", ".join(render_entity(db, e) for e in entities) + "]"
