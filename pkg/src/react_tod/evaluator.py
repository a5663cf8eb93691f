"""Per-dialogue and corpus metrics, plus automated trace-error analysis.

Scoring grounds correctness in the database: a requested slot is answered
correctly when the informed value belongs to an entity consistent with the
goal constraints. Percentages are truncated (not rounded) to two decimals
for display; stored values keep full precision.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal

from .domain_db import DomainDatabase
from .llm_backend import CostLedger
from .logs import DialogueLog
from .react_engine import extract_query_state
from .user_simulator import Goal, goal_status

ISSUE_KINDS = (
    "InvalidSlot",
    "InvalidDomain",
    "FormatDeviation",
    "PrematureBooking",
    "RoleSwitch",
    "UnverifiedClaim",
)

# Words signalling booking intent in a user utterance (prefix match).
BOOKING_LEXICON = ("book", "reserv", "ticket", "table", "room for")

_ROLE_MARKER_RE = re.compile(r"^\s*(system|assistant)\s*:", re.IGNORECASE)


class EvaluationError(Exception):
    pass


@dataclass
class DialogueScore:
    turns: int
    precision: float
    recall: float
    f1: float
    book_rate: float
    complete: int
    success: int


@dataclass
class CorpusMetrics:
    dialogues: int
    avg_turns: float
    precision: float
    recall: float
    f1: float
    book_rate: float
    success_rate: float
    complete_rate: float
    total_cost: Decimal = Decimal(0)


@dataclass
class TraceIssue:
    kind: str
    turn_index: int
    evidence: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "turn": self.turn_index, "evidence": self.evidence}


def truncate_percent(value: float | Decimal) -> Decimal:
    """Display form: value in [0,1] rendered as a percentage cut at 2 decimals."""
    as_decimal = value if isinstance(value, Decimal) else Decimal(repr(value))
    return (as_decimal * 100).quantize(Decimal("0.01"), rounding=ROUND_DOWN)


def score_dialogue(goal: Goal, log: DialogueLog, db: DomainDatabase) -> DialogueScore:
    if not log.turns:
        raise EvaluationError("cannot score an empty dialogue")
    for turn in log.turns:
        if turn.system_acts is None or turn.belief is None:
            raise EvaluationError("dialogue log is missing semantic annotations")

    report = goal_status(goal, log, db)

    total = report.total_requests
    answered = report.answered_requests
    correct = report.correct_requests
    recall = correct / total if total else 1.0
    if answered:
        precision = correct / answered
    else:
        precision = 1.0 if total == 0 else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)

    total_books = report.total_bookings
    book_rate = report.valid_bookings / total_books if total_books else 1.0

    complete = int(
        log.termination == "goodbye"
        and not log.abandoned_domains
        and answered == total
    )
    success = int(
        complete == 1
        and correct == total
        and report.valid_bookings == total_books
    )

    return DialogueScore(
        turns=len(log.turns),
        precision=precision,
        recall=recall,
        f1=f1,
        book_rate=book_rate,
        complete=complete,
        success=success,
    )


def aggregate(scores: list[DialogueScore], cost: CostLedger | None = None) -> CorpusMetrics:
    if not scores:
        raise EvaluationError("no dialogue scores to aggregate")
    count = len(scores)
    return CorpusMetrics(
        dialogues=count,
        avg_turns=sum(s.turns for s in scores) / count,
        precision=sum(s.precision for s in scores) / count,
        recall=sum(s.recall for s in scores) / count,
        f1=sum(s.f1 for s in scores) / count,
        book_rate=sum(s.book_rate for s in scores) / count,
        success_rate=sum(s.success for s in scores) / count,
        complete_rate=sum(s.complete for s in scores) / count,
        total_cost=cost.total_cost if cost is not None else Decimal(0),
    )


def render_metrics_table(metrics: CorpusMetrics) -> str:
    """Text report in the standard column order."""
    header = (
        f"{'Dialogues':>10}  {'Avg Turns':>9}  {'Inform Rate (P/R/F1)':>22}  "
        f"{'Book Rate':>9}  {'Success Rate':>12}  {'Complete Rate':>13}"
    )
    inform = (
        f"{truncate_percent(metrics.precision)} / {truncate_percent(metrics.recall)}"
        f" / {truncate_percent(metrics.f1)}"
    )
    row = (
        f"{metrics.dialogues:>10}  {metrics.avg_turns:>9.2f}  {inform:>22}  "
        f"{truncate_percent(metrics.book_rate):>9}  {truncate_percent(metrics.success_rate):>12}  "
        f"{truncate_percent(metrics.complete_rate):>13}"
    )
    lines = [header, row]
    if metrics.total_cost:
        lines.append(f"Total cost: ${metrics.total_cost}")
    return "\n".join(lines)


def metrics_to_dict(metrics: CorpusMetrics) -> dict:
    return {
        "dialogues": metrics.dialogues,
        "avg_turns": metrics.avg_turns,
        "inform_precision": metrics.precision,
        "inform_recall": metrics.recall,
        "inform_f1": metrics.f1,
        "book_rate": metrics.book_rate,
        "success_rate": metrics.success_rate,
        "complete_rate": metrics.complete_rate,
        "display": {
            "inform": f"{truncate_percent(metrics.precision)} / {truncate_percent(metrics.recall)}"
            f" / {truncate_percent(metrics.f1)}",
            "book_rate": str(truncate_percent(metrics.book_rate)),
            "success_rate": str(truncate_percent(metrics.success_rate)),
            "complete_rate": str(truncate_percent(metrics.complete_rate)),
        },
        "total_cost": str(metrics.total_cost),
    }


def analyze_trace(log: DialogueLog, db: DomainDatabase) -> list[TraceIssue]:
    """Mechanized audit of one dialogue's traces and utterances."""
    issues: list[TraceIssue] = []
    query_observations: list[str] = []
    for turn in log.turns:
        for call in turn.trace.tool_calls:
            if call.name == "db_query":
                query_observations.append(call.observation.lower())

    for index, turn in enumerate(log.turns):
        if _ROLE_MARKER_RE.match(turn.user_text):
            issues.append(TraceIssue("RoleSwitch", index, turn.user_text[:120]))

        if turn.trace.parse_retries > 0:
            evidence = turn.trace.raw_outputs[0][:120] if turn.trace.raw_outputs else ""
            issues.append(TraceIssue("FormatDeviation", index, evidence))

        for call in turn.trace.tool_calls:
            if call.name == "db_query":
                issues.extend(_audit_query(call, index, db))
            elif call.name == "get_booking_reference" and call.ok:
                if not _booking_intent(turn.user_text):
                    issues.append(TraceIssue("PrematureBooking", index, turn.user_text[:120]))

        issues.extend(_unverified_claims(turn.system_text, index, db, query_observations))

    return issues


def _audit_query(call, turn_index: int, db: DomainDatabase) -> list[TraceIssue]:
    issues = []
    try:
        state = extract_query_state(call.input)
    except Exception:
        return []
    domain_param = call.input.get("domain")
    domains = list(state)
    if isinstance(domain_param, str) and domain_param not in domains:
        domains.append(domain_param)
    for domain in domains:
        schema = db.schemas.get(domain)
        if schema is None:
            issues.append(
                TraceIssue("InvalidDomain", turn_index, f"db_query used unknown domain '{domain}'")
            )
            continue
        for slot in state.get(domain, {}):
            if slot not in schema.slots:
                issues.append(
                    TraceIssue(
                        "InvalidSlot",
                        turn_index,
                        f"db_query used slot '{slot}: {state[domain][slot]}' not in {domain} schema",
                    )
                )
    return issues


def _booking_intent(user_text: str) -> bool:
    lowered = user_text.lower()
    return any(
        re.search(r"\b" + re.escape(word), lowered) is not None for word in BOOKING_LEXICON
    )


def _unverified_claims(
    system_text: str, turn_index: int, db: DomainDatabase, query_observations: list[str]
) -> list[TraceIssue]:
    issues = []
    lowered = system_text.lower()
    seen: set[str] = set()
    for _, name in db.all_entity_names():
        key = name.lower()
        if key in seen:
            continue
        if re.search(r"(?<!\w)" + re.escape(key) + r"(?!\w)", lowered):
            seen.add(key)
            if not any(key in obs for obs in query_observations):
                issues.append(
                    TraceIssue(
                        "UnverifiedClaim",
                        turn_index,
                        f"answer names '{name}' which no db_query observation contains",
                    )
                )
    return issues


def issue_histogram(issues: list[TraceIssue]) -> dict[str, int]:
    counts = Counter(issue.kind for issue in issues)
    return {kind: counts.get(kind, 0) for kind in ISSUE_KINDS}
