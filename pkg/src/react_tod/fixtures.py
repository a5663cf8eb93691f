"""Bundled dialogue fixtures: canned user turns plus scripted system completions.

Each fixture replays one dialogue deterministically (several are transcripts
of known failure modes: invalid slots, role switching, premature bookings,
format deviations). The batch runner's scripted backend cycles through them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .domain_db import ASSETS_DIR, BookingLedger, DomainDatabase
from .llm_backend import ScriptedBackend
from .logs import DialogueLog
from .react_engine import make_session, run_dialogue
from .user_simulator import Goal, ScriptedUser

FIXTURES_DIR = ASSETS_DIR / "fixtures"


@dataclass
class DialogueFixture:
    name: str
    goal: Goal
    user_turns: list[dict]
    system_script: list[str]
    labeled_issues: list[str] = field(default_factory=list)
    labeled_system_acts: list[list[dict]] | None = None

    @classmethod
    def from_file(cls, path: Path) -> "DialogueFixture":
        data = json.loads(path.read_text())
        labels = data.get("labels", {})
        return cls(
            name=data["name"],
            goal=Goal.from_dict(data["goal"]),
            user_turns=data["user_turns"],
            system_script=data["system_script"],
            labeled_issues=labels.get("issues", []),
            labeled_system_acts=labels.get("system_acts"),
        )


def load_fixtures(directory: str | Path = FIXTURES_DIR) -> list[DialogueFixture]:
    return [DialogueFixture.from_file(path) for path in sorted(Path(directory).glob("*.json"))]


def fixture_by_name(name: str, directory: str | Path = FIXTURES_DIR) -> DialogueFixture:
    for fixture in load_fixtures(directory):
        if fixture.name == name:
            return fixture
    raise KeyError(f"no fixture named {name!r}")


def replay_fixture(
    fixture: DialogueFixture,
    db: DomainDatabase,
    max_turns: int = 20,
    strict_slots: bool = True,
) -> DialogueLog:
    """Run one fixture end to end through the real engine with a fresh session."""
    session = make_session(db, ledger=BookingLedger(), goal=fixture.goal, strict_slots=strict_slots)
    user = ScriptedUser(fixture.goal, db, fixture.user_turns)
    backend = ScriptedBackend(fixture.system_script)
    return run_dialogue(session, user, backend, max_turns=max_turns)
