"""Dialogue transcripts with semantic annotations and reasoning traces.

One DialogueLog captures a full dialogue: the goal, per-turn utterances and
acts, the agent's reasoning trace, belief snapshots and usage totals. Logs
serialize to self-contained JSON records (one per line in batch output) and
round-trip losslessly, timestamps excluded by design so replays are
byte-comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .acts import SystemAct, UserAct
from .llm_backend import Usage

if TYPE_CHECKING:
    from .user_simulator import Goal


@dataclass
class ToolCall:
    name: str
    input: dict
    observation: str
    ok: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "input": self.input, "observation": self.observation, "ok": self.ok}

    @classmethod
    def from_dict(cls, data: dict) -> "ToolCall":
        return cls(data["name"], data["input"], data["observation"], data["ok"])


@dataclass
class AgentTrace:
    """Everything the agent did inside one turn."""

    rendered_steps: list[str] = field(default_factory=list)
    raw_outputs: list[str] = field(default_factory=list)
    tool_calls: list[ToolCall] = field(default_factory=list)
    parse_retries: int = 0
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "steps": self.rendered_steps,
            "raw_outputs": self.raw_outputs,
            "tool_calls": [c.to_dict() for c in self.tool_calls],
            "parse_retries": self.parse_retries,
            "fallback": self.fallback,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AgentTrace":
        return cls(
            rendered_steps=list(data.get("steps", [])),
            raw_outputs=list(data.get("raw_outputs", [])),
            tool_calls=[ToolCall.from_dict(c) for c in data.get("tool_calls", [])],
            parse_retries=data.get("parse_retries", 0),
            fallback=data.get("fallback", False),
        )


@dataclass
class TurnRecord:
    user_text: str
    user_acts: list[UserAct]
    system_text: str
    system_acts: list[SystemAct]
    trace: AgentTrace
    belief: dict[str, dict[str, str]]

    def to_dict(self) -> dict:
        return {
            "user": self.user_text,
            "user_acts": [a.to_dict() for a in self.user_acts],
            "system": self.system_text,
            "system_acts": [a.to_dict() for a in self.system_acts],
            "trace": self.trace.to_dict(),
            "belief": self.belief,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TurnRecord":
        return cls(
            user_text=data["user"],
            user_acts=[UserAct.from_dict(a) for a in data.get("user_acts", [])],
            system_text=data["system"],
            system_acts=[SystemAct.from_dict(a) for a in data.get("system_acts", [])],
            trace=AgentTrace.from_dict(data.get("trace", {})),
            belief=data.get("belief", {}),
        )


@dataclass
class DialogueLog:
    goal: "Goal"
    turns: list[TurnRecord]
    usage: Usage = field(default_factory=Usage)
    termination: str = "goodbye"  # goodbye | max_turns | backend_error
    abandoned_domains: list[str] = field(default_factory=list)

    @property
    def turn_count(self) -> int:
        return len(self.turns)

    def to_dict(self) -> dict:
        return {
            "goal": self.goal.to_dict(),
            "turns": [t.to_dict() for t in self.turns],
            "usage": {"input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens},
            "termination": self.termination,
            "abandoned_domains": self.abandoned_domains,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DialogueLog":
        from .user_simulator import Goal

        usage_info = data.get("usage", {})
        return cls(
            goal=Goal.from_dict(data["goal"]),
            turns=[TurnRecord.from_dict(t) for t in data["turns"]],
            usage=Usage(usage_info.get("input_tokens", 0), usage_info.get("output_tokens", 0)),
            termination=data.get("termination", "goodbye"),
            abandoned_domains=list(data.get("abandoned_domains", [])),
        )
