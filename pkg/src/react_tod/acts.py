"""Semantic dialogue acts exchanged between the simulated user and the system."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class UserAct:
    kind: str  # inform | request | book_request | goodbye
    domain: str = ""
    slot: str = ""
    value: str = ""
    constraints: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.domain:
            out["domain"] = self.domain
        if self.slot:
            out["slot"] = self.slot
        if self.value:
            out["value"] = self.value
        if self.constraints:
            out["constraints"] = dict(self.constraints)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "UserAct":
        return cls(
            kind=data["kind"],
            domain=data.get("domain", ""),
            slot=data.get("slot", ""),
            value=data.get("value", ""),
            constraints=tuple(sorted(data.get("constraints", {}).items())),
        )


def inform(domain: str, slot: str, value: str) -> UserAct:
    return UserAct("inform", domain=domain, slot=slot, value=str(value))


def request(domain: str, slot: str) -> UserAct:
    return UserAct("request", domain=domain, slot=slot)


def book_request(domain: str, constraints: dict | None = None) -> UserAct:
    pairs = tuple(sorted((k, str(v)) for k, v in (constraints or {}).items()))
    return UserAct("book_request", domain=domain, constraints=pairs)


def goodbye() -> UserAct:
    return UserAct("goodbye")


@dataclass(frozen=True)
class SystemAct:
    kind: str  # inform_value | offer_entity | booking_ref | no_result | request_info | other
    domain: str = ""
    slot: str = ""
    value: str = ""
    # Source span in the system utterance; not part of act identity.
    span: tuple[int, int] = field(default=(0, 0), compare=False)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        for key in ("domain", "slot", "value"):
            if getattr(self, key):
                out[key] = getattr(self, key)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SystemAct":
        return cls(
            kind=data["kind"],
            domain=data.get("domain", ""),
            slot=data.get("slot", ""),
            value=data.get("value", ""),
        )


def inform_value(domain: str, slot: str, value: str, span: tuple[int, int] = (0, 0)) -> SystemAct:
    return SystemAct("inform_value", domain=domain, slot=slot, value=str(value), span=span)


def offer_entity(domain: str, name: str, span: tuple[int, int] = (0, 0)) -> SystemAct:
    return SystemAct("offer_entity", domain=domain, value=name, span=span)


def booking_ref(code: str, span: tuple[int, int] = (0, 0)) -> SystemAct:
    return SystemAct("booking_ref", value=code, span=span)


def no_result(span: tuple[int, int] = (0, 0)) -> SystemAct:
    return SystemAct("no_result", span=span)


def request_info(domain: str, slot: str, span: tuple[int, int] = (0, 0)) -> SystemAct:
    return SystemAct("request_info", domain=domain, slot=slot, span=span)


def other() -> SystemAct:
    return SystemAct("other")
