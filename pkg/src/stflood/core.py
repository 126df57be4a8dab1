"""Shared vocabulary: configuration constants, interference patterns, feedback and metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from stflood.simnet.flood import RoundRecord

NodeId = int


class ValidationError(ValueError):
    """Invalid user-supplied value (bad range, malformed file, ...)."""


class InvalidPatternError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


@dataclass(frozen=True)
class NetConfig:
    slot_max_ms: float = 20.0
    microslot_ms: float = 1.2
    airtime_ms: float = 0.96
    n_max: int = 8
    k_nodes: int = 10
    history_len: int = 2

    @property
    def microslot_budget(self) -> int:
        # tolerate 20 / 1.2 landing a hair under an integer
        return int(self.slot_max_ms / self.microslot_ms + 1e-9)

    @property
    def input_size(self) -> int:
        return 2 * self.k_nodes + self.n_max + 1 + self.history_len


DEFAULT_CONFIG = NetConfig()
N_MAX = DEFAULT_CONFIG.n_max
SLOT_MAX_MS = DEFAULT_CONFIG.slot_max_ms


def check_ntx(value: int, n_max: int = N_MAX) -> int:
    if isinstance(value, bool) or int(value) != value or not 0 <= value <= n_max:
        raise ValidationError(f"N_TX must be an integer in [0, {n_max}], got {value!r}")
    return int(value)


@dataclass(frozen=True)
class InterferencePattern:
    """Periodic burst jammer; ``kind='none'`` means a clean channel."""

    kind: str = "none"
    burst_ms: float = 0.0
    period_ms: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "periodic-burst"):
            raise InvalidPatternError(f"unknown interference kind {self.kind!r}")
        if self.kind == "periodic-burst":
            if self.period_ms <= 0:
                raise InvalidPatternError("period_ms must be positive for a periodic burst")
            if self.burst_ms < 0 or self.burst_ms > self.period_ms:
                raise InvalidPatternError("burst_ms must lie in [0, period_ms]")

    @classmethod
    def none(cls) -> "InterferencePattern":
        return cls()

    @classmethod
    def burst(cls, burst_ms: float, period_ms: float) -> "InterferencePattern":
        return cls("periodic-burst", float(burst_ms), float(period_ms))

    @classmethod
    def from_duty(cls, duty: float, burst_ms: float = 13.0) -> "InterferencePattern":
        """13 ms bursts repeated so that the duty cycle is ~``duty`` (period rounded to 1 ms)."""
        if duty <= 0:
            return cls.none()
        return cls.burst(burst_ms, max(burst_ms, round(burst_ms / duty)))

    def to_dict(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        return {"kind": self.kind, "burst_ms": self.burst_ms, "period_ms": self.period_ms}

    @classmethod
    def from_dict(cls, d: dict) -> "InterferencePattern":
        kind = d.get("kind", "none")
        if kind == "none":
            return cls.none()
        try:
            return cls(kind, float(d["burst_ms"]), float(d["period_ms"]))
        except KeyError as exc:
            raise InvalidPatternError(f"pattern is missing field {exc}") from None


def duty_cycle(pattern: InterferencePattern) -> float:
    if pattern.kind == "none":
        return 0.0
    if pattern.period_ms == 0:
        raise InvalidPatternError("period_ms is zero")
    return pattern.burst_ms / pattern.period_ms


@dataclass(frozen=True)
class NodeFeedback:
    reliability: float
    radio_on_ms: float
    present: bool = True

    @classmethod
    def pessimistic(cls, slot_max_ms: float = SLOT_MAX_MS) -> "NodeFeedback":
        return cls(0.0, slot_max_ms, False)

    def effective(self, slot_max_ms: float = SLOT_MAX_MS) -> tuple[float, float]:
        """(reliability, radio-on) as a consumer must read it: absent means worst case."""
        if not self.present:
            return 0.0, slot_max_ms
        return self.reliability, self.radio_on_ms


@dataclass(frozen=True)
class Metrics:
    reliability_pct: float
    avg_radio_on_ms: float
    slot_count: int = 0
    destination_slots: int = 0


def aggregate_metrics(rounds: Sequence["RoundRecord"] | Iterable["RoundRecord"]) -> Metrics:
    delivered = 0
    destinations = 0
    radio_sum = 0.0
    node_slots = 0
    slots = 0
    for rec in rounds:
        for flood in rec.slots:
            slots += 1
            for node, got in flood.received.items():
                if node == flood.source:
                    continue
                destinations += 1
                delivered += bool(got)
            radio_sum += sum(flood.radio_on_ms.values())
            node_slots += len(flood.radio_on_ms)
    if slots == 0:
        raise EmptyInputError("aggregate_metrics needs at least one round")
    rel = 100.0 * delivered / destinations if destinations else 100.0
    return Metrics(rel, radio_sum / node_slots, slots, destinations)
