"""Experiment scenarios: topology, interference timeline, controller and seed.

Scenario file (JSON)::

    {"name": "dynamic", "topology": "reference" | "path/to/topology.json",
     "data_slots": 18, "round_period_s": 4, "duration_rounds": 405,
     "controller": "dqn", "seed": 0, "static_ntx": 3,
     "timeline": [{"start_round": 0, "pattern": {"kind": "none"}},
                  {"start_round": 105, "pattern": {"kind": "periodic-burst", "burst_ms": 13, "period_ms": 43}}]}

Time is counted in rounds (4 s each): five minutes are 75 rounds.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stflood.core import InterferencePattern, ValidationError
from stflood.simnet.topology import Topology, reference_topology

CONTROLLERS = ("dqn", "pid", "mab", "static")
ROUNDS_PER_MINUTE = 15


@dataclass
class Scenario:
    name: str
    topology: Topology
    timeline: list[tuple[int, InterferencePattern]] = field(default_factory=lambda: [(0, InterferencePattern())])
    duration_rounds: int = 600
    data_slots: int | None = None
    round_period_s: float = 4.0
    controller: str = "static"
    seed: int = 0
    static_ntx: int = 3
    topology_ref: str = "reference"

    def __post_init__(self):
        if not self.timeline:
            self.timeline = [(0, InterferencePattern())]
        starts = [s for s, _ in self.timeline]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise ValidationError("timeline must be sorted by strictly increasing start_round")
        if starts[0] != 0:
            self.timeline = [(0, InterferencePattern())] + list(self.timeline)
        if self.duration_rounds < self.timeline[-1][0]:
            raise ValidationError("duration_rounds ends before the last timeline segment starts")
        if self.controller not in CONTROLLERS:
            raise ValidationError(f"unknown controller {self.controller!r}")
        if self.data_slots is None:
            self.data_slots = self.topology.node_count
        self._starts = [s for s, _ in self.timeline]

    def pattern_at(self, round_index: int) -> InterferencePattern:
        i = bisect.bisect_right(self._starts, round_index) - 1
        return self.timeline[max(i, 0)][1]

    def segments(self) -> list[tuple[int, int, InterferencePattern]]:
        """(start, end_exclusive, pattern) clipped to the scenario duration."""
        ends = self._starts[1:] + [self.duration_rounds]
        return [(s, e, p) for (s, p), e in zip(self.timeline, ends) if s < self.duration_rounds]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "topology": self.topology_ref,
            "data_slots": self.data_slots,
            "round_period_s": self.round_period_s,
            "duration_rounds": self.duration_rounds,
            "controller": self.controller,
            "seed": self.seed,
            "static_ntx": self.static_ntx,
            "timeline": [{"start_round": s, "pattern": p.to_dict()} for s, p in self.timeline],
        }

    def digest(self) -> str:
        """Short hash over the scenario and its topology, for artifact metadata."""
        blob = json.dumps({"scenario": self.to_dict(), "topology": self.topology.to_dict()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_overrides(self, **kw) -> "Scenario":
        d = {k: getattr(self, k) for k in (
            "name", "topology", "timeline", "duration_rounds", "data_slots", "round_period_s",
            "controller", "seed", "static_ntx", "topology_ref")}
        d.update({k: v for k, v in kw.items() if v is not None})
        return Scenario(**d)


def _resolve_topology(ref: str, base: Path | None) -> Topology:
    if ref in ("reference", "", None):
        return reference_topology()
    path = Path(ref)
    if not path.is_absolute() and base is not None and not path.exists():
        path = base / path
    if not path.exists():
        raise FileNotFoundError(f"topology file not found: {ref}")
    return Topology.load(path)


def scenario_from_dict(d: dict, base: Path | None = None, topology: Topology | None = None) -> Scenario:
    try:
        timeline = []
        for seg in d.get("timeline", []):
            if isinstance(seg, dict):
                timeline.append((int(seg["start_round"]), InterferencePattern.from_dict(seg.get("pattern", {}))))
            else:
                timeline.append((int(seg[0]), InterferencePattern.from_dict(seg[1])))
        ref = d.get("topology", "reference")
        topo = topology if topology is not None else _resolve_topology(ref, base)
        return Scenario(
            name=d.get("name", "scenario"),
            topology=topo,
            timeline=timeline,
            duration_rounds=int(d.get("duration_rounds", 600)),
            data_slots=d.get("data_slots"),
            round_period_s=float(d.get("round_period_s", 4.0)),
            controller=d.get("controller", "static"),
            seed=int(d.get("seed", 0)),
            static_ntx=int(d.get("static_ntx", 3)),
            topology_ref=str(ref),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed scenario: {exc!r}") from None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(d, base=path.parent)


def minutes(m: float) -> int:
    return int(round(m * ROUNDS_PER_MINUTE))


JAM_30 = InterferencePattern.burst(13, 43)
JAM_5 = InterferencePattern.burst(13, 230)


def dynamic_timeline() -> list[tuple[int, InterferencePattern]]:
    """7 min clean, 5 min at 30 %, 5 min clean, 5 min at 5 %, then clean."""
    free = InterferencePattern()
    t = [0, minutes(7), minutes(12), minutes(17), minutes(22)]
    return [(t[0], free), (t[1], JAM_30), (t[2], free), (t[3], JAM_5), (t[4], free)]


def mixed_timeline(
    total_rounds: int, seed: int = 0, clean_rounds=(800, 2000), jam_rounds=(60, 200)
) -> list[tuple[int, InterferencePattern]]:
    """Clean stretches alternating with jammer episodes of 5-35 % duty cycle.

    Episode lengths are drawn uniformly from the given ranges; with the
    defaults about nine rounds in ten are clean, so a trace collected over it
    is dominated by the interference-free regime.
    """
    rng = np.random.default_rng(seed)
    duties = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35]
    timeline, r, clean = [], 0, True
    while r < total_rounds:
        if clean:
            timeline.append((r, InterferencePattern()))
            r += int(rng.integers(*clean_rounds))
        else:
            timeline.append((r, InterferencePattern.from_duty(float(rng.choice(duties)))))
            r += int(rng.integers(*jam_rounds))
        clean = not clean
    return timeline


def builtin_scenario(name: str, topology: Topology | None = None) -> Scenario:
    topo = topology or reference_topology()
    if name == "free":
        return Scenario("free", topo, duration_rounds=600)
    if name == "dynamic":
        return Scenario("dynamic", topo, dynamic_timeline(), duration_rounds=minutes(27))
    if name == "mab":
        return Scenario("mab", topo, duration_rounds=4500, controller="mab")
    if name == "mixed":
        return Scenario("mixed", topo, mixed_timeline(40_000), duration_rounds=40_000)
    if name.startswith("static-"):
        duty = float(name.split("-", 1)[1]) / 100.0
        return Scenario(name, topo, [(0, InterferencePattern.from_duty(duty))], duration_rounds=450)
    raise ValidationError(f"unknown built-in scenario {name!r}")


BUILTIN = ("free", "dynamic", "mab", "mixed", "static-<duty%>")


def get_scenario(ref: str, topology: Topology | None = None) -> Scenario:
    """A built-in name or the path of a scenario file."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise FileNotFoundError(f"scenario file not found: {ref}")
        scen = load_scenario(path)
        return scen.with_overrides(topology=topology) if topology is not None else scen
    return builtin_scenario(ref, topology)
