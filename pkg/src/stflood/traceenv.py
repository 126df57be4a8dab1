"""Trace collection with a sequential N sweep, the JSONL trace format and the replay environment.

Trace file (JSONL)::

    {"format": "stflood-trace", "version": 1, "node_count": 18, "n_max": 8,
     "block_count": 100, "sweep": [1, ..., 8], "scenario": "mixed", "seed": 0}
    {"t": 0, "n": 1, "nodes": [[rel, rot_ms], ...], "loss": false}
    ...

One datapoint per (block, N). ``nodes`` holds what the coordinator learns
about that round; nodes it could not hear are stored with the pessimistic
fill (0.0, slot_max_ms).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stflood.coordinator import (
    DqnInput,
    GlobalSnapshot,
    apply_action,
    encode_input,
    initial_snapshot,
    update_snapshot,
)
from stflood.core import DEFAULT_CONFIG, NetConfig, NodeFeedback, ValidationError
from stflood.scenario import Scenario
from stflood.simnet.flood import simulate_round

FORMAT = "stflood-trace"
VERSION = 1
COST = 0.3


class TraceParseError(ValidationError):
    pass


def reward(any_loss: bool, ntx: int, n_max: int = DEFAULT_CONFIG.n_max, cost: float = COST) -> float:
    if not 0 <= ntx <= n_max:
        raise ValidationError(f"N_TX {ntx} outside [0, {n_max}]")
    if any_loss:
        return 0.0
    return 1.0 - cost * ntx / n_max


@dataclass(frozen=True)
class TraceDatapoint:
    block_index: int
    ntx: int
    per_node: tuple[tuple[float, float], ...]
    any_loss: bool

    def feedback(self, slot_max_ms: float = DEFAULT_CONFIG.slot_max_ms) -> dict[int, NodeFeedback]:
        out = {}
        for node, (rel, rot) in enumerate(self.per_node):
            absent = rel == 0.0 and rot == slot_max_ms
            out[node] = NodeFeedback.pessimistic(slot_max_ms) if absent else NodeFeedback(rel, rot, True)
        return out


@dataclass
class Trace:
    node_count: int
    n_max: int
    sweep: tuple[int, ...]
    datapoints: list[TraceDatapoint]
    scenario: str = ""
    seed: int | None = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index = {(d.block_index, d.ntx): d for d in self.datapoints}
        blocks = sorted({d.block_index for d in self.datapoints})
        if blocks != list(range(len(blocks))):
            raise ValidationError("trace blocks must be numbered 0..block_count-1")
        if len(self._index) != len(blocks) * len(self.sweep) or len(self.datapoints) != len(self._index):
            raise ValidationError("trace must hold exactly one datapoint per (block, N) in the sweep")

    @property
    def block_count(self) -> int:
        return len(self._index) // len(self.sweep) if self.sweep else 0

    def at(self, block: int, ntx: int) -> TraceDatapoint:
        try:
            return self._index[(block, ntx)]
        except KeyError:
            raise ValidationError(f"no datapoint for block {block}, N={ntx}") from None

    def header(self) -> dict:
        return {
            "format": FORMAT, "version": VERSION, "node_count": self.node_count, "n_max": self.n_max,
            "block_count": self.block_count, "sweep": list(self.sweep), "scenario": self.scenario,
            "seed": self.seed,
        }

    def lossy_fraction(self) -> float:
        return sum(d.any_loss for d in self.datapoints) / len(self.datapoints)

    def balance_report(self) -> dict:
        """Fraction of lossy datapoints overall and per N."""
        per_n = {}
        for n in self.sweep:
            pts = [self.at(t, n) for t in range(self.block_count)]
            per_n[n] = sum(d.any_loss for d in pts) / len(pts)
        return {"datapoints": len(self.datapoints), "lossy_fraction": self.lossy_fraction(), "lossy_by_n": per_n}


def collect_trace(
    scenario: Scenario,
    blocks: int,
    sweep=range(1, DEFAULT_CONFIG.n_max + 1),
    seed: int | None = None,
    config: NetConfig = DEFAULT_CONFIG,
) -> Trace:
    """Run one round per N in ``sweep`` back-to-back for each block.

    The interference timeline is indexed by the wall-clock round counter, so
    a block spans ``len(sweep)`` rounds of scenario time.
    """
    if blocks < 2:
        raise ValidationError("a trace needs at least 2 blocks")
    sweep = tuple(int(n) for n in sweep)
    if not sweep or any(not 0 <= n <= config.n_max for n in sweep):
        raise ValidationError("sweep values must lie in [0, n_max]")
    seed = scenario.seed if seed is None else seed
    topo = scenario.topology
    everyone = frozenset(topo.nodes)
    coord = topo.coordinator
    fill = (0.0, config.slot_max_ms)
    points = []
    wall = 0
    for t in range(blocks):
        for n in sweep:
            # N = 0 only makes sense for passive receivers; the sources still send once
            rec = simulate_round(
                topo, n, everyone, scenario.pattern_at(wall), scenario.data_slots,
                np.random.default_rng([seed, wall]), round_index=wall, config=config,
            )
            heard = {f.source for f in rec.data_slots if f.received[coord]} | {coord}
            nodes = tuple(
                (round(rec.measurement[i][0], 6), round(rec.measurement[i][1], 6)) if i in heard else fill
                for i in range(topo.node_count)
            )
            points.append(TraceDatapoint(t, n, nodes, rec.any_loss))
            wall += 1
    return Trace(topo.node_count, config.n_max, sweep, points, scenario.name, seed)


# -- JSONL --------------------------------------------------------------------


def dumps_trace(trace: Trace) -> str:
    lines = [json.dumps(trace.header())]
    for d in trace.datapoints:
        lines.append(json.dumps({"t": d.block_index, "n": d.ntx, "nodes": [list(p) for p in d.per_node],
                                 "loss": d.any_loss}))
    return "\n".join(lines) + "\n"


def _datapoint(obj, lineno: int, node_count: int, n_max: int, slot_max_ms: float) -> TraceDatapoint:
    try:
        t, n, nodes, loss = obj["t"], obj["n"], obj["nodes"], obj["loss"]
    except (KeyError, TypeError):
        raise TraceParseError(f"line {lineno}: datapoint needs fields t, n, nodes, loss") from None
    if not isinstance(t, int) or t < 0:
        raise TraceParseError(f"line {lineno}: bad block index {t!r}")
    if not isinstance(n, int) or not 0 <= n <= n_max:
        raise TraceParseError(f"line {lineno}: N={n!r} outside [0, {n_max}]")
    if not isinstance(loss, bool):
        raise TraceParseError(f"line {lineno}: loss must be a boolean")
    if not isinstance(nodes, list) or len(nodes) != node_count:
        raise TraceParseError(f"line {lineno}: expected {node_count} node entries")
    per_node = []
    for entry in nodes:
        try:
            rel, rot = float(entry[0]), float(entry[1])
        except (TypeError, ValueError, IndexError):
            raise TraceParseError(f"line {lineno}: node entries must be [reliability, radio_on_ms]") from None
        if not 0.0 <= rel <= 1.0:
            raise TraceParseError(f"line {lineno}: reliability {rel} outside [0, 1]")
        if not 0.0 <= rot <= slot_max_ms:
            raise TraceParseError(f"line {lineno}: radio-on {rot} outside [0, {slot_max_ms}]")
        per_node.append((rel, rot))
    return TraceDatapoint(t, n, tuple(per_node), loss)


def parse_trace(text: str, config: NetConfig = DEFAULT_CONFIG) -> Trace:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise TraceParseError("line 1: missing header")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"line 1: invalid JSON ({exc.msg})") from None
    if not isinstance(head, dict) or head.get("format") != FORMAT:
        raise TraceParseError("line 1: missing header")
    if head.get("version") != VERSION:
        raise TraceParseError(f"line 1: unsupported trace version {head.get('version')!r}")
    try:
        node_count, n_max = int(head["node_count"]), int(head["n_max"])
        sweep = tuple(int(n) for n in head["sweep"])
    except (KeyError, TypeError, ValueError):
        raise TraceParseError("line 1: header needs node_count, n_max and sweep") from None
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        points.append(_datapoint(obj, lineno, node_count, n_max, config.slot_max_ms))
    trace = Trace(node_count, n_max, sweep, points, head.get("scenario", ""), head.get("seed"))
    if "block_count" in head and head["block_count"] != trace.block_count:
        raise TraceParseError(f"header block_count {head['block_count']} != {trace.block_count} blocks")
    return trace


def save_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(dumps_trace(trace))


def load_trace(path: str | Path) -> Trace:
    return parse_trace(Path(path).read_text())


# -- replay environment -------------------------------------------------------


@dataclass
class EnvState:
    cursor: int
    current: int
    snapshot: GlobalSnapshot
    steps: int = 0
    # per-node features the coordinator will receive next (one round of latency)
    pending: dict = field(default_factory=dict)

    @property
    def history(self) -> tuple[int, ...]:
        return self.snapshot.history


class TraceEnvironment:
    """Replays a trace as an MDP whose consecutive steps fetch consecutive blocks.

    A step with action a moves N to apply_action(N, a) and reads the datapoint
    (cursor + 1, N'). The loss flag of that datapoint enters the history at
    once, while its per-node features arrive one step later, as they do on
    the live network where feedback piggybacks on the next round.
    """

    def __init__(self, trace: Trace, episode_len: int = 100, config: NetConfig = DEFAULT_CONFIG,
                 feedback_lag: int = 1, cost: float = COST):
        if trace.block_count < 2:
            raise ValidationError("trace environment needs at least 2 blocks")
        if feedback_lag not in (0, 1):
            raise ValidationError("feedback_lag must be 0 or 1")
        self.trace = trace
        self.episode_len = min(episode_len, trace.block_count - 1)
        self.config = config
        self.feedback_lag = feedback_lag
        self.cost = cost
        self.n_min = max(1, min(trace.sweep))
        self.n_max = max(trace.sweep)
        self.state: EnvState | None = None

    def _observe(self, state: EnvState) -> DqnInput:
        return encode_input(state.snapshot, state.current, self.config)

    def _ingest(self, snap: GlobalSnapshot, feedback: dict, any_loss: bool) -> GlobalSnapshot:
        return update_snapshot(snap, feedback, any_loss, config=self.config)

    def start(self, cursor: int, current: int) -> DqnInput:
        if not 0 <= cursor < self.trace.block_count - 1:
            raise ValidationError(f"cursor {cursor} leaves no room to step")
        dp = self.trace.at(cursor, current)
        snap = initial_snapshot(self.trace.node_count, self.config)
        fb = dp.feedback(self.config.slot_max_ms)
        snap = self._ingest(snap, fb, dp.any_loss)
        self.state = EnvState(cursor, current, snap, 0, fb)
        return self._observe(self.state)

    def reset(self, rng: np.random.Generator) -> DqnInput:
        last = self.trace.block_count - 1 - self.episode_len
        cursor = int(rng.integers(0, last + 1))
        current = int(rng.integers(self.n_min, self.n_max + 1))
        return self.start(cursor, current)

    def step(self, action: int) -> tuple[DqnInput, float, bool]:
        """Returns (next input, reward, done); done also marks the end of the trace."""
        st = self.state
        if st is None:
            raise ValidationError("call reset() before step()")
        if st.cursor + 1 >= self.trace.block_count:
            raise ValidationError("end of trace")
        n = min(max(apply_action(st.current, action, self.config.n_max), self.n_min), self.n_max)
        dp = self.trace.at(st.cursor + 1, n)
        fb = dp.feedback(self.config.slot_max_ms)
        seen = st.pending if self.feedback_lag else fb
        snap = self._ingest(st.snapshot, seen, dp.any_loss)
        self.state = EnvState(st.cursor + 1, n, snap, st.steps + 1, fb)
        r = reward(dp.any_loss, n, self.config.n_max, self.cost)
        done = self.state.steps >= self.episode_len or self.state.cursor + 1 >= self.trace.block_count
        return self._observe(self.state), r, done
