"""LWB-style control plane: feedback aggregation, DQN input encoding and the round loop."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from stflood.core import DEFAULT_CONFIG, NetConfig, NodeFeedback, NodeId, ValidationError
from stflood.dqn.model import MlpModel, QuantizedModel, infer_fixed, infer_float
from stflood.mab import ForwarderSelection, schedule_learner
from stflood.pid import PiState, pid_step
from stflood.scenario import Scenario
from stflood.simnet.flood import RoundRecord, simulate_round

log = logging.getLogger(__name__)

DECREASE, MAINTAIN, INCREASE = 0, 1, 2
ACTION_NAMES = ("decrease", "maintain", "increase")
EWMA_ALPHA = 0.25
RANK_DIGITS = 2


@dataclass(frozen=True)
class GlobalSnapshot:
    per_node: Mapping[NodeId, NodeFeedback]
    history: tuple[int, ...]
    # smoothed (reliability, radio-on) per node, kept across absences
    running: Mapping[NodeId, tuple[float, float]] = field(default_factory=dict)

    @property
    def quiet(self) -> bool:
        return all(h == 1 for h in self.history)


def initial_snapshot(node_count: int, config: NetConfig = DEFAULT_CONFIG) -> GlobalSnapshot:
    return GlobalSnapshot(
        {n: NodeFeedback(1.0, 0.0, True) for n in range(node_count)},
        (1,) * config.history_len,
    )


def update_snapshot(
    previous: GlobalSnapshot,
    feedback: Mapping[NodeId, NodeFeedback],
    any_loss: bool,
    alpha: float = EWMA_ALPHA,
    config: NetConfig = DEFAULT_CONFIG,
) -> GlobalSnapshot:
    running = dict(previous.running)
    per_node = {}
    for node, fb in feedback.items():
        if fb.present:
            old = running.get(node)
            if old is None:
                new = (fb.reliability, fb.radio_on_ms)
            else:
                new = (old[0] + alpha * (fb.reliability - old[0]), old[1] + alpha * (fb.radio_on_ms - old[1]))
            running[node] = new
            per_node[node] = NodeFeedback(new[0], new[1], True)
        else:
            per_node[node] = NodeFeedback.pessimistic(config.slot_max_ms)
    flag = -1 if any_loss else 1
    history = (flag,) + tuple(previous.history[: config.history_len - 1])
    return GlobalSnapshot(per_node, history, running)


def collect_feedback(
    record: RoundRecord,
    previous: GlobalSnapshot,
    alpha: float = EWMA_ALPHA,
    config: NetConfig = DEFAULT_CONFIG,
) -> GlobalSnapshot:
    return update_snapshot(previous, record.feedback, record.any_loss, alpha, config)


@dataclass(frozen=True)
class DqnInput:
    values: np.ndarray
    padded: bool = False
    selected: tuple[NodeId, ...] = ()

    def __len__(self) -> int:
        return len(self.values)


def normalize_radio_on(ms: float, config: NetConfig = DEFAULT_CONFIG) -> float:
    return min(max(2.0 * ms / config.slot_max_ms - 1.0, -1.0), 1.0)


def normalize_reliability(rel: float) -> float:
    # [0.5, 1.0] -> [-1, 1]; anything below 50 % is equally unacceptable
    return min(max(4.0 * rel - 3.0, -1.0), 1.0)


def encode_input(
    snapshot: GlobalSnapshot,
    current: int,
    config: NetConfig = DEFAULT_CONFIG,
    exclude: tuple[NodeId, ...] = (),
) -> DqnInput:
    """K lowest-reliability nodes (ties by id): radio-on block, reliability block, one-hot N, history."""
    if not 0 <= current <= config.n_max:
        raise ValidationError(f"N_TX {current} outside [0, {config.n_max}]")
    k = config.k_nodes
    entries = []
    for node, fb in snapshot.per_node.items():
        if node in exclude:
            continue
        rel, rot = fb.effective(config.slot_max_ms)
        entries.append((rel, node, rot))
    # rank at whole-percent resolution so a node whose average is still
    # creeping back toward 100 % ties with the nodes that never lost a packet
    entries.sort(key=lambda e: (round(e[0], RANK_DIGITS), e[1]))
    chosen = entries[:k]
    padded = len(chosen) < k
    x = np.empty(config.input_size)
    for i, (rel, _, rot) in enumerate(chosen):
        x[i] = normalize_radio_on(rot, config)
        x[k + i] = normalize_reliability(rel)
    x[len(chosen):k] = 1.0
    x[k + len(chosen):2 * k] = -1.0
    x[2 * k:2 * k + config.n_max + 1] = 0.0
    x[2 * k + current] = 1.0
    hist = list(snapshot.history[: config.history_len])
    hist += [1] * (config.history_len - len(hist))
    x[2 * k + config.n_max + 1:] = hist
    return DqnInput(x, padded, tuple(n for _, n, _ in chosen))


def apply_action(current: int, action: int, n_max: int = DEFAULT_CONFIG.n_max) -> int:
    if action not in (DECREASE, MAINTAIN, INCREASE):
        raise ValidationError(f"unknown action {action!r}")
    return min(max(current + action - 1, 1), n_max)


@dataclass(frozen=True)
class AdaptivityCommand:
    kind: str
    ntx: int
    learner: NodeId | None = None

    @classmethod
    def set_ntx(cls, n: int) -> "AdaptivityCommand":
        return cls("set_ntx", n)

    @classmethod
    def run_mab(cls, learner: NodeId | None, n: int) -> "AdaptivityCommand":
        return cls("run_mab", n, learner)


# -- controllers --------------------------------------------------------------


class StaticController:
    mode = "static"

    def __init__(self, ntx: int = 3):
        self.ntx = ntx

    def command(self, round_index, snapshot, current, record=None) -> AdaptivityCommand:
        return AdaptivityCommand.set_ntx(self.ntx)


class DqnController:
    """Greedy policy of the embedded network, evaluated once per round."""

    mode = "dqn"

    def __init__(self, model: MlpModel | QuantizedModel | None, config: NetConfig = DEFAULT_CONFIG, exclude=()):
        if model is None:
            raise ValidationError("dqn controller needs a model")
        self.model = model
        self.config = config
        self.exclude = tuple(exclude)
        self.last_q: np.ndarray | None = None

    def q_values(self, x: DqnInput) -> np.ndarray:
        if isinstance(self.model, QuantizedModel):
            return infer_fixed(self.model, x.values)
        return infer_float(self.model, x.values)

    def command(self, round_index, snapshot, current, record=None) -> AdaptivityCommand:
        x = encode_input(snapshot, current, self.config, self.exclude)
        self.last_q = self.q_values(x)
        return AdaptivityCommand.set_ntx(apply_action(current, int(np.argmax(self.last_q)), self.config.n_max))


class PiController:
    """PI baseline fed with round success: 1.0 when every destination got every packet, else 0."""

    mode = "pid"

    def __init__(self, state: PiState | None = None):
        self.state = state or PiState()

    def command(self, round_index, snapshot, current, record=None) -> AdaptivityCommand:
        success = 0.0 if snapshot.history[0] == -1 else 1.0
        n, self.state = pid_step(self.state, success)
        return AdaptivityCommand.set_ntx(n)


class MabController:
    """Pins N_TX and hands the next round's learning slot to the scheduled node."""

    mode = "mab"

    def __init__(self, forwarders: ForwarderSelection, ntx: int = 3):
        self.forwarders = forwarders
        self.ntx = ntx

    def command(self, round_index, snapshot, current, record=None) -> AdaptivityCommand:
        return AdaptivityCommand.run_mab(schedule_learner(round_index + 1, self.forwarders.schedule), self.ntx)


def run_controller(controller, round_index: int, snapshot: GlobalSnapshot, current: int) -> AdaptivityCommand:
    if controller is None:
        raise ValidationError("controller is not initialized")
    return controller.command(round_index, snapshot, current)


def make_controller(mode: str, scenario: Scenario, model=None, forwarder_seed=None):
    if mode == "static":
        return StaticController(scenario.static_ntx)
    if mode == "dqn":
        return DqnController(model)
    if mode == "pid":
        return PiController(PiState(n_current=scenario.static_ntx, n_base=scenario.static_ntx))
    if mode == "mab":
        seed = scenario.seed if forwarder_seed is None else forwarder_seed
        # the coordinator always forwards: it owns the schedule flood
        fwd = ForwarderSelection.create(
            scenario.topology.nodes, np.random.SeedSequence([seed, 1]), exclude=(scenario.topology.coordinator,)
        )
        return MabController(fwd, scenario.static_ntx)
    raise ValidationError(f"unknown controller mode {mode!r}")


# -- round loop ---------------------------------------------------------------

LOG_FIELDS = (
    "round_index", "mode", "ntx", "reliability_pct", "avg_radio_on_ms", "any_loss", "active_forwarder_count",
)
MAB_FIELDS = ("block", "learner", "drawn_role", "p_passive_before", "reward", "reset_applied")


@dataclass
class RoundLogRow:
    round_index: int
    mode: str
    ntx: int
    reliability_pct: float
    avg_radio_on_ms: float
    any_loss: bool
    active_forwarder_count: int


@dataclass
class ExperimentResult:
    scenario: Scenario
    mode: str
    seed: int
    rows: list[RoundLogRow]
    delivered: int
    destinations: int
    radio_sum: float
    node_slots: int
    controller: object = None

    @property
    def reliability_pct(self) -> float:
        return 100.0 * self.delivered / self.destinations

    @property
    def avg_radio_on_ms(self) -> float:
        return self.radio_sum / self.node_slots

    @property
    def n_trajectory(self) -> list[int]:
        return [r.ntx for r in self.rows]

    def summary(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "scenario_hash": self.scenario.digest(),
            "controller": self.mode,
            "seed": self.seed,
            "rounds": len(self.rows),
            "reliability_pct": self.reliability_pct,
            "avg_radio_on_ms": self.avg_radio_on_ms,
            "n_trajectory": self.n_trajectory,
        }

    def window(self, start: int, end: int) -> list[RoundLogRow]:
        return self.rows[start:end]


def _round_metrics(rec: RoundRecord) -> tuple[int, int, float, int]:
    delivered = destinations = node_slots = 0
    radio = 0.0
    for flood in rec.slots:
        for node, got in flood.received.items():
            if node != flood.source:
                destinations += 1
                delivered += got
        radio += sum(flood.radio_on_ms.values())
        node_slots += len(flood.radio_on_ms)
    return delivered, destinations, radio, node_slots


def run_experiment(
    scenario: Scenario,
    controller=None,
    *,
    mode: str | None = None,
    model=None,
    seed: int | None = None,
    rounds: int | None = None,
    initial_ntx: int | None = None,
    config: NetConfig = DEFAULT_CONFIG,
) -> ExperimentResult:
    """Run ``scenario`` round by round under one controller.

    The command computed at the end of round r configures round r+1.
    """
    seed = scenario.seed if seed is None else seed
    mode = mode or (controller.mode if controller is not None else scenario.controller)
    if controller is None:
        controller = make_controller(mode, scenario, model, forwarder_seed=seed)
    topo = scenario.topology
    rounds = scenario.duration_rounds if rounds is None else rounds
    if rounds < 1:
        raise ValidationError("an experiment needs at least one round")
    n_current = scenario.static_ntx if initial_ntx is None else initial_ntx
    forwarders: ForwarderSelection | None = getattr(controller, "forwarders", None)
    everyone = frozenset(topo.nodes)
    snapshot = initial_snapshot(topo.node_count, config)
    previous = None
    rows = []
    totals = [0, 0, 0.0, 0]
    for r in range(rounds):
        if forwarders is not None:
            forwarders.begin_round(r, quiet=snapshot.quiet)
            active = forwarders.active_set()
        else:
            active = everyone
        rec = simulate_round(
            topo, n_current, active, scenario.pattern_at(r), scenario.data_slots,
            np.random.default_rng([seed, r]), round_index=r, previous=previous, config=config,
        )
        snapshot = collect_feedback(rec, snapshot, config=config)
        if forwarders is not None:
            forwarders.end_round(r, rec.any_loss)
        d, dest, radio, ns = _round_metrics(rec)
        totals[0] += d
        totals[1] += dest
        totals[2] += radio
        totals[3] += ns
        rows.append(RoundLogRow(r, mode, n_current, 100.0 * d / dest, radio / ns, rec.any_loss, len(active)))
        cmd = run_controller(controller, r, snapshot, n_current)
        n_current = cmd.ntx
        previous = rec
    return ExperimentResult(scenario, mode, seed, rows, *totals, controller=controller)


def _meta_line(result: ExperimentResult) -> str:
    return (f"# scenario={result.scenario.name} scenario_hash={result.scenario.digest()} "
            f"seed={result.seed} controller={result.mode}\n")


def round_log_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write(_meta_line(result))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for row in result.rows:
        w.writerow([row.round_index, row.mode, row.ntx, f"{row.reliability_pct:.4f}",
                    f"{row.avg_radio_on_ms:.4f}", int(row.any_loss), row.active_forwarder_count])
    return buf.getvalue()


def mab_log_csv(result: ExperimentResult) -> str | None:
    fwd = getattr(result.controller, "forwarders", None)
    if fwd is None:
        return None
    buf = io.StringIO()
    buf.write(_meta_line(result))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAB_FIELDS)
    for e in fwd.log:
        w.writerow([e.block, e.learner, e.drawn_role, f"{e.p_passive_before:.6f}", f"{e.reward:.3f}",
                    int(e.reset_applied)])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text)
