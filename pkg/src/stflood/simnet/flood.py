"""Glossy floods and LWB rounds on a micro-slot clock."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from stflood.core import (
    DEFAULT_CONFIG,
    InterferencePattern,
    NetConfig,
    NodeFeedback,
    NodeId,
    ValidationError,
    check_ntx,
)
from stflood.simnet.channel import burst_overlap
from stflood.simnet.topology import Topology

if os.environ.get("STFLOOD_PURE_PYTHON"):
    from stflood.simnet._flood_py import flood_kernel

    KERNEL = "python"
else:
    try:
        from stflood.simnet._flood import flood_kernel

        KERNEL = "cython"
    except ImportError:  # extension not built
        from stflood.simnet._flood_py import flood_kernel

        KERNEL = "python"


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class FloodOutcome:
    source: NodeId
    received: dict[NodeId, bool]
    first_rx_microslot: dict[NodeId, int | None]
    radio_on_ms: dict[NodeId, float]
    tx_done: dict[NodeId, int] = field(default_factory=dict)

    @property
    def delivered_all(self) -> bool:
        return all(self.received.values())


@dataclass
class RoundRecord:
    round_index: int
    ntx: int
    slots: list[FloodOutcome]
    feedback: dict[NodeId, NodeFeedback]
    any_loss: bool
    # what each node measured during this round; shipped as feedback next round
    measurement: dict[NodeId, tuple[float, float]] = field(default_factory=dict)
    feedback_round: int = 0
    active: frozenset = frozenset()

    @property
    def data_slots(self) -> list[FloodOutcome]:
        return self.slots[1:]


def _tx_counts(topology: Topology, ntx: int, active: Iterable[NodeId]) -> np.ndarray:
    tx = np.zeros(topology.node_count, dtype=np.int32)
    for n in active:
        tx[n] = ntx
    return tx


def _check_active(topology: Topology, active) -> frozenset:
    active = frozenset(int(n) for n in active)
    if not active:
        raise ValidationError("active forwarder set is empty")
    bad = [n for n in active if not 0 <= n < topology.node_count]
    if bad:
        raise ValidationError(f"active set references unknown nodes {bad}")
    return active


JAM_MODELS = ("receiver", "copy")


def _channel(topology: Topology, pattern: InterferencePattern, config: NetConfig, jam_model: str):
    """(per-edge loss, per-receiver jam probability) fed to the kernel.

    "receiver": one burst draw per receiver and micro-slot, shared by every
    copy arriving in it. "copy": each copy is lost independently with
    link_loss_prob, so the jam term folds into the edge loss.
    """
    jam = topology._exposure * burst_overlap(pattern, config.airtime_ms)
    if jam_model == "receiver":
        return topology._in_base, jam
    if jam_model == "copy":
        per_edge = np.repeat(jam, np.diff(topology._in_ptr))
        return 1.0 - (1.0 - topology._in_base) * (1.0 - per_edge), np.zeros_like(jam)
    raise ValidationError(f"unknown jam model {jam_model!r}")


def _outcome(source, first_rx, tx_done, on_slots, config: NetConfig) -> FloodOutcome:
    received, first, radio, done = {}, {}, {}, {}
    for i, (r, t, s) in enumerate(zip(first_rx.tolist(), tx_done.tolist(), on_slots.tolist())):
        got = r != -2
        received[i] = got
        first[i] = r if got else None
        done[i] = t
        radio[i] = min(s * config.microslot_ms, config.slot_max_ms) if got else config.slot_max_ms
    return FloodOutcome(source, received, first, radio, done)


def simulate_flood(
    topology: Topology,
    source: NodeId,
    ntx: int,
    active,
    pattern: InterferencePattern = InterferencePattern(),
    rng_seed=None,
    config: NetConfig = DEFAULT_CONFIG,
    jam_model: str = "receiver",
) -> FloodOutcome:
    """One Glossy flood. ``first_rx_microslot`` is -1 for the source."""
    if not 0 <= source < topology.node_count:
        raise ValidationError(f"source {source} is not in the topology")
    active = _check_active(topology, active)
    if source not in active:
        raise ValidationError("source must be an active node")
    check_ntx(ntx, config.n_max)
    rng = as_generator(rng_seed)
    budget = config.microslot_budget
    base_u = rng.random((budget, topology.edge_count))
    jam_u = rng.random((budget, topology.node_count))
    base, jam = _channel(topology, pattern, config, jam_model)
    res = flood_kernel(
        topology._in_ptr, topology._in_src, base, jam, base_u, jam_u,
        int(source), _tx_counts(topology, ntx, active), budget,
    )
    return _outcome(source, *res, config)


def slot_owner(topology: Topology, slot: int) -> NodeId:
    return slot % topology.node_count


def simulate_round(
    topology: Topology,
    ntx: int,
    active,
    pattern: InterferencePattern = InterferencePattern(),
    data_slot_count: int | None = None,
    rng_seed=None,
    *,
    round_index: int = 0,
    previous: RoundRecord | None = None,
    config: NetConfig = DEFAULT_CONFIG,
    jam_model: str = "receiver",
) -> RoundRecord:
    """A control flood from the coordinator followed by one flood per data slot.

    Passive nodes (not in ``active``) still source their own data slot.
    ``feedback`` carries each node's measurement of the *previous* round
    (this round's own measurement when ``previous`` is None), marked present
    iff the coordinator received the owner's slot in this round.
    """
    if data_slot_count is None:
        data_slot_count = topology.node_count
    if data_slot_count < 1:
        raise ValidationError("data_slot_count must be at least 1")
    active = _check_active(topology, active)
    check_ntx(ntx, config.n_max)
    rng = as_generator(rng_seed)
    n = topology.node_count
    budget = config.microslot_budget
    n_slots = data_slot_count + 1
    base_u = rng.random((n_slots, budget, topology.edge_count))
    jam_u = rng.random((n_slots, budget, n))
    base, jam_prob = _channel(topology, pattern, config, jam_model)
    tx = _tx_counts(topology, ntx, active)
    coord = topology.coordinator

    sources = [coord] + [slot_owner(topology, s) for s in range(data_slot_count)]
    slots = []
    for s, src in enumerate(sources):
        res = flood_kernel(
            topology._in_ptr, topology._in_src, base, jam_prob,
            base_u[s], jam_u[s], int(src), tx, budget,
        )
        slots.append(_outcome(src, *res, config))

    rx_count = [0] * n
    dest_count = [0] * n
    radio_sum = [0.0] * n
    any_loss = False
    for flood in slots:
        for i in range(n):
            radio_sum[i] += flood.radio_on_ms[i]
            if i == flood.source:
                continue
            dest_count[i] += 1
            if flood.received[i]:
                rx_count[i] += 1
            else:
                any_loss = True
    measurement = {
        i: (rx_count[i] / dest_count[i] if dest_count[i] else 1.0, radio_sum[i] / n_slots)
        for i in range(n)
    }

    heard = {coord}
    for flood in slots[1:]:
        if flood.received[coord]:
            heard.add(flood.source)
    shipped = previous.measurement if previous is not None else measurement
    feedback = {}
    for i in range(n):
        if i in heard:
            rel, rot = shipped[i]
            feedback[i] = NodeFeedback(rel, rot, True)
        else:
            feedback[i] = NodeFeedback.pessimistic(config.slot_max_ms)
    return RoundRecord(
        round_index=round_index,
        ntx=ntx,
        slots=slots,
        feedback=feedback,
        any_loss=any_loss,
        measurement=measurement,
        feedback_round=previous.round_index if previous is not None else round_index,
        active=active,
    )
