from stflood.simnet.channel import burst_overlap, link_loss_prob
from stflood.simnet.flood import (
    KERNEL,
    FloodOutcome,
    RoundRecord,
    as_generator,
    simulate_flood,
    simulate_round,
    slot_owner,
)
from stflood.simnet.topology import Topology, diamond_topology, line_topology, reference_topology

__all__ = [
    "KERNEL",
    "FloodOutcome",
    "RoundRecord",
    "Topology",
    "as_generator",
    "burst_overlap",
    "diamond_topology",
    "line_topology",
    "link_loss_prob",
    "reference_topology",
    "simulate_flood",
    "simulate_round",
    "slot_owner",
]
