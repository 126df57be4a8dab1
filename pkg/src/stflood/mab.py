"""Distributed forwarder selection with per-node two-armed Exp3 bandits.

Nodes learn one at a time, in a seeded pseudo-random order, each for a block
of ``rounds_per_learner`` consecutive rounds. A passive draw that coincides
with losses resets the passive weight to its initial value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from stflood.core import NodeId, ValidationError

ACTIVE = "active"
PASSIVE = "passive"
ARMS = 2
_WEIGHT_CEILING = 1e100


@dataclass(frozen=True)
class BanditState:
    w_active: float = 1.0
    w_passive: float = 1.0
    gamma_explore: float = 0.1
    role: str = ACTIVE
    initial_w: float = 1.0

    def __post_init__(self):
        if self.w_active <= 0 or self.w_passive <= 0:
            raise ValidationError("bandit weights must be positive")
        if not 0 < self.gamma_explore <= 1:
            raise ValidationError("gamma_explore must be in (0, 1]")
        if self.role not in (ACTIVE, PASSIVE):
            raise ValidationError(f"unknown role {self.role!r}")


def arm_probability(state: BanditState) -> tuple[float, float]:
    g = state.gamma_explore
    total = state.w_active + state.w_passive
    p_active = (1 - g) * state.w_active / total + g / ARMS
    p_passive = (1 - g) * state.w_passive / total + g / ARMS
    return p_active, p_passive


def update_weight(state: BanditState, chosen_arm: str, reward: float, p_chosen: float) -> BanditState:
    if not 0.0 <= reward <= 1.0:
        raise ValidationError(f"reward must be in [0, 1], got {reward}")
    if not 0.0 < p_chosen <= 1.0:
        raise ValidationError("p_chosen must be in (0, 1]")
    factor = math.exp(state.gamma_explore * reward / (ARMS * p_chosen))
    wa, wp = state.w_active, state.w_passive
    if chosen_arm == ACTIVE:
        wa *= factor
    elif chosen_arm == PASSIVE:
        wp *= factor
    else:
        raise ValidationError(f"unknown arm {chosen_arm!r}")
    top = max(wa, wp)
    if top > _WEIGHT_CEILING:
        wa, wp = wa / top, wp / top
    return replace(state, w_active=wa, w_passive=wp)


def punish_breaking(state: BanditState) -> BanditState:
    return replace(state, w_passive=state.initial_w, role=ACTIVE)


def bandit_reward(any_loss: bool, role: str, passive_reward: float = 1.0, active_reward: float = 0.7) -> float:
    if any_loss:
        return 0.0
    return passive_reward if role == PASSIVE else active_reward


@dataclass
class SelectionSchedule:
    permutation: list[NodeId]
    rounds_per_learner: int = 10

    @classmethod
    def seeded(cls, nodes, seed, exclude=(), rounds_per_learner: int = 10) -> "SelectionSchedule":
        members = [n for n in nodes if n not in set(exclude)]
        rng = np.random.default_rng(seed)
        return cls([int(n) for n in rng.permutation(members)], rounds_per_learner)

    def block_of(self, round_index: int) -> int:
        return round_index // self.rounds_per_learner

    def is_block_start(self, round_index: int) -> bool:
        return round_index % self.rounds_per_learner == 0

    def is_block_end(self, round_index: int) -> bool:
        return round_index % self.rounds_per_learner == self.rounds_per_learner - 1


def schedule_learner(round_index: int, schedule: SelectionSchedule) -> NodeId | None:
    if not schedule.permutation:
        return None
    return schedule.permutation[schedule.block_of(round_index) % len(schedule.permutation)]


@dataclass
class BlockLog:
    block: int
    learner: NodeId
    drawn_role: str
    p_passive_before: float
    reward: float
    reset_applied: bool
    p_passive_after: float


@dataclass
class ForwarderSelection:
    """Runtime owner of every node's bandit plus the learning schedule."""

    bandits: dict[NodeId, BanditState]
    schedule: SelectionSchedule
    rng: np.random.Generator
    passive_reward: float = 1.0
    active_reward: float = 0.7
    log: list[BlockLog] = field(default_factory=list)
    _learner: NodeId | None = None
    _drawn: str = ACTIVE
    _p_chosen: float = 1.0
    _p_before: float = 0.0
    _lossy: bool = False
    _reset: bool = False

    @classmethod
    def create(cls, nodes, seed, exclude=(), gamma_explore=0.1, initial_w=1.0, **kw) -> "ForwarderSelection":
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        perm_seed, draw_seed = seq.spawn(2)
        bandits = {int(n): BanditState(initial_w, initial_w, gamma_explore, ACTIVE, initial_w) for n in nodes}
        schedule = SelectionSchedule.seeded(list(bandits), perm_seed, exclude)
        return cls(bandits, schedule, np.random.default_rng(draw_seed), **kw)

    def roles(self) -> dict[NodeId, str]:
        return {n: b.role for n, b in self.bandits.items()}

    def active_set(self) -> frozenset:
        return frozenset(n for n, b in self.bandits.items() if b.role == ACTIVE)

    @property
    def learner(self) -> NodeId | None:
        return self._learner

    def begin_round(self, round_index: int, quiet: bool = True) -> NodeId | None:
        """Start of a round; at a block start the scheduled learner draws its role.

        ``quiet`` gates learning: no draw happens unless the coordinator
        currently sees an interference-free regime.
        """
        if not self.schedule.is_block_start(round_index):
            return self._learner
        self._learner = None
        node = schedule_learner(round_index, self.schedule)
        if node is None or not quiet:
            return None
        state = self.bandits[node]
        p_active, p_passive = arm_probability(state)
        drawn = PASSIVE if self.rng.random() < p_passive else ACTIVE
        self.bandits[node] = replace(state, role=drawn)
        self._learner = node
        self._drawn = drawn
        self._p_chosen = p_passive if drawn == PASSIVE else p_active
        self._p_before = p_passive
        self._lossy = False
        self._reset = False
        return node

    def end_round(self, round_index: int, any_loss: bool) -> BlockLog | None:
        node = self._learner
        if node is None:
            return None
        if any_loss:
            self._lossy = True
            if self.bandits[node].role == PASSIVE:
                # network-breaking configuration: back to forwarding for the rest of the block
                self.bandits[node] = punish_breaking(self.bandits[node])
                self._reset = True
        if not self.schedule.is_block_end(round_index):
            return None
        reward = bandit_reward(self._lossy, self._drawn, self.passive_reward, self.active_reward)
        state = update_weight(self.bandits[node], self._drawn, reward, self._p_chosen)
        self.bandits[node] = state
        entry = BlockLog(
            self.schedule.block_of(round_index), node, self._drawn, self._p_before,
            reward, self._reset, arm_probability(state)[1],
        )
        self.log.append(entry)
        self._learner = None
        return entry
