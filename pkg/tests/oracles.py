"""Independent reference computations used by the tests.

None of these import the simulator or the learner; they restate the rules
directly and compute exact answers by enumeration.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def exact_flood_delivery(node_count, links, source, tx_count, budget, jam=None, jam_model="receiver"):
    """Exact per-node reception probabilities of one flood.

    Walks the micro-slot schedule and branches over every subset of
    not-yet-reached nodes that could receive in a slot, weighting each branch
    by its probability. ``links`` maps (a, b) -> loss; ``jam`` maps a node to
    its per-micro-slot jam probability.
    """
    jam = jam or {}
    nbrs = {i: [] for i in range(node_count)}
    for (a, b), q in links.items():
        nbrs[a].append((b, q))
        nbrs[b].append((a, q))

    def transmits(node, first, k):
        if first is None:
            return False
        if node == source:
            return k % 2 == 0 and k // 2 < max(1, tx_count[node])
        d = k - first - 1
        return d >= 0 and d % 2 == 0 and d // 2 < tx_count[node]

    def p_receive(i, first, k):
        senders = [q for j, q in nbrs[i] if transmits(j, first[j], k)]
        if not senders:
            return 0.0
        pj = jam.get(i, 0.0)
        if jam_model == "receiver":
            return (1 - pj) * (1 - math.prod(senders))
        return 1 - math.prod(1 - (1 - q) * (1 - pj) for q in senders)

    @lru_cache(maxsize=None)
    def walk(k, first):
        if k == budget:
            return {first: 1.0}
        waiting = [i for i in range(node_count) if first[i] is None]
        probs = [p_receive(i, first, k) for i in waiting]
        out: dict = {}
        for mask in itertools.product((False, True), repeat=len(waiting)):
            w = 1.0
            nxt = list(first)
            for i, p, hit in zip(waiting, probs, mask):
                w *= p if hit else 1 - p
                if hit:
                    nxt[i] = k
            if w == 0.0:
                continue
            for end, pe in walk(k + 1, tuple(nxt)).items():
                out[end] = out.get(end, 0.0) + w * pe
        return out

    start = tuple(-1 if i == source else None for i in range(node_count))
    final = walk(0, start)
    return [sum(p for f, p in final.items() if f[i] is not None) for i in range(node_count)]


def binomial_within(count: int, trials: int, p: float, sigmas: float = 3.0) -> bool:
    se = math.sqrt(max(p * (1 - p), 1e-12) / trials)
    return abs(count / trials - p) <= sigmas * se + 1e-12


def reward_ref(any_loss: bool, n: int, cost: float = 0.3, n_max: int = 8) -> float:
    return 0.0 if any_loss else 1.0 - cost * n / n_max


def value_iteration(P, R, gamma, iters=2000):
    """Q* of a finite MDP with deterministic rewards R[s][a] and transitions P[s][a] -> {s': p}."""
    n_s, n_a = len(R), len(R[0])
    q = np.zeros((n_s, n_a))
    for _ in range(iters):
        v = q.max(axis=1)
        q = np.array([[R[s][a] + gamma * sum(p * v[t] for t, p in P[s][a].items()) for a in range(n_a)]
                      for s in range(n_s)])
    return q


def exp3_probs(w_active, w_passive, gamma):
    tot = w_active + w_passive
    return (1 - gamma) * w_active / tot + gamma / 2, (1 - gamma) * w_passive / tot + gamma / 2


def fixed_forward(w1, b1, w2, b2, x, scale=100):
    """Integer reference forward pass written with Python ints, one scalar at a time."""
    def rnd(v):
        s = 1 if v >= 0 else -1
        return s * int(math.floor(abs(v) + 0.5))

    def div(a):
        s = 1 if a >= 0 else -1
        return s * ((abs(a) + scale // 2) // scale)

    xq = [rnd(v * scale) for v in x]
    h = []
    for j in range(len(b1)):
        acc = int(b1[j]) * scale
        for i, xi in enumerate(xq):
            acc += xi * int(w1[i][j])
        h.append(max(div(acc), 0))
    out = []
    for k in range(len(b2)):
        acc = int(b2[k]) * scale
        for j, hj in enumerate(h):
            acc += hj * int(w2[j][k])
        out.append(div(acc))
    return out
