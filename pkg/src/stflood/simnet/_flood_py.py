"""Pure-Python flood kernel (fallback for the compiled ``_flood`` extension).

Both implementations consume the same pre-drawn uniforms and must agree
bit for bit; ``tests/test_kernels.py`` enforces it.
"""

import numpy as np

NOT_RECEIVED = -2
ORIGIN = -1


def flood_kernel(in_ptr, in_src, base_loss, jam_prob, base_u, jam_u, source, tx_count, budget):
    """Run one flood over ``budget`` micro-slots.

    in_ptr/in_src: CSR list of incoming directed edges per receiver.
    base_loss[e]: independent per-copy loss on edge e.
    jam_prob[i]: probability that receiver i is jammed in a given micro-slot.
    base_u[k, e], jam_u[k, i]: uniforms in [0, 1) for micro-slot k.
    tx_count[i]: transmissions node i performs after receiving (0 = passive).

    Returns (first_rx, tx_done, on_slots) int32 arrays; first_rx is -1 for
    the source and -2 for nodes that never received.
    """
    n = len(in_ptr) - 1
    ptr = in_ptr.tolist()
    src = in_src.tolist()
    base = base_loss.tolist()
    jam = jam_prob.tolist()
    txc = tx_count.tolist()

    first_rx = [NOT_RECEIVED] * n
    start = [0] * n
    limit = [0] * n
    first_rx[source] = ORIGIN
    limit[source] = max(1, txc[source])
    for k in range(budget):
        sending = [False] * n
        any_sending = False
        pending = False
        for j in range(n):
            if first_rx[j] != NOT_RECEIVED:
                d = k - start[j]
                if d >= 0 and d % 2 == 0 and d // 2 < limit[j]:
                    sending[j] = True
                    any_sending = True
                elif d < 2 * limit[j] - 1:
                    pending = True
        if not any_sending:
            if pending:
                continue
            break
        bu = base_u[k]
        ju = jam_u[k]
        got = []
        for i in range(n):
            if first_rx[i] != NOT_RECEIVED:
                continue
            if ju[i] < jam[i]:
                continue
            for e in range(ptr[i], ptr[i + 1]):
                if sending[src[e]] and bu[e] >= base[e]:
                    got.append(i)
                    break
        for i in got:
            first_rx[i] = k
            start[i] = k + 1
            limit[i] = txc[i]

    tx_done = [0] * n
    on_slots = [0] * n
    for i in range(n):
        if first_rx[i] == NOT_RECEIVED:
            on_slots[i] = budget
            continue
        avail = budget - start[i]
        done = min(limit[i], (avail + 1) // 2) if avail > 0 else 0
        tx_done[i] = done
        if done > 0:
            on_slots[i] = start[i] + 2 * (done - 1) + 1
        else:
            on_slots[i] = first_rx[i] + 1
    return (
        np.asarray(first_rx, dtype=np.int32),
        np.asarray(tx_done, dtype=np.int32),
        np.asarray(on_slots, dtype=np.int32),
    )
