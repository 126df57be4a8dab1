# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled flood kernel; mirrors ``_flood_py.flood_kernel`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    NOT_RECEIVED = -2
    ORIGIN = -1


def flood_kernel(const int[::1] in_ptr, const int[::1] in_src,
                 const double[::1] base_loss, const double[::1] jam_prob,
                 const double[:, ::1] base_u, const double[:, ::1] jam_u,
                 int source, const int[::1] tx_count, int budget):
    cdef Py_ssize_t n = in_ptr.shape[0] - 1
    first_rx_a = np.full(n, NOT_RECEIVED, dtype=np.int32)
    tx_done_a = np.zeros(n, dtype=np.int32)
    on_slots_a = np.zeros(n, dtype=np.int32)
    start_a = np.zeros(n, dtype=np.int32)
    limit_a = np.zeros(n, dtype=np.int32)
    sending_a = np.zeros(n, dtype=np.uint8)
    got_a = np.zeros(n, dtype=np.int32)
    cdef int[::1] first_rx = first_rx_a
    cdef int[::1] tx_done = tx_done_a
    cdef int[::1] on_slots = on_slots_a
    cdef int[::1] start = start_a
    cdef int[::1] limit = limit_a
    cdef unsigned char[::1] sending = sending_a
    cdef int[::1] got = got_a
    cdef Py_ssize_t i, j, e, k
    cdef int d, ngot, avail, done
    cdef bint any_sending, pending

    first_rx[source] = ORIGIN
    limit[source] = tx_count[source] if tx_count[source] > 1 else 1
    for k in range(budget):
        any_sending = False
        pending = False
        for j in range(n):
            sending[j] = 0
            if first_rx[j] != NOT_RECEIVED:
                d = <int>k - start[j]
                if d >= 0 and d % 2 == 0 and d // 2 < limit[j]:
                    sending[j] = 1
                    any_sending = True
                elif d < 2 * limit[j] - 1:
                    pending = True
        if not any_sending:
            if pending:
                continue
            break
        ngot = 0
        for i in range(n):
            if first_rx[i] != NOT_RECEIVED:
                continue
            if jam_u[k, i] < jam_prob[i]:
                continue
            for e in range(in_ptr[i], in_ptr[i + 1]):
                if sending[in_src[e]] and base_u[k, e] >= base_loss[e]:
                    got[ngot] = <int>i
                    ngot += 1
                    break
        for j in range(ngot):
            i = got[j]
            first_rx[i] = <int>k
            start[i] = <int>k + 1
            limit[i] = tx_count[i]

    for i in range(n):
        if first_rx[i] == NOT_RECEIVED:
            on_slots[i] = budget
            continue
        avail = budget - start[i]
        if avail > 0:
            done = (avail + 1) // 2
            if limit[i] < done:
                done = limit[i]
        else:
            done = 0
        tx_done[i] = done
        if done > 0:
            on_slots[i] = start[i] + 2 * (done - 1) + 1
        else:
            on_slots[i] = first_rx[i] + 1
    return first_rx_a, tx_done_a, on_slots_a
