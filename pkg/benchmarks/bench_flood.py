"""Compare the compiled flood kernel against the pure-Python fallback.

    python benchmarks/bench_flood.py [--repeat 2000]

Both kernels get the same pre-drawn uniforms, so the timing covers the
micro-slot loop only; a final check confirms the outputs are identical.
"""

import argparse
import timeit

import numpy as np

from stflood.simnet import _flood_py, reference_topology

try:
    from stflood.simnet import _flood as _flood_c
except ImportError:
    _flood_c = None


def _cases(topo, count, seed=0):
    rng = np.random.default_rng(seed)
    tx = np.full(topo.node_count, 3, dtype=np.int32)
    jam = topo._exposure * 0.3
    out = []
    for i in range(count):
        out.append((topo._in_ptr, topo._in_src, topo._in_base, jam, rng.random((16, topo.edge_count)),
                    rng.random((16, topo.node_count)), i % topo.node_count, tx, 16))
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=2000)
    args = p.parse_args()
    cases = _cases(reference_topology(), args.repeat)
    kernels = {"python": _flood_py.flood_kernel}
    if _flood_c is not None:
        kernels["cython"] = _flood_c.flood_kernel
    else:
        print("compiled kernel not built; timing the fallback only")
    times = {}
    for name, fn in kernels.items():
        t = min(timeit.repeat(lambda: [fn(*c) for c in cases], number=1, repeat=3))
        times[name] = t
        print(f"{name:<7} {1e6 * t / len(cases):9.2f} us/flood  ({len(cases)} floods, 18 nodes, N=3)")
    if len(kernels) == 2:
        same = all(all(np.array_equal(a, b) for a, b in zip(_flood_c.flood_kernel(*c), _flood_py.flood_kernel(*c)))
                   for c in cases)
        print(f"speedup {times['python'] / times['cython']:.1f}x, outputs identical: {same}")


if __name__ == "__main__":
    main()
