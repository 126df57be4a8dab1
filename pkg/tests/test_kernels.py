import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stflood.simnet import _flood_py, reference_topology

compiled = pytest.importorskip("stflood.simnet._flood")


def _random_case(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    # random spanning tree plus extra links
    links = {(int(rng.integers(0, i)), i): float(rng.uniform(0, 0.9)) for i in range(1, n)}
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        links[(a, b)] = float(rng.uniform(0, 0.9))
    from stflood.simnet.topology import Topology

    topo = Topology(n, links)
    budget = int(rng.integers(1, 20))
    jam = rng.uniform(0, 1, n) * rng.integers(0, 2)
    tx = rng.integers(0, 9, n).astype(np.int32)
    source = int(rng.integers(0, n))
    base_u = rng.random((budget, topo.edge_count))
    jam_u = rng.random((budget, n))
    return (topo._in_ptr, topo._in_src, topo._in_base, jam, base_u, jam_u, source, tx, budget)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kernels_bit_identical(seed):
    args = _random_case(seed)
    a = compiled.flood_kernel(*args)
    b = _flood_py.flood_kernel(*args)
    for x, y in zip(a, b):
        assert x.dtype == y.dtype == np.int32
        assert np.array_equal(x, y)


def test_kernels_agree_on_reference_topology():
    topo = reference_topology()
    rng = np.random.default_rng(0)
    tx = np.full(topo.node_count, 3, dtype=np.int32)
    jam = topo._exposure * 0.3
    for source in range(topo.node_count):
        bu = rng.random((16, topo.edge_count))
        ju = rng.random((16, topo.node_count))
        args = (topo._in_ptr, topo._in_src, topo._in_base, jam, bu, ju, source, tx, 16)
        for x, y in zip(compiled.flood_kernel(*args), _flood_py.flood_kernel(*args)):
            assert np.array_equal(x, y)


def test_pure_python_switch():
    code = "from stflood.simnet import KERNEL; print(KERNEL)"
    env = dict(os.environ, STFLOOD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("STFLOOD_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
