import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import ReferenceOPF  # noqa: E402

from opf_pursuit import bundled_case, make_instance, parse_case  # noqa: E402
from opf_pursuit.network import build_matrices  # noqa: E402


def load_raw(name):
    return json.loads(bundled_case(name).read_text())


@pytest.fixture(scope="session")
def two_bus_case():
    return load_raw("two_bus")


@pytest.fixture(scope="session")
def five_bus_case():
    return load_raw("five_bus")


@pytest.fixture(scope="session")
def two_bus():
    return parse_case(bundled_case("two_bus"))


@pytest.fixture(scope="session")
def five_bus():
    return parse_case(bundled_case("five_bus"))


@pytest.fixture(scope="session")
def two_bus_inst(two_bus):
    return make_instance(two_bus)


@pytest.fixture(scope="session")
def five_bus_inst(five_bus):
    return make_instance(five_bus)


@pytest.fixture(scope="session")
def two_bus_folded(two_bus):
    return make_instance(two_bus, build_matrices(two_bus, "folded"))


@pytest.fixture(scope="session")
def two_bus_oracle(two_bus_case):
    """(optimal value, voltage vector, active mask, reference problem) for the static 2-bus case."""
    ref = ReferenceOPF(two_bus_case)
    val, v, active = ref.solve()
    return val, v, active, ref


@pytest.fixture(scope="session")
def five_bus_oracle(five_bus_case):
    ref = ReferenceOPF(five_bus_case)
    val, v, active = ref.solve()
    return val, v, active, ref


def random_state(inst, rng, scale=1.0):
    """Random lifted state around the flat start.

    Voltages move by a few percent, auxiliaries sit near their consistent
    values and multipliers are of order one, all multiplied by ``scale``.
    Frozen entries keep their fixed values.
    """
    from opf_pursuit import initial_state

    lay = inst.layout
    xi = initial_state(inst)
    free = np.zeros(lay.size, dtype=bool)
    free[lay.free] = True
    x = lay.slice("x")
    xi[x] += np.where(free[x], rng.normal(scale=0.05 * scale, size=xi[x].size), 0.0)
    F = inst.matrices.forms(xi[x])
    N = inst.model.N
    for k, name in enumerate(("t", "g", "h")):
        xi[lay.slice(name)] = F[k * N:(k + 1) * N] + rng.normal(scale=0.05 * scale, size=N)
    gb = inst.gen_bus
    t, g = xi[lay.slice("t")], xi[lay.slice("g")]
    xi[lay.slice("z")] = (t[gb] + inst.pl[gb]) ** 2 + (g[gb] + inst.ql[gb]) ** 2
    xi[lay.slice("z")] += rng.normal(scale=0.05 * scale, size=gb.size)
    lam0 = lay.offsets["lam_t"][0]
    xi[lam0:] = rng.normal(scale=scale, size=lay.size - lam0)
    return xi
