import random
from importlib import resources
from pathlib import Path

import pytest

from fmtree.model import OR, RDEP, EbeSpec, FmtModel, GateSpec, MaintenancePolicy

DATA = Path(str(resources.files("fmtree").joinpath("data")))
HVAC = DATA / "hvac.fmt"
TWO_MODULE = DATA / "two_module.fmt"

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])


def ebe(id, levels=2, t_deg=1000.0, t_clean=1.0, t_replace=7.0):
    return EbeSpec(id, levels, t_deg, t_clean, t_replace)


def model(nodes, top, policy=MaintenancePolicy(), **kw):
    return FmtModel({n.id: n for n in nodes}, top, policy, **kw)


def random_tree(rng: random.Random, n_ebes: int, *, max_levels=3, rdep=False,
                t_range=(200.0, 2000.0), branching=3) -> FmtModel:
    """Random OR tree over ``n_ebes`` EBEs, optionally with one RDEP."""
    ebes = [EbeSpec(f"e{i}", rng.randint(1, max_levels), rng.uniform(*t_range), 1.0, 7.0)
            for i in range(n_ebes)]
    pool = [e.id for e in ebes]
    gates = []
    k = 0
    while len(pool) > 1:
        take = min(len(pool), rng.randint(2, branching))
        rng.shuffle(pool)
        kids, pool = pool[:take], pool[take:]
        g = GateSpec(f"g{k}", OR, tuple(kids))
        k += 1
        gates.append(g)
        pool.append(g.id)
    if not gates:
        gates.append(GateSpec("g0", OR, (pool[0],)))
    top = gates[-1].id
    nodes = [*ebes, *gates]
    if rdep and n_ebes >= 2:
        trig, *deps = rng.sample([e.id for e in ebes], rng.randint(2, min(3, n_ebes)))
        nodes.append(GateSpec("r0", RDEP, (trig,), rng.choice([1.5, 2.0, 3.0]), tuple(deps)))
    return model(nodes, top)
