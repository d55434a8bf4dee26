import math
import random

import pytest

from conftest import ebe, model, random_tree
from fmtree.model import (OR, RDEP, CostModel, GateSpec, InvalidModelError,
                          MaintenancePolicy, policy_warnings, to_dag, topological_order,
                          validate)


def rules(m):
    return {v.rule for v in validate(m)}


def test_single_ebe_top_is_valid():
    assert validate(model([ebe("e")], "e")) == []


def test_two_roots_reported():
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a",))], "g")
    msgs = [str(v) for v in validate(m)]
    assert any("multiple top events" in s for s in msgs)


def test_rdep_trigger_on_gate_rejected():
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a", "b")),
               GateSpec("top", OR, ("g",)),
               GateSpec("r", RDEP, ("g",), 2.0, ("b",))], "top")
    assert any("RDEP trigger must be EBE" in v.message for v in validate(m))


@pytest.mark.parametrize("bad, rule", [
    (ebe("e", levels=0), "ebe-levels"),
    (ebe("e", t_deg=0.0), "ebe-delay"),
    (ebe("e", t_clean=-1.0), "ebe-delay"),
    (ebe("e", t_clean=7.0, t_replace=7.0), "ebe-maintenance"),
])
def test_ebe_invariants(bad, rule):
    assert rule in rules(model([bad], "e"))


def test_gate_rules():
    assert "unknown-ref" in rules(model([GateSpec("g", OR, ("x",))], "g"))
    assert "gate-inputs" in rules(model([GateSpec("g", OR, ())], "g"))
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a", "b")),
               GateSpec("r", RDEP, ("a",), 0.5, ("b",))], "g")
    assert "rdep-gamma" in rules(m)
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a", "b")),
               GateSpec("r", RDEP, ("a",), 2.0, ())], "g")
    assert "rdep-dependents" in rules(m)


def test_cycle_and_sharing_detected():
    m = model([ebe("a"), GateSpec("g", OR, ("h", "a")), GateSpec("h", OR, ("g",))], "g")
    assert "acyclic" in rules(m)
    m = model([ebe("a"), GateSpec("g", OR, ("a",)), GateSpec("h", OR, ("a",)),
               GateSpec("top", OR, ("g", "h"))], "top")
    assert "tree" in rules(m)


def test_rdep_does_not_count_as_second_parent():
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a", "b")),
               GateSpec("r", RDEP, ("a",), 2.0, ("b",))], "g")
    assert validate(m) == []


def test_dependent_accelerated_twice_rejected():
    m = model([ebe("a"), ebe("b"), ebe("c"), GateSpec("g", OR, ("a", "b", "c")),
               GateSpec("r1", RDEP, ("a",), 2.0, ("c",)),
               GateSpec("r2", RDEP, ("b",), 2.0, ("c",))], "g")
    assert "rdep-dependent" in rules(m)


def test_costs_must_be_nonnegative():
    with pytest.raises(ValueError):
        CostModel(cost_repair=-1)


def test_policy_ordering_is_only_a_warning():
    p = MaintenancePolicy(t_rep=182, t_oh=7300, t_insp=730)
    assert any("inspection" in w for w in policy_warnings(p))
    m = model([ebe("e")], "e", policy=p)
    assert validate(m) == []
    assert policy_warnings(MaintenancePolicy(t_rep=182, t_oh=7300, t_insp=7)) == []


def test_to_dag_without_rdep_is_identity():
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a", "b"))], "g")
    assert to_dag(m) == m


def test_to_dag_duplicates_trigger():
    m = model([ebe("a"), ebe("b"), GateSpec("g", OR, ("a", "b")),
               GateSpec("r", RDEP, ("a",), 2.0, ("b",))], "g")
    d = to_dag(m)
    assert d.nodes["r"].inputs == ("a@r",)
    assert d.aliases == {"a@r": "a"}
    assert d.nodes["g"].inputs == ("a", "b")
    assert len(d.nodes) == len(m.nodes) + 1


def test_two_rdeps_sharing_trigger_get_two_duplicates():
    m = model([ebe("a"), ebe("b"), ebe("c"), GateSpec("g", OR, ("a", "b", "c")),
               GateSpec("r1", RDEP, ("a",), 2.0, ("b",)),
               GateSpec("r2", RDEP, ("a",), 3.0, ("c",))], "g")
    d = to_dag(m)
    assert d.nodes["r1"].inputs == ("a@r1",) and d.nodes["r2"].inputs == ("a@r2",)
    order = topological_order(d)
    pos = {k: i for i, k in enumerate(order)}
    for parent, children in d.edges.items():
        assert all(pos[c] < pos[parent] for c in children)


def test_to_dag_rejects_invalid():
    with pytest.raises(InvalidModelError):
        to_dag(model([GateSpec("g", OR, ("x",))], "g"))


@pytest.mark.parametrize("seed", range(20))
def test_to_dag_preserves_validity_and_counts(seed):
    m = random_tree(random.Random(seed), 5, rdep=True)
    d = to_dag(m)
    assert validate(d) == []
    assert len(d.nodes) == len(m.nodes) + len(m.rdeps())


def test_infinite_degradation_time_allowed():
    assert validate(model([ebe("e", t_deg=math.inf)], "e")) == []
