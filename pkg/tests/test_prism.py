import json
import random
import re

import pytest

from conftest import ebe, model, random_tree
from fmtree.analysis import metrics_from_ctmc
from fmtree.model import OR, RDEP, CostModel, GateSpec, MaintenancePolicy
from fmtree.prism import export, properties, to_prism
from fmtree.semantics import explore

POLICY = MaintenancePolicy(t_rep=60, t_oh=400, t_insp=20, timer_stages=2)
COSTS = CostModel(cost_repair=100, cost_replace=1000, cost_operational_per_day=1,
                  cost_failure_per_day=50)


def small():
    return model([ebe("a", levels=3, t_deg=300), ebe("b", levels=2, t_deg=500),
                  GateSpec("g", OR, ("a", "b")), GateSpec("r", RDEP, ("a",), 2.0, ("b",))],
                 "g", policy=POLICY, costs=COSTS)


def modules(src):
    return re.findall(r"^module (\w+)", src, re.M)


def test_single_ebe_modules():
    assert modules(to_prism(model([ebe("e", levels=3)], "e"))) == ["ebe_e", "delay_tdeg_e"]


def test_export_is_idempotent(tmp_path):
    p1, q1 = export(small(), tmp_path / "a.prism")
    p2, _ = export(small(), tmp_path / "b.prism")
    assert p1.read_bytes() == p2.read_bytes()
    assert q1.read_text() == properties()


def test_synchronised_actions_are_unique_per_vector():
    src = to_prism(small())
    acts = set(re.findall(r"\[(\w+)\]", src))
    assert {"perform_clean", "perform_replace"} <= acts
    assert "degrade_3_a" in acts


def storm_values(m, horizon, tmp_path):
    """Metrics and reachable valuations from the Storm model checker."""
    stormpy = pytest.importorskip("stormpy")
    path, _ = export(m, tmp_path / "m.prism")
    prog = stormpy.parse_prism_program(str(path), prism_compat=True)
    prog = stormpy.preprocess_symbolic_input(prog, [], f"horizon={horizon}")[0].as_prism_program()
    opts = stormpy.BuilderOptions(True, True)
    opts.set_build_state_valuations()
    opts.set_build_all_reward_models()
    built = stormpy.build_sparse_model_with_options(prog, opts)
    init = built.initial_states[0]
    out = {}
    for key, text in [("reliability", f'P=? [ F<={horizon} "top_failed" ]'),
                      ("availability", f'R{{"available"}}=? [ C<={horizon} ]'),
                      ("expected_cost", f'R{{"cost"}}=? [ C<={horizon} ]'),
                      ("expected_failures", f'R{{"failures"}}=? [ C<={horizon} ]')]:
        prop = stormpy.parse_properties_for_prism_program(text, prog)[0]
        out[key] = stormpy.model_checking(built, prop).at(init)
    out["availability"] /= horizon
    out["reliability"] = 1.0 - out["reliability"]
    names = [v.name for m_ in prog.modules for v in m_.integer_variables]
    states = {tuple(json.loads(str(built.state_valuations.get_json(s)))[n] for n in names)
              for s in range(built.nr_states)}
    return out, states


@pytest.mark.parametrize("case", ["small", 0, 1, 2])
def test_agrees_with_external_checker(case, tmp_path):
    if case == "small":
        m = small()
    else:
        m = random_tree(random.Random(case), 3, rdep=True).with_policy(POLICY)
    horizon = 250.0
    theirs, states = storm_values(m, horizon, tmp_path)
    comp = explore(m)
    assert set(map(tuple, comp.local_states.tolist())) == states
    for kind, v in theirs.items():
        assert metrics_from_ctmc(comp.ctmc, kind, [horizon])[0] == pytest.approx(v, rel=1e-7,
                                                                                 abs=1e-9)
