"""Export a fault maintenance tree as a PRISM-language CTMC.

Every element chain becomes one module. Each sync vector gets its own action
name, so PRISM's rate-product synchronisation reproduces the composition
done by :mod:`fmtree.semantics`. Passive listeners get explicit self-loops
wherever they cannot react. The horizon constant is left as an undefined
constant for the checker's command line.
"""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path

from .model import FmtModel, or_subtree_ebes, require_valid
from .semantics import PERFORM_CLEAN, PERFORM_REPLACE, build_elements, degrade


def _ident(s: str) -> str:
    s = re.sub(r"\W", "_", s)
    return s if re.match(r"[A-Za-z_]", s) else "_" + s


def _num(x: float) -> str:
    return repr(float(x))


def _action_names(vectors, elements):
    """Unique PRISM action per sync vector; lone unguarded moves stay unlabelled."""
    names = []
    for v in vectors:
        if len(v.members) == 1 and not v.passive and v.guard is None:
            names.append("")
        elif v.action.startswith("degrade_"):
            names.append(_ident(f"{v.action}_{elements[v.members[0][0]].owner}"))
        elif v.guard is not None:
            names.append(_ident(f"{v.action}_{v.guard.replace('!', 'not_')}"))
        else:
            names.append(_ident(v.action))
    dup = [n for n, c in Counter(names).items() if n and c > 1]
    if dup:
        raise ValueError(f"ambiguous PRISM action names: {dup}")
    return names


def to_prism(model: FmtModel) -> str:
    """PRISM source for ``model``; identical input gives identical bytes."""
    require_valid(model)
    elements, vectors, ebe_idx = build_elements(model)
    ebes = {e.id: e for e in model.ebes()}
    var = {}
    for k, el in enumerate(elements):
        var[k] = _ident(f"{el.role}_{el.owner}".lower().replace("-", "_"))
    lvl = {eid: var[k] for eid, k in ebe_idx.items()}

    def failed(eid):
        return f"({lvl[eid]}={ebes[eid].levels})"

    top = " | ".join(failed(e) for e in or_subtree_ebes(model, model.top_event)) or "false"
    formulas = {
        "top_failed": top,
        "trig": " | ".join(f"({v}>0)" for v in lvl.values()) or "false",
        "thresh": " | ".join(f"({lvl[e]}>0 & {lvl[e]}<{ebes[e].levels})" for e in lvl) or "false",
    }
    for g in model.rdeps():
        for d in g.dependents:
            formulas[f"accel_{_ident(model.physical(d))}"] = failed(model.physical(g.trigger))

    def guard_expr(g):
        if g is None:
            return None
        neg = g.startswith("!")
        name = _ident(g.lstrip("!"))
        return f"!{name}" if neg else name

    names = _action_names(vectors, elements)
    commands: dict[int, list[str]] = {k: [] for k in range(len(elements))}
    for vi, vec in enumerate(vectors):
        act = names[vi]
        vguard = guard_expr(vec.guard)
        for pos, (k, label) in enumerate(vec.members):
            el = elements[k]
            for s, a, d, r, g in el.moves:
                if a != label:
                    continue
                conds = [f"{var[k]}={s}"]
                if guard_expr(g):
                    conds.append(guard_expr(g))
                if pos == 0 and vguard:
                    conds.append(vguard)
                commands[k].append(f"  [{act}] {' & '.join(conds)} -> {_num(r)} : ({var[k]}'={d});")
        for k, label in vec.passive:
            el = elements[k]
            able = set()
            for s, a, d, r, g in el.moves:
                if a == label:
                    able.add(s)
                    commands[k].append(f"  [{act}] {var[k]}={s} -> {_num(r)} : ({var[k]}'={d});")
            for s in range(el.ctmc.n_states):
                if s not in able:
                    commands[k].append(f"  [{act}] {var[k]}={s} -> 1.0 : true;")

    out = [f"// fault maintenance tree {model.top_event!r}, exported for PRISM",
           "ctmc", "", "const double horizon;", ""]
    for name, expr in formulas.items():
        out.append(f"formula {name} = {expr};")
    out.append("")
    for k, el in enumerate(elements):
        out.append(f"module {var[k]}")
        out.append(f"  {var[k]} : [0..{el.ctmc.n_states - 1}] init {el.initial};")
        out.extend(commands[k])
        out.append("endmodule")
        out.append("")
    out.append('label "top_failed" = top_failed;')
    out.append("")

    costs = model.costs
    clean_acts = [n for n, v in zip(names, vectors) if v.action == PERFORM_CLEAN]
    replace_acts = [n for n, v in zip(names, vectors) if v.action == PERFORM_REPLACE]
    out += ['rewards "available"', "  !top_failed : 1;", "endrewards", ""]
    out.append('rewards "cost"')
    if costs.cost_operational_per_day:
        out.append(f"  true : {_num(costs.cost_operational_per_day)};")
    if costs.cost_failure_per_day:
        out.append(f"  top_failed : {_num(costs.cost_failure_per_day)};")
    out += [f"  [{a}] true : {_num(costs.cost_repair)};" for a in clean_acts]
    out += [f"  [{a}] true : {_num(costs.cost_replace)};" for a in replace_acts]
    out += ["endrewards", ""]
    # the top can only start failing by an EBE of the top sub-tree reaching its last level
    out.append('rewards "failures"')
    for eid in or_subtree_ebes(model, model.top_event):
        label = degrade(ebes[eid].levels)
        for n, v in zip(names, vectors):
            if v.action == label and v.members[0][0] == ebe_idx[eid]:
                out.append(f"  [{n}] !top_failed : 1;")
    out += ["endrewards", ""]
    return "\n".join(out)


def properties() -> str:
    """The four metrics as PRISM properties over the ``horizon`` constant."""
    return "\n".join([
        "// unreliability (reliability is one minus this)",
        'P=? [ F<=horizon "top_failed" ]',
        "// availability (divide by horizon)",
        'R{"available"}=? [ C<=horizon ]',
        "// expected cost",
        'R{"cost"}=? [ C<=horizon ]',
        "// expected number of failures",
        'R{"failures"}=? [ C<=horizon ]',
        "",
    ])


def export(model: FmtModel, path) -> tuple[Path, Path]:
    """Write ``<path>`` (model) and ``<path>`` with suffix ``.props``."""
    path = Path(path)
    props = path.with_suffix(".props")
    path.write_text(to_prism(model) + "\n", encoding="utf-8")
    props.write_text(properties(), encoding="utf-8")
    return path, props
