"""Line-oriented text format for fault maintenance trees (``.fmt``).

Grammar (EBNF)::

    document   = { statement } ;
    statement  = ( toplevel | or_gate | rdep_gate | ebe | policy | costs ) ";" ;
    toplevel   = "toplevel" ident ;
    or_gate    = ident "or" ident { ident } ;
    rdep_gate  = ident "rdep" [ "gamma=" number ] ident ident { ident } ;
    ebe        = ident "ebe" { ebe_key "=" value } ;
    ebe_key    = "levels" | "tdeg" | "tclean" | "treplace" ;
    policy     = "policy" { ("trep" | "toh" | "tinsp" | "stages") "=" value } ;
    costs      = "costs" { ("repair" | "replace" | "operational" | "failure") "=" number } ;
    value      = number [ "d" | "w" | "m" | "y" ] | "inf" ;
    ident      = /[A-Za-z_][A-Za-z0-9_]*/ ;

For ``rdep`` the first identifier is the trigger, the rest are dependents.
Durations are in days; ``w`` is 7 days, ``m`` is 30.42 days and ``y`` is
365 days. ``//`` starts a comment running to the end of the line.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from .model import (OR, RDEP, CostModel, EbeSpec, FmtModel, GateSpec,
                    MaintenancePolicy)

DAYS_PER_MONTH = 30.42
DAYS_PER_YEAR = 365.0
_UNITS = {"d": 1.0, "w": 7.0, "m": DAYS_PER_MONTH, "y": DAYS_PER_YEAR}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<semi>;)
  | (?P<kv>[A-Za-z_][A-Za-z0-9_]*=[^\s;]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<other>[^\s;]+)
""", re.VERBOSE)

_NUMBER = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


class FmtSyntaxError(ValueError):
    def __init__(self, message, line, column, token=None):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
            continue
        if kind in ("ws", "comment"):
            continue
        out.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
    return out


def parse_duration(text: str, tok: _Tok | None = None) -> float:
    if text == "inf":
        return math.inf
    m = _NUMBER.match(text)
    if not m:
        raise _err(f"expected a duration, got {text!r}", tok)
    rest = text[m.end():]
    if rest == "":
        scale = 1.0
    elif rest in _UNITS:
        scale = _UNITS[rest]
    else:
        raise _err(f"bad unit suffix {rest!r} (use d, w, m or y)", tok)
    return float(m.group()) * scale


def _number(text: str, tok: _Tok | None) -> float:
    if not _NUMBER.fullmatch(text):
        raise _err(f"expected a number, got {text!r}", tok)
    return float(text)


def _integer(text: str, tok: _Tok | None) -> int:
    if not re.fullmatch(r"\d+", text):
        raise _err(f"expected an integer, got {text!r}", tok)
    return int(text)


def _err(msg, tok):
    if tok is None:
        return FmtSyntaxError(msg, 0, 0)
    return FmtSyntaxError(msg, tok.line, tok.col, tok.text)


def _split_statements(tokens):
    stmt = []
    for tok in tokens:
        if tok.kind == "semi":
            if not stmt:
                raise _err("empty statement", tok)
            yield stmt, tok
            stmt = []
        else:
            stmt.append(tok)
    if stmt:
        raise _err("missing ';' at end of statement", stmt[-1])


def _kv(tok, allowed):
    key, _, val = tok.text.partition("=")
    if key not in allowed:
        raise _err(f"unknown attribute {key!r}", tok)
    return key, val


def parse(text: str) -> FmtModel:
    """Parse ``.fmt`` source into an :class:`FmtModel` (not yet validated)."""
    nodes: dict = {}
    top = None
    policy_kw: dict = {}
    cost_kw: dict = {}
    refs = []

    def declare(tok, node):
        if tok.text in nodes:
            raise _err(f"duplicate id {tok.text!r}", tok)
        nodes[tok.text] = node

    for stmt, semi in _split_statements(_tokenize(text)):
        head = stmt[0]
        if head.kind != "ident":
            raise _err(f"unexpected token {head.text!r}", head)
        if head.text == "toplevel":
            if len(stmt) != 2 or stmt[1].kind != "ident":
                raise _err("expected 'toplevel <id>'", stmt[1] if len(stmt) > 1 else semi)
            if top is not None:
                raise _err("toplevel declared twice", head)
            top = stmt[1].text
            continue
        if head.text == "policy":
            for tok in stmt[1:]:
                if tok.kind != "kv":
                    raise _err(f"expected key=value, got {tok.text!r}", tok)
                key, val = _kv(tok, ("trep", "toh", "tinsp", "stages"))
                policy_kw[key] = _integer(val, tok) if key == "stages" else parse_duration(val, tok)
            continue
        if head.text == "costs":
            for tok in stmt[1:]:
                if tok.kind != "kv":
                    raise _err(f"expected key=value, got {tok.text!r}", tok)
                key, val = _kv(tok, ("repair", "replace", "operational", "failure"))
                cost_kw[key] = _number(val, tok)
            continue
        if len(stmt) < 2:
            raise _err("expected an element type after the id", semi)
        kind = stmt[1]
        args = stmt[2:]
        if kind.text == "or":
            if not args:
                raise _err("OR gate needs at least one input", semi)
            for tok in args:
                if tok.kind != "ident":
                    raise _err(f"expected an input id, got {tok.text!r}", tok)
                refs.append(tok)
            declare(head, GateSpec(head.text, OR, tuple(t.text for t in args), line=head.line))
        elif kind.text == "rdep":
            gamma = 1.0
            ids = []
            for tok in args:
                if tok.kind == "kv":
                    _, val = _kv(tok, ("gamma",))
                    gamma = _number(val, tok)
                elif tok.kind == "ident":
                    ids.append(tok)
                    refs.append(tok)
                else:
                    raise _err(f"unexpected token {tok.text!r}", tok)
            if len(ids) < 2:
                raise _err("RDEP needs a trigger and at least one dependent",
                           ids[-1] if ids else semi)
            declare(head, GateSpec(head.text, RDEP, (ids[0].text,), gamma=gamma,
                                   dependents=tuple(t.text for t in ids[1:]), line=head.line))
        elif kind.text == "ebe":
            kw = {}
            for tok in args:
                if tok.kind != "kv":
                    raise _err(f"expected key=value, got {tok.text!r}", tok)
                key, val = _kv(tok, ("levels", "tdeg", "tclean", "treplace"))
                kw[key] = _integer(val, tok) if key == "levels" else parse_duration(val, tok)
            missing = {"levels", "tdeg", "tclean", "treplace"} - kw.keys()
            if missing:
                raise _err("EBE missing " + ", ".join(sorted(missing)), head)
            declare(head, EbeSpec(head.text, kw["levels"], kw["tdeg"], kw["tclean"],
                                  kw["treplace"], line=head.line))
        else:
            raise _err(f"unknown element type {kind.text!r}", kind)

    for tok in refs:
        if tok.text not in nodes:
            raise _err(f"unknown reference {tok.text!r}", tok)
    if top is None:
        raise FmtSyntaxError("missing 'toplevel' declaration", 1, 1)
    if top not in nodes:
        raise FmtSyntaxError(f"unknown top event {top!r}", 1, 1)

    policy = MaintenancePolicy(
        t_rep=policy_kw.get("trep", math.inf),
        t_oh=policy_kw.get("toh", math.inf),
        t_insp=policy_kw.get("tinsp", math.inf),
        timer_stages=policy_kw.get("stages", 3),
    )
    costs = CostModel(
        cost_repair=cost_kw.get("repair", 100.0),
        cost_replace=cost_kw.get("replace", 5000.0),
        cost_operational_per_day=cost_kw.get("operational", 0.0),
        cost_failure_per_day=cost_kw.get("failure", 0.0),
    )
    return FmtModel(nodes, top, policy, costs)


def load(path) -> FmtModel:
    return parse(Path(path).read_text(encoding="utf-8"))


def _num(v: float) -> str:
    if math.isinf(v):
        return "inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def serialize(model: FmtModel) -> str:
    """Emit ``.fmt`` text; durations are written in days."""
    if model.aliases:
        raise ValueError("serialize the original model, not its to_dag() form")
    lines = []
    top = model.nodes[model.top_event]
    for node in [top] + [n for n in model.nodes.values() if n is not top]:
        if isinstance(node, EbeSpec):
            lines.append(f"{node.id} ebe levels={node.levels} tdeg={_num(node.t_deg)}d "
                         f"tclean={_num(node.t_clean)}d treplace={_num(node.t_replace)}d;")
        elif node.kind == OR:
            lines.append(f"{node.id} or {' '.join(node.inputs)};")
        else:
            lines.append(f"{node.id} rdep gamma={float(node.gamma)!r} {node.trigger} "
                         f"{' '.join(node.dependents)};")
    lines[0] = f"toplevel {model.top_event}; " + lines[0]
    p = model.policy
    if p != MaintenancePolicy():
        lines.append(f"policy trep={_dur(p.t_rep)} toh={_dur(p.t_oh)} tinsp={_dur(p.t_insp)} "
                     f"stages={p.timer_stages};")
    c = model.costs
    if c != CostModel():
        lines.append(f"costs repair={_num(c.cost_repair)} replace={_num(c.cost_replace)} "
                     f"operational={_num(c.cost_operational_per_day)} "
                     f"failure={_num(c.cost_failure_per_day)};")
    return "\n".join(lines) + "\n"


def _dur(v):
    return "inf" if math.isinf(v) else _num(v) + "d"
