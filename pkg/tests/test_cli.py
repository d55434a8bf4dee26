import csv
import io
import json

import jsonschema
import pytest
from click.testing import CliRunner

from conftest import DATA, HVAC, TWO_MODULE
from fmtree.cli import main, parse_costs, parse_horizons
from fmtree.model import CostModel

SMALL = """toplevel g;
g or a b;
a ebe levels=3 tdeg=400d tclean=1d treplace=7d;
b ebe levels=2 tdeg=600d tclean=1d treplace=7d;
r rdep gamma=2.0 a b;
policy trep=90d tinsp=30d stages=2;
"""


def run(*args, **kw):
    return CliRunner().invoke(main, [str(a) for a in args], **kw)


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.fmt"
    p.write_text(SMALL)
    return p


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def schema(name):
    return json.loads((DATA / name).read_text())


def test_parse_horizons():
    assert parse_horizons("0:25:5y") == [i * 5 * 365.0 for i in range(6)]
    assert parse_horizons("1y, 30d") == [365.0, 30.0]
    assert parse_horizons("0:10:5") == [0.0, 5.0, 10.0]
    for bad in ("", "1:2", "0:5:0", "inf", "-3d"):
        with pytest.raises(ValueError):
            parse_horizons(bad)


def test_parse_costs():
    c = parse_costs("repair=1,failure=2.5", CostModel())
    assert (c.cost_repair, c.cost_failure_per_day, c.cost_replace) == (1.0, 2.5, 5000.0)
    with pytest.raises(ValueError):
        parse_costs("bogus=1", CostModel())


def test_check_exit_codes(tmp_path, small):
    assert run("check", HVAC).exit_code == 0
    r = run("check", tmp_path / "missing.fmt")
    assert r.exit_code == 2
    bad = tmp_path / "bad.fmt"
    bad.write_text("toplevel g;\ng or ;\n")
    r = run("check", bad)
    assert r.exit_code == 3 and "line 2, column 6" in r.output
    gate_trigger = tmp_path / "gate.fmt"
    gate_trigger.write_text(SMALL.replace("r rdep gamma=2.0 a b;",
                                          "h or a;\nr rdep gamma=2.0 h b;"))
    r = run("check", gate_trigger)
    assert r.exit_code == 3 and "RDEP trigger must be EBE" in r.output


def test_budget_exit_code_and_hint():
    r = run("analyze", HVAC, "-t", "1y", "--budget", "1000")
    assert r.exit_code == 4
    assert "--decompose" in r.output


def test_analyze_small_csv_and_json(small):
    r = run("analyze", small, "-m", "all", "-t", "0,100,200")
    assert r.exit_code == 0, r.output
    out = rows(r.output)
    assert len(out) == 12
    assert list(out[0]) == ["model", "metric", "horizon_days", "value", "states", "time_ms"]
    rel = [float(x["value"]) for x in out if x["metric"] == "reliability"]
    assert rel[0] == 1.0 and rel[0] > rel[1] > rel[2]
    r = run("analyze", small, "-m", "availability", "-t", "0", "--format", "json")
    doc = json.loads(r.output)
    jsonschema.validate(doc, schema("analysis.schema.json"))
    assert doc["results"][0]["value"] == 1.0


def test_analyze_cost_override_and_output_file(small, tmp_path):
    out = tmp_path / "o.csv"
    r = run("analyze", small, "-m", "expected_cost", "-t", "100", "--costs", "operational=2",
            "-o", out)
    assert r.exit_code == 0 and r.output == ""
    base = float(rows(run("analyze", small, "-m", "expected_cost", "-t", "100").output)[0]["value"])
    assert float(rows(out.read_text())[0]["value"]) == pytest.approx(base + 200)


@pytest.mark.slow
def test_hvac_reliability_table():
    r = run("analyze", HVAC, "-t", "0:25:5y", "--decompose")
    assert r.exit_code == 0, r.output
    vals = [float(x["value"]) for x in rows(r.output)]
    assert len(vals) == 6 and vals[0] == 1.0
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_compare_two_module_json():
    r = run("compare", TWO_MODULE, "-t", "1y", "--format", "json")
    assert r.exit_code == 0, r.output
    row = json.loads(r.output)["rows"][0]
    assert row["abstract_states"] < row["original_states"]
    assert row["deviation"] < 0.01


def test_sweep_single_strategy_with_note(small, tmp_path):
    strat = tmp_path / "s.toml"
    strat.write_text('[fast]\ntrep = "30d"\nnote = "aggressive"\n')
    r = run("sweep", small, "-s", strat, "-t", "100,200", "--monolithic")
    assert r.exit_code == 0, r.output
    out = rows(r.output)
    assert [x["metric"] for x in out] == ["expected_cost", "expected_failures"]
    assert out[0]["note"] == "aggressive" and out[0]["pareto"] == "1"
    assert list(out[0]) == ["metric", "strategy", "100", "200", "pareto", "note"]


def test_sweep_pareto_marks_dominated(small, tmp_path):
    strat = tmp_path / "s.toml"
    strat.write_text('[often]\ntrep = "30d"\n[never]\ntrep = "inf"\ntinsp = "inf"\n')
    out = rows(run("sweep", small, "-s", strat, "-t", "300", "--monolithic").output)
    assert {x["strategy"] for x in out} == {"often", "never"}
    assert any(x["pareto"] == "1" for x in out)


def test_sweep_malformed_file(small, tmp_path):
    strat = tmp_path / "s.toml"
    strat.write_text("[x]\ntrep = \n")
    assert run("sweep", small, "-s", strat).exit_code == 3
    strat.write_text('[x]\nwhen = "1y"\n')
    r = run("sweep", small, "-s", strat)
    assert r.exit_code == 3 and "when" in r.output


def test_simulate_reproducible_and_schema(small, tmp_path):
    args = ("simulate", small, "-n", "500", "-t", "200d", "--seed", "9")
    a, b = json.loads(run(*args).output), json.loads(run(*args).output)
    a.pop("time_ms"), b.pop("time_ms")
    assert a == b
    runs_csv = tmp_path / "runs.csv"
    r = run(*args, "--erlang", "--compare", "--runs-csv", runs_csv)
    doc = json.loads(r.output)
    jsonschema.validate(doc, schema("simulation.schema.json"))
    assert set(doc["numeric"]) == set(doc["estimates"])
    assert len(rows(runs_csv.read_text())) == 500


def test_simulate_one_run(small):
    r = run("simulate", small, "-n", "1", "-t", "10d")
    assert r.exit_code == 0
    jsonschema.validate(json.loads(r.output), schema("simulation.schema.json"))


def test_export_prism_idempotent(small, tmp_path):
    a, b = tmp_path / "a.prism", tmp_path / "b.prism"
    assert run("export-prism", small, a).exit_code == 0
    run("export-prism", small, b)
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.props").exists()


def test_threads_option(small):
    r = run("--threads", "1", "analyze", small, "-t", "10")
    assert r.exit_code == 0
    r = CliRunner(env={"FMTREE_THREADS": "2"}).invoke(main, ["analyze", str(small), "-t", "10"])
    assert r.exit_code == 0


def test_runtime_error_exit_code(small):
    r = run("analyze", small, "-t", "1:2")
    assert r.exit_code == 1
