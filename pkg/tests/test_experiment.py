import json
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsaft import experiment as ex
from dsaft.errors import ConfigError, DegenerateTraceError, ParameterError

AMDAHL_09_8 = 4.70588235294117647058823529

SMALL = {
    "problem": {"kind": "skewed1d"},
    "anneal": {"steps_per_temperature": 10},
    "cluster": {"n_searchers": 4},
}


def cfg(**sections):
    data = {k: dict(v) for k, v in SMALL.items()}
    for k, v in sections.items():
        data.setdefault(k, {}).update(v)
    return ex.config_from_dict(data)


def test_defaults_fill_every_optional_key():
    c = ex.config_from_dict({"problem": {"kind": "tsp"}})
    assert c.anneal["alpha"] == 0.95 and c.anneal["steps_per_temperature"] == 50
    assert c.cluster["n_searchers"] == 8 and c.cluster["budget_ticks"] is None
    assert c.fabric.loss_probability == 0.0 and c.tolerance.theta == 0.1
    assert c.experiment["format"] == "csv" and c.problem["n_cities"] == 8


@pytest.mark.parametrize("section,key,value", [
    ("fabric", "loss_probability", 1.0),
    ("anneal", "alpha", 0),
    ("cluster", "n_searchers", 0),
    ("tolerance", "strategies", ["nope"]),
    ("experiment", "format", "xml"),
])
def test_range_errors_name_the_key(section, key, value):
    with pytest.raises(ConfigError) as err:
        cfg(**{section: {key: value}})
    assert (f"{section}.{key}") in [k for k, _ in err.value.problems]


def test_all_problems_reported_at_once():
    with pytest.raises(ConfigError) as err:
        ex.config_from_dict({"problem": {}, "anneal": {"alpha": 2, "zzz": 1}, "bogus": {},
                             "anneal_": 3, "fabric": {"jitter": -1}})
    keys = {k for k, _ in err.value.problems}
    assert {"problem.kind", "anneal.alpha", "anneal.zzz", "bogus", "anneal_", "fabric.jitter"} <= keys
    assert "anneal.alpha" in str(err.value)


def test_t_low_must_be_below_t0():
    with pytest.raises(ConfigError, match="anneal.t_low"):
        cfg(anneal={"t0": 1.0, "t_low": 2.0})


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        ex.parse_config(tmp_path / "none.toml")
    with pytest.raises(ConfigError, match="problem.instance"):
        ex.config_from_dict({"problem": {"kind": "tsp", "instance": "nope.tsp"}}, tmp_path)
    (tmp_path / "bad.toml").write_text("[problem\n")
    with pytest.raises(ConfigError, match="TOML"):
        ex.parse_config(tmp_path / "bad.toml")


def test_inline_faults_are_validated_against_cluster():
    with pytest.raises(ConfigError, match="faults"):
        cfg(faults={"crash": [{"node": 7, "tick": 1}]})


def test_explicit_temperatures():
    c = cfg(anneal={"t0": 2.0})
    p = ex.make_params(c.anneal, ex.make_problem(c.problem), 0)
    assert p.t0 == 2.0 and p.t_low == pytest.approx(2e-3)


def test_amdahl_examples():
    assert ex.amdahl_speedup(1, 4) == 4.0
    assert ex.amdahl_speedup(0, 64) == 1.0
    assert ex.amdahl_speedup(0.9, 8) == pytest.approx(AMDAHL_09_8, rel=1e-14)
    for p, n in [(-0.1, 2), (1.1, 2), (0.5, 0), (0.5, 2.5)]:
        with pytest.raises(ParameterError):
            ex.amdahl_speedup(p, n)


@given(st.floats(0, 1), st.integers(1, 10**4))
def test_amdahl_bounds(p, n):
    s = ex.amdahl_speedup(p, n)
    assert 1 - 1e-12 <= s <= n * (1 + 1e-12)


def fake_trace(steps, sent, cost, coord=0):
    return SimpleNamespace(total_steps=steps, messages_sent=sent, per_message_cost=cost, coordinator_events=coord)


def test_overhead_rule():
    free = ex.overhead_analysis(fake_trace(100, 10**6, 0.0), 0.9, 8)
    assert free.beneficial
    r = ex.overhead_analysis(fake_trace(10, 3, 1.0), 1.0, 4)
    assert r.comm_cost_fraction == pytest.approx(0.3) and r.threshold == pytest.approx(0.25)
    assert not r.beneficial
    est = ex.overhead_analysis(fake_trace(90, 0, 0.0, coord=10), None, 4)
    assert est.p == pytest.approx(0.9) and est.p_source == "estimated"
    alt = ex.overhead_analysis(fake_trace(10, 1, 0.1), 0.75, 4, "1-p")
    assert alt.threshold == pytest.approx(0.25 / ex.amdahl_speedup(0.75, 4))
    with pytest.raises(DegenerateTraceError):
        ex.overhead_analysis(fake_trace(0, 0, 0.0), 0.5, 2)


def test_fault_free_report():
    report, trace = ex.execute(cfg(), 0)
    assert report.faults_applied == 0 and report.sanctions == 0 and report.flags == 0
    assert report.completed
    assert report.global_hit is not None and 0 <= report.node_hit_fraction <= 1
    assert report.messages_sent == trace.messages_sent == sum(report.messages_by_kind.values())


def test_crash_bookkeeping():
    c = cfg(faults={"crash": [{"node": 1, "tick": 50}, {"node": 2, "tick": 300}]},
            fabric={"loss_probability": 0.1, "corruption_probability": 0.05})
    report, trace = ex.execute(c, 3)
    assert report.crashes == 2
    assert report.faults_applied == len(trace.fault_trace) == sum(report.faults_by_kind.values())
    assert report.messages_dropped == trace.fault_trace.count("drop")
    assert report.corruptions_applied == trace.fault_trace.count("corrupt")


def test_outputs_are_byte_identical(tmp_path):
    c = cfg(fabric={"jitter": 2, "loss_probability": 0.05})
    for sub in ("a", "b"):
        ex.run_experiment(c, 1, tmp_path / sub, "csv")
    for name in ("trace.csv", "report.json", "events.jsonl", "convergence.dat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report, trace = ex.execute(c, 1)
    ex.emit_outputs(report, trace, tmp_path / "c")
    assert (tmp_path / "c" / "trace.csv").read_bytes() == (tmp_path / "a" / "trace.csv").read_bytes()


def test_trace_csv_shape():
    report, trace = ex.execute(cfg(), 0)
    lines = ex.trace_csv(trace).splitlines()
    assert lines[0] == "tick,global_best_energy,messages_sent,messages_dropped,live_nodes"
    assert len(lines) == trace.ticks + 1
    assert lines[1].split(",")[1] == ""  # nothing delivered at tick 0
    conv = ex.convergence_rows(trace)
    energies = [e for _, e in conv[:-1]]
    assert energies == sorted(energies, reverse=True)
    assert conv[-1][1] == report.final_best_energy


def test_json_format(tmp_path):
    report, trace = ex.execute(cfg(), 0)
    paths = ex.emit_outputs(report, trace, tmp_path, "json")
    rows = json.loads(paths["trace"].read_text())
    assert len(rows) == trace.ticks and set(rows[0]) == set(ex.TRACE_HEADER)
    events = [json.loads(line) for line in paths["events"].read_text().splitlines()]
    assert events[-1]["ev"] == "end"


def test_sweep_of_one_is_the_run():
    c = cfg()
    sweep = ex.run_sweep(c.with_seed(4), 1)
    single = ex.execute(c, 4)[0]
    assert sweep.runs == [single.to_dict()]
    assert sweep.summary["final_best_energy"]["median"] == single.final_best_energy


def test_sweep_is_ordered_and_parallel_safe():
    c = cfg()
    serial = ex.run_sweep(c, 3)
    parallel = ex.run_sweep(c, 3, workers=2)
    assert [r["seed"] for r in serial.runs] == [0, 1, 2]
    assert serial.runs == parallel.runs
    with pytest.raises(ParameterError):
        ex.run_sweep(c, 0)


def test_paired_comparison_fields():
    c = cfg()
    on, off = ex.run_sweep(c, 3), ex.run_sweep(c.with_updates(cluster={"broadcasts": False}), 3)
    table = ex.paired_comparison(on, off)
    assert table["seeds"] == 3 and table["paired_wins"] + table["paired_losses"] <= 3
    assert off.summary["messages_sent"]["median"] < on.summary["messages_sent"]["median"]


def test_jobshop_and_tsp_configs_run():
    for problem in ({"kind": "jobshop", "jobs": 2, "machines": 2}, {"kind": "tsp", "n_cities": 6}):
        report, _ = ex.execute(cfg(problem=problem), 0)
        assert report.final_best_energy is not None and report.global_hit is None
