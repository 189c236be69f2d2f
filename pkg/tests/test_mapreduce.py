import pytest

from dsaft.annealing import calibrated_params, run_chain
from dsaft.errors import ValidationError
from dsaft.mapreduce import (
    IntermediateRecord,
    IntermediateStore,
    JobFailure,
    MapTask,
    ReduceResult,
    map_phase,
    merge_results,
    reduce_best,
    run_job,
    solution_digest,
    store_intermediate,
    verify_intermediates,
)
from dsaft.problems import brute_force_optimum
from dsaft.rng import RngStream


def rec(problem, sol, energy, task):
    return IntermediateRecord(solution_digest(problem, sol), sol, energy, task)


@pytest.fixture
def tasks(tsp7):
    params = calibrated_params(tsp7, 0, steps_per_temperature=10)
    return [MapTask(i, tsp7, params, 100 + i, 10**5) for i in range(4)]


def test_single_task_is_run_chain(tsp7, tasks):
    out = map_phase(tasks[:1])
    t = tasks[0]
    chain = run_chain(tsp7, t.params, RngStream(t.seed, 0), t.budget)
    assert out.records[0].solution == chain.best_solution and out.records[0].energy == chain.best_energy


def test_crashed_task_emits_nothing(tsp7, tasks):
    full = map_phase(tasks)
    part = map_phase(tasks, crash_tasks={2})
    assert [r.task_id for r in part.records] == [0, 1, 3]
    assert part.failed == [(2, "crashed")]
    store = IntermediateStore()
    for r in part.records:
        store_intermediate(store, r)
    verify_intermediates(store, tsp7)
    survivors = [r for r in full.records if r.task_id != 2]
    assert reduce_best(store).energy == min(r.energy for r in survivors)


def test_failing_mapper_only_loses_its_output(tsp7, tasks):
    class Boom:
        kind = "tsp"

        def random_solution(self, rng):
            raise RuntimeError("mapper died")

    bad = MapTask(9, Boom(), tasks[0].params, 0, 10)
    out = map_phase(tasks[:2] + [bad])
    assert len(out.records) == 2 and out.failed[0][0] == 9


def test_task_ids_must_be_unique(tasks):
    with pytest.raises(ValidationError):
        map_phase([tasks[0], tasks[0]])
    with pytest.raises(ValidationError):
        map_phase([])


def test_parallel_workers_match_serial(tasks):
    assert map_phase(tasks, workers=2).records == map_phase(tasks).records


def test_store_dedups_and_canonicalizes(tsp7):
    tour = (0, 1, 3, 2, 4, 6, 7, 5)
    store = IntermediateStore()
    store_intermediate(store, rec(tsp7, tour, 4.0, 1))
    store_intermediate(store, rec(tsp7, tour, 4.0, 0))
    assert len(store) == 1 and store.get(solution_digest(tsp7, tour)).task_id == 0
    for k in range(8):
        rot = tour[k:] + tour[:k]
        assert solution_digest(tsp7, rot) == solution_digest(tsp7, tour)
        assert solution_digest(tsp7, rot[::-1]) == solution_digest(tsp7, tour)
    assert solution_digest(tsp7, tour) in store


def test_verify_finds_exactly_the_bad_entries(tsp7):
    rng = RngStream(0)
    store = IntermediateStore()
    sols = [tsp7.random_solution(rng) for _ in range(30)]
    for i, s in enumerate(sols):
        store_intermediate(store, rec(tsp7, s, tsp7.energy(s), i))
    assert verify_intermediates(store, tsp7) == []
    victim = next(iter(store))
    victim.energy -= 0.5
    bad = verify_intermediates(store, tsp7)
    assert [(m.digest, m.kind) for m in bad] == [(victim.digest, "energy")]
    store.entries["junk"] = IntermediateRecord("junk", (0, 0, 1), 1.0, 99)
    kinds = sorted(m.kind for m in verify_intermediates(store, tsp7))
    assert kinds == ["energy", "infeasible"]


def test_reduce_rules(skewed):
    store = IntermediateStore()
    store_intermediate(store, IntermediateRecord("s1", 1.0, 5.0, 0, True))
    store_intermediate(store, IntermediateRecord("s2", 2.0, 3.0, 1, True))
    assert reduce_best(store).solution == 2.0
    store_intermediate(store, IntermediateRecord("s3", 3.0, 3.0, 4, True))
    store_intermediate(store, IntermediateRecord("s4", 4.0, 3.0, 2, True))
    assert reduce_best(store).task_id == 1
    tie = IntermediateStore()
    tie.entries = {"a": IntermediateRecord("a", 0.0, 3.0, 4, True), "b": IntermediateRecord("b", 0.1, 3.0, 2, True)}
    assert reduce_best(tie).task_id == 2
    with pytest.raises(JobFailure):
        reduce_best(IntermediateStore())
    unverified = IntermediateStore()
    store_intermediate(unverified, IntermediateRecord("x", 0.0, 1.0, 0))
    with pytest.raises(JobFailure):
        reduce_best(unverified)


def test_merge_results():
    parts = [ReduceResult("a", 2.0, 3), ReduceResult("b", 1.0, 5), ReduceResult("c", 1.0, 4)]
    assert merge_results(parts).task_id == 4
    with pytest.raises(JobFailure):
        merge_results([])


def test_store_roundtrip(tmp_path, tsp7):
    store = IntermediateStore()
    s = tsp7.random_solution(RngStream(1))
    store_intermediate(store, rec(tsp7, s, tsp7.energy(s), 3))
    store.dump(tmp_path / "s.jsonl")
    back = IntermediateStore.load(tmp_path / "s.jsonl")
    assert [(r.digest, r.solution, r.energy, r.task_id) for r in back] == \
        [(r.digest, r.solution, r.energy, r.task_id) for r in store]
    (tmp_path / "bad.jsonl").write_text('{"digest": "x"}\n')
    with pytest.raises(ValidationError, match=":1:"):
        IntermediateStore.load(tmp_path / "bad.jsonl")


def test_job_finds_tsp_optimum(tsp7, tasks):
    store, bad, result, failed = run_job(tasks, tsp7)
    assert bad == [] and failed == []
    assert result.energy == pytest.approx(brute_force_optimum(tsp7)[1], abs=1e-9)
