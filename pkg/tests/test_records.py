import json

import pytest

from wogan.errors import ConfigError, SchemaMismatch
from wogan.records import Budget, Executor, JsonlSink, LogicalClock, TestRecord, TestSuite, WallClock


class FakeResult:
    def __init__(self, fitness, sim_time):
        self.fitness = fitness
        self.sim_time = sim_time


def test_record_roundtrip():
    r = TestRecord((0.01, -0.02), 0.5, "wogan", 1.5, 0.25, 0.125)
    assert TestRecord.from_json(r.to_json()) == r
    assert set(json.loads(r.to_json())) == {"kappas", "fitness", "source", "executed_at", "generation_time",
                                            "training_time"}


def test_record_invariants():
    with pytest.raises(ValueError):
        TestRecord((0.0,), 1.5, "wogan")
    with pytest.raises(ValueError):
        TestRecord((0.0,), 0.5, "unknown")
    with pytest.raises(ValueError):
        TestRecord((0.0,), 0.5, "wogan", generation_time=-1)
    with pytest.raises(SchemaMismatch):
        TestRecord.from_json('{"kappas": [0.1]}')


def test_suite_jsonl_ignores_partial_tail(tmp_path):
    path = tmp_path / "r.jsonl"
    with JsonlSink(path) as sink:
        suite = TestSuite(sink=sink)
        for i in range(3):
            suite.append(TestRecord((0.01 * i,), 0.1 * i, "random_baseline"))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"kappas": [0.0], "fitn')  # interrupted write
    loaded = TestSuite.from_jsonl(path)
    assert loaded.records == suite.records


def test_budget_modes():
    with pytest.raises(ConfigError):
        Budget()
    with pytest.raises(ConfigError):
        Budget(10, 5.0)
    b = Budget(max_tests=4)
    assert isinstance(b.clock, LogicalClock)
    assert b.progress(2) == 0.5 and not b.exhausted(3) and b.exhausted(4)
    t = Budget(max_seconds=100.0)
    assert isinstance(t.clock, WallClock) and not t.exhausted(0)


def test_executor_logical_timing():
    clock = LogicalClock()
    suite = TestSuite()
    ex = Executor(lambda t: FakeResult(0.3, 2.5), suite, clock)
    ex.execute([0.0], "random_init")
    ex.execute([0.0], "wogan", training_time=0.0)
    assert [r.executed_at for r in suite] == [0.0, 2.5]
    assert [r.generation_time for r in suite] == [0.0, 0.0]
    assert clock.now() == 5.0


def test_executor_clamps_fitness():
    suite = TestSuite()
    Executor(lambda t: 1.0000000001, suite, LogicalClock()).execute([0.0], "random_baseline")
    assert suite[0].fitness == 1.0
