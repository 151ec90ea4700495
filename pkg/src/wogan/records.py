"""Executed-test records, suites, clocks and budgets shared by all generators."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import ConfigError, SchemaMismatch

SOURCES = ("random_init", "wogan", "random_baseline", "frenetic")


@dataclass(frozen=True)
class TestRecord:
    test: tuple[float, ...]
    fitness: float
    source: str
    executed_at: float = 0.0
    generation_time: float = 0.0
    training_time: float = 0.0

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if not 0.0 <= self.fitness <= 1.0:
            raise ValueError(f"fitness {self.fitness} outside [0, 1]")
        if min(self.executed_at, self.generation_time, self.training_time) < 0:
            raise ValueError("times must be non-negative")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kappas": [float(k) for k in self.test],
                "fitness": float(self.fitness),
                "source": self.source,
                "executed_at": float(self.executed_at),
                "generation_time": float(self.generation_time),
                "training_time": float(self.training_time),
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "TestRecord":
        try:
            d = json.loads(line)
            return cls(
                tuple(float(k) for k in d["kappas"]),
                float(d["fitness"]),
                d["source"],
                float(d["executed_at"]),
                float(d["generation_time"]),
                float(d["training_time"]),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaMismatch(f"bad record line: {line[:80]!r}") from exc


class TestSuite:
    """Append-only archive of executed tests, optionally streamed to a sink."""

    __test__ = False

    def __init__(self, records: Iterable[TestRecord] = (), sink: Callable[[TestRecord], None] | None = None):
        self._records: list[TestRecord] = list(records)
        self._sink = sink

    def append(self, record: TestRecord) -> None:
        self._records.append(record)
        if self._sink is not None:
            self._sink(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TestRecord]:
        return iter(self._records)

    def __getitem__(self, i):
        return self._records[i]

    @property
    def records(self) -> tuple[TestRecord, ...]:
        return tuple(self._records)

    def tests(self) -> list[np.ndarray]:
        return [np.array(r.test) for r in self._records]

    def fitnesses(self) -> np.ndarray:
        return np.array([r.fitness for r in self._records])

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for r in self._records:
                fh.write(r.to_json() + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TestSuite":
        """Load records, ignoring a trailing partial line left by an interrupted run."""
        records = []
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        complete = lines[:-1]  # whatever follows the last newline is incomplete
        for line in complete:
            if line.strip():
                records.append(TestRecord.from_json(line))
        return cls(records)


class JsonlSink:
    """Appends each record as one flushed JSON line."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def __call__(self, record: TestRecord) -> None:
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class WallClock:
    """Real elapsed seconds since construction."""

    def __init__(self):
        self._start = time.perf_counter()

    def now(self) -> float:
        return time.perf_counter() - self._start

    def advance(self, seconds: float) -> None:
        pass


class LogicalClock:
    """Deterministic clock that only moves by the simulated time of executions."""

    def __init__(self):
        self._t = 0.0

    def now(self) -> float:
        return self._t

    def advance(self, seconds: float) -> None:
        self._t += float(seconds)


@dataclass
class Budget:
    """Campaign limit in executed tests or in clock seconds (exactly one is set)."""

    max_tests: int | None = None
    max_seconds: float | None = None
    clock: object = field(default=None, repr=False)

    def __post_init__(self):
        if (self.max_tests is None) == (self.max_seconds is None):
            raise ConfigError("budget: set exactly one of max_tests / max_seconds")
        if self.max_tests is not None and self.max_tests < 1:
            raise ConfigError("budget: max_tests must be positive")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ConfigError("budget: max_seconds must be positive")
        if self.clock is None:
            self.clock = LogicalClock() if self.max_tests is not None else WallClock()

    def progress(self, executed: int) -> float:
        if self.max_tests is not None:
            p = executed / self.max_tests
        else:
            p = self.clock.now() / self.max_seconds
        return min(1.0, max(0.0, p))

    def exhausted(self, executed: int) -> bool:
        if self.max_tests is not None:
            return executed >= self.max_tests
        return self.clock.now() >= self.max_seconds


class Executor:
    """Runs tests on the SUT and appends timed records to a suite.

    ``generation_time`` of a record is the clock time between the end of the
    previous execution and the start of this one.
    """

    def __init__(self, sut, suite: TestSuite, clock):
        self.sut = sut
        self.suite = suite
        self.clock = clock
        self._last_end = clock.now()

    def execute(self, test, source: str, training_time: float = 0.0) -> TestRecord:
        start = self.clock.now()
        result = self.sut(test)
        fitness = float(getattr(result, "fitness", result))
        self.clock.advance(getattr(result, "sim_time", 0.0))
        record = TestRecord(
            tuple(float(k) for k in np.asarray(test).reshape(-1)),
            min(1.0, max(0.0, fitness)),
            source,
            executed_at=start,
            generation_time=max(0.0, start - self._last_end),
            training_time=max(0.0, training_time),
        )
        self._last_end = self.clock.now()
        self.suite.append(record)
        return record
