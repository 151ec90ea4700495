"""Repeated campaigns, persisted records, aggregate tables, SVG plots and road replays."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .baselines import FreneticConfig, draw_valid, frenetic_run, random_search_run, uniform_random_test
from .engine import WoganConfig, WoganGenerator
from .errors import ConfigError, EmptyGroup, InvalidRoad, SchemaMismatch
from .geometry import GeometryConfig, check_test
from .nn import WganHyper
from .metrics import SuiteStats, suite_stats
from .records import Budget, JsonlSink, TestSuite
from .sut import MockSUT, SimConfig, simulate, write_trace_csv

log = logging.getLogger(__name__)

ALGORITHMS = ("wogan", "random", "frenetic")
STATS_FILE = "stats.csv"
AGGREGATE_FILE = "aggregate.csv"
CONFIG_FILE = "config.json"

# nested config sections and their dataclasses
_SECTIONS = {
    "wogan": WoganConfig,
    "wgan": WganHyper,
    "frenetic": FreneticConfig,
    "geometry": GeometryConfig,
    "sim": SimConfig,
}


@dataclass(frozen=True)
class CampaignConfig:
    algorithm: str = "wogan"
    budget_tests: int | None = 300
    budget_seconds: float | None = None
    repetitions: int = 1
    seed: int = 0
    output_dir: str = "runs"
    workers: int = 1
    threshold: float = 0.95
    wogan: WoganConfig = field(default_factory=WoganConfig)
    wgan: WganHyper = field(default_factory=WganHyper)
    frenetic: FreneticConfig = field(default_factory=FreneticConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: expected one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions: must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")
        if (self.budget_tests is None) == (self.budget_seconds is None):
            raise ConfigError("budget: set exactly one of budget_tests / budget_seconds")
        if self.budget_tests is not None and self.budget_tests < 1:
            raise ConfigError("budget_tests: must be positive")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ConfigError("budget_seconds: must be positive")

    @property
    def count_mode(self) -> bool:
        return self.budget_tests is not None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "CampaignConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in data.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            if isinstance(value, section):
                kwargs[key] = value
                continue
            if not isinstance(value, Mapping):
                raise ConfigError(f"{key}: expected an object")
            try:
                kwargs[key] = section(**value)
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "CampaignConfig":
        data = {k: v for k, v in overrides.items() if v is not None}
        if "budget_tests" in data:
            data.setdefault("budget_seconds", None)
        elif "budget_seconds" in data:
            data["budget_tests"] = None
        return CampaignConfig.from_dict({**{f.name: getattr(self, f.name) for f in dataclasses.fields(self)},
                                         **data})


# ---------------------------------------------------------------------------
# campaigns

@dataclass
class CampaignResult:
    algorithm: str
    stats: list[SuiteStats]

    @property
    def aggregate(self) -> dict[str, tuple[float | None, float | None]]:
        """Mean and sample standard deviation of every stats column."""
        return {col: _mean_sd([getattr(s, col) for s in self.stats]) for col in SuiteStats.columns()}

    @classmethod
    def load(cls, directory) -> "CampaignResult":
        directory = Path(directory)
        try:
            cfg = json.loads((directory / CONFIG_FILE).read_text(encoding="utf-8"))
            algorithm = cfg["algorithm"]
            stats = _read_stats(directory / STATS_FILE)
            stored = _read_aggregate(directory / AGGREGATE_FILE)
        except (OSError, KeyError, ValueError) as exc:
            raise SchemaMismatch(f"{directory}: {exc}") from exc
        result = cls(algorithm, stats)
        for col, (mean, sd) in result.aggregate.items():
            if col not in stored or not (_close(mean, stored[col][0]) and _close(sd, stored[col][1])):
                raise SchemaMismatch(f"{directory}: aggregate column {col!r} disagrees with per-repetition rows")
        return result


def _mean_sd(values: Sequence[float | None]) -> tuple[float | None, float | None]:
    vals = [float(v) for v in values if v is not None]
    if not vals:
        return None, None
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return float(np.mean(vals)), sd


def _close(a: float | None, b: float | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def _cell(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _parse(v: str) -> float | None:
    return None if v == "" else float(v)


def _read_stats(path: Path) -> list[SuiteStats]:
    out = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(SuiteStats(
                executed=int(row["executed"]),
                failing=int(row["failing"]),
                mean_fitness_final_80=float(row["mean_fitness_final_80"]),
                mean_fitness_final_20=float(row["mean_fitness_final_20"]),
                mean_generation_time=float(row["mean_generation_time"]),
                sd_generation_time=float(row["sd_generation_time"]),
                diversity=_parse(row["diversity"]),
            ))
    if not out:
        raise ValueError("no repetitions in stats file")
    return out


def _read_aggregate(path: Path) -> dict[str, tuple[float | None, float | None]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return {row["column"]: (_parse(row["mean"]), _parse(row["sd"])) for row in csv.DictReader(fh)}


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _budget(cfg: CampaignConfig) -> Budget:
    return Budget(cfg.budget_tests, cfg.budget_seconds)


def run_repetition(cfg: CampaignConfig, k: int) -> SuiteStats:
    """Run repetition ``k`` with seed ``cfg.seed + k`` and write its records."""
    out = Path(cfg.output_dir)
    rng = np.random.default_rng(cfg.seed + k)
    sut = MockSUT(cfg.sim, cfg.geometry)
    with JsonlSink(out / f"rep_{k:03d}.jsonl") as sink:
        if cfg.algorithm == "wogan":
            wcfg = dataclasses.replace(cfg.wogan, budget_tests=cfg.budget_tests, budget_seconds=cfg.budget_seconds)
            gen = WoganGenerator(sut, wcfg, cfg.geometry, cfg.wgan, rng, sink)
            suite = gen.run()
            ckpt = out / f"rep_{k:03d}_models"
            ckpt.mkdir(exist_ok=True)
            gen.wgan.generator.save(ckpt / "generator.json")
            gen.wgan.critic.save(ckpt / "critic.json")
            gen.analyzer.save(ckpt / "analyzer.json")
        elif cfg.algorithm == "random":
            suite = random_search_run(sut, _budget(cfg), rng, cfg.wogan.test_dim, cfg.geometry, sink)
        else:
            suite = frenetic_run(sut, _budget(cfg), rng, cfg.frenetic, cfg.geometry, sink)
    stats = suite_stats(suite, cfg.threshold, cfg.geometry)
    log.info("%s rep %d: %d executed, %d failing", cfg.algorithm, k, stats.executed, stats.failing)
    return stats


def _run_one(args: tuple[CampaignConfig, int]) -> SuiteStats:
    return run_repetition(*args)


def run_experiment(cfg: CampaignConfig) -> CampaignResult:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    jobs = [(cfg, k) for k in range(cfg.repetitions)]
    if cfg.workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            stats = list(pool.map(_run_one, jobs))
    else:
        stats = [_run_one(j) for j in jobs]
    result = CampaignResult(cfg.algorithm, stats)
    cols = SuiteStats.columns()
    _write_csv(out / STATS_FILE, ["repetition", "seed", *cols],
               [[k, cfg.seed + k, *(_cell(getattr(s, c)) if c == "diversity" else getattr(s, c) for c in cols)]
                for k, s in enumerate(stats)])
    # full precision so the aggregate can be recomputed and compared on load
    _write_csv(out / AGGREGATE_FILE, ["column", "mean", "sd"],
               [[c, _cell(m), _cell(sd)] for c, (m, sd) in result.aggregate.items()])
    return result


# ---------------------------------------------------------------------------
# comparison table

TABLE_ROWS = (
    ("mean executed tests", "executed", 0),
    ("SD executed tests", "executed", 1),
    ("mean failing tests", "failing", 0),
    ("SD failing tests", "failing", 1),
    ("mean fitness final 80%", "mean_fitness_final_80", 0),
    ("SD fitness final 80%", "mean_fitness_final_80", 1),
    ("mean fitness final 20%", "mean_fitness_final_20", 0),
    ("SD fitness final 20%", "mean_fitness_final_20", 1),
    ("mean diversity", "diversity", 0),
    ("SD diversity", "diversity", 1),
)


def aggregate(results_dirs: Sequence) -> list[list[str]]:
    """Comparison table: a header row, then one row per statistic with one column per directory."""
    results = [CampaignResult.load(d) for d in results_dirs]
    header = ["statistic", *(r.algorithm for r in results)]
    rows = [header]
    for label, col, which in TABLE_ROWS:
        cells = []
        for r in results:
            v = r.aggregate[col][which]
            cells.append("n/a" if v is None else f"{v:.2f}")
        rows.append([label, *cells])
    return rows


def format_table(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


# ---------------------------------------------------------------------------
# SVG output

@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


def box_stats(values: Sequence[float]) -> BoxStats:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EmptyGroup("box plot group is empty")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    outliers = v[(v < q1 - 1.5 * iqr) | (v > q3 + 1.5 * iqr)]
    return BoxStats(float(med), float(q1), float(q3), float(inside.min()), float(inside.max()),
                    tuple(float(x) for x in outliers))


def emit_boxplot(values_per_group: Mapping[str, Sequence[float]], out_path, title: str = "") -> Path:
    """Write a standalone SVG box plot with one box per group."""
    if not values_per_group:
        raise EmptyGroup("no groups to plot")
    stats = {name: box_stats(vals) for name, vals in values_per_group.items()}
    lo = min(min(s.whisker_low, *s.outliers) if s.outliers else s.whisker_low for s in stats.values())
    hi = max(max(s.whisker_high, *s.outliers) if s.outliers else s.whisker_high for s in stats.values())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    width, height, margin, box_w = 120 * len(stats) + 80, 360, 50, 50

    def y(v: float) -> float:
        return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
             f'<text x="{margin - 5}" y="{y(lo):.2f}" font-size="10" text-anchor="end">{lo:g}</text>',
             f'<text x="{margin - 5}" y="{y(hi):.2f}" font-size="10" text-anchor="end">{hi:g}</text>']
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" font-size="14" text-anchor="middle">{_esc(title)}</text>')
    for i, (name, s) in enumerate(stats.items()):
        cx = margin + 60 + 120 * i
        x0, x1 = cx - box_w / 2, cx + box_w / 2
        parts.append(f'<g class="box" data-group="{_esc(name)}">')
        parts.append(f'<line class="whisker" x1="{cx}" y1="{y(s.whisker_low):.2f}" x2="{cx}" '
                     f'y2="{y(s.q1):.2f}" stroke="black"/>')
        parts.append(f'<line class="whisker" x1="{cx}" y1="{y(s.q3):.2f}" x2="{cx}" '
                     f'y2="{y(s.whisker_high):.2f}" stroke="black"/>')
        for v in (s.whisker_low, s.whisker_high):
            parts.append(f'<line class="cap" x1="{cx - 12}" y1="{y(v):.2f}" x2="{cx + 12}" y2="{y(v):.2f}" '
                         f'stroke="black" data-value="{v!r}"/>')
        parts.append(f'<rect class="iqr" x="{x0}" y="{y(s.q3):.2f}" width="{box_w}" '
                     f'height="{y(s.q1) - y(s.q3):.2f}" fill="#cfe2f3" stroke="black"/>')
        parts.append(f'<line class="median" x1="{x0}" y1="{y(s.median):.2f}" x2="{x1}" y2="{y(s.median):.2f}" '
                     f'stroke="#c00" stroke-width="2" data-value="{s.median!r}"/>')
        for o in s.outliers:
            parts.append(f'<circle class="outlier" cx="{cx}" cy="{y(o):.2f}" r="3" fill="none" stroke="black"/>')
        parts.append(f'<text x="{cx}" y="{height - margin + 18}" font-size="12" '
                     f'text-anchor="middle">{_esc(name)}</text>')
        parts.append("</g>")
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _polyline(points: np.ndarray, size: float, scale: float, css: str, fill: str = "none", **attrs) -> str:
    # map y grows upward, SVG y grows downward
    pts = " ".join(f"{x * scale:.2f},{(size - yv) * scale:.2f}" for x, yv in points)
    extra = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polyline class="{css}" points="{pts}" fill="{fill}" {extra}/>'


def road_svg(road, poses=None, geometry: GeometryConfig = GeometryConfig(), scale: float = 3.0) -> str:
    size = geometry.map_size
    line = road.centerline
    normals = np.column_stack((-np.sin(road.headings), np.cos(road.headings)))
    half = geometry.road_width / 2
    left, right = line + half * normals, line - half * normals
    outline = np.vstack((left, right[::-1], left[:1]))
    px = size * scale
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{px:.0f}" height="{px:.0f}" '
             f'viewBox="0 0 {px:.0f} {px:.0f}">',
             '<rect width="100%" height="100%" fill="#eef3e8"/>',
             _polyline(outline, size, scale, "road", fill="#bbb", stroke="#555", stroke_width=1),
             _polyline(line, size, scale, "centerline", stroke="white", stroke_width=1, stroke_dasharray="6,4")]
    if poses is not None and len(poses):
        traj = np.array([[p.x, p.y] for p in poses])
        parts.append(_polyline(traj, size, scale, "trajectory", stroke="#c00", stroke_width=1.5))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def replay(test, out_dir, sim: SimConfig = SimConfig(), geometry: GeometryConfig = GeometryConfig()) -> tuple[Path, Path]:
    """Simulate ``test`` and write ``trace.csv`` and ``road.svg``; nothing is written for an invalid road."""
    road, report = check_test(test, geometry)
    if not report.valid:
        raise InvalidRoad(report.violations)
    result = simulate(road, sim, geometry)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace, svg = out / "trace.csv", out / "road.svg"
    write_trace_csv(result, trace)
    svg.write_text(road_svg(road, result.pose_trace, geometry), encoding="utf-8")
    return trace, svg


# ---------------------------------------------------------------------------
# calibration

def calibrate(n: int = 400, seed: int = 0, sim: SimConfig = SimConfig(), geometry: GeometryConfig = GeometryConfig(),
              threshold: float = 0.95, d: int = 5) -> tuple[float, float]:
    """Failure rate and median fitness of ``n`` uniform random valid tests."""
    rng = np.random.default_rng(seed)
    sut = MockSUT(sim, geometry)
    fit = np.array([sut(draw_valid(lambda: uniform_random_test(d, rng), geometry)).fitness for _ in range(n)])
    return float(np.mean(fit > threshold)), float(np.median(fit))


def load_suite(path) -> TestSuite:
    return TestSuite.from_jsonl(path)
