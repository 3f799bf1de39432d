"""Timing harness: strategy x depth x feature-size x batch-size sweeps.

The protocol per trial and configuration: construct a fresh seeded random
tree and a fresh leaf-uniform dataset, build every requested strategy,
assert that all of them agree with the reference traversal on a
1,000-instance prefix (the correctness gate; timings are never reported
for a strategy that fails it), then run one optional untimed warmup pass
and one timed full pass over all instances on the monotonic clock.  The
timed region is a single whole-pass clock-read pair with preallocated
output buffers; per-instance times are elapsed/n.  Means and 95%
confidence intervals (Student's t over trial means) are computed across
trials.

Scores include the weighted ensemble accumulation, and the generated
strategy is measured through the same indirect-call interface as every
other strategy; both facts are recorded in the report metadata.

CSV layout (also parsed back by :func:`parse_csv`)::

    strategy,depth,features,batch,trial,elapsed_ns,instances,ns_per_instance

with one row per trial, aggregate rows using ``trial=mean`` and
``trial=ci95``, unavailable strategies marked with ``trial=unavailable``,
and environment metadata in leading ``#`` comment lines.
"""

from __future__ import annotations

import dataclasses
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy import stats

from .codegen import CompilerNotFoundError, build_generated, find_compiler, OPT_FLAGS
from .data import Dataset
from .evaluators import (
    ALL_STRATEGIES,
    StrategyKind,
    build,
    predict_ensemble_traced,
    reference_batch,
)
from .model import MAX_DEPTH, Ensemble, tree_stats
from .synth import GenConfig, gen_leaf_uniform_vectors, gen_tree

CSV_HEADER = "strategy,depth,features,batch,trial,elapsed_ns,instances,ns_per_instance"

_PREDICATED_KINDS = (StrategyKind.PREDICATED, StrategyKind.VPREDICATED)


class TimerResolutionError(RuntimeError):
    """Elapsed time too close to clock granularity to be meaningful."""


class CorrectnessGateError(RuntimeError):
    """A strategy disagreed with the reference traversal before timing."""


class BenchCsvError(Exception):
    """Malformed benchmark CSV document."""


@dataclass(frozen=True)
class BenchConfig:
    """Sweep shape.  Defaults are the standard experimental grid."""

    strategies: tuple = ALL_STRATEGIES
    depths: tuple = (3, 5, 7, 9, 11)
    feature_sizes: tuple = (32, 128, 512)
    batch_sizes: tuple = (1, 8, 16, 32, 64)
    instances: int = 524288
    trials: int = 5
    seed: int = 0
    warmup: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strategies",
                           tuple(StrategyKind(s) for s in self.strategies))
        if self.instances < 1:
            raise ValueError("instances must be >= 1")
        if self.trials < 2:
            raise ValueError("trials must be >= 2 (confidence intervals need variance)")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        if any(v < 1 for v in self.batch_sizes):
            raise ValueError("batch sizes must be >= 1")
        if any(k in self.strategies for k in _PREDICATED_KINDS):
            too_deep = [d for d in self.depths if d > MAX_DEPTH]
            if too_deep:
                raise ValueError(
                    f"depths {too_deep} exceed MAX_DEPTH={MAX_DEPTH} for "
                    "predicated strategies"
                )


@dataclass
class BenchRow:
    """One (strategy, depth, features, batch) cell with its trial timings."""

    strategy: str
    depth: int
    features: int
    batch: int | None
    instances: int
    trial_elapsed_ns: list = field(default_factory=list)
    available: bool = True
    note: str = ""

    @property
    def ns_per_instance(self) -> list:
        return [e / self.instances for e in self.trial_elapsed_ns]

    @property
    def mean_ns(self) -> float:
        per = self.ns_per_instance
        return sum(per) / len(per)

    @property
    def ci95_ns(self) -> float:
        """Half-width of the 95% CI over trial means (Student's t, k-1 dof)."""
        per = self.ns_per_instance
        k = len(per)
        if k < 2:
            return 0.0
        sd = float(np.std(per, ddof=1))
        return float(stats.t.ppf(0.975, k - 1)) * sd / math.sqrt(k)

    def key(self):
        return (self.strategy, self.depth, self.features, self.batch)


@dataclass
class BenchReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def row(self, strategy, depth: int, features: int,
            batch: int | None = None) -> BenchRow:
        strategy = str(StrategyKind(strategy))
        for row in self.rows:
            if row.key() == (strategy, depth, features, batch):
                return row
        raise KeyError((strategy, depth, features, batch))


@dataclass(frozen=True)
class CoverageReport:
    """Fraction of the feature space examined per prediction."""

    mean_fraction: float
    variance: float
    num_instances: int


@dataclass(frozen=True)
class TuneResult:
    """Batch-size sweep outcome: the full curve plus the winner per cell."""

    report: BenchReport
    best: dict  # (depth, features) -> best batch size


# ---------------------------------------------------------------------------
# Environment and timing plumbing
# ---------------------------------------------------------------------------

def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", "r", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or "unknown"


_TIMER_RESOLUTION_NS = max(
    1, int(time.get_clock_info("perf_counter").resolution * 1e9))


def collect_environment() -> dict:
    compiler = find_compiler()
    return {
        "cpu": _cpu_model(),
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "compiler": compiler or "unavailable",
        "compiler_flags": " ".join(OPT_FLAGS),
        "timer_resolution_ns": str(_TIMER_RESOLUTION_NS),
        "date": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "notes": ("timings include weighted ensemble accumulation; generated "
                  "strategy measured through the same indirect-call interface "
                  "as all strategies"),
    }


def _timed_pass(evaluator, matrix, out, warmup: bool) -> int:
    """One whole-pass timing on the monotonic clock; returns elapsed ns."""
    if warmup:
        evaluator._predict_into(matrix, out)
    t0 = time.perf_counter_ns()
    evaluator._predict_into(matrix, out)
    elapsed = time.perf_counter_ns() - t0
    if elapsed < 1000 * _TIMER_RESOLUTION_NS:
        raise TimerResolutionError(
            f"elapsed {elapsed} ns is under 1000x the clock granularity "
            f"({_TIMER_RESOLUTION_NS} ns); increase the instance count"
        )
    return elapsed


def _correctness_gate(ensemble: Ensemble, evaluators, matrix) -> None:
    """Every strategy must match reference traversal on a prefix, exactly."""
    prefix = matrix[: min(1000, matrix.shape[0])]
    expected = reference_batch(ensemble, prefix)
    for name, evaluator in evaluators:
        got = evaluator.predict_batch(prefix)
        if not np.array_equal(got, expected):
            bad = int(np.nonzero(got != expected)[0][0])
            raise CorrectnessGateError(
                f"strategy {name} disagrees with reference traversal at "
                f"prefix row {bad}: {got[bad]!r} != {expected[bad]!r}"
            )


def _build_cell_evaluators(ensemble: Ensemble, cfg: BenchConfig, mark_row):
    """Build (key, evaluator) pairs for one configuration cell.

    ``mark_row(strategy, batch, note)`` is called instead of raising when
    the generated strategy has no compiler; the sweep carries on.
    """
    evaluators = []
    for kind in cfg.strategies:
        if kind is StrategyKind.VPREDICATED:
            for v in cfg.batch_sizes:
                evaluators.append(((kind, v), build(ensemble, kind, v)))
        elif kind is StrategyKind.GENERATED:
            try:
                evaluators.append(((kind, None), build_generated(ensemble)))
            except CompilerNotFoundError as exc:
                mark_row(kind, None, str(exc))
        else:
            evaluators.append(((kind, None), build(ensemble, kind)))
    return evaluators


def _cell_seed(seed: int, trial: int, depth: int, features: int) -> int:
    return int(np.random.SeedSequence(
        [seed, 3, trial, depth, features]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def run_sweep(cfg: BenchConfig, progress=None) -> BenchReport:
    """Run the full synthetic sweep defined by ``cfg``.

    Each (trial, depth, features) cell gets a freshly seeded tree and
    dataset.  ``progress``, when given, receives one line per timed cell.
    """
    rows: dict = {}

    def row_for(kind: StrategyKind, depth: int, features: int,
                batch: int | None) -> BenchRow:
        key = (str(kind), depth, features, batch)
        if key not in rows:
            rows[key] = BenchRow(str(kind), depth, features, batch,
                                 cfg.instances)
        return rows[key]

    # Deterministic row order regardless of trial interleaving.
    for depth in cfg.depths:
        for features in cfg.feature_sizes:
            for kind in cfg.strategies:
                for batch in (cfg.batch_sizes
                              if kind is StrategyKind.VPREDICATED else (None,)):
                    row_for(kind, depth, features, batch)

    for trial in range(cfg.trials):
        for depth in cfg.depths:
            for features in cfg.feature_sizes:
                seed = _cell_seed(cfg.seed, trial, depth, features)
                gen = GenConfig(depth=depth, num_features=features,
                                num_vectors=cfg.instances, seed=seed)
                tree = gen_tree(gen)
                ensemble = Ensemble(features, [(tree, 1.0)])
                data = gen_leaf_uniform_vectors(tree, gen)

                def mark(kind, batch, note, depth=depth, features=features):
                    row = row_for(kind, depth, features, batch)
                    row.available = False
                    row.note = note

                evaluators = _build_cell_evaluators(ensemble, cfg, mark)
                matrix = data.matrix
                _correctness_gate(ensemble, evaluators, matrix)
                out = np.empty(matrix.shape[0], dtype=np.float64)
                for (kind, batch), evaluator in evaluators:
                    elapsed = _timed_pass(evaluator, matrix, out, cfg.warmup)
                    row_for(kind, depth, features, batch) \
                        .trial_elapsed_ns.append(elapsed)
                    if progress is not None:
                        progress(
                            f"trial {trial} d={depth} f={features} "
                            f"{kind}{f' v={batch}' if batch else ''}: "
                            f"{elapsed / cfg.instances:.1f} ns/instance"
                        )
    return BenchReport(list(rows.values()), collect_environment())


def run_fixed(ensemble: Ensemble, data: Dataset, strategies=ALL_STRATEGIES,
              batch_sizes=(1, 8, 16, 32, 64), trials: int = 5,
              warmup: bool = True, progress=None) -> BenchReport:
    """Benchmark a fixed model on a fixed dataset (no regeneration).

    The depth/features columns report the model's max depth and feature
    count.  The same correctness gate and timing protocol as
    :func:`run_sweep` apply; trials repeat timing on identical inputs.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    strategies = tuple(StrategyKind(s) for s in strategies)
    stats_ = tree_stats(ensemble)
    depth = stats_.max_depth
    features = ensemble.num_features
    cfg = BenchConfig(strategies=strategies, depths=(depth,),
                      feature_sizes=(features,), batch_sizes=tuple(batch_sizes),
                      instances=max(1, data.count), trials=trials, warmup=warmup)

    rows: dict = {}

    def row_for(kind, batch):
        key = (str(kind), depth, features, batch)
        if key not in rows:
            rows[key] = BenchRow(str(kind), depth, features, batch, data.count)
        return rows[key]

    for kind in strategies:
        for batch in (cfg.batch_sizes
                      if kind is StrategyKind.VPREDICATED else (None,)):
            row_for(kind, batch)

    def mark(kind, batch, note):
        row = row_for(kind, batch)
        row.available = False
        row.note = note

    evaluators = _build_cell_evaluators(ensemble, cfg, mark)
    matrix = data.matrix
    _correctness_gate(ensemble, evaluators, matrix)
    out = np.empty(matrix.shape[0], dtype=np.float64)
    for trial in range(trials):
        for (kind, batch), evaluator in evaluators:
            elapsed = _timed_pass(evaluator, matrix, out, warmup)
            row_for(kind, batch).trial_elapsed_ns.append(elapsed)
            if progress is not None:
                progress(f"trial {trial} {kind}"
                         f"{f' v={batch}' if batch else ''}: "
                         f"{elapsed / data.count:.1f} ns/instance")
    return BenchReport(list(rows.values()), collect_environment())


def _pick_best(report: BenchReport, cells, batch_sizes) -> dict:
    best = {}
    for depth, features in cells:
        candidates = []
        for v in batch_sizes:
            row = report.row(StrategyKind.VPREDICATED, depth, features, v)
            if row.available and row.trial_elapsed_ns:
                candidates.append((row.mean_ns, v))
        if candidates:
            # Ties break toward the smaller batch size.
            best[(depth, features)] = min(candidates)[1]
    return best


def tune_v(cfg: BenchConfig, progress=None) -> TuneResult:
    """Sweep batch sizes for the vectorized strategy; emit curve and winners."""
    if StrategyKind.VPREDICATED not in cfg.strategies:
        raise ValueError("tune_v requires the vpredicated strategy")
    sweep_cfg = dataclasses.replace(cfg, strategies=(StrategyKind.VPREDICATED,))
    report = run_sweep(sweep_cfg, progress=progress)
    cells = [(d, f) for d in cfg.depths for f in cfg.feature_sizes]
    return TuneResult(report, _pick_best(report, cells, cfg.batch_sizes))


def tune_fixed(ensemble: Ensemble, data: Dataset,
               batch_sizes=(1, 8, 16, 32, 64), trials: int = 5,
               warmup: bool = True, progress=None) -> TuneResult:
    """Batch-size tuning for a fixed model and dataset."""
    report = run_fixed(ensemble, data, strategies=(StrategyKind.VPREDICATED,),
                       batch_sizes=batch_sizes, trials=trials, warmup=warmup,
                       progress=progress)
    stats_ = tree_stats(ensemble)
    cells = [(stats_.max_depth, ensemble.num_features)]
    return TuneResult(report, _pick_best(report, cells, batch_sizes))


# ---------------------------------------------------------------------------
# Feature coverage
# ---------------------------------------------------------------------------

def measure_feature_coverage(ensemble: Ensemble, data: Dataset) -> CoverageReport:
    """Mean fraction of features examined while scoring each instance.

    Uses the traced traversal, so only real splits count (a complete-table
    layout's dummy nodes never exist in the logical trees being traced).
    """
    f = ensemble.num_features
    matrix = data.matrix
    n = matrix.shape[0]
    if n == 0:
        return CoverageReport(0.0, 0.0, 0)
    fractions = np.empty(n, dtype=np.float64)
    for i in range(n):
        traced = predict_ensemble_traced(ensemble, matrix[i])
        fractions[i] = len(traced.visited_features) / f
    return CoverageReport(float(fractions.mean()), float(fractions.var()), n)


# ---------------------------------------------------------------------------
# CSV export / import
# ---------------------------------------------------------------------------

def export_csv(report: BenchReport) -> str:
    """Render a report as CSV with metadata comments and aggregate rows."""
    lines = [f"# {key}: {value}" for key, value in report.metadata.items()]
    lines.append(CSV_HEADER)
    for row in report.rows:
        batch = "" if row.batch is None else str(row.batch)
        prefix = f"{row.strategy},{row.depth},{row.features},{batch}"
        if not row.available:
            lines.append(f"{prefix},unavailable,,{row.instances},")
            continue
        for t, elapsed in enumerate(row.trial_elapsed_ns):
            lines.append(f"{prefix},{t},{elapsed},{row.instances},"
                         f"{elapsed / row.instances:.6f}")
        if row.trial_elapsed_ns:
            lines.append(f"{prefix},mean,,{row.instances},{row.mean_ns:.6f}")
            lines.append(f"{prefix},ci95,,{row.instances},{row.ci95_ns:.6f}")
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> BenchReport:
    """Parse :func:`export_csv` output back into a report.

    Aggregate rows are consistency-checked against the re-derived values
    rather than stored, so parse(export(r)) reproduces r's aggregates.
    """
    metadata: dict = {}
    rows: dict = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ": " in body:
                key, value = body.split(": ", 1)
                metadata[key] = value
            continue
        if not header_seen:
            if line != CSV_HEADER:
                raise BenchCsvError(f"line {lineno}: unexpected header {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise BenchCsvError(f"line {lineno}: expected 8 fields, got {len(parts)}")
        strategy, depth_s, features_s, batch_s, trial_s, elapsed_s, n_s, per_s = parts
        try:
            depth = int(depth_s)
            features = int(features_s)
            batch = None if batch_s == "" else int(batch_s)
            instances = int(n_s)
        except ValueError as exc:
            raise BenchCsvError(f"line {lineno}: {exc}") from exc
        key = (strategy, depth, features, batch)
        row = rows.get(key)
        if row is None:
            row = rows[key] = BenchRow(strategy, depth, features, batch, instances)
        if trial_s == "unavailable":
            row.available = False
        elif trial_s in ("mean", "ci95"):
            expected = row.mean_ns if trial_s == "mean" else row.ci95_ns
            if per_s and abs(float(per_s) - expected) > 1e-6 + 1e-9 * abs(expected):
                raise BenchCsvError(
                    f"line {lineno}: {trial_s} {per_s} inconsistent with trial "
                    f"rows ({expected:.6f})"
                )
        else:
            try:
                trial = int(trial_s)
                elapsed = int(elapsed_s)
            except ValueError as exc:
                raise BenchCsvError(f"line {lineno}: {exc}") from exc
            if trial != len(row.trial_elapsed_ns):
                raise BenchCsvError(
                    f"line {lineno}: trial {trial} out of order for {key}")
            row.trial_elapsed_ns.append(elapsed)
    if not header_seen:
        raise BenchCsvError("missing CSV header")
    return BenchReport(list(rows.values()), metadata)
