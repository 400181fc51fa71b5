"""End-to-end estimation of the violation probability.

Each sample draws a Haar-random frame, builds the behavior under the
configured detection model and asks the linear program for a verdict.
Sample i uses the random stream spawned from (master seed, i), so results
are identical for any worker count; aggregation is plain counting.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from statistics import NormalDist

import numpy as np

from .localpolytope import Verdict, build_lp, check_local_model, n_strategies
from .quantum import (
    DetectionKind,
    DetectionModel,
    MeasurementFrame,
    PureState,
    Scenario,
    behavior_for_model,
    parse_state,
    sample_direction,
)

DEFAULT_TOL = 1e-9
_CHUNK = 256


def _sample_rng(seed, index: int) -> np.random.Generator:
    entropy = seed if isinstance(seed, (int, np.integer)) else list(seed)
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(index,)))


def derive_seed(seed, stream: int) -> int:
    """Deterministic 63-bit sub-seed for an indexed derived run."""
    ss = np.random.SeedSequence(
        seed if isinstance(seed, (int, np.integer)) else list(seed), spawn_key=(stream,)
    )
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True)
class RunConfig:
    """Full configuration of one estimation run."""

    state: str
    m: tuple[int, ...]
    model: DetectionKind
    etas: tuple[float, ...]
    n_samples: int
    seed: int
    tol: float = DEFAULT_TOL
    workers: int = 1
    confidence: float = 0.95
    sidedness: str = "one"

    def __post_init__(self):
        state = parse_state(self.state)
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        object.__setattr__(self, "etas", tuple(float(v) for v in self.etas))
        if len(self.m) != state.n_parties or len(self.etas) != state.n_parties:
            raise ValueError("settings and efficiencies must list one entry per party")
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        if any(not 0 <= e <= 1 for e in self.etas):
            raise ValueError(f"efficiencies must lie in [0, 1], got {self.etas}")
        if self.sidedness not in ("one", "two"):
            raise ValueError("sidedness must be 'one' or 'two'")
        # trip the variable cap early rather than n_samples times later
        n_strategies_check = Scenario(state.n_parties, self.m, self._d())
        n_strategies(n_strategies_check)

    def _d(self) -> int:
        return 3 if self.model is DetectionKind.THREE_OUTCOME else 2

    def resolved_state(self) -> PureState:
        return parse_state(self.state)


@dataclass(frozen=True)
class EstimateRecord:
    """Violation count with Wilson interval and the full run configuration."""

    state: str
    model: str
    n_parties: int
    m: tuple[int, ...]
    etas: tuple[float, ...]
    n: int
    k: int
    borderline: int
    p_hat: float
    wilson_low: float
    wilson_high: float
    confidence: float
    sidedness: str
    z: float
    seed: int
    tol: float

    def __post_init__(self):
        if not (0 <= self.wilson_low <= self.p_hat + 1e-12 and self.p_hat <= self.wilson_high + 1e-12):
            raise ValueError("Wilson interval must bracket the point estimate")


def wilson_z(confidence: float, sidedness: str = "one") -> float:
    """Normal critical value rounded to two decimals (classic table values).

    The two-decimal convention makes saturated runs reproduce the quoted
    270-event and 2700-event lower bounds exactly.
    """
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    q = confidence if sidedness == "one" else (1 + confidence) / 2
    return round(NormalDist().inv_cdf(q), 2)


def wilson_interval(
    k: int, n: int, confidence: float = 0.95, sidedness: str = "one", z: float | None = None
) -> tuple[float, float]:
    """Wilson score interval for k successes out of n trials.

    For a saturated one-sided run (k = n) the lower bound is n / (n + z^2).
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n with n >= 1")
    if sidedness not in ("one", "two"):
        raise ValueError("sidedness must be 'one' or 'two'")
    if z is None:
        z = wilson_z(confidence, sidedness)
    p = k / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    margin = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - margin), min(1.0, center + margin)


def _draw_frame(state: PureState, m: tuple[int, ...], rng: np.random.Generator) -> MeasurementFrame:
    return MeasurementFrame(
        tuple(tuple(sample_direction(rng) for _ in range(mi)) for mi in m)
    )


def _verdict(state, frame, model: DetectionModel, tol: float) -> Verdict:
    behavior = behavior_for_model(state, frame, model)
    return check_local_model(build_lp(behavior), tol).verdict


def _estimate_chunk(args) -> tuple[int, int]:
    config, lo, hi = args
    state = config.resolved_state()
    model = DetectionModel(config.model, config.etas)
    k = borderline = 0
    for i in range(lo, hi):
        frame = _draw_frame(state, config.m, _sample_rng(config.seed, i))
        verdict = _verdict(state, frame, model, config.tol)
        k += verdict is Verdict.NONLOCAL
        borderline += verdict is Verdict.BORDERLINE
    return k, borderline


def _map_chunks(worker, tasks, workers: int, progress: str | None = None):
    done = 0

    def tick():
        nonlocal done
        done += 1
        if progress and (done % 8 == 0 or done == len(tasks)):
            print(f"{progress}: {done}/{len(tasks)} chunks", file=sys.stderr)

    if workers <= 1 or len(tasks) <= 1:
        out = []
        for t in tasks:
            out.append(worker(t))
            tick()
        return out
    out = []
    with get_context("fork").Pool(workers) as pool:
        for part in pool.imap(worker, tasks):
            out.append(part)
            tick()
    return out


def _record(config: RunConfig, k: int, borderline: int) -> EstimateRecord:
    n = config.n_samples
    z = wilson_z(config.confidence, config.sidedness)
    low, high = wilson_interval(k, n, config.confidence, config.sidedness)
    return EstimateRecord(
        state=config.state,
        model=config.model.value,
        n_parties=len(config.m),
        m=config.m,
        etas=config.etas,
        n=n,
        k=k,
        borderline=borderline,
        p_hat=k / n,
        wilson_low=low,
        wilson_high=high,
        confidence=config.confidence,
        sidedness=config.sidedness,
        z=z,
        seed=config.seed if isinstance(config.seed, int) else tuple(config.seed),
        tol=config.tol,
    )


def estimate_pv(config: RunConfig, progress: bool = False) -> EstimateRecord:
    """Estimate the violation probability for one configuration.

    With ``progress`` set, chunk completion is reported to standard error.
    """
    n = config.n_samples
    bounds = list(range(0, n, _CHUNK)) + [n]
    tasks = [(config, lo, hi) for lo, hi in zip(bounds, bounds[1:])]
    label = f"estimate(state={config.state}, eta={config.etas})" if progress else None
    parts = _map_chunks(_estimate_chunk, tasks, config.workers, progress=label)
    k = sum(p[0] for p in parts)
    borderline = sum(p[1] for p in parts)
    return _record(config, k, borderline)


def _compare_chunk(args) -> tuple[int, int, int, int, int, int]:
    config, lo, hi = args
    state = config.resolved_state()
    three = DetectionModel(DetectionKind.THREE_OUTCOME, config.etas)
    binning = DetectionModel(DetectionKind.BINNING, config.etas)
    agree = k3 = kb = b3 = bb = bin_only = 0
    for i in range(lo, hi):
        frame = _draw_frame(state, config.m, _sample_rng(config.seed, i))
        v3 = _verdict(state, frame, three, config.tol)
        vb = _verdict(state, frame, binning, config.tol)
        agree += v3 is vb
        k3 += v3 is Verdict.NONLOCAL
        kb += vb is Verdict.NONLOCAL
        b3 += v3 is Verdict.BORDERLINE
        bb += vb is Verdict.BORDERLINE
        # binning is a local coarse-graining of the three-outcome table, so a
        # violation surviving the binning must already be present before it
        bin_only += vb is Verdict.NONLOCAL and v3 is not Verdict.NONLOCAL
    return agree, k3, kb, b3, bb, bin_only


@dataclass(frozen=True)
class ModelComparison:
    n: int
    agreements: int
    k_three_outcome: int
    k_binning: int
    borderline_three_outcome: int
    borderline_binning: int
    binning_only_violations: int


def compare_models(config: RunConfig) -> ModelComparison:
    """Run both detection models on identical frames, sample by sample."""
    n = config.n_samples
    bounds = list(range(0, n, _CHUNK)) + [n]
    tasks = [(config, lo, hi) for lo, hi in zip(bounds, bounds[1:])]
    parts = _map_chunks(_compare_chunk, tasks, config.workers)
    sums = [sum(p[i] for p in parts) for i in range(6)]
    return ModelComparison(n, *sums)


def sweep_eta(config: RunConfig, grid, progress: bool = False) -> list[EstimateRecord]:
    """One estimate per symmetric-efficiency grid point, independent seeds."""
    grid = [float(g) for g in grid]
    if not grid or any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be nonempty and ascending")
    n_parties = len(config.m)
    records = []
    for i, eta in enumerate(grid):
        sub = replace(
            config, etas=(eta,) * n_parties, seed=derive_seed(config.seed, i)
        )
        records.append(estimate_pv(sub, progress=progress))
        if progress:
            print(f"sweep: point {i + 1}/{len(grid)} (eta={eta:g}) done", file=sys.stderr)
    return records


def _nested_chunk(args) -> tuple[np.ndarray, np.ndarray, bool]:
    config, m_values, lo, hi = args
    state = config.resolved_state()
    model_cls = config.model
    k = np.zeros(len(m_values), dtype=np.int64)
    borderline = np.zeros(len(m_values), dtype=np.int64)
    dominance = True
    m_max = max(m_values)
    n_parties = state.n_parties
    for i in range(lo, hi):
        rng = _sample_rng(config.seed, i)
        full = [[sample_direction(rng) for _ in range(m_max)] for _ in range(n_parties)]
        prev_nonlocal = False
        for j, m in enumerate(m_values):
            frame = MeasurementFrame(tuple(tuple(p[:m]) for p in full))
            model = DetectionModel(model_cls, config.etas)
            verdict = _verdict(state, frame, model, config.tol)
            k[j] += verdict is Verdict.NONLOCAL
            borderline[j] += verdict is Verdict.BORDERLINE
            if prev_nonlocal and verdict is Verdict.LOCAL:
                dominance = False
            prev_nonlocal = verdict is Verdict.NONLOCAL
    return k, borderline, dominance


@dataclass(frozen=True)
class NestedSweepResult:
    m_values: tuple[int, ...]
    records: tuple[EstimateRecord, ...]
    dominance_holds: bool


def nested_sweep_m(config: RunConfig, m_values) -> NestedSweepResult:
    """Estimates over nested frames: the m-setting frame is a prefix of the
    (m+1)-setting frame for every sample, so a violation must persist as
    settings are added."""
    m_values = tuple(sorted(int(v) for v in m_values))
    n_parties = len(config.m)
    n = config.n_samples
    bounds = list(range(0, n, _CHUNK)) + [n]
    tasks = [(config, m_values, lo, hi) for lo, hi in zip(bounds, bounds[1:])]
    parts = _map_chunks(_nested_chunk, tasks, config.workers)
    k = sum(p[0] for p in parts)
    borderline = sum(p[1] for p in parts)
    dominance = all(p[2] for p in parts)
    records = []
    for j, m in enumerate(m_values):
        sub = replace(config, m=(m,) * n_parties)
        records.append(_record(sub, int(k[j]), int(borderline[j])))
    return NestedSweepResult(m_values, tuple(records), dominance)


def _critical_chunk(args) -> list[tuple[int, float]]:
    config, bisect_tol, lo, hi = args
    state = config.resolved_state()
    n_parties = state.n_parties
    out = []
    for i in range(lo, hi):
        frame = _draw_frame(state, config.m, _sample_rng(config.seed, i))

        def nonlocal_at(eta: float) -> bool:
            model = DetectionModel(config.model, (eta,) * n_parties)
            return _verdict(state, frame, model, config.tol) is Verdict.NONLOCAL

        if not nonlocal_at(1.0):
            continue
        lo_eta, hi_eta = 0.0, 1.0
        while hi_eta - lo_eta > bisect_tol:
            mid = 0.5 * (lo_eta + hi_eta)
            if nonlocal_at(mid):
                hi_eta = mid
            else:
                lo_eta = mid
        out.append((i, hi_eta))
    return out


@dataclass(frozen=True)
class CriticalEtaEstimate:
    """Sampled upper bound on the critical symmetric efficiency.

    ``eta_upper`` is the smallest per-frame threshold found; it can only
    overestimate the true critical efficiency and tightens as more frames
    are drawn.
    """

    eta_upper: float
    n_frames: int
    frames_drawn: int
    bisect_tol: float
    thresholds: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def quantiles(self) -> dict:
        return {
            "q01": float(np.quantile(self.thresholds, 0.01)),
            "q10": float(np.quantile(self.thresholds, 0.10)),
            "median": float(np.quantile(self.thresholds, 0.50)),
        }


def critical_eta_estimate(
    config: RunConfig, n_frames: int, bisect_tol: float = 1e-3, max_draws: int | None = None
) -> CriticalEtaEstimate:
    """Bisect the symmetric-efficiency threshold of violating Haar frames.

    Frames that violate at eta = 1 are collected in draw order until
    ``n_frames`` of them have been bisected; the minimum threshold is an
    upper bound on the scenario's critical efficiency.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if max_draws is None:
        max_draws = max(200 * n_frames, 4096)
    thresholds: list[tuple[int, float]] = []
    drawn = 0
    chunk = max(_CHUNK, n_frames // 8)
    while len(thresholds) < n_frames:
        if drawn >= max_draws:
            if not thresholds:
                raise ValueError("no violating frame found at eta = 1")
            break
        lo_draw, hi_draw = drawn, min(drawn + chunk * 8, max_draws)
        bounds = list(range(lo_draw, hi_draw, chunk)) + [hi_draw]
        tasks = [(config, bisect_tol, a, b) for a, b in zip(bounds, bounds[1:])]
        for part in _map_chunks(_critical_chunk, tasks, config.workers):
            thresholds.extend(part)
        drawn = hi_draw
    thresholds.sort()
    kept = np.array([t for _, t in thresholds[:n_frames]])
    return CriticalEtaEstimate(
        eta_upper=float(kept.min()),
        n_frames=len(kept),
        frames_drawn=drawn,
        bisect_tol=bisect_tol,
        thresholds=kept,
        seed=config.seed,
    )


def relative_growth(p_m1: float, p_m2: float) -> float:
    """Relative growth in percent when raising the setting count."""
    if p_m1 <= 0:
        raise ValueError("baseline probability must be positive")
    return 100.0 * (p_m2 - p_m1) / p_m1
