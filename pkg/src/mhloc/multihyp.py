"""Hypothesis lifecycle (start / spawn / prune / merge / best) and the
phase scheduler that replays a run log through it.

Each hypothesis is an independent particle population. Prediction, correction,
reseed, and map matching run at their own configured frequencies against the
log clock, and a best-estimate record is emitted after every correction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import TimedTransformBuffer, Transform2D, angle_diff
from .gridmap import GridPyramid, OccupancyGrid
from .matcher import MatchCandidate, MatcherParams, cascade_match
from .particle_filter import (
    LaserScan,
    MotionNoiseParams,
    ParticleSet,
    SensorModelParams,
)
from .runlog import EstimateRecord, WarningRecord, split_by_kind


@dataclass
class MultiHypParams:
    """Lifecycle thresholds and phase frequencies."""

    max_hypotheses: int = 5
    destroy_below: float = 0.25
    spawn_above: float = 0.5
    merge_dist: float = 0.5
    merge_yaw: float = 0.3
    quality_alpha: float = 0.5  # exponential smoothing; 1.0 disables
    prune_grace: int = 3  # corrections a newborn gets before prune applies
    predict_hz: float = 100.0
    correct_hz: float = 10.0
    reseed_hz: float = 0.3
    match_period_s: float = 5.0
    stall_timeout_s: float = 2.0

    def __post_init__(self):
        if self.max_hypotheses < 1:
            raise ValueError("max_hypotheses must be >= 1")
        for name in ("predict_hz", "correct_hz", "reseed_hz", "match_period_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.quality_alpha <= 1.0:
            raise ValueError("quality_alpha must be in (0, 1]")


@dataclass
class LocalizerConfig:
    """Everything one localization run needs besides the map and the log."""

    particles_min: int = 100
    particles_max: int = 400
    init_std: tuple[float, float, float] = (0.1, 0.1, 0.1)
    motion_noise: MotionNoiseParams = field(default_factory=MotionNoiseParams)
    sensor: SensorModelParams = field(default_factory=SensorModelParams)
    base_to_laser: Transform2D = field(default_factory=Transform2D.identity)
    winner_pct: float = 0.1
    loser_pct: float = 0.3
    reseed_jitter: tuple[float, float, float] = (0.03, 0.03, 0.03)
    grow_above: float = 0.3
    shrink_below: float = 0.1
    matcher: MatcherParams = field(default_factory=MatcherParams)
    multihyp: MultiHypParams = field(default_factory=MultiHypParams)
    seed: int = 0


@dataclass
class Hypothesis:
    id: int
    set: ParticleSet
    quality: float = 0.0
    created_at: float = 0.0
    corrected: bool = False
    corrections: int = 0


class HypothesisSet:
    """The collection of live hypotheses, capped at max_hypotheses."""

    def __init__(self, params: MultiHypParams):
        self.params = params
        self.hypotheses: list[Hypothesis] = []
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.hypotheses)

    def add(self, pset: ParticleSet, created_at: float) -> Hypothesis:
        if len(self.hypotheses) >= self.params.max_hypotheses:
            raise ValueError("hypothesis capacity exhausted")
        hyp = Hypothesis(self._next_id, pset, 0.0, created_at)
        self._next_id += 1
        self.hypotheses.append(hyp)
        return hyp

    def best(self) -> Hypothesis | None:
        """Highest-quality hypothesis; ties favor the oldest (lowest id)."""
        if not self.hypotheses:
            return None
        return min(self.hypotheses, key=lambda h: (-h.quality, h.id))

    def prune(self) -> None:
        """Drop hypotheses below the quality floor, never the last survivor.

        Newborns are exempt until they have seen prune_grace corrections, so
        the smoothed quality has a chance to warm up from its birth value.
        """
        if not self.hypotheses:
            return
        survivors = [
            h for h in self.hypotheses
            if h.quality >= self.params.destroy_below
            or h.corrections < self.params.prune_grace
        ]
        if not survivors:
            survivors = [min(self.hypotheses, key=lambda h: (-h.quality, h.id))]
        self.hypotheses = survivors

    def _close(self, a: Transform2D, b: Transform2D) -> bool:
        return (
            math.hypot(a.x - b.x, a.y - b.y) < self.params.merge_dist
            and abs(angle_diff(a.yaw, b.yaw)) < self.params.merge_yaw
        )

    def merge(self) -> None:
        """Fuse hypotheses whose estimates coincide, repeating to a fixpoint.

        The merged population keeps the highest-weight particles of the two,
        truncated to the larger input's size, under the lower (older) id.
        """
        while True:
            means = [h.set.estimate().mean for h in self.hypotheses]
            pair = None
            for i in range(len(self.hypotheses)):
                for j in range(i + 1, len(self.hypotheses)):
                    if self._close(means[i], means[j]):
                        pair = (i, j)
                        break
                if pair:
                    break
            if pair is None:
                return
            i, j = pair
            a, b = self.hypotheses[i], self.hypotheses[j]
            keep_n = max(len(a.set), len(b.set))
            poses = np.concatenate([a.set.poses, b.set.poses])
            weights = np.concatenate([a.set.weights, b.set.weights])
            hits = np.concatenate([a.set.hits, b.set.hits])
            order = np.argsort(-weights, kind="stable")[:keep_n]
            merged = ParticleSet(poses[order], weights[order], hits[order], a.set.bounds)
            merged.weights /= merged.weights.sum()
            merged.last_beams_used = a.set.last_beams_used or b.set.last_beams_used
            a.set = merged
            a.quality = max(a.quality, b.quality)
            a.corrected = a.corrected or b.corrected
            a.corrections = max(a.corrections, b.corrections)
            del self.hypotheses[j]

    def spawn_from_candidates(self, candidates: list[MatchCandidate], config: LocalizerConfig,
                              rng: np.random.Generator, created_at: float) -> int:
        """Start new hypotheses at high-scoring candidates away from existing ones.

        Candidates must already be sorted by score descending. Returns the
        number of hypotheses spawned.
        """
        spawned = 0
        for cand in candidates:
            if cand.score < self.params.spawn_above:
                break
            if len(self.hypotheses) >= self.params.max_hypotheses:
                break
            if any(self._close(h.set.estimate().mean, cand.pose) for h in self.hypotheses):
                continue
            pset = ParticleSet.init_gaussian(
                cand.pose, config.init_std, config.particles_max, rng,
                (config.particles_min, config.particles_max),
            )
            self.add(pset, created_at)
            spawned += 1
        return spawned


def start(initial_pose: Transform2D | None, config: LocalizerConfig,
          rng: np.random.Generator, t: float = 0.0) -> HypothesisSet:
    """Startup: one hypothesis around a known pose, or empty when unknown."""
    hs = HypothesisSet(config.multihyp)
    if initial_pose is not None:
        pset = ParticleSet.init_gaussian(
            initial_pose, config.init_std, config.particles_max, rng,
            (config.particles_min, config.particles_max),
        )
        hs.add(pset, t)
    return hs


def on_match_results(hs: HypothesisSet, candidates: list[MatchCandidate],
                     config: LocalizerConfig, rng: np.random.Generator,
                     created_at: float = 0.0) -> int:
    return hs.spawn_from_candidates(candidates, config, rng, created_at)


@dataclass
class RunResult:
    estimates: list[EstimateRecord]
    warnings: list[WarningRecord]
    counts: dict[str, int]


def _streams(seed: int) -> dict[str, np.random.Generator]:
    """Named RNG streams split from one seed, one per noise consumer."""
    ids = {"motion": 0, "reseed": 1, "init": 2, "sensor": 3}
    return {
        name: np.random.default_rng(np.random.SeedSequence([seed, sid]))
        for name, sid in ids.items()
    }


def run_replay(records: list, grid: OccupancyGrid, pyramid: GridPyramid,
               config: LocalizerConfig, initial_pose: Transform2D | None = None,
               single_hypothesis: bool = False) -> RunResult:
    """Replay a log through the full pipeline on the log clock.

    Prediction, correction (+ prune / merge), reseed (+ adapt), and map
    matching fire at their configured rates; one estimate record is emitted
    per correction from the best hypothesis. Fully deterministic for a fixed
    seed. single_hypothesis caps the set at one population and thereby
    disables extra spawns (the plain-AMCL baseline).
    """
    params = config.multihyp
    if single_hypothesis:
        params = MultiHypParams(**{**params.__dict__, "max_hypotheses": 1})
        config = LocalizerConfig(**{**config.__dict__, "multihyp": params})

    by_kind = split_by_kind(records)
    odom_records = by_kind.get("odom", [])
    # A log without scans is legal: corrections never fire and the estimate
    # stream stays empty. A log without odometry cannot be replayed at all.
    scan_records = by_kind.get("scan", [])
    if not odom_records:
        raise ValueError("log has no odometry records")

    buffer = TimedTransformBuffer()
    for rec in odom_records:
        buffer.insert(rec.t, rec.transform())
    span_lo, span_hi = buffer.span()

    scans = [(rec.t, rec.to_scan()) for rec in scan_records]

    times = sorted(rec.t for rec in records)
    t0, t_end = times[0], times[-1]

    rng = _streams(config.seed)
    hs = start(initial_pose, config, rng["init"], t0)

    warnings = []
    timeout = params.stall_timeout_s
    for prev_t, next_t in zip(times, times[1:]):
        if next_t - prev_t > timeout:
            warnings.append(WarningRecord(
                next_t, f"input stall: {next_t - prev_t:.3f}s gap ending at t={next_t:.3f}"
            ))

    periods = {
        "predict": 1.0 / params.predict_hz,
        "correct": 1.0 / params.correct_hz,
        "reseed": 1.0 / params.reseed_hz,
        "match": params.match_period_s,
    }
    next_tick = {phase: t0 + dt for phase, dt in periods.items()}
    counts = {phase: 0 for phase in periods}
    order = ("predict", "correct", "reseed", "match")

    estimates: list[EstimateRecord] = []
    scan_idx = -1  # newest scan with stamp <= now
    last_predict_t = t0

    def current_scan(t: float) -> LaserScan | None:
        nonlocal scan_idx
        while scan_idx + 1 < len(scans) and scans[scan_idx + 1][0] <= t + 1e-12:
            scan_idx += 1
        return scans[scan_idx][1] if scan_idx >= 0 else None

    while True:
        t = min(next_tick.values())
        if t > t_end + 1e-9:
            break
        due = [p for p in order if next_tick[p] <= t + 1e-12]
        for phase in due:
            next_tick[phase] += periods[phase]
            if phase == "predict":
                counts["predict"] += 1
                q0 = min(max(last_predict_t, span_lo), span_hi)
                q1 = min(max(t, span_lo), span_hi)
                last_predict_t = t
                if q1 > q0 and hs.hypotheses:
                    u = buffer.delta(q0, q1)
                    for hyp in hs.hypotheses:
                        hyp.set.predict(u, config.motion_noise, rng["motion"])
                        hyp.set.last_prediction_time = t
            elif phase == "correct":
                scan = current_scan(t)
                if scan is None:
                    continue
                counts["correct"] += 1
                started = time.perf_counter()
                for hyp in hs.hypotheses:
                    hyp.set.correct(scan, grid, config.base_to_laser, config.sensor)
                    raw = hyp.set.quality()
                    alpha = params.quality_alpha
                    # Smoothing starts from the birth quality of 0, so a
                    # newcomer must sustain good corrections before it can
                    # overtake an established hypothesis.
                    hyp.quality = alpha * raw + (1 - alpha) * hyp.quality
                    hyp.corrected = True
                    hyp.corrections += 1
                hs.prune()
                hs.merge()
                best = hs.best()
                cpu = time.perf_counter() - started
                if best is not None:
                    est = best.set.estimate()
                    estimates.append(EstimateRecord(
                        t, est.mean.x, est.mean.y, est.mean.yaw,
                        [float(v) for v in est.covariance.reshape(-1)],
                        best.quality, len(hs), best.id, cpu,
                    ))
            elif phase == "reseed":
                counts["reseed"] += 1
                for hyp in hs.hypotheses:
                    hyp.set.reseed(config.winner_pct, config.loser_pct,
                                   config.reseed_jitter, rng["reseed"])
                    hyp.set.adapt_size(hyp.set.estimate(), config.grow_above,
                                       config.shrink_below)
            elif phase == "match":
                scan = current_scan(t)
                if scan is None:
                    continue
                counts["match"] += 1
                candidates = cascade_match(pyramid, scan, config.base_to_laser,
                                           config.matcher, config.sensor)
                hs.spawn_from_candidates(candidates, config, rng["init"], t)

    return RunResult(estimates, warnings, counts)
