"""Evaluation metrics: visible-airway precision/recall/F1 by generation and
tracking errors on correctly-labeled frames, plus frame-weighted aggregation
across sequences."""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import Pose, tracking_errors


@dataclass
class FrameRecord:
    """Per-frame evaluation inputs."""

    t: float
    true_visible: set[int]
    est_visible: set[int]
    true_pose: Pose
    est_pose: Pose | None
    bif_correct: bool
    true_generation: int

    def __post_init__(self) -> None:
        if self.bif_correct and self.est_pose is None:
            raise ValueError("bif_correct requires an estimated pose")


@dataclass
class GenerationScore:
    precision: float
    recall: float
    f1: float
    frame_count: int
    n_hit: int = 0
    n_true: int = 0
    n_est: int = 0


@dataclass
class SequenceResult:
    per_generation: dict[int, GenerationScore]
    mean_e_p: float | None
    mean_e_d: float | None
    mean_e_r: float | None
    n_tracking_frames: int
    frame_count: int
    loop_hz: float | None = None

    def overall_f1(self) -> float | None:
        hits = sum(g.n_hit for g in self.per_generation.values())
        n_true = sum(g.n_true for g in self.per_generation.values())
        n_est = sum(g.n_est for g in self.per_generation.values())
        return _prf(hits, n_true, n_est)[2]


def _prf(hits: int, n_true: int, n_est: int) -> tuple[float | None, float | None, float | None]:
    if n_true == 0 and n_est == 0:
        return None, None, None
    precision = hits / n_est if n_est > 0 else 0.0
    recall = hits / n_true if n_true > 0 else 0.0
    f1 = 0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def precision_recall(records: list[FrameRecord]) -> tuple[float | None, float | None, float | None]:
    """Micro-averaged precision, recall, F1 over the records.

    Pooled sums: P = sum|a ^ a_hat| / sum|a_hat|, R = sum|a ^ a_hat| / sum|a|;
    F1 = 0 when P + R = 0, and all three are None when both denominators are
    empty across the bin.
    """
    if not records:
        raise ValueError("need at least one record")
    hits = sum(len(r.true_visible & r.est_visible) for r in records)
    n_true = sum(len(r.true_visible) for r in records)
    n_est = sum(len(r.est_visible) for r in records)
    return _prf(hits, n_true, n_est)


def f1_by_generation(records: list[FrameRecord]) -> dict[int, GenerationScore]:
    """Per-generation micro scores, binned by the generation the frame's true
    position lies in. Only entered generations appear."""
    bins: dict[int, list[FrameRecord]] = {}
    for r in records:
        bins.setdefault(r.true_generation, []).append(r)
    out: dict[int, GenerationScore] = {}
    for gen in sorted(bins):
        rs = bins[gen]
        hits = sum(len(r.true_visible & r.est_visible) for r in rs)
        n_true = sum(len(r.true_visible) for r in rs)
        n_est = sum(len(r.est_visible) for r in rs)
        p, rec, f1 = _prf(hits, n_true, n_est)
        if p is None:
            continue
        out[gen] = GenerationScore(precision=p, recall=rec, f1=f1, frame_count=len(rs),
                                   n_hit=hits, n_true=n_true, n_est=n_est)
    return out


def tracking_summary(records: list[FrameRecord]) -> tuple[float | None, float | None, float | None, int]:
    """Mean e_p/e_d/e_r over frames with a correctly labeled bifurcation."""
    qual = [r for r in records if r.bif_correct and r.est_pose is not None]
    if not qual:
        return None, None, None, 0
    errs = [tracking_errors(r.true_pose, r.est_pose) for r in qual]
    n = len(errs)
    return (sum(e.e_p for e in errs) / n,
            sum(e.e_d for e in errs) / n,
            sum(e.e_r for e in errs) / n,
            n)


def sequence_result(records: list[FrameRecord], loop_hz: float | None = None) -> SequenceResult:
    e_p, e_d, e_r, n = tracking_summary(records)
    return SequenceResult(per_generation=f1_by_generation(records),
                          mean_e_p=e_p, mean_e_d=e_d, mean_e_r=e_r,
                          n_tracking_frames=n, frame_count=len(records),
                          loop_hz=loop_hz)


@dataclass
class MetricAggregate:
    mean: float
    min: float
    max: float
    total_weight: float


@dataclass
class AggregateResult:
    per_generation: dict[int, MetricAggregate] = field(default_factory=dict)  # F1
    e_p: MetricAggregate | None = None
    e_d: MetricAggregate | None = None
    e_r: MetricAggregate | None = None
    loop_hz: float | None = None
    n_sequences: int = 0
    total_frames: int = 0


def _weighted(values: list[float], weights: list[float]) -> MetricAggregate | None:
    pairs = [(v, w) for v, w in zip(values, weights) if v is not None and w > 0]
    if not pairs:
        return None
    total = sum(w for _, w in pairs)
    mean = sum(v * w for v, w in pairs) / total
    return MetricAggregate(mean=mean, min=min(v for v, _ in pairs),
                           max=max(v for v, _ in pairs), total_weight=total)


def aggregate(results: list[SequenceResult]) -> AggregateResult:
    """Frame-count-weighted means with per-group min/max retained.

    Generation bins are weighted by the bin's frame count in each sequence;
    tracking errors by each sequence's count of correctly-labeled frames.
    """
    if not results:
        raise ValueError("need at least one sequence result")
    agg = AggregateResult(n_sequences=len(results),
                          total_frames=sum(r.frame_count for r in results))
    gens = sorted({g for r in results for g in r.per_generation})
    for gen in gens:
        vals, weights = [], []
        for r in results:
            score = r.per_generation.get(gen)
            if score is not None:
                vals.append(score.f1)
                weights.append(score.frame_count)
        m = _weighted(vals, weights)
        if m is not None:
            agg.per_generation[gen] = m
    for name in ("e_p", "e_d", "e_r"):
        vals = [getattr(r, f"mean_{name}") for r in results]
        weights = [r.n_tracking_frames for r in results]
        setattr(agg, name, _weighted(vals, weights))
    rates = [r.loop_hz for r in results if r.loop_hz is not None]
    agg.loop_hz = sum(rates) / len(rates) if rates else None
    return agg
