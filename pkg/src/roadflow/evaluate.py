"""Masking cross-validation and the error metrics it reports.

Stations are partitioned into folds; each fold's stations are removed, the
solver repropagates from the remaining observations, and the imputed values
at the masked edges are scored against the held-out observations. Volume
predictions are scored with mean absolute error, root-mean-square error,
and squared Pearson correlation; class-share predictions with cross-entropy
loss (natural log) plus per-class share errors. Per-class volumes are the
share times the total volume at the edge.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .aggregate import StationObservation
from .errors import UndefinedMetricError, ValidationError
from .impute import ImputeConfig, Payload, run_imputation
from .network import (
    ClassShare,
    EdgeId,
    EdgeState,
    N_CLASSES,
    RoadNetwork,
    Status,
    VEHICLE_CLASSES,
    copy_states,
    id_sort_key,
)

#: Predicted shares are clamped to this floor inside the log so that a
#: zero predicted probability yields a large finite loss.
CEL_CLAMP = 1e-12

#: Cross-entropy inputs must sum to 1 within this tolerance.
CEL_SUM_TOL = 1e-6


@dataclass(frozen=True)
class FoldAssignment:
    """Deterministic partition of stations into ``k`` folds."""

    seed: int
    k: int
    fold_of: dict[str, int]

    def members(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.fold_of.items() if f == fold)


def make_folds(station_ids: Iterable[str], k: int = 10, seed: int = 0) -> FoldAssignment:
    """Shuffle stations by seed and deal them round-robin into ``k`` folds.

    Fold sizes differ by at most one; the same seed always produces the
    same assignment.
    """
    ids = sorted(set(station_ids))
    if k < 2:
        raise ValidationError(f"fold count must be >= 2, got {k}")
    if len(ids) < k:
        raise ValidationError(f"cannot split {len(ids)} stations into {k} folds")
    rng = random.Random(seed)
    rng.shuffle(ids)
    return FoldAssignment(seed=seed, k=k, fold_of={sid: i % k for i, sid in enumerate(ids)})


def _check_series(y: Sequence[float], yhat: Sequence[float]) -> int:
    if len(y) != len(yhat):
        raise ValidationError(f"series length mismatch: {len(y)} vs {len(yhat)}")
    if len(y) == 0:
        raise ValidationError("empty series")
    return len(y)


def mae(y: Sequence[float], yhat: Sequence[float]) -> float:
    """Mean absolute error."""
    n = _check_series(y, yhat)
    return sum(abs(a - b) for a, b in zip(y, yhat)) / n


def rmse(y: Sequence[float], yhat: Sequence[float]) -> float:
    """Root-mean-square error."""
    n = _check_series(y, yhat)
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(y, yhat)) / n)


def pearson_r2(y: Sequence[float], yhat: Sequence[float]) -> float:
    """Squared Pearson correlation, in [0, 1].

    Raises :class:`UndefinedMetricError` when either series has zero
    variance or fewer than two points; it never silently reports 0.
    """
    n = _check_series(y, yhat)
    if n < 2:
        raise UndefinedMetricError("correlation needs at least 2 points")
    my = sum(y) / n
    mh = sum(yhat) / n
    cov = sum((a - my) * (b - mh) for a, b in zip(y, yhat))
    sy = math.sqrt(sum((a - my) ** 2 for a in y))
    sh = math.sqrt(sum((b - mh) ** 2 for b in yhat))
    if sy == 0.0 or sh == 0.0:
        raise UndefinedMetricError("zero variance; correlation undefined")
    r = cov / (sy * sh)
    return r * r


def _as_share_tuple(share: ClassShare | Sequence[float], name: str) -> tuple[float, ...]:
    p = share.p if isinstance(share, ClassShare) else tuple(float(v) for v in share)
    if len(p) != N_CLASSES:
        raise ValidationError(f"{name} must have {N_CLASSES} components, got {len(p)}")
    if abs(sum(p) - 1.0) > CEL_SUM_TOL:
        raise ValidationError(f"{name} is not on the simplex (sum {sum(p)!r})")
    return p


def cel(f: ClassShare | Sequence[float], g: ClassShare | Sequence[float]) -> float:
    """Cross-entropy loss between observed shares ``f`` and predicted ``g``.

    Natural log; predicted components are clamped at ``CEL_CLAMP`` and terms
    with ``f == 0`` contribute nothing regardless of ``g``.
    """
    fp = _as_share_tuple(f, "observed distribution")
    gp = _as_share_tuple(g, "predicted distribution")
    total = 0.0
    for fv, gv in zip(fp, gp):
        if fv > 0.0:
            total -= fv * math.log(max(gv, CEL_CLAMP))
    return total


@dataclass(frozen=True)
class MetricsCell:
    """One scored slice of the cross-validation output.

    ``scope`` is ``fold`` for a single fold, ``pooled`` for the union of all
    masked predictions, or ``fold_mean`` for the average of per-fold values.
    ``None`` in a breakdown field means "all".
    """

    scope: str
    fold: int | None
    payload: str
    vehicle_class: int | None
    window: str | None
    region: str | None
    mae: float | None
    rmse: float | None
    r2: float | None
    cel: float | None
    n: int
    n_missing: int


@dataclass
class MetricsReport:
    """Cross-validation scores plus solver health counters."""

    k: int
    seed: int
    cells: list[MetricsCell] = field(default_factory=list)
    n_total: int = 0
    n_missing: int = 0
    max_share_sum_dev: float = 0.0
    pinning_ok: bool = True

    @property
    def is_empty(self) -> bool:
        return self.n_total == 0

    def find(
        self,
        scope: str = "pooled",
        payload: str = "volume",
        fold: int | None = None,
        vehicle_class: int | None = None,
        window: str | None = None,
        region: str | None = None,
    ) -> MetricsCell | None:
        for c in self.cells:
            if (
                c.scope == scope
                and c.payload == payload
                and c.fold == fold
                and c.vehicle_class == vehicle_class
                and c.window == window
                and c.region == region
            ):
                return c
        return None


@dataclass(frozen=True)
class _Prediction:
    fold: int
    window: str
    region: str | None
    observation: StationObservation
    volume: float | None
    share: ClassShare | None
    missing: bool


def pool_observations(
    group: Sequence[StationObservation],
) -> tuple[float, ClassShare | None]:
    """Combine several observations pinned to one edge.

    Weighted by observed vehicle counts (volume x hours), which is the same
    as aggregating the union of their hours.
    """
    total_hours = sum(o.n_hours for o in group)
    volume = sum(o.mean_hourly_volume * o.n_hours for o in group) / total_hours
    vehicles = [o.mean_hourly_volume * o.n_hours for o in group]
    total_vehicles = sum(vehicles)
    if total_vehicles <= 0:
        return volume, None
    comps = [
        sum(o.class_share.p[c] * v for o, v in zip(group, vehicles)) / total_vehicles
        for c in range(N_CLASSES)
    ]
    return volume, ClassShare.from_counts(comps)


def _metric_values(
    pairs: Sequence[tuple[float, float]],
) -> tuple[float | None, float | None, float | None]:
    if not pairs:
        return None, None, None
    y = [p[0] for p in pairs]
    yhat = [p[1] for p in pairs]
    m = mae(y, yhat)
    r = rmse(y, yhat)
    try:
        r2 = pearson_r2(y, yhat)
    except UndefinedMetricError:
        r2 = None
    return m, r, r2


def _build_cells(
    predictions: Sequence[_Prediction],
    scope: str,
    fold: int | None,
    payload_cfg: Payload,
    groupings: Sequence[tuple[str | None, int | None, str | None]],
) -> list[MetricsCell]:
    do_vol = payload_cfg in (Payload.VOLUME, Payload.BOTH)
    do_shr = payload_cfg in (Payload.CLASS_SHARE, Payload.BOTH)
    cells: list[MetricsCell] = []
    for window, vclass, region in groupings:
        subset = [
            p
            for p in predictions
            if (window is None or p.window == window)
            and (region is None or p.region == region)
        ]
        if not subset:
            continue
        n_missing = sum(1 for p in subset if p.missing)
        scored = [p for p in subset if not p.missing]
        if do_vol:
            if vclass is None:
                pairs = [(p.observation.mean_hourly_volume, p.volume) for p in scored]
            elif payload_cfg is Payload.BOTH:
                idx = vclass - VEHICLE_CLASSES[0]
                pairs = [
                    (
                        p.observation.class_share.p[idx] * p.observation.mean_hourly_volume,
                        p.share.p[idx] * p.volume,
                    )
                    for p in scored
                ]
            else:
                pairs = []
            if pairs or (vclass is None and subset):
                m, r, r2 = _metric_values(pairs)
                cells.append(
                    MetricsCell(
                        scope=scope,
                        fold=fold,
                        payload="volume",
                        vehicle_class=vclass,
                        window=window,
                        region=region,
                        mae=m,
                        rmse=r,
                        r2=r2,
                        cel=None,
                        n=len(pairs),
                        n_missing=n_missing,
                    )
                )
        if do_shr:
            if vclass is None:
                losses = [cel(p.observation.class_share, p.share) for p in scored]
                cells.append(
                    MetricsCell(
                        scope=scope,
                        fold=fold,
                        payload="class_share",
                        vehicle_class=None,
                        window=window,
                        region=region,
                        mae=None,
                        rmse=None,
                        r2=None,
                        cel=(sum(losses) / len(losses)) if losses else None,
                        n=len(losses),
                        n_missing=n_missing,
                    )
                )
            else:
                idx = vclass - VEHICLE_CLASSES[0]
                pairs = [
                    (p.observation.class_share.p[idx], p.share.p[idx]) for p in scored
                ]
                if pairs:
                    m, r, r2 = _metric_values(pairs)
                    cells.append(
                        MetricsCell(
                            scope=scope,
                            fold=fold,
                            payload="class_share",
                            vehicle_class=vclass,
                            window=window,
                            region=region,
                            mae=m,
                            rmse=r,
                            r2=r2,
                            cel=None,
                            n=len(pairs),
                            n_missing=n_missing,
                        )
                    )
    return cells


def run_cross_validation(
    net: RoadNetwork,
    base_states: Mapping[EdgeId, EdgeState],
    observations: Sequence[StationObservation],
    folds: FoldAssignment,
    impute_cfg: ImputeConfig | None = None,
) -> MetricsReport:
    """Mask each fold's stations, repropagate, and score the masked edges.

    ``base_states`` supplies resolved edge weights and is never mutated;
    each fold works on a private copy. Observations must already carry a
    matched edge. A masked edge the propagation cannot reach is scored as
    missing and counted rather than dropped.
    """
    impute_cfg = impute_cfg or ImputeConfig()
    report = MetricsReport(k=folds.k, seed=folds.seed)
    if not observations or not folds.fold_of:
        return report

    for o in observations:
        if o.matched_edge is None:
            raise ValidationError(f"observation {o.station_id!r} has no matched edge")
        if o.station_id not in folds.fold_of:
            raise ValidationError(f"station {o.station_id!r} missing from fold assignment")

    do_vol = impute_cfg.payload in (Payload.VOLUME, Payload.BOTH)
    do_shr = impute_cfg.payload in (Payload.CLASS_SHARE, Payload.BOTH)

    by_window: dict[str, list[StationObservation]] = {}
    for o in observations:
        by_window.setdefault(o.window.label(), []).append(o)

    predictions: list[_Prediction] = []
    for window_label in sorted(by_window):
        wobs = by_window[window_label]
        for fold in range(folds.k):
            masked = [o for o in wobs if folds.fold_of[o.station_id] == fold]
            if not masked:
                continue
            kept = [o for o in wobs if folds.fold_of[o.station_id] != fold]
            states = copy_states(base_states)
            pinned: dict[EdgeId, tuple[float | None, ClassShare | None]] = {}
            by_edge: dict[EdgeId, list[StationObservation]] = {}
            for o in kept:
                by_edge.setdefault(o.matched_edge, []).append(o)
            for eid in sorted(by_edge, key=id_sort_key):
                volume, share = pool_observations(by_edge[eid])
                s = states[eid]
                s.volume = volume if do_vol else None
                s.class_share = share if do_shr else None
                if s.volume is None and s.class_share is None:
                    continue
                s.status = Status.OBSERVED
                pinned[eid] = (s.volume, s.class_share)
            result = run_imputation(net, states, impute_cfg)
            if result.trace:
                report.max_share_sum_dev = max(
                    report.max_share_sum_dev, max(t.max_share_sum_dev for t in result.trace)
                )
            for eid, (pv, ps) in pinned.items():
                s = states[eid]
                if s.volume is not pv and s.volume != pv:
                    report.pinning_ok = False
                if s.class_share is not ps and s.class_share != ps:
                    report.pinning_ok = False
            for o in masked:
                s = states[o.matched_edge]
                missing = (
                    s.status is Status.UNSET
                    or (do_vol and s.volume is None)
                    or (do_shr and s.class_share is None)
                )
                region = o.region_tag or net.edge(o.matched_edge).region_tag
                predictions.append(
                    _Prediction(
                        fold=fold,
                        window=window_label,
                        region=region,
                        observation=o,
                        volume=s.volume if not missing else None,
                        share=s.class_share if not missing else None,
                        missing=missing,
                    )
                )

    report.n_total = len(predictions)
    report.n_missing = sum(1 for p in predictions if p.missing)
    if not predictions:
        return report

    windows = sorted({p.window for p in predictions})
    regions = sorted({p.region for p in predictions if p.region is not None})
    window_opts: list[str | None] = [None] + ([w for w in windows] if len(windows) > 1 else [])
    class_opts: list[int | None] = list(VEHICLE_CLASSES)

    pooled_groupings: list[tuple[str | None, int | None, str | None]] = []
    for w in window_opts:
        pooled_groupings.append((w, None, None))
        for c in class_opts:
            pooled_groupings.append((w, c, None))
        for rg in regions:
            pooled_groupings.append((w, None, rg))
    report.cells.extend(
        _build_cells(predictions, "pooled", None, impute_cfg.payload, pooled_groupings)
    )

    fold_groupings: list[tuple[str | None, int | None, str | None]] = [(None, None, None)]
    if len(windows) > 1:
        fold_groupings += [(w, None, None) for w in windows]
    fold_cells: list[MetricsCell] = []
    for fold in sorted({p.fold for p in predictions}):
        fold_preds = [p for p in predictions if p.fold == fold]
        fold_cells.extend(
            _build_cells(fold_preds, "fold", fold, impute_cfg.payload, fold_groupings)
        )
    report.cells.extend(fold_cells)

    for payload in ("volume", "class_share"):
        if payload == "volume" and not do_vol:
            continue
        if payload == "class_share" and not do_shr:
            continue
        overall = [
            c
            for c in fold_cells
            if c.payload == payload and c.window is None and c.vehicle_class is None
        ]
        if not overall:
            continue

        def _mean(vals: list[float]) -> float | None:
            return sum(vals) / len(vals) if vals else None

        report.cells.append(
            MetricsCell(
                scope="fold_mean",
                fold=None,
                payload=payload,
                vehicle_class=None,
                window=None,
                region=None,
                mae=_mean([c.mae for c in overall if c.mae is not None]),
                rmse=_mean([c.rmse for c in overall if c.rmse is not None]),
                r2=_mean([c.r2 for c in overall if c.r2 is not None]),
                cel=_mean([c.cel for c in overall if c.cel is not None]),
                n=sum(c.n for c in overall),
                n_missing=sum(c.n_missing for c in overall),
            )
        )
    return report
