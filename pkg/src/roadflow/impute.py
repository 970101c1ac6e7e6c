"""Iterative neighbor-averaging imputation with observed-edge pinning.

Every unvalued edge repeatedly receives the weighted average of its valued
neighbors (weights are the per-edge daily-truck-volume priors), swept over
the edge list in ascending id order with in-place updates, until the
largest per-edge change drops below tolerance or the epoch cap is reached.
Observed edges are never overwritten. Merge edges (several inbound links
funneling into one outbound) and diverge edges (one inbound fanning into
several outbound) defer their first assignment until the funneling side is
fully valued; because those deferral rules can deadlock each other, they
are waived once the sweep stalls past a grace period.

A synchronous two-buffer scheme is available for oracle-equivalence checks;
it shares the fixed point with the default in-place scheme.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import NumericalError, ValidationError
from .network import (
    ClassShare,
    EdgeId,
    EdgeState,
    N_CLASSES,
    RoadNetwork,
    Status,
    effective_in_edges,
    effective_out_edges,
)


class ImputationError(ValidationError):
    """Imputation preconditions not met."""


class Payload(Enum):
    VOLUME = "volume"
    CLASS_SHARE = "class_share"
    BOTH = "both"


class Scheme(Enum):
    GAUSS_SEIDEL = "gauss_seidel"  # in-place sweep, matches the reference loop
    JACOBI = "jacobi"  # synchronous two-buffer epoch


@dataclass(frozen=True)
class ImputeConfig:
    """Solver controls.

    ``max_epochs`` is the hard cap on full sweeps; ``tolerance`` is the
    max-absolute-change convergence threshold added on top of it.
    ``deferral_grace`` is the epoch count after which a stalled sweep stops
    honoring merge/diverge deferral.
    """

    max_epochs: int = 500
    tolerance: float = 1e-6
    deferral_grace: int = 50
    payload: Payload = Payload.BOTH
    scheme: Scheme = Scheme.GAUSS_SEIDEL

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs!r}")
        if not self.tolerance > 0:
            raise ValidationError(f"tolerance must be positive, got {self.tolerance!r}")
        if not 0 <= self.deferral_grace <= self.max_epochs:
            raise ValidationError(
                f"deferral_grace must lie in [0, max_epochs], got {self.deferral_grace!r}"
            )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    max_delta: float
    newly_valued: int
    max_share_sum_dev: float


@dataclass
class ImputeResult:
    """Outcome of a solver run; ``states`` is the table passed in, updated
    in place (observed entries untouched)."""

    states: dict[EdgeId, EdgeState]
    epochs_run: int
    converged: bool
    trace: list[EpochStats] = field(default_factory=list)
    unset_count: int = 0
    waived_at_epoch: int | None = None


@dataclass(frozen=True)
class WeightImputeResult:
    """Outcome of the weight pre-pass."""

    n_already_set: int
    n_imputed: int
    median_filled: tuple[EdgeId, ...]
    solver: ImputeResult | None


def _weighted_mean(values: Sequence[float], weights: Sequence[float]) -> float:
    """Weight-averaged value; falls back to the plain mean when all weights
    are zero (the weighted form is undefined there)."""
    num = 0.0
    den = 0.0
    total = 0.0
    for v, wt in zip(values, weights):
        num += wt * v
        den += wt
        total += v
    if den > 0.0:
        return num / den
    return total / len(values)


def _weighted_share_mean(
    shares: Sequence[Sequence[float]], weights: Sequence[float]
) -> tuple[float, ...]:
    """Componentwise weighted average of share vectors, renormalized to sum
    to one when float drift exceeds 1e-12."""
    acc = [0.0] * N_CLASSES
    den = 0.0
    for s, wt in zip(shares, weights):
        for c in range(N_CLASSES):
            acc[c] += wt * s[c]
        den += wt
    if den > 0.0:
        out = [a / den for a in acc]
    else:
        n = len(shares)
        out = [sum(s[c] for s in shares) / n for c in range(N_CLASSES)]
    total = sum(out)
    if abs(total - 1.0) > 1e-12:
        if total <= 0.0:
            raise NumericalError("class-share average collapsed to zero")
        out = [x / total for x in out]
    return tuple(out)


def impute_edge(
    edge_id: EdgeId,
    neighbors: Sequence[EdgeId],
    states: Mapping[EdgeId, EdgeState],
    payload: Payload = Payload.VOLUME,
) -> float | ClassShare:
    """One application of the neighbor-averaging rule for a single edge.

    Averages over the neighbors that carry a value for ``payload``, weighted
    by their prior weights. Raises when no neighbor is valued.
    """
    if payload is Payload.BOTH:
        raise ValidationError("impute_edge handles one payload at a time")
    values = []
    weights = []
    for nb in neighbors:
        s = states[nb]
        v = s.volume if payload is Payload.VOLUME else s.class_share
        if v is None:
            continue
        if s.weight is None:
            raise ImputationError(f"neighbor {nb!r} of edge {edge_id!r} has no weight")
        values.append(v)
        weights.append(s.weight)
    if not values:
        raise ImputationError(f"edge {edge_id!r} has no valued neighbor")
    if payload is Payload.VOLUME:
        return _weighted_mean(values, weights)
    return ClassShare(_weighted_share_mean([v.p for v in values], weights))


def valid_to_impute(
    net: RoadNetwork,
    edge_id: EdgeId,
    states: Mapping[EdgeId, EdgeState],
    epoch: int,
    cfg: ImputeConfig,
    stalled: bool = False,
) -> bool:
    """Whether the deferral rules allow imputing this edge now.

    Requires at least one valued neighbor. A merge edge additionally waits
    until every inbound link at its tail is valued; a diverge edge waits on
    every outbound link at its head (the opposing-direction twin never
    counts). When the sweep has stalled and the epoch has passed the grace
    period, deferral is waived and any valued neighbor suffices. Callers
    skip observed edges before consulting this.
    """

    def valued(eid: EdgeId) -> bool:
        return states[eid].status is not Status.UNSET

    if not any(valued(nb) for nb in net.neighbor_edges(edge_id)):
        return False
    if stalled and epoch > cfg.deferral_grace:
        return True
    eff_in = effective_in_edges(net, edge_id)
    eff_out = effective_out_edges(net, edge_id)
    if len(eff_in) >= 2 and len(eff_out) == 1:  # merge
        return all(valued(eid) for eid in eff_in)
    if len(eff_in) == 1 and len(eff_out) >= 2:  # diverge
        return all(valued(eid) for eid in eff_out)
    return True


def run_imputation(
    net: RoadNetwork, states: dict[EdgeId, EdgeState], cfg: ImputeConfig | None = None
) -> ImputeResult:
    """Sweep the edge list until convergence or the epoch cap.

    Edges are visited in ascending id order; observed edges are skipped and
    unset/imputed edges are updated (in place under the default scheme).
    Edges unreachable from any observation remain unset and are counted in
    the result. Requires all edge weights resolved beforehand.
    """
    cfg = cfg or ImputeConfig()
    do_vol = cfg.payload in (Payload.VOLUME, Payload.BOTH)
    do_shr = cfg.payload in (Payload.CLASS_SHARE, Payload.BOTH)

    ids = net.edge_ids
    m = len(ids)
    pos = {eid: i for i, eid in enumerate(ids)}

    w: list[float] = []
    observed: list[bool] = []
    valued: list[bool] = []
    vol: list[float | None] = []
    shr: list[tuple[float, ...] | None] = []
    for eid in ids:
        s = states[eid]
        if s.weight is None:
            raise ImputationError(
                f"edge {eid!r} has no weight; run impute_missing_weights first"
            )
        if not math.isfinite(s.weight):
            raise ImputationError(f"edge {eid!r} has non-finite weight {s.weight!r}")
        is_obs = s.status is Status.OBSERVED
        is_valued = s.status is not Status.UNSET
        if is_valued:
            if do_vol and s.volume is None:
                raise ImputationError(f"edge {eid!r} is {s.status.value} but has no volume")
            if do_shr and s.class_share is None:
                raise ImputationError(f"edge {eid!r} is {s.status.value} but has no class share")
            if do_vol and not math.isfinite(s.volume):
                raise ImputationError(f"edge {eid!r} has non-finite volume {s.volume!r}")
        w.append(float(s.weight))
        observed.append(is_obs)
        valued.append(is_valued)
        vol.append(float(s.volume) if (is_valued and do_vol) else None)
        shr.append(s.class_share.p if (is_valued and do_shr) else None)
    if not any(observed):
        raise ImputationError("no observed edges to propagate from")

    nbr = [[pos[j] for j in net.neighbor_edges(eid)] for eid in ids]
    eff_in = [[pos[j] for j in effective_in_edges(net, eid)] for eid in ids]
    eff_out = [[pos[j] for j in effective_out_edges(net, eid)] for eid in ids]
    is_merge = [len(eff_in[i]) >= 2 and len(eff_out[i]) == 1 for i in range(m)]
    is_diverge = [len(eff_in[i]) == 1 and len(eff_out[i]) >= 2 for i in range(m)]

    jacobi = cfg.scheme is Scheme.JACOBI
    trace: list[EpochStats] = []
    waived_at: int | None = None
    stalled = False
    converged = False
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        epochs_run = epoch
        if waived_at is None and stalled and epoch > cfg.deferral_grace:
            waived_at = epoch
        waived = waived_at is not None

        if jacobi:
            read_vol, read_shr, read_valued = list(vol), list(shr), list(valued)
        else:
            read_vol, read_shr, read_valued = vol, shr, valued

        max_delta = 0.0
        newly = 0
        share_dev = 0.0
        blocked = False
        for i in range(m):
            if observed[i]:
                continue
            nb = [j for j in nbr[i] if read_valued[j]]
            if not nb:
                continue
            if not waived:
                if is_merge[i] and not all(read_valued[j] for j in eff_in[i]):
                    if not valued[i]:
                        blocked = True
                    continue
                if is_diverge[i] and not all(read_valued[j] for j in eff_out[i]):
                    if not valued[i]:
                        blocked = True
                    continue
            wts = [w[j] for j in nb]
            if do_vol:
                new_v = _weighted_mean([read_vol[j] for j in nb], wts)
                if not math.isfinite(new_v):
                    raise NumericalError(
                        f"non-finite volume for edge {ids[i]!r} at epoch {epoch}"
                    )
                if valued[i]:
                    max_delta = max(max_delta, abs(new_v - vol[i]))
                vol[i] = new_v
            if do_shr:
                new_s = _weighted_share_mean([read_shr[j] for j in nb], wts)
                if any(not math.isfinite(x) for x in new_s):
                    raise NumericalError(
                        f"non-finite class share for edge {ids[i]!r} at epoch {epoch}"
                    )
                if valued[i]:
                    old = shr[i]
                    for c in range(N_CLASSES):
                        d = abs(new_s[c] - old[c])
                        if d > max_delta:
                            max_delta = d
                shr[i] = new_s
                share_dev = max(share_dev, abs(sum(new_s) - 1.0))
            if not valued[i]:
                valued[i] = True
                newly += 1

        trace.append(EpochStats(epoch, max_delta, newly, share_dev))
        if newly == 0:
            if max_delta <= cfg.tolerance and not blocked:
                converged = True
                break
            stalled = stalled or blocked
        else:
            stalled = False

    for i, eid in enumerate(ids):
        if observed[i] or not valued[i]:
            continue
        s = states[eid]
        if do_vol:
            s.volume = vol[i]
        if do_shr:
            s.class_share = ClassShare(shr[i])
        s.status = Status.IMPUTED

    return ImputeResult(
        states=states,
        epochs_run=epochs_run,
        converged=converged,
        trace=trace,
        unset_count=m - sum(valued),
        waived_at_epoch=waived_at,
    )


def impute_missing_weights(
    net: RoadNetwork, states: dict[EdgeId, EdgeState], cfg: ImputeConfig | None = None
) -> WeightImputeResult:
    """Fill unset edge weights by running the solver on the weights
    themselves with uniform neighbor weights.

    Edges the propagation cannot reach are assigned the global median of the
    initially set weights and flagged in the result.
    """
    cfg = cfg or ImputeConfig()
    set_ids = [eid for eid in net.edge_ids if states[eid].weight is not None]
    if not set_ids:
        raise ImputationError("no edges carry a weight; nothing to propagate")
    missing = [eid for eid in net.edge_ids if states[eid].weight is None]
    if not missing:
        return WeightImputeResult(
            n_already_set=len(set_ids), n_imputed=0, median_filled=(), solver=None
        )

    scratch = {
        eid: EdgeState(
            weight=1.0,
            volume=states[eid].weight,
            status=Status.OBSERVED if states[eid].weight is not None else Status.UNSET,
        )
        for eid in net.edge_ids
    }
    solver_cfg = ImputeConfig(
        max_epochs=cfg.max_epochs,
        tolerance=cfg.tolerance,
        deferral_grace=cfg.deferral_grace,
        payload=Payload.VOLUME,
        scheme=cfg.scheme,
    )
    result = run_imputation(net, scratch, solver_cfg)

    global_median = statistics.median(states[eid].weight for eid in set_ids)
    median_filled: list[EdgeId] = []
    n_imputed = 0
    for eid in missing:
        filled = scratch[eid].volume
        if filled is None:
            states[eid].weight = global_median
            median_filled.append(eid)
        else:
            states[eid].weight = filled
            n_imputed += 1
    return WeightImputeResult(
        n_already_set=len(set_ids),
        n_imputed=n_imputed,
        median_filled=tuple(median_filled),
        solver=result,
    )
