"""Pipeline driver: match -> aggregate -> impute -> evaluate, plus the grid
demo and static GeoJSON export.

One declarative JSON config names the input files and parameters; paths are
resolved relative to the config file. Every subcommand is deterministic
given (inputs, config): reruns produce byte-identical outputs. Exit codes:
0 success, 1 validation/ingestion failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from . import io as rio
from .aggregate import AggregationWindow, aggregate_records, window_from_dict
from .errors import NumericalError, ValidationError
from .evaluate import make_folds, pool_observations, run_cross_validation
from .impute import (
    ImputeConfig,
    Payload,
    Scheme,
    impute_missing_weights,
    run_imputation,
)
from .io import IngestionError
from .match import (
    EdgeWeightMatch,
    MatchConfig,
    SnapError,
    directionalize_and_halve,
    snap_station,
    transfer_weights,
)
from .network import (
    EdgeId,
    Status,
    copy_states,
    init_states,
    neighbor_components,
)
from .synth import GridSpec, make_grid


@dataclass
class PipelineConfig:
    """Resolved pipeline configuration."""

    network: Path | None = None
    dense_network: Path | None = None
    stations: Path | None = None
    hourly_records: Path | None = None
    output_dir: Path = Path("out")
    match_cfg: MatchConfig = field(default_factory=MatchConfig)
    impute_cfg: ImputeConfig = field(default_factory=ImputeConfig)
    windows: list[AggregationWindow] = field(default_factory=lambda: [AggregationWindow()])
    cv_folds: int = 10
    cv_seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)

    def to_dict(self) -> dict:
        return {
            "inputs": {
                "network": str(self.network) if self.network else None,
                "dense_network": str(self.dense_network) if self.dense_network else None,
                "stations": str(self.stations) if self.stations else None,
                "hourly_records": str(self.hourly_records) if self.hourly_records else None,
            },
            "output_dir": str(self.output_dir),
            "match": dataclasses.asdict(self.match_cfg),
            "impute": {
                "max_epochs": self.impute_cfg.max_epochs,
                "tolerance": self.impute_cfg.tolerance,
                "deferral_grace": self.impute_cfg.deferral_grace,
                "payload": self.impute_cfg.payload.value,
                "scheme": self.impute_cfg.scheme.value,
            },
            "windows": [
                {"day": w.day.value, "hour_band": w.hour_band.value, "month": w.month}
                for w in self.windows
            ],
            "cv": {"k": self.cv_folds, "seed": self.cv_seed},
            "grid": dataclasses.asdict(self.grid),
        }


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a JSON config; relative paths resolve against the
    config file's directory."""
    p = Path(path)
    if not p.exists():
        raise IngestionError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{p}: invalid JSON ({exc})") from None
    base = p.parent

    def resolve(key: str) -> Path | None:
        raw = (doc.get("inputs") or {}).get(key)
        if raw is None:
            return None
        rp = Path(raw)
        return rp if rp.is_absolute() else base / rp

    match_raw = doc.get("match") or {}
    impute_raw = doc.get("impute") or {}
    cv_raw = doc.get("cv") or {}
    grid_raw = doc.get("grid") or {}
    try:
        payload = Payload(str(impute_raw.get("payload", "both")).lower())
        scheme = Scheme(str(impute_raw.get("scheme", "gauss_seidel")).lower())
    except ValueError as exc:
        raise ValidationError(f"{p}: {exc}") from None

    windows_raw = doc.get("windows") or [{}]
    out_raw = doc.get("output_dir", "out")
    out_dir = Path(out_raw)
    if not out_dir.is_absolute():
        out_dir = base / out_dir

    return PipelineConfig(
        network=resolve("network"),
        dense_network=resolve("dense_network"),
        stations=resolve("stations"),
        hourly_records=resolve("hourly_records"),
        output_dir=out_dir,
        match_cfg=MatchConfig(
            buffer_radius_m=float(match_raw.get("buffer_radius_m", 100.0)),
            bearing_tolerance_deg=float(match_raw.get("bearing_tolerance_deg", 15.0)),
            station_bearing_tolerance_deg=float(
                match_raw.get("station_bearing_tolerance_deg", 45.0)
            ),
            snap_max_distance_m=float(match_raw.get("snap_max_distance_m", 500.0)),
        ),
        impute_cfg=ImputeConfig(
            max_epochs=int(impute_raw.get("max_epochs", 500)),
            tolerance=float(impute_raw.get("tolerance", 1e-6)),
            deferral_grace=int(impute_raw.get("deferral_grace", 50)),
            payload=payload,
            scheme=scheme,
        ),
        windows=[window_from_dict(w) for w in windows_raw],
        cv_folds=int(cv_raw.get("k", 10)),
        cv_seed=int(cv_raw.get("seed", 0)),
        grid=GridSpec(
            rows=int(grid_raw.get("rows", 10)),
            cols=int(grid_raw.get("cols", 10)),
            source_value=float(grid_raw.get("source_value", 0.1)),
            sink_value=float(grid_raw.get("sink_value", 1.0)),
            uniform_weight=float(grid_raw.get("uniform_weight", 1.0)),
        ),
    )


def _require(cfg: PipelineConfig, *names: str) -> None:
    for name in names:
        path = getattr(cfg, name)
        if path is None:
            raise ValidationError(f"config is missing required input: {name}")
        if not Path(path).exists():
            raise IngestionError(f"{name} file not found: {path}")


def _read_network(path: Path):
    if path.suffix.lower() in (".geojson", ".json"):
        return rio.read_network_geojson(path)
    return rio.read_network_csv(path)


def cmd_match(cfg: PipelineConfig) -> int:
    """Transfer dense-network weights and snap stations to edges."""
    _require(cfg, "network", "dense_network", "stations")
    net, file_weights = _read_network(cfg.network)
    dense = rio.read_dense_csv(cfg.dense_network)
    segments = directionalize_and_halve(dense)
    matches = transfer_weights(net, segments, cfg.match_cfg)

    merged: dict[EdgeId, EdgeWeightMatch] = {}
    for eid, m in matches.items():
        weight = m.weight if m.weight is not None else file_weights.get(eid)
        merged[eid] = EdgeWeightMatch(weight, m.n_candidates, m.n_after_bearing_filter)
    rio.write_weight_report(merged, cfg.output_dir / "weights.csv")

    stations = rio.read_stations_csv(cfg.stations)
    snaps = []
    unmatched = 0
    for st in sorted(stations, key=lambda s: (s.station_id, s.direction.name)):
        try:
            snap = snap_station(st, net, cfg.match_cfg)
            snaps.append((st, snap.edge_id, snap.distance_m))
        except SnapError:
            snaps.append((st, None, None))
            unmatched += 1
    rio.write_snap_report(snaps, cfg.output_dir / "snap_report.csv")

    n_weighted = sum(1 for m in merged.values() if m.weight is not None)
    print(f"match: {n_weighted}/{net.n_edges} edges weighted, "
          f"{len(snaps) - unmatched}/{len(snaps)} stations snapped, {unmatched} unmatched")
    return 0


def cmd_aggregate(cfg: PipelineConfig) -> int:
    """Aggregate hourly class records into windowed observations."""
    _require(cfg, "hourly_records")
    records, ignored_cols = rio.read_hourly_csv(cfg.hourly_records)
    observations = []
    skipped = 0
    for window in cfg.windows:
        result = aggregate_records(records, window)
        observations.extend(result.observations)
        skipped += len(result.skipped)
    rio.write_observations_csv(observations, cfg.output_dir / "observations.csv")
    note = f", {ignored_cols} out-of-range class columns ignored" if ignored_cols else ""
    print(f"aggregate: {len(observations)} observations over {len(cfg.windows)} windows, "
          f"{skipped} station-windows skipped{note}")
    return 0


def _load_states_and_observations(cfg: PipelineConfig):
    _require(cfg, "network")
    obs_path = cfg.output_dir / "observations.csv"
    snap_path = cfg.output_dir / "snap_report.csv"
    if not obs_path.exists():
        raise IngestionError(f"observations file not found: {obs_path} (run aggregate first)")
    if not snap_path.exists():
        raise IngestionError(f"snap report not found: {snap_path} (run match first)")
    observations = rio.read_observations_csv(obs_path)
    snaps = rio.read_snap_report(snap_path)

    net, file_weights = _read_network(cfg.network)
    weights_path = cfg.output_dir / "weights.csv"
    weights = rio.read_weights_csv(weights_path) if weights_path.exists() else file_weights
    if not weights:
        raise IngestionError(
            "no edge weights available: run match first or provide aadt_truck "
            f"values in {cfg.network}"
        )
    states = init_states(net, weights)
    fill = impute_missing_weights(net, states, cfg.impute_cfg)

    region_by_station: dict[tuple[str, str], str | None] = {}
    if cfg.stations is not None and Path(cfg.stations).exists():
        for st in rio.read_stations_csv(cfg.stations):
            region_by_station[(st.station_id, st.direction.name)] = st.region_tag

    attached = []
    missing_snap = 0
    for o in observations:
        key = (o.station_id, o.direction.name)
        eid = snaps.get(key)
        if eid is None or eid not in net.edges:
            missing_snap += 1
            continue
        attached.append(
            dataclasses.replace(o, matched_edge=eid, region_tag=region_by_station.get(key))
        )
    return net, states, fill, attached, missing_snap


def cmd_impute(cfg: PipelineConfig) -> int:
    """Propagate observed values across every edge, one run per window."""
    net, states, fill, observations, missing_snap = _load_states_and_observations(cfg)
    components = neighbor_components(net)
    print(f"impute: weights pre-pass filled {fill.n_imputed} edges"
          f" ({len(fill.median_filled)} by global median); "
          f"{missing_snap} observations without a snapped edge")

    do_vol = cfg.impute_cfg.payload in (Payload.VOLUME, Payload.BOTH)
    do_shr = cfg.impute_cfg.payload in (Payload.CLASS_SHARE, Payload.BOTH)
    for window in cfg.windows:
        label = window.label()
        wobs = [o for o in observations if o.window.label() == label]
        run_states = copy_states(states)
        by_edge: dict[EdgeId, list] = {}
        for o in wobs:
            by_edge.setdefault(o.matched_edge, []).append(o)
        for eid in sorted(by_edge, key=lambda e: str(e)):
            volume, share = pool_observations(by_edge[eid])
            s = run_states[eid]
            s.volume = volume if do_vol else None
            s.class_share = share if do_shr else None
            if s.volume is not None or s.class_share is not None:
                s.status = Status.OBSERVED
        result = run_imputation(net, run_states, cfg.impute_cfg)
        rio.write_imputed_csv(net, run_states, components, cfg.output_dir / f"imputed_{label}.csv")
        rio.write_imputed_geojson(
            net, run_states, components, cfg.output_dir / f"imputed_{label}.geojson"
        )
        rio.write_trace_csv(result, cfg.output_dir / f"trace_{label}.csv")
        print(
            f"impute[{label}]: {len(wobs)} observed stations, "
            f"{'converged' if result.converged else 'epoch cap reached'} "
            f"after {result.epochs_run} epochs, {result.unset_count} edges left unset"
        )
    return 0


def cmd_evaluate(cfg: PipelineConfig) -> int:
    """Tenfold masking cross-validation with metric reports."""
    net, states, _fill, observations, missing_snap = _load_states_and_observations(cfg)
    if missing_snap:
        print(f"evaluate: skipping {missing_snap} observations without a snapped edge")
    station_ids = {o.station_id for o in observations}
    folds = make_folds(station_ids, k=cfg.cv_folds, seed=cfg.cv_seed)
    report = run_cross_validation(net, states, observations, folds, cfg.impute_cfg)
    rio.write_metrics_long(report, cfg.output_dir / "metrics_long.csv")
    rio.write_metrics_summary(report, cfg.output_dir / "metrics_summary.csv")
    pooled = report.find(scope="pooled", payload="volume")
    if pooled is not None:
        r2 = "undefined" if pooled.r2 is None else f"{pooled.r2:.4f}"
        print(
            f"evaluate: pooled volume over {pooled.n} masked predictions: "
            f"MAE {pooled.mae:.4f}, RMSE {pooled.rmse:.4f}, R2 {r2}; "
            f"{report.n_missing} unreachable"
        )
    else:
        print(f"evaluate: empty report (n={report.n_total})")
    return 0


def cmd_grid_demo(cfg: PipelineConfig) -> int:
    """Corner-to-corner grid propagation demo."""
    net, states = make_grid(cfg.grid)
    demo_cfg = ImputeConfig(
        max_epochs=cfg.impute_cfg.max_epochs,
        tolerance=cfg.impute_cfg.tolerance,
        deferral_grace=cfg.impute_cfg.deferral_grace,
        payload=Payload.VOLUME,
        scheme=cfg.impute_cfg.scheme,
    )
    result = run_imputation(net, states, demo_cfg)
    components = neighbor_components(net)
    rio.write_imputed_csv(net, states, components, cfg.output_dir / "grid_imputed.csv")
    rio.write_imputed_geojson(net, states, components, cfg.output_dir / "grid_imputed.geojson")
    rio.write_trace_csv(result, cfg.output_dir / "grid_trace.csv")
    values = [s.volume for s in states.values() if s.volume is not None]
    print(
        f"grid-demo: {cfg.grid.rows}x{cfg.grid.cols} grid, "
        f"{'converged' if result.converged else 'epoch cap reached'} after "
        f"{result.epochs_run} epochs, values in [{min(values):.4f}, {max(values):.4f}]"
    )
    return 0


def cmd_export(cfg: PipelineConfig, imputed: str | None, out: str | None) -> int:
    """Re-export an imputed CSV as GeoJSON for map rendering."""
    _require(cfg, "network")
    net, _ = _read_network(cfg.network)
    imputed_path = Path(imputed) if imputed else cfg.output_dir / "imputed_all.csv"
    if not imputed_path.exists():
        raise IngestionError(f"imputed file not found: {imputed_path}")
    states = rio.read_imputed_csv(imputed_path)
    missing = [eid for eid in net.edge_ids if eid not in states]
    if missing:
        raise ValidationError(
            f"imputed file covers {len(states)} edges but network has {net.n_edges}; "
            f"first missing: {missing[0]!r}"
        )
    components = neighbor_components(net)
    out_path = Path(out) if out else cfg.output_dir / "imputed_export.geojson"
    rio.write_imputed_geojson(net, states, components, out_path)
    print(f"export: wrote {out_path}")
    return 0


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "output_dir", None):
        cfg.output_dir = Path(args.output_dir)
    if getattr(args, "seed", None) is not None:
        cfg.cv_seed = args.seed
    if getattr(args, "folds", None) is not None:
        cfg.cv_folds = args.folds
    impute_kw = {}
    if getattr(args, "max_epochs", None) is not None:
        impute_kw["max_epochs"] = args.max_epochs
    if getattr(args, "tolerance", None) is not None:
        impute_kw["tolerance"] = args.tolerance
    if getattr(args, "payload", None) is not None:
        impute_kw["payload"] = Payload(args.payload)
    if impute_kw:
        cfg.impute_cfg = dataclasses.replace(cfg.impute_cfg, **impute_kw)
    grid_kw = {}
    for name in ("rows", "cols", "source_value", "sink_value"):
        if getattr(args, name, None) is not None:
            grid_kw[name] = getattr(args, name)
    if grid_kw:
        cfg.grid = dataclasses.replace(cfg.grid, **grid_kw)
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadflow",
        description="Impute traffic volumes and class shares across a road network.",
    )
    parser.add_argument("--version", action="version", version=f"roadflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, config_required: bool = True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=config_required, help="pipeline config JSON")
        sp.add_argument("--config-dump", action="store_true",
                        help="print the resolved config and exit")
        sp.add_argument("--output-dir", default=None)
        return sp

    add("match", "transfer dense-network weights and snap stations")
    add("aggregate", "aggregate hourly class records into windowed observations")

    sp = add("impute", "impute values across the network per window")
    sp.add_argument("--max-epochs", type=int, default=None)
    sp.add_argument("--tolerance", type=float, default=None)
    sp.add_argument("--payload", choices=[p.value for p in Payload], default=None)

    sp = add("evaluate", "masking cross-validation with metric reports")
    sp.add_argument("--folds", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--max-epochs", type=int, default=None)
    sp.add_argument("--tolerance", type=float, default=None)

    sp = add("grid-demo", "corner-to-corner grid propagation demo", config_required=False)
    sp.add_argument("--rows", type=int, default=None)
    sp.add_argument("--cols", type=int, default=None)
    sp.add_argument("--source-value", dest="source_value", type=float, default=None)
    sp.add_argument("--sink-value", dest="sink_value", type=float, default=None)
    sp.add_argument("--max-epochs", type=int, default=None)
    sp.add_argument("--tolerance", type=float, default=None)

    sp = add("export", "re-export an imputed CSV as GeoJSON")
    sp.add_argument("--imputed", default=None, help="imputed CSV to export")
    sp.add_argument("--geojson-out", dest="geojson_out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = PipelineConfig(output_dir=Path(args.output_dir or "out"))
        cfg = _apply_overrides(cfg, args)
        if args.config_dump:
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            return 0
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "match":
            return cmd_match(cfg)
        if args.command == "aggregate":
            return cmd_aggregate(cfg)
        if args.command == "impute":
            return cmd_impute(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "grid-demo":
            return cmd_grid_demo(cfg)
        if args.command == "export":
            return cmd_export(cfg, args.imputed, args.geojson_out)
        raise ValidationError(f"unknown command {args.command!r}")
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
