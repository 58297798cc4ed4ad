"""End-to-end batch pipeline: ingest, cluster, distributions, feature
selection, model training, baseline comparison and reporting.

Each stage writes its artifacts before the next starts, so a failed or
gated run leaves everything completed so far on disk, together with a
state file naming the last completed stage.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import cluster as cl
from . import featsel as fs
from . import ingest as ig
from . import neural as nn
from .config import PipelineConfig
from .errors import MissingArtifactError, StageError

STAGES = ["ingest", "cluster", "distributions", "featsel", "train", "baselines", "report"]

REPORT_FILES = [
    "report_silhouette_curve.csv",
    "report_pattern_shares.csv",
    "report_pearson_matrix.csv",
    "report_household_distributions.csv",
    "report_model_comparison.csv",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(out.getvalue())


@dataclass
class _Context:
    """In-memory state shared between stages of one run."""

    config: PipelineConfig
    out_dir: Path
    cohort: list = field(default_factory=list)
    pools: dict = field(default_factory=dict)  # day_class -> ProfilePool
    pattern_sets: dict = field(default_factory=dict)  # day_class -> PatternSet
    targets: dict = field(default_factory=dict)  # day_class -> (n_cohort, K) matrix
    subsets: dict = field(default_factory=dict)  # day_class -> list of index tuples
    splits: dict = field(default_factory=dict)  # day_class -> SplitIndices
    best_hyper: dict = field(default_factory=dict)


def _stage_ingest(ctx: _Context) -> None:
    cfg = ctx.config
    with open(cfg.meter_csv, "r", encoding="utf-8") as fh:
        series = ig.parse_meter(fh)
    with open(cfg.survey_csv, "r", encoding="utf-8") as fh:
        records = ig.parse_survey(fh)
    cohort, weekday_pool, weekend_pool, report = ig.build_cohort(series, records)
    if not cohort:
        raise ValueError("joined cohort is empty: no household has both data kinds")
    ctx.cohort = cohort
    ctx.pools = {ig.WEEKDAY: weekday_pool, ig.WEEKEND: weekend_pool}
    _write_json(ctx.out_dir / "ingest_report.json", report.to_dict())


def _stage_cluster(ctx: _Context) -> None:
    cfg = ctx.config
    for class_idx, day_class in enumerate(ig.DAY_CLASSES):
        pool = ctx.pools[day_class]
        values = pool.values
        if cfg.max_profiles_per_class and len(pool) > cfg.max_profiles_per_class:
            rng = np.random.default_rng([cfg.seed, class_idx, 1])
            keep = np.sort(
                rng.choice(len(pool), size=cfg.max_profiles_per_class, replace=False)
            )
            values = pool.values[keep]

        lo, hi = cfg.k_range
        hi = min(hi, values.shape[0] - 1)
        if hi < lo:
            raise ValueError(
                f"{day_class}: only {values.shape[0]} profiles, cannot scan K>= {lo}"
            )
        selection = cl.select_k(
            values,
            k_range=(lo, hi),
            n_restarts=cfg.restarts,
            max_iter=cfg.max_iter,
            random_state=cfg.seed,
            memory_budget_mb=cfg.memory_budget_mb,
        )
        best = selection.fits[selection.best_k]
        # Label every pooled profile, not just the clustering subsample.
        full_assignments = best.predict(pool.values)
        ctx.pattern_sets[day_class] = cl.PatternSet.from_estimator(
            best, day_class, assignments=full_assignments
        )
        _write_json(
            ctx.out_dir / f"patterns_{day_class}.json",
            ctx.pattern_sets[day_class].to_dict(),
        )
        _write_csv(
            ctx.out_dir / f"silhouette_curve_{day_class}.csv",
            ["K", "mean_SC"],
            [[k, _fmt(sc)] for k, sc in selection.curve],
        )


def _stage_distributions(ctx: _Context) -> None:
    cohort_ids = [r.household_id for r in ctx.cohort]
    for day_class in ig.DAY_CLASSES:
        pool = ctx.pools[day_class]
        pattern_set = ctx.pattern_sets[day_class]
        dists = cl.pattern_distributions(
            pattern_set.assignments, pool.household_ids, pattern_set.k, day_class
        )
        by_household = {d.household_id: d for d in dists}
        matrix = np.vstack([by_household[h].probs for h in cohort_ids])
        ctx.targets[day_class] = matrix
        _write_csv(
            ctx.out_dir / f"distributions_{day_class}.csv",
            ["household_id"] + [f"G{k + 1}" for k in range(pattern_set.k)],
            [[h] + [_fmt(p) for p in matrix[i]] for i, h in enumerate(cohort_ids)],
        )


def _feature_columns(ctx: _Context) -> list[fs.FeatureColumn]:
    matrix = ig.feature_matrix(ctx.cohort)
    return [
        fs.FeatureColumn(
            name=name,
            values=matrix[:, j],
            kind=fs.CONTINUOUS if name in ig.CONTINUOUS_FEATURES else fs.DISCRETE,
        )
        for j, name in enumerate(ig.FEATURE_NAMES)
    ]


def _stage_featsel(ctx: _Context) -> None:
    cfg = ctx.config
    columns = _feature_columns(ctx)
    selected_json = {}
    for day_class in ig.DAY_CLASSES:
        targets = ctx.targets[day_class]
        subsets = []
        for k in range(targets.shape[1]):
            result = fs.select_subset(
                columns,
                targets[:, k],
                pattern_id=f"{day_class}/G{k + 1}",
                bins=cfg.bins,
            )
            subsets.append(
                tuple(ig.FEATURE_NAMES.index(name) for name in result.members)
            )
            selected_json[result.pattern_id] = result.to_dict()
        ctx.subsets[day_class] = subsets
    _write_json(ctx.out_dir / "selected_subsets.json", selected_json)

    pearson_columns = [c.values for c in columns]
    names = list(ig.FEATURE_NAMES)
    for day_class in ig.DAY_CLASSES:
        targets = ctx.targets[day_class]
        for k in range(targets.shape[1]):
            pearson_columns.append(targets[:, k])
            names.append(f"{day_class}_G{k + 1}")
    matrix = fs.pearson_matrix(pearson_columns, names)
    (ctx.out_dir / "pearson_matrix.csv").write_text(matrix.to_csv())


def _stage_train(ctx: _Context) -> None:
    cfg = ctx.config
    X = ig.feature_matrix(ctx.cohort)
    for class_idx, day_class in enumerate(ig.DAY_CLASSES):
        Y = ctx.targets[day_class]
        split = nn.split_dataset(X.shape[0], cfg.split, seed=cfg.seed + class_idx)
        ctx.splits[day_class] = split
        result = nn.grid_search(
            X[split.train],
            Y[split.train],
            X[split.val],
            Y[split.val],
            layer_counts=cfg.grid.layers,
            widths=cfg.grid.widths,
            learning_rates=cfg.grid.learning_rates,
            feature_subsets=ctx.subsets[day_class],
            batch_size=cfg.train.batch_size,
            max_epochs=cfg.train.max_epochs,
            patience=cfg.train.patience,
            random_state=cfg.seed,
            coupling=cfg.train.coupling,
        )
        ctx.best_hyper[day_class] = result.best
        _write_csv(
            ctx.out_dir / f"grid_search_{day_class}.csv",
            ["hidden_layers", "width", "learning_rate", "val_loss"],
            [
                [c["hidden_layers"], c["width"], _fmt(c["learning_rate"]), _fmt(c["val_loss"])]
                for c in result.table
            ],
        )
        _write_csv(
            ctx.out_dir / f"training_log_{day_class}.csv",
            ["epoch", "train_loss", "val_loss"],
            [
                [e, _fmt(tr), "" if va is None else _fmt(va)]
                for e, tr, va in result.best_model.history_
            ],
        )
        _write_json(
            ctx.out_dir / f"model_{day_class}.json",
            result.best_model.to_checkpoint(feature_names=list(ig.FEATURE_NAMES)),
        )


def _stage_baselines(ctx: _Context) -> None:
    cfg = ctx.config
    X = ig.feature_matrix(ctx.cohort)
    cohort_ids = [r.household_id for r in ctx.cohort]
    comparison_rows = []
    prediction_rows = {dc: [] for dc in ig.DAY_CLASSES}
    for day_class in ig.DAY_CLASSES:
        Y = ctx.targets[day_class]
        split = ctx.splits[day_class]
        hyper = ctx.best_hyper[day_class]
        result = bl.compare_models(
            X,
            Y,
            ctx.subsets[day_class],
            split.train,
            split.val,
            split.test,
            day_class=day_class,
            hidden_layers=hyper["hidden_layers"],
            width=hyper["width"],
            learning_rate=hyper["learning_rate"],
            batch_size=cfg.train.batch_size,
            max_epochs=cfg.train.max_epochs,
            patience=cfg.train.patience,
            random_state=cfg.seed,
            gbt_trees=cfg.gbt.trees,
            gbt_depth=cfg.gbt.depth,
            gbt_shrinkage=cfg.gbt.shrinkage,
            benchmark1_features=cfg.benchmark1_features,
            benchmark2_features=cfg.benchmark2_features,
        )
        comparison_rows.extend(result.rows)

        proposed = result.models[bl.PROPOSED]
        predicted = proposed.predict(X[split.test])
        for row_pos, idx in enumerate(split.test):
            for k in range(Y.shape[1]):
                prediction_rows[day_class].append(
                    [
                        cohort_ids[idx],
                        day_class,
                        f"G{k + 1}",
                        _fmt(Y[idx, k]),
                        _fmt(predicted[row_pos, k]),
                    ]
                )

    benchmark_order = [bl.BENCHMARK_GBT, bl.BENCHMARK_UNIFIED, bl.BENCHMARK_COMPLEMENT]
    _write_csv(
        ctx.out_dir / "comparison.csv",
        ["model", "day_class", "avg_rmse"]
        + [f"reduction_vs_{b}_pct" for b in benchmark_order],
        [
            [row.model, row.day_class, _fmt(row.avg_rmse)]
            + [
                _fmt(row.reductions_pct[b]) if b in row.reductions_pct else ""
                for b in benchmark_order
            ]
            for row in comparison_rows
        ],
    )
    for day_class in ig.DAY_CLASSES:
        _write_csv(
            ctx.out_dir / f"predictions_{day_class}.csv",
            ["household_id", "day_class", "pattern", "true_p", "predicted_p"],
            prediction_rows[day_class],
        )


def _read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path.name}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def emit_report(artifact_dir: str | Path) -> list[Path]:
    """Derive the five report files from a pipeline artifact directory."""
    out_dir = Path(artifact_dir)

    # Silhouette curve, averaged over the two day classes on shared K values.
    curves = {}
    for day_class in ig.DAY_CLASSES:
        _, rows = _read_csv_rows(out_dir / f"silhouette_curve_{day_class}.csv")
        curves[day_class] = {int(r[0]): float(r[1]) for r in rows}
    shared = sorted(set(curves[ig.WEEKDAY]) & set(curves[ig.WEEKEND]))
    _write_csv(
        out_dir / "report_silhouette_curve.csv",
        ["K", "mean_SC"],
        [
            [k, _fmt((curves[ig.WEEKDAY][k] + curves[ig.WEEKEND][k]) / 2.0)]
            for k in shared
        ],
    )

    # Per-pattern share of pooled profiles.
    share_rows = []
    for day_class in ig.DAY_CLASSES:
        path = out_dir / f"patterns_{day_class}.json"
        if not path.exists():
            raise MissingArtifactError(f"missing artifact {path.name}")
        pattern_set = cl.PatternSet.from_dict(json.loads(path.read_text()))
        counts = np.bincount(pattern_set.assignments, minlength=pattern_set.k)
        shares = counts / counts.sum() * 100.0
        for k in range(pattern_set.k):
            share_rows.append([day_class, f"G{k + 1}", _fmt(round(shares[k], 4))])
    _write_csv(
        out_dir / "report_pattern_shares.csv",
        ["day_class", "pattern", "share_pct"],
        share_rows,
    )

    pearson = out_dir / "pearson_matrix.csv"
    if not pearson.exists():
        raise MissingArtifactError("missing artifact pearson_matrix.csv")
    (out_dir / "report_pearson_matrix.csv").write_text(pearson.read_text())

    household_rows = []
    for day_class in ig.DAY_CLASSES:
        _, rows = _read_csv_rows(out_dir / f"predictions_{day_class}.csv")
        household_rows.extend(rows)
    _write_csv(
        out_dir / "report_household_distributions.csv",
        ["household_id", "day_class", "pattern", "true_p", "predicted_p"],
        household_rows,
    )

    header, rows = _read_csv_rows(out_dir / "comparison.csv")
    _write_csv(out_dir / "report_model_comparison.csv", header, rows)

    return [out_dir / name for name in REPORT_FILES]


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "cluster": _stage_cluster,
    "distributions": _stage_distributions,
    "featsel": _stage_featsel,
    "train": _stage_train,
    "baselines": _stage_baselines,
}


def run_pipeline(config: PipelineConfig, stop_stage: str | None = None) -> Path:
    """Run the staged pipeline, returning the artifact directory.

    Raises StageError naming the failed stage; artifacts written before the
    failure stay on disk and the state file records how far the run got.
    """
    config.validate()
    if stop_stage is not None and stop_stage not in STAGES:
        raise ValueError(f"unknown stage {stop_stage!r}, expected one of {STAGES}")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = _Context(config=config, out_dir=out_dir)

    completed: list[str] = []
    state_path = out_dir / "pipeline_state.json"
    for stage in STAGES:
        try:
            if stage == "report":
                emit_report(out_dir)
            else:
                _STAGE_FUNCS[stage](ctx)
        except Exception as exc:
            _write_json(
                state_path,
                {"completed": completed, "failed": {"stage": stage, "error": str(exc)}},
            )
            raise StageError(stage, exc) from exc
        completed.append(stage)
        _write_json(state_path, {"completed": completed, "failed": None})
        if stop_stage == stage:
            break
    return out_dir


def stage_number(stage: str) -> int:
    """1-based stage index used in process exit codes."""
    return STAGES.index(stage) + 1
