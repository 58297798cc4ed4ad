import csv
import json
import numpy as np
import pytest

from loadpatterns.cli import main
from loadpatterns.config import PipelineConfig, parse_grid, parse_k_range
from loadpatterns.errors import ConfigInvalidError, MissingArtifactError, StageError
from loadpatterns.pipeline import REPORT_FILES, STAGES, emit_report, run_pipeline
from loadpatterns.synthgen import GeneratorConfig, default_archetypes, generate


@pytest.fixture(scope="module")
def cohort_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    arch = default_archetypes()
    cohort = generate(
        GeneratorConfig(
            households=24,
            days=28,
            archetypes=[arch[0], arch[3], arch[4]],
            dependence={"age_65p": {0: 1.0}, "education": {1: 1.0}},
            noise=0.02,
            seed=11,
        )
    )
    meter = root / "meter.csv"
    survey = root / "survey.csv"
    meter.write_text(cohort.meter_csv)
    survey.write_text(cohort.survey_csv)
    return meter, survey


def pipeline_config(meter, survey, out_dir, **overrides):
    data = {
        "meter_csv": str(meter),
        "survey_csv": str(survey),
        "out_dir": str(out_dir),
        "seed": 5,
        "k_range": [2, 5],
        "restarts": 4,
        "max_iter": 50,
        "grid": {"layers": [1], "widths": [8], "learning_rates": [0.1]},
        "train": {"batch_size": 16, "max_epochs": 80, "patience": 10},
        "gbt": {"trees": 15, "depth": 2, "shrinkage": 0.1},
    }
    data.update(overrides)
    return PipelineConfig.from_dict(data)


@pytest.fixture(scope="module")
def full_run(cohort_files, tmp_path_factory):
    meter, survey = cohort_files
    out_dir = tmp_path_factory.mktemp("artifacts")
    config = pipeline_config(meter, survey, out_dir)
    run_pipeline(config)
    return out_dir


class TestFullRun:
    def test_every_stage_completes(self, full_run):
        state = json.loads((full_run / "pipeline_state.json").read_text())
        assert state["completed"] == STAGES
        assert state["failed"] is None

    def test_all_report_files_exist_and_parse(self, full_run):
        for name in REPORT_FILES:
            path = full_run / name
            assert path.exists()
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
            assert len(rows) >= 2  # header plus content

    def test_pattern_shares_sum_to_one_hundred(self, full_run):
        with open(full_run / "report_pattern_shares.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        for day_class in ("weekday", "weekend"):
            total = sum(float(r["share_pct"]) for r in rows if r["day_class"] == day_class)
            assert total == pytest.approx(100.0, abs=0.1)

    def test_distribution_rows_sum_to_one(self, full_run):
        with open(full_run / "distributions_weekday.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        for row in rows[1:]:
            assert sum(float(v) for v in row[1:]) == pytest.approx(1.0, abs=1e-9)

    def test_comparison_reductions_recomputable(self, full_run):
        with open(full_run / "report_model_comparison.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        by_key = {(r["model"], r["day_class"]): r for r in rows}
        for day_class in ("weekday", "weekend"):
            base = float(by_key[("benchmark1_gbt", day_class)]["avg_rmse"])
            ours = float(by_key[("proposed", day_class)]["avg_rmse"])
            reported = float(
                by_key[("proposed", day_class)]["reduction_vs_benchmark1_gbt_pct"]
            )
            assert reported == pytest.approx((base - ours) / base * 100.0, abs=1e-9)

    def test_selected_subsets_cover_both_day_classes(self, full_run):
        subsets = json.loads((full_run / "selected_subsets.json").read_text())
        classes = {key.split("/")[0] for key in subsets}
        assert classes == {"weekday", "weekend"}
        for entry in subsets.values():
            assert entry["members"]

    def test_model_checkpoints_reload(self, full_run):
        from loadpatterns.neural import PatternEnsemble

        for day_class in ("weekday", "weekend"):
            data = json.loads((full_run / f"model_{day_class}.json").read_text())
            model = PatternEnsemble.from_checkpoint(data)
            out = model.predict(np.array([[0, 1, 2, 0, 1, 5, 3, 1500.0]]))
            assert out.shape[1] == data["n_patterns"]

    def test_pearson_matrix_has_feature_and_target_columns(self, full_run):
        header = (full_run / "pearson_matrix.csv").read_text().splitlines()[0]
        names = header.split(",")[1:]
        assert "age_65p" in names and "sqft" in names
        assert any(n.startswith("weekday_G") for n in names)
        assert any(n.startswith("weekend_G") for n in names)

    def test_report_command_is_rerunnable(self, full_run):
        files = emit_report(full_run)
        assert all(p.exists() for p in files)


class TestSubsampledClustering:
    def test_all_profiles_labelled_even_when_fit_is_subsampled(
        self, cohort_files, tmp_path
    ):
        meter, survey = cohort_files
        config = pipeline_config(
            meter, survey, tmp_path / "sub", max_profiles_per_class=80
        )
        run_pipeline(config, stop_stage="distributions")
        out = tmp_path / "sub"
        patterns = json.loads((out / "patterns_weekday.json").read_text())
        with open(out / "distributions_weekday.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) - 1 == 24  # every cohort household still gets a row
        # assignments cover the whole pool, not just the 80-profile subsample
        assert len(patterns["assignments"]) > 80


class TestStageGating:
    def test_stop_after_cluster(self, cohort_files, tmp_path):
        meter, survey = cohort_files
        config = pipeline_config(meter, survey, tmp_path / "gated")
        run_pipeline(config, stop_stage="cluster")
        out = tmp_path / "gated"
        assert (out / "patterns_weekday.json").exists()
        assert not (out / "distributions_weekday.csv").exists()
        state = json.loads((out / "pipeline_state.json").read_text())
        assert state["completed"] == ["ingest", "cluster"]

    def test_unknown_stage_rejected(self, cohort_files, tmp_path):
        meter, survey = cohort_files
        config = pipeline_config(meter, survey, tmp_path / "x")
        with pytest.raises(ValueError):
            run_pipeline(config, stop_stage="cleanup")


class TestFailures:
    def test_missing_survey_fails_in_ingest(self, cohort_files, tmp_path):
        meter, _ = cohort_files
        config = pipeline_config(meter, tmp_path / "nope.csv", tmp_path / "out")
        with pytest.raises(StageError) as err:
            run_pipeline(config)
        assert err.value.stage == "ingest"
        state = json.loads((tmp_path / "out" / "pipeline_state.json").read_text())
        assert state["failed"]["stage"] == "ingest"
        assert not (tmp_path / "out" / "patterns_weekday.json").exists()

    def test_report_without_artifacts(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            emit_report(tmp_path)


class TestConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigInvalidError):
            PipelineConfig.from_dict({"meter_csv": "a", "survey_csv": "b", "bogus": 1})

    def test_split_must_sum_to_one(self):
        cfg = PipelineConfig.from_dict(
            {"meter_csv": "a", "survey_csv": "b", "split": [0.5, 0.2, 0.2]}
        )
        with pytest.raises(ConfigInvalidError):
            cfg.validate()

    def test_parse_k_range(self):
        assert parse_k_range("2:10") == (2, 10)
        with pytest.raises(ConfigInvalidError):
            parse_k_range("2-10")

    def test_parse_grid(self):
        grid = parse_grid("2,3:16,64:0.1,0.03")
        assert grid.layers == [2, 3]
        assert grid.widths == [16, 64]
        assert grid.learning_rates == [0.1, 0.03]
        with pytest.raises(ConfigInvalidError):
            parse_grid("2:16")


class TestCli:
    def write_config(self, tmp_path, meter, survey, out_dir):
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps(
                {
                    "meter_csv": str(meter),
                    "survey_csv": str(survey),
                    "out_dir": str(out_dir),
                    "seed": 5,
                    "k_range": [2, 4],
                    "restarts": 3,
                    "grid": {"layers": [1], "widths": [6], "learning_rates": [0.1]},
                    "train": {"batch_size": 16, "max_epochs": 40, "patience": 8},
                    "gbt": {"trees": 8, "depth": 2, "shrinkage": 0.1},
                }
            )
        )
        return path

    def test_run_exits_zero(self, cohort_files, tmp_path, capsys):
        meter, survey = cohort_files
        config = self.write_config(tmp_path, meter, survey, tmp_path / "out")
        assert main(["run", "--config", str(config)]) == 0
        assert (tmp_path / "out" / "report_model_comparison.csv").exists()

    def test_missing_survey_exit_code_names_ingest(self, cohort_files, tmp_path, capsys):
        meter, _ = cohort_files
        config = self.write_config(
            tmp_path, meter, tmp_path / "missing.csv", tmp_path / "out2"
        )
        # ingest is stage 1, so the exit code is 2 + 1
        assert main(["run", "--config", str(config)]) == 3

    def test_stage_flag_stops_early(self, cohort_files, tmp_path, capsys):
        meter, survey = cohort_files
        config = self.write_config(tmp_path, meter, survey, tmp_path / "out3")
        assert main(["run", "--config", str(config), "--stage", "cluster"]) == 0
        assert (tmp_path / "out3" / "patterns_weekend.json").exists()
        assert not (tmp_path / "out3" / "selected_subsets.json").exists()

    def test_bad_config_is_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad)]) == 1

    def test_bad_k_range_flag_is_exit_one(self, cohort_files, tmp_path, capsys):
        meter, survey = cohort_files
        config = self.write_config(tmp_path, meter, survey, tmp_path / "out4")
        assert main(["run", "--config", str(config), "--k-range", "oops"]) == 1

    def test_report_subcommand_on_empty_dir(self, tmp_path, capsys):
        assert main(["report", "--artifacts", str(tmp_path)]) == 9

    def test_generate_subcommand(self, tmp_path, capsys):
        gen_cfg = tmp_path / "gen.json"
        arch = default_archetypes()
        gen_cfg.write_text(
            json.dumps(
                {
                    "households": 10,
                    "days": 7,
                    "archetypes": [list(arch[0]), list(arch[4])],
                    "dependence": {"age_65p": {"0": 1.0}},
                    "noise": 0.01,
                    "seed": 2,
                }
            )
        )
        out = tmp_path / "generated"
        assert main(["generate", "--config", str(gen_cfg), "--out-dir", str(out)]) == 0
        assert (out / "meter.csv").exists()
        assert (out / "survey.csv").exists()
        assert json.loads((out / "ground_truth.json").read_text())["planted_features"]

    def test_generate_rejects_bad_config(self, tmp_path, capsys):
        gen_cfg = tmp_path / "gen_bad.json"
        gen_cfg.write_text(json.dumps({"households": 3}))
        assert (
            main(["generate", "--config", str(gen_cfg), "--out-dir", str(tmp_path / "g")])
            == 1
        )

    def test_grid_override_expands_the_search(self, cohort_files, tmp_path, capsys):
        meter, survey = cohort_files
        config = self.write_config(tmp_path, meter, survey, tmp_path / "g1")
        assert (
            main(
                [
                    "run", "--config", str(config),
                    "--grid", "1:4,8:0.1",
                    "--stage", "train",
                ]
            )
            == 0
        )
        rows = (tmp_path / "g1" / "grid_search_weekday.csv").read_text().splitlines()
        assert len(rows) == 3  # header plus one row per grid cell

    def test_bins_override_is_applied(self, cohort_files, tmp_path, capsys):
        meter, survey = cohort_files
        config = self.write_config(tmp_path, meter, survey, tmp_path / "b1")
        assert (
            main(["run", "--config", str(config), "--bins", "1", "--stage", "ingest"])
            == 1
        )  # bins < 2 is a config error, caught before any stage runs

    def test_seed_override_changes_artifacts(self, cohort_files, tmp_path, capsys):
        meter, survey = cohort_files
        config = self.write_config(tmp_path, meter, survey, tmp_path / "a")
        assert main(["run", "--config", str(config), "--stage", "cluster"]) == 0
        assert (
            main(
                [
                    "run", "--config", str(config),
                    "--out-dir", str(tmp_path / "b"),
                    "--seed", "99",
                    "--stage", "cluster",
                ]
            )
            == 0
        )
        a = (tmp_path / "a" / "patterns_weekday.json").read_text()
        b = (tmp_path / "b" / "patterns_weekday.json").read_text()
        assert json.loads(a)["seed"] != json.loads(b)["seed"]
