import json
from pathlib import Path

import numpy as np
import pytest

from apidrift.cli import EXIT_ALARM, EXIT_ERROR, EXIT_OK, main
from apidrift.demo import demo_drifted, demo_space
from apidrift.manifest import MANIFEST_NAME, validate_manifest
from apidrift.simulate import Distribution, sample_stream


def write_pair_log(path: Path, stream, space):
    lines = []
    for i, cat in enumerate(stream):
        parent, child = space.decode(int(cat))
        lines.append(json.dumps({"ts": i, "api": child, "parent": parent}))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


@pytest.fixture()
def demo_dir(tmp_path):
    out = tmp_path / "demo"
    assert main(["demo", "-o", str(out), "--reps", "20", "--draws", "100"]) == EXIT_OK
    return out


@pytest.fixture()
def baseline_dir(demo_dir, tmp_path):
    out = tmp_path / "base"
    code = main(["baseline", str(demo_dir / "baseline_log.jsonl"), "--mode", "pair",
                 "-o", str(out)])
    assert code == EXIT_OK
    return out


class TestDemoAndBaseline:
    def test_demo_writes_expected_files(self, demo_dir):
        for name in ["space.json", "baseline_counts.json", "drifted_counts.json",
                     "baseline_log.jsonl", "experiment.toml", MANIFEST_NAME]:
            assert (demo_dir / name).exists()
        validate_manifest(json.loads((demo_dir / MANIFEST_NAME).read_text()))

    def test_baseline_reconstructs_counts(self, baseline_dir):
        counts = json.loads((baseline_dir / "baseline_counts.json").read_text())
        assert sum(counts["counts"]) == 89
        matrix = (baseline_dir / "baseline_matrix.csv").read_text().splitlines()
        header = matrix[0].split(",")
        row = next(l for l in matrix if l.startswith("frontend,")).split(",")
        assert row[header.index("productcatalogservice")] == "38"

    def test_empty_log_is_an_error(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code = main(["baseline", str(empty), "-o", str(tmp_path / "out")])
        assert code == EXIT_ERROR

    def test_bad_mode_is_usage_error(self, tmp_path):
        log = tmp_path / "log.jsonl"
        log.write_text('{"ts":1,"api":"a"}\n')
        with pytest.raises(SystemExit) as exc:
            main(["baseline", str(log), "--mode", "triple", "-o", str(tmp_path / "o")])
        assert exc.value.code == EXIT_ERROR


class TestMonitor:
    def drifted_log(self, tmp_path, n=600, seed=99):
        space = demo_space()
        dist = Distribution.from_frequency(demo_drifted(space))
        stream = sample_stream(dist, n, seed=seed)
        log = tmp_path / "live.jsonl"
        write_pair_log(log, stream, space)
        return log

    def test_drifted_stream_alarms_with_exit_2(self, baseline_dir, tmp_path):
        log = self.drifted_log(tmp_path)
        out = tmp_path / "run"
        code = main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(out)])
        assert code == EXIT_ALARM
        alarms = json.loads((out / "alarms.json").read_text())
        assert alarms["alarms"]
        assert alarms["stopped_at_alarm"]
        for record in alarms["alarms"]:
            assert record["log_bf"] > -np.log(record["fp_level"])
        assert (out / "trajectory.csv").exists()
        assert (out / "attribution.json").exists()
        assert (out / "delta_grid.csv").exists()
        assert (out / "parent_scores.csv").exists()
        validate_manifest(json.loads((out / MANIFEST_NAME).read_text()))

    def test_continue_runs_to_stream_end(self, baseline_dir, tmp_path):
        log = self.drifted_log(tmp_path, n=500)
        out = tmp_path / "run_cont"
        code = main(["monitor", str(log), "--baseline", str(baseline_dir),
                     "-o", str(out), "--continue"])
        assert code == EXIT_ALARM
        rows = (out / "trajectory.csv").read_text().splitlines()
        assert len(rows) - 1 == 500
        assert not json.loads((out / "alarms.json").read_text())["stopped_at_alarm"]

    def test_empty_stream_exits_zero(self, baseline_dir, tmp_path):
        log = tmp_path / "empty.jsonl"
        log.write_text("")
        out = tmp_path / "run_empty"
        code = main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(out)])
        assert code == EXIT_OK
        assert (out / "trajectory.csv").read_text().splitlines() == [
            "t,category,log_psi,log_bf"
        ]

    def test_unknown_api_label_is_an_error(self, baseline_dir, tmp_path, capsys):
        log = tmp_path / "unknown.jsonl"
        log.write_text('{"ts":1,"api":"impostorservice","parent":"frontend"}\n')
        out = tmp_path / "run_unknown"
        code = main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(out)])
        assert code == EXIT_ERROR
        assert "impostorservice" in capsys.readouterr().err

    def test_baseline_sampled_stream_stays_quiet(self, baseline_dir, demo_dir, tmp_path):
        space = demo_space()
        from apidrift.ingest import FrequencyTable

        table = FrequencyTable.from_json((demo_dir / "baseline_counts.json").read_text())
        stream = sample_stream(Distribution.from_frequency(table), 200, seed=4)
        log = tmp_path / "calm.jsonl"
        write_pair_log(log, stream, space)
        out = tmp_path / "run_calm"
        code = main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(out)])
        assert code == EXIT_OK

    def test_chi2_flag_adds_trajectory(self, baseline_dir, tmp_path):
        log = self.drifted_log(tmp_path, n=200)
        out = tmp_path / "run_chi2"
        main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(out),
              "--chi2", "--continue"])
        lines = (out / "chi2_trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,statistic,p_value"
        assert len(lines) == 201


class TestAttribute:
    def make_run(self, baseline_dir, tmp_path) -> Path:
        space = demo_space()
        dist = Distribution.from_frequency(demo_drifted(space))
        log = tmp_path / "live.jsonl"
        write_pair_log(log, sample_stream(dist, 400, seed=12), space)
        out = tmp_path / "run"
        main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(out),
              "--continue"])
        return out

    def test_attribute_writes_reports(self, baseline_dir, tmp_path, capsys):
        run = self.make_run(baseline_dir, tmp_path)
        code = main(["attribute", str(run), "-k", "3", "--metric", "rho"])
        assert code == EXIT_OK
        report = json.loads((run / "attribution.json").read_text())
        assert report["metric"] == "rho"
        assert len(report["top"]) == 3
        for name in ["delta_grid.csv", "rho_grid.csv", "parent_scores.csv",
                     "child_scores.csv"]:
            assert (run / name).exists()

    def test_k_zero_is_an_error(self, baseline_dir, tmp_path):
        run = self.make_run(baseline_dir, tmp_path)
        assert main(["attribute", str(run), "-k", "0"]) == EXIT_ERROR

    def test_missing_history_mentions_rerun(self, baseline_dir, tmp_path, capsys):
        run = self.make_run(baseline_dir, tmp_path)
        (run / "trajectory.csv").unlink()
        code = main(["attribute", str(run)])
        assert code == EXIT_ERROR
        assert "--history on" in capsys.readouterr().err


class TestSimulate:
    def run_simulate(self, demo_dir, out, extra=()):
        args = ["simulate", "-c", str(demo_dir / "experiment.toml"), "-o", str(out)]
        return main(args + list(extra))

    def read_outputs(self, out: Path) -> dict:
        return {
            p.name: p.read_bytes()
            for p in sorted(out.iterdir())
            if p.is_file() and p.name != MANIFEST_NAME
        }

    def test_experiment_outputs(self, demo_dir, tmp_path):
        out = tmp_path / "sim"
        assert self.run_simulate(demo_dir, out) == EXIT_OK
        rates = (out / "detection_rates.csv").read_text().splitlines()
        assert rates[0] == "pi,fp_0.1,fp_0.05,fp_0.01"
        assert len(rates) == 7
        assert (out / "first_crossing.csv").exists()
        validate_manifest(json.loads((out / MANIFEST_NAME).read_text()))

    def test_byte_identical_across_runs_and_jobs(self, demo_dir, tmp_path):
        outs = [tmp_path / f"sim{i}" for i in range(3)]
        self.run_simulate(demo_dir, outs[0], ["--jobs", "1"])
        self.run_simulate(demo_dir, outs[1], ["--jobs", "1"])
        self.run_simulate(demo_dir, outs[2], ["--jobs", "8"])
        first = self.read_outputs(outs[0])
        assert self.read_outputs(outs[1]) == first
        assert self.read_outputs(outs[2]) == first

    def test_chi2_and_trajectories_flags(self, demo_dir, tmp_path):
        out = tmp_path / "sim_flags"
        self.run_simulate(demo_dir, out, ["--chi2", "--trajectories"])
        assert (out / "chi2_rates.csv").exists()
        assert (out / "trajectories_pi0.csv").exists()
        assert (out / "trajectories_pi1.csv").exists()

    def test_json_config_variant(self, demo_dir, tmp_path):
        config = {
            "experiment": {
                "baseline": "baseline_counts.json",
                "alternate": "drifted_counts.json",
                "pi_values": [0.0, 0.3],
                "reps": 5,
                "draws": 50,
                "master_seed": 1,
            }
        }
        cfg_path = demo_dir / "experiment.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "sim_json"
        assert main(["simulate", "-c", str(cfg_path), "-o", str(out)]) == EXIT_OK
        rates = json.loads((out / "detection_rates.json").read_text())
        assert rates["pi_values"] == [0.0, 0.3]


class TestReport:
    def test_simulation_figures(self, demo_dir, tmp_path):
        out = tmp_path / "sim"
        main(["simulate", "-c", str(demo_dir / "experiment.toml"), "-o", str(out),
              "--trajectories"])
        assert main(["report", str(out)]) == EXIT_OK
        figures = out / "figures"
        assert (figures / "detection_rates.png").exists()
        assert list(figures.glob("trajectories_pi*.png"))
        validate_manifest(json.loads((figures / MANIFEST_NAME).read_text()))

    def test_monitor_figures(self, baseline_dir, tmp_path):
        space = demo_space()
        dist = Distribution.from_frequency(demo_drifted(space))
        log = tmp_path / "live.jsonl"
        write_pair_log(log, sample_stream(dist, 400, seed=8), space)
        run = tmp_path / "run"
        main(["monitor", str(log), "--baseline", str(baseline_dir), "-o", str(run)])
        assert main(["report", str(run)]) == EXIT_OK
        figures = run / "figures"
        assert (figures / "trajectory.png").exists()
        assert (figures / "delta_grid.png").exists()
        assert (figures / "parent_scores.png").exists()

    def test_empty_directory_is_an_error(self, tmp_path):
        empty = tmp_path / "nothing"
        empty.mkdir()
        assert main(["report", str(empty)]) == EXIT_ERROR
