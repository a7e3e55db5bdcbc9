"""Command-line behavior: exit codes, file outputs, reproducible re-runs."""

import numpy as np
import pytest

from qrank.cli import main
from qrank.data import parse_flat_file, parse_ranking_file
from qrank.metrics import (
    evaluate_run,
    parse_report_kv,
    rank_by_score,
    write_run_file,
)
from qrank.synth import read_ground_truth


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture()
def data_file(tmp_path):
    path = tmp_path / "data.dat"
    code = run_cli("gen", "--out", str(path), "--queries", "30", "--dim", "5",
                   "--seed", "7")
    assert code == 0
    return path


class TestExitCodes:
    def test_unknown_verb_is_usage_error(self, capsys):
        assert run_cli("frobnicate") == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, capsys):
        assert run_cli("split", "--bogus", "x") == 1

    def test_missing_required_flag_is_usage_error(self):
        assert run_cli("gen", "--out", "x.dat") == 1

    def test_help_exits_clean(self, capsys):
        assert run_cli("--help") == 0
        assert "verb" in capsys.readouterr().out

    def test_parse_error_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.dat"
        bad.write_text("1 qid:zzz 1:0.5\n")
        assert run_cli("split", "--in", str(bad)) == 2
        assert "bad qid" in capsys.readouterr().err

    def test_missing_file_exits_two(self, tmp_path):
        assert run_cli("split", "--in", str(tmp_path / "nope.dat")) == 2

    def test_eval_requires_one_score_source(self, data_file, tmp_path):
        assert run_cli("eval", "--in", str(data_file),
                       "--out", str(tmp_path / "r.txt")) == 2

    def test_non_convergence_exits_three_on_request(self, data_file, tmp_path):
        model = tmp_path / "m.model"
        code = run_cli("train", "--in", str(data_file), "--model", str(model),
                       "--c", "15", "--tol", "1e-12", "--max-iters", "1",
                       "--fail-on-no-convergence")
        assert code == 3
        assert model.exists()

    def test_non_convergence_is_soft_by_default(self, data_file, tmp_path):
        code = run_cli("train", "--in", str(data_file),
                       "--model", str(tmp_path / "m.model"),
                       "--c", "15", "--tol", "1e-12", "--max-iters", "1")
        assert code == 0


class TestConfigBlock:
    def test_every_verb_prints_resolved_defaults(self, data_file, capsys):
        capsys.readouterr()
        assert run_cli("split", "--in", str(data_file), "--tail", "8") == 0
        out = capsys.readouterr().out
        assert "[split] effective configuration" in out
        assert f"head-out = {data_file}.head" in out
        assert "seed = 42" in out

    def test_train_block_resolves_budgets(self, data_file, tmp_path, capsys):
        capsys.readouterr()
        assert run_cli("train", "--in", str(data_file),
                       "--model", str(tmp_path / "m.model"), "--desk-scale") == 0
        out = capsys.readouterr().out
        assert "tol = 0.001" in out
        assert "max-iters = 200" in out
        assert "c = 3" in out


class TestConvertAndSplit:
    def test_convert_groups_flat_records(self, tmp_path, data_file):
        flat = tmp_path / "flat.dat"
        grouped = tmp_path / "grouped.dat"
        assert run_cli("gen", "--out", str(flat), "--queries", "3", "--dim", "4",
                       "--format", "flat", "--seed", "5") == 0
        assert len(parse_flat_file(flat)) == 30
        assert run_cli("convert", "--in", str(flat), "--out", str(grouped)) == 0
        ds = parse_ranking_file(grouped)
        assert ds.n_queries == 3
        assert all(len(g.candidates) == 10 for g in ds.groups)

    def test_convert_rejects_ragged_group_count(self, tmp_path):
        flat = tmp_path / "flat.dat"
        flat.write_text("1 1:0.5\n0 1:0.25\n0 1:0.75\n")
        assert run_cli("convert", "--in", str(flat), "--out",
                       str(tmp_path / "g.dat")) == 2

    def test_split_defaults_and_sizes(self, data_file):
        assert run_cli("split", "--in", str(data_file), "--tail", "8") == 0
        head = parse_ranking_file(f"{data_file}.head")
        tail = parse_ranking_file(f"{data_file}.tail")
        assert head.n_queries == 22
        assert tail.n_queries == 8
        assert tail.qids == list(range(23, 31))


class TestTrainPredictEval:
    @pytest.mark.parametrize(
        "flags",
        [
            ("--ranker", "ranksvm", "--c", "15"),
            ("--ranker", "ranksvm", "--kernel", "rbf", "--c", "3"),
            ("--ranker", "rankboost", "--iterations", "10"),
            ("--ranker", "adarank", "--rounds", "20"),
            ("--ranker", "ranknet", "--epochs", "3"),
            ("--ranker", "rforest", "--bags", "2", "--trees", "5"),
        ],
        ids=["svm-linear", "svm-rbf", "rankboost", "adarank", "ranknet", "rforest"],
    )
    def test_each_ranker_trains_predicts_and_evals(self, data_file, tmp_path, flags):
        model = tmp_path / "m.model"
        run = tmp_path / "r.run"
        report = tmp_path / "report.txt"
        assert run_cli("train", "--in", str(data_file), "--model", str(model),
                       "--desk-scale", *flags) == 0
        assert run_cli("predict", "--in", str(data_file), "--model", str(model),
                       "--run", str(run)) == 0
        assert run_cli("eval", "--in", str(data_file), "--run", str(run),
                       "--out", str(report), "--no-figures") == 0
        vals = parse_report_kv(report.read_text())
        assert set(vals) == {"MAP", "MRR", "P@1", "P@5", "ERR@10", "AvgRec"}
        assert all(0.0 <= v <= 1.0 for v in vals.values())

    def test_model_header_records_kernel_and_c(self, data_file, tmp_path):
        model = tmp_path / "m.model"
        assert run_cli("train", "--in", str(data_file), "--model", str(model),
                       "--kernel", "linear", "--c", "15", "--desk-scale") == 0
        assert model.read_text().splitlines()[0] == "ranksvm linear c=15 dim=5"

    def test_cli_eval_matches_library_evaluation(self, data_file, tmp_path):
        model = tmp_path / "m.model"
        run = tmp_path / "r.run"
        report = tmp_path / "report.txt"
        run_cli("train", "--in", str(data_file), "--model", str(model),
                "--c", "15", "--desk-scale")
        run_cli("predict", "--in", str(data_file), "--model", str(model),
                "--run", str(run))
        run_cli("eval", "--in", str(data_file), "--run", str(run),
                "--out", str(report), "--no-figures")
        from qrank.modelio import load_model

        ds = parse_ranking_file(data_file)
        scores = load_model(model).score_matrix(ds.matrix())
        expected = evaluate_run(ds, scores).aggregate.as_dict()
        assert parse_report_kv(report.read_text()) == expected

    def test_eval_on_perfect_run_reports_map_one(self, data_file, tmp_path):
        ds = parse_ranking_file(data_file)
        truth = read_ground_truth(f"{data_file}.truth")
        scores = truth.score_matrix(ds.matrix())
        rls = [rank_by_score(g, s) for g, s in zip(ds.groups, ds.split_scores(scores))]
        run = tmp_path / "perfect.run"
        write_run_file(rls, run)
        report = tmp_path / "report.txt"
        assert run_cli("eval", "--in", str(data_file), "--run", str(run),
                       "--out", str(report), "--no-figures") == 0
        assert parse_report_kv(report.read_text())["MAP"] == 1.0

    def test_eval_renders_figure_beside_report(self, data_file, tmp_path):
        model = tmp_path / "m.model"
        run = tmp_path / "r.run"
        report = tmp_path / "report.txt"
        run_cli("train", "--in", str(data_file), "--model", str(model),
                "--desk-scale")
        run_cli("predict", "--in", str(data_file), "--model", str(model),
                "--run", str(run))
        assert run_cli("eval", "--in", str(data_file), "--run", str(run),
                       "--out", str(report)) == 0
        figure = tmp_path / "report.png"
        assert figure.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_predict_rejects_dim_mismatch(self, data_file, tmp_path):
        model = tmp_path / "m.model"
        other = tmp_path / "other.dat"
        run_cli("train", "--in", str(data_file), "--model", str(model),
                "--desk-scale")
        run_cli("gen", "--out", str(other), "--queries", "4", "--dim", "3")
        assert run_cli("predict", "--in", str(other), "--model", str(model),
                       "--run", str(tmp_path / "r.run")) == 2


class TestTune:
    def test_fine_phase_writes_trace_and_figure(self, tmp_path):
        data = tmp_path / "d.dat"
        out_dir = tmp_path / "tune"
        run_cli("gen", "--out", str(data), "--queries", "14", "--dim", "3",
                "--seed", "3")
        assert run_cli("tune", "--in", str(data), "--tail", "4",
                       "--phase", "fine", "--out-dir", str(out_dir)) == 0
        lines = (out_dir / "fine.csv").read_text().splitlines()
        assert lines[0] == "c,map,mrr,p1,p5"
        assert len(lines) == 10
        assert (out_dir / "fine.png").exists()

    def test_no_figures_skips_png(self, tmp_path, capsys):
        data = tmp_path / "d.dat"
        out_dir = tmp_path / "tune"
        run_cli("gen", "--out", str(data), "--queries", "14", "--dim", "3",
                "--seed", "3")
        capsys.readouterr()
        assert run_cli("tune", "--in", str(data), "--tail", "4",
                       "--phase", "fine", "--out-dir", str(out_dir),
                       "--no-figures") == 0
        assert not (out_dir / "fine.png").exists()
        assert "best fine c:" in capsys.readouterr().out


class TestDeterminism:
    def test_rerun_reproduces_every_output_byte(self, tmp_path):
        outputs = {}
        for attempt in ("a", "b"):
            base = tmp_path / attempt
            base.mkdir()
            data = base / "data.dat"
            model = base / "m.model"
            run = base / "r.run"
            report = base / "report.txt"
            assert run_cli("gen", "--out", str(data), "--queries", "12",
                           "--dim", "4", "--seed", "11") == 0
            assert run_cli("train", "--in", str(data), "--model", str(model),
                           "--ranker", "rforest", "--bags", "2", "--trees", "4",
                           "--seed", "11") == 0
            assert run_cli("predict", "--in", str(data), "--model", str(model),
                           "--run", str(run)) == 0
            assert run_cli("eval", "--in", str(data), "--run", str(run),
                           "--out", str(report)) == 0
            outputs[attempt] = {
                p.name: p.read_bytes() for p in sorted(base.iterdir())
            }
        assert outputs["a"] == outputs["b"]
