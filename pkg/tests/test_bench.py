"""Benchmark loading, the scoring rule, and full-run orchestration."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from agora.bench import (
    BenchmarkScore,
    DuplicateId,
    InstanceResult,
    SchemaError,
    build_report,
    evaluate_answer,
    load_benchmark,
    run_benchmark,
)
from agora.gateway import Gateway, HashedEmbedding
from agora.memory import MemoryBank

from fixtures.toy import (
    INSTANCES,
    load_toy_benchmark,
    make_toy_teams,
    toy_debate_config,
    write_benchmark_file,
)


class TestEvaluateAnswer:
    def test_exact_match(self):
        assert evaluate_answer(78.00, 78.00) == "correct"

    def test_failure_is_failed(self):
        assert evaluate_answer(None, 10.0) == "failed"

    def test_zero_ground_truth_absolute_rule(self):
        assert evaluate_answer(0.0009, 0.0) == "correct"
        assert evaluate_answer(0.0011, 0.0) == "incorrect"
        assert evaluate_answer(0.001, 0.0) == "correct"  # boundary inclusive

    def test_relative_rule_boundaries(self):
        assert evaluate_answer(105.0, 100.0) == "correct"  # exactly 5%, inclusive
        assert evaluate_answer(106.0, 100.0) == "incorrect"
        assert evaluate_answer(95.0, 100.0) == "correct"

    def test_negative_ground_truth(self):
        assert evaluate_answer(-104.9, -100.0) == "correct"
        assert evaluate_answer(-106.0, -100.0) == "incorrect"

    @given(
        pred=st.floats(-1e6, 1e6, allow_nan=False),
        gt=st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: abs(v) > 1e-9),
        scale=st.floats(0.1, 10.0),
    )
    def test_verdict_depends_only_on_relative_error(self, pred, gt, scale):
        # Scaling both values leaves the relative error (hence the verdict)
        # unchanged, up to float rounding away from the 5% boundary.
        rel = abs(pred - gt) / abs(gt)
        if abs(rel - 0.05) < 1e-9:
            return
        assert evaluate_answer(pred, gt) == evaluate_answer(pred * scale, gt * scale)


class TestLoadBenchmark:
    def test_well_formed(self, tmp_path):
        benchmark = load_benchmark(write_benchmark_file(tmp_path / "toy.jsonl"))
        assert len(benchmark.instances) == 10
        assert benchmark.instances[0].id == "p0"
        assert benchmark.instances[0].benchmark == "alpha"

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        row = {"id": "x", "description": "d", "ground_truth": 1.0}
        path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
        with pytest.raises(DuplicateId) as exc_info:
            load_benchmark(path)
        assert "'x'" in str(exc_info.value)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "description": "d"}\nnot json\n')
        with pytest.raises(SchemaError) as exc_info:
            load_benchmark(path)
        assert ":2:" in str(exc_info.value)

    def test_missing_ground_truth_loads_but_fails_at_run_time(self, tmp_path):
        path = tmp_path / "nogt.jsonl"
        path.write_text('{"id": "a", "description": "some problem"}\n')
        benchmark = load_benchmark(path)  # deferred validation
        assert benchmark.instances[0].ground_truth is None
        teams = make_toy_teams()
        with pytest.raises(SchemaError):
            run_benchmark(benchmark, teams, toy_debate_config())

    def test_missing_benchmark_tag_defaults_to_file_stem(self, tmp_path):
        path = tmp_path / "mystem.jsonl"
        path.write_text('{"id": "a", "description": "d", "ground_truth": 1.0}\n')
        assert load_benchmark(path).instances[0].benchmark == "mystem"


class TestBuildReport:
    def _result(self, id, benchmark, verdict):
        return InstanceResult(
            id=id, benchmark=benchmark, final_objective=1.0, ground_truth=1.0,
            verdict=verdict, debate_verdict="no_debate_needed", rounds_used=0,
            final_team="team_a",
        )

    def test_macro_average_is_unweighted(self):
        # One benchmark at 100% (2/2), another at 50% (1/2): macro is 75
        # even though 3/4 instances are correct.
        results = [
            self._result("a1", "easy", "correct"),
            self._result("a2", "easy", "correct"),
            self._result("b1", "hard", "correct"),
            self._result("b2", "hard", "incorrect"),
        ]
        report = build_report(results)
        assert report.per_benchmark["easy"].accuracy == 100.0
        assert report.per_benchmark["hard"].accuracy == 50.0
        assert report.macro_average == 75.0

    def test_accounting_identity(self):
        results = [
            self._result("a", "b", "correct"),
            self._result("b", "b", "incorrect"),
            self._result("c", "b", "failed"),
        ]
        report = build_report(results)
        score = report.per_benchmark["b"]
        verdicts = [r.verdict for r in report.per_instance]
        assert score.total == len(verdicts) == 3
        assert score.correct == verdicts.count("correct") == 1
        # correct + incorrect + failed account for every instance
        assert (
            verdicts.count("correct") + verdicts.count("incorrect") + verdicts.count("failed")
            == score.total
        )

    def test_json_round_trip(self):
        report = build_report([self._result("a", "b", "correct")])
        from agora.bench import EvaluationReport

        clone = EvaluationReport.from_json(report.to_json())
        assert clone.to_json() == report.to_json()


class TestRunBenchmark:
    def test_toy_run_scores_and_provenance(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        report = run_benchmark(benchmark, make_toy_teams(), toy_debate_config())
        assert report.per_benchmark["alpha"] == BenchmarkScore(correct=5, total=5)
        assert report.per_benchmark["beta"] == BenchmarkScore(correct=2, total=5)
        assert report.macro_average == 70.0

        by_id = {r.id: r for r in report.per_instance}
        assert by_id["p0"].verdict == "correct"
        assert by_id["p7"].verdict == "incorrect"
        assert by_id["p9"].verdict == "failed"
        assert by_id["p9"].debate_verdict == "fallback"
        assert by_id["p9"].rounds_used == 3
        assert by_id["p0"].debate_verdict == "no_debate_needed"
        assert by_id["p0"].rounds_used == 0
        assert by_id["p0"].final_team in ("team_a", "team_b")

    def test_instance_order_is_input_order(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        report = run_benchmark(
            benchmark, make_toy_teams(), toy_debate_config(), parallelism=4
        )
        assert [r.id for r in report.per_instance] == [row["id"] for row in INSTANCES]

    def test_backend_crash_becomes_failed_verdict(self, tmp_path):
        path = tmp_path / "crash.jsonl"
        path.write_text(
            json.dumps({"id": "nomark", "description": "no marker here",
                        "ground_truth": 1.0}) + "\n"
        )
        benchmark = load_benchmark(path)
        # The keyed responder asserts on unmarked prompts; the run must
        # absorb that as a failed instance rather than abort.
        report = run_benchmark(benchmark, make_toy_teams(), toy_debate_config())
        assert report.per_instance[0].verdict == "failed"
        assert report.per_instance[0].debate_verdict is None

    def test_reverify_re_executes_final_code(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        report = run_benchmark(
            benchmark, make_toy_teams(), toy_debate_config(), reverify=True,
            reverify_timeout=15.0,
        )
        assert report.macro_average == 70.0

    def test_parallelism_validation(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        with pytest.raises(ValueError):
            run_benchmark(benchmark, make_toy_teams(), toy_debate_config(), parallelism=0)

    def test_transcripts_exported(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        transcript_dir = tmp_path / "transcripts"
        run_benchmark(
            benchmark, make_toy_teams(), toy_debate_config(),
            transcript_dir=transcript_dir,
        )
        exported = sorted(p.name for p in transcript_dir.glob("*.json"))
        assert exported == [f"p{i}.json" for i in range(10)]
        p9 = json.loads((transcript_dir / "p9.json").read_text())
        assert p9["verdict"] == "fallback"
        assert len(p9["transcript"]) == 6  # 3 rounds x 2 teams


class TestWriteBack:
    def _bank(self):
        gateway = Gateway(backends={}, embedder=HashedEmbedding(16))
        return MemoryBank(gateway, dim=16)

    @pytest.mark.parametrize("mode", ["online", "offline"])
    def test_solution_writes_for_solved_finals(self, tmp_path, mode):
        benchmark = load_toy_benchmark(tmp_path)
        bank = self._bank()
        run_benchmark(
            benchmark, make_toy_teams(), toy_debate_config(), memory=bank,
            write_back=mode,
        )
        # p9 never solves; the nine others produce a verified final answer.
        assert bank.counts()["solution"] == 9
        assert bank.counts()["debate"] == 0  # no toy debate reaches consensus

    def test_disabled_writes_nothing(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        bank = self._bank()
        run_benchmark(
            benchmark, make_toy_teams(), toy_debate_config(), memory=bank,
            write_back="disabled",
        )
        assert bank.counts() == {"solution": 0, "debug": 0, "debate": 0}

    def test_invalid_mode_rejected(self, tmp_path):
        benchmark = load_toy_benchmark(tmp_path)
        with pytest.raises(ValueError):
            run_benchmark(
                benchmark, make_toy_teams(), toy_debate_config(), memory=self._bank(),
                write_back="sometimes",
            )
