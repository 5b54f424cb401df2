import json

import pytest

from almkit import fixtures
from almkit.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main

GSM_QUESTION = fixtures.load_bundle("gsm8k_birds").question


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_solve_rewoo_on_bundled_replay(capsys):
    code, out, err = run_cli(capsys, "solve", "--paradigm", "rewoo",
                             "--replay", "gsm8k_birds", GSM_QUESTION)
    assert code == EXIT_OK
    assert "answer: 20" in out
    assert "steps: 5" in out
    assert "est_cost_per_1k_queries_usd:" in out


def test_solve_direct_with_scripted_backend(capsys, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"scripted_responses": ["Paris"]}))
    code, out, _ = run_cli(capsys, "solve", "--paradigm", "direct",
                           "--config", str(config), "capital of France?")
    assert code == EXIT_OK
    assert "answer: Paris" in out


def test_solve_missing_fixture_is_usage_error(capsys):
    code, out, err = run_cli(capsys, "solve", "--paradigm", "rewoo",
                             "--replay", "/nonexistent/path", "question?")
    assert code == EXIT_USAGE
    assert "fixture" in err.lower()


def test_solve_without_backend_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "solve", "question?")
    assert code == EXIT_USAGE
    assert "--replay" in err


def test_solve_unknown_paradigm(capsys):
    code, _, err = run_cli(capsys, "solve", "--paradigm", "zigzag",
                           "--replay", "gsm8k_birds", GSM_QUESTION)
    assert code == EXIT_USAGE
    assert "zigzag" in err


def test_solve_replay_miss_is_runtime_error(capsys):
    code, _, err = run_cli(capsys, "solve", "--paradigm", "rewoo",
                           "--replay", "gsm8k_birds", "a question never recorded?")
    assert code == EXIT_RUNTIME


def test_solve_record_json_dump(capsys, tmp_path):
    out_file = tmp_path / "record.json"
    code, _, _ = run_cli(capsys, "solve", "--paradigm", "rewoo",
                         "--replay", "gsm8k_birds", "--out", str(out_file), GSM_QUESTION)
    assert code == EXIT_OK
    record = json.loads(out_file.read_text())
    assert record["answer"] == "20"
    assert record["paradigm"] == "rewoo"


def test_bench_two_paradigm_rows(capsys, tmp_path):
    bundle = fixtures.load_bundle("hotpotqa_rocketeer")
    code, out, _ = run_cli(capsys, "bench", str(bundle.path / "tasks.jsonl"),
                           "--replay", "hotpotqa_rocketeer",
                           "--paradigm", "rewoo,react",
                           "--out", str(tmp_path / "bench"))
    assert code == EXIT_OK
    lines = [line for line in out.splitlines() if line.strip()]
    assert lines[0].startswith("Benchmark")
    rewoo_row = next(line for line in lines if " rewoo " in f" {line} ")
    react_row = next(line for line in lines if " react " in f" {line} ")

    report = json.loads((tmp_path / "bench" / "report.json").read_text())
    tokens = {row["paradigm"]: row["avg_tokens"] for row in report}
    assert tokens["rewoo"] < tokens["react"]
    assert (tmp_path / "bench" / "records.jsonl").exists()
    assert (tmp_path / "bench" / "scores.jsonl").exists()


def test_bench_inject_failure_completes(capsys, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "scripted_responses": [
            "Plan: look it up.\n#E1 = Wikipedia[anything]\n\nPlan: check.\n#E2 = Wikipedia[more]",
            "best-effort answer",
        ],
    }))
    dataset = tmp_path / "tasks.jsonl"
    dataset.write_text(json.dumps({"id": "t1", "question": "q?", "answer": "x"}) + "\n")
    code, out, _ = run_cli(capsys, "bench", str(dataset), "--paradigm", "rewoo",
                           "--config", str(config), "--inject-failure", "all",
                           "--tools", "Wikipedia,LLM",
                           "--out", str(tmp_path / "bench"))
    assert code == EXIT_OK
    record = json.loads((tmp_path / "bench" / "records.jsonl").read_text().splitlines()[0])
    assert set(record["evidence"].values()) == {"No evidence found."}


def test_bench_empty_dataset(capsys, tmp_path):
    dataset = tmp_path / "empty.jsonl"
    dataset.write_text("")
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"scripted_responses": ["unused"]}))
    code, out, _ = run_cli(capsys, "bench", str(dataset), "--paradigm", "direct",
                           "--config", str(config), "--out", str(tmp_path / "bench"))
    assert code == EXIT_OK
    report = json.loads((tmp_path / "bench" / "report.json").read_text())
    assert report[0]["n_tasks"] == 0


def test_bench_byte_deterministic_across_runs(capsys, tmp_path):
    bundle = fixtures.load_bundle("gsm8k_birds")
    outputs = []
    for run_dir in ("one", "two"):
        code, out, _ = run_cli(capsys, "bench", str(bundle.path / "tasks.jsonl"),
                               "--replay", "gsm8k_birds", "--paradigm", "rewoo,react",
                               "--out", str(tmp_path / run_dir))
        assert code == EXIT_OK
        outputs.append(out)
    assert outputs[0] == outputs[1]
    for name in ("report.json", "records.jsonl", "scores.jsonl"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_export_instructions_roundtrip(capsys, tmp_path):
    bundle = fixtures.load_bundle("gsm8k_birds")
    code, _, _ = run_cli(capsys, "bench", str(bundle.path / "tasks.jsonl"),
                         "--replay", "gsm8k_birds", "--paradigm", "rewoo",
                         "--out", str(tmp_path / "bench"))
    assert code == EXIT_OK
    out_file = tmp_path / "instructions.jsonl"
    code, out, _ = run_cli(capsys, "export-instructions",
                           str(tmp_path / "bench" / "records.jsonl"),
                           str(tmp_path / "bench" / "scores.jsonl"),
                           "--replay", "gsm8k_birds",
                           "--out", str(out_file))
    assert code == EXIT_OK
    rows = [json.loads(line) for line in out_file.read_text().splitlines()]
    assert len(rows) == 1  # the replayed answer matches gold
    assert rows[0]["input"] == GSM_QUESTION
    assert rows[0]["output"].startswith("Plan:")


def test_export_instructions_filters_three_to_two(capsys, tmp_path):
    from almkit.engine import run_rewoo
    from almkit.evaluation import score_record
    from conftest import make_runtime, make_task

    records_path = tmp_path / "records.jsonl"
    scores_path = tmp_path / "scores.jsonl"
    with open(records_path, "w") as rec_fh, open(scores_path, "w") as score_fh:
        for i, answer in enumerate(["good", "bad", "good"]):
            rt = make_runtime([f"Plan: item {i}.\n#E1 = Calculator[{i} + 1]", answer],
                              toolset=("Calculator",))
            record = run_rewoo(make_task(f"q {i}?", toolset=("Calculator",),
                                         task_id=f"t{i}"), rt)
            score = score_record(record, "good", record.question)
            rec_fh.write(json.dumps(record.to_dict()) + "\n")
            score_fh.write(json.dumps(score.to_dict()) + "\n")

    out_file = tmp_path / "instructions.jsonl"
    code, out, _ = run_cli(capsys, "export-instructions", str(records_path),
                           str(scores_path), "--tools", "Calculator",
                           "--out", str(out_file))
    assert code == EXIT_OK
    assert len(out_file.read_text().splitlines()) == 2


def test_export_instructions_malformed_records(capsys, tmp_path):
    bad = tmp_path / "records.jsonl"
    bad.write_text('{"not": "a record"}\n')
    scores = tmp_path / "scores.jsonl"
    scores.write_text("")
    code, _, err = run_cli(capsys, "export-instructions", str(bad), str(scores),
                           "--out", str(tmp_path / "out.jsonl"))
    assert code == EXIT_USAGE
    assert "malformed" in err


def test_export_instructions_requires_out(capsys, tmp_path):
    empty = tmp_path / "x.jsonl"
    empty.write_text("")
    code, _, err = run_cli(capsys, "export-instructions", str(empty), str(empty))
    assert code == EXIT_USAGE


def test_fixtures_list_and_copy(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "fixtures", "list")
    assert code == EXIT_OK
    assert "gsm8k_birds" in out
    assert "hotpotqa_rocketeer" in out

    code, out, _ = run_cli(capsys, "fixtures", "copy", "gsm8k_birds", str(tmp_path))
    assert code == EXIT_OK
    copied = tmp_path / "gsm8k_birds"
    assert (copied / "replay.jsonl").exists()
    code, out, _ = run_cli(capsys, "solve", "--paradigm", "react",
                           "--replay", str(copied), GSM_QUESTION)
    assert code == EXIT_OK
    assert "answer: 20.0 wings" in out


def test_record_then_replay_round_trip(capsys, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"scripted_responses": ["Lisbon"]}))
    record_dir = tmp_path / "recorded"
    code, out, _ = run_cli(capsys, "solve", "--paradigm", "direct",
                           "--config", str(config), "--record", str(record_dir),
                           "capital of Portugal?")
    assert code == EXIT_OK and "answer: Lisbon" in out
    assert (record_dir / "replay.jsonl").exists()

    code, out, _ = run_cli(capsys, "solve", "--paradigm", "direct",
                           "--replay", str(record_dir), "capital of Portugal?")
    assert code == EXIT_OK
    assert "answer: Lisbon" in out


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve"])  # missing question
    assert exc.value.code == EXIT_USAGE
