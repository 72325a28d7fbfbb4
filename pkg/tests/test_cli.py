import json
import socket

import pytest

from gradsem.cli import EXIT_BACKEND, EXIT_OK, EXIT_STATISTICS, EXIT_VALIDATION, main


def test_church_run(capsys):
    code = main(["church", "run", "--model", "e1", "--condition", "(> (strength 'jack) 50)",
                 "--query", "(strength 'jack)", "--samples", "500", "--seed", "3"])
    assert code == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["n_accepted"] == 500 and out["min"] > 50 and out["seed"] == 3


def test_church_run_file_and_parse_error(tmp_path, capsys):
    model = tmp_path / "m.church"
    model.write_text("(define coin (mem (lambda (k) (flip 0.5))))")
    assert main(["church", "run", "--model", str(model), "--query", "(coin 1)", "--samples", "50"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["n_accepted"] == 50
    assert main(["church", "run", "--model", "e1", "--query", "(strength 'jack", "--samples", "5"]) == EXIT_VALIDATION
    assert main(["church", "run", "--model", "e1", "--query", "(nope 1)", "--samples", "5"]) == EXIT_STATISTICS


def test_rsa_table(capsys, tmp_path):
    assert main(["rsa", "--utterance", "strong"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "theta\tprobability" and len(lines) == 12
    assert abs(sum(float(l.split("\t")[1]) for l in lines[1:]) - 1) < 1e-8
    cfg = tmp_path / "rsa.json"
    cfg.write_text('{"rationality": 0}')
    assert main(["rsa", "--config", str(cfg)]) == EXIT_OK
    probs = [float(l.split("\t")[1]) for l in capsys.readouterr().out.strip().splitlines()[1:]]
    assert all(abs(p - 1 / 11) < 1e-9 for p in probs)
    assert main(["rsa", "--utterance", "weak"]) == EXIT_STATISTICS


def test_run_end_to_end(tmp_path, capsys):
    human = tmp_path / "h.csv"
    assert main(["synth-human", "--experiment", "e1", "--participants", "29", "--out", str(human)]) == EXIT_OK
    out = tmp_path / "out"
    code = main(["run", "--experiment", "e1", "--human", str(human), "--backend", "mock",
                 "--seed", "2", "--permutations", "500", "--out", str(out), "--p-estimator", "add_one"])
    assert code == EXIT_OK
    assert "18 stimuli" in capsys.readouterr().out
    record = json.loads((out / "run_record.json").read_text())
    assert record["config"]["p_value_estimator"] == "add_one" and record["config"]["seed"] == 2


def test_run_validation_errors(tmp_path):
    human = tmp_path / "h.csv"
    human.write_text("participant_id,stimulus_id,estimate\np1,e1_a_control,105\n")
    args = ["run", "--experiment", "e1", "--human", str(human), "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_VALIDATION
    assert main(["run", "--experiment", "e1", "--human", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_run_statistics_error(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"experiment": "E1", "world_model_asset": "tug_of_war_e1.church",
                                    "stimuli": [{"id": "only", "sentence": "Jack is strong."}]}))
    human = tmp_path / "h.csv"
    human.write_text("participant_id,stimulus_id,estimate\np1,only,70\n")
    code = main(["run", "--experiment", "e1", "--manifest", str(manifest), "--human", str(human),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_STATISTICS


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_run_backend_error_writes_partial_record(tmp_path):
    human = tmp_path / "h.csv"
    main(["synth-human", "--experiment", "e1", "--participants", "3", "--out", str(human)])
    cfg = tmp_path / "backend.json"
    cfg.write_text(json.dumps({"retry": {"max_attempts": 2, "base_backoff": 0.0}, "timeout": 2}))
    out = tmp_path / "o"
    code = main(["run", "--experiment", "e1", "--human", str(human), "--backend", "http",
                 "--backend-config", str(cfg), "--endpoint", f"http://127.0.0.1:{free_port()}/v1",
                 "--model-name", "nothing", "--out", str(out)])
    assert code == EXIT_BACKEND
    record = json.loads((out / "run_record.json").read_text())
    assert record["status"] == "aborted" and record["completed_stimuli"] == []


def test_offline_miss_is_backend_error(tmp_path):
    human = tmp_path / "h.csv"
    main(["synth-human", "--experiment", "e2", "--participants", "3", "--out", str(human)])
    code = main(["run", "--experiment", "e2", "--human", str(human), "--backend", "http", "--offline",
                 "--fixtures", str(tmp_path / "none"), "--out", str(tmp_path / "o")])
    assert code == EXIT_BACKEND


def test_bad_subcommand():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
