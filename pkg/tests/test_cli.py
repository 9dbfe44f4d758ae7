import json

import pytest

from trldrive.cli import EXIT_CONFIG, EXIT_FORMAT, EXIT_IO, EXIT_OK, main

SMALL = "agent.hidden = 16\nagent.stream_hidden = 8\nagent.batch_size = 8\n"


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "small.txt"
    path.write_text(SMALL)
    return str(path)


def train(tmp_path, conf, name="run", task="right", extra=()):
    out = tmp_path / name
    code = main(["train", "--task", task, "--episodes", "2", "--seed", "1", "--config", conf,
                 "--out", str(out), *extra])
    assert code == EXIT_OK
    return out


def test_train_and_evaluate(tmp_path, conf, capsys):
    out = train(tmp_path, conf)
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["episodes"] == 2
    assert main(["evaluate", "--model", str(out / "model.trlq"), "--task", "right", "--episodes", "2",
                 "--out", str(out)]) == EXIT_OK
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["episodes"] == 2
    assert json.loads((out / "evaluation.json").read_text()) == line


def test_transfer_train_and_report(tmp_path, conf, capsys):
    expert = train(tmp_path, conf, "expert")
    out = tmp_path / "tr"
    assert main(["transfer-train", "--expert", str(expert / "model.trlq"), "--task", "straight",
                 "--episodes", "2", "--config", conf, "--beta0", "0.5", "--ttran", "20",
                 "--out", str(out)]) == EXIT_OK
    assert main(["report", str(out), "--window", "1"]) == EXIT_OK
    assert (out / "return_curve.csv").exists()


def test_cross_eval(tmp_path, conf, capsys):
    left = train(tmp_path, conf, "left", task="left")
    out = tmp_path / "x"
    assert main(["cross-eval", "--expert", f"left={left / 'model.trlq'}", "--targets", "left,right",
                 "--episodes", "2", "--config", conf, "--out", str(out)]) == EXIT_OK
    rows = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()[-2:]]
    assert {r["target_task"] for r in rows} == {"left", "right"}
    assert (out / "heatmap.csv").exists()


@pytest.mark.parametrize("argv", [
    ["train", "--episodes", "0", "--out", "{tmp}/a"],
    ["train", "--config", "{tmp}/bad.txt", "--out", "{tmp}/a"],
    ["transfer-train", "--expert", "x.trlq", "--ttran", "0", "--out", "{tmp}/a"],
    ["cross-eval", "--expert", "nowhere", "--out", "{tmp}/a"],
    ["report"],
])
def test_config_errors(tmp_path, argv):
    (tmp_path / "bad.txt").write_text("run.episodes = many\n")
    assert main([a.format(tmp=tmp_path) for a in argv]) == EXIT_CONFIG


def test_io_errors(tmp_path):
    assert main(["evaluate", "--model", str(tmp_path / "missing.trlq")]) == EXIT_IO
    assert main(["train", "--config", str(tmp_path / "missing.txt")]) == EXIT_IO
    assert main(["report", str(tmp_path)]) == EXIT_IO


def test_format_errors(tmp_path, conf):
    junk = tmp_path / "junk.trlq"
    junk.write_bytes(b"garbage")
    assert main(["evaluate", "--model", str(junk)]) == EXIT_FORMAT
    small = train(tmp_path, conf, "small", extra=())
    (tmp_path / "obs3.txt").write_text(SMALL + "env.n_observed = 3\n")
    assert main(["transfer-train", "--expert", str(small / "model.trlq"), "--episodes", "1",
                 "--config", str(tmp_path / "obs3.txt"), "--out", str(tmp_path / "t")]) == EXIT_FORMAT


def test_unknown_flag_exits_via_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 2
