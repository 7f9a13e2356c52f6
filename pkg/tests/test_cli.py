import csv
import json

import cv2
import pytest
import yaml

from citetrack.cli import main
from citetrack.eval import generate_synthetic_set, write_results, write_sequence
from citetrack.tracker import load_model

SMALL_MODEL = dict(
    template_size=32, search_size=64, stride=16, d_img=16, d_tok=8, c_text=16,
    channels=8, num_prompts=2, depth=1, num_heads=2,
)


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({
        "synth_count": 1,
        "model": SMALL_MODEL,
        "train": {"iterations": 3, "batch_size": 2, "num_sequences": 2, "frames_per_sequence": 6},
    }))
    return path


@pytest.fixture
def weights(tmp_path, config):
    out = tmp_path / "train"
    assert main(["train-toy", "--config", str(config), "--out", str(out)]) == 0
    return out / "weights.pt"


def test_train_toy_writes_weights_and_curve(tmp_path, config, weights):
    rows = list(csv.DictReader((weights.parent / "loss.csv").open()))
    assert len(rows) == 3
    assert [int(r["iteration"]) for r in rows] == [1, 2, 3]
    model = load_model(weights)
    assert model.cfg.d_img == 16

    again = tmp_path / "again"
    assert main(["train-toy", "--config", str(config), "--out", str(again)]) == 0
    assert (again / "loss.csv").read_text() == (weights.parent / "loss.csv").read_text()


def test_iterations_flag(tmp_path, config):
    out = tmp_path / "t"
    assert main(["train-toy", "--config", str(config), "--iterations", "2", "--out", str(out)]) == 0
    assert len(list(csv.DictReader((out / "loss.csv").open()))) == 2


def test_track_outputs_and_determinism(tmp_path, config, weights):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["track", "--config", str(config), "--weights", str(weights)]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    results = sorted((out1 / "results").glob("*.txt"))
    assert len(results) == 1
    seq = generate_synthetic_set(1, 1000)[0]
    assert results[0].name == f"{seq.name}.txt"
    assert len(results[0].read_text().splitlines()) == len(seq)
    assert results[0].read_text() == (out2 / "results" / results[0].name).read_text()
    log = [json.loads(line) for line in (out1 / "descriptions" / f"{seq.name}.jsonl").open()]
    assert len(log) == len(seq)
    assert set(log[1]["labels"]) == {"classes", "color", "material", "texture"}
    assert sum(log[1]["weights"].values()) == pytest.approx(1.0, abs=1e-6)


def test_track_no_text_flag(tmp_path, config, weights):
    out = tmp_path / "nt"
    assert main(["track", "--config", str(config), "--weights", str(weights), "--no-text", "--no-window",
                 "--out", str(out)]) == 0
    log = [json.loads(line) for line in next((out / "descriptions").glob("*.jsonl")).open()]
    assert "weights" not in log[1]


def test_missing_weights_exit_2(tmp_path, config, capsys):
    code = main(["track", "--config", str(config), "--weights", str(tmp_path / "nope.pt"), "--out", str(tmp_path)])
    assert code == 2
    assert "weights file not found" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  d_img: 33\n")
    assert main(["track", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text("nonsense: 1\n")
    assert main(["track", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["track", "--format", "vot"])
    assert exc.value.code == 2


def test_describe(tmp_path, config, weights, capsys):
    seq = generate_synthetic_set(1, 3)[0]
    image = tmp_path / "frame.png"
    cv2.imwrite(str(image), cv2.cvtColor(seq.frame(0), cv2.COLOR_RGB2BGR))
    b = seq.boxes[0]
    args = ["describe", str(image), "--box", f"{b.x},{b.y},{b.w},{b.h}", "--config", str(config),
            "--weights", str(weights)]
    assert main(args) == 0
    first = capsys.readouterr().out
    lines = first.strip().splitlines()
    assert [ln.split(":")[0] for ln in lines] == ["classes", "color", "material", "texture"]
    for ln in lines:
        p = float(ln.rsplit("(", 1)[1].rstrip(")"))
        assert 0 < p <= 1
    assert main(args) == 0
    assert capsys.readouterr().out == first
    assert main(args[:2] + ["--box", "1,2,3"] + args[4:]) == 2


def test_eval_gt_against_itself(tmp_path, config):
    seq = generate_synthetic_set(1, 1000)[0]
    results = tmp_path / "res"
    write_results(results / f"{seq.name}.txt", seq.boxes)
    out = tmp_path / "ev"
    assert main(["eval", "--config", str(config), "--results", str(results), "--out", str(out)]) == 0
    report = json.loads((out / "report_plain.json").read_text())
    assert report["protocol"] == "plain"
    agg = report["aggregate"]
    assert agg["auc"] == 20 / 21
    assert agg["precision"] == agg["ao"] == agg["sr75"] == 1.0
    assert (out / "plots" / "success.png").is_file()


def test_eval_robustness_reports(tmp_path, config, weights):
    common = ["eval", "--config", str(config), "--weights", str(weights), "--out", str(tmp_path / "r")]
    assert main(common + ["--tre", "--segments", "2"]) == 0
    assert main(common + ["--sre", "scale"]) == 0
    tre = json.loads((tmp_path / "r" / "report_tre.json").read_text())
    sre = json.loads((tmp_path / "r" / "report_sre-scale.json").read_text())
    assert tre["protocol"] == "tre" and "auc_worst" in tre["aggregate"]
    assert sre["protocol"] == "sre-scale"


def test_eval_malformed_results(tmp_path, config, capsys):
    seq = generate_synthetic_set(1, 1000)[0]
    results = tmp_path / "res"
    results.mkdir()
    (results / f"{seq.name}.txt").write_text("1,2,3,4\n5,6,seven,8\n")
    code = main(["eval", "--config", str(config), "--results", str(results), "--out", str(tmp_path / "o")])
    assert code == 3
    assert f"{seq.name}.txt:2" in capsys.readouterr().err


def test_eval_otb_dataset_and_plot(tmp_path, config):
    seq = generate_synthetic_set(1, 7)[0]
    data = tmp_path / "otb"
    write_sequence(seq, data / seq.name, "otb")
    results = tmp_path / "res"
    write_results(results / f"{seq.name}.txt", seq.boxes)
    common = ["--config", str(config), "--dataset", str(data), "--format", "otb", "--results", str(results)]
    assert main(["eval", *common, "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "report_plain.json").read_text())["aggregate"]["ao"] == 1.0
    assert main(["plot", *common, "--every", "20", "--out", str(tmp_path / "p")]) == 0
    frames = sorted((tmp_path / "p" / "plots" / seq.name).glob("*.png"))
    assert len(frames) == 2
    assert (tmp_path / "p" / "plots" / "precision.png").is_file()


def test_missing_dataset_exit_2(tmp_path, config):
    code = main(["eval", "--config", str(config), "--format", "otb", "--dataset", str(tmp_path / "none"),
                 "--results", str(tmp_path)])
    assert code == 2


def test_env_override(tmp_path, config, weights, monkeypatch):
    monkeypatch.setenv("CITETRACK_SYNTH_COUNT", "2")
    out = tmp_path / "env"
    assert main(["track", "--config", str(config), "--weights", str(weights), "--out", str(out)]) == 0
    assert len(list((out / "results").glob("*.txt"))) == 2


def test_writes_only_under_out(tmp_path, config, weights, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "only"
    assert main(["track", "--config", str(config), "--weights", str(weights), "--out", str(out)]) == 0
    assert list(work.iterdir()) == []
    assert {p.name for p in tmp_path.iterdir()} == {"cwd", "run.yaml", "train", "only"}
