import json

import pytest

from zfp import cli, rulegen

from helpers import kdd_like_rows, write_kdd


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def train(tmp_path, capsys, *extra, name="run"):
    out = tmp_path / name
    code, stdout, _ = run(capsys, "train", "--preset", "separable", "--max-iters", 50,
                          "--out", out, *extra)
    return code, out, stdout


def rows(path):
    return [l.split(",") for l in path.read_text().splitlines() if not l.startswith("#")]


def test_train_separable_preset(tmp_path, capsys):
    code, out, stdout = train(tmp_path, capsys)
    assert code == 0
    table = rows(out / "checkpoints.csv")
    assert table[0] == ["iteration", "TN", "TP", "FN", "FP"]
    assert [r[0] for r in table[1:]] == ["10", "50"]
    assert all(r[4] == "0" for r in table[1:]) and table[-1][3] == "0"
    model = json.loads((out / "model.json").read_text())
    manifest = json.loads((out / "manifest.json").read_text())
    assert model["manifest_digest"] == manifest["digest"]
    assert (out / "checkpoints.csv").read_text().startswith(f"# manifest {manifest['digest']}\n")
    assert model["training_confusion"]["FP"] == 0
    assert len((out / "iterations.jsonl").read_text().splitlines()) > 1
    assert stdout.splitlines()[0] == "TN,TP,FN,FP"


def test_train_zero_iterations(tmp_path, capsys):
    code, out, _ = train(tmp_path, capsys, "--max-iters", 0, "--checkpoints", "0")
    assert code == 0
    table = rows(out / "checkpoints.csv")
    assert table[1][0] == "0" and table[1][4] == "0"


def test_rerun_and_worker_count_are_byte_identical(tmp_path, capsys):
    ds = tmp_path / "d.csv"
    run(capsys, "synth", "--preset", "overlap", "--out", ds)
    outs = []
    for i, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"r{i}"
        code, _, _ = run(capsys, "train", "--dataset", ds, "--max-iters", 60, "--workers", workers,
                         "--checkpoints", "10,50,60", "--seed", 3, "--out", out)
        assert code == 0
        outs.append((out / "checkpoints.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_seed_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ZFP_SEED", "17")
    _, out, _ = train(tmp_path, capsys)
    assert json.loads((out / "manifest.json").read_text())["seed"] == 17
    monkeypatch.setenv("ZFP_SEED", "x")
    code, _, err = run(capsys, "train", "--preset", "separable", "--out", tmp_path / "y")
    assert code == 2 and "ZFP_SEED" in err


def test_eval_and_rules(tmp_path, capsys):
    _, out, _ = train(tmp_path, capsys)
    code, stdout, _ = run(capsys, "eval", "--model", out / "model.json", "--preset", "separable")
    assert code == 0 and stdout.splitlines()[1].endswith(",0")
    code, stdout, _ = run(capsys, "rules", "--model", out / "model.json")
    assert code == 0 and stdout.startswith("IF ") and stdout.endswith("# otherwise ALLOW\n")
    rules = tmp_path / "rules.txt"
    code, _, _ = run(capsys, "rules", "--model", out / "model.json", "--format", "machine",
                     "--out", rules)
    assert code == 0
    text = rules.read_text()
    assert text.splitlines()[1].startswith("# manifest ")
    code, stdout, _ = run(capsys, "parse", rules)
    assert code == 0
    assert rulegen.parse(stdout).rules == rulegen.parse(text).rules


def test_eval_all_negative_model(tmp_path, capsys):
    data = tmp_path / "clash.csv"
    data.write_text("x,label\n0,normal\n0,attack\n1,normal\n1,attack\n")
    out = tmp_path / "m"
    code, _, _ = run(capsys, "removal", "--dataset", data, "--out", out)
    assert code == 0
    code, stdout, _ = run(capsys, "eval", "--model", out / "model.json", "--dataset", data)
    assert code == 0 and stdout.splitlines()[1] == "2,0,2,0"
    rules = tmp_path / "r.txt"
    run(capsys, "rules", "--model", out / "model.json", "--format", "machine", "--out", rules)
    assert [l for l in rules.read_text().splitlines() if not l.startswith("#")] == []


def test_corrupted_model(tmp_path, capsys):
    _, out, _ = train(tmp_path, capsys)
    model = out / "model.json"
    model.write_text(model.read_text()[:-40])
    code, _, err = run(capsys, "eval", "--model", model, "--preset", "separable")
    assert code == 2 and "cannot read model" in err


def test_dimension_mismatch(tmp_path, capsys):
    _, out, _ = train(tmp_path, capsys)
    data = tmp_path / "one.csv"
    data.write_text("x,label\n0,normal\n")
    code, _, err = run(capsys, "eval", "--model", out / "model.json", "--dataset", data)
    assert code == 2 and "mismatch" in err


def test_missing_dataset(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--dataset", tmp_path / "none.csv", "--out", tmp_path / "o")
    assert code == 2 and "no such file" in err


def test_model_with_false_positives_fails(tmp_path, capsys):
    _, out, _ = train(tmp_path, capsys)
    doc = json.loads((out / "model.json").read_text())
    doc["training_confusion"]["FP"] = 3
    (out / "model.json").write_text(json.dumps(doc))
    code, _, err = run(capsys, "rules", "--model", out / "model.json")
    assert code == 1 and "false positives" in err


def test_parse_rejects_overlap(tmp_path, capsys):
    p = tmp_path / "bad.rules"
    p.write_text(f'{rulegen.MAGIC}\n# digest d\n# default ALLOW\n# features ["x0"]\n'
                 "REJECT x0>=0.0\nREJECT x0>=1.0\n")
    code, _, err = run(capsys, "parse", p)
    assert code == 1 and "overlapping" in err


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--grid", "1:1,10:1,100:1", "--iterations", 4000,
                     "--out", out)
    assert code == 0
    table = rows(out)
    assert table[0] == ["c1", "c2", "TN", "TP", "FN", "FP", "gutter", "objective", "converged"]
    assert len(table) == 4 and any(int(r[5]) > 0 for r in table[1:])
    code, _, _ = run(capsys, "sweep", "--grid", "1")
    assert code == 2


def test_removal_command(tmp_path, capsys):
    out = tmp_path / "rem"
    code, _, _ = run(capsys, "removal", "--preset", "fig2-like", "--max-depth", 3, "--out", out)
    assert code == 0
    trace = rows(out / "trace.csv")
    assert trace[0] == ["round", "J_pre", "J_post", "removed", "r_k", "q_k"]
    assert len(trace) > 1 and trace[1][5] == "nan"
    assert json.loads((out / "model.json").read_text())["training_confusion"]["FP"] == 0


def test_kdd_format_rules_use_feature_names(tmp_path, capsys):
    data = write_kdd(tmp_path / "k.txt", kdd_like_rows(3000, seed=5))
    out = tmp_path / "kdd"
    code, _, _ = run(capsys, "train", "--dataset", data, "--format", "kdd", "--subsample", 1500,
                     "--max-iters", 20, "--checkpoints", "10,20", "--out", out)
    assert code == 0
    code, stdout, _ = run(capsys, "rules", "--model", out / "model.json")
    lines = stdout.splitlines()
    assert code == 0 and lines[0].startswith("IF ") and lines[0].endswith(" then REJECT")
    names = {"count", "same_srv_rate", "protocol_type", "service", "flag", "src_bytes",
             "dst_host_count", "dst_host_srv_count", "srv_count", "serror_rate", "dst_bytes"}
    assert any(n in stdout for n in names)
    code, _, _ = run(capsys, "eval", "--model", out / "model.json", "--dataset", data,
                     "--format", "kdd")
    assert code in (0, 1)


def test_synth_round_trips_through_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run(capsys, "synth", "--preset", "fig2-like", "--out", out)[0] == 0
    from zfp import dataset
    ds = dataset.load_csv(out, "label", ["attack"])
    ref = dataset.synth_constellation(dataset.preset("fig2-like"), 0)
    assert ds.X.tobytes() == ref.X.tobytes() and (ds.y == ref.y).all()
