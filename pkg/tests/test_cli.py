import csv
import json
from pathlib import Path

import numpy as np
import pytest

from ambireg import dpd, experiment
from ambireg.cli import main
from ambireg.config import parse_config
from ambireg.encoder import load_geometry
from ambireg.experiment import ROW_FIELDS, read_dataset
from ambireg.room import write_wav

SMALL = """\
seed: 0
train:
  scenes: 2
  duration: 1.5
test:
  scenes: 1
  seeds: [100, 101]
  duration: 0.6
  lambdas: [0.05, 1.0]
  mixed_lambdas: [0.05, 1.0]
  fractions: [10, 100]
classifier:
  epochs: 3
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.yaml"
    cfg.write_text(SMALL)
    out = root / "out"
    base = ["--config", str(cfg), "--out", str(out)]
    assert main(["generate", *base]) == 0
    for mode in ("uninformed", "informed"):
        assert main(["train", "--mode", mode, *base]) == 0
    models = out / "models"
    args = ["evaluate", "--mode", "informed", "--compare", str(models / "uninformed.txt"), "--no-plots", *base]
    assert main(args) == 0
    return root, cfg, out, base


def test_generate_writes_one_wav_json_pair_per_scene(workspace):
    _, _, out, _ = workspace
    for mode in ("uninformed", "informed"):
        d = out / "data" / f"train_{mode}"
        wavs, metas = sorted(d.glob("*.wav")), sorted(d.glob("*.json"))
        assert len(wavs) == len(metas) == 2
        assert [w.stem for w in wavs] == [m.stem for m in metas]
    assert sorted(p.name for p in (out / "data" / "test").iterdir()) == ["seed_100", "seed_101"]


def test_training_lambdas_follow_mode(workspace):
    _, _, out, _ = workspace
    uni = read_dataset(out / "data" / "train_uninformed")
    inf = read_dataset(out / "data" / "train_informed")
    cfg = parse_config(SMALL)
    assert [r.snr_db for r in uni] == [20, 40]
    assert {experiment.training_lambda(r, "uninformed", cfg) for r in uni} == {0.001}
    assert [(r.snr_db, r.lam) for r in inf] == [(20, 0.05), (10, 0.5)]


def test_train_uses_mode_lambdas(workspace, monkeypatch):
    _, cfg_path, out, _ = workspace
    cfg = parse_config(cfg_path.read_text())
    seen = []
    real = experiment.recording_features

    def spy(rec, encoder, lams, acfg):
        seen.extend(lams)
        return real(rec, encoder, lams, acfg)

    monkeypatch.setattr(experiment, "recording_features", spy)
    experiment.train_model(read_dataset(out / "data" / "train_uninformed"), "uninformed", cfg)
    assert seen == [0.001, 0.001]
    seen.clear()
    inf = read_dataset(out / "data" / "train_informed")
    experiment.train_model(inf, "informed", cfg)
    assert seen == [r.lam for r in inf]


def test_labels_byte_identical_on_rerun(workspace, tmp_path):
    _, cfg, out, _ = workspace
    other = tmp_path / "again"
    assert main(["generate", "--config", str(cfg), "--out", str(other)]) == 0
    for a in sorted((out / "data").rglob("*_labels.csv")):
        b = other / a.relative_to(out)
        assert a.read_bytes() == b.read_bytes()
    for a in sorted((out / "data").rglob("*.json")):
        assert a.read_bytes() == (other / a.relative_to(out)).read_bytes()


def test_seed_changes_data(workspace, tmp_path):
    _, cfg, out, _ = workspace
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path), "--seed", "7"]) == 0
    a = next((out / "data" / "train_uninformed").glob("*_labels.csv"))
    assert a.read_bytes() != (tmp_path / a.relative_to(out)).read_bytes()


def test_models_and_history_written(workspace):
    _, _, out, _ = workspace
    for mode in ("uninformed", "informed"):
        p = dpd.load_params(out / "models" / f"{mode}.txt")
        assert p.sizes == (16, 32, 16, 2)
        assert (out / "models" / f"{mode}_history.csv").read_text().startswith("epoch")


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_report_rows_carry_full_key(workspace):
    _, _, out, _ = workspace
    rep = out / "report"
    for name in ("error_vs_fraction.csv", "error_vs_band.csv", "informed_vs_uninformed.csv"):
        rows = read_csv(rep / name)
        assert rows and list(rows[0]) == list(ROW_FIELDS)
        for r in rows:
            assert all(r[k] != "" for k in ROW_FIELDS)
            assert r["num_seeds"] == "2"
            assert 0 <= float(r["error_deg"]) <= 180
    frac = read_csv(rep / "error_vs_fraction.csv")
    keys = [(r["mode"], r["lambda"], r["fraction"]) for r in frac]
    assert len(keys) == len(set(keys)) == 2 * 2 * 2
    comp = read_csv(rep / "informed_vs_uninformed.csv")
    assert {r["mode"] for r in comp} == {"informed", "uninformed"}
    meta = json.loads((rep / "report.json").read_text())
    assert meta["seeds"] == [100, 101]


def test_evaluate_is_deterministic(workspace, tmp_path):
    _, _, out, base = workspace
    models = out / "models"
    args = ["evaluate", "--config", base[1], "--out", str(tmp_path), "--data", str(out / "data" / "test"),
            "--mode", "informed", "--model", str(models / "informed.txt"),
            "--compare", str(models / "uninformed.txt"), "--no-plots"]
    assert main(args) == 0
    for name in ("error_vs_fraction.csv", "error_vs_band.csv", "informed_vs_uninformed.csv"):
        assert (tmp_path / "report" / name).read_bytes() == (out / "report" / name).read_bytes()


def test_missing_dataset_error_line(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("ambireg: error[missing-dataset]: ")
    assert len(err.splitlines()) == 1


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  bogus: 1\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.strip() == f"ambireg: error[config]: {bad}:2: train.bogus: unknown key"


def test_dimension_mismatch(workspace, tmp_path, capsys):
    _, _, out, base = workspace
    small = dpd.ClassifierParams.init(sizes=(9, 8, 2))
    dpd.save_params(small, tmp_path / "m.txt")
    args = ["evaluate", *base[:2], "--out", str(tmp_path), "--data", str(out / "data" / "test"), "--model", str(tmp_path / "m.txt")]
    assert main(args) == 1
    assert "error[dimension-mismatch]" in capsys.readouterr().err


# --- ingest and trade-off ------------------------------------------------------


@pytest.fixture(scope="module")
def array_wav(tmp_path_factory):
    d = tmp_path_factory.mktemp("wav")
    x = 0.1 * np.random.default_rng(0).standard_normal((8000, 32))
    write_wav(d / "rec32.wav", x, 16000)
    write_wav(d / "rec31.wav", x[:, :31], 16000)
    write_wav(d / "rec32_8k.wav", x, 8000)
    return d


def test_ingest_32_channels(array_wav, tmp_path, capsys):
    assert main(["ingest", str(array_wav / "rec32.wav"), "--lam", "0.25", "--out", str(tmp_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["lam"] == 0.25
    side = json.loads((tmp_path / "rec32_features.json").read_text())
    assert side["lam"] == 0.25 and side["num_mics"] == 32
    data = np.load(tmp_path / "rec32_features.npz")
    assert data["svs"].shape[1] == 16


def test_ingest_returns_acn_tensor(array_wav):
    amb, feats = experiment.ingest(array_wav / "rec32.wav", load_geometry(), 0.25)
    assert amb.data.shape[-1] == 16 and amb.channels == "acn"
    assert feats.meta["lam"] == 0.25


@pytest.mark.parametrize("name", ["rec31.wav", "rec32_8k.wav"])
def test_ingest_mismatch(array_wav, tmp_path, capsys, name):
    assert main(["ingest", str(array_wav / name), "--lam", "0.25", "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert err.startswith("ambireg: error[input-mismatch]: ")
    assert not list(Path(tmp_path).glob("*.npz"))


def test_tradeoff_command(tmp_path):
    assert main(["tradeoff", "--out", str(tmp_path), "--lams", "0.01", "1.0", "--points", "5"]) == 0
    rows = read_csv(tmp_path / "tradeoff.csv")
    assert len(rows) == 10
    assert (tmp_path / "tradeoff.png").stat().st_size > 0
