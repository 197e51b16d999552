import json
import os

import numpy as np
import pytest

from rollguide.cli import main
from rollguide.pianoroll_io import load_roll, save_roll
from rollguide.rules import PianoRoll
from rollguide.scores import GmmSpec


@pytest.fixture
def gmm_file(tmp_path):
    gmm = GmmSpec(weights=[0.5, 0.5], means=[[-1.5], [1.5]],
                  variances=[[0.25], [0.25]])
    path = tmp_path / "gmm.json"
    path.write_text(gmm.to_json())
    return str(path)


def triad_roll(pitches=(60, 64, 67), frames=128, vel=64):
    v = np.zeros((128, frames), dtype=np.uint8)
    onset = np.zeros_like(v)
    for p in pitches:
        v[p, :] = vel
        onset[p, 0] = 1
    return PianoRoll(velocity=v, onset=onset, pedal=np.zeros_like(v))


@pytest.fixture
def roll_dir(tmp_path):
    d = tmp_path / "rolls"
    d.mkdir()
    roots = [48, 55, 60, 67]
    for i, r in enumerate(roots):
        save_roll(triad_roll((r, r + 4, r + 7)), d / f"roll_{i}.pr01")
    return str(d)


def test_unguided_sample_writes_csv(tmp_path, gmm_file):
    out = str(tmp_path / "out")
    rc = main(["sample", "--backend", gmm_file, "--schedule", "30,1e-3,0.2",
               "--num-samples", "5", "--out", out])
    assert rc == 0
    rows = open(os.path.join(out, "samples.csv")).read().splitlines()
    assert len(rows) == 5
    assert os.path.exists(os.path.join(out, "config.json"))


def test_guided_sample_needs_rules(tmp_path, gmm_file, capsys):
    rc = main(["sample", "--backend", gmm_file, "--schedule", "30,1e-3,0.2",
               "--n", "4", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_rules_extraction_prints_targets(tmp_path, capsys):
    src = tmp_path / "src.pr01"
    save_roll(triad_roll(), src)
    rc = main(["rules", "--input", str(src)])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"ph", "nd", "cp"}
    assert len(doc["ph"]) == 12
    assert doc["cp"] == [0.0]     # major triad


def test_guided_sample_with_rules(tmp_path, gmm_file):
    rules = tmp_path / "targets.json"
    rules.write_text(json.dumps({"nd": [0.0, 0.0]}))
    out = str(tmp_path / "g")
    # gmm backend: rule loss decodes 1-D samples? No — ND target with a gmm
    # backend would need roll-shaped samples, so use a quadratic-free path:
    # diagnostics assert the guided sampler ran.
    rc = main(["sample", "--backend", gmm_file, "--schedule", "20,1e-3,0.2",
               "--n", "1", "--rules", str(rules), "--out", out,
               "--diagnostics", str(tmp_path / "d.jsonl")])
    assert rc == 2   # roll-shaped rules cannot score 1-D gmm samples


def test_train_sample_edit_round_trip(tmp_path, roll_dir, capsys):
    out = str(tmp_path / "train")
    rc = main(["train", "--data", roll_dir, "--schedule", "30,2e-3,0.3",
               "--train-steps", "300", "--batch-size", "8", "--atoms", "8",
               "--out", out])
    assert rc == 0
    denoiser = os.path.join(out, "denoiser.bin")
    assert os.path.exists(denoiser)

    # guided sampling from the trained backend writes rolls and midi
    rules = tmp_path / "targets.json"
    main(["rules", "--input", os.path.join(roll_dir, "roll_0.pr01"),
          "--out", str(tmp_path / "r")])
    rules = os.path.join(str(tmp_path / "r"), "targets.json")
    sout = str(tmp_path / "samples")
    rc = main(["sample", "--backend", denoiser, "--schedule", "30,2e-3,0.3",
               "--n", "4", "--guide", "30:0", "--rules", rules,
               "--num-samples", "2", "--out", sout])
    assert rc == 0
    assert os.path.exists(os.path.join(sout, "sample_000.pr01"))
    assert os.path.exists(os.path.join(sout, "sample_001.mid"))
    roll = load_roll(os.path.join(sout, "sample_000.pr01"))
    assert roll.frames == 128

    # editing a source roll preserves the rows outside the edit range;
    # a pitch-range edit keeps whole note runs intact, so the preserved
    # rows survive decoding bit-exactly
    eout = str(tmp_path / "edit")
    src = os.path.join(roll_dir, "roll_1.pr01")
    rc = main(["edit", "--backend", denoiser, "--schedule", "30,2e-3,0.3",
               "--source", src, "--noise-level", "20",
               "--edit-pitches", "70:90", "--out", eout])
    assert rc == 0
    edited = load_roll(os.path.join(eout, "edited.pr01"))
    source = load_roll(src)
    np.testing.assert_array_equal(edited.velocity[:70], source.velocity[:70])
    np.testing.assert_array_equal(edited.velocity[90:], source.velocity[90:])
    np.testing.assert_array_equal(edited.onset[:70], source.onset[:70])


def test_eval_pair(tmp_path, roll_dir, capsys):
    a = os.path.join(roll_dir, "roll_0.pr01")
    rc = main(["eval", "--pair", a, a])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["chroma_similarity"] == pytest.approx(1.0)
    assert doc["groove_similarity"] == pytest.approx(1.0)


def test_eval_sets(tmp_path, roll_dir, capsys):
    rc = main(["eval", "--set-a", roll_dir, "--set-b", roll_dir])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert "average" in doc


def test_eval_needs_inputs(capsys):
    assert main(["eval"]) == 2


def test_config_file_supplies_defaults(tmp_path, gmm_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"backend": gmm_file,
                               "schedule": "20,1e-3,0.2",
                               "num-samples": 3}))
    out = str(tmp_path / "o")
    rc = main(["sample", "--config", str(cfg), "--out", out])
    assert rc == 0
    rows = open(os.path.join(out, "samples.csv")).read().splitlines()
    assert len(rows) == 3


def test_flags_override_config_file(tmp_path, gmm_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"backend": gmm_file,
                               "schedule": "20,1e-3,0.2",
                               "num-samples": 3}))
    out = str(tmp_path / "o2")
    rc = main(["sample", "--config", str(cfg), "--num-samples", "1",
               "--out", out])
    assert rc == 0
    rows = open(os.path.join(out, "samples.csv")).read().splitlines()
    assert len(rows) == 1


def test_bad_schedule_is_reported(tmp_path, gmm_file, capsys):
    rc = main(["sample", "--backend", gmm_file, "--schedule", "oops",
               "--out", str(tmp_path / "o")])
    assert rc == 2


def test_missing_backend_file(tmp_path, capsys):
    rc = main(["sample", "--backend", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 2


def test_verify_single_check(capsys):
    rc = main(["verify", "--only", "single-candidate-equivalence"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "[PASS] single-candidate-equivalence" in out
    assert "1/1 checks passed" in out


def test_strided_sampler_cli(tmp_path, gmm_file):
    out = str(tmp_path / "s")
    rc = main(["sample", "--backend", gmm_file, "--schedule", "40,1e-3,0.2",
               "--steps", "10", "--num-samples", "4", "--out", out])
    assert rc == 0
    rows = open(os.path.join(out, "samples.csv")).read().splitlines()
    assert len(rows) == 4
