import csv

import numpy as np
import pytest

from oscmar.cli import main
from oscmar.dataset import read_manifest
from oscmar.model import load_dictionary
from oscmar.tensor import load_osct, save_osct

GEN = ["generate", "--n", "2", "--size", "40", "--views", "48"]


def run(*argv):
    return main([str(a) for a in argv])


def read_config(folder):
    lines = (folder / "run.config").read_text().splitlines()
    assert lines == sorted(lines)
    return dict(line.split("=", 1) for line in lines)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("--seed", 3, *GEN, "--out", root / "data", "--png") == 0
    assert run("learn", "--data", root / "data", "--epochs", 1, "--K", 2, "--L", 4,
               "--patch-size", 24, "--out", root / "dict" / "dict.meta") == 0
    return root


def test_generate_layout(workspace):
    data = workspace / "data"
    records = read_manifest(data)
    assert [r.id for r in records] == ["0000", "0001"]
    assert [r.seed for r in records] == [3, 4]
    header = (data / "manifest.csv").read_text().splitlines()[0]
    assert header == "id,seed,severity,metal_pixels"
    for r in records:
        for name in ("y", "x", "i", "metal", "li"):
            assert load_osct(data / r.id / f"{name}.osct").shape == (40, 40)
        assert (data / r.id / "y.png").exists()
        assert int(load_osct(data / r.id / "metal.osct").sum()) == r.metal_pixels
    config = read_config(data)
    assert config["command"] == "generate" and config["seed"] == "3" and config["n"] == "2"


def test_learn_outputs(workspace):
    folder = workspace / "dict"
    d = load_dictionary(folder / "dict.meta")
    assert (d.L, d.K, d.p) == (4, 2, 9)
    rows = list(csv.reader(open(folder / "loss.csv")))
    assert rows[0] == ["epoch", "loss"] and [r[0] for r in rows[1:]] == ["0", "1"]
    assert read_config(folder)["command"] == "learn"


def test_remove_single_and_history(workspace, tmp_path):
    sample = workspace / "data" / "0000"
    out = tmp_path / "single"
    assert run("remove", "--input", sample / "y.osct", "--mask", sample / "i.osct",
               "--dict", workspace / "dict" / "dict.meta", "--iters", 4,
               "--out-x", out / "x.osct", "--out-a", out / "a.osct",
               "--history", out / "history.csv") == 0
    X = load_osct(out / "x.osct")
    assert X.shape == (40, 40) and X.min() >= 0 and X.max() <= 1
    rows = list(csv.reader(open(out / "history.csv")))
    assert rows[0] == ["iter", "objective"] and len(rows) == 6
    values = [float(r[1]) for r in rows[1:]]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:]))
    assert read_config(out)["command"] == "remove"


def test_remove_with_explicit_prior_file(workspace, tmp_path):
    sample = workspace / "data" / "0000"
    assert run("remove", "--input", sample / "y.osct", "--mask", sample / "i.osct",
               "--dict", workspace / "dict" / "dict.meta", "--iters", 2, "--prior",
               sample / "li.osct", "--out-x", tmp_path / "x.osct") == 0


def test_batch_remove_eval_and_missing(workspace, tmp_path):
    res = tmp_path / "res"
    assert run("remove", "--data", workspace / "data", "--dict", workspace / "dict" / "dict.meta",
               "--iters", 3, "--out", res) == 0
    assert run("eval", "--data", workspace / "data", "--results", res, "--out", tmp_path / "ev") == 0
    rows = list(csv.DictReader(open(tmp_path / "ev" / "report.csv")))
    assert [r["id"] for r in rows] == ["0000", "0001", "mean", "median"]
    outs = [float(r["psnr_output"]) for r in rows[:2]]
    assert float(rows[2]["psnr_output"]) == pytest.approx(np.mean(outs), rel=1e-12)

    (res / "0001" / "x.osct").unlink()
    assert run("eval", "--data", workspace / "data", "--results", res, "--out", tmp_path / "ev2") == 3
    rows = list(csv.DictReader(open(tmp_path / "ev2" / "report.csv")))
    assert rows[1]["psnr_output"] == "missing"
    assert (tmp_path / "ev2" / "run.config").exists()


def test_eval_identity_and_noop(workspace, tmp_path):
    data = workspace / "data"
    for name, source in (("same", "x"), ("noop", "y")):
        for r in read_manifest(data):
            (tmp_path / name / r.id).mkdir(parents=True)
            save_osct(tmp_path / name / r.id / "x.osct", load_osct(data / r.id / f"{source}.osct"))
        assert run("eval", "--data", data, "--results", tmp_path / name,
                   "--out", tmp_path / f"ev_{name}") == 0
    same = list(csv.DictReader(open(tmp_path / "ev_same" / "report.csv")))
    assert all(r["psnr_output"] == "inf" and float(r["ssim_output"]) == pytest.approx(1.0)
               for r in same)
    noop = list(csv.DictReader(open(tmp_path / "ev_noop" / "report.csv")))
    assert all(r["psnr_output"] == r["psnr_input"] for r in noop)


def test_export_filters(workspace, tmp_path):
    from PIL import Image
    out = tmp_path / "filters"
    assert run("export-filters", "--dict", workspace / "dict" / "dict.meta", "--out", out) == 0
    d = load_dictionary(workspace / "dict" / "dict.meta")
    for l in range(4):
        for k in range(2):
            f = load_osct(out / f"filter_k{k}_l{l}.osct")
            assert f.tobytes() == d.filters[l * 2 + k].tobytes()
            img = np.asarray(Image.open(out / f"filter_k{k}_l{l}.png"))
            assert img.dtype == np.uint8 and img.min() == 0 and img.max() == 255


def test_exit_codes(tmp_path):
    assert run("generate", "--n", "x", "--out", tmp_path) == 2
    assert run("bogus") == 2
    assert run("generate", "--n", 1, "--severity", -1, "--out", tmp_path / "g") == 2
    assert run("--threads", 0, "generate", "--out", tmp_path / "g") == 2
    assert run("learn", "--data", tmp_path / "absent", "--out", tmp_path / "d" / "dict.meta") == 3
    assert run("export-filters", "--dict", tmp_path / "absent.meta", "--out", tmp_path / "f") == 3
    assert run("remove", "--dict", tmp_path / "absent.meta", "--input", "y", "--mask", "i",
               "--out-x", tmp_path / "x.osct") == 3


def test_generate_learn_remove_deterministic(tmp_path):
    outputs = []
    for rep in ("a", "b"):
        root = tmp_path / rep
        assert run("--seed", 11, *GEN, "--out", root / "data") == 0
        assert run("learn", "--data", root / "data", "--epochs", 1, "--K", 2, "--L", 4,
                   "--patch-size", 24, "--seed", 2, "--out", root / "dict" / "dict.meta") == 0
        assert run("--threads", 2, "remove", "--data", root / "data", "--dict",
                   root / "dict" / "dict.meta", "--iters", 3, "--out", root / "res") == 0
        files = sorted(p.relative_to(root) for p in root.rglob("*.osct"))
        outputs.append({f: (root / f).read_bytes() for f in files})
    assert outputs[0].keys() == outputs[1].keys() and len(outputs[0]) > 10
    assert outputs[0] == outputs[1]
