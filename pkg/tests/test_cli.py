"""End-to-end pipeline runs, idempotence, exit codes, and manifests."""

import json
import os
from pathlib import Path

import pytest

from csiloc.cli import main
from csiloc.config import DEFAULTS, PipelineConfig, parse_config_text

DESK_CONFIG = """\
# desk-scale settings for fast end-to-end runs
grid.nx = 2
grid.ny = 2
synth.samples_per_rp = 40
featuremap.rows_per_map = 8
featuremap.maps_per_rp = 6
featuremap.resolution = 16
gan.bs = 4
gan.z_dim = 8
gan.epochs = 2
gan.base_width = 8
generate.count = 3
adnoi.fraction = 0.5
classifier.bs = 16
classifier.epochs = 3
evaluate.maps_per_point = 2
"""


def tree_bytes(root):
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """Full desk-scale chain: synth -> featuremaps -> train-gan -> generate
    -> augment-noise -> train-classifier -> evaluate."""
    root = tmp_path_factory.mktemp("chain")
    cfg = root / "desk.cfg"
    cfg.write_text(DESK_CONFIG)
    common = ["--config", str(cfg), "--seed", "42"]

    paths = {
        "cfg": cfg,
        "train": root / "train",
        "test": root / "test",
        "db": root / "db",
        "models": root / "models",
        "db_gen": root / "db_gen",
        "db_noise": root / "db_noise",
        "clf": root / "clf",
        "report": root / "report",
    }
    assert main(common + ["synth", "--out", str(paths["train"])]) == 0
    assert main(common + ["synth", "--out", str(paths["test"]), "--test-points", "3"]) == 0
    assert main(common + ["featuremaps", "--dataset", str(paths["train"]), "--out", str(paths["db"])]) == 0
    assert main(common + ["train-gan", "--db", str(paths["db"]), "--out", str(paths["models"])]) == 0
    assert main(
        common + ["generate", "--db", str(paths["db"]), "--models", str(paths["models"]), "--out", str(paths["db_gen"])]
    ) == 0
    assert main(
        common
        + ["augment-noise", "--db", str(paths["db"]), "--dataset", str(paths["train"]), "--out", str(paths["db_noise"])]
    ) == 0
    assert main(common + ["train-classifier", "--db", str(paths["db_gen"]), "--out", str(paths["clf"])]) == 0
    assert main(
        common
        + [
            "evaluate",
            "--classifier", str(paths["clf"]),
            "--db", str(paths["db_gen"]),
            "--testset", str(paths["test"]),
            "--out", str(paths["report"]),
        ]
    ) == 0
    paths["common"] = common
    return paths


def test_chain_artifacts_exist(chain):
    assert (chain["train"] / "csi.txt").exists()
    assert (chain["train"] / "grid.csv").exists()
    assert (chain["test"] / "points.csv").exists()
    assert (chain["db"] / "manifest.json").exists()
    assert (chain["db"] / "rp_001").is_dir()
    assert sorted(p.name for p in chain["models"].glob("*.ntc")) == [
        "rp_001.ntc", "rp_002.ntc", "rp_003.ntc", "rp_004.ntc",
    ]
    report = (chain["report"] / "report.csv").read_text().splitlines()
    assert report[0] == "test_index,x_estimate,y_estimate,error_m"
    assert len(report) == 1 + 3 * 2  # 3 test points x 2 maps per point
    assert (chain["report"] / "cdf.csv").exists()
    assert "mean error" in (chain["report"] / "summary.txt").read_text()


def test_generated_maps_merged(chain):
    manifest = json.loads((chain["db_gen"] / "manifest.json").read_text())
    for rp in ("1", "2", "3", "4"):
        entries = manifest["maps"][rp]
        assert len(entries) == 6 + 3
        assert sum(1 for e in entries if e["provenance"] == "generated") == 3
    noise = json.loads((chain["db_noise"] / "manifest.json").read_text())
    for rp in ("1", "2", "3", "4"):
        assert sum(1 for e in noise["maps"][rp] if e["provenance"] == "noise-augmented") == 3


def test_manifests_round_trip_config(chain):
    manifest = json.loads((chain["db"] / "manifest.json").read_text())
    assert manifest["command"] == "featuremaps"
    assert manifest["seed"] == 42
    cfg = manifest["run_config"]
    assert cfg["featuremap.resolution"] == "16"
    assert cfg["gan.bs"] == "4"
    resolved = PipelineConfig.load(chain["cfg"], {"seed": 42})
    assert manifest["config_hash"] == resolved.config_hash()
    assert resolved.values == cfg


def test_rerun_is_byte_identical(chain, tmp_path):
    db2 = tmp_path / "db_again"
    assert main(chain["common"] + ["featuremaps", "--dataset", str(chain["train"]), "--out", str(db2)]) == 0
    assert tree_bytes(chain["db"]) == tree_bytes(db2)

    models2 = tmp_path / "models_again"
    assert main(chain["common"] + ["train-gan", "--db", str(chain["db"]), "--out", str(models2)]) == 0
    assert tree_bytes(chain["models"]) == tree_bytes(models2)


def test_worker_pool_reproduces_serial_results(chain, tmp_path):
    models2 = tmp_path / "models_workers"
    assert main(
        chain["common"] + ["--workers", "2", "train-gan", "--db", str(chain["db"]), "--out", str(models2)]
    ) == 0
    a = tree_bytes(chain["models"])
    b = tree_bytes(models2)
    # manifests differ (workers config key); model checkpoints must not
    for name in a:
        if name.endswith(".ntc") or name.endswith(".csv"):
            assert a[name] == b[name], name


def test_fixed_reduction_flag_matches_default_backend(chain, tmp_path):
    db2 = tmp_path / "db_pure"
    assert main(
        chain["common"] + ["--fixed-reduction", "featuremaps", "--dataset", str(chain["train"]), "--out", str(db2)]
    ) == 0
    a = tree_bytes(chain["db"])
    b = tree_bytes(db2)
    for name in a:
        if name.endswith(".png"):
            assert a[name] == b[name], name
    import csiloc.kernels as kernels

    kernels.use_backend("auto")


def test_evaluate_empty_testdir_exits_3(chain, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "r"
    code = main(
        chain["common"]
        + ["evaluate", "--classifier", str(chain["clf"]), "--db", str(chain["db"]), "--testset", str(empty), "--out", str(out)]
    )
    assert code == 3
    assert "InsufficientData" in capsys.readouterr().err


def test_bad_usage_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["train-gan"])  # missing required --db/--out
    assert exc.value.code == 2


def test_numeric_failure_exits_4(chain, tmp_path, capsys):
    import warnings

    from csiloc.nn import set_finite_checks

    set_finite_checks(False)  # let the training loop catch the blow-up itself
    cfg = tmp_path / "blowup.cfg"
    cfg.write_text(DESK_CONFIG + "gan.lr = inf\ngan.epochs = 40\n")
    out = tmp_path / "models_blowup"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        code = main(
            ["--config", str(cfg), "--seed", "1", "train-gan", "--db", str(chain["db"]), "--out", str(out), "--rp", "1"]
        )
    assert code == 4
    assert "NonFiniteLoss" in capsys.readouterr().err


def test_gan_defaults_when_unset(chain, tmp_path):
    out = tmp_path / "models_defaults"
    code = main(
        ["--seed", "1", "--image-size", "16",
         "train-gan", "--db", str(chain["db"]), "--out", str(out), "--rp", "1", "--gan-epochs", "1"]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    cfg = manifest["run_config"]
    assert cfg["gan.bs"] == "49"
    assert cfg["gan.c"] == "0.01"
    assert cfg["gan.lr"] == "0.0002"
    assert cfg["gan.f_d"] == "2"


def test_config_parsing_and_validation(tmp_path):
    parsed = parse_config_text("# comment\nseed = 9\n\nfeaturemap.resolution = 64\n")
    assert parsed == {"seed": "9", "featuremap.resolution": "64"}
    with pytest.raises(ValueError):
        parse_config_text("not a key value line")
    with pytest.raises(ValueError):
        PipelineConfig.load(None, {"visibly.bogus": 1})
    bad = tmp_path / "bad.cfg"
    bad.write_text("mystery.key = 3\n")
    with pytest.raises(ValueError):
        PipelineConfig.load(bad)
    cfg = PipelineConfig.load(None, {"seed": 7})
    assert cfg.seed == 7
    assert set(DEFAULTS) == set(cfg.values)


def test_config_flag_beats_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("seed = 5\nfeaturemap.resolution = 64\n")
    cfg = PipelineConfig.load(f, {"featuremap.resolution": 32})
    assert cfg.get_int("featuremap.resolution") == 32
    assert cfg.seed == 5
