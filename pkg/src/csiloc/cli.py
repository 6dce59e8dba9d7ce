"""Command-line pipeline front end.

Subcommands chain the offline phase (synth/ingest -> featuremaps ->
train-gan -> generate / augment-noise -> train-classifier) into the online
phase (evaluate). Every artifact directory receives a manifest recording
the resolved configuration, its hash, and the seed, and re-running a
command with unchanged inputs and seed reproduces outputs byte for byte.

Exit codes: 0 success, 2 bad usage, 3 data error, 4 numeric failure.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import featuremap, gan, ingest, kernels, locate, synth
from .config import PipelineConfig
from .errors import DataError, InsufficientData, NumericError
from .rng import substream


def _write_manifest(path, entry) -> None:
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(entry, f, sort_keys=True, indent=2)
        f.write("\n")


def _write_points_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in row) + "\n")


def _read_points_csv(path, header):
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        lines = [l.strip() for l in f if l.strip() and not l.strip().startswith("#")]
    if not lines or lines[0] != header:
        raise InsufficientData(f"{path}: expected header {header!r}")
    for line in lines[1:]:
        pid, x, y = line.split(",")
        rows.append((int(pid), float(x), float(y)))
    return rows


def _grid_path(dataset_dir):
    return os.path.join(dataset_dir, "grid.csv")


def _load_grid(dataset_dir) -> ingest.RpGrid:
    rows = _read_points_csv(_grid_path(dataset_dir), "rp_id,x,y")
    with open(os.path.join(dataset_dir, "manifest.json"), "r", encoding="utf-8") as f:
        spacing = float(json.load(f).get("grid_spacing", 1.0))
    return ingest.RpGrid(points=tuple(rows), spacing=spacing)


# -- commands -------------------------------------------------------------------


def cmd_synth(args, config: PipelineConfig) -> int:
    meta = config.capture_meta()
    cfg = config.synth_config()
    os.makedirs(args.out, exist_ok=True)
    n_test = config.get_int("synth.test_points")
    samples = config.get_int("synth.samples_per_rp")
    if n_test > 0:
        # test-point mode: random interior positions instead of the survey grid
        rng = substream(config.seed, "test-points")
        margin = 0.3
        w, d = cfg.room
        points = [
            (i + 1, float(rng.uniform(margin, w - margin)), float(rng.uniform(margin, d - margin)))
            for i in range(n_test)
        ]
        env = synth._environment(cfg, meta)
        labeled = []
        for pid, x, y in points:
            for t in range(samples):
                labeled.append((pid, synth.synth_record((x, y), meta, cfg, t, _env=env)))
        ingest.write_text(os.path.join(args.out, "csi.txt"), labeled, meta)
        _write_points_csv(os.path.join(args.out, "points.csv"), "point_id,x,y", points)
        entry = config.manifest_entry("synth", [])
        entry["test_points"] = n_test
        _write_manifest(args.out, entry)
    else:
        grid = ingest.square_grid(
            config.get_int("grid.nx"), config.get_int("grid.ny"), config.get_float("grid.spacing")
        )
        sets = synth.synth_dataset(grid, samples, meta, cfg)
        labeled = [(s.rp_id, r) for s in sets for r in s.records]
        ingest.write_text(os.path.join(args.out, "csi.txt"), labeled, meta)
        _write_points_csv(_grid_path(args.out), "rp_id,x,y", list(grid.points))
        entry = config.manifest_entry("synth", [])
        entry["grid_spacing"] = grid.spacing
        _write_manifest(args.out, entry)
    return 0


def cmd_ingest(args, config: PipelineConfig) -> int:
    with open(args.binary, "rb") as f:
        records = ingest.parse_binary_log(
            f.read(),
            n_ap=config.get_int("capture.n_ap"),
            packet_rate=config.get_float("capture.packet_rate"),
            apply_permutation=not args.no_permutation,
        )
    if not records:
        raise InsufficientData(f"{args.binary}: no CSI records found")
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "csi.txt")
    labeled = [(args.rp_id, r) for r in records]
    if args.append and os.path.exists(out_path):
        existing, meta = ingest.read_text(out_path)
        if meta != records[0].meta:
            raise InsufficientData("appended capture dimensions differ from existing dataset")
        labeled = existing + labeled
    ingest.write_text(out_path, labeled, records[0].meta)
    if args.grid:
        rows = _read_points_csv(args.grid, "rp_id,x,y")
        _write_points_csv(_grid_path(args.out), "rp_id,x,y", rows)
    entry = config.manifest_entry("ingest", [args.binary])
    entry["grid_spacing"] = config.get_float("grid.spacing")
    _write_manifest(args.out, entry)
    return 0


def cmd_featuremaps(args, config: PipelineConfig) -> int:
    labeled, _ = ingest.read_text(os.path.join(args.dataset, "csi.txt"))
    grid = _load_grid(args.dataset)
    sets = ingest.group_by_rp(labeled, grid)
    db = featuremap.build_initial_db(sets, grid, config.featuremap_config())
    featuremap.save_db(db, args.out, extra_manifest=config.manifest_entry("featuremaps", [args.dataset]))
    return 0


def _train_gan_task(task):
    db_dir, rp_id, hp_json, seed, model_path, telemetry_path = task
    maps = featuremap.load_rp_maps(db_dir, rp_id)
    model = gan.train(maps, gan.HyperParams(**hp_json), seed=seed, rp_id=rp_id,
                      telemetry_path=telemetry_path, checkpoint_path=model_path)
    gan.save_model(model, model_path)
    return rp_id


def cmd_train_gan(args, config: PipelineConfig) -> int:
    with open(os.path.join(args.db, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    rp_ids = sorted(int(k) for k in manifest["maps"])
    if args.rp:
        missing = set(args.rp) - set(rp_ids)
        if missing:
            raise InsufficientData(f"rp ids not in database: {sorted(missing)}")
        rp_ids = sorted(args.rp)
    hp = config.gan_hyperparams()
    if hp.image_size != manifest["config"]["resolution"]:
        raise InsufficientData(
            f"gan image size {hp.image_size} != database resolution {manifest['config']['resolution']}"
        )
    os.makedirs(args.out, exist_ok=True)
    hp_json = gan._hp_to_json(hp)
    tasks = [
        (
            args.db,
            rp_id,
            hp_json,
            config.seed,
            os.path.join(args.out, f"rp_{rp_id:03d}.ntc"),
            os.path.join(args.out, f"rp_{rp_id:03d}_telemetry.csv"),
        )
        for rp_id in rp_ids
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(_train_gan_task, tasks))
    else:
        for task in tasks:
            _train_gan_task(task)
    entry = config.manifest_entry("train-gan", [args.db])
    entry["models"] = [f"rp_{rp_id:03d}.ntc" for rp_id in rp_ids]
    _write_manifest(args.out, entry)
    return 0


def cmd_generate(args, config: PipelineConfig) -> int:
    db = featuremap.load_db(args.db)
    count = config.get_int("generate.count")
    extra = {}
    for rp_id in sorted(db.maps):
        model_path = os.path.join(args.models, f"rp_{rp_id:03d}.ntc")
        if not os.path.exists(model_path):
            raise InsufficientData(f"missing model checkpoint {model_path}")
        model = gan.load_model(model_path)
        extra[rp_id] = gan.generate_maps(model, count, seed=config.seed)
    merged = featuremap.merge(db, extra)
    featuremap.save_db(merged, args.out, extra_manifest=config.manifest_entry("generate", [args.db, args.models]))
    return 0


def cmd_augment_noise(args, config: PipelineConfig) -> int:
    db = featuremap.load_db(args.db)
    labeled, _ = ingest.read_text(os.path.join(args.dataset, "csi.txt"))
    grid = _load_grid(args.dataset)
    sets = ingest.group_by_rp(labeled, grid)
    augmented = locate.adnoi_augment(
        db,
        sets,
        fraction=config.get_float("adnoi.fraction"),
        sigma_scale=config.get_float("adnoi.sigma_scale"),
        seed=config.seed,
    )
    featuremap.save_db(augmented, args.out, extra_manifest=config.manifest_entry("augment-noise", [args.db, args.dataset]))
    return 0


def cmd_train_classifier(args, config: PipelineConfig) -> int:
    db = featuremap.load_db(args.db)
    model = locate.train_classifier(db, config.classifier_config(), seed=config.seed)
    os.makedirs(args.out, exist_ok=True)
    locate.save_classifier(model, os.path.join(args.out, "classifier.ntc"))
    _write_manifest(args.out, config.manifest_entry("train-classifier", [args.db]))
    return 0


def cmd_evaluate(args, config: PipelineConfig) -> int:
    csi_path = os.path.join(args.testset, "csi.txt")
    points_path = os.path.join(args.testset, "points.csv")
    if not (os.path.exists(csi_path) and os.path.exists(points_path)):
        raise InsufficientData(f"test directory {args.testset} has no csi.txt/points.csv")
    model = locate.load_classifier(os.path.join(args.classifier, "classifier.ntc"))
    db = featuremap.load_db(args.db)
    labeled, _ = ingest.read_text(csi_path)
    if not labeled:
        raise InsufficientData(f"{csi_path}: no records")
    points = _read_points_csv(points_path, "point_id,x,y")
    coords = {pid: (x, y) for pid, x, y in points}

    by_point = {}
    for pid, record in labeled:
        if pid not in coords:
            raise InsufficientData(f"test record labeled {pid} has no entry in points.csv")
        by_point.setdefault(pid, []).append(record)

    maps_per_point = config.get_int("evaluate.maps_per_point")
    tests = []
    for pid in sorted(by_point):
        sample_set = ingest.CsiSampleSet(rp_id=pid, records=by_point[pid])
        for draw in range(maps_per_point):
            block = featuremap.subsample_rows(sample_set, db.config, draw)
            fmap = featuremap.render_map(block, db.config, pid, "real", draw)
            tests.append((fmap, coords[pid]))
    report = locate.evaluate(model, tests, db.grid)

    os.makedirs(args.out, exist_ok=True)
    locate.write_report_csv(report, os.path.join(args.out, "report.csv"))
    locate.write_cdf_csv(report, os.path.join(args.out, "cdf.csv"))
    summary = locate.report_summary(report)
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as f:
        f.write(summary + "\n")
    _write_manifest(args.out, config.manifest_entry("evaluate", [args.classifier, args.db, args.testset]))
    print(summary)
    return 0


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csiloc", description=__doc__)
    parser.add_argument("--config", default=None, help="dotted-key config file")
    parser.add_argument("--seed", type=int, default=None, help="global seed (flags win over file)")
    parser.add_argument("--workers", type=int, default=None, help="worker pool size for per-RP training")
    parser.add_argument("--image-size", type=int, default=None, help="feature-map resolution in pixels")
    parser.add_argument("--fixed-reduction", action="store_true",
                        help="pin the pure-numpy kernel backend for build-independent bytes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset (grid or test points)")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=None, help="records per point")
    p.add_argument("--test-points", type=int, default=None, help="emit N random test positions instead of the grid")

    p = sub.add_parser("ingest", help="convert a binary capture log into the canonical text dataset")
    p.add_argument("--binary", required=True)
    p.add_argument("--rp-id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--append", action="store_true")
    p.add_argument("--no-permutation", action="store_true", help="keep receive chains in stored order")
    p.add_argument("--grid", default=None, help="grid.csv to copy into the dataset")

    p = sub.add_parser("featuremaps", help="build the initial fingerprint database")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--maps-per-rp", type=int, default=None)
    p.add_argument("--rows-per-map", type=int, default=None)

    p = sub.add_parser("train-gan", help="train one generator per reference point")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rp", type=int, action="append", default=None, help="restrict to these rp ids")
    p.add_argument("--gan-epochs", type=int, default=None)
    p.add_argument("--base-width", type=int, default=None)

    p = sub.add_parser("generate", help="expand a database with generated maps")
    p.add_argument("--db", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None, help="generated maps per reference point")

    p = sub.add_parser("augment-noise", help="expand a database with noise-perturbed re-renders")
    p.add_argument("--db", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, default=None)

    p = sub.add_parser("train-classifier", help="train the localization classifier")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier-epochs", type=int, default=None)

    p = sub.add_parser("evaluate", help="localize test maps and write the error report")
    p.add_argument("--classifier", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--testset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--maps-per-point", type=int, default=None)

    return parser


_FLAG_KEYS = {
    "seed": "seed",
    "workers": "workers",
    "image_size": "featuremap.resolution",
    "samples": "synth.samples_per_rp",
    "test_points": "synth.test_points",
    "maps_per_rp": "featuremap.maps_per_rp",
    "rows_per_map": "featuremap.rows_per_map",
    "gan_epochs": "gan.epochs",
    "base_width": "gan.base_width",
    "count": "generate.count",
    "fraction": "adnoi.fraction",
    "classifier_epochs": "classifier.epochs",
    "maps_per_point": "evaluate.maps_per_point",
}

COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "featuremaps": cmd_featuremaps,
    "train-gan": cmd_train_gan,
    "generate": cmd_generate,
    "augment-noise": cmd_augment_noise,
    "train-classifier": cmd_train_classifier,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if args.fixed_reduction:
        overrides["fixed_reduction"] = "true"
    try:
        config = PipelineConfig.load(args.config, overrides)
        if config.fixed_reduction:
            kernels.use_backend("pure")
        return COMMANDS[args.command](args, config)
    except DataError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
