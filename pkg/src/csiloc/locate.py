"""Classifier training, top-4 centroid positioning, and error reports.

The classifier is a small conv/pool stack over feature maps with one class
per reference point. Positioning takes the four highest-probability
reference points (ties broken toward the lower rp_id) and returns the
unweighted geometric center of their coordinates. Reports carry per-test
errors, summary statistics, the error CDF, and range probabilities at
1/2/3 metres.

The noise-augmentation baseline re-renders fresh subsample draws with
zero-mean Gaussian amplitude noise (per-subcarrier standard deviation
scaled by ``sigma_scale``) added before rasterization.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, ResolutionMismatch, TooFewClasses
from .featuremap import FeatureMap, FingerprintDb, merge, render_map, subsample_indices
from .ingest import RpGrid, amplitudes
from .nn import Sequential, Tensor, no_grad
from .nn.checkpoint import load_tensors, save_tensors
from .nn.layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU, cross_entropy_logits, softmax
from .nn.optim import rmsprop_init, rmsprop_step
from .rng import substream


@dataclass(frozen=True)
class ClassifierConfig:
    lr: float = 1e-3
    bs: int = 64
    epochs: int = 30
    patience: int = 3
    val_fraction: float = 0.1
    conv_widths: tuple = (16, 32, 64)
    fc_width: int = 128

    def __post_init__(self):
        if self.lr <= 0 or self.bs < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("lr, bs, epochs, patience must be positive")
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass(eq=False)
class AfCnnModel:
    net: Sequential
    rp_ids: tuple  # class index -> rp_id, ascending
    image_size: int
    config: ClassifierConfig

    @property
    def class_count(self) -> int:
        return len(self.rp_ids)


def build_classifier_net(image_size: int, class_count: int, config: ClassifierConfig,
                         rng: np.random.Generator) -> Sequential:
    side = image_size
    layers = []
    ch = 3
    for width in config.conv_widths:
        if side % 2:
            raise ResolutionMismatch(f"image size {image_size} does not survive {len(config.conv_widths)} poolings")
        layers += [Conv2d(ch, width, 3, stride=1, padding=1, rng=rng), ReLU(), MaxPool2d(2)]
        ch = width
        side //= 2
    layers += [
        Flatten(),
        Linear(ch * side * side, config.fc_width, rng=rng),
        ReLU(),
        Linear(config.fc_width, class_count, rng=rng),
    ]
    return Sequential(layers)


def _db_to_arrays(db: FingerprintDb):
    rp_ids = tuple(sorted(db.maps))
    xs, ys = [], []
    for cls, rp_id in enumerate(rp_ids):
        for fmap in db.maps[rp_id]:
            xs.append(fmap.pixels)
            ys.append(cls)
    x = np.stack(xs).astype(np.float32) / 127.5 - 1.0
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2)), np.asarray(ys, dtype=np.int64), rp_ids


def train_classifier(db: FingerprintDb, config: ClassifierConfig, seed: int) -> AfCnnModel:
    """Train the map classifier; deterministic given seed, early-stopped on
    held-out accuracy (stratified 90/10 split)."""
    if len(db.maps) < 2:
        raise InsufficientData("need at least two reference points with maps")
    for rp_id, fmaps in db.maps.items():
        if len(fmaps) < 2:
            raise InsufficientData(f"rp {rp_id} has {len(fmaps)} maps; need >= 2")

    x, y, rp_ids = _db_to_arrays(db)
    split_rng = substream(seed, "split")
    train_idx, val_idx = [], []
    for cls in range(len(rp_ids)):
        members = np.flatnonzero(y == cls)
        members = members[split_rng.permutation(len(members))]
        n_val = max(1, int(round(config.val_fraction * len(members))))
        val_idx.extend(members[:n_val])
        train_idx.extend(members[n_val:])
    train_idx = np.asarray(sorted(train_idx))
    val_idx = np.asarray(sorted(val_idx))

    net = build_classifier_net(db.config.resolution, len(rp_ids), config, substream(seed, "init"))
    state = rmsprop_init(net.parameters())
    model = AfCnnModel(net=net, rp_ids=rp_ids, image_size=db.config.resolution, config=config)

    def val_accuracy():
        net.eval()
        hits = 0
        with no_grad():
            for start in range(0, len(val_idx), config.bs):
                idx = val_idx[start : start + config.bs]
                logits = net(Tensor(x[idx])).data
                hits += int((logits.argmax(axis=1) == y[idx]).sum())
        net.train()
        return hits / len(val_idx)

    best_acc = -1.0
    best_state = None
    stale = 0
    for epoch in range(config.epochs):
        order = substream(seed, "shuffle", epoch).permutation(len(train_idx))
        for start in range(0, len(order), config.bs):
            idx = train_idx[order[start : start + config.bs]]
            net.zero_grad()
            loss = cross_entropy_logits(net(Tensor(x[idx])), y[idx])
            loss.backward()
            grads = [p.grad for p in net.parameters()]
            rmsprop_step(net.parameters(), grads, state, config.lr, direction=-1.0)
        acc = val_accuracy()
        if acc > best_acc:
            best_acc = acc
            best_state = {k: v.copy() for k, v in net.named_state().items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_state is not None:
        net.load_named_state(best_state)
    net.eval()
    return model


def classify(model: AfCnnModel, fmap: FeatureMap) -> np.ndarray:
    """Probability vector over reference points (class order = ascending rp_id)."""
    return classify_batch(model, [fmap])[0]


def classify_batch(model: AfCnnModel, fmaps) -> np.ndarray:
    for fmap in fmaps:
        if fmap.resolution != model.image_size:
            raise ResolutionMismatch(f"map resolution {fmap.resolution} != model {model.image_size}")
    x = np.stack([m.pixels for m in fmaps]).astype(np.float32) / 127.5 - 1.0
    x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    model.net.eval()
    with no_grad():
        logits = model.net(Tensor(x)).data.astype(np.float64)
    return softmax(logits)


def top4_centroid(probs: np.ndarray, grid: RpGrid):
    """Unweighted geometric center of the four best-matching reference points.

    ``probs[i]`` belongs to the grid point with the i-th smallest rp_id.
    Ties break toward the lower rp_id.
    """
    probs = np.asarray(probs, dtype=np.float64)
    ids = np.asarray(sorted(grid.ids))
    if len(ids) < 4:
        raise TooFewClasses(f"grid has {len(ids)} reference points; need >= 4")
    if probs.shape != ids.shape:
        raise ResolutionMismatch(f"probability vector length {probs.shape} != grid size {len(ids)}")
    order = np.lexsort((ids, -probs))[:4]
    coords = {rp_id: (x, y) for rp_id, x, y in grid.points}
    points = np.asarray([coords[int(ids[i])] for i in order])
    center = points.mean(axis=0)
    return float(center[0]), float(center[1])


@dataclass
class LocalizationReport:
    errors: np.ndarray  # metres, test order
    mean: float
    min: float
    max: float
    cdf: list  # (error, cumulative fraction), sorted
    range_probs: dict  # threshold metres -> P(err <= threshold)
    positions: list = field(default_factory=list)  # (x, y) estimates, test order


def evaluate(model: AfCnnModel, tests, grid: RpGrid) -> LocalizationReport:
    """Localize every test map and report error statistics."""
    tests = list(tests)
    if not tests:
        raise InsufficientData("no test maps supplied")
    probs = classify_batch(model, [fmap for fmap, _ in tests])
    errors = np.zeros(len(tests))
    positions = []
    for i, (_, true_pos) in enumerate(tests):
        est = top4_centroid(probs[i], grid)
        positions.append(est)
        errors[i] = float(np.hypot(est[0] - true_pos[0], est[1] - true_pos[1]))
    ordered = np.sort(errors)
    cdf = [(float(e), (i + 1) / len(ordered)) for i, e in enumerate(ordered)]
    range_probs = {t: float(np.mean(errors <= t)) for t in (1.0, 2.0, 3.0)}
    return LocalizationReport(
        errors=errors,
        mean=float(errors.mean()),
        min=float(errors.min()),
        max=float(errors.max()),
        cdf=cdf,
        range_probs=range_probs,
        positions=positions,
    )


def write_report_csv(report: LocalizationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["test_index", "x_estimate", "y_estimate", "error_m"])
        for i, err in enumerate(report.errors):
            x, y = report.positions[i]
            writer.writerow([i, repr(float(x)), repr(float(y)), repr(float(err))])


def write_cdf_csv(report: LocalizationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["error_m", "cumulative_fraction"])
        for err, frac in report.cdf:
            writer.writerow([repr(float(err)), repr(float(frac))])


def report_summary(report: LocalizationReport) -> str:
    lines = [
        f"tests: {len(report.errors)}",
        f"mean error: {report.mean:.3f} m",
        f"min error: {report.min:.3f} m",
        f"max error: {report.max:.3f} m",
    ]
    for t in sorted(report.range_probs):
        lines.append(f"P(err <= {t:.0f} m): {report.range_probs[t]:.1%}")
    return "\n".join(lines)


# -- noise-augmentation baseline ----------------------------------------------------


def amplitude_noise(shape, per_subcarrier_std: np.ndarray, sigma_scale: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian noise, std = sigma_scale * per-subcarrier std."""
    return rng.standard_normal(shape) * (sigma_scale * per_subcarrier_std)[:, None, :]


def adnoi_augment(db: FingerprintDb, sets, fraction: float, sigma_scale: float = 0.05,
                  seed: int = 0) -> FingerprintDb:
    """Expand the database with noise-perturbed re-renders.

    Adds ``round(fraction * maps_per_rp)`` maps per reference point, each a
    fresh subsample draw (indices continue past the initial draws) whose
    amplitude block receives Gaussian noise before rasterization.
    ``sets`` must be the sample sets the database was built from.
    """
    if fraction < 0:
        raise ValueError("fraction must be >= 0")
    count = int(round(fraction * db.config.maps_per_rp))
    if count == 0:
        return merge(db, {})
    extra = {}
    for s in sorted(sets, key=lambda s: s.rp_id):
        if s.rp_id not in db.maps:
            continue
        amps = np.stack([amplitudes(r) for r in s.records])  # (N, links, n_sub)
        std = amps.std(axis=0)  # (links, n_sub)
        fmaps = []
        for j in range(count):
            draw = db.config.maps_per_rp + j  # fresh draws beyond the initial ones
            idx = subsample_indices(len(s.records), db.config, s.rp_id, draw)
            block = np.ascontiguousarray(amps[idx].transpose(1, 0, 2))
            noise_rng = substream(seed, "adnoi", s.rp_id, j)
            noisy = block + amplitude_noise(block.shape, std, sigma_scale, noise_rng)
            fmaps.append(render_map(np.clip(noisy, 0.0, None), db.config, s.rp_id, "noise-augmented", j))
        extra[s.rp_id] = fmaps
    return merge(db, extra)


# -- persistence ----------------------------------------------------------------------


def save_classifier(model: AfCnnModel, path) -> None:
    meta = {
        "kind": "map-classifier",
        "rp_ids": list(model.rp_ids),
        "image_size": model.image_size,
        "config": {
            "lr": model.config.lr,
            "bs": model.config.bs,
            "epochs": model.config.epochs,
            "patience": model.config.patience,
            "val_fraction": model.config.val_fraction,
            "conv_widths": list(model.config.conv_widths),
            "fc_width": model.config.fc_width,
        },
    }
    save_tensors(path, model.net.named_state(), meta)


def load_classifier(path) -> AfCnnModel:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "map-classifier":
        raise ValueError(f"{path}: not a classifier checkpoint")
    cfg_obj = dict(meta["config"])
    cfg_obj["conv_widths"] = tuple(cfg_obj["conv_widths"])
    config = ClassifierConfig(**cfg_obj)
    rp_ids = tuple(int(i) for i in meta["rp_ids"])
    net = build_classifier_net(int(meta["image_size"]), len(rp_ids), config, substream(0, "load"))
    net.load_named_state(tensors)
    net.eval()
    return AfCnnModel(net=net, rp_ids=rp_ids, image_size=int(meta["image_size"]), config=config)
