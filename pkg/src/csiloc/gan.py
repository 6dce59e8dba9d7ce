"""Per-reference-point adversarial map generation.

Generator and critic follow the classic all-convolutional image-GAN stack:
the generator projects uniform noise through a fully connected layer onto a
4x4 grid and doubles the spatial side with stride-2 deconvolutions (batch
norm + relu between stages, terminal tanh, no squashing anywhere in the
critic); the critic mirrors it with stride-2 convolutions and leaky relu,
ending in one unbounded linear score per image.

Training follows the clipped-critic schedule: per outer iteration, ``f_d``
critic ascent steps on ``mean f(real) - mean f(fake)`` with RMSProp and a
hard clip of every critic weight to [-c, c], then one generator step that
applies RMSProp to the negated gradient of ``mean f(fake)``. Scores enter
the losses through a frozen affine rescale: the first real batch's raw
score minimum/maximum map to 0/1 and stay fixed for the rest of training,
with out-of-range scores clamped (clamped scores contribute zero
gradient). Raw scores remain visible in telemetry.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCalibration, NonFiniteLoss, ShapeMismatch
from .featuremap import FeatureMap
from .nn import Sequential, Tensor, no_grad
from .nn.checkpoint import load_tensors, save_tensors
from .nn.layers import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Flatten,
    LeakyReLU,
    Linear,
    ReLU,
    Reshape,
    Tanh,
)
from .nn.optim import clip_weights, rmsprop_init, rmsprop_step
from .rng import substream

_MIN_CALIBRATION_SPAN = 1e-12


@dataclass(frozen=True)
class HyperParams:
    lr: float = 2e-4
    c: float = 0.01
    bs: int = 49
    f_d: int = 2
    z_dim: int = 100
    epochs: int = 300  # outer iterations of the training schedule
    image_size: int = 256
    base_width: int = 0  # 0 derives the channel base from image_size

    def __post_init__(self):
        if self.lr <= 0 or self.c <= 0:
            raise ValueError("lr and c must be positive")
        if self.bs < 1 or self.f_d < 1 or self.z_dim < 1 or self.epochs < 0:
            raise ValueError("bs, f_d, z_dim must be >= 1 and epochs >= 0")
        size = self.image_size
        if size < 8 or size & (size - 1):
            raise ValueError("image_size must be a power of two >= 8")

    @property
    def base(self) -> int:
        if self.base_width:
            return self.base_width
        return min(64, max(16, 64 * self.image_size // 256))


@dataclass
class NormCalibration:
    """First-batch score anchors for the affine rescale onto [0, 1]."""

    d_min: float = 0.0
    d_max: float = 1.0
    frozen: bool = False

    def freeze(self, scores) -> "NormCalibration":
        if self.frozen:
            raise DegenerateCalibration("calibration already frozen")
        scores = np.asarray(scores, dtype=np.float64).ravel()
        if scores.size < 2:
            raise DegenerateCalibration("need at least two scores to calibrate")
        lo, hi = float(scores.min()), float(scores.max())
        if hi - lo < _MIN_CALIBRATION_SPAN:
            raise DegenerateCalibration(f"score span {hi - lo:.3e} too small to normalize")
        self.d_min, self.d_max, self.frozen = lo, hi, True
        return self

    @property
    def span(self) -> float:
        return self.d_max - self.d_min


def d_norm(score, calib: NormCalibration):
    """Affine rescale of raw scores onto [0, 1], clamped outside the anchors."""
    if not calib.frozen:
        raise ValueError("calibration is not frozen")
    return np.clip((np.asarray(score, dtype=np.float64) - calib.d_min) / calib.span, 0.0, 1.0)


def _normalized_scores(scores: Tensor, calib: NormCalibration) -> Tensor:
    if not calib.frozen:
        raise ValueError("calibration is not frozen")
    return ((scores - calib.d_min) * (1.0 / calib.span)).clamp(0.0, 1.0)


def calibrate_first_batch(discriminator: Sequential, first_batch: np.ndarray) -> NormCalibration:
    """Freeze normalization anchors from the raw scores of one batch."""
    if first_batch.shape[0] < 2:
        raise DegenerateCalibration("calibration batch must hold at least two images")
    with no_grad():
        scores = discriminator(Tensor(first_batch)).data
    return NormCalibration().freeze(scores)


# -- architecture ----------------------------------------------------------------


def _stage_count(image_size: int) -> int:
    stages = 0
    side = 4
    while side < image_size:
        side *= 2
        stages += 1
    return stages


def build_generator(hp: HyperParams, rng: np.random.Generator, dtype=np.float32) -> Sequential:
    stages = _stage_count(hp.image_size)
    ch = 8 * hp.base
    layers = [
        Linear(hp.z_dim, 4 * 4 * ch, rng=rng, dtype=dtype),
        Reshape(ch, 4, 4),
        BatchNorm2d(ch, dtype=dtype),
        ReLU(),
    ]
    for stage in range(stages):
        last = stage == stages - 1
        out_ch = 3 if last else ch // 2
        layers.append(ConvTranspose2d(ch, out_ch, 4, stride=2, padding=1, rng=rng, dtype=dtype))
        if last:
            layers.append(Tanh())
        else:
            layers.append(BatchNorm2d(out_ch, dtype=dtype))
            layers.append(ReLU())
        ch = out_ch
    return Sequential(layers)


def build_discriminator(hp: HyperParams, rng: np.random.Generator, dtype=np.float32) -> Sequential:
    stages = _stage_count(hp.image_size)
    top = 8 * hp.base
    layers = []
    ch = 3
    for stage in range(stages):
        out_ch = top // 2 ** (stages - 1 - stage)
        layers.append(Conv2d(ch, out_ch, 4, stride=2, padding=1, rng=rng, dtype=dtype))
        if stage > 0:
            layers.append(BatchNorm2d(out_ch, dtype=dtype))
        layers.append(LeakyReLU(0.2))
        ch = out_ch
    layers.append(Flatten())
    layers.append(Linear(4 * 4 * ch, 1, rng=rng, dtype=dtype))  # raw score, no squashing
    return Sequential(layers)


def generator_forward(generator: Sequential, z: np.ndarray) -> np.ndarray:
    """Images in [-1, 1] for a batch of noise vectors."""
    with no_grad():
        return generator(Tensor(np.asarray(z, dtype=np.float32))).data


def discriminator_forward(discriminator: Sequential, images: np.ndarray) -> np.ndarray:
    """Raw per-image critic scores (no terminal squashing)."""
    with no_grad():
        return discriminator(Tensor(np.asarray(images, dtype=np.float32))).data.ravel()


# -- model -----------------------------------------------------------------------


@dataclass
class TrainStats:
    d_updates: int = 0
    g_updates: int = 0
    calibrated_before_update: int = -1  # critic update count when anchors froze
    max_w_after_update: list = field(default_factory=list)
    telemetry: list = field(default_factory=list)  # (iter, d_loss, g_loss, clamp_frac, clip_frac)


@dataclass(eq=False)
class GanModel:
    generator: Sequential
    discriminator: Sequential
    calib: NormCalibration
    hp: HyperParams
    rp_id: int
    stats: TrainStats | None = None

    @property
    def theta(self):
        return [p.data for p in self.generator.parameters()]

    @property
    def w(self):
        return [p.data for p in self.discriminator.parameters()]


def maps_to_training_array(db_maps) -> np.ndarray:
    """uint8 HWC maps -> float32 NCHW batch in [-1, 1]."""
    batch = np.stack([m.pixels for m in db_maps]).astype(np.float32)
    return np.ascontiguousarray((batch / 127.5 - 1.0).transpose(0, 3, 1, 2))


def images_to_pixels(images: np.ndarray) -> np.ndarray:
    """float NCHW batch in [-1, 1] -> uint8 HWC pixels."""
    px = np.rint((images.transpose(0, 2, 3, 1) + 1.0) * 127.5)
    return np.clip(px, 0, 255).astype(np.uint8)


def train(db_maps, hp: HyperParams, seed: int, rp_id: int | None = None,
          telemetry_path=None, checkpoint_path=None) -> GanModel:
    """Run the clipped-critic schedule on one reference point's maps.

    Deterministic given (db_maps, hp, seed). Telemetry rows land in the
    returned model's stats and, when ``telemetry_path`` is given, in a CSV.
    On a non-finite loss the current parameters are checkpointed (when
    ``checkpoint_path`` is given) and ``NonFiniteLoss`` is raised.
    """
    if not db_maps:
        raise ValueError("db_maps must be nonempty")
    if rp_id is None:
        rp_id = db_maps[0].rp_id
    for m in db_maps:
        if m.resolution != hp.image_size:
            raise ShapeMismatch(f"map resolution {m.resolution} != hp.image_size {hp.image_size}")

    data = maps_to_training_array(db_maps)
    n = data.shape[0]

    generator = build_generator(hp, substream(seed, "init", "gen", rp_id))
    discriminator = build_discriminator(hp, substream(seed, "init", "disc", rp_id))
    batch_rng = substream(seed, "batches", rp_id)
    noise_rng = substream(seed, "noise", rp_id)

    g_state = rmsprop_init(generator.parameters())
    d_state = rmsprop_init(discriminator.parameters())
    stats = TrainStats()
    calib = NormCalibration()
    model = GanModel(generator, discriminator, calib, hp, rp_id, stats)

    def sample_real():
        idx = batch_rng.choice(n, size=hp.bs, replace=n < hp.bs)
        return data[idx]

    def sample_noise():
        return noise_rng.uniform(-1.0, 1.0, size=(hp.bs, hp.z_dim)).astype(np.float32)

    def fail(kind, value):
        if checkpoint_path is not None:
            save_model(model, checkpoint_path)
        raise NonFiniteLoss(f"{kind} loss became non-finite ({value}) at iteration {iteration}")

    iteration = 0
    for iteration in range(hp.epochs):
        clamp_hits = 0
        score_count = 0
        d_loss_value = float("nan")
        for _ in range(hp.f_d):
            real = sample_real()
            z = sample_noise()
            with no_grad():
                fake_images = generator(Tensor(z)).data

            if not calib.frozen:
                # Anchors come from the first real batch through the critic;
                # the same batch then feeds the first update.
                with no_grad():
                    first_scores = discriminator(Tensor(real)).data
                calib.freeze(first_scores)
                stats.calibrated_before_update = stats.d_updates

            discriminator.zero_grad()
            s_real = discriminator(Tensor(real))
            s_fake = discriminator(Tensor(fake_images))
            d_obj = _normalized_scores(s_real, calib).mean() - _normalized_scores(s_fake, calib).mean()
            value = d_obj.item()
            if not np.isfinite(value):
                fail("critic", value)
            d_loss_value = value
            d_obj.backward()
            d_grads = [p.grad for p in discriminator.parameters()]
            rmsprop_step(discriminator.parameters(), d_grads, d_state, hp.lr, direction=+1.0)
            clip_weights(discriminator.parameters(), hp.c)
            stats.d_updates += 1
            stats.max_w_after_update.append(max(float(np.max(np.abs(p.data))) for p in discriminator.parameters()))

            raw = np.concatenate([s_real.data.ravel(), s_fake.data.ravel()])
            clamp_hits += int(((raw < calib.d_min) | (raw > calib.d_max)).sum())
            score_count += raw.size

        z = sample_noise()
        generator.zero_grad()
        discriminator.zero_grad()
        g_scores = discriminator(generator(Tensor(z)))
        g_obj = _normalized_scores(g_scores, calib).mean()
        g_value = g_obj.item()
        if not np.isfinite(g_value):
            fail("generator", g_value)
        g_obj.backward()
        g_grads = [-p.grad for p in generator.parameters()]  # schedule prescribes the negated gradient
        rmsprop_step(generator.parameters(), g_grads, g_state, hp.lr, direction=-1.0)
        stats.g_updates += 1

        raw = g_scores.data.ravel()
        clamp_hits += int(((raw < calib.d_min) | (raw > calib.d_max)).sum())
        score_count += raw.size

        w_values = np.concatenate([p.data.ravel() for p in discriminator.parameters()])
        clip_fraction = float(np.mean(np.abs(w_values) >= hp.c))
        stats.telemetry.append(
            (iteration, d_loss_value, g_value, clamp_hits / max(1, score_count), clip_fraction)
        )

    if telemetry_path is not None:
        write_telemetry(telemetry_path, stats.telemetry)
    return model


def write_telemetry(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "d_loss", "g_loss", "clamp_fraction", "clip_fraction"])
        for row in rows:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def generate_maps(model: GanModel, count: int, seed: int):
    """``count`` generated feature maps for the model's reference point."""
    rng = substream(seed, "generate", model.rp_id)
    was_training = model.generator.training
    model.generator.eval()
    maps = []
    try:
        produced = 0
        while produced < count:
            take = min(model.hp.bs, count - produced)
            z = rng.uniform(-1.0, 1.0, size=(take, model.hp.z_dim)).astype(np.float32)
            images = generator_forward(model.generator, z)
            for i, px in enumerate(images_to_pixels(images)):
                maps.append(FeatureMap(rp_id=model.rp_id, pixels=px, provenance="generated",
                                       draw_index=produced + i))
            produced += take
    finally:
        model.generator.train(was_training)
    return maps


# -- persistence -----------------------------------------------------------------


def _hp_to_json(hp: HyperParams) -> dict:
    return {
        "lr": hp.lr, "c": hp.c, "bs": hp.bs, "f_d": hp.f_d, "z_dim": hp.z_dim,
        "epochs": hp.epochs, "image_size": hp.image_size, "base_width": hp.base_width,
    }


def _hp_from_json(obj: dict) -> HyperParams:
    return HyperParams(**obj)


def save_model(model: GanModel, path) -> None:
    tensors = {}
    tensors.update(model.generator.named_state("g."))
    tensors.update(model.discriminator.named_state("d."))
    meta = {
        "kind": "map-gan",
        "rp_id": model.rp_id,
        "hp": _hp_to_json(model.hp),
        "calib": {"d_min": model.calib.d_min, "d_max": model.calib.d_max, "frozen": model.calib.frozen},
    }
    save_tensors(path, tensors, meta)


def load_model(path) -> GanModel:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "map-gan":
        raise ValueError(f"{path}: not a map-gan checkpoint")
    hp = _hp_from_json(meta["hp"])
    generator = build_generator(hp, substream(0, "load"))
    discriminator = build_discriminator(hp, substream(0, "load"))
    generator.load_named_state(tensors, "g.")
    discriminator.load_named_state(tensors, "d.")
    calib = NormCalibration(**meta["calib"])
    return GanModel(generator, discriminator, calib, hp, int(meta["rp_id"]))
