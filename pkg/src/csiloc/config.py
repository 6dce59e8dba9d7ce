"""Pipeline configuration: flat dotted keys in UTF-8 text.

Format: one ``key = value`` per line, ``#`` comments, blank lines ignored.
Command-line flags override file values; the resolved mapping (defaults
plus file plus flags) is what gets hashed into artifact manifests, so a
manifest always pins the exact configuration that produced the artifact.
"""

import hashlib
from dataclasses import dataclass, field

from .featuremap import FeatureMapConfig
from .gan import HyperParams
from .ingest import CaptureMeta
from .locate import ClassifierConfig
from .synth import SynthConfig

DEFAULTS = {
    "seed": "0",
    "workers": "1",
    "fixed_reduction": "false",
    "grid.nx": "7",
    "grid.ny": "7",
    "grid.spacing": "1.0",
    "capture.n_tx": "1",
    "capture.n_rx": "3",
    "capture.n_sub": "30",
    "capture.n_ap": "1",
    "capture.packet_rate": "2.5",
    "synth.samples_per_rp": "200",
    "synth.paths": "5",
    "synth.room_w": "7.0",
    "synth.room_d": "7.0",
    "synth.tx_x": "3.5",
    "synth.tx_y": "-0.5",
    "synth.rx_x": "3.5",
    "synth.rx_y": "7.5",
    "synth.carrier_spacing": "312500.0",
    "synth.noise_sigma": "0.1",
    "synth.phase_jitter": "0.05",
    "synth.test_points": "0",
    "featuremap.rows_per_map": "100",
    "featuremap.maps_per_rp": "200",
    "featuremap.resolution": "256",
    "featuremap.amp_max": "",
    "gan.lr": "0.0002",
    "gan.c": "0.01",
    "gan.bs": "49",
    "gan.f_d": "2",
    "gan.z_dim": "100",
    "gan.epochs": "300",
    "gan.base_width": "0",
    "generate.count": "300",
    "adnoi.fraction": "1.0",
    "adnoi.sigma_scale": "0.05",
    "classifier.lr": "0.001",
    "classifier.bs": "64",
    "classifier.epochs": "30",
    "classifier.patience": "3",
    "classifier.val_fraction": "0.1",
    "evaluate.maps_per_point": "5",
}


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"config line {lineno}: empty key")
        values[key] = value.strip()
    return values


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides=None) -> "PipelineConfig":
        values = dict(DEFAULTS)
        if path is not None:
            with open(path, "r", encoding="utf-8") as f:
                file_values = parse_config_text(f.read())
            unknown = set(file_values) - set(DEFAULTS)
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            values.update(file_values)
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = str(value)
        return cls(values=values)

    def _get(self, key):
        return self.values[key]

    def get_int(self, key) -> int:
        return int(self._get(key))

    def get_float(self, key) -> float:
        return float(self._get(key))

    def get_bool(self, key) -> bool:
        return self._get(key).lower() in ("1", "true", "yes", "on")

    @property
    def seed(self) -> int:
        return self.get_int("seed")

    @property
    def workers(self) -> int:
        return self.get_int("workers")

    @property
    def fixed_reduction(self) -> bool:
        return self.get_bool("fixed_reduction")

    def config_hash(self) -> str:
        canonical = "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def manifest_entry(self, command: str, inputs) -> dict:
        # "run_config" rather than "config": database manifests keep their own
        # "config" key for the feature-map settings.
        return {
            "command": command,
            "run_config": dict(sorted(self.values.items())),
            "config_hash": self.config_hash(),
            "seed": self.seed,
            "inputs": [str(p) for p in inputs],
        }

    # -- typed sub-configs ---------------------------------------------------

    def capture_meta(self) -> CaptureMeta:
        return CaptureMeta(
            n_tx=self.get_int("capture.n_tx"),
            n_rx=self.get_int("capture.n_rx"),
            n_sub=self.get_int("capture.n_sub"),
            n_ap=self.get_int("capture.n_ap"),
            packet_rate=self.get_float("capture.packet_rate"),
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            paths=self.get_int("synth.paths"),
            room=(self.get_float("synth.room_w"), self.get_float("synth.room_d")),
            tx_pos=(self.get_float("synth.tx_x"), self.get_float("synth.tx_y")),
            rx_pos=(self.get_float("synth.rx_x"), self.get_float("synth.rx_y")),
            carrier_spacing=self.get_float("synth.carrier_spacing"),
            noise_sigma=self.get_float("synth.noise_sigma"),
            phase_jitter=self.get_float("synth.phase_jitter"),
            seed=self.seed,
        )

    def featuremap_config(self) -> FeatureMapConfig:
        amp_max = self.values["featuremap.amp_max"]
        return FeatureMapConfig(
            rows_per_map=self.get_int("featuremap.rows_per_map"),
            maps_per_rp=self.get_int("featuremap.maps_per_rp"),
            resolution=self.get_int("featuremap.resolution"),
            amp_max=float(amp_max) if amp_max else None,
            seed=self.seed,
        )

    def gan_hyperparams(self) -> HyperParams:
        return HyperParams(
            lr=self.get_float("gan.lr"),
            c=self.get_float("gan.c"),
            bs=self.get_int("gan.bs"),
            f_d=self.get_int("gan.f_d"),
            z_dim=self.get_int("gan.z_dim"),
            epochs=self.get_int("gan.epochs"),
            image_size=self.get_int("featuremap.resolution"),
            base_width=self.get_int("gan.base_width"),
        )

    def classifier_config(self) -> ClassifierConfig:
        return ClassifierConfig(
            lr=self.get_float("classifier.lr"),
            bs=self.get_int("classifier.bs"),
            epochs=self.get_int("classifier.epochs"),
            patience=self.get_int("classifier.patience"),
            val_fraction=self.get_float("classifier.val_fraction"),
        )
