"""Amplitude feature maps and the fingerprint database.

A feature map plots, for every selected capture record, the amplitude
polyline over the subcarrier axis; each antenna link draws into its own
color channel. Rasterization is integer-exact and seeded, so databases are
byte-identical across runs: subcarrier k (1-based) lands on column
``(k-1)*(res-1) // (n_sub-1)`` and amplitude ``a`` lands on row
``floor((res-1) * (1 - min(a, amp_max)/amp_max))`` (row 0 on top, so zero
amplitude sits on the bottom row and the ceiling on the top row).

The vertical scale ``amp_max`` is frozen once per database (99.5th
percentile of all training amplitudes) and reused for every later render,
including test-time maps, so images remain comparable.
"""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from . import kernels
from .errors import (
    InsufficientSamples,
    ResolutionMismatch,
    TooManyLinks,
    UnknownReferencePoint,
)
from .ingest import CsiSampleSet, RpGrid, amplitudes
from .rng import substream

PROVENANCES = ("real", "generated", "noise-augmented")
STROKE = 255
MAX_LINKS = 3  # one color channel per link
_PERCENTILE = 99.5
_PERCENTILE_SAMPLE_CAP = 4_000_000


@dataclass(frozen=True)
class FeatureMapConfig:
    rows_per_map: int = 100
    maps_per_rp: int = 200
    resolution: int = 256
    amp_max: float | None = None  # frozen by build_initial_db when unset
    seed: int = 0

    def __post_init__(self):
        if self.rows_per_map < 1:
            raise ValueError("rows_per_map must be >= 1")
        if self.maps_per_rp < 1:
            raise ValueError("maps_per_rp must be >= 1")
        if self.resolution < 8:
            raise ValueError("resolution must be >= 8")
        if self.amp_max is not None and not (self.amp_max > 0):
            raise ValueError("amp_max must be positive")


@dataclass(eq=False)
class FeatureMap:
    rp_id: int
    pixels: np.ndarray  # (resolution, resolution, 3) uint8
    provenance: str
    draw_index: int = 0

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise ResolutionMismatch(f"pixels must be square RGB, got {self.pixels.shape}")

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]


@dataclass(eq=False)
class FingerprintDb:
    grid: RpGrid
    maps: dict = field(default_factory=dict)
    config: FeatureMapConfig = field(default_factory=FeatureMapConfig)

    def __post_init__(self):
        known = set(self.grid.ids)
        for rp_id, fmaps in self.maps.items():
            if rp_id not in known:
                raise UnknownReferencePoint(f"rp_id {rp_id} not in grid")
            for fmap in fmaps:
                if fmap.resolution != self.config.resolution:
                    raise ResolutionMismatch(
                        f"map at rp {rp_id} has resolution {fmap.resolution}, db uses {self.config.resolution}"
                    )

    def total_maps(self) -> int:
        return sum(len(v) for v in self.maps.values())


# -- subsampling ----------------------------------------------------------------


def subsample_indices(n_records: int, config: FeatureMapConfig, rp_id: int, draw_index: int) -> np.ndarray:
    """Deterministic uniform draw of rows_per_map record indices, sorted."""
    if n_records < config.rows_per_map:
        raise InsufficientSamples(f"need {config.rows_per_map} records, have {n_records}")
    rng = substream(config.seed, "subsample", rp_id, draw_index)
    idx = rng.choice(n_records, size=config.rows_per_map, replace=False)
    return np.sort(idx)


def subsample_rows(sample_set: CsiSampleSet, config: FeatureMapConfig, draw_index: int) -> np.ndarray:
    """Amplitude block (links, rows_per_map, n_sub) for one seeded draw."""
    idx = subsample_indices(len(sample_set.records), config, sample_set.rp_id, draw_index)
    rows = np.stack([amplitudes(sample_set.records[i]) for i in idx])  # (rows, links, n_sub)
    return np.ascontiguousarray(rows.transpose(1, 0, 2))


# -- rasterization ----------------------------------------------------------------


def _column_positions(n_sub: int, resolution: int) -> np.ndarray:
    if n_sub == 1:
        return np.zeros(1, dtype=np.int64)
    k = np.arange(n_sub, dtype=np.int64)
    return (k * (resolution - 1)) // (n_sub - 1)


def amplitude_rows(amps: np.ndarray, resolution: int, amp_max: float) -> np.ndarray:
    """Map amplitudes onto pixel rows; values above amp_max clamp to the top."""
    a = np.clip(amps, 0.0, amp_max)
    return np.floor((resolution - 1) * (1.0 - a / amp_max)).astype(np.int64)


def render_map(
    block: np.ndarray,
    config: FeatureMapConfig,
    rp_id: int,
    provenance: str = "real",
    draw_index: int = 0,
) -> FeatureMap:
    """Rasterize one amplitude block into a feature map.

    ``block`` has shape (links, records, subcarriers). Each record's
    polyline is drawn with Bresenham strokes of value 255 into the channel
    of its link; strokes overwrite, background stays 0.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 3:
        raise ValueError(f"block must be (links, records, subcarriers), got {block.shape}")
    n_links, _, n_sub = block.shape
    if n_links > MAX_LINKS:
        raise TooManyLinks(f"{n_links} links exceed the {MAX_LINKS} color channels")
    if config.amp_max is None:
        raise ValueError("config.amp_max is not frozen; build the database first")
    res = config.resolution
    xs_row = _column_positions(n_sub, res)
    channels = []
    for m in range(n_links):
        canvas = np.zeros((res, res), dtype=np.uint8)
        ys = amplitude_rows(block[m], res, config.amp_max)
        xs = np.broadcast_to(xs_row, ys.shape)
        kernels.draw_polylines(canvas, xs, ys, STROKE)
        channels.append(canvas)
    while len(channels) < 3:
        channels.append(np.zeros((res, res), dtype=np.uint8))
    pixels = np.ascontiguousarray(np.stack(channels, axis=-1))
    return FeatureMap(rp_id=rp_id, pixels=pixels, provenance=provenance, draw_index=draw_index)


# -- database construction ----------------------------------------------------------


def _set_amplitudes(sample_set: CsiSampleSet) -> np.ndarray:
    return np.stack([amplitudes(r) for r in sample_set.records])  # (N_X, links, n_sub)


def freeze_amp_max(sets) -> float:
    """99.5th percentile of all training amplitudes (strided above the cap)."""
    flat = np.concatenate([_set_amplitudes(s).ravel() for s in sets])
    if flat.size > _PERCENTILE_SAMPLE_CAP:
        stride = int(np.ceil(flat.size / _PERCENTILE_SAMPLE_CAP))
        flat = flat[::stride]
    value = float(np.percentile(flat, _PERCENTILE))
    if value <= 0:
        value = max(float(flat.max()), 1.0)
    return value


def build_initial_db(sets, grid: RpGrid, config: FeatureMapConfig) -> FingerprintDb:
    """Render maps_per_rp seeded draws per reference point (provenance real)."""
    known = set(grid.ids)
    for s in sets:
        if s.rp_id not in known:
            raise UnknownReferencePoint(f"rp_id {s.rp_id} not in grid")
    if config.amp_max is None:
        config = replace(config, amp_max=freeze_amp_max(sets))
    maps = {}
    for s in sorted(sets, key=lambda s: s.rp_id):
        amps = _set_amplitudes(s)
        rendered = []
        for draw in range(config.maps_per_rp):
            idx = subsample_indices(len(s.records), config, s.rp_id, draw)
            block = np.ascontiguousarray(amps[idx].transpose(1, 0, 2))
            rendered.append(render_map(block, config, s.rp_id, "real", draw))
        maps[s.rp_id] = rendered
    return FingerprintDb(grid=grid, maps=maps, config=config)


def merge(db: FingerprintDb, extra: dict) -> FingerprintDb:
    """New database with per-RP sequences concatenated; originals untouched."""
    known = set(db.grid.ids)
    for rp_id, fmaps in extra.items():
        if rp_id not in known:
            raise UnknownReferencePoint(f"rp_id {rp_id} not in grid")
        for fmap in fmaps:
            if fmap.resolution != db.config.resolution:
                raise ResolutionMismatch(
                    f"extra map at rp {rp_id}: resolution {fmap.resolution} != {db.config.resolution}"
                )
    maps = {rp_id: list(fmaps) for rp_id, fmaps in db.maps.items()}
    for rp_id, fmaps in extra.items():
        maps.setdefault(rp_id, [])
        maps[rp_id] = maps[rp_id] + list(fmaps)
    return FingerprintDb(grid=db.grid, maps=maps, config=db.config)


# -- persistence ----------------------------------------------------------------


def _config_to_json(config: FeatureMapConfig) -> dict:
    return {
        "rows_per_map": config.rows_per_map,
        "maps_per_rp": config.maps_per_rp,
        "resolution": config.resolution,
        "amp_max": config.amp_max,
        "seed": config.seed,
    }


def _config_from_json(obj: dict) -> FeatureMapConfig:
    return FeatureMapConfig(
        rows_per_map=obj["rows_per_map"],
        maps_per_rp=obj["maps_per_rp"],
        resolution=obj["resolution"],
        amp_max=obj["amp_max"],
        seed=obj["seed"],
    )


def save_db(db: FingerprintDb, path, extra_manifest: dict | None = None) -> None:
    """Write PNG directories (one per rp_id) plus a manifest.json."""
    os.makedirs(path, exist_ok=True)
    manifest_maps = {}
    for rp_id in sorted(db.maps):
        rp_dir = f"rp_{rp_id:03d}"
        os.makedirs(os.path.join(path, rp_dir), exist_ok=True)
        entries = []
        seen = set()
        for fmap in db.maps[rp_id]:
            name = f"{fmap.provenance}_{fmap.draw_index}.png"
            if name in seen:
                raise ValueError(f"duplicate map file {rp_dir}/{name}")
            seen.add(name)
            Image.fromarray(fmap.pixels, mode="RGB").save(os.path.join(path, rp_dir, name))
            entries.append({"file": f"{rp_dir}/{name}", "provenance": fmap.provenance, "draw_index": fmap.draw_index})
        manifest_maps[str(rp_id)] = entries
    manifest = {
        "grid": {"spacing": db.grid.spacing, "points": [list(p) for p in db.grid.points]},
        "config": _config_to_json(db.config),
        "maps": manifest_maps,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


def load_rp_maps(path, rp_id: int):
    """Load only one reference point's maps (workers avoid the full database)."""
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    entries = manifest["maps"].get(str(rp_id))
    if entries is None:
        raise UnknownReferencePoint(f"rp_id {rp_id} not in database at {path}")
    fmaps = []
    for entry in entries:
        with Image.open(os.path.join(path, entry["file"])) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
        fmaps.append(FeatureMap(rp_id=rp_id, pixels=pixels, provenance=entry["provenance"],
                                draw_index=entry["draw_index"]))
    return fmaps


def load_db(path) -> FingerprintDb:
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    grid = RpGrid(
        points=tuple((int(p[0]), float(p[1]), float(p[2])) for p in manifest["grid"]["points"]),
        spacing=float(manifest["grid"]["spacing"]),
    )
    config = _config_from_json(manifest["config"])
    maps = {}
    for rp_key, entries in manifest["maps"].items():
        rp_id = int(rp_key)
        fmaps = []
        for entry in entries:
            with Image.open(os.path.join(path, entry["file"])) as img:
                pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
            fmaps.append(
                FeatureMap(
                    rp_id=rp_id,
                    pixels=pixels,
                    provenance=entry["provenance"],
                    draw_index=entry["draw_index"],
                )
            )
        maps[rp_id] = fmaps
    return FingerprintDb(grid=grid, maps=maps, config=config)
