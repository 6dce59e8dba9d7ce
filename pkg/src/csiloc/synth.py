"""Position-dependent synthetic CSI.

Baseband multipath model: every propagation path is routed through the
standing position (device-free capture abstracted as position-dependent
scattering). Path 0 uses the transmitter directly, paths 1-4 use its
first-order mirror images across the four room walls, and any further
paths use fixed random scatterer locations drawn once per environment
seed. For subcarrier k (1-based) at frequency offset f_k = k * spacing,

    h[m, k] = sum_p g_pm * exp(i * (chi_pm - 2*pi*f_k*tau_p)) + noise,

with tau_p the total path delay, g_pm ~ 1/(1 + path length) times a seeded
per-path-per-link gain, and chi_pm a seeded static phase. Per-packet
variation enters only through complex Gaussian noise and a small seeded
per-path phase jitter. No carrier term is modeled, so amplitude patterns
decorrelate smoothly over meters rather than centimeters; nearby positions
look similar, distant ones different.
"""

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRoom
from .ingest import CaptureMeta, CsiRecord, CsiSampleSet, RpGrid
from .rng import substream

SPEED_OF_LIGHT = 299792458.0
_ANTENNA_SPACING = 0.06  # metres between receive/transmit array elements
_GAIN_SCALE = 40.0
_GAIN_EXP = 1.0  # path-loss exponent on (1 + path length)
_DIRECT_AMP = (1.5, 2.5)
_REFLECT_AMP = (0.3, 1.0)


@dataclass(frozen=True)
class SynthConfig:
    paths: int = 5
    room: tuple = (7.0, 7.0)
    tx_pos: tuple = (3.5, -0.5)
    rx_pos: tuple = (3.5, 7.5)
    carrier_spacing: float = 312.5e3
    noise_sigma: float = 0.1
    phase_jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.room[0] <= 0 or self.room[1] <= 0:
            raise ValueError("room dimensions must be positive")
        if self.carrier_spacing <= 0:
            raise ValueError("carrier_spacing must be positive")
        if self.noise_sigma < 0 or self.phase_jitter < 0:
            raise ValueError("noise_sigma and phase_jitter must be >= 0")


def _antenna(base, index, count):
    return (base[0] + (index - (count - 1) / 2.0) * _ANTENNA_SPACING, base[1])


def _environment(cfg: SynthConfig, meta: CaptureMeta):
    """Static per-seed environment: path sources, gains, phases."""
    w, d = cfg.room
    tx = cfg.tx_pos

    def mirrors(point):
        x, y = point
        return [
            (x, y),
            (-x, y),
            (2 * w - x, y),
            (x, -y),
            (x, 2 * d - y),
        ]

    n_links = meta.n_links
    sources = []  # per path: per-tx-antenna source point
    for p in range(cfg.paths):
        if p < 5:
            per_tx = [mirrors(_antenna(tx, u, meta.n_tx))[p] for u in range(meta.n_tx)]
        else:
            rng = substream(cfg.seed, "env-scatter", p)
            point = (float(rng.uniform(0, w)), float(rng.uniform(0, d)))
            per_tx = [point] * meta.n_tx
        sources.append(per_tx)

    amps = np.zeros((cfg.paths, n_links))
    phases = np.zeros((cfg.paths, n_links))
    for p in range(cfg.paths):
        lo, hi = _DIRECT_AMP if p == 0 else _REFLECT_AMP
        for m in range(n_links):
            rng = substream(cfg.seed, "env", p, m)
            amps[p, m] = rng.uniform(lo, hi)
            phases[p, m] = rng.uniform(0.0, 2 * np.pi)
    return sources, amps, phases


def synth_record(pos, meta: CaptureMeta, cfg: SynthConfig, packet_index: int,
                 _env=None) -> CsiRecord:
    """One synthetic capture packet at ``pos`` (metres inside the room)."""
    x, y = pos
    if not (0.0 <= x <= cfg.room[0] and 0.0 <= y <= cfg.room[1]):
        raise OutOfRoom(f"position {pos} outside room {cfg.room}")
    sources, amps, phases = _env if _env is not None else _environment(cfg, meta)

    n_links = meta.n_links
    f_k = (np.arange(1, meta.n_sub + 1) * cfg.carrier_spacing)[None, :]  # (1, n_sub)

    pkt_rng = substream(cfg.seed, "pkt", float(x), float(y), packet_index)
    jitter = pkt_rng.normal(0.0, cfg.phase_jitter, size=(cfg.paths, n_links)) if cfg.phase_jitter > 0 else np.zeros((cfg.paths, n_links))

    h = np.zeros((n_links, meta.n_sub), dtype=np.complex128)
    for p in range(cfg.paths):
        for u in range(meta.n_tx):
            sx, sy = sources[p][u]
            leg_in = np.hypot(sx - x, sy - y)
            for v in range(meta.n_rx):
                rx, ry = _antenna(cfg.rx_pos, v, meta.n_rx)
                m = u * meta.n_rx + v
                length = leg_in + np.hypot(x - rx, y - ry)
                tau = length / SPEED_OF_LIGHT
                gain = amps[p, m] * _GAIN_SCALE / (1.0 + length) ** _GAIN_EXP
                theta = phases[p, m] + jitter[p, m] - 2.0 * np.pi * f_k * tau
                h[m, :] += gain * np.exp(1j * theta[0])
    if cfg.noise_sigma > 0:
        scale = cfg.noise_sigma / np.sqrt(2.0)
        noise = pkt_rng.normal(0.0, scale, size=(n_links, meta.n_sub)) + 1j * pkt_rng.normal(
            0.0, scale, size=(n_links, meta.n_sub)
        )
        h += noise

    timestamp = int(round(packet_index * 1e6 / meta.packet_rate))
    return CsiRecord(meta=meta, h=h, timestamp=timestamp)


def synth_dataset(grid: RpGrid, samples_per_rp: int, meta: CaptureMeta, cfg: SynthConfig):
    """samples_per_rp records at every reference point, deterministic in cfg.seed."""
    env = _environment(cfg, meta)
    sets = []
    for rp_id, x, y in grid.points:
        records = [synth_record((x, y), meta, cfg, i, _env=env) for i in range(samples_per_rp)]
        sets.append(CsiSampleSet(rp_id=rp_id, records=records))
    return sets
