"""CSI capture ingestion.

Two on-disk forms are supported:

* a canonical text interchange format (primary): one line per matrix entry,
  ``rp_id,timestamp,link,k,re,im``, header line first, optional ``#``
  comment lines (the writer emits one carrying the capture dimensions);
* a binary log of framed records (convenience importer): each frame is
  ``[u16 big-endian payload length][u8 record code][payload]``; code 0xBB
  carries one beamforming/CSI record, other codes are skipped.

The CSI payload starts with a 20-byte little-endian header (timestamp u32,
record count u16, reserved u16, n_rx u8, n_tx u8, three per-chain RSSI
bytes, noise i8, AGC u8, antenna-selection u8, payload length u16, rate
u16) followed by bit-packed CSI: per subcarrier 3 padding bits, then for
each rx/tx pair (rx outermost) one signed 8-bit real and one signed 8-bit
imaginary component at successive bit offsets.

Link rows are ordered tx-major: row ``m`` holds the pair (tx u, rx v) with
``m = u * n_rx + v`` (0-based internally, 1-based in the text format). The
antenna-selection byte describes how the capture hardware permuted the
receive chains; the parser undoes it by default.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedFrame,
    TruncatedRecordWarning,
    UnknownReferencePoint,
    ValueOutOfRange,
)

CSI_CODE = 0xBB
_HEADER_BYTES = 20


@dataclass(frozen=True)
class CaptureMeta:
    """Capture dimensions: antennas, subcarriers, access points, packet rate."""

    n_tx: int
    n_rx: int
    n_sub: int
    n_ap: int = 1
    packet_rate: float = 2.5

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_sub", "n_ap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not np.isfinite(self.packet_rate) or self.packet_rate <= 0:
            raise ValueError("packet_rate must be positive and finite")

    @property
    def n_links(self) -> int:
        return self.n_tx * self.n_rx


@dataclass(eq=False)
class CsiRecord:
    """One captured packet: complex channel matrix (link x subcarrier)."""

    meta: CaptureMeta
    h: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.complex128)
        expect = (self.meta.n_links, self.meta.n_sub)
        if self.h.shape != expect:
            raise DimensionMismatch(f"channel matrix shape {self.h.shape}, expected {expect}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel matrix contains non-finite entries")


def records_equal(a: CsiRecord, b: CsiRecord) -> bool:
    return a.meta == b.meta and a.timestamp == b.timestamp and np.array_equal(a.h, b.h)


@dataclass(frozen=True)
class RpGrid:
    """Surveyed reference points: (rp_id, x, y) triples plus grid spacing."""

    points: tuple
    spacing: float

    def __post_init__(self):
        ids = [p[0] for p in self.points]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValueError("rp_ids must be unique and contiguous 1..M")
        for _, x, y in self.points:
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError("grid coordinates must be finite")

    @property
    def ids(self):
        return tuple(p[0] for p in self.points)

    def coords(self, rp_id: int):
        for pid, x, y in self.points:
            if pid == rp_id:
                return (x, y)
        raise UnknownReferencePoint(f"rp_id {rp_id} not in grid")


def square_grid(nx: int, ny: int, spacing: float, origin=(0.0, 0.0)) -> RpGrid:
    """Evenly spaced nx*ny grid, ids 1..M in row-major order."""
    points = []
    rp_id = 1
    for iy in range(ny):
        for ix in range(nx):
            points.append((rp_id, origin[0] + ix * spacing, origin[1] + iy * spacing))
            rp_id += 1
    return RpGrid(points=tuple(points), spacing=spacing)


@dataclass
class CsiSampleSet:
    """All records captured at one reference point, in capture order."""

    rp_id: int
    records: list = field(default_factory=list)

    @property
    def meta(self) -> CaptureMeta:
        return self.records[0].meta


# -- binary log ---------------------------------------------------------------


def _bits_per_subcarrier(n_links: int) -> int:
    return 3 + 16 * n_links


def write_binary_log(records, perm=None) -> bytes:
    """Serialize records into the framed binary form.

    ``perm`` optionally stores the receive chains permuted (perm[v] is the
    physical antenna of stored chain v), mimicking hardware chain reordering;
    the parser undoes it. Components must be integers in [-128, 127].
    """
    out = bytearray()
    for seq, rec in enumerate(records):
        meta = rec.meta
        if perm is None:
            rx_of_stored = list(range(meta.n_rx))
        else:
            if sorted(perm) != list(range(meta.n_rx)) or meta.n_rx > 3:
                raise ValueError("perm must permute 0..n_rx-1 with n_rx <= 3")
            rx_of_stored = list(perm)
        sel = 0
        for v, phys in enumerate(rx_of_stored[:3]):
            sel |= phys << (2 * v)

        n_links = meta.n_links
        csi_bytes = (meta.n_sub * _bits_per_subcarrier(n_links) + 7) // 8
        if not (0 <= rec.timestamp <= 0xFFFFFFFF):
            raise ValueOutOfRange(f"timestamp {rec.timestamp} does not fit 4 bytes")

        packed = 0
        offset = 0
        for k in range(meta.n_sub):
            offset += 3
            for v_stored in range(meta.n_rx):
                v = rx_of_stored[v_stored]
                for u in range(meta.n_tx):
                    z = rec.h[u * meta.n_rx + v, k]
                    for comp in (z.real, z.imag):
                        val = int(comp)
                        if val != comp or not (-128 <= val <= 127):
                            raise ValueOutOfRange(f"component {comp} outside signed 8-bit domain")
                        packed |= (val & 0xFF) << offset
                        offset += 8
        payload = bytearray(_HEADER_BYTES)
        payload[0:4] = int(rec.timestamp).to_bytes(4, "little")
        payload[4:6] = (seq & 0xFFFF).to_bytes(2, "little")
        payload[6:8] = b"\x00\x00"
        payload[8] = meta.n_rx
        payload[9] = meta.n_tx
        payload[10:13] = b"\x00\x00\x00"  # per-chain RSSI, unused here
        payload[13] = (-92) & 0xFF  # noise floor placeholder
        payload[14] = 0  # AGC
        payload[15] = sel
        payload[16:18] = csi_bytes.to_bytes(2, "little")
        payload[18:20] = b"\x00\x00"  # rate field
        payload += packed.to_bytes(csi_bytes, "little")

        out += len(payload).to_bytes(2, "big")
        out.append(CSI_CODE)
        out += payload
    return bytes(out)


def _signed8(value: int) -> int:
    return value - 256 if value >= 128 else value


def parse_binary_log(data: bytes, n_ap: int = 1, packet_rate: float = 2.5,
                     apply_permutation: bool = True, strict: bool = False):
    """Parse a framed binary log into CsiRecords.

    Non-CSI record codes are skipped. A log that ends mid-record raises
    ``MalformedFrame`` when ``strict`` is set and otherwise emits a
    ``TruncatedRecordWarning``, keeping the records parsed so far.
    """
    records = []
    cur = 0
    total = len(data)
    while cur < total:
        if total - cur < 3:
            if strict:
                raise MalformedFrame("log ends inside a frame header")
            warnings.warn("log ends inside a frame header; trailing bytes dropped", TruncatedRecordWarning)
            break
        length = int.from_bytes(data[cur : cur + 2], "big")
        code = data[cur + 2]
        cur += 3
        if total - cur < length:
            if strict:
                raise MalformedFrame(f"declared payload of {length} bytes exceeds remaining {total - cur}")
            warnings.warn("log ends inside its final record; record dropped", TruncatedRecordWarning)
            break
        payload = data[cur : cur + length]
        cur += length
        if code != CSI_CODE:
            continue
        records.append(_parse_csi_payload(payload, n_ap, packet_rate, apply_permutation))
    return records


def _parse_csi_payload(payload: bytes, n_ap, packet_rate, apply_permutation) -> CsiRecord:
    if len(payload) < _HEADER_BYTES:
        raise MalformedFrame(f"CSI payload of {len(payload)} bytes cannot hold its header")
    timestamp = int.from_bytes(payload[0:4], "little")
    n_rx = payload[8]
    n_tx = payload[9]
    antenna_sel = payload[15]
    declared = int.from_bytes(payload[16:18], "little")
    if n_rx < 1 or n_tx < 1:
        raise DimensionMismatch(f"invalid antenna counts n_rx={n_rx} n_tx={n_tx}")
    body = payload[_HEADER_BYTES:]
    if declared != len(body):
        raise DimensionMismatch(f"payload length field {declared} != actual CSI bytes {len(body)}")

    n_links = n_tx * n_rx
    bits_per_sub = _bits_per_subcarrier(n_links)
    n_sub = (declared * 8) // bits_per_sub
    if n_sub < 1 or (n_sub * bits_per_sub + 7) // 8 != declared:
        raise DimensionMismatch(f"CSI byte count {declared} inconsistent with {n_links} links")

    # Chain permutation: stored chain v belongs at physical antenna perm[v].
    perm = [(antenna_sel >> (2 * v)) & 0x3 for v in range(min(n_rx, 3))]
    if not apply_permutation or n_rx > 3 or sorted(perm) != list(range(n_rx)):
        perm = list(range(n_rx))

    packed = int.from_bytes(body, "little")
    h = np.zeros((n_links, n_sub), dtype=np.complex128)
    offset = 0
    for k in range(n_sub):
        offset += 3
        for v_stored in range(n_rx):
            v = perm[v_stored]
            for u in range(n_tx):
                re = _signed8((packed >> offset) & 0xFF)
                im = _signed8((packed >> (offset + 8)) & 0xFF)
                offset += 16
                h[u * n_rx + v, k] = complex(re, im)

    meta = CaptureMeta(n_tx=n_tx, n_rx=n_rx, n_sub=n_sub, n_ap=n_ap, packet_rate=packet_rate)
    return CsiRecord(meta=meta, h=h, timestamp=timestamp)


# -- derived views -------------------------------------------------------------


def amplitudes(record: CsiRecord) -> np.ndarray:
    """Per-entry amplitude sqrt(re^2 + im^2); shape (links, subcarriers)."""
    return np.abs(record.h)


def group_by_rp(labeled, grid: RpGrid):
    """Partition (rp_id, record) pairs into per-RP sample sets.

    Capture order is preserved within each set; sets come back sorted by
    rp_id. Every label must exist in the grid and records within one set
    must share capture dimensions.
    """
    known = set(grid.ids)
    by_rp = {}
    for rp_id, record in labeled:
        if rp_id not in known:
            raise UnknownReferencePoint(f"rp_id {rp_id} not in grid")
        by_rp.setdefault(rp_id, []).append(record)
    sets = []
    for rp_id in sorted(by_rp):
        records = by_rp[rp_id]
        for rec in records[1:]:
            if rec.meta != records[0].meta:
                raise DimensionMismatch(f"rp {rp_id}: records mix capture dimensions")
        sets.append(CsiSampleSet(rp_id=rp_id, records=records))
    return sets


# -- canonical text format ------------------------------------------------------

TEXT_HEADER = "rp_id,timestamp,link,k,re,im"


def write_text(path, labeled, meta: CaptureMeta) -> None:
    """Write labeled records as the canonical text format (UTF-8)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(TEXT_HEADER + "\n")
        f.write(
            f"# n_tx={meta.n_tx} n_rx={meta.n_rx} n_sub={meta.n_sub} "
            f"n_ap={meta.n_ap} packet_rate={float(meta.packet_rate)!r}\n"
        )
        for rp_id, rec in labeled:
            if rec.meta != meta:
                raise DimensionMismatch("record capture dimensions differ from file metadata")
            for m in range(meta.n_links):
                for k in range(meta.n_sub):
                    z = rec.h[m, k]
                    f.write(f"{rp_id},{rec.timestamp},{m + 1},{k + 1},{float(z.real)!r},{float(z.imag)!r}\n")


def _parse_meta_comment(line: str):
    fields = dict(part.split("=", 1) for part in line.lstrip("#").split())
    return CaptureMeta(
        n_tx=int(fields["n_tx"]),
        n_rx=int(fields["n_rx"]),
        n_sub=int(fields["n_sub"]),
        n_ap=int(fields.get("n_ap", 1)),
        packet_rate=float(fields.get("packet_rate", 2.5)),
    )


def read_text(path):
    """Read the canonical text format; returns (labeled records, meta).

    A new record starts whenever the (link, k) columns reset to (1, 1).
    Files without the dimensions comment are assumed single-TX with the
    link count and subcarrier count implied by the data.
    """
    meta = None
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = None
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "n_tx=" in line and meta is None:
                    meta = _parse_meta_comment(line)
                continue
            if header is None:
                if line != TEXT_HEADER:
                    raise DimensionMismatch(f"unexpected header line {line!r}")
                header = line
                continue
            rp_s, ts_s, link_s, k_s, re_s, im_s = line.split(",")
            rows.append((int(rp_s), int(ts_s), int(link_s), int(k_s), float(re_s), float(im_s)))
    if header is None:
        raise DimensionMismatch("missing header line")

    if meta is None and rows:
        n_links = max(r[2] for r in rows)
        n_sub = max(r[3] for r in rows)
        meta = CaptureMeta(n_tx=1, n_rx=n_links, n_sub=n_sub)

    labeled = []
    current = None  # (rp_id, timestamp, h)
    for rp_id, ts, link, k, re, im in rows:
        if link == 1 and k == 1:
            if current is not None:
                labeled.append(_finish_text_record(current, meta))
            current = (rp_id, ts, np.zeros((meta.n_links, meta.n_sub), dtype=np.complex128),
                       np.zeros((meta.n_links, meta.n_sub), dtype=bool))
        if current is None:
            raise DimensionMismatch("record does not start at link=1, k=1")
        if rp_id != current[0] or ts != current[1]:
            raise DimensionMismatch("rp_id/timestamp changed mid-record")
        if not (1 <= link <= meta.n_links and 1 <= k <= meta.n_sub):
            raise DimensionMismatch(f"link/k ({link},{k}) outside declared dimensions")
        current[2][link - 1, k - 1] = complex(re, im)
        current[3][link - 1, k - 1] = True
    if current is not None:
        labeled.append(_finish_text_record(current, meta))
    return labeled, meta


def _finish_text_record(current, meta: CaptureMeta):
    rp_id, ts, h, seen = current
    if not seen.all():
        raise DimensionMismatch(f"record at rp {rp_id} is missing {int((~seen).sum())} entries")
    return (rp_id, CsiRecord(meta=meta, h=h, timestamp=ts))
