"""Feature-map rendering geometry, determinism, and database plumbing."""

import numpy as np
import pytest

from csiloc.errors import InsufficientSamples, ResolutionMismatch, TooManyLinks, UnknownReferencePoint
from csiloc.featuremap import (
    FeatureMap,
    FeatureMapConfig,
    FingerprintDb,
    build_initial_db,
    load_db,
    merge,
    render_map,
    save_db,
    subsample_indices,
    subsample_rows,
)
from csiloc.ingest import CaptureMeta, CsiRecord, CsiSampleSet, square_grid


def make_set(rp_id, n_records, meta=None, rng=None, scale=20.0):
    meta = meta or CaptureMeta(n_tx=1, n_rx=3, n_sub=30)
    rng = rng or np.random.default_rng(rp_id)
    records = []
    for i in range(n_records):
        re = rng.uniform(-scale, scale, size=(meta.n_links, meta.n_sub))
        im = rng.uniform(-scale, scale, size=(meta.n_links, meta.n_sub))
        records.append(CsiRecord(meta=meta, h=re + 1j * im, timestamp=i))
    return CsiSampleSet(rp_id=rp_id, records=records)


def db_bytes(db):
    return b"".join(db.maps[rp][i].pixels.tobytes() for rp in sorted(db.maps) for i in range(len(db.maps[rp])))


# -- subsampling -----------------------------------------------------------------


def test_subsample_identity_when_exhaustive():
    cfg = FeatureMapConfig(rows_per_map=100, maps_per_rp=1, resolution=32, amp_max=1.0, seed=5)
    idx = subsample_indices(100, cfg, rp_id=1, draw_index=0)
    assert np.array_equal(idx, np.arange(100))


def test_subsample_deterministic_and_without_replacement():
    cfg = FeatureMapConfig(rows_per_map=100, maps_per_rp=1, resolution=32, amp_max=1.0, seed=5)
    a = subsample_indices(5000, cfg, rp_id=3, draw_index=7)
    b = subsample_indices(5000, cfg, rp_id=3, draw_index=7)
    assert np.array_equal(a, b)
    assert len(set(a.tolist())) == 100
    assert not np.array_equal(a, subsample_indices(5000, cfg, rp_id=3, draw_index=8))


def test_paper_scale_draw_count_distinct():
    # 10000 draws of 100 out of 5000: deterministic and pairwise distinct.
    cfg = FeatureMapConfig(rows_per_map=100, maps_per_rp=10000, resolution=32, amp_max=1.0, seed=0)
    seen = set()
    for draw in range(10000):
        seen.add(subsample_indices(5000, cfg, rp_id=1, draw_index=draw).tobytes())
    assert len(seen) == 10000


def test_subsample_insufficient_records():
    cfg = FeatureMapConfig(rows_per_map=100, maps_per_rp=1, resolution=32, amp_max=1.0)
    with pytest.raises(InsufficientSamples):
        subsample_indices(99, cfg, rp_id=1, draw_index=0)


def test_subsample_rows_shape():
    s = make_set(1, 120)
    cfg = FeatureMapConfig(rows_per_map=50, maps_per_rp=1, resolution=32, amp_max=1.0, seed=2)
    block = subsample_rows(s, cfg, draw_index=0)
    assert block.shape == (3, 50, 30)
    assert np.all(block >= 0)


# -- rendering -------------------------------------------------------------------


@pytest.mark.parametrize("resolution", [32, 64, 256])
def test_constant_amplitude_lands_on_closed_form_row(resolution):
    cfg = FeatureMapConfig(rows_per_map=1, maps_per_rp=1, resolution=resolution, amp_max=10.0)
    block = np.full((1, 1, 30), 5.0)  # amp_max / 2
    fmap = render_map(block, cfg, rp_id=1)
    row = (resolution - 1) // 2
    ys, xs = np.nonzero(fmap.pixels[:, :, 0])
    assert set(ys.tolist()) == {row}
    assert fmap.pixels[:, :, 1].sum() == 0 and fmap.pixels[:, :, 2].sum() == 0
    assert xs.min() == 0 and xs.max() == resolution - 1


def test_zero_amplitudes_hit_bottom_row_only():
    cfg = FeatureMapConfig(rows_per_map=2, maps_per_rp=1, resolution=48, amp_max=3.0)
    fmap = render_map(np.zeros((2, 2, 10)), cfg, rp_id=1)
    for ch in range(2):
        ys, _ = np.nonzero(fmap.pixels[:, :, ch])
        assert set(ys.tolist()) == {47}


def test_above_ceiling_clamps_to_top_row():
    cfg = FeatureMapConfig(rows_per_map=1, maps_per_rp=1, resolution=32, amp_max=1.0)
    fmap = render_map(np.full((1, 1, 5), 17.0), cfg, rp_id=1)
    ys, _ = np.nonzero(fmap.pixels[:, :, 0])
    assert set(ys.tolist()) == {0}


def test_channel_discipline_three_links(rng):
    cfg = FeatureMapConfig(rows_per_map=4, maps_per_rp=1, resolution=64, amp_max=2.0)
    block = rng.uniform(0.0, 2.0, size=(3, 4, 16))
    fmap = render_map(block, cfg, rp_id=1)
    for m in range(3):
        solo = render_map(block[m : m + 1], cfg, rp_id=1)
        assert np.array_equal(fmap.pixels[:, :, m], solo.pixels[:, :, 0])
    assert all(fmap.pixels[:, :, m].any() for m in range(3))


def test_vertical_monotonicity(rng):
    cfg = FeatureMapConfig(rows_per_map=1, maps_per_rp=1, resolution=128, amp_max=1.0)
    for _ in range(50):
        a1, a2 = sorted(rng.uniform(0.0, 1.0, size=2))
        r1 = render_map(np.full((1, 1, 4), a1), cfg, 1).pixels[:, :, 0].nonzero()[0][0]
        r2 = render_map(np.full((1, 1, 4), a2), cfg, 1).pixels[:, :, 0].nonzero()[0][0]
        if abs(np.floor(127 * (1 - a1)) - np.floor(127 * (1 - a2))) >= 1:
            assert r2 < r1


def test_too_many_links():
    cfg = FeatureMapConfig(rows_per_map=1, maps_per_rp=1, resolution=32, amp_max=1.0)
    with pytest.raises(TooManyLinks):
        render_map(np.zeros((4, 1, 8)), cfg, rp_id=1)


# -- database ---------------------------------------------------------------------


def test_build_initial_db_counts_and_freeze():
    grid = square_grid(2, 2, 1.0)
    sets = [make_set(rp, 60) for rp in range(1, 5)]
    cfg = FeatureMapConfig(rows_per_map=25, maps_per_rp=10, resolution=32, seed=9)
    db = build_initial_db(sets, grid, cfg)
    assert db.total_maps() == 40
    assert db.config.amp_max is not None and db.config.amp_max > 0
    assert all(m.provenance == "real" for maps in db.maps.values() for m in maps)


def test_build_initial_db_deterministic():
    grid = square_grid(2, 1, 1.0)
    sets = [make_set(rp, 40) for rp in (1, 2)]
    cfg = FeatureMapConfig(rows_per_map=20, maps_per_rp=6, resolution=64, seed=13)
    a = build_initial_db(sets, grid, cfg)
    b = build_initial_db([make_set(rp, 40) for rp in (1, 2)], grid, cfg)
    assert a.config == b.config
    assert db_bytes(a) == db_bytes(b)


def test_merge_identity_counts_and_immutability(rng):
    grid = square_grid(2, 1, 1.0)
    sets = [make_set(rp, 30) for rp in (1, 2)]
    cfg = FeatureMapConfig(rows_per_map=10, maps_per_rp=4, resolution=32, seed=1)
    db = build_initial_db(sets, grid, cfg)

    same = merge(db, {})
    assert same.total_maps() == db.total_maps()

    res = db.config.resolution
    extra = {
        1: [FeatureMap(1, rng.integers(0, 256, size=(res, res, 3)).astype(np.uint8), "generated", i) for i in range(6)]
    }
    bigger = merge(db, extra)
    assert bigger.total_maps() == db.total_maps() + 6
    assert len(db.maps[1]) == 4  # original untouched
    twice = merge(bigger, extra)
    assert twice.total_maps() == db.total_maps() + 12

    with pytest.raises(UnknownReferencePoint):
        merge(db, {77: extra[1]})
    wrong = [FeatureMap(1, np.zeros((16, 16, 3), np.uint8), "generated", 0)]
    with pytest.raises(ResolutionMismatch):
        merge(db, {1: wrong})


def test_expansion_ratio_150_percent():
    grid = square_grid(1, 1, 1.0)
    sets = [make_set(1, 250)]
    cfg = FeatureMapConfig(rows_per_map=10, maps_per_rp=200, resolution=32, seed=4)
    db = build_initial_db(sets, grid, cfg)
    res = db.config.resolution
    extra = {1: [FeatureMap(1, np.zeros((res, res, 3), np.uint8), "generated", i) for i in range(300)]}
    expanded = merge(db, extra)
    assert len(expanded.maps[1]) == 500


def test_save_load_round_trip_and_idempotent_bytes(tmp_path):
    grid = square_grid(2, 1, 1.5)
    sets = [make_set(rp, 25) for rp in (1, 2)]
    cfg = FeatureMapConfig(rows_per_map=10, maps_per_rp=3, resolution=32, seed=21)
    db = build_initial_db(sets, grid, cfg)

    out1 = tmp_path / "db1"
    out2 = tmp_path / "db2"
    save_db(db, out1, extra_manifest={"config_hash": "abc", "seed": 21})
    save_db(db, out2, extra_manifest={"config_hash": "abc", "seed": 21})

    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()

    back = load_db(out1)
    assert back.config == db.config
    assert back.grid == db.grid
    assert db_bytes(back) == db_bytes(db)
    assert [m.provenance for m in back.maps[1]] == [m.provenance for m in db.maps[1]]


def test_db_type_invariants():
    grid = square_grid(1, 1, 1.0)
    with pytest.raises(UnknownReferencePoint):
        FingerprintDb(grid=grid, maps={5: []}, config=FeatureMapConfig(amp_max=1.0))
    bad_map = FeatureMap(1, np.zeros((16, 16, 3), np.uint8), "real", 0)
    with pytest.raises(ResolutionMismatch):
        FingerprintDb(grid=grid, maps={1: [bad_map]}, config=FeatureMapConfig(resolution=32, amp_max=1.0))
