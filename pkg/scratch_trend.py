"""Dev harness for the augmentation-trend acceptance criterion."""

import sys
import time

import numpy as np

from csiloc.featuremap import FeatureMapConfig, build_initial_db, merge, render_map, subsample_rows
from csiloc.gan import HyperParams, generate_maps, train
from csiloc.ingest import CaptureMeta, CsiSampleSet, square_grid
from csiloc.locate import ClassifierConfig, evaluate, train_classifier
from csiloc.rng import substream
from csiloc.synth import SynthConfig, _environment, synth_record, synth_dataset

META = CaptureMeta(n_tx=1, n_rx=3, n_sub=30)
GRID = square_grid(4, 4, 1.0, origin=(1.5, 1.5))
GAN_HP = dict(lr=2e-3, c=0.01, bs=16, f_d=1, z_dim=100, image_size=32, base_width=8)
CLF = ClassifierConfig(lr=1e-3, bs=64, epochs=12, patience=3)


def run_seed(seed, gan_epochs=250, maps_small=50, maps_big=200, gen_ratio=1.5,
             samples=100, rows=12, test_points=12, maps_per_point=4):
    t0 = time.time()
    cfg = SynthConfig(seed=seed)
    sets = synth_dataset(GRID, samples, META, cfg)

    fm_small = FeatureMapConfig(rows_per_map=rows, maps_per_rp=maps_small, resolution=32, seed=seed)
    db_small = build_initial_db(sets, GRID, fm_small)
    fm_big = FeatureMapConfig(rows_per_map=rows, maps_per_rp=maps_big, resolution=32, seed=seed)
    db_big = build_initial_db(sets, GRID, fm_big)
    t_db = time.time() - t0

    hp = HyperParams(epochs=gan_epochs, **GAN_HP)
    extra = {}
    t1 = time.time()
    for s in sets:
        model = train(db_small.maps[s.rp_id], hp, seed=seed, rp_id=s.rp_id)
        extra[s.rp_id] = generate_maps(model, int(round(gen_ratio * maps_small)), seed=seed)
    db_aug = merge(db_small, extra)
    t_gan = time.time() - t1

    # test maps at off-grid positions, rendered with the frozen training scale
    env = _environment(cfg, META)
    trng = substream(seed, "trend-tests")
    tests = []
    for pid in range(1, test_points + 1):
        pos = (float(trng.uniform(1.2, 4.8)), float(trng.uniform(1.2, 4.8)))
        records = [synth_record(pos, META, cfg, t, _env=env) for t in range(60)]
        sample_set = CsiSampleSet(rp_id=pid, records=records)
        for draw in range(maps_per_point):
            block = subsample_rows(sample_set, db_small.config, draw)
            tests.append((render_map(block, db_small.config, pid, "real", draw), pos))

    t2 = time.time()
    results = {}
    for name, db in (("small", db_small), ("aug", db_aug), ("big", db_big)):
        clf = train_classifier(db, CLF, seed=seed)
        results[name] = evaluate(clf, tests, GRID).mean
    t_clf = time.time() - t2
    total = time.time() - t0
    print(
        f"seed {seed}: small {results['small']:.3f} aug {results['aug']:.3f} big {results['big']:.3f} "
        f"| db {t_db:.0f}s gan {t_gan:.0f}s clf {t_clf:.0f}s total {total:.0f}s",
        flush=True,
    )
    return results


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1:]] or [0, 1]
    t0 = time.time()
    outs = [run_seed(s) for s in seeds]
    print(f"all seeds in {time.time()-t0:.0f}s")
    wins = sum(1 for o in outs if o["aug"] <= o["small"])
    worst = max(o["aug"] / o["small"] for o in outs)
    print(f"aug<=small: {wins}/{len(outs)}, worst ratio {worst:.3f}")
    print(f"mean small {np.mean([o['small'] for o in outs]):.3f} vs mean big {np.mean([o['big'] for o in outs]):.3f}")
