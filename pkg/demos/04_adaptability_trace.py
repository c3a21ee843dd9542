"""One map, several images in a row, never re-initialised.

Prints the sampled mean positive-set distance around each image boundary:
it jumps when the input statistics change and then settles again.
Uses a small grid so it finishes in about a minute.
"""
import os
import sys
import tempfile

import numpy as np

from syncmapv2 import image_io, pipeline
from syncmapv2.config import PipelineConfig
from syncmapv2.dynamics import DynamicsConfig

work = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
rng = np.random.default_rng(0)
lines = []
for i in range(4):
    img = np.zeros((96, 96, 3))
    gt = np.zeros((96, 96), np.int64)
    cut = int(rng.integers(24, 72))
    if i % 2:
        img[:cut], img[cut:] = rng.random(3), rng.random(3)
        gt[cut:] = 1
    else:
        img[:, :cut], img[:, cut:] = rng.random(3), rng.random(3)
        gt[:, cut:] = 1
    image_io.save_image(img, os.path.join(work, f"img{i}.png"))
    image_io.save_label_map(gt, os.path.join(work, f"gt{i}.png"))
    lines.append(f"img{i}.png gt{i}.png")
manifest = os.path.join(work, "manifest.txt")
with open(manifest, "w") as fh:
    fh.write("\n".join(lines) + "\n")

cfg = PipelineConfig(resize=96, grid=16, tau=8000, n_max=6,
                     dynamics=DynamicsConfig(movmean_window=300, trace_prob=0.05))
scores, report = pipeline.run_adaptability(manifest, cfg, os.path.join(work, "out"))
print("OIS without re-init:", round(report["ois"], 3), " with re-init:", round(report["reinit"]["ois"], 3))

trace = np.array(report["trace"])
for b in report["boundaries"][1:]:
    before = trace[(trace[:, 0] >= b - 1000) & (trace[:, 0] < b), 1].mean()
    after = trace[(trace[:, 0] >= b) & (trace[:, 0] < b + 1000), 1].mean()
    later = trace[(trace[:, 0] >= b + 3000) & (trace[:, 0] < b + 6000), 1].mean()
    print(f"boundary at step {b}: d+ {before:.3f} -> {after:.3f} -> {later:.3f}")
print("outputs in", os.path.join(work, "out"))
