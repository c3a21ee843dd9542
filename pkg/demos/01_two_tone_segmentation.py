"""Segment a synthetic two-colour image end to end and save overlays.

Walks through the stages one at a time: resize, patch grid, reservoir
responses, DTW similarity, map dynamics and the hierarchical readout.
Runs at the reduced desk profile (24x24 grid, 20k steps), ~10 s on one core.
"""
import os
import sys

import numpy as np

from syncmapv2 import clustering, dynamics, evaluation, image_io, pipeline, reservoir, similarity
from syncmapv2.config import desk_profile

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out_dir, exist_ok=True)

# left half red, right half blue, with a green square straddling the edge
img = np.zeros((288, 288, 3))
img[:, :144, 0] = 1.0
img[:, 144:, 2] = 1.0
img[96:192, 120:168] = (0.1, 0.8, 0.1)
gt = np.zeros((288, 288), np.int64)
gt[:, 144:] = 1
gt[96:192, 120:168] = 2

cfg = desk_profile()
print(f"grid {cfg.grid}x{cfg.grid}, patch {cfg.patch_size}px, tau {cfg.tau}")

# preprocessing, done once per image
weights = reservoir.init_esn(cfg.esn)
grid = image_io.split_patches(image_io.resize_bilinear(img, cfg.resize, cfg.resize), cfg.grid, cfg.grid)
seqs = image_io.temporize_patches(grid.patches, cfg.K)
print("sequence per patch:", seqs.shape[1:], "(time, rows*RGB)")
responses = reservoir.run_patches(weights, seqs)
sim = similarity.build_similarity_matrix(responses)
print("distinct DTW distances:", np.unique(np.round(sim, 6)).size)

# the dynamics: each step activates a random patch's neighbours and look-alikes
prox, lists = pipeline.neighbor_lists(sim, cfg)
state = dynamics.init_map(cfg.n_patches, cfg.dynamics)
coords = dynamics.run(pipeline.input_source(prox, lists), cfg.tau, state, cfg.dynamics)

for n, labels in zip(range(2, 6), clustering.cluster_range(coords, 2, 5)):
    pix = image_io.labels_to_pixels(labels.reshape(cfg.grid, cfg.grid), 288, 288)
    print(f"n={n}: mIoU {evaluation.unsupervised_miou(pix, gt):.3f}")
    pipeline.emit_overlay(img, pix, os.path.join(out_dir, f"two_tone_n{n}.png"))

# the same thing through the one-call API
seg = pipeline.segment_image(img, cfg, weights)
print("segment_image n=3 mIoU:", round(evaluation.unsupervised_miou(seg.pixel_labels(3, 288, 288), gt), 3))
