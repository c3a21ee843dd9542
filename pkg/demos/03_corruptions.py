"""Apply the four benchmark corruptions at severities 1, 3 and 5 and save a contact sheet."""
import os
import sys

import numpy as np
import skimage.data

from syncmapv2 import corruption, image_io

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out_dir, exist_ok=True)

img = skimage.data.chelsea() / 255.0
rows = []
for kind in corruption.KINDS:
    tiles = [img]
    for sev in (1, 3, 5):
        spec = corruption.CorruptionSpec(kind, sev, seed=corruption.default_seed("chelsea", kind, sev))
        out = corruption.corrupt(img, spec)
        print(f"{kind:15s} S{sev}: mean |delta| {np.abs(out - img).mean():.4f}")
        tiles.append(out)
    rows.append(np.concatenate(tiles, axis=1))
sheet = np.concatenate(rows, axis=0)
image_io.save_image(sheet, os.path.join(out_dir, "corruptions.png"))
print("contact sheet:", sheet.shape)
