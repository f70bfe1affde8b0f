"""Generate a few synthetic scenes and inspect the mask pipeline.

Run from the repository root:
    python3 demos/01_scene_gallery.py
"""

import numpy as np

from canclab import SceneGenParams, generate_scene, tile_scene, build_mask_dataset

params = SceneGenParams(size=256, seed=0)
scenes = [generate_scene(params, scene_id=i) for i in range(4)]

print("scene gallery")
for s in scenes:
    gt_frac = float(np.mean(s.gt))
    print(
        f"  scene {s.scene_id}: image {s.image.shape}, intensity "
        f"[{s.image.min():.3f}, {s.image.max():.3f}], built-up pixel fraction {gt_frac:.3f}"
    )

m = 16
patches, gt_patches, positions = tile_scene(scenes[0], m=m)
print(f"\ntiling scene 0 at m={m}: {patches.shape[0]} masks of {m}x{m}")
print(f"  first positions (row, col): {positions[:4].tolist()}")

ds = build_mask_dataset(scenes, m=m, tau_label=0.01)
pos = int(ds.labels.sum())
print(f"\ndataset over {len(scenes)} scenes: {ds.labels.size} masks, {pos} positive "
      f"({pos / ds.labels.size:.3f})")

# The label threshold is inclusive: a mask needs >= tau * m^2 bright pixels.
need = int(np.ceil(0.01 * m * m))
print(f"  positive means >= {need} of {m * m} pixels are built-up at tau_label=0.01")
