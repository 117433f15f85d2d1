"""Dev harness: measure the random-weights eval baseline on current synth params."""
import sys
import numpy as np
import graphmatch as gm
from graphmatch.pipeline import preprocess_frame, evaluate_matching

n_frames = int(sys.argv[1]) if len(sys.argv) > 1 else 16
kps = int(sys.argv[2]) if len(sys.argv) > 2 else 128

cfg = gm.TrainConfig.toy()
frames = [preprocess_frame(gm.generate_synthetic_frame(5000 + i, (256, 256))) for i in range(n_frames)]
model = gm.MatcherModel(cfg.patch_side, seed=99)
rep = evaluate_matching(model, frames, cfg, seed=7, max_keypoints=kps)
per = {}
for r in rep.rows:
    kind = "trans" if r.transform.startswith("affine[1;0;") else ("scale" if ";0;" in r.transform.split(";")[1] else "rot")
    per.setdefault(kind, []).append(r.precision)
print("random mean precision:", round(rep.mean_precision, 3))
for k, v in sorted(per.items()):
    print(f"  {k}: {round(float(np.mean(v)), 3)} (n={len(v)})")
print("covisible fraction:", round(float(np.mean([r.n_covisible / r.n_keypoints_a for r in rep.rows])), 3))
print("mean kps:", round(float(np.mean([r.n_keypoints_a for r in rep.rows])), 1))
