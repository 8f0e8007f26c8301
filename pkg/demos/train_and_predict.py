#!/usr/bin/env python3
"""Train the small default model on the synthetic mixture and query all
three heads. Takes about a minute on one core; pass --quick for a
600-step run that shows the mechanics without full convergence."""

import sys
import time

import numpy as np

from uniar.codec import decode_robust
from uniar.data import (
    MixtureConfig,
    gen_rating_task,
    gen_saliency_task,
    gen_scanpath_task,
    mixture_next,
    mixture_start,
)
from uniar.metrics import cc, plcc
from uniar.model import (
    ModelConfig,
    init_params,
    param_shapes,
    predict_heatmap,
    predict_rating,
    predict_scanpath,
    run_training,
)

steps = 600 if "--quick" in sys.argv[1:] else 1500
seed = 0
cfg = ModelConfig()
n_params = sum(int(np.prod(s)) for s in param_shapes(cfg).values())
print(f"model: {cfg.embed_dim}d, {cfg.encoder_layers}+{cfg.decoder_layers} layers, "
      f"{n_params:,} parameters")

handles = (gen_saliency_task(seed, 22, size=cfg.image_size),
           gen_scanpath_task(seed, 21, size=cfg.image_size),
           gen_rating_task(seed, 21, size=cfg.image_size))
mix = MixtureConfig(handles, seed=seed)
state = mixture_start(mix)

def next_sample():
    global state
    s, state = mixture_next(mix, state)
    return s

params = init_params(cfg, seed=seed)
opt = None
t0 = time.perf_counter()
done = 0
for chunk in ([100] * (steps // 100)):
    params, opt, rows = run_training(params, cfg, next_sample, steps=chunk,
                                     batch_size=8, lr=3e-3, opt_state=opt)
    done += chunk
    flags = [v for _, _, v in rows if v is not None]
    print(f"step {done:5d}  loss {rows[-1][1]:8.4f}  "
          f"decode-valid {sum(flags)}/{len(flags)}")
print(f"trained in {time.perf_counter() - t0:.0f} s")

# all three heads on held-in samples, one per behavior
sal = handles[0].samples[0]
heat = predict_heatmap(sal.image, sal.prompt, params, cfg)
print(f"\nheatmap: CC vs gt {cc(heat, sal.target):.3f}")

scan = handles[1].samples[2]
raw, result = predict_scanpath(scan.image, scan.prompt, params, cfg)
print(f"scanpath tokens: {raw[:60]}...")
if result.valid:
    print(f"decoded {result.fixations_recovered} fixations "
          f"(gt has {len(scan.target.fixations)}): "
          f"{np.round(result.scanpath.fixations, 1).tolist()}")

rat = handles[2].samples
preds = [predict_rating(s.image, s.prompt, params, cfg).score for s in rat]
obs = [s.target.score for s in rat]
print(f"rating: PLCC over the {len(rat)} train images {plcc(preds, obs):.3f}")
print("       ", "  ".join(f"{p:.2f}/{o:.2f}" for p, o in zip(preds[:5], obs[:5])),
      "(pred/obs)")
