#!/usr/bin/env python3
"""Scanpaths end to end: token codec, robust decoding, and the four
families of scanpath similarity scores."""

import numpy as np

from uniar.codec import decode_robust, dequantize, encode_target, quantize
from uniar.metrics import (
    meanshift_clusters,
    multimatch,
    semfed,
    semss,
    sequence_score,
)
from uniar.types import FixationSet, Scanpath, SegmentationMap

# ---------------------------------------------------------------- codec

path = Scanpath((1280, 960), [[371.4, 622.9], [898.0, 101.3], [640.0, 480.0]])
binned = quantize(path)
tokens = encode_target(binned)
print("fixations:", path.fixations.tolist())
print("bins:     ", binned.bins.tolist())
print("tokens:   ", tokens.text)

back = dequantize(binned, (1280, 960))
print("round trip error (px):",
      np.abs(back.fixations - path.fixations).max().round(4),
      "<= half a bin =", 1280 / 2000)

# the decoder is built for model output, so it must survive anything;
# it keeps the clean pair prefix and stops at the first deviation
for raw in (tokens.text,
            tokens.text.replace("and", "AND"),       # wrong separator casing
            "371 622 and 898 101",                    # sentinels missing
            "<extra_id_01> 12 34 and oops 78 <extra_id_02>",
            "total garbage"):
    r = decode_robust(raw, (1280, 960))
    print(f"  valid={str(r.valid):<5} recovered={r.fixations_recovered}  {raw[:46]!r}")

# ------------------------------------------------------- similarity

rng = np.random.default_rng(3)
gt = Scanpath((640, 480), [[100, 100], [520, 90], [250, 380], [110, 400]])
jitter = Scanpath((640, 480), gt.fixations + rng.normal(0, 12, gt.fixations.shape))
reverse = Scanpath((640, 480), gt.fixations[::-1].copy())

# sequence score clusters the reference fixations first; ids come from
# cluster membership, alignment from Needleman-Wunsch
clusters = meanshift_clusters(FixationSet(frame=(640, 480), points=gt.fixations),
                              bandwidth=80.0)
print(f"\nmean shift found {clusters.centers.shape[0]} clusters")

# semantic variants use a region map instead; quadrants here
labels = (np.indices((480, 640))[0] // 240) * 2 + np.indices((480, 640))[1] // 320
seg = SegmentationMap(640, 480, labels)

print(f"\n{'candidate':<10} {'seq':>6} {'semss':>6} {'semfed':>7} "
      f"{'shape':>6} {'len':>6} {'dir':>6} {'pos':>6}")
for name, cand in (("gt", gt), ("jitter", jitter), ("reverse", reverse)):
    mm = multimatch(cand, gt)
    print(f"{name:<10} {sequence_score(cand, gt, clusters):>6.3f} "
          f"{semss(cand, gt, seg):>6.3f} {semfed(cand, gt, seg):>7.3f} "
          f"{mm.shape:>6.3f} {mm.length:>6.3f} {mm.direction:>6.3f} "
          f"{mm.position:>6.3f}")

print("""
jitter keeps every score at or near the identity values (seq/semss/
multimatch 1, semfed 0): 12 px of noise does not cross a cluster or
region boundary. the reversed path still visits the same places, so the
geometric multimatch components only dip, but the order-sensitive
string scores drop to chance and the edit distance jumps.
""")
