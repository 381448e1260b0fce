"""
Three overlapping crops of one series
=====================================

Training views come from a single random crop triplet
``0 <= m1 < n1 <= m2 <= n2 <= T``. View b is ``x[m1:m2]``, view c is
``x[n1:n2]`` and view a is a jittered copy of their overlap ``x[n1:m2]``.
Only timesteps inside the overlap have a positive partner in every view.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fcacc.augment import make_views, sample_crop_boundaries
from fcacc.dataio import znormalize
from fcacc.synthetic import synthetic_control

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(4)

###############################################################################
# One cyclic series from the SyntheticControl generator
d = znormalize(synthetic_control(n_per_class=5))
x = d.values[d.labels == 1][:1]
T = d.length

crop = sample_crop_boundaries(T, min_overlap=8, rng=rng)
print(crop, "overlap length", crop.overlap)

###############################################################################
# With sigma=0 the three views agree exactly on the overlap
views = make_views(x, crop, sigma=0.0, rng=rng)
a, b, c = (views.on_overlap(v) for v in "abc")
assert np.array_equal(a, b) and np.array_equal(b, c)

# ... and with jitter only view a moves
views = make_views(x, crop, sigma=0.3, rng=rng)

###############################################################################
# Plot the crops against the full series
t = np.arange(T)
fig, ax = plt.subplots(figsize=(8, 3.5))
ax.plot(t, x[0], color="0.7", lw=1, label="series")
ax.plot(t[crop.m1:crop.m2], views.xb[0] + 3, label="view b")
ax.plot(t[crop.n1:crop.n2], views.xc[0] + 6, label="view c")
ax.plot(t[crop.n1:crop.m2], views.xa[0] + 9, label="view a (jittered)")
ax.axvspan(crop.n1, crop.m2 - 1, color="tab:green", alpha=0.1, label="overlap")
ax.set_xlabel("t")
ax.set_yticks([])
ax.legend(loc="upper left", fontsize=8, ncol=2)
fig.tight_layout()
fig.savefig(out / "crop_views.png", dpi=120)
print("wrote", out / "crop_views.png")

###############################################################################
# Crops are uniform over feasible triplets; the overlap length follows
lengths = [sample_crop_boundaries(T, 2, rng).overlap for _ in range(5000)]
print("overlap length: mean %.1f, min %d, max %d" % (np.mean(lengths), min(lengths), max(lengths)))
