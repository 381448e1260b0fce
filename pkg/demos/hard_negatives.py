"""
Mixed hard negatives
====================

Hard negatives are convex mixtures that lean towards the negative side:
``lam * positive + (1 - lam) * negative`` with ``lam <= lambda_max <= 0.5``.
At the time level the "negative" is another timestep of the same series;
at the instance level it is another series of the batch, and the positive
side can be a same-cluster partner.
"""

import numpy as np
import torch

from fcacc.contrast import (PositiveSets, gen_instance_hard_negatives, gen_time_hard_negatives,
                            instance_contrastive_loss, time_contrastive_loss)

rng = np.random.default_rng(1)
B, L, D = 4, 6, 3
za, zb, zc = (torch.tensor(rng.normal(size=(B, L, D))) for _ in range(3))

###############################################################################
# Time level: one lambda for the batch, one partner timestep t' != t per (i, t)
hn = gen_time_hard_negatives(za, zb, zc, lambda1_max=0.2, rng=rng)
print("lambda1 =", round(hn.lam, 4))
print("partner timesteps of series 0:", hn.t_prime[0])

i, t = 0, 2
tp = hn.t_prime[i, t]
mix = hn.lam * zb[i, t] + (1 - hn.lam) * zb[i, tp]
print("h_b[0, 2] is the stated mix:", torch.allclose(hn.hb[i, t], mix))

###############################################################################
# Instance level: series 0 and 1 are known to share a cluster
pos = np.eye(B, dtype=bool)
pos[0, 1] = pos[1, 0] = True
sets = PositiveSets(pos)
hi = gen_instance_hard_negatives(za, zb, zc, sets, lambda2_max=0.2, rng=rng)
print("same-cluster partners drawn for series 0:", hi.k_idx[0])

###############################################################################
# Hard negatives make both objectives harder
for name, with_hn, without in (
        ("time", time_contrastive_loss(za, zb, zc, hn), time_contrastive_loss(za, zb, zc)),
        ("instance", instance_contrastive_loss(za, zb, zc, hi, sets, positives_in_denominator=True),
         instance_contrastive_loss(za, zb, zc, None, sets, positives_in_denominator=True))):
    print(f"{name:8s} loss with hard negatives {float(with_hn):.3f}, without {float(without):.3f}")
