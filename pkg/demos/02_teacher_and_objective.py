"""
Teacher anchors and the distillation objective
==============================================

The frozen teacher is a table of one unit embedding per gesture class.
The student is pulled toward these anchors by a contrastive term, a
batch-mean alignment term, a temporal smoothness term and a softened
KL term on its logits, next to ordinary cross-entropy.
"""

import numpy as np

from csidistill import losses
from csidistill.teacher import format_teacher_bank, synth_teacher_bank, teacher_logits

bank = synth_teacher_bank(C=6, d=64, seed=0, max_pairwise_cos=0.3)
gram = bank.embeddings @ bank.embeddings.T
print("anchors:", bank.embeddings.shape)
print("largest off-diagonal cosine: %.3f" % np.max(np.abs(gram - np.eye(6))))

# teacher logits: gamma * cosine to every anchor, exactly gamma on itself
print("teacher logits for class 2:", np.round(teacher_logits(bank, 2, scale=5.0), 3))

# the bank file is plain text, one row per class
print(format_teacher_bank(bank).splitlines()[7][:60], "...")

# a toy batch of student embeddings: noisy copies of the right anchors
rng = np.random.default_rng(0)
y = np.array([0, 1, 2, 3])
z_lm = bank.embeddings[y]
for noise in (0.0, 0.5, 2.0):
    z = z_lm + noise * rng.standard_normal(z_lm.shape)
    lsdm, _ = losses.lsdm_loss(z, z_lm, tau=0.5)
    feat, _ = losses.feat_loss(z, z_lm)
    print("noise %.1f  contrastive %.3f  mean-alignment %.3f" % (noise, lsdm, feat))

# segments that move smoothly in time cost little under the temporal term
smooth = np.cumsum(0.01 * rng.standard_normal((61, 64)), axis=0)
jumpy = rng.standard_normal((61, 64))
print("temporal: smooth %.4f, jumpy %.2f" % (losses.temp_loss(smooth)[0],
                                             losses.temp_loss(jumpy)[0]))

# softened KL toward teacher logits shrinks as the temperature grows
student = rng.standard_normal(6)
for tau in (1.0, 2.0, 8.0):
    print("KL at tau=%.0f: %.4f" % (tau, losses.cls_loss(student, teacher_logits(bank, 0), tau)[0]))

report = losses.combine(0.5, 0.1, 0.2, 0.3, 0.4)
print("combined objective:", report.total)
