"""Finding a latent edit direction of fixed length.

Search for one direction n with ||n|| = r that, added to many latent codes,
makes a classifier prefer a target attribute while keeping each output close
(in cosine similarity of an embedding) to its unedited version.
"""

import numpy as np

from dpm_latent import DeterministicGenerator, linear_schedule, make_rng
from dpm_latent import guidance as gd
from dpm_latent.models import GaussianMixture, gm_mean_estimator


def main():
    gm = GaussianMixture([0.5, 0.5], [[-1.0, 0.0], [1.0, 0.5]], [[0.3, 0.3], [0.3, 0.3]])
    gen = DeterministicGenerator(gm_mean_estimator(gm, linear_schedule(1e-3, 0.2, 50), "ddim", 0.0), 2, T_g=10)
    clf = gd.LinearSoftmaxClassifier.binary([2.0, -1.0], -0.5)
    cls_energy = gd.classifier_energy(clf, 1)
    embed = gd.RandomFeatureMap(2, 16, seed=0)
    base_z = make_rng(0).standard_normal((32, 2))

    print("radius  P(target) before  after   self-cosine")
    for r in (0.25, 0.5, 1.0, 2.0):
        n = gd.optimize_edit_direction(gen, cls_energy, embed, r, 1.0, base_z, steps=200, lr=0.1, rng=1)
        x, x_edit = gen(base_z), gen(base_z + n)
        u, v = embed(x), embed(x_edit)
        cos = np.mean(np.sum(u * v, -1) / (np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1)))
        print(f"{r:5.2f}   {clf.probs(x)[:, 1].mean():15.3f}  {clf.probs(x_edit)[:, 1].mean():5.3f}   {cos:.3f}"
              f"   (||n|| = {np.linalg.norm(n):.12f})")


if __name__ == "__main__":
    main()
