"""Unfoldings, mode products and a Tucker round trip on a tiny tensor."""

import numpy as np

from fedmvc.tensor import hosvd_init, matricize, mode_n_product, vectorize

t = np.arange(24.0).reshape(2, 3, 4)

# Mode-1 unfolding: rows follow the first index, columns cycle the
# remaining indices with the earliest one fastest.
print("mode-1 unfolding:\n", matricize(t, 1))
print("vec(t)[:6] =", vectorize(t)[:6])

# Multiplying along mode 2 by a 1x3 row of ones sums over the second index.
summed = mode_n_product(t, np.ones((1, 3)), 2)
print("sum over mode 2:", summed.shape, np.allclose(summed[:, 0, :], t.sum(axis=1)))

# A full-rank HOSVD reproduces the tensor; a truncated one only approximates it.
for ranks in [(2, 3, 4), (2, 2, 2), (1, 1, 1)]:
    tk = hosvd_init(t, ranks)
    err = np.linalg.norm(tk.reconstruct() - t) / np.linalg.norm(t)
    print(f"ranks {ranks}: relative error {err:.2e}")
