"""Label attention on a hand-made example.

Each label scores every position, a softmax over positions turns the scores
into weights, and the label's document vector is the weighted average of the
position features.
"""

import numpy as np

from dcan.model import classify_pool, label_attention
from dcan.numcore import Tensor

np.set_printoptions(precision=4, suppress=True)

H = Tensor(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))  # 3 positions, 2 features
U = Tensor(10 * np.eye(2))  # label 0 looks for feature 0, label 1 for feature 1
A, V = label_attention(H, U)
print("attention weights (positions x labels):")
print(A.data)
print("column sums:", A.data.sum(axis=0))
print("label vectors V = A^T H:")
print(V.data)

# two projections per label, max-pooled into one logit
W = Tensor(np.array([[2.0, -1.0], [-1.0, 2.0]]))
b = Tensor(np.zeros((1, 2)))
logits, probs = classify_pool(V, W, b, "max")
print("logits:", logits.data, "probabilities:", probs.data)

# masking a padded position leaves the result unchanged
Hp = Tensor(np.vstack([H.data, np.zeros((2, 2))]))
Ap, Vp = label_attention(Hp, U, mask=np.array([1, 1, 1, 0, 0], dtype=bool))
print("max |V - V_padded|:", np.abs(Vp.data - V.data).max())
