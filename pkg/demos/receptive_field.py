"""How far back can one output position see?

Builds small dilated stacks, perturbs a single input token and reports the
farthest output shift, next to the closed-form receptive field. With all
weights positive every ReLU stays active, so any reachable position shows up.
"""

import numpy as np

from dcan.model import ModelConfig, encode_sequence, init_params, receptive_field
from dcan.numcore import RngStream


def farthest_influence(config: ModelConfig, n: int = 200) -> int:
    params = init_params(config, RngStream(0))
    for name, t in params.items():
        t.data[...] = np.abs(t.data) + 0.01
    ids = np.full(n, 2)
    base = encode_sequence(ids, params, config).data
    ids[0] = 3  # perturb the first token only
    moved = np.abs(encode_sequence(ids, params, config).data - base).max(axis=1) > 0
    return int(np.flatnonzero(moved).max()) + 1


if __name__ == "__main__":
    print(f"{'kc':>3} {'L':>3} {'formula':>8} {'measured':>9}")
    for kc in (2, 3):
        for levels in (1, 2, 3, 4):
            cfg = ModelConfig(vocab_size=4, num_labels=2, embed_dim=4, kernel_size=kc,
                              num_levels=levels, channels=(4,) * levels, dropout_rate=0.0, max_len=200)
            print(f"{kc:>3} {levels:>3} {receptive_field(cfg):>8} {farthest_influence(cfg):>9}")
    default = ModelConfig(vocab_size=4, num_labels=2)
    print(f"default stack (kc={default.kernel_size}, L={default.num_levels}) sees {receptive_field(default)} tokens")
