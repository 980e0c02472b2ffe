"""Pairwise masking on the six-agent star: keys, masks and exact cancellation.

    python scripts/local_masking_demo.py
"""
import numpy as np

from privlearn.graph import metropolis_weights
from privlearn.privacy import dh_shared_secret, local_gh_link_noise, partition_neighbourhood

BASE, PRIME = 5, 2_147_483_647


def main() -> None:
    adj = np.eye(6, dtype=bool)
    adj[0, :] = adj[:, 0] = True
    topo = metropolis_weights(adj)
    part = partition_neighbourhood(topo, 0, "parity")
    print("receiver 1; plus set", [m + 1 for m in part.plus], "minus set", [m + 1 for m in part.minus])

    rng = np.random.default_rng(0)
    secrets = {m: int(rng.integers(1, PRIME - 1)) for m in range(1, 6)}
    for k, l in part.pairs():
        key = dh_shared_secret(BASE, PRIME, secrets[k], secrets[l])
        print(f"  agents {k + 1} and {l + 1} agree on key {key}")

    W = rng.normal(size=(6, 2))
    masks = local_gh_link_noise(topo, 0, part, 2, 0.01, rng)
    A = topo.weights
    clean = A[:, 0] @ W
    received = A[:, 0] @ (W + masks)
    for m in range(1, 6):
        print(f"  agent {m + 1} sends {np.round(W[m] + masks[m], 4)} (true {np.round(W[m], 4)})")
    print("aggregate, clean   :", clean)
    print("aggregate, masked  :", received)
    print("max difference     :", np.abs(clean - received).max())


if __name__ == "__main__":
    main()
