"""High-rank reparameterization: fold low-rank branches into base weights.

A reparameterized projection computes W0 x + sum_m A_m (B_m x) with
A_m (out, r_m) and B_m (r_m, in). Because the branch path is linear, the
stack collapses exactly to a single matrix

    W = W0 + sum_m A_m @ B_m

so inference after merging costs the same MACs as the plain model while
training could move through the higher-rank composite. Merging accumulates
in float64, base first, branches in ascending index order, and rounds to
float32 once at the end; the float32 result is deterministic and the
branched and merged forward passes agree to ~1e-4 in probability space.

Branch ranks follow r = ceil(rho * min(out, in)) for a rank ratio rho; with
rho >= 1 a single branch is already full-rank and extra branches raise the
*parameterization* rank of the sum beyond min(out, in) only in the formal
sum-of-products sense, never the matrix rank.
"""

from __future__ import annotations

import math

import numpy as np

from . import rwkv
from .rwkv import ModelWeights, branch_key, parse_branch_key


def branch_rank(out_dim: int, in_dim: int, rho: float) -> int:
    """r = ceil(rho * min(out, in)), at least 1."""
    if rho <= 0:
        raise ValueError("rank ratio must be positive")
    return max(1, math.ceil(rho * min(out_dim, in_dim)))


def merge_branches(model: ModelWeights) -> ModelWeights:
    """Return an equivalent branch-free model.

    Always builds a new ModelWeights; the input is left untouched.
    """
    groups: dict[str, list[tuple[int, np.ndarray, np.ndarray]]] = {}
    plain: dict[str, np.ndarray] = {}
    for name, arr in model.tensors.items():
        parsed = parse_branch_key(name)
        if parsed is None:
            plain[name] = arr.copy()
            continue
        layer, block, proj, m, part = parsed
        base = f"blocks.{layer}." + rwkv._BRANCH_BASE[block, proj]
        if part == "A":
            b = model.tensors[branch_key(layer, block, proj, m, "B")]
            groups.setdefault(base, []).append((m, arr, b))
    for base, branches in groups.items():
        acc = plain[base].astype(np.float64)
        for _, a, b in sorted(branches, key=lambda t: t[0]):
            acc += a.astype(np.float64) @ b.astype(np.float64)
        plain[base] = acc.astype(np.float32)
    return ModelWeights(model.config, plain)


def add_random_branches(model: ModelWeights, rho: float, m: int,
                        seed: int = 0, scale: float = 0.05) -> ModelWeights:
    """Attach m random branches to every r/k/v projection (test helper).

    Both factors are drawn nonzero so a merge actually changes the weights.
    Returns a new branched model; the input is left untouched.
    """
    rng = np.random.default_rng(seed)
    tensors = {k: v.copy() for k, v in model.tensors.items()}
    for layer in range(model.config.n_layers):
        for (block, proj), suffix in rwkv._BRANCH_BASE.items():
            base = tensors[f"blocks.{layer}." + suffix]
            out_dim, in_dim = base.shape
            r = branch_rank(out_dim, in_dim, rho)
            for j in range(m):
                a = rng.normal(0, scale / np.sqrt(r), (out_dim, r))
                b = rng.normal(0, scale / np.sqrt(in_dim), (r, in_dim))
                tensors[branch_key(layer, block, proj, j, "A")] = \
                    a.astype(np.float32)
                tensors[branch_key(layer, block, proj, j, "B")] = \
                    b.astype(np.float32)
    return ModelWeights(model.config, tensors)


def runtime_macs_per_token(model: ModelWeights) -> int:
    """MACs one forward step actually spends on matrix products.

    Counts every 2-D projection (embedding lookups are reads, not MACs);
    each live branch adds its A and B factor sizes. For a branch-free model
    this equals rwkv.count_macs_per_token(model.config).
    """
    total = 0
    for name, arr in model.tensors.items():
        if arr.ndim != 2 or name == "emb.weight":
            continue
        total += int(arr.size)
    return total
