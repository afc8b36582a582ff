from __future__ import annotations

import numpy as np
import pytest

from l3tc import hira, rwkv
from l3tc.hira import (add_random_branches, branch_rank, merge_branches,
                       runtime_macs_per_token)
from l3tc.rwkv import ModelConfig, branch_key, init_state, random_weights


def max_prob_gap(model_a, model_b, n_steps=40, seed=0):
    cfg = model_a.config
    rng = np.random.default_rng(seed)
    toks = rng.integers(0, cfg.vocab_size, size=n_steps)
    sa, sb = init_state(cfg), init_state(cfg)
    worst = 0.0
    for t in toks:
        pa, sa = rwkv.next_distribution(model_a, sa, int(t))
        pb, sb = rwkv.next_distribution(model_b, sb, int(t))
        worst = max(worst, float(np.abs(pa - pb).max()))
    return worst


class TestBranchRank:
    def test_formula(self):
        assert branch_rank(96, 96, 0.25) == 24
        assert branch_rank(96, 96, 1.0) == 96
        assert branch_rank(96, 96, 4.0) == 384
        assert branch_rank(192, 96, 0.25) == 24  # min side rules
        assert branch_rank(3, 3, 0.01) == 1  # floor at one

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            branch_rank(8, 8, 0.0)


class TestMerge:
    def test_two_by_two_oracle(self):
        # W0 = I, one branch A=[[1],[2]], B=[[3,4]]:
        # merged = I + [[3,4],[6,8]] = [[4,4],[6,9]]
        cfg = ModelConfig(1, 2, 2, 4)
        model = random_weights(cfg, seed=0)
        tensors = {k: v.copy() for k, v in model.tensors.items()}
        tensors["blocks.0.att.receptance.weight"] = np.eye(2,
                                                           dtype=np.float32)
        tensors[branch_key(0, "att", "r", 0, "A")] = \
            np.array([[1.0], [2.0]], dtype=np.float32)
        tensors[branch_key(0, "att", "r", 0, "B")] = \
            np.array([[3.0, 4.0]], dtype=np.float32)
        merged = merge_branches(rwkv.ModelWeights(cfg, tensors))
        got = merged.tensors["blocks.0.att.receptance.weight"]
        assert np.array_equal(got, np.array([[4.0, 4.0], [6.0, 9.0]],
                                            dtype=np.float32))

    def test_multi_branch_sum(self):
        cfg = ModelConfig(1, 3, 3, 4)
        model = random_weights(cfg, seed=1)
        tensors = {k: v.copy() for k, v in model.tensors.items()}
        rng = np.random.default_rng(5)
        base = tensors["blocks.0.ffn.key.weight"]
        want = base.astype(np.float64)
        for j in range(3):
            a = rng.normal(size=(3, 2)).astype(np.float32)
            b = rng.normal(size=(2, 3)).astype(np.float32)
            tensors[branch_key(0, "ffn", "k", j, "A")] = a
            tensors[branch_key(0, "ffn", "k", j, "B")] = b
            want = want + a.astype(np.float64) @ b.astype(np.float64)
        merged = merge_branches(rwkv.ModelWeights(cfg, tensors))
        got = merged.tensors["blocks.0.ffn.key.weight"]
        assert np.array_equal(got, want.astype(np.float32))

    def test_merge_is_branch_free_and_validates(self, tiny_model):
        branched = add_random_branches(tiny_model, rho=0.5, m=2, seed=2)
        assert branched.has_branches
        merged = merge_branches(branched)
        assert not merged.has_branches
        merged.validate()
        assert set(merged.tensors) == set(tiny_model.tensors)

    def test_merge_leaves_input_untouched(self, tiny_model):
        branched = add_random_branches(tiny_model, rho=0.25, m=1, seed=3)
        before = {k: v.copy() for k, v in branched.tensors.items()}
        merge_branches(branched)
        for k, v in branched.tensors.items():
            assert np.array_equal(v, before[k])

    def test_branches_change_the_function(self, tiny_model):
        branched = add_random_branches(tiny_model, rho=1.0, m=1, seed=4)
        merged = merge_branches(branched)
        assert max_prob_gap(tiny_model, merged) > 1e-6

    @pytest.mark.parametrize("rho,m", [(0.25, 1), (1.0, 2), (4.0, 1)])
    def test_merged_matches_branched_forward(self, tiny_model, rho, m):
        branched = add_random_branches(tiny_model, rho=rho, m=m, seed=6)
        merged = merge_branches(branched)
        assert max_prob_gap(branched, merged, n_steps=30) <= 1e-4

    def test_merge_of_plain_model_is_identity(self, tiny_model):
        merged = merge_branches(tiny_model)
        for k, v in tiny_model.tensors.items():
            assert np.array_equal(merged.tensors[k], v)


class TestMacs:
    def test_merged_macs_equal_plain_formula(self, tiny_model):
        branched = add_random_branches(tiny_model, rho=4.0, m=2, seed=7)
        merged = merge_branches(branched)
        want = rwkv.count_macs_per_token(tiny_model.config)
        assert runtime_macs_per_token(merged) == want
        assert runtime_macs_per_token(tiny_model) == want

    def test_branched_macs_cost_extra(self, tiny_model):
        branched = add_random_branches(tiny_model, rho=0.25, m=1, seed=8)
        plain = runtime_macs_per_token(tiny_model)
        assert runtime_macs_per_token(branched) > plain


class TestBranchKeys:
    def test_round_trip(self):
        name = branch_key(3, "ffn", "v", 2, "B")
        assert rwkv.parse_branch_key(name) == (3, "ffn", "v", 2, "B")

    def test_plain_names_do_not_parse(self):
        assert rwkv.parse_branch_key("blocks.0.att.key.weight") is None
        assert rwkv.parse_branch_key("emb.weight") is None

    def test_branched_model_validates(self, tiny_model):
        add_random_branches(tiny_model, rho=0.25, m=2, seed=9).validate()
