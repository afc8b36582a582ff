"""Lossless text compression driven by a tiny recurrent language model.

The pipeline: an outlier-aware byte-pair tokenizer turns UTF-8 text into
token ids, a small recurrent network predicts each next token's
distribution, and an integer range coder converts those predictions into
bits. Decompression runs the identical model forward pass, so archives are
bound by content hash to the exact vocabulary and weights that wrote them.
Low-rank reparameterization branches used during training fold exactly
into the base matrices beforehand (`hira.merge_branches`), leaving
inference cost unchanged.
"""

from ._binio import CorruptionError, FormatError, HashMismatchError
from .container import compress, decompress, compress_file, decompress_file
from .hira import branch_rank, merge_branches
from .metrics import (adjusted_compression_ratio, bit_saving,
                      compression_ratio, gzip_ratio, order0_bpb)
from .rwkv import (ModelConfig, ModelWeights, RecurrentState, count_macs_per_token,
                   count_params, forward_step, init_state, load_model,
                   load_branched_model, next_distribution, preset,
                   random_weights, save_model)
from .tokenizer import (Vocabulary, bpb_eval, load_vocabulary,
                        save_vocabulary, train_vocabulary, unknown_ratio)

__version__ = "0.1.0"

__all__ = [
    "CorruptionError", "FormatError", "HashMismatchError",
    "compress", "decompress", "compress_file", "decompress_file",
    "branch_rank", "merge_branches",
    "adjusted_compression_ratio", "bit_saving", "compression_ratio",
    "gzip_ratio", "order0_bpb",
    "ModelConfig", "ModelWeights", "RecurrentState",
    "count_macs_per_token", "count_params", "forward_step", "init_state",
    "load_model", "load_branched_model", "next_distribution", "preset",
    "random_weights", "save_model",
    "Vocabulary", "bpb_eval", "load_vocabulary", "save_vocabulary",
    "train_vocabulary", "unknown_ratio",
    "__version__",
]
