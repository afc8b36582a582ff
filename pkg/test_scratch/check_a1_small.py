"""Time the randomized-input losslessness workload to size its budget."""
import sys
import time

import numpy as np

from l3tc import _textgen, container, rwkv, tokenizer

t0 = time.time()
vocab_text = _textgen.desk_corpus(300_000, seed=1).decode("utf-8")
vocab = tokenizer.train_vocabulary(vocab_text, 512, coverage=0.999)
model = rwkv.random_weights(rwkv.preset("200k", vocab.size), seed=7)
print(f"setup {time.time()-t0:.1f}s vocab size={vocab.size}", flush=True)

BOX = [chr(c) for c in range(0x2500, 0x2570)]
THAI = [chr(c) for c in range(0x0E01, 0x0E3B)]
CJK = [chr(c) for c in range(0x4E00, 0x4E80)]
EMOJI = [chr(c) for c in range(0x1F600, 0x1F650)]
WS = list(" \t\n  \n\n<>=|")


def rand_chars(rng, pool, n):
    idx = rng.integers(0, len(pool), size=n)
    return "".join(pool[i] for i in idx)


def build_inputs(n, seed, base):
    rng = np.random.default_rng(seed)
    out = []
    log_max = np.log(65536)
    for i in range(n):
        if i == 0:
            out.append(b"")
            continue
        ln = 65536 if i == 1 else int(np.exp(rng.uniform(0.0, log_max)))
        kind = i % 5
        if kind in (0, 3):
            start = int(rng.integers(0, max(1, len(base) - 70_000)))
            s = base[start:start + ln]
        elif kind == 1:
            s = rand_chars(rng, CJK + EMOJI, ln)  # multibyte-heavy
        elif kind == 2:
            s = rand_chars(rng, BOX + THAI, ln)  # all-outlier
        else:
            s = rand_chars(rng, WS + CJK[:8] + ["word", "the ", "x"], ln)
        out.append(_textgen.trim_utf8(s.encode("utf-8")[:ln]))
    return out


base = _textgen.desk_corpus(3_000_000, seed=23).decode("utf-8")
n_sample = int(sys.argv[1]) if len(sys.argv) > 1 else 150
cb = int(sys.argv[2]) if len(sys.argv) > 2 else 512
inputs = build_inputs(n_sample, 101, base)
total = sum(len(x) for x in inputs)
print(f"{n_sample} inputs, {total} bytes, chunk={cb}", flush=True)

t0 = time.time()
for x in inputs:
    a_s = container.compress(x, vocab, model, chunk_bytes=cb, workers=1)
    a_w = container.compress(x, vocab, model, chunk_bytes=cb, workers=4)
    assert a_s == a_w
    assert container.decompress(a_s, vocab, model, workers=1) == x
    assert container.decompress(a_s, vocab, model, workers=4) == x
dt = time.time() - t0
print(f"4-leg round trip: {dt:.1f}s -> est for 1000: "
      f"{dt * 1000 / n_sample:.0f}s", flush=True)
