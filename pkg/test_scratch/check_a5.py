"""Measure unknown-byte ratio and uniform bpb across coverages at V=16384."""
import time

from l3tc import _textgen, tokenizer

text = _textgen.desk_corpus(10_000_000, seed=17).decode("utf-8")
print(f"corpus bytes={len(text.encode('utf-8'))} chars={len(text)}",
      flush=True)
print(f"distinct chars: {len(set(text))}", flush=True)

for cov in (0.99, 0.999, 1.0):
    t0 = time.time()
    v = tokenizer.train_vocabulary(text, 16384, coverage=cov)
    t1 = time.time()
    rep = tokenizer.bpb_eval(v, text, mode="uniform")
    t2 = time.time()
    unk_byte_ratio = rep.outlier_byte_count / rep.byte_count
    print(f"cov={cov}: size={v.size} train={t1-t0:.1f}s eval={t2-t1:.1f}s "
          f"unk_byte_ratio={unk_byte_ratio:.6f} "
          f"unk_tok_ratio={rep.unknown_ratio:.6f} bpb={rep.bpb:.5f} "
          f"tokens={rep.token_count}", flush=True)
