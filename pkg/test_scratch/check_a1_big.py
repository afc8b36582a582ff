"""Time the 10 MB losslessness leg: serial and 4-worker, both directions."""
import time

from l3tc import _textgen, container, rwkv, tokenizer

vocab_text = _textgen.desk_corpus(300_000, seed=1).decode("utf-8")
vocab = tokenizer.train_vocabulary(vocab_text, 512, coverage=0.999)
model = rwkv.random_weights(rwkv.preset("200k", vocab.size), seed=7)
data = _textgen.desk_corpus(10_000_000, seed=17)
print(f"data {len(data)} bytes", flush=True)

t0 = time.time()
a_s = container.compress(data, vocab, model, workers=1)
t1 = time.time()
a_w = container.compress(data, vocab, model, workers=4)
t2 = time.time()
assert a_s == a_w
d_s = container.decompress(a_s, vocab, model, workers=1)
t3 = time.time()
d_w = container.decompress(a_s, vocab, model, workers=4)
t4 = time.time()
assert d_s == data and d_w == data
print(f"compress serial {t1-t0:.1f}s, compress w4 {t2-t1:.1f}s, "
      f"decompress serial {t3-t2:.1f}s, decompress w4 {t4-t3:.1f}s, "
      f"total {t4-t0:.1f}s, ratio {len(a_s)/len(data):.4f}", flush=True)
print(f"decode KB/s serial: {len(data)/1024/(t3-t2):.0f}, "
      f"w4: {len(data)/1024/(t4-t3):.0f}", flush=True)
