"""Command line interface.

Exit codes: 0 on success, 2 for usage errors (argument parsing), 3 for
malformed or corrupt files, 4 when an archive's stored hashes do not match
the supplied vocabulary or model.
"""

from __future__ import annotations

import functools
import struct
import sys
import time
from pathlib import Path

import click

from . import __version__, container, hira, metrics, rwkv, tokenizer
from ._binio import CorruptionError, FormatError, HashMismatchError


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HashMismatchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except (FormatError, CorruptionError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
    return wrapper


_in_path = click.Path(exists=True, dir_okay=False, path_type=Path)
_out_path = click.Path(dir_okay=False, path_type=Path)


def _load_pair(vocab_path: Path, model_path: Path):
    return tokenizer.load_vocabulary(vocab_path), rwkv.load_model(model_path)


@click.group()
@click.version_option(version=__version__, prog_name="l3tc")
def main() -> None:
    """Learned lossless text compression with a tiny recurrent model."""


@main.command("train-tokenizer")
@click.argument("corpus", type=_in_path)
@click.option("-o", "--output", type=_out_path, required=True,
              help="Vocabulary file to write.")
@click.option("--size", default=4096, show_default=True,
              help="Target vocabulary size, unknown token included.")
@click.option("--coverage", default=0.999, show_default=True,
              help="Character-coverage fraction kept in the alphabet.")
@_guarded
def train_tokenizer_cmd(corpus: Path, output: Path, size: int,
                        coverage: float) -> None:
    """Learn a byte-pair vocabulary from a UTF-8 corpus file."""
    text = corpus.read_bytes().decode("utf-8", errors="ignore")
    vocab = tokenizer.train_vocabulary(text, size, coverage)
    h = tokenizer.save_vocabulary(vocab, output)
    click.echo(f"{output}: {vocab.size} tokens, {len(vocab.merges)} merges, "
               f"hash {h:08x}")


@main.command("init-model")
@click.option("--preset", default="200k", show_default=True,
              type=click.Choice(sorted(rwkv.PRESETS)),
              help="Backbone size preset.")
@click.option("--vocab", "vocab_path", type=_in_path,
              help="Take the vocabulary size from this vocabulary file.")
@click.option("--vocab-size", type=int, default=None,
              help="Explicit vocabulary size (alternative to --vocab).")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", type=_out_path, required=True)
@_guarded
def init_model_cmd(preset: str, vocab_path: Path | None,
                   vocab_size: int | None, seed: int, output: Path) -> None:
    """Write randomly initialized weights (for benchmarks and tests)."""
    if vocab_path is not None:
        vocab_size = tokenizer.load_vocabulary(vocab_path).size
    if vocab_size is None:
        raise click.UsageError("provide --vocab or --vocab-size")
    config = rwkv.preset(preset, vocab_size)
    model = rwkv.random_weights(config, seed=seed)
    h = rwkv.save_model(model, output)
    click.echo(f"{output}: {rwkv.count_params(config)} params, hash {h:08x}")


@main.command("merge-hira")
@click.argument("model_file", type=_in_path)
@click.option("-o", "--output", type=_out_path, required=True)
@_guarded
def merge_hira_cmd(model_file: Path, output: Path) -> None:
    """Fold low-rank reparameterization branches into the base weights."""
    model = rwkv.load_branched_model(model_file)
    n_branch = sum(1 for k in model.tensors if ".hira." in k) // 2
    merged = hira.merge_branches(model)
    h = rwkv.save_model(merged, output)
    click.echo(f"{output}: merged {n_branch} branches, "
               f"{merged.param_count()} params, hash {h:08x}")


@main.command("compress")
@click.argument("input_file", type=_in_path)
@click.option("-o", "--output", type=_out_path, required=True)
@click.option("--vocab", "vocab_path", type=_in_path, required=True)
@click.option("--model", "model_path", type=_in_path, required=True)
@click.option("--chunk-bytes", default=container.DEFAULT_CHUNK_BYTES,
              show_default=True)
@click.option("--workers", default=1, show_default=True)
@_guarded
def compress_cmd(input_file: Path, output: Path, vocab_path: Path,
                 model_path: Path, chunk_bytes: int, workers: int) -> None:
    """Compress a file into an archive."""
    vocab, model = _load_pair(vocab_path, model_path)
    t0 = time.perf_counter()
    raw, comp = container.compress_file(input_file, output, vocab, model,
                                        chunk_bytes=chunk_bytes,
                                        workers=workers)
    dt = time.perf_counter() - t0
    rate = raw / dt / 1024 if dt > 0 else float("inf")
    click.echo(f"{raw} -> {comp} bytes "
               f"(ratio {comp / raw:.4f}, {rate:.0f} KiB/s)"
               if raw else f"{raw} -> {comp} bytes")


@main.command("decompress")
@click.argument("input_file", type=_in_path)
@click.option("-o", "--output", type=_out_path, required=True)
@click.option("--vocab", "vocab_path", type=_in_path, required=True)
@click.option("--model", "model_path", type=_in_path, required=True)
@click.option("--workers", default=1, show_default=True)
@_guarded
def decompress_cmd(input_file: Path, output: Path, vocab_path: Path,
                   model_path: Path, workers: int) -> None:
    """Restore the original file from an archive."""
    vocab, model = _load_pair(vocab_path, model_path)
    t0 = time.perf_counter()
    n = container.decompress_file(input_file, output, vocab, model,
                                  workers=workers)
    dt = time.perf_counter() - t0
    rate = n / dt / 1024 if dt > 0 else float("inf")
    click.echo(f"{output}: {n} bytes ({rate:.0f} KiB/s)")


@main.command("info")
@click.argument("archive", type=_in_path)
@_guarded
def info_cmd(archive: Path) -> None:
    """Print archive header fields and per-record totals."""
    data = archive.read_bytes()
    if len(data) < container._HEADER.size:
        raise FormatError("archive shorter than its header")
    magic, version, flags, vhash, mhash, orig_len, chunk_bytes, n_chunks = \
        container._HEADER.unpack_from(data, 0)
    if magic != container.MAGIC:
        raise FormatError("not an archive (bad magic)")
    click.echo(f"version {version} flags {flags:#x}")
    click.echo(f"vocabulary hash {vhash:08x}  model hash {mhash:08x}")
    click.echo(f"original {orig_len} bytes in {n_chunks} chunks "
               f"of {chunk_bytes}")
    pos = container._HEADER.size
    tokens = coded = outliers = raw_chunks = 0
    for _ in range(n_chunks):
        tc, cl, ol = container._RECORD.unpack_from(data, pos)
        pos += container._RECORD.size + cl + ol
        if tc & container.RAW_FLAG:
            raw_chunks += 1
        else:
            tokens += tc
        coded += cl
        outliers += ol
    click.echo(f"tokens {tokens}  coded bytes {coded}  "
               f"outlier bytes {outliers}  raw chunks {raw_chunks}")


@main.command("eval")
@click.argument("input_file", type=_in_path)
@click.option("--vocab", "vocab_path", type=_in_path, required=True)
@click.option("--model", "model_path", type=_in_path, required=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--gzip/--no-gzip", "with_gzip", default=True,
              show_default=True, help="Also run the gzip -9 baseline.")
@_guarded
def eval_cmd(input_file: Path, vocab_path: Path, model_path: Path,
             workers: int, with_gzip: bool) -> None:
    """Compress, verify the round trip, and report metrics.

    Machine-readable lines have the form ``metric=<name> value=<value>``.
    """
    vocab, model = _load_pair(vocab_path, model_path)
    data = input_file.read_bytes()
    if not data:
        raise FormatError("refusing to evaluate an empty file")

    t0 = time.perf_counter()
    blob = container.compress(data, vocab, model, workers=workers)
    t_comp = time.perf_counter() - t0
    t0 = time.perf_counter()
    back = container.decompress(blob, vocab, model, workers=workers)
    t_dec = time.perf_counter() - t0
    if back != data:
        raise CorruptionError("round trip produced different bytes")

    token_count = 0
    unknown_count = 0
    outlier_bytes = 0
    for chunk in container.split_chunks(data, container.DEFAULT_CHUNK_BYTES):
        try:
            text = chunk.decode("utf-8")
        except UnicodeDecodeError:
            continue
        tc = vocab.encode(text)
        token_count += int(tc.ids.size)
        unknown_count += tc.unknown_count
        outlier_bytes += len(tc.outliers)

    raw = len(data)
    comp = len(blob)
    params = model.param_count()
    values: list[tuple[str, float | int]] = [
        ("raw_bytes", raw),
        ("compressed_bytes", comp),
        ("cr", comp / raw),
        ("acr", metrics.adjusted_compression_ratio(comp, raw, params)),
        ("params", params),
        ("bpb", 8.0 * comp / raw),
        ("bits_per_token", 8.0 * comp / token_count if token_count else 0.0),
        ("unknown_ratio",
         unknown_count / token_count if token_count else 0.0),
        ("order0_bpb", metrics.order0_bpb(data)),
    ]
    if with_gzip:
        gz = metrics.gzip_ratio(data)
        values.append(("gzip_cr", gz))
        values.append(("bit_saving_vs_gzip", metrics.bit_saving(comp / raw,
                                                                gz)))

    click.echo(f"round trip ok: {raw} -> {comp} bytes  "
               f"compress {raw / t_comp / 1024:.0f} KiB/s  "
               f"decompress {raw / t_dec / 1024:.0f} KiB/s")
    click.echo(f"  ratio {comp / raw:.4f}  outliers {outlier_bytes} bytes  "
               f"tokens {token_count}")
    for name, value in values:
        if isinstance(value, int):
            click.echo(f"metric={name} value={value}")
        else:
            click.echo(f"metric={name} value={value:.6f}")


@main.command("bench")
@click.option("--megabytes", default=2.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--preset", default="200k", show_default=True,
              type=click.Choice(sorted(rwkv.PRESETS)))
@click.option("--vocab-size", default=2048, show_default=True)
@click.option("--workers", default=1, show_default=True)
def bench_cmd(megabytes: float, seed: int, preset: str, vocab_size: int,
              workers: int) -> None:
    """Round-trip throughput on the built-in corpus, random weights.

    Uses untrained weights, so the ratio is meaningless; the speeds and
    the losslessness check are the point.
    """
    from . import _textgen
    n = int(megabytes * (1 << 20))
    data = _textgen.desk_corpus(n, seed)
    text = data[:min(n, 1 << 20)].decode("utf-8", errors="ignore")
    click.echo(f"corpus {len(data)} bytes; training vocabulary...")
    vocab = tokenizer.train_vocabulary(text, vocab_size, coverage=0.999)
    model = rwkv.random_weights(rwkv.preset(preset, vocab.size), seed=seed)

    t0 = time.perf_counter()
    blob = container.compress(data, vocab, model, workers=workers)
    t_comp = time.perf_counter() - t0
    t0 = time.perf_counter()
    back = container.decompress(blob, vocab, model, workers=workers)
    t_dec = time.perf_counter() - t0
    status = "ok" if back == data else "MISMATCH"
    click.echo(f"round trip {status}: {len(data)} -> {len(blob)} bytes")
    click.echo(f"compress   {len(data) / t_comp / 1024:8.1f} KiB/s")
    click.echo(f"decompress {len(data) / t_dec / 1024:8.1f} KiB/s")


if __name__ == "__main__":
    main()
