"""On-disk index format: inspectable manifest plus raw binary matrices.

Layout of an index directory:

* ``manifest.txt``   plain ``key = value`` lines: schema version, shapes,
  encoder settings, fingerprints and per-file sha256 checksums
* ``vocab.txt``      one paper id per line; the first ``n_papers`` lines
  are the embedding row order, any further lines are dangling reference
  ids (cited but absent from the corpus)
* ``embeddings.bin`` row-major float32 little-endian, n_papers x d_model
* ``graph.bin``      per paper, in vocab order: uint32 out-degree followed
  by the sorted cited vocab indexes, delta-encoded
* ``weights.bin``    encoder parameters as float32 little-endian, ordered
  and shaped per the weight spec
* ``papers.jsonl``   the source texts, needed to embed queries and to
  featurize rerank candidates

All numbers are little-endian. A load verifies the schema version first
and every checksum second, so truncation or corruption fails loudly.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .corpus import load_papers, write_papers
from .encoder import EncoderConfig, weight_spec
from .errors import ChecksumError, ValidationError, VersionMismatchError
from .graph import CitationGraph
from .retrieval import DocumentIndex

SCHEMA_VERSION = 1

_FILES = ("vocab.txt", "embeddings.bin", "graph.bin", "weights.bin",
          "papers.jsonl")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _encode_adjacency(ids, refs, vocab_index) -> bytes:
    chunks = []
    for pid in ids:
        targets = sorted(vocab_index[t] for t in refs.get(pid, ()))
        deltas = []
        prev = 0
        for j, t in enumerate(targets):
            deltas.append(t if j == 0 else t - prev)
            prev = t
        arr = np.asarray([len(targets)] + deltas, dtype="<u4")
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def _decode_adjacency(blob: bytes, ids, vocab) -> dict[str, tuple[str, ...]]:
    data = np.frombuffer(blob, dtype="<u4")
    refs = {}
    pos = 0
    for pid in ids:
        if pos >= len(data):
            raise ChecksumError("graph.bin ends prematurely")
        count = int(data[pos])
        pos += 1
        deltas = data[pos:pos + count]
        if len(deltas) != count:
            raise ChecksumError("graph.bin ends prematurely")
        pos += count
        indexes = np.cumsum(deltas) if count else deltas
        refs[pid] = tuple(vocab[int(i)] for i in indexes)
    if pos != len(data):
        raise ChecksumError("graph.bin has trailing bytes")
    return refs


def save_index(index: DocumentIndex, directory) -> None:
    """Write the index; output bytes depend only on the index contents."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    dangling = sorted({t for targets in index.graph.refs.values()
                       for t in targets if t not in index.graph.nodes})
    vocab = list(index.ids) + dangling
    vocab_index = {pid: i for i, pid in enumerate(vocab)}

    (directory / "vocab.txt").write_text("\n".join(vocab) + "\n",
                                         encoding="utf-8")
    emb = np.ascontiguousarray(index.embeddings, dtype="<f4")
    (directory / "embeddings.bin").write_bytes(emb.tobytes())
    (directory / "graph.bin").write_bytes(
        _encode_adjacency(index.ids, index.graph.refs, vocab_index))

    weight_blobs = []
    for name, shape in weight_spec(index.config):
        arr = np.ascontiguousarray(index.weights[name], dtype="<f4")
        if arr.shape != shape:
            raise ValidationError(f"weight {name} has shape {arr.shape}, "
                                  f"expected {shape}")
        weight_blobs.append(arr.tobytes())
    (directory / "weights.bin").write_bytes(b"".join(weight_blobs))

    write_papers(index.papers, directory / "papers.jsonl")

    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        f"n_papers = {len(index.ids)}",
        f"n_vocab = {len(vocab)}",
        f"d_model = {index.config.d_model}",
        f"config_fingerprint = {index.config_fingerprint}",
        f"weights_fingerprint = {index.weights_fingerprint}",
    ]
    cfg = index.config
    lines += [
        f"encoder.d_model = {cfg.d_model}",
        f"encoder.n_heads = {cfg.n_heads}",
        f"encoder.n_layers_paragraph = {cfg.n_layers_paragraph}",
        f"encoder.n_layers_document = {cfg.n_layers_document}",
        f"encoder.vocab_buckets = {cfg.vocab_buckets}",
        f"encoder.max_tokens = {cfg.max_tokens}",
        f"encoder.seed = {cfg.seed}",
        f"encoder.positional = {'true' if cfg.positional else 'false'}",
    ]
    for fname in _FILES:
        lines.append(f"checksum.{fname} = {_sha256(directory / fname)}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n",
                                            encoding="utf-8")


def _parse_manifest(path: Path) -> dict[str, str]:
    entries = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"bad manifest line: {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_index(directory) -> DocumentIndex:
    """Load an index directory; raises VersionMismatchError for unknown
    schema versions and ChecksumError on any corrupted file."""
    directory = Path(directory)
    manifest = _parse_manifest(directory / "manifest.txt")

    version = manifest.get("schema_version")
    if version != str(SCHEMA_VERSION):
        raise VersionMismatchError(
            f"index schema version {version!r}; this build reads "
            f"{SCHEMA_VERSION}")

    for fname in _FILES:
        expected = manifest.get(f"checksum.{fname}")
        if expected is None:
            raise ValidationError(f"manifest missing checksum for {fname}")
        actual = _sha256(directory / fname)
        if actual != expected:
            raise ChecksumError(f"{fname}: checksum mismatch")

    n_papers = int(manifest["n_papers"])
    config = EncoderConfig(
        d_model=int(manifest["encoder.d_model"]),
        n_heads=int(manifest["encoder.n_heads"]),
        n_layers_paragraph=int(manifest["encoder.n_layers_paragraph"]),
        n_layers_document=int(manifest["encoder.n_layers_document"]),
        vocab_buckets=int(manifest["encoder.vocab_buckets"]),
        max_tokens=int(manifest["encoder.max_tokens"]),
        seed=int(manifest["encoder.seed"]),
        positional=manifest["encoder.positional"] == "true",
    )

    vocab = (directory / "vocab.txt").read_text(encoding="utf-8").splitlines()
    if len(vocab) != int(manifest["n_vocab"]):
        raise ChecksumError("vocab.txt row count disagrees with manifest")
    ids = tuple(vocab[:n_papers])

    emb_bytes = (directory / "embeddings.bin").read_bytes()
    expected_len = n_papers * config.d_model * 4
    if len(emb_bytes) != expected_len:
        raise ChecksumError("embeddings.bin has unexpected size")
    embeddings = np.frombuffer(emb_bytes, dtype="<f4").reshape(
        n_papers, config.d_model).copy()

    refs = _decode_adjacency((directory / "graph.bin").read_bytes(), ids,
                             vocab)
    citers_acc: dict[str, list[str]] = {}
    for pid in ids:
        for target in refs[pid]:
            citers_acc.setdefault(target, []).append(pid)
    graph = CitationGraph(
        nodes=frozenset(ids),
        refs=refs,
        citers={t: tuple(sorted(v)) for t, v in citers_acc.items()},
    )

    blob = (directory / "weights.bin").read_bytes()
    weights = {}
    offset = 0
    for name, shape in weight_spec(config):
        size = int(np.prod(shape)) * 4
        chunk = blob[offset:offset + size]
        if len(chunk) != size:
            raise ChecksumError("weights.bin ends prematurely")
        weights[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise ChecksumError("weights.bin has trailing bytes")

    papers = load_papers(directory / "papers.jsonl")

    return DocumentIndex(
        ids=ids,
        embeddings=embeddings,
        graph=graph,
        papers=papers,
        config=config,
        weights=weights,
        config_fingerprint=manifest.get("config_fingerprint", ""),
        weights_fingerprint=manifest.get("weights_fingerprint", ""),
    )


def index_equal(a: DocumentIndex, b: DocumentIndex) -> bool:
    """Field-by-field equality, bit-exact on all matrices."""
    if a.ids != b.ids or a.config != b.config:
        return False
    if a.embeddings.tobytes() != b.embeddings.tobytes():
        return False
    if a.graph.refs != b.graph.refs or a.graph.citers != b.graph.citers:
        return False
    if set(a.weights) != set(b.weights):
        return False
    for name in a.weights:
        if a.weights[name].tobytes() != b.weights[name].tobytes():
            return False
    return a.papers == b.papers


def save_encoder_weights(weights, config: EncoderConfig, directory) -> None:
    """Standalone encoder bundle: weights.bin plus a small manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blobs = []
    for name, shape in weight_spec(config):
        blobs.append(np.ascontiguousarray(weights[name],
                                          dtype="<f4").tobytes())
    (directory / "weights.bin").write_bytes(b"".join(blobs))
    cfg = config
    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        f"encoder.d_model = {cfg.d_model}",
        f"encoder.n_heads = {cfg.n_heads}",
        f"encoder.n_layers_paragraph = {cfg.n_layers_paragraph}",
        f"encoder.n_layers_document = {cfg.n_layers_document}",
        f"encoder.vocab_buckets = {cfg.vocab_buckets}",
        f"encoder.max_tokens = {cfg.max_tokens}",
        f"encoder.seed = {cfg.seed}",
        f"encoder.positional = {'true' if cfg.positional else 'false'}",
        f"checksum.weights.bin = {_sha256(directory / 'weights.bin')}",
    ]
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n",
                                            encoding="utf-8")


def load_encoder_weights(directory):
    """Load a bundle written by save_encoder_weights.

    Returns (weights, config).
    """
    directory = Path(directory)
    manifest = _parse_manifest(directory / "manifest.txt")
    if manifest.get("schema_version") != str(SCHEMA_VERSION):
        raise VersionMismatchError(
            f"encoder bundle version {manifest.get('schema_version')!r}")
    expected = manifest.get("checksum.weights.bin")
    actual = _sha256(directory / "weights.bin")
    if expected != actual:
        raise ChecksumError("weights.bin: checksum mismatch")
    config = EncoderConfig(
        d_model=int(manifest["encoder.d_model"]),
        n_heads=int(manifest["encoder.n_heads"]),
        n_layers_paragraph=int(manifest["encoder.n_layers_paragraph"]),
        n_layers_document=int(manifest["encoder.n_layers_document"]),
        vocab_buckets=int(manifest["encoder.vocab_buckets"]),
        max_tokens=int(manifest["encoder.max_tokens"]),
        seed=int(manifest["encoder.seed"]),
        positional=manifest["encoder.positional"] == "true",
    )
    blob = (directory / "weights.bin").read_bytes()
    weights = {}
    offset = 0
    for name, shape in weight_spec(config):
        size = int(np.prod(shape)) * 4
        weights[name] = np.frombuffer(blob[offset:offset + size],
                                      dtype="<f4").reshape(shape).copy()
        offset += size
    return weights, config
