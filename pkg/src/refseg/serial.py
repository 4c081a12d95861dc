"""Binary record framing, checkpoints, dataset export, and debug dumps.

Record stream layout (little-endian throughout):
  magic "RISM", format version u32, then per record:
    name length u32, name bytes (utf-8), frozen flag u8,
    rank u64, dims u64 * rank, payload float64 * prod(dims)

Checkpoints store every model parameter (frozen flag preserved) plus the
batchnorm running buffers (flagged frozen); a ".meta" sidecar holds the
config snapshot and training counters as flat "key = value" text.
"""

import hashlib
import os
import struct

import numpy as np

from . import data as data_mod
from .errors import ConfigError, DimensionError, InputError

MAGIC = b"RISM"
VERSION = 1


def write_records(path, records):
    """records: iterable of (name, frozen, float64 ndarray)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, frozen, arr in records:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", 1 if frozen else 0))
            fh.write(struct.pack("<Q", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(arr.tobytes())


def read_records(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise InputError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise InputError(f"{path}: unsupported format version {version}")
    at = 8
    out = []
    while at < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, at)
        at += 4
        name = blob[at:at + nlen].decode("utf-8")
        at += nlen
        frozen = blob[at] != 0
        at += 1
        (rank,) = struct.unpack_from("<Q", blob, at)
        at += 8
        dims = struct.unpack_from(f"<{rank}Q", blob, at)
        at += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=at).reshape(dims)
        at += 8 * count
        out.append((name, frozen, arr.copy()))
    return out


# ---------------------------------------------------------------------------
# checkpoints

_BUFFER_FLAG = True  # running stats are state, never trainable


def save_checkpoint(path, model, meta=None):
    records = [(name, p.frozen, p.data) for name, p in model.named_parameters()]
    records += [(name, _BUFFER_FLAG, buf) for name, buf in model.named_buffers()]
    write_records(path, records)
    lines = []
    for key, val in (meta or {}).items():
        lines.append(f"{key} = {val}")
    with open(str(path) + ".meta", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path, model):
    """Copy parameters/buffers into `model`; returns the sidecar meta dict."""
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    for name, frozen, arr in read_records(path):
        if name in params:
            p = params.pop(name)
            if p.data.shape != arr.shape:
                raise DimensionError(
                    f"checkpoint {name}: shape {arr.shape} vs model {p.data.shape}")
            if p.frozen != frozen:
                raise ConfigError(f"checkpoint {name}: frozen flag mismatch")
            p.tensor.data = arr
        elif name in buffers:
            buf = buffers.pop(name)
            if buf.shape != arr.shape:
                raise DimensionError(f"checkpoint buffer {name}: shape mismatch")
            buf[:] = arr
        else:
            raise ConfigError(f"checkpoint has unknown tensor {name!r}")
    if params or buffers:
        missing = list(params) + list(buffers)
        raise ConfigError(f"checkpoint missing tensors: {missing[:5]}")
    return read_meta(str(path) + ".meta")


def read_meta(path):
    meta = {}
    if not os.path.exists(path):
        return meta
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line or "=" not in line:
                continue
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
    return meta


def loss_digest(losses):
    h = hashlib.sha256()
    for v in losses:
        h.update(struct.pack("<d", v))
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# image dumps

def write_pgm(path, values):
    """P5 grayscale, maxval 255. Floats in [0,1] are scaled; ints passed through."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise DimensionError("PGM wants a 2-d array")
    if arr.dtype.kind == "f":
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    else:
        arr = arr.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise InputError("not a P5 PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=h * w).reshape(h, w).copy()


def write_pbm(path, mask):
    """P4 bitmap (packed bits, rows padded to byte boundaries)."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise DimensionError("PBM wants a 2-d mask")
    packed = np.packbits(m, axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{m.shape[1]} {m.shape[0]}\n".encode())
        fh.write(packed.tobytes())


def read_pbm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 2)
    if parts[0] != b"P4":
        raise InputError("not a P4 PBM")
    w, h = (int(x) for x in parts[1].split())
    rowbytes = (w + 7) // 8
    raw = np.frombuffer(parts[2], dtype=np.uint8, count=h * rowbytes).reshape(h, rowbytes)
    return np.unpackbits(raw, axis=1)[:, :w].astype(bool)


# ---------------------------------------------------------------------------
# dataset directory format

def export_dataset(dirpath, samples, seed, export_pgm=False):
    os.makedirs(dirpath, exist_ok=True)
    lines = [f"seed = {seed}", f"count = {len(samples)}",
             f"image_size = {samples[0].image.shape[0]}",
             f"max_tokens = {len(samples[0].tokens)}"]
    for i, s in enumerate(samples):
        stem = f"sample_{i:05d}"
        write_records(os.path.join(dirpath, stem + ".bin"), [
            ("image", False, s.image),
            ("tokens", False, np.asarray(s.tokens, dtype=np.float64)),
            ("target_mask", False, s.target_mask.astype(np.float64)),
        ])
        if export_pgm:
            write_pgm(os.path.join(dirpath, stem + "_mask.pgm"),
                      s.target_mask.astype(np.uint8) * 255)
        lines.append(f"{stem} = {s.expression_text}")
    with open(os.path.join(dirpath, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_dataset(dirpath):
    manifest = read_meta(os.path.join(dirpath, "manifest.txt"))
    if "count" not in manifest:
        raise InputError(f"{dirpath}: manifest.txt missing or incomplete")
    count = int(manifest["count"])
    samples = []
    for i in range(count):
        stem = f"sample_{i:05d}"
        recs = {name: arr for name, _, arr in
                read_records(os.path.join(dirpath, stem + ".bin"))}
        tokens = [int(t) for t in recs["tokens"]]
        samples.append(data_mod.Sample(
            image=recs["image"],
            tokens=tokens,
            pad_mask=np.array([t == data_mod.PAD for t in tokens]),
            target_mask=recs["target_mask"] > 0.5,
            expression_text=manifest.get(stem, ""),
        ))
    return samples, manifest


# ---------------------------------------------------------------------------
# attention dumps

TRACE_HEADER = "pixel_index,token_index,score,relevance,kept,weight"


def trace_to_csv(trace):
    lines = [TRACE_HEADER]
    l_v, l_t = trace.scores.shape
    for i in range(l_v):
        for j in range(l_t):
            lines.append(f"{i},{j},{trace.scores[i, j]:.9g},"
                         f"{trace.relevance[i, j]:.9g},"
                         f"{int(trace.kept[i, j])},{trace.weights[i, j]:.9g}")
    return "\n".join(lines) + "\n"


def word_attention_summary(trace, pixel_indices):
    """Mean attention weight per token over a pixel set (for word heatmaps)."""
    idx = np.asarray(pixel_indices, dtype=np.int64)
    if idx.size == 0:
        return trace.weights.mean(axis=0)
    return trace.weights[idx].mean(axis=0)


def summary_to_csv(mean_weights, tokens=None):
    lines = ["token_index,token,mean_weight"]
    for j, wgt in enumerate(mean_weights):
        word = ""
        if tokens is not None and j < len(tokens) and tokens[j] != data_mod.PAD:
            word = data_mod.ID_WORDS.get(tokens[j], "")
        lines.append(f"{j},{word},{wgt:.9g}")
    return "\n".join(lines) + "\n"
