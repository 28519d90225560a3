"""Model files and packed sample streams.

Byte layouts are documented in ``docs/file_formats.md``. Everything is
little-endian. A ``.json`` suffix selects the text interchange form.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .model import Rbm
from .quantize import FixedRbm, LutConfig, QuantGrid, SigmoidLut

MODEL_MAGIC = b"RBMF"
STREAM_MAGIC = b"RBMS"
VERSION = 1
KIND_FLOAT, KIND_FIXED = 0, 1


class FormatError(ValueError):
    pass


def _put_str(buf: io.BytesIO, s: str, width: str = "<H") -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack(width, len(raw)))
    buf.write(raw)


def _get(buf: io.BytesIO, fmt: str):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise FormatError("truncated model file")
    return struct.unpack(fmt, raw)


def _get_str(buf: io.BytesIO, width: str = "<H") -> str:
    (n,) = _get(buf, width)
    raw = buf.read(n)
    if len(raw) != n:
        raise FormatError("truncated string")
    return raw.decode("utf-8")


def _get_array(buf: io.BytesIO, dtype: str, count: int) -> np.ndarray:
    dt = np.dtype(dtype)
    raw = buf.read(dt.itemsize * count)
    if len(raw) != dt.itemsize * count:
        raise FormatError("truncated array")
    return np.frombuffer(raw, dtype=dt).copy()


def model_to_bytes(model: Rbm | FixedRbm, metadata: dict | None = None) -> bytes:
    buf = io.BytesIO()
    fixed = isinstance(model, FixedRbm)
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<HBBII", VERSION, KIND_FIXED if fixed else KIND_FLOAT, 0,
                          model.n_visible, model.n_hidden))
    for label in model.visible_labels:
        _put_str(buf, label)
    if fixed:
        g, cfg = model.grid, model.lut.config
        buf.write(struct.pack("<BBBBdQ", g.total_bits, g.frac_bits, cfg.compare_bits,
                              model.lfsr_bits, cfg.saturation, model.master_seed))
        for arr in (model.weights, model.visible_bias, model.hidden_bias):
            buf.write(np.ascontiguousarray(arr, dtype="<i2").tobytes())
        buf.write(struct.pack("<I", model.lut.entries.size))
        buf.write(np.ascontiguousarray(model.lut.entries, dtype="<u4").tobytes())
        buf.write(np.ascontiguousarray(model.lfsr_seeds, dtype="<u4").tobytes())
        _put_str(buf, model.source)
    else:
        for arr in (model.weights, model.visible_bias, model.hidden_bias):
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    _put_str(buf, json.dumps(metadata or {}, sort_keys=True), "<I")
    return buf.getvalue()


def model_from_bytes(data: bytes) -> tuple[Rbm | FixedRbm, dict]:
    buf = io.BytesIO(data)
    if buf.read(4) != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, kind, _, nv, nh = _get(buf, "<HBBII")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    labels = tuple(_get_str(buf) for _ in range(nv))
    if kind == KIND_FLOAT:
        w = _get_array(buf, "<f8", nv * nh).reshape(nv, nh)
        b = _get_array(buf, "<f8", nv)
        a = _get_array(buf, "<f8", nh)
        model: Rbm | FixedRbm = Rbm(w, b, a, labels)
    elif kind == KIND_FIXED:
        total, frac, cbits, lbits, sat, master = _get(buf, "<BBBBdQ")
        w = _get_array(buf, "<i2", nv * nh).reshape(nv, nh)
        b = _get_array(buf, "<i2", nv)
        a = _get_array(buf, "<i2", nh)
        (n_lut,) = _get(buf, "<I")
        entries = _get_array(buf, "<u4", n_lut).astype(np.int64)
        seeds = _get_array(buf, "<u4", nv + nh)
        source = _get_str(buf)
        grid = QuantGrid(total, frac)
        lut = SigmoidLut(LutConfig(frac, cbits, sat), entries)
        model = FixedRbm(w, b, a, grid, lut, seeds, labels, master, source, lbits)
    else:
        raise FormatError(f"unknown model kind {kind}")
    meta = json.loads(_get_str(buf, "<I"))
    if buf.read(1):
        raise FormatError("trailing bytes after model")
    return model, meta


def model_to_json(model: Rbm | FixedRbm, metadata: dict | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "format": "rbmsolve-model",
        "version": VERSION,
        "kind": "fixed" if isinstance(model, FixedRbm) else "float",
        "n_visible": model.n_visible,
        "n_hidden": model.n_hidden,
        "visible_labels": list(model.visible_labels),
        "weights": model.weights.tolist(),
        "visible_bias": model.visible_bias.tolist(),
        "hidden_bias": model.hidden_bias.tolist(),
        "metadata": metadata or {},
    }
    if isinstance(model, FixedRbm):
        cfg = model.lut.config
        doc["grid"] = {"total_bits": model.grid.total_bits, "frac_bits": model.grid.frac_bits}
        doc["lut"] = {"compare_bits": cfg.compare_bits, "saturation": cfg.saturation,
                      "entries": model.lut.entries.tolist()}
        doc["lfsr"] = {"bits": model.lfsr_bits, "master_seed": model.master_seed,
                       "seeds": [int(s) for s in model.lfsr_seeds]}
        doc["source"] = model.source
    return doc


def model_from_json(doc: dict[str, Any]) -> tuple[Rbm | FixedRbm, dict]:
    if doc.get("format") != "rbmsolve-model":
        raise FormatError("not an rbmsolve model document")
    if doc.get("version") != VERSION:
        raise FormatError(f"unsupported model document version {doc.get('version')}")
    nv, nh = doc["n_visible"], doc["n_hidden"]
    w = np.array(doc["weights"], dtype=np.float64).reshape(nv, nh)
    labels = tuple(doc["visible_labels"])
    if doc["kind"] == "float":
        model: Rbm | FixedRbm = Rbm(w, doc["visible_bias"], doc["hidden_bias"], labels)
    else:
        g, l, s = doc["grid"], doc["lut"], doc["lfsr"]
        grid = QuantGrid(g["total_bits"], g["frac_bits"])
        lut = SigmoidLut(LutConfig(grid.frac_bits, l["compare_bits"], l["saturation"]),
                         np.array(l["entries"], dtype=np.int64))
        model = FixedRbm(w.astype(np.int64), doc["visible_bias"], doc["hidden_bias"], grid, lut,
                         np.array(s["seeds"], dtype=np.uint64), labels, s["master_seed"],
                         doc.get("source", ""), s["bits"])
    return model, doc.get("metadata", {})


def save_model(path, model: Rbm | FixedRbm, metadata: dict | None = None) -> Path:
    path = Path(path)
    if path.suffix == ".json":
        text = json.dumps(model_to_json(model, metadata), indent=1, sort_keys=True) + "\n"
        data = text.encode("utf-8")
    else:
        data = model_to_bytes(model, metadata)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def load_model(path, with_metadata: bool = False):
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".json":
        model, meta = model_from_json(json.loads(data.decode("utf-8")))
    else:
        model, meta = model_from_bytes(data)
    return (model, meta) if with_metadata else model


# ---------------------------------------------------------------------------
# packed sample streams

def write_stream(path, samples: np.ndarray, seed: int = 0) -> Path:
    """Header (magic, version, count, width, seed) then one packed row per sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.uint8))
    count, width = samples.shape
    packed = np.packbits(samples, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(STREAM_MAGIC)
        fh.write(struct.pack("<HQIQ", VERSION, count, width, seed & ((1 << 64) - 1)))
        fh.write(packed.tobytes())
    return Path(path)


def read_stream(path) -> tuple[np.ndarray, int]:
    data = Path(path).read_bytes()
    if data[:4] != STREAM_MAGIC:
        raise FormatError("not a sample stream (bad magic)")
    version, count, width, seed = struct.unpack_from("<HQIQ", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported stream version {version}")
    row = (width + 7) // 8
    body = np.frombuffer(data, dtype=np.uint8, offset=4 + struct.calcsize("<HQIQ"))
    if body.size != count * row:
        raise FormatError("stream body length disagrees with header")
    bits = np.unpackbits(body.reshape(count, row), axis=1, bitorder="little")[:, :width]
    return bits, seed
