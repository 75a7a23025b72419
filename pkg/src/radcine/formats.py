"""Binary containers (JSON header + little-endian float32 payload) and dataset directories.

Layout of every ``.bin`` file::

    b"RADC" | u8 version | u32 LE header length | UTF-8 JSON header | payload

The header always carries ``kind``, ``shape`` and ``dtype`` ("f4le" for real
float32, "c64le" for complex values stored as interleaved float32 (re, im)).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoding import make_encoding_op
from .simulation import SPLITS, Dataset, PhantomConfig, Sample
from .trajectory import Trajectory, golden_angle_trajectory

MAGIC = b"RADC"
VERSION = 1
_DTYPES = {"f4le": "<f4", "c64le": "<c8"}


class FormatError(ValueError):
    """Malformed or unexpected file contents."""


def write_array(path, kind: str, arr: np.ndarray, **fields) -> None:
    arr = np.asarray(arr)
    dtype = "c64le" if np.iscomplexobj(arr) else "f4le"
    header = {"kind": kind, "shape": list(arr.shape), "dtype": dtype, **fields}
    raw = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([VERSION]) + struct.pack("<I", len(raw)) + raw + payload)


def read_array(path, kind: str | None = None) -> tuple[np.ndarray, dict]:
    data = Path(path).read_bytes()
    if len(data) < 9 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a RADC container")
    if data[4] != VERSION:
        raise FormatError(f"{path}: unsupported version {data[4]}")
    (n,) = struct.unpack("<I", data[5:9])
    try:
        header = json.loads(data[9:9 + n].decode())
        shape = tuple(int(s) for s in header["shape"])
        np_dtype = _DTYPES[header["dtype"]]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    if kind is not None and header.get("kind") != kind:
        raise FormatError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    body = data[9 + n:]
    expected = int(np.prod(shape)) * np.dtype(np_dtype).itemsize
    if len(body) != expected:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, np_dtype).reshape(shape).copy(), header


# -- typed wrappers ------------------------------------------------------------

def _traj_fields(traj: Trajectory) -> dict:
    return {"n_x": traj.n_x, "n_t": traj.n_frames, "m": traj.samples_per_frame,
            "spokes_per_frame": traj.spokes_per_frame,
            "samples_per_spoke": traj.samples_per_spoke, "partition": traj.partition}


def write_trajectory(path, traj: Trajectory) -> None:
    write_array(path, "trajectory", traj.coords.astype(np.float32), **_traj_fields(traj))


def read_trajectory(path) -> Trajectory:
    """Rebuild the golden-angle trajectory described by the header and check the payload."""
    coords, h = read_array(path, "trajectory")
    traj = golden_angle_trajectory(h["n_x"], h["n_t"], h["spokes_per_frame"],
                                   h["samples_per_spoke"], h.get("partition", "consecutive"))
    if coords.shape != traj.coords.shape or not np.allclose(coords, traj.coords, atol=1e-5):
        raise FormatError(f"{path}: coordinates do not match a golden-angle trajectory")
    return traj


def write_kspace(path, y: np.ndarray, **fields) -> None:
    n_c, n_t, m = y.shape
    write_array(path, "kspace", y.astype(np.complex64), n_c=n_c, n_t=n_t, m=m, **fields)


def read_kspace(path) -> tuple[np.ndarray, dict]:
    y, h = read_array(path, "kspace")
    if y.ndim != 3 or h["dtype"] != "c64le":
        raise FormatError(f"{path}: k-space must be complex (n_c, n_t, m)")
    return y, h


def write_cine(path, x: np.ndarray, **fields) -> None:
    n_x, n_y, n_t = x.shape
    write_array(path, "cine", x.astype(np.complex64), n_x=n_x, n_y=n_y, n_t=n_t, **fields)


def read_cine(path) -> tuple[np.ndarray, dict]:
    x, h = read_array(path, "cine")
    if x.ndim != 3 or h["dtype"] != "c64le":
        raise FormatError(f"{path}: cine must be complex (n_x, n_y, n_t)")
    return x, h


def write_coil_maps(path, maps: np.ndarray) -> None:
    write_array(path, "coilmaps", maps.astype(np.complex64))


def read_coil_maps(path) -> np.ndarray:
    return read_array(path, "coilmaps")[0]


# -- dataset directories -------------------------------------------------------

def save_dataset(root, ds: Dataset) -> None:
    """``root/{meta.json, traj.bin, maps.bin}`` plus ``root/<split>/<index>/`` per sample."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_trajectory(root / "traj.bin", ds.op.traj)
    write_coil_maps(root / "maps.bin", ds.op.coils.maps)
    meta = {"sigma": ds.sigma, "config": ds.config,
            "counts": {s: len(ds.splits.get(s, [])) for s in SPLITS}}
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    for split in SPLITS:
        for i, s in enumerate(ds.splits.get(split, [])):
            d = root / split / f"{i:04d}"
            d.mkdir(parents=True, exist_ok=True)
            write_kspace(d / "ksp.bin", s.y)
            write_cine(d / "xi.bin", s.x_i)
            write_cine(d / "gt.bin", s.x_gt)
            (d / "meta.json").write_text(json.dumps(
                {"seed": s.seed, "scale": s.scale, **s.meta}, indent=2, sort_keys=True))


def load_dataset(root, splits=SPLITS) -> Dataset:
    root = Path(root)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{root}: no dataset (meta.json missing)")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: invalid JSON") from exc
    traj = read_trajectory(root / "traj.bin")
    maps = read_coil_maps(root / "maps.bin")
    op = make_encoding_op(traj, maps)
    out = {}
    for split in splits:
        samples = []
        for i in range(meta["counts"].get(split, 0)):
            d = root / split / f"{i:04d}"
            m = json.loads((d / "meta.json").read_text())
            y, _ = read_kspace(d / "ksp.bin")
            if y.shape != op.kspace_shape:
                raise FormatError(f"{d}: k-space shape {y.shape} != {op.kspace_shape}")
            samples.append(Sample(seed=m["seed"], y=y, x_i=read_cine(d / "xi.bin")[0],
                                  x_gt=read_cine(d / "gt.bin")[0], scale=m["scale"], meta=m))
        out[split] = samples
    return Dataset(op=op, splits=out, sigma=meta["sigma"], config=meta["config"])


def phantom_config(ds: Dataset) -> PhantomConfig:
    return PhantomConfig(**ds.config["phantom"])


__all__ = ["FormatError", "write_array", "read_array", "write_trajectory", "read_trajectory",
           "write_kspace", "read_kspace", "write_cine", "read_cine", "write_coil_maps",
           "read_coil_maps", "save_dataset", "load_dataset", "phantom_config"]
