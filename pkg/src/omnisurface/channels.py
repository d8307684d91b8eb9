"""Random channel realizations: distance path-loss times Rayleigh fading.

Realizations are drawn from numpy's counter-based Philox generator keyed by
``SeedSequence(seed)``; the generator name is written into every serialized
file so that a stored realization can be traced back to its stream.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from .model import ChannelSet, Geometry, SystemConfig

__all__ = [
    "GENERATOR_NAME", "path_loss", "user_distance", "user_angles", "make_rng",
    "trial_seed", "sample_channels", "save_json", "load_json",
    "save_binary", "load_binary",
]

GENERATOR_NAME = "numpy.Philox(SeedSequence)"
_MAGIC = b"IOSCHAN1\n"
_FIELDS = ("g", "h_d", "h_r", "h_t")


def path_loss(d: float, alpha: float, ref_gain: float = 1e-3, d0: float = 1.0) -> float:
    """Linear power gain ``C0 (d/d0)^-alpha``."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return ref_gain * (d / d0) ** (-alpha)


def user_distance(geom: Geometry, delta: float) -> float:
    """BS-to-user distance for a user at angle ``delta`` seen from the IOS."""
    radicand = geom.d_bi ** 2 + geom.d_iu ** 2 - 2.0 * geom.d_bi * geom.d_iu * math.sin(delta)
    if radicand < -1e-12 * max(geom.d_bi, geom.d_iu) ** 2:
        raise ValueError("invalid geometry: negative squared distance")
    return math.sqrt(max(radicand, 0.0))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def trial_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for trial ``index`` of a run seeded by ``seed``."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _cn(rng, shape, variance):
    z = rng.standard_normal(shape + (2,))
    return math.sqrt(variance / 2.0) * (z[..., 0] + 1j * z[..., 1])


def user_angles(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.geometry.angles is not None:
        angles = np.asarray(cfg.geometry.angles, dtype=float)
        if angles.size != cfg.n_users:
            raise ValueError("geometry.angles needs one angle per user")
        return angles
    return rng.uniform(0.0, math.pi / 2, size=cfg.n_users)


def sample_channels(cfg: SystemConfig) -> ChannelSet:
    """Draw one realization; identical configs give bit-identical channels."""
    rng = make_rng(cfg.seed)
    geom = cfg.geometry
    m, n = cfg.n_elements, cfg.n_tx
    angles = user_angles(cfg, rng)
    var_g = path_loss(geom.d_bi, cfg.pathloss_bs_ios, cfg.ref_gain)
    var_iu = path_loss(geom.d_iu, cfg.pathloss_ios_user, cfg.ref_gain)
    g = _cn(rng, (m, n), var_g)
    h_r = _cn(rng, (cfg.k_r, m), var_iu)
    h_t = _cn(rng, (cfg.k_t, m), var_iu)
    d_bu = [user_distance(geom, a) for a in angles[:cfg.k_r]]
    h_d = np.stack([_cn(rng, (n,), path_loss(d, cfg.pathloss_bs_user, cfg.ref_gain))
                    for d in d_bu]) if cfg.k_r else np.zeros((0, n), complex)
    return ChannelSet(g, h_d, h_r, h_t)


def _header(ch: ChannelSet, seed) -> dict:
    return {
        "format": "omnisurface-channels", "version": 1,
        "generator": GENERATOR_NAME, "seed": seed,
        "n_tx": ch.n_tx, "n_elements": ch.n_elements, "k_r": ch.k_r, "k_t": ch.k_t,
        "layout": "row-major, little-endian float64, interleaved re/im",
        "fields": list(_FIELDS),
    }


def save_json(ch: ChannelSet, path, seed=None) -> None:
    doc = _header(ch, seed)
    for name in _FIELDS:
        a = getattr(ch, name)
        doc[name] = {"shape": list(a.shape), "re": a.real.tolist(), "im": a.imag.tolist()}
    Path(path).write_text(json.dumps(doc))


def load_json(path) -> ChannelSet:
    doc = json.loads(Path(path).read_text())
    arrays = {}
    for name in _FIELDS:
        f = doc[name]
        arrays[name] = (np.asarray(f["re"], float) + 1j * np.asarray(f["im"], float)).reshape(f["shape"])
    return ChannelSet(**arrays)


def save_binary(ch: ChannelSet, path, seed=None) -> None:
    """Magic line, one JSON header line, then the raw interleaved doubles."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(json.dumps(_header(ch, seed)).encode() + b"\n")
    for name in _FIELDS:
        a = np.ascontiguousarray(getattr(ch, name), dtype="<c16")
        buf.write(a.view("<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_binary(path) -> ChannelSet:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError("not an omnisurface channel file")
    end = raw.index(b"\n", len(_MAGIC))
    hdr = json.loads(raw[len(_MAGIC):end])
    m, n, kr, kt = hdr["n_elements"], hdr["n_tx"], hdr["k_r"], hdr["k_t"]
    shapes = {"g": (m, n), "h_d": (kr, n), "h_r": (kr, m), "h_t": (kt, m)}
    data = np.frombuffer(raw, dtype="<f8", offset=end + 1)
    arrays, pos = {}, 0
    for name in _FIELDS:
        count = 2 * int(np.prod(shapes[name]))
        if pos + count > data.size:
            raise ValueError("truncated channel file")
        pair = data[pos:pos + count].reshape(-1, 2)
        arrays[name] = (pair[:, 0] + 1j * pair[:, 1]).reshape(shapes[name])
        pos += count
    return ChannelSet(**arrays)


def with_seed(cfg: SystemConfig, seed: int) -> SystemConfig:
    return replace(cfg, seed=int(seed))
