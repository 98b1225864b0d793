"""Sketch extraction and probabilistic decoding.

A sketch keeps, for each bit position, how many specific ``0`` and ``1`` bits
the negative database put there. Since a specific bit at within-attribute
position ``j`` disagrees with the hidden string with a known probability
``p_diff[j]``, the counts give a posterior for every hidden bit. Attribute
posteriors are products of their bit posteriors, and the expected attribute
value is what the network consumes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .data import AttributeCodec
from .ndbgen import NegDatabase, QKParams

SKETCH_MAGIC = b"NDBS"
SKETCH_VERSION = 1
MAX_DECODE_BITS = 16
_SUM_TOL = 1e-6


class DegenerateEvidenceError(ValueError):
    """Counts that the differ-probability says cannot both occur."""


@dataclass(frozen=True)
class Sketch:
    counts: np.ndarray
    params: QKParams
    N: int

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_bytes(self) -> bytes:
        p = self.params
        header = struct.pack("<4sHIIIIId", SKETCH_MAGIC, SKETCH_VERSION, self.m, p.K, self.N, p.L, p.attributes, p.r)
        probs = struct.pack(f"<{p.K}d{p.L}d", *p.p, *p.q)
        return header + probs + self.counts.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> Sketch:
        fmt = "<4sHIIIIId"
        size = struct.calcsize(fmt)
        if len(blob) < size:
            raise ValueError("truncated sketch header")
        magic, version, m, K, N, L, M, r = struct.unpack(fmt, blob[:size])
        if magic != SKETCH_MAGIC:
            raise ValueError(f"bad sketch magic {magic!r}")
        if version != SKETCH_VERSION:
            raise ValueError(f"unsupported sketch version {version}")
        nprob = struct.calcsize(f"<{K}d{L}d")
        probs = struct.unpack(f"<{K}d{L}d", blob[size : size + nprob])
        params = QKParams(q=probs[K:], attributes=M, p=probs[:K], r=r)
        body = blob[size + nprob :]
        if len(body) != 8 * m:
            raise ValueError(f"expected {2 * m} counters, got {len(body) // 4}")
        counts = np.frombuffer(body, dtype="<u4").reshape(m, 2).astype(np.int64)
        return cls(counts, params, N)

    def to_json(self) -> str:
        return json.dumps({"m": self.m, "N": self.N, "params": self.params.to_dict(), "counts": self.counts.tolist()})

    @classmethod
    def from_json(cls, text: str) -> Sketch:
        d = json.loads(text)
        return cls(np.array(d["counts"], dtype=np.int64).reshape(-1, 2), QKParams.from_dict(d["params"]), int(d["N"]))


def extract_sketch(ndb: NegDatabase) -> Sketch:
    flat = np.bincount(
        (ndb.positions * 2 + ndb.values).ravel(), minlength=2 * ndb.m
    )
    return Sketch(flat.reshape(ndb.m, 2).astype(np.int64), ndb.params, len(ndb))


@dataclass(frozen=True)
class DiffProfile:
    p_diff: np.ndarray

    @property
    def p_same(self) -> np.ndarray:
        return 1.0 - self.p_diff


def diff_profile(params: QKParams) -> DiffProfile:
    """Probability that a specific bit at each within-attribute position disagrees."""
    types = np.arange(1, params.K + 1)
    p = np.array(params.p)
    q = np.array(params.q)
    differing = (types * p).sum() * q
    agreeing = ((params.K - types) * p).sum() / params.L
    denom = differing + agreeing
    if np.any(denom == 0):
        raise ValueError(f"differ-probability undefined for q={params.q}, p={params.p}")
    return DiffProfile(differing / denom)


def _bit_log_odds(n0, n1, p_diff):
    """log Pr(bit=0) - log Pr(bit=1), with the 0/1-probability edge cases resolved."""
    n0 = np.asarray(n0, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    p_diff = np.asarray(p_diff, dtype=np.float64)
    n0, n1, p_diff = np.broadcast_arrays(n0, n1, p_diff)
    interior = (p_diff > 0) & (p_diff < 1)
    with np.errstate(divide="ignore"):
        ratio = np.log1p(-p_diff) - np.log(p_diff)
    out = np.where(interior, (n0 - n1) * np.where(interior, ratio, 0.0), 0.0)
    edge = ~interior
    if edge.any():
        # p_diff = 0: every specific bit agrees, so any count is decisive.
        # p_diff = 1: every specific bit disagrees.
        conflict = edge & (n0 > 0) & (n1 > 0)
        if conflict.any():
            idx = np.argwhere(conflict)[0]
            raise DegenerateEvidenceError(
                f"p_diff={p_diff[tuple(idx)]} but both n0={n0[tuple(idx)]:.0f} and n1={n1[tuple(idx)]:.0f} are positive"
            )
        sign = np.where(p_diff == 0, 1.0, -1.0)
        with np.errstate(invalid="ignore"):
            decisive = np.sign(n0 - n1) * sign * np.inf
        out = np.where(edge, np.where(n0 == n1, 0.0, decisive), out)
    return out


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bit_posterior(n0: int, n1: int, p_diff_j: float) -> float:
    """Posterior probability that a hidden bit is 0 given its sketch counts.

    Evaluated as a logistic function of ``(n0 - n1) * log(p_same / p_diff)``,
    which equals the ratio of likelihoods without forming tiny powers.
    """
    if n0 < 0 or n1 < 0:
        raise ValueError(f"counts must be non-negative, got {n0}, {n1}")
    if not 0 <= p_diff_j <= 1:
        raise ValueError(f"p_diff must be in [0, 1], got {p_diff_j}")
    return float(_sigmoid(_bit_log_odds(n0, n1, p_diff_j)))


def bit_posteriors(counts: np.ndarray, profile: DiffProfile) -> np.ndarray:
    """Vectorised :func:`bit_posterior` over a ``(..., m, 2)`` count array."""
    L = len(profile.p_diff)
    m = counts.shape[-2]
    p = np.tile(profile.p_diff, m // L)
    return _sigmoid(_bit_log_odds(counts[..., 0], counts[..., 1], p))


def attribute_posterior(sketch: Sketch, attr_index: int, profile: DiffProfile) -> np.ndarray:
    """Distribution of one attribute over ``0 .. 2**L - 1``."""
    L = len(profile.p_diff)
    if L > MAX_DECODE_BITS:
        raise ValueError(f"L={L} too large to enumerate (limit {MAX_DECODE_BITS})")
    M = sketch.m // L
    if not 0 <= attr_index < M:
        raise IndexError(f"attribute {attr_index} out of range [0, {M})")
    return _posterior_from_bits(
        [
            bit_posterior(int(n0), int(n1), float(pd))
            for (n0, n1), pd in zip(sketch.counts[attr_index * L : (attr_index + 1) * L], profile.p_diff)
        ]
    )


def _posterior_from_bits(prob_zero) -> np.ndarray:
    # Value d's bits run most significant first, so extending by one bit at a
    # time with an outer product keeps the index equal to d.
    dist = np.ones(1)
    for pz in prob_zero:
        dist = np.outer(dist, [pz, 1.0 - pz]).ravel()
    total = math.fsum(dist)
    if abs(total - 1.0) > _SUM_TOL:
        raise ArithmeticError(f"posterior mass {total!r} drifted from 1")
    return dist / total


@dataclass(frozen=True)
class DecodedInstance:
    bit_prob_zero: np.ndarray
    codec: AttributeCodec

    @cached_property
    def attr_posterior(self) -> np.ndarray:
        L = self.codec.bits
        if L > MAX_DECODE_BITS:
            raise ValueError(f"L={L} too large to enumerate (limit {MAX_DECODE_BITS})")
        rows = self.bit_prob_zero.reshape(self.codec.attributes, L)
        return np.stack([_posterior_from_bits(r) for r in rows])

    @cached_property
    def expected(self) -> np.ndarray:
        # The product-form posterior makes bits independent, so the mean is the
        # weighted sum of per-bit probabilities of a 1.
        ones = 1.0 - self.bit_prob_zero.reshape(self.codec.attributes, self.codec.bits)
        return ones @ self.codec.weights

    @cached_property
    def log2_max_prob(self) -> np.ndarray:
        """Per attribute, ``log2 max_d Pr(x_i = d)``."""
        pz = self.bit_prob_zero.reshape(self.codec.attributes, self.codec.bits)
        return np.log2(np.maximum(pz, 1.0 - pz)).sum(axis=1)


def decode_instance(sketch: Sketch, codec: AttributeCodec, profile: DiffProfile | None = None) -> DecodedInstance:
    if sketch.m != codec.m:
        raise ValueError(f"sketch has m={sketch.m}, codec expects {codec.m}")
    profile = profile if profile is not None else diff_profile(sketch.params)
    return DecodedInstance(bit_posteriors(sketch.counts, profile), codec)


def decode_expected(counts: np.ndarray, codec: AttributeCodec, profile: DiffProfile) -> np.ndarray:
    """Expected attribute values for a stack of sketches, shape ``(n, m, 2) -> (n, M)``."""
    pz = bit_posteriors(counts, profile)
    ones = 1.0 - pz.reshape(*pz.shape[:-1], codec.attributes, codec.bits)
    return ones @ codec.weights
