"""QK-hidden negative database generation.

A record has exactly ``K`` specific bits. A type-``i`` record (drawn with
probability ``p[i-1]``) sets ``i`` of them to the complement of the hidden
string, at within-attribute positions drawn from ``q``, and the other
``K - i`` equal to the hidden string at uniformly drawn positions. In both
cases the attribute is uniform.

Records are stored sparsely as ``(position, value)`` pairs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .data import bits_from_string

DEFAULT_K = 3
DEFAULT_P = (0.70, 0.24, 0.06)
DEFAULT_R = 6.5

_PROB_TOL = 1e-6
_MAX_RESAMPLE_ROUNDS = 1000


class ParamsError(ValueError):
    pass


def _cumulative(probs: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return cum


@dataclass(frozen=True)
class QKParams:
    """Generation parameters. ``q`` has one entry per bit of an attribute."""

    q: tuple[float, ...]
    attributes: int
    p: tuple[float, ...] = DEFAULT_P
    r: float = DEFAULT_R

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        for name, vec in (("p", self.p), ("q", self.q)):
            if not vec:
                raise ParamsError(f"{name} must be non-empty")
            if any(x < 0 or not np.isfinite(x) for x in vec):
                raise ParamsError(f"{name} has a negative or non-finite entry: {vec}")
            if abs(sum(vec) - 1.0) > _PROB_TOL:
                raise ParamsError(f"{name} must sum to 1, sums to {sum(vec)!r}")
        if self.attributes < 1:
            raise ParamsError(f"attributes must be positive, got {self.attributes}")
        if not self.r > 0:
            raise ParamsError(f"r must be positive, got {self.r}")
        if self.K > self.m:
            raise ParamsError(f"K={self.K} exceeds string length m={self.m}")
        # Every record type with non-zero mass needs enough distinct differing positions.
        diff_slots = sum(1 for x in self.q if x > 0) * self.attributes
        max_type = max(i + 1 for i, x in enumerate(self.p) if x > 0)
        if max_type > diff_slots:
            raise ParamsError(
                f"type-{max_type} records need {max_type} distinct differing positions, "
                f"only {diff_slots} have q > 0"
            )

    @property
    def K(self) -> int:
        return len(self.p)

    @property
    def L(self) -> int:
        return len(self.q)

    @property
    def m(self) -> int:
        return self.L * self.attributes

    @property
    def N(self) -> int:
        return int(round(self.m * self.r))

    @property
    def thresholds(self) -> np.ndarray:
        """``P_0 .. P_K`` with ``P_0 = 0`` and ``P_K = 1``."""
        return np.concatenate([[0.0], _cumulative(np.array(self.p))])

    def to_dict(self) -> dict:
        return {"K": self.K, "L": self.L, "M": self.attributes, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> QKParams:
        return cls(q=tuple(d["q"]), attributes=int(d["attributes"]), p=tuple(d["p"]), r=float(d["r"]))


@dataclass(frozen=True)
class NegRecord:
    positions: tuple[int, ...]
    values: tuple[int, ...]

    def render(self, m: int) -> str:
        out = ["*"] * m
        for pos, val in zip(self.positions, self.values):
            out[pos] = str(val)
        return "".join(out)


@dataclass
class NegDatabase:
    """``positions[n, k]`` / ``values[n, k]`` hold the k-th specific bit of record n."""

    positions: np.ndarray
    values: np.ndarray
    params: QKParams

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def K(self) -> int:
        return self.params.K

    def __len__(self) -> int:
        return len(self.positions)

    def __iter__(self) -> Iterator[NegRecord]:
        for pos, val in zip(self.positions.tolist(), self.values.tolist()):
            yield NegRecord(tuple(pos), tuple(val))

    def __getitem__(self, i: int) -> NegRecord:
        return NegRecord(tuple(self.positions[i].tolist()), tuple(self.values[i].tolist()))


def _as_bits(s, m: int | None = None) -> np.ndarray:
    bits = bits_from_string(s) if isinstance(s, str) else np.asarray(s, dtype=np.uint8)
    if m is not None and len(bits) != m:
        raise ParamsError(f"hidden string has {len(bits)} bits, params expect m={m}")
    return bits


def _draw_positions(rng, n: int, differ: np.ndarray, q_cum: np.ndarray, L: int, M: int) -> np.ndarray:
    within = np.where(
        differ,
        np.searchsorted(q_cum, rng.random(n), side="right"),
        rng.integers(0, L, size=n),
    )
    return rng.integers(0, M, size=n) * L + within


def generate_ndb(s, params: QKParams, seed) -> NegDatabase:
    """Generate ``round(m * r)`` records hiding ``s`` (a bit string or 0/1 array).

    ``seed`` is anything :func:`numpy.random.default_rng` accepts. Colliding
    positions inside a record are redrawn from the same distribution until all
    ``K`` positions are distinct.
    """
    bits = _as_bits(s, params.m)
    rng = np.random.default_rng(seed)
    K, L, M, N = params.K, params.L, params.attributes, params.N
    q_cum = _cumulative(np.array(params.q))

    # P_{i-1} <= rnd < P_i selects type i.
    types = np.searchsorted(params.thresholds[1:], rng.random(N), side="right") + 1
    differ = np.arange(K)[None, :] < types[:, None]
    positions = _draw_positions(rng, N * K, differ.ravel(), q_cum, L, M).reshape(N, K)

    for _ in range(_MAX_RESAMPLE_ROUNDS):
        dup = np.zeros((N, K), dtype=bool)
        for k in range(1, K):
            dup[:, k] = (positions[:, :k] == positions[:, k : k + 1]).any(axis=1)
        if not dup.any():
            break
        rows, cols = np.nonzero(dup)
        positions[rows, cols] = _draw_positions(rng, len(rows), differ[rows, cols], q_cum, L, M)
    else:
        raise RuntimeError("could not draw distinct record positions")

    values = np.where(differ, 1 - bits[positions], bits[positions]).astype(np.uint8)
    return NegDatabase(positions.astype(np.int64), values, params)


def record_type(rec: NegRecord, s) -> int:
    """Number of specific bits of ``rec`` that disagree with ``s``."""
    bits = _as_bits(s)
    if rec.positions and max(rec.positions) >= len(bits):
        raise ParamsError(f"record position {max(rec.positions)} outside string of length {len(bits)}")
    return sum(int(bits[p]) != v for p, v in zip(rec.positions, rec.values))


def record_types(ndb: NegDatabase, s) -> np.ndarray:
    bits = _as_bits(s, ndb.m)
    return (bits[ndb.positions] != ndb.values).sum(axis=1)


def write_ndb(ndb: NegDatabase, path) -> None:
    header = {"m": ndb.m, "K": ndb.K, "N": len(ndb), "params": ndb.params.to_dict()}
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header) + "\n")
        for pos, val in zip(ndb.positions.tolist(), ndb.values.tolist()):
            fh.write(" ".join(f"{p}:{v}" for p, v in zip(pos, val)) + "\n")


def read_ndb(path) -> NegDatabase:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing NDB header line")
        header = json.loads(first[2:])
        params = QKParams.from_dict(header["params"])
        positions, values = [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                pairs = [tok.split(":") for tok in line.split()]
                positions.append([int(p) for p, _ in pairs])
                values.append([int(v) for _, v in pairs])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad pos:val pair") from None
    if len(positions) != header["N"]:
        raise ValueError(f"{path}: header says N={header['N']}, found {len(positions)} records")
    return NegDatabase(
        np.array(positions, dtype=np.int64).reshape(-1, params.K),
        np.array(values, dtype=np.uint8).reshape(-1, params.K),
        params,
    )

