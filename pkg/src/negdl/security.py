"""How likely an attacker is to guess a hidden string from its sketch.

The best guess takes the most probable value of every attribute; the chance
that all of them are right is ``p_bf``. ``G = -log2(p_bf)`` is reported in bits.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import AttributeCodec
from .ndbgen import QKParams, generate_ndb
from .seeding import derive_seed
from .sketch import DecodedInstance, decode_instance, diff_profile, extract_sketch

# Beyond this many bits p_bf underflows a double; report it as 0.
_G_UNDERFLOW = 1000.0


def guessing_probability(decoded: DecodedInstance) -> tuple[float, float]:
    """Returns ``(p_bf, G)``."""
    g = float(-decoded.log2_max_prob.sum())
    g = max(g, 0.0)
    p_bf = 0.0 if g > _G_UNDERFLOW else 2.0 ** -g
    return p_bf, g


@dataclass
class SecurityReport:
    name: str
    params: QKParams
    per_instance_G: list[float] = field(default_factory=list)

    @property
    def string_count(self) -> int:
        return len(self.per_instance_G)

    @property
    def mean_G(self) -> float:
        return float(np.mean(self.per_instance_G)) if self.per_instance_G else math.nan

    def row(self) -> dict:
        return {
            "params": self.name,
            "mean_G": self.mean_G,
            "min": min(self.per_instance_G),
            "max": max(self.per_instance_G),
            "n": self.string_count,
        }


def random_strings(n: int, codec: AttributeCodec, seed: int) -> np.ndarray:
    """``n`` bit strings whose attributes are uniform over ``0 .. 2**L - 1``."""
    rng = np.random.default_rng(seed)
    values = rng.integers(0, codec.max_value + 1, size=(n, codec.attributes))
    return codec.to_bits_batch(values)


def instance_G(bits: np.ndarray, params: QKParams, codec: AttributeCodec, seed: int, profile=None) -> float:
    sketch = extract_sketch(generate_ndb(bits, params, seed))
    return guessing_probability(decode_instance(sketch, codec, profile))[1]


def security_sweep(
    strings, params_list, codec: AttributeCodec, seed: int = 0, threads: int = 1
) -> list[SecurityReport]:
    """One report per ``(name, params)`` pair; every string gets a fresh NDB.

    ``params_list`` is a sequence of ``(name, QKParams)``. The NDB for string
    ``k`` under parameter set ``name`` is seeded from ``(seed, name, k)``, so
    results do not depend on ``threads``.
    """
    strings = np.asarray(strings, dtype=np.uint8)
    if strings.ndim != 2 or strings.shape[1] != codec.m:
        raise ValueError(f"strings must be n x {codec.m}, got {strings.shape}")
    reports = []
    for name, params in params_list:
        profile = diff_profile(params)

        def one(k, params=params, profile=profile, name=name):
            return instance_G(strings[k], params, codec, derive_seed(seed, f"security/{name}", k), profile)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                gs = list(pool.map(one, range(len(strings))))
        else:
            gs = [one(k) for k in range(len(strings))]
        reports.append(SecurityReport(name, params, gs))
    return reports


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["params", "mean_G", "min", "max", "n"])
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row())


def write_reports_json(reports, path) -> None:
    out = [
        {**rep.row(), "qk_params": rep.params.to_dict(), "per_instance_G": rep.per_instance_G}
        for rep in reports
    ]
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
