"""Named q vectors: Q1-Q5 for 4-bit attributes and Q1-Q12 for 8-bit attributes."""

from __future__ import annotations

from .ndbgen import DEFAULT_P, DEFAULT_R, QKParams

Q_L4 = {
    "Q1": (0.10, 0.10, 0.10, 0.70),
    "Q2": (0.25, 0.25, 0.25, 0.25),
    "Q3": (0.30, 0.10, 0.10, 0.50),
    "Q4": (0.50, 0.10, 0.10, 0.30),
    "Q5": (0.70, 0.10, 0.10, 0.10),
}

Q_L8 = {
    "Q1": (0.05, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.35),
    "Q2": (0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.30),
    "Q3": (0.125,) * 8,
    "Q4": (0.20, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.20),
    "Q5": (0.30, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10),
    "Q6": (0.40, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.30),
    "Q7": (0.50, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.20),
    "Q8": (0.60, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.10),
    "Q9": (0.70, 0.00, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05),
    "Q10": (0.80, 0.00, 0.00, 0.00, 0.05, 0.05, 0.05, 0.05),
    "Q11": (0.90, 0.00, 0.00, 0.00, 0.00, 0.00, 0.05, 0.05),
    "Q12": (0.95, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.05),
}

PRESETS = {4: Q_L4, 8: Q_L8}


def preset_q(name: str, bits: int) -> tuple[float, ...]:
    try:
        return PRESETS[bits][name]
    except KeyError:
        known = sorted(PRESETS.get(bits, {}), key=lambda s: int(s[1:]))
        raise KeyError(f"no preset {name!r} for {bits}-bit attributes (known: {known})") from None


def preset_params(name: str, bits: int, attributes: int, p=DEFAULT_P, r=DEFAULT_R) -> QKParams:
    return QKParams(q=preset_q(name, bits), attributes=attributes, p=p, r=r)


def preset_names(bits: int) -> list[str]:
    return sorted(PRESETS[bits], key=lambda s: int(s[1:]))
