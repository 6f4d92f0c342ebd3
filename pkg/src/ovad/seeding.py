"""Deterministic fan-out of one base seed to named subsystems."""

from __future__ import annotations

import hashlib


def derive_seed(base_seed: int, label: str) -> int:
    """Stable 32-bit child seed for `label`, independent of call order."""
    digest = hashlib.sha256(f"{base_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
