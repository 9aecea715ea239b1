"""Stable seed derivation.

Child seeds come from BLAKE2b over the parent seed and a scope string, so
per-problem / per-call RNG streams are independent, reproducible across
processes and platforms, and safe to fan out in parallel without any
shared-state coordination.
"""

from __future__ import annotations

import hashlib


def child_seed(parent: int, *scope: object) -> int:
    tag = ":".join(str(s) for s in scope)
    digest = hashlib.blake2b(
        f"{parent}|{tag}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")
