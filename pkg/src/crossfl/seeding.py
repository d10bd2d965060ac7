"""Deterministic 64-bit seed derivation and uniform draws.

The generator is SplitMix64: state advances by the golden-gamma constant
and each output is a finalized mix of the state. It is tiny, documented,
and trivially portable, which is what package authoring needs so that one
spec+seed always produces the same initial weights no matter which tool
wrote the package.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential 64-bit stream from one seed."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix(self.state)

    def next_unit(self) -> float:
        """Uniform double in [0, 1): top 53 bits of the next output."""
        return (self.next_u64() >> 11) * 2.0**-53


def derive_seed(*parts: int) -> int:
    """Fold integers into one well-mixed 64-bit seed (order-sensitive)."""
    acc = 0
    for part in parts:
        acc = _mix((acc + _GAMMA + (part & _MASK)) & _MASK)
    return acc
