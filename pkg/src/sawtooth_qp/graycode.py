"""Binary and reflected Gray code encodings.

Bit position 0 of a :class:`BitVector` is the most significant bit, so the
integer value of ``bits`` is ``sum(2**(L-1-k) * bits[k])``.  Partial
assignments use 1-based bit indices (1 = most significant) because that is
how the sawtooth layers are numbered elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

MAX_ENUM_BITS = 20  # guard for the enumerating helpers


@dataclass(frozen=True)
class BitVector:
    """Fixed-length 0/1 sequence, most significant bit first."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"bit vector entries must be 0 or 1, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, k):
        return self.bits[k]

    def __str__(self):
        return "".join(str(b) for b in self.bits)

    def xor(self, other: "BitVector") -> "BitVector":
        if len(other) != len(self):
            raise ValueError("length mismatch in xor")
        return BitVector(tuple(a ^ b for a, b in zip(self.bits, other.bits)))

    def hamming(self, other: "BitVector") -> int:
        if len(other) != len(self):
            raise ValueError("length mismatch in hamming distance")
        return sum(a != b for a, b in zip(self.bits, other.bits))


def _check_range(i: int, L: int) -> None:
    if L < 0:
        raise ValueError(f"bit count must be nonnegative, got {L}")
    if not 0 <= i < 2**L:
        raise ValueError(f"integer {i} out of range for {L} bits")


def binary_encode(i: int, L: int) -> BitVector:
    """Standard binary expansion of ``i`` on ``L`` bits."""
    _check_range(i, L)
    return BitVector(tuple((i >> (L - 1 - k)) & 1 for k in range(L)))


def binary_decode(bits: Iterable[int]) -> int:
    value = 0
    for b in bits:
        value = 2 * value + int(b)
    return value


def gray_encode(i: int, L: int) -> BitVector:
    """Reflected Gray code: first bit copied, later bits are xors of neighbours."""
    beta = binary_encode(i, L).bits
    alpha = [beta[0]] if L else []
    alpha += [beta[k] ^ beta[k - 1] for k in range(1, L)]
    return BitVector(tuple(alpha))


def gray_decode(a) -> int:
    """Inverse of :func:`gray_encode`: binary bit k is the xor of the first k Gray bits."""
    running = 0
    beta = []
    for bit in a:
        running ^= int(bit)
        beta.append(running)
    return binary_decode(beta)


def gray_sequence(L: int) -> list[BitVector]:
    """All ``2**L`` codes in counting order."""
    if L > MAX_ENUM_BITS:
        raise ValueError(f"refusing to enumerate {L} bits")
    return [gray_encode(i, L) for i in range(2**L)]


@dataclass
class RestrictedSequence:
    """Codes whose bits agree with a partial assignment.

    ``values`` are the matching integers in increasing order, ``free_codes``
    the corresponding sub-vectors on the free positions (ascending index),
    ``free_positions`` the 1-based free indices and ``offset`` the xor mask
    turning ``free_codes[j]`` into the plain Gray code of ``j``.
    """

    values: list[int]
    free_codes: list[BitVector]
    free_positions: list[int]
    offset: BitVector


def restricted_sequence(L: int, fixed: Mapping[int, int]) -> RestrictedSequence:
    """Enumerate the Gray codes of ``0..2**L-1`` that match ``fixed``.

    ``fixed`` maps 1-based bit positions to 0/1.
    """
    if L > MAX_ENUM_BITS:
        raise ValueError(f"refusing to enumerate {L} bits")
    for pos, val in fixed.items():
        if not 1 <= pos <= L:
            raise ValueError(f"fixed position {pos} outside 1..{L}")
        if val not in (0, 1):
            raise ValueError(f"fixed value at position {pos} must be 0 or 1")
    free = [p for p in range(1, L + 1) if p not in fixed]
    values, codes = [], []
    for i in range(2**L):
        code = gray_encode(i, L)
        if all(code[p - 1] == v for p, v in fixed.items()):
            values.append(i)
            codes.append(BitVector(tuple(code[p - 1] for p in free)))
    offset = codes[0] if codes else BitVector(tuple(0 for _ in free))
    return RestrictedSequence(values, codes, free, offset)


def double_extension(i: int, L: int) -> tuple[BitVector, BitVector]:
    """Gray codes of ``2i`` and ``2i+1`` on ``L+1`` bits.

    They share the ``L``-bit code of ``i`` as a prefix and end in the last
    binary digit of ``i`` and its complement respectively.
    """
    _check_range(i, L)
    return gray_encode(2 * i, L + 1), gray_encode(2 * i + 1, L + 1)
