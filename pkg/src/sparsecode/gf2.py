"""Word-packed vectors and matrices over GF(2).

Bits are packed into little-endian 64-bit words: bit ``c`` of a vector lives in
word ``c // 64`` at position ``c % 64``. Padding bits beyond the logical length
are always zero. Both containers are immutable; their word arrays are marked
read-only so they can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DimensionError

WORD_BITS = 64


def n_words(n_bits: int) -> int:
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (..., L) array of 0/1 into (..., ceil(L/64)) little-endian words."""
    bits = np.asarray(bits, dtype=bool)
    length = bits.shape[-1]
    nw = n_words(length)
    padded = np.zeros(bits.shape[:-1] + (nw * WORD_BITS,), dtype=np.uint8)
    padded[..., :length] = bits
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return packed.view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, length: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :length].astype(np.uint8)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.uint64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BitVector:
    length: int
    words: np.ndarray

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        words = _frozen(self.words)
        if words.shape != (n_words(self.length),):
            raise DimensionError(f"expected {n_words(self.length)} words, got {words.shape}")
        tail = self.length % WORD_BITS
        if tail and int(words[-1]) >> tail:
            raise ValueError("padding bits must be zero")
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVector":
        arr = np.fromiter((int(b) & 1 for b in bits), dtype=np.uint8)
        return cls(len(arr), pack_bits(arr))

    @classmethod
    def from_string(cls, text: str) -> "BitVector":
        """Parse '0'/'1' characters; the first character is bit 0."""
        if set(text) - {"0", "1"}:
            raise ValueError(f"not a bit string: {text!r}")
        return cls.from_bits(int(ch) for ch in text)

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(length, np.zeros(n_words(length), dtype=np.uint64))

    @classmethod
    def ones(cls, length: int) -> "BitVector":
        return cls.from_bits(np.ones(length, dtype=np.uint8))

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.length)

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return int(self.words[i // WORD_BITS] >> np.uint64(i % WORD_BITS)) & 1

    def __len__(self) -> int:
        return self.length

    def __xor__(self, other: "BitVector") -> "BitVector":
        if other.length != self.length:
            raise DimensionError("xor of vectors with different lengths")
        return BitVector(self.length, self.words ^ other.words)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.length == other.length and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.length, self.words.tobytes()))

    def __str__(self) -> str:
        return "".join(map(str, self.to_bits()))

    def __repr__(self) -> str:
        return f"BitVector('{self}')"


@dataclass(frozen=True, eq=False)
class BitMatrix:
    rows: int
    cols: int
    data: np.ndarray  # shape (rows, n_words(cols))

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        data = _frozen(np.asarray(self.data, dtype=np.uint64).reshape(self.rows, n_words(self.cols)))
        tail = self.cols % WORD_BITS
        if tail and self.rows and np.any(data[:, -1] >> np.uint64(tail)):
            raise ValueError("padding bits must be zero")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_dense(cls, dense) -> "BitMatrix":
        dense = np.asarray(dense, dtype=np.uint8)
        if dense.ndim != 2:
            raise DimensionError("dense matrix must be 2-D")
        return cls(dense.shape[0], dense.shape[1], pack_bits(dense & 1))

    @classmethod
    def from_rows(cls, rows: Sequence[str | Sequence[int]], cols: int | None = None) -> "BitMatrix":
        parsed = [[int(c) for c in r] for r in rows]
        if cols is None:
            if not parsed:
                raise ValueError("cols is required for an empty row list")
            cols = len(parsed[0])
        if any(len(r) != cols for r in parsed):
            raise DimensionError("rows have unequal lengths")
        return cls.from_dense(np.array(parsed, dtype=np.uint8).reshape(len(parsed), cols))

    @classmethod
    def from_row_vectors(cls, vectors: Sequence[BitVector], cols: int) -> "BitMatrix":
        if any(v.length != cols for v in vectors):
            raise DimensionError("row length differs from cols")
        data = np.stack([v.words for v in vectors]) if vectors else np.zeros((0, n_words(cols)), np.uint64)
        return cls(len(vectors), cols, data)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols, np.zeros((rows, n_words(cols)), dtype=np.uint64))

    @classmethod
    def ones(cls, rows: int, cols: int) -> "BitMatrix":
        return cls.from_dense(np.ones((rows, cols), dtype=np.uint8))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    def to_dense(self) -> np.ndarray:
        return unpack_bits(self.data, self.cols).reshape(self.rows, self.cols)

    def row(self, i: int) -> BitVector:
        return BitVector(self.cols, self.data[i])

    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and bool(
            np.array_equal(self.data, other.data)
        )

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.data.tobytes()))

    def to_text(self) -> str:
        """Serialize as a "n k" header followed by one '0'/'1' line per row."""
        lines = [f"{self.rows} {self.cols}"]
        lines += ["".join(map(str, r)) for r in self.to_dense()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BitMatrix":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        n, k = (int(t) for t in lines[0].split())
        body = lines[1:]
        if len(body) != n:
            raise DimensionError(f"header says {n} rows, found {len(body)}")
        if n == 0:
            return cls.zeros(0, k)
        return cls.from_rows(body, cols=k)

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols})"


def mat_vec_mul(a: BitMatrix, x: BitVector) -> BitVector:
    """Encode: bit l of the result is the GF(2) inner product of row l with x."""
    if x.length != a.cols:
        raise DimensionError(f"vector length {x.length} != matrix cols {a.cols}")
    if a.rows == 0:
        return BitVector.zeros(0)
    parity = np.bitwise_count(a.data & x.words).sum(axis=1, dtype=np.int64) & 1
    return BitVector(a.rows, pack_bits(parity))


def rank(a: BitMatrix) -> int:
    """GF(2) rank. Elimination runs on kernel scratch space; ``a`` is untouched."""
    if a.rows == 0 or a.cols == 0:
        return 0
    return int(_kernels.prefix_ranks(a.data, a.cols)[-1])


def prefix_ranks(a: BitMatrix) -> np.ndarray:
    """Ranks of the leading row blocks: out[m] = rank(first m rows of a)."""
    if a.cols == 0:
        return np.zeros(a.rows + 1, dtype=np.int64)
    return _kernels.prefix_ranks(a.data, a.cols)


def keep_rows(a: BitMatrix, keep: BitVector) -> BitMatrix:
    if keep.length != a.rows:
        raise DimensionError(f"mask length {keep.length} != matrix rows {a.rows}")
    mask = keep.to_bits().astype(bool)
    return BitMatrix(int(mask.sum()), a.cols, a.data[mask])


def weight(v: BitVector) -> int:
    return int(np.bitwise_count(v.words).sum())


def matrix_weight(a: BitMatrix) -> int:
    return int(np.bitwise_count(a.data).sum())
