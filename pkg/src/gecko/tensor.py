"""Dense matrices, sign-packed bit matrices and the seeded random source.

Dense matrices are plain 2-D ``float64`` numpy arrays. Binary matrices are
packed one bit per element into little-endian 64-bit words, with ``+1``
stored as bit 1 and ``-1`` as bit 0. Bit ``j`` of a row lives in word
``j // WORD_BITS`` at position ``j % WORD_BITS``; padding bits in the last
word of each row are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WORD_BITS = 64
WORD_DTYPE = np.dtype("<u8")


def words_per_row(cols: int) -> int:
    return -(-cols // WORD_BITS)


@dataclass
class OpCounter:
    """Per-invocation accumulator for inference cost.

    Pass an instance to :func:`matmul` or :func:`gecko.quantize.xnor_linear`
    to count work; nothing is counted when ``None`` is passed.
    """

    macs: int = 0
    xnors: int = 0

    def reset(self) -> None:
        self.macs = 0
        self.xnors = 0


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


def matmul(a: np.ndarray, b: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Real matrix product ``a @ b``.

    Adds ``a.rows * a.cols * b.cols`` multiply-accumulates to ``counter``.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    if counter is not None:
        counter.macs += a.shape[0] * a.shape[1] * b.shape[1]
    return a @ b


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """Sign matrix packed one bit per entry.

    Parameters
    ----------
    rows, cols : int
        Logical dimensions.
    words : np.ndarray
        ``(rows, words_per_row(cols))`` array of little-endian uint64 words.
    """

    rows: int
    cols: int
    words: np.ndarray = field(repr=False)

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=WORD_DTYPE)
        if words.shape != (self.rows, words_per_row(self.cols)):
            raise ValueError(
                f"word array shape {words.shape} does not match "
                f"{self.rows}x{self.cols} with {WORD_BITS}-bit words"
            )
        words = words.copy()
        tail = self.cols % WORD_BITS
        if tail and self.rows:
            words[:, -1] &= np.uint64((1 << tail) - 1)
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def word_bits(self) -> int:
        return WORD_BITS

    @property
    def nbytes(self) -> int:
        return self.words.size * WORD_DTYPE.itemsize

    def padding_mask(self) -> np.ndarray:
        """Per-word mask with 1s on padding positions (one row's worth)."""
        mask = np.zeros(words_per_row(self.cols), dtype=WORD_DTYPE)
        tail = self.cols % WORD_BITS
        if tail:
            mask[-1] = np.uint64(~((1 << tail) - 1) & 0xFFFFFFFFFFFFFFFF)
        return mask

    def transpose(self) -> BitMatrix:
        return pack_signs(unpack_signs(self).T)

    def __eq__(self, other):
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    __hash__ = None


def _pack_bool(bits: np.ndarray) -> np.ndarray:
    rows, cols = bits.shape
    nw = words_per_row(cols)
    padded = np.zeros((rows, nw * WORD_BITS), dtype=bool)
    padded[:, :cols] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view(WORD_DTYPE).reshape(rows, nw)


def pack_signs(m) -> BitMatrix:
    """Pack a matrix of exact ``+1.0``/``-1.0`` entries into a :class:`BitMatrix`."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D sign matrix, got shape {m.shape}")
    pos = m == 1.0
    if not np.all(pos | (m == -1.0)):
        bad = m[~(pos | (m == -1.0))].ravel()[0]
        raise ValueError(f"pack_signs accepts only +1/-1 entries, found {bad!r}")
    return BitMatrix(m.shape[0], m.shape[1], _pack_bool(pos))


def unpack_signs(b: BitMatrix) -> np.ndarray:
    """Decode a :class:`BitMatrix` back into a ``+1``/``-1`` float matrix."""
    raw = np.ascontiguousarray(b.words).view(np.uint8).reshape(b.rows, b.words.shape[1] * WORD_DTYPE.itemsize)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, : b.cols]
    return np.where(bits == 1, 1.0, -1.0)


class SeededRng:
    """Deterministic random source; every random draw in the package goes through one."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def spawn(self, salt: int) -> SeededRng:
        """Independent child stream derived from this seed and ``salt``."""
        seq = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, int(salt)])
        child = SeededRng.__new__(SeededRng)
        child.seed = self.seed
        child._gen = np.random.Generator(np.random.PCG64(seq))
        return child
