"""Counter-based random streams.

Every random draw made by the samplers is addressed by a key path such as
``(seed, sweep, step, individual, period)``.  Global draws (beta, Sigma, h)
come from a :class:`numpy.random.Generator` backed by Philox keyed on the
path; per-cell draws (alpha_i, nu_it) come from :class:`CellStream`, which
hashes ``(cell key, counter)`` with the SplitMix64 finalizer.  Because no
draw depends on the order in which cells are visited, chains are
bit-identical for any thread count or individual ordering.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# step identifiers used in key paths
INIT = 0
BETA = 1
ALPHA = 2
NU = 3
SIGMA = 4
H = 5
DATA = 6


def _mix_int(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


_U_GOLDEN = np.array(_GOLDEN, dtype=np.uint64)
_U_M1 = np.array(_M1, dtype=np.uint64)
_U_M2 = np.array(_M2, dtype=np.uint64)
_U11, _U27, _U30, _U31 = (np.array(v, dtype=np.uint64) for v in (11, 27, 30, 31))


def mix64(x: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer over uint64 arrays (wrapping arithmetic)."""
    # explicit out= ufuncs: this sits on the per-sweep hot path of tiny panels
    z = np.add(np.asarray(x, dtype=np.uint64), _U_GOLDEN)
    t = np.right_shift(z, _U30)
    np.bitwise_xor(z, t, out=z)
    np.multiply(z, _U_M1, out=z)
    np.right_shift(z, _U27, out=t)
    np.bitwise_xor(z, t, out=z)
    np.multiply(z, _U_M2, out=z)
    np.right_shift(z, _U31, out=t)
    np.bitwise_xor(z, t, out=z)
    return z


_ROOT = 0x243F6A8885A308D3


def _fold(key: int, path) -> int:
    for part in path:
        key = _mix_int(key ^ _mix_int(int(part) & _MASK))
    return key


def derive_key(*path: int) -> int:
    """Fold a path of integers into one 64-bit key."""
    return _fold(_ROOT, path)


def label_key(label) -> int:
    """Stable 64-bit key for an individual label (int or str)."""
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def combine(keys: np.ndarray, salt: int | np.ndarray) -> np.ndarray:
    """Combine uint64 keys with a salt (broadcasting)."""
    keys = np.asarray(keys, dtype=np.uint64)
    if isinstance(salt, (int, np.integer)):
        salted = np.uint64(_mix_int(int(salt) & _MASK))
    else:
        salted = mix64(np.asarray(salt, dtype=np.uint64))
    return mix64(keys ^ salted)


class CellStream:
    """Generator-like source of independent draws per cell.

    ``cell_keys`` has shape ``C``; a request for ``size = C + E`` returns an
    array in which entry ``[c, e]`` is draw number ``counter + flat(e)`` of
    cell ``c``.  Only the methods the samplers need are provided.
    """

    def __init__(self, stream_key: int, cell_keys: np.ndarray):
        cells = np.asarray(cell_keys, dtype=np.uint64)
        # cell keys are already hashed, so a xor with the stream key seeds an
        # independent SplitMix64 sequence per cell
        self._keys = np.bitwise_xor(cells, np.array(stream_key, dtype=np.uint64))[..., None]
        self._used = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self._keys.shape[:-1]

    def _bits(self, size) -> np.ndarray:
        cshape = self._keys.shape[:-1]
        if size is None:
            size = cshape
        elif not isinstance(size, tuple):
            size = tuple(np.atleast_1d(size))
        if size[: len(cshape)] != cshape:
            raise ValueError(f"request shape {size} does not start with cell shape {cshape}")
        m = 1
        for e in size[len(cshape):]:
            m *= int(e)
        counters = np.arange(self._used + 1, self._used + m + 1, dtype=np.uint64)
        self._used += m
        np.multiply(counters, _U_GOLDEN, out=counters)
        bits = mix64(np.add(self._keys, counters))
        return bits if bits.shape == size else bits.reshape(size)

    def random(self, size=None) -> np.ndarray:
        bits = np.right_shift(self._bits(size), _U11).astype(np.float64)
        bits += 0.5
        bits *= 2.0**-53
        return bits

    def standard_normal(self, size=None) -> np.ndarray:
        return ndtri(self.random(size))

    def standard_exponential(self, size=None) -> np.ndarray:
        return -np.log(self.random(size))


class KeyedStreams:
    """Factory of keyed generators rooted at one 64-bit seed.

    :meth:`generator` re-keys one cached Philox generator, so a returned
    generator is only valid until the next call on the same instance; give
    each thread its own ``KeyedStreams``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._base = derive_key(self.seed)
        self._prefix = (None, 0)  # (first path element, key folded through it)
        self._bitgen = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bitgen)

    def _key(self, path) -> int:
        # path[0] is the sweep index in every sampler call; cache its fold
        if not path:
            return self._base
        head, folded = self._prefix
        if head != path[0]:
            folded = _fold(self._base, path[:1])
            self._prefix = (path[0], folded)
        return _fold(folded, path[1:])

    def generator(self, *path: int) -> np.random.Generator:
        key = self._key(path)
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.zeros(4, dtype=np.uint64),
                      "key": np.array([key, 0], dtype=np.uint64)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen

    def cells(self, cell_keys: np.ndarray, *path: int) -> CellStream:
        return CellStream(self._key(path), cell_keys)
