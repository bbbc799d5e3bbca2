"""Keyed, counter-based Gaussian perturbation streams.

Every random draw in this package is addressed by an explicit key
``(phase, iteration, time_index, member, kind)`` under a 64-bit root seed.
The same (seed, key) always yields the identical standard-normal vector,
no matter when or in what order it is requested.  This is what lets two
algorithm variants (e.g. a sample-covariance run and an exact-covariance
reference run, or a tangent-operator run and a finite-difference run)
consume *literally the same* noise realizations, so that their difference
isolates algorithmic error rather than Monte Carlo noise.

Draws are generated with the Philox 4x32-10 counter-based generator, with
the key components packed bijectively into the counter/key words, and
turned into normals by the Box-Muller transform (fixed consumption: one
128-bit block per pair of normals).  Generation is vectorized across
members, which is where all the volume is.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "Phase",
    "NoiseKind",
    "DrawKey",
    "PerturbationStream",
    "derive_seed",
]

_U64 = np.uint64
_MASK32 = _U64(0xFFFFFFFF)
# Philox 4x32 round constants (Salmon et al.'s Random123 parameterization).
_M0 = _U64(0xD2511F53)
_M1 = _U64(0xCD9E8D57)
_W0 = _U64(0x9E3779B9)
_W1 = _U64(0xBB67AE85)

_SEED_LIMIT = 1 << 64
_ITER_LIMIT = 1 << 16
_INDEX_LIMIT = 1 << 32


class Phase(IntEnum):
    """Draw-key namespace separating algorithm families.

    SMOOTHER covers the filter/smoother runs (single pass, iteration 0);
    LM covers the iterated solvers.  Both LM solver variants share the LM
    phase on purpose: the tangent-operator and finite-difference runs must
    consume identical draws.
    """

    SMOOTHER = 0
    LM = 1


class NoiseKind(IntEnum):
    INIT = 0
    MODEL = 1
    OBS = 2


class DrawKey(NamedTuple):
    phase: int
    iteration: int
    time_index: int
    member: int
    kind: int


def _check_component(name: str, value: int, limit: int) -> int:
    value = int(value)
    if not 0 <= value < limit:
        raise ValidationError(f"draw key component {name}={value} outside [0, {limit})")
    return value


def _philox_blocks(c0: np.ndarray, c1: int, c2: int, c3: np.ndarray, k0: int, k1: int) -> np.ndarray:
    """Run Philox 4x32-10 on a batch of counters sharing (c1, c2, k0, k1).

    Inputs hold 32-bit values in uint64 arrays/scalars; products of two
    32-bit values fit a uint64 exactly, so no modular multiply is needed.
    Returns an array of shape (B, 4) of 32-bit output words.
    """
    x0 = c0.astype(_U64, copy=True)
    x1 = np.full_like(x0, _U64(c1))
    x2 = np.full_like(x0, _U64(c2))
    x3 = c3.astype(_U64, copy=True)
    key0 = _U64(k0)
    key1 = _U64(k1)
    for _ in range(10):
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0 = p0 >> _U64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> _U64(32)
        lo1 = p1 & _MASK32
        x0 = hi1 ^ x1 ^ key0
        x1 = lo1
        x2 = hi0 ^ x3 ^ key1
        x3 = lo0
        key0 = (key0 + _W0) & _MASK32
        key1 = (key1 + _W1) & _MASK32
    return np.stack([x0, x1, x2, x3], axis=1)


def _normals_from_blocks(blocks: np.ndarray) -> np.ndarray:
    """Box-Muller: one (B, 4) block of 32-bit words -> (B, 2) standard normals.

    Each uniform uses 53 bits (two words), so a block yields exactly one
    normal pair; consumption per key is fixed, which keeps member draws
    independent of ensemble size and of each other.
    """
    hi = blocks[:, 0] << _U64(21)
    u1 = (hi | (blocks[:, 1] >> _U64(11))).astype(np.float64)
    hi = blocks[:, 2] << _U64(21)
    u2 = (hi | (blocks[:, 3] >> _U64(11))).astype(np.float64)
    scale = 2.0**-53
    u1 = (u1 + 1.0) * scale  # in (0, 1]: log is finite
    u2 = u2 * scale  # in [0, 1)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)


@dataclass
class PerturbationStream:
    """Deterministic keyed source of standard-normal vectors.

    Parameters
    ----------
    seed : int
        Root seed in [0, 2**64).  Streams with different seeds are
        statistically independent.
    log : list, optional
        If provided, every draw appends ``(DrawKey, dim)`` to this list.
        Used to assert that two coupled runs consumed identical draws.

    Notes
    -----
    The stream holds no evolving state: a draw is a pure function of
    (seed, key, dim), so keys may be consumed in any order, concurrently,
    or repeatedly, with identical results.
    """

    seed: int
    log: list | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < _SEED_LIMIT:
            raise ValidationError(f"seed {self.seed} outside [0, 2**64)")
        self.seed = int(self.seed)

    def draw(self, key: DrawKey | Sequence[int], dim: int) -> np.ndarray:
        """Standard-normal vector of length ``dim`` for one key."""
        key = DrawKey(*key)
        out = self.draw_members(
            key.phase, key.iteration, key.time_index, key.kind, [key.member], dim
        )
        return out[0]

    def draw_members(
        self,
        phase: int,
        iteration: int,
        time_index: int,
        kind: int,
        members: Sequence[int] | np.ndarray,
        dim: int,
    ) -> np.ndarray:
        """Standard-normal matrix of shape (len(members), dim).

        Row ``r`` is exactly the vector that ``draw`` would return for the
        key ``(phase, iteration, time_index, members[r], kind)``; batching
        is purely a speed device.
        """
        phase = _check_component("phase", phase, 256)
        kind = _check_component("kind", kind, 256)
        iteration = _check_component("iteration", iteration, _ITER_LIMIT)
        time_index = _check_component("time_index", time_index, _INDEX_LIMIT)
        dim = int(dim)
        if dim < 1:
            raise ValidationError(f"draw dimension must be >= 1, got {dim}")
        members_arr = np.asarray(members, dtype=np.int64)
        if members_arr.ndim != 1:
            raise ValidationError("members must be a 1-d sequence of indices")
        if members_arr.size and (members_arr.min() < 0 or members_arr.max() >= _INDEX_LIMIT):
            raise ValidationError("member indices must lie in [0, 2**32)")

        n_members = members_arr.size
        n_blocks = (dim + 1) // 2
        if n_blocks >= _INDEX_LIMIT:
            raise ValidationError(f"draw dimension {dim} too large")

        # Counter layout: c0 = block index within the draw, c1 packs
        # (phase, kind, iteration), c2 = time index, c3 = member index;
        # the Philox key carries the 64-bit seed.  The packing is
        # bijective within the documented bounds, so distinct keys can
        # never alias.
        c0 = np.tile(np.arange(n_blocks, dtype=np.uint64), n_members)
        c3 = np.repeat(members_arr.astype(np.uint64), n_blocks)
        c1 = (phase << 24) | (kind << 16) | iteration
        blocks = _philox_blocks(
            c0, c1, time_index, c3, self.seed & 0xFFFFFFFF, self.seed >> 32
        )
        normals = _normals_from_blocks(blocks).reshape(n_members, 2 * n_blocks)
        out = np.ascontiguousarray(normals[:, :dim])

        if self.log is not None:
            for m in members_arr:
                self.log.append(
                    (DrawKey(phase, iteration, time_index, int(m), kind), dim)
                )
        return out


def derive_seed(root_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed, e.g. one per study replicate."""
    if not 0 <= int(root_seed) < _SEED_LIMIT:
        raise ValidationError(f"seed {root_seed} outside [0, 2**64)")
    if int(index) < 0:
        raise ValidationError(f"derivation index must be >= 0, got {index}")
    payload = int(root_seed).to_bytes(8, "little") + int(index).to_bytes(8, "little")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")
