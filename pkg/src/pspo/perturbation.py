"""Sign-flip perturbation matrices.

A block is built from a random base vector ``delta0`` in {-1, +1}^p by
negating one coordinate at a time: column j of the block is ``delta0`` with
entry j flipped.  Blocks of p columns are stacked until M columns exist, each
block with a fresh base.  For p != 2 every block is invertible.  For p == 2
the two flipped columns are negatives of each other, so that case falls back
to rejection sampling of independent sign vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import derive_seed


@dataclass(frozen=True)
class PerturbationMatrix:
    """A ``p x M`` matrix of +/-1 entries, one perturbation per column."""

    matrix: np.ndarray
    seed: Optional[int] = None

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def M(self) -> int:
        return self.matrix.shape[1]

    @property
    def columns(self):
        return [self.matrix[:, i] for i in range(self.M)]


def _signs(rng, p):
    return np.where(rng.integers(0, 2, size=p) == 1, 1.0, -1.0)


def sample_delta0(p: int, rng_seed: int) -> np.ndarray:
    """Draw ``p`` independent fair +/-1 signs, reproducibly from ``rng_seed``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return _signs(np.random.default_rng(int(rng_seed)), p)


def flip_column(delta0, j: int) -> np.ndarray:
    """Return ``delta0`` with the sign of entry ``j`` (1-based) negated."""
    v = np.array(delta0, dtype=np.float64)
    if not 1 <= j <= v.size:
        raise IndexError(f"flip index {j} outside 1..{v.size}")
    v[j - 1] = -v[j - 1]
    return v


def scheme_block(delta0) -> np.ndarray:
    """The literal ``p x p`` block whose column j flips entry j of ``delta0``.

    This is singular for p == 2; :func:`build_perturbations` avoids that case.
    """
    d0 = np.asarray(delta0, dtype=np.float64)
    block = np.tile(d0[:, None], (1, d0.size))
    idx = np.arange(d0.size)
    block[idx, idx] = -d0
    return block


def _two_dim_block(rng, ncols, first=None):
    a = _signs(rng, 2) if first is None else np.asarray(first, dtype=np.float64)
    if ncols == 1:
        return a[:, None]
    while True:
        b = _signs(rng, 2)
        # the only dependent +/-1 vectors in R^2 are +a and -a
        if abs(a @ b) < 2:
            return np.column_stack([a, b])


def build_perturbations(p: int, M: int, rng_seed: int, base=None) -> PerturbationMatrix:
    """Build the ``p x M`` sign-flip perturbation matrix.

    Column i (1-based) flips coordinate ``((i - 1) mod p) + 1`` of the base
    vector of its block; block ``b`` covers columns ``b*p + 1 .. (b+1)*p``.
    ``base`` forces the base vector of every block (used in tests); by
    default each block draws its own from ``derive_seed(rng_seed, b)``.
    """
    if p < 1 or M < 1:
        raise ValueError(f"need p >= 1 and M >= 1, got p={p}, M={M}")
    blocks = []
    n_blocks = -(-M // p)
    for b in range(n_blocks):
        ncols = min(p, M - b * p)
        block_seed = derive_seed(rng_seed, b)
        if p == 2:
            blocks.append(_two_dim_block(np.random.default_rng(block_seed), ncols, base))
            continue
        d0 = sample_delta0(p, block_seed) if base is None else np.asarray(base, dtype=np.float64)
        blocks.append(scheme_block(d0)[:, :ncols])
    return PerturbationMatrix(np.hstack(blocks), seed=int(rng_seed))


def as_delta_matrix(delta):
    if isinstance(delta, PerturbationMatrix):
        return delta.matrix
    D = np.asarray(delta, dtype=np.float64)
    return D[:, None] if D.ndim == 1 else D


def matrix_rank(delta) -> int:
    """Numerical rank with threshold ``p * M * eps * sigma_max``."""
    D = as_delta_matrix(delta)
    sv = np.linalg.svd(D, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    tol = D.shape[0] * D.shape[1] * np.finfo(np.float64).eps * sv[0]
    return int(np.sum(sv > tol))


def spans_space(delta) -> bool:
    """True iff the columns of ``delta`` span R^p."""
    D = as_delta_matrix(delta)
    return matrix_rank(D) == D.shape[0]
