"""Seed derivation and shared categorical sampling helpers.

All randomness in the toolkit flows from one master seed through named
sub-streams so that each component (split, training, sampling, ...) is
independently reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *names: str) -> int:
    """Derive a 64-bit sub-stream seed from a master seed and a stream name."""
    tag = ":".join([str(int(master_seed)), *names])
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def categorical_rows(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw one category per row of `prob_rows` using uniforms `u` in [0, 1).

    Row i selects the category whose cumulative-probability interval
    [cum_{k-1}, cum_k) contains u[i]. Categories with probability exactly 0
    have an empty interval and are never selected; the trailing clean-up
    guards the one spot where cumsum round-off could break that.
    """
    n, width = prob_rows.shape
    cum = np.cumsum(prob_rows, axis=1)
    idx = (cum <= u[:, None]).sum(axis=1)
    np.minimum(idx, width - 1, out=idx)
    rows = np.arange(n)
    bad = np.flatnonzero(prob_rows[rows, idx] <= 0.0)
    for r in bad:
        while idx[r] > 0 and prob_rows[r, idx[r]] <= 0.0:
            idx[r] -= 1
    return idx
