"""Grafting halves of two client histories to plant a known change point."""

from __future__ import annotations

import numpy as np

from .types import ClientSequence

__all__ = ["splice_pair"]


def _shift_to_precede(ts: np.ndarray, end_before: int, gap: int) -> np.ndarray:
    """Shift `ts` so its last element lands `gap` seconds before `end_before`."""
    return ts - ts[-1] + (end_before - gap)


def _median_gap(ts: np.ndarray) -> int:
    if len(ts) < 2:
        return int(DAY_FALLBACK)
    return int(max(1, np.median(np.diff(ts))))


DAY_FALLBACK = 86400


def splice_pair(
    a: ClientSequence, b: ClientSequence, mode: str
) -> tuple[ClientSequence, int]:
    """Splice halves of `a` and `b`; returns the graft and its boundary index.

    diverge: first half of `a` then the second half of `b`; distances to `a`
    should grow past the boundary. converge: first half of `b` then the
    second half of `a`; distances to `a` should shrink past the boundary.
    The half kept from `a` keeps its original timestamps; the grafted half
    is shifted by a constant so the result stays strictly monotone. The
    returned index is the position where the grafted half meets the kept
    half (floor midpoints; equal for equal-length inputs).
    """
    if mode not in ("diverge", "converge"):
        raise ValueError(f"mode must be 'diverge' or 'converge', got {mode!r}")
    if len(a) < 2 or len(b) < 2:
        raise ValueError("both sequences must have length >= 2")

    tau_a = len(a) // 2
    tau_b = len(b) // 2

    if mode == "diverge":
        head, head_end = a, tau_a
        tail, tail_start = b, tau_b
        tau = tau_a
        head_ts = a.timestamps[:tau_a]
        gap = _median_gap(head_ts)
        tail_ts = b.timestamps[tau_b:] - int(b.timestamps[tau_b]) + int(head_ts[-1]) + gap
    else:
        head, head_end = b, tau_b
        tail, tail_start = a, tau_a
        tau = tau_b
        tail_ts = a.timestamps[tau_a:]
        gap = _median_gap(tail_ts)
        head_ts = _shift_to_precede(b.timestamps[:tau_b], int(tail_ts[0]), gap)

    def _cat(field: str) -> np.ndarray:
        return np.concatenate(
            [getattr(head, field)[:head_end], getattr(tail, field)[tail_start:]]
        )

    mcc_idx = None
    if head.mcc_idx is not None and tail.mcc_idx is not None:
        mcc_idx = _cat("mcc_idx")

    spliced = ClientSequence(
        client_id=f"{a.client_id}+{b.client_id}:{mode}",
        timestamps=np.concatenate([head_ts, tail_ts]),
        mcc=_cat("mcc"),
        amounts=_cat("amounts"),
        mcc_idx=mcc_idx,
        change_point=tau,
    )
    if np.any(np.diff(spliced.timestamps) <= 0):
        raise ValueError("splice produced non-monotone timestamps")
    return spliced, tau
