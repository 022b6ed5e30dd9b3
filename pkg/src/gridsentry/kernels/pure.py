"""Pure-Python implementations of the hot kernels.

Used when the compiled extension is unavailable; semantics are pinned to the
compiled module by the test suite.
"""

from collections import deque
from typing import List, Sequence, Tuple


def dos_window_flags(timestamps: Sequence[int], window_us: int, max_packets: int) -> List[bool]:
    """Flag every packet beyond the Nth inside any trailing window.

    Packet i is flagged iff more than ``max_packets`` timestamps (itself
    included) fall in the closed interval [t_i - window_us, t_i].
    Timestamps must be non-decreasing.
    """
    flags = []
    live: deque = deque()
    for t in timestamps:
        floor = t - window_us
        while live and live[0] < floor:
            live.popleft()
        live.append(t)
        flags.append(len(live) > max_packets)
    return flags


def cyclic_successor_pairs(modulus: int) -> List[Tuple[int, int]]:
    """All ordered pairs (a, b) accepted by the cyclic +1 successor rule."""
    accepted = []
    for a in range(modulus):
        for b in range(modulus):
            if b == a + 1 or (a == modulus - 1 and b == 0):
                accepted.append((a, b))
    return accepted


def count_cyclic_successors(modulus: int) -> int:
    """Exhaustively count accepted pairs over the full modulus x modulus grid."""
    count = 0
    for a in range(modulus):
        for b in range(modulus):
            if b == a + 1 or (a == modulus - 1 and b == 0):
                count += 1
    return count
