# cython: boundscheck=False, wraparound=False, language_level=3
"""Compiled hot kernels: sliding-window burst flags and the cyclic-successor
exhaustion. Must stay semantically identical to kernels/pure.py."""


def dos_window_flags(timestamps, long long window_us, int max_packets):
    cdef list ts = list(timestamps)
    cdef Py_ssize_t n = len(ts)
    cdef Py_ssize_t head = 0, i
    cdef long long floor, t
    flags = [False] * n
    for i in range(n):
        t = ts[i]
        floor = t - window_us
        while head < i and <long long> ts[head] < floor:
            head += 1
        if (i - head + 1) > max_packets:
            flags[i] = True
    return flags


def cyclic_successor_pairs(int modulus):
    cdef int a, b
    accepted = []
    for a in range(modulus):
        for b in range(modulus):
            if b == a + 1 or (a == modulus - 1 and b == 0):
                accepted.append((a, b))
    return accepted


def count_cyclic_successors(int modulus):
    cdef int a, b
    cdef long long count = 0
    for a in range(modulus):
        for b in range(modulus):
            if b == a + 1 or (a == modulus - 1 and b == 0):
                count += 1
    return count
