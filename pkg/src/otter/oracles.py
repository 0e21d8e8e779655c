"""Independent reference implementations and the batch oracle check.

Each fast routine in the package has a slow, obviously-correct counterpart
here (or next to it, for the WKV double sums). ``run_oracle_checks``
compares them on random instances and reports one line per routine.
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from . import numerics as nm
from .engine import dtw_score
from .mixing import q_shift, quarter_bounds
from .wkv import wkv_bidirectional, wkv_bidirectional_oracle, wkv_causal, wkv_causal_oracle

WKV_TOL = 1e-5
DTW_TOL = 1e-9


def q_shift_loop(x: np.ndarray, strict: bool = True) -> np.ndarray:
    """Per-element loop: quarter 0 <- row above, 1 <- row below, 2 <- left, 3 <- right."""
    B, H, W, C = x.shape
    b = quarter_bounds(C, strict)
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    out = np.zeros_like(x)
    for n in range(B):
        for i in range(H):
            for j in range(W):
                for q, (di, dj) in enumerate(offsets):
                    si, sj = i + di, j + dj
                    if 0 <= si < H and 0 <= sj < W:
                        out[n, i, j, b[q] : b[q + 1]] = x[n, si, sj, b[q] : b[q + 1]]
    return out


def monotone_paths(n: int, m: int):
    """Every path from (0, 0) to (n-1, m-1) with steps (1,0), (0,1), (1,1)."""

    def walk(i, j, path):
        if (i, j) == (n - 1, m - 1):
            yield path
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                yield from walk(i + di, j + dj, path + [(i + di, j + dj)])

    yield from walk(0, 0, [(0, 0)])


def dtw_enumerate(a: np.ndarray, b: np.ndarray) -> float:
    """DTW by exhaustive path enumeration with 1 - cosine cost."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    best = np.inf
    for path in monotone_paths(len(a), len(b)):
        best = min(best, sum(1.0 - float(an[i] @ bn[j]) for i, j in path))
    return best


def random_wkv_instance(rng: np.random.Generator, max_T: int = 64, max_C: int = 16):
    T = int(rng.integers(1, max_T + 1))
    C = int(rng.integers(1, max_C + 1))
    k = rng.normal(0.0, 1.0, (T, C))
    v = rng.normal(0.0, 1.0, (T, C))
    w = rng.normal(0.0, 1.0, C)  # negative decays exercise the log-domain path
    u = rng.normal(0.0, 1.0, C)
    return k, v, w, u


def wkv_max_error(instances: int, seed: int, bidirectional: bool) -> tuple[float, float]:
    """Largest relative error of the streaming kernel over random instances, and the wall time."""
    rng = np.random.default_rng([seed, int(bidirectional)])
    fast = wkv_bidirectional if bidirectional else wkv_causal
    slow = wkv_bidirectional_oracle if bidirectional else wkv_causal_oracle
    worst = 0.0
    t0 = time.perf_counter()
    with nm.precision(np.float64):
        for _ in range(instances):
            k, v, w, u = random_wkv_instance(rng)
            y = fast(k, v, w, u).data
            worst = max(worst, float(nm.relative_error(y, slow(k, v, w, u)).max()))
    return worst, time.perf_counter() - t0


def run_oracle_checks(instances: int = 1000, seed: int = 0) -> list[tuple[str, bool, str]]:
    results = []
    for bidirectional, name in ((False, "wkv_causal"), (True, "wkv_bidirectional")):
        err, secs = wkv_max_error(instances, seed, bidirectional)
        results.append((name, err <= WKV_TOL, f"max_rel_err={err:.3e} instances={instances} seconds={secs:.2f}"))

    rng = np.random.default_rng([seed, 7])
    worst = 0.0
    for _ in range(50):
        x = rng.normal(size=(2, int(rng.integers(1, 6)), int(rng.integers(1, 6)), 4 * int(rng.integers(1, 4))))
        with nm.precision(np.float64):
            worst = max(worst, float(np.abs(q_shift(x).data - q_shift_loop(x)).max()))
    results.append(("q_shift", worst == 0.0, f"max_abs_err={worst:.1e}"))

    worst = 0.0
    for n, m in itertools.product((1, 2, 3), repeat=2):
        a, b = rng.normal(size=(n, 5)), rng.normal(size=(m, 5))
        worst = max(worst, abs(dtw_score(a, b) - dtw_enumerate(a, b)))
    results.append(("dtw", worst <= DTW_TOL, f"max_abs_err={worst:.1e}"))
    return results
