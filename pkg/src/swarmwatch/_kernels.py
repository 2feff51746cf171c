"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The backend is selected once at import from the ``SWARMWATCH_KERNELS``
environment variable: ``auto`` (default: numba when importable), ``numba``
or ``numpy``.  ``set_backend`` switches at runtime for tests and the
benchmark script.

Kernels:
  * range_lookup       — binary-search IPs against sorted [start, end] ranges
  * count_union / count_intersection / count_exact — membership-bitfield
    cardinalities over a (n_peers, n_words) uint64 matrix
  * family_masks       — per-peer selector-membership bitmask (Venn regions)
  * moving_average     — centered NaN-skipping moving average
"""

import os

import numpy as np

ENV_VAR = "SWARMWATCH_KERNELS"

_NUMBA_ERROR = None
try:
    import numba
except ImportError as exc:  # pragma: no cover - exercised via env flag tests
    numba = None
    _NUMBA_ERROR = exc


def _resolve(choice: str) -> str:
    choice = (choice or "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be auto, numba or numpy, not {choice!r}")
    if choice == "numpy":
        return "numpy"
    if numba is None:
        if choice == "numba":
            raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable: {_NUMBA_ERROR}")
        return "numpy"
    return "numba"


_backend = _resolve(os.environ.get(ENV_VAR, "auto"))


def backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Switch kernel backend at runtime; returns the previous backend."""
    global _backend
    previous = _backend
    _backend = _resolve(name)
    return previous


# ---------------------------------------------------------------------------
# numpy implementations

def _range_lookup_np(starts, ends, queries):
    idx = np.searchsorted(starts, queries, side="right").astype(np.int64) - 1
    clipped = np.maximum(idx, 0)
    hit = (idx >= 0) & (queries <= ends[clipped])
    return np.where(hit, idx, np.int64(-1))


def _count_union_np(memb, mask):
    return int(np.count_nonzero((memb & mask).any(axis=1)))


def _count_intersection_np(memb, mask):
    return int(np.count_nonzero(((memb & mask) == mask).all(axis=1)))


def _count_exact_np(memb, mask):
    return int(np.count_nonzero((memb == mask).all(axis=1)))


def _family_masks_np(memb, selector_masks):
    out = np.zeros(memb.shape[0], dtype=np.int64)
    for j in range(selector_masks.shape[0]):
        out |= (memb & selector_masks[j]).any(axis=1).astype(np.int64) << j
    return out


def _moving_average_np(values, window):
    kernel = np.ones(window, dtype=np.float64)
    finite = np.isfinite(values)
    sums = np.convolve(np.where(finite, values, 0.0), kernel, mode="same")
    counts = np.convolve(finite.astype(np.float64), kernel, mode="same")
    with np.errstate(invalid="ignore"):
        out = sums / counts
    out[counts == 0] = np.nan
    out[~finite] = np.nan
    return out


# ---------------------------------------------------------------------------
# numba implementations

if numba is not None:

    @numba.njit(cache=True)
    def _range_lookup_nb(starts, ends, queries):  # pragma: no cover - jitted
        out = np.empty(queries.shape[0], dtype=np.int64)
        n = starts.shape[0]
        for k in range(queries.shape[0]):
            q = queries[k]
            lo, hi = 0, n  # find rightmost start <= q
            while lo < hi:
                mid = (lo + hi) // 2
                if starts[mid] <= q:
                    lo = mid + 1
                else:
                    hi = mid
            idx = lo - 1
            if idx >= 0 and q <= ends[idx]:
                out[k] = idx
            else:
                out[k] = -1
        return out

    @numba.njit(cache=True)
    def _count_union_nb(memb, mask):  # pragma: no cover - jitted
        count = 0
        for i in range(memb.shape[0]):
            for w in range(memb.shape[1]):
                if memb[i, w] & mask[w]:
                    count += 1
                    break
        return count

    @numba.njit(cache=True)
    def _count_intersection_nb(memb, mask):  # pragma: no cover - jitted
        count = 0
        for i in range(memb.shape[0]):
            ok = True
            for w in range(memb.shape[1]):
                if memb[i, w] & mask[w] != mask[w]:
                    ok = False
                    break
            if ok:
                count += 1
        return count

    @numba.njit(cache=True)
    def _count_exact_nb(memb, mask):  # pragma: no cover - jitted
        count = 0
        for i in range(memb.shape[0]):
            ok = True
            for w in range(memb.shape[1]):
                if memb[i, w] != mask[w]:
                    ok = False
                    break
            if ok:
                count += 1
        return count

    @numba.njit(cache=True)
    def _family_masks_nb(memb, selector_masks):  # pragma: no cover - jitted
        out = np.zeros(memb.shape[0], dtype=np.int64)
        for i in range(memb.shape[0]):
            acc = 0
            for j in range(selector_masks.shape[0]):
                for w in range(memb.shape[1]):
                    if memb[i, w] & selector_masks[j, w]:
                        acc |= 1 << j
                        break
            out[i] = acc
        return out

    @numba.njit(cache=True)
    def _moving_average_nb(values, window):  # pragma: no cover - jitted
        n = values.shape[0]
        out = np.empty(n, dtype=np.float64)
        half = window // 2
        for i in range(n):
            if not np.isfinite(values[i]):
                out[i] = np.nan
                continue
            lo = max(0, i - half)
            hi = min(n, i + half + 1)
            total = 0.0
            count = 0
            for k in range(lo, hi):
                if np.isfinite(values[k]):
                    total += values[k]
                    count += 1
            out[i] = total / count if count else np.nan
        return out


def _impl(np_fn, nb_fn):
    return nb_fn if (_backend == "numba" and numba is not None) else np_fn


# ---------------------------------------------------------------------------
# public entry points

def range_lookup(starts, ends, queries):
    """Indices of the range containing each query address, -1 for misses.

    ``starts``/``ends`` are sorted, non-overlapping uint32 bounds
    (inclusive); ``queries`` is a uint32 array.
    """
    starts = np.ascontiguousarray(starts, dtype=np.uint32)
    ends = np.ascontiguousarray(ends, dtype=np.uint32)
    queries = np.ascontiguousarray(queries, dtype=np.uint32)
    if starts.size == 0 or queries.size == 0:
        return np.full(queries.shape[0], -1, dtype=np.int64)
    fn = _impl(_range_lookup_np, None if numba is None else _range_lookup_nb)
    return fn(starts, ends, queries)


def _prep_memb(memb, mask):
    memb = np.ascontiguousarray(memb, dtype=np.uint64)
    mask = np.ascontiguousarray(mask, dtype=np.uint64)
    if memb.ndim != 2 or mask.shape != (memb.shape[1],):
        raise ValueError("membership matrix and mask have mismatched shapes")
    return memb, mask


def count_union(memb, mask) -> int:
    """Peers with at least one of the selected membership bits."""
    memb, mask = _prep_memb(memb, mask)
    if memb.shape[0] == 0:
        return 0
    return int(_impl(_count_union_np, None if numba is None else _count_union_nb)(memb, mask))


def count_intersection(memb, mask) -> int:
    """Peers with every selected membership bit."""
    memb, mask = _prep_memb(memb, mask)
    if memb.shape[0] == 0:
        return 0
    return int(_impl(_count_intersection_np, None if numba is None else _count_intersection_nb)(memb, mask))


def count_exact(memb, mask) -> int:
    """Peers whose membership equals the selection exactly."""
    memb, mask = _prep_memb(memb, mask)
    if memb.shape[0] == 0:
        return 0
    return int(_impl(_count_exact_np, None if numba is None else _count_exact_nb)(memb, mask))


def family_masks(memb, selector_masks):
    """Per-peer bitmask of which selectors (rows of ``selector_masks``)
    the peer intersects; bit j set means the peer is in selector j."""
    memb = np.ascontiguousarray(memb, dtype=np.uint64)
    selector_masks = np.ascontiguousarray(selector_masks, dtype=np.uint64)
    if selector_masks.ndim != 2 or selector_masks.shape[1] != memb.shape[1]:
        raise ValueError("selector masks must be (n_selectors, n_words)")
    if memb.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    fn = _impl(_family_masks_np, None if numba is None else _family_masks_nb)
    return fn(memb, selector_masks)


def moving_average(values, window: int):
    """Centered moving average over ``window`` buckets (odd), skipping NaN
    gaps instead of zero-filling them.  NaN in, NaN out."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if values.size == 0:
        return values.copy()
    fn = _impl(_moving_average_np, None if numba is None else _moving_average_nb)
    return fn(values, window)
