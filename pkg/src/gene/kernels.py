"""Compiled query kernels over a flattened physical index.

The index is laid out in a handful of flat arrays (see ``FlatIndex``) and the
kernels receive them unpacked, which keeps per-call overhead at a few
nanoseconds. Every node has one row in ``meta``/``metaf``:

* leaves with an ordered layout own ``cnt`` entries of ``keys``/``vals``
  starting at ``off``;
* pivot nodes own their pivots in ``keys``;
* tree layouts additionally own ``cnt`` 4-word records in ``tnodes``
  (key, left+1, right+1, unused);
* hash leaves own ``2**hbits`` 4-word buckets in ``htab``
  (key, payload, chain length, overflow offset) plus overflow pairs in ``hovf``.

All kernels count node visits, key comparisons and hash probes so the same
code path serves both wall-clock measurement and the deterministic cost model.
"""

from __future__ import annotations

from typing import NamedTuple

import numba as nb
import numpy as np

# node kinds
LEAF = 0
PIVOTS = 1
LINEAR = 2
BIT_SUFFIX = 3
BIT_PREFIX = 4

# layouts / searches; mirror layouts.DataLayout and layouts.SearchMethod
SORTED_COL = 0
HASH = 1
TREE = 2
SCAN = 0
BINS = 1
INTS = 2
EXPS = 3
HASHS = 4
LINREGS = 5

# meta columns
M_KIND = 0
M_LAYOUT = 1
M_SEARCH = 2
M_OFF = 3
M_CNT = 4
M_COFF = 5
M_CCNT = 6
M_DOFF = 7
M_DCNT = 8
M_TOFF = 9
M_TROOT = 10
M_HOFF = 11
M_HBITS = 12
M_OVF = 13
M_LRLO = 14
M_LRHI = 15
M_SHIFT = 16
M_MONO = 17
META_COLS = 18

# metaf columns
F_LR_SLOPE = 0
F_LR_ICPT = 1
F_SLOPE = 2
F_ICPT = 3
METAF_COLS = 4

# query kinds
Q_POINT = 0
Q_RANGE = 1

# range execution modes
RANGE_FULL = 0
RANGE_LOWER_BOUND = 1

# stats slots
ST_VISITS = 0
ST_CMPS = 1
ST_PROBES = 2

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)
U1 = np.uint64(1)

# Hot kernels run without the runtime's reference counting: they never allocate,
# and skipping refcount traffic on array arguments removes ~200 ns per call.
hot = nb.njit(cache=True, _nrt=False)


class FlatIndex(NamedTuple):
    meta: np.ndarray  # int64[n, META_COLS]
    metaf: np.ndarray  # float64[n, METAF_COLS]
    fmask: np.ndarray  # uint64[n] bit routing mask
    keys: np.ndarray  # uint64[K]
    vals: np.ndarray  # int64[K]
    tnodes: np.ndarray  # uint64[4T]
    aux: np.ndarray  # int64[C] child slots and distinct-children lists
    htab: np.ndarray  # uint64[4B]
    hovf: np.ndarray  # uint64[2V]


# ---------------------------------------------------------------------------
# intra-node searches over keys[off:off+cnt]; all return (position, comparisons)
# ---------------------------------------------------------------------------


@hot
def scan_lb(keys, off, cnt, q):
    i = 0
    while i < cnt and keys[off + i] < q:
        i += 1
    return i, i + 1


@hot
def bins_lb_range(keys, off, lo, hi, q):
    c = 0
    while lo < hi:
        mid = (lo + hi) >> 1
        c += 1
        if keys[off + mid] < q:
            lo = mid + 1
        else:
            hi = mid
    return lo, c


@hot
def bins_lb(keys, off, cnt, q):
    return bins_lb_range(keys, off, 0, cnt, q)


@hot
def ints_lb(keys, off, cnt, q):
    if cnt == 0:
        return 0, 0
    if keys[off] >= q:
        return 0, 1
    hi = cnt - 1
    if keys[off + hi] < q:
        return cnt, 2
    lo = 0
    c = 2
    # invariant: keys[lo] < q <= keys[hi]
    while hi - lo > 1:
        kl = keys[off + lo]
        kh = keys[off + hi]
        if kh == kl:
            # zero-slope segment: interpolation is undefined, scan it
            i = lo + 1
            while i < hi and keys[off + i] < q:
                i += 1
                c += 1
            return i, c
        frac = np.float64(q - kl) / np.float64(kh - kl)
        pred = lo + np.int64(frac * np.float64(hi - lo))
        if pred <= lo:
            pred = lo + 1
        elif pred >= hi:
            pred = hi - 1
        c += 1
        kp = keys[off + pred]
        if kp == q:
            return pred, c
        if kp < q:
            lo = pred
        else:
            hi = pred
    return hi, c


@hot
def exps_lb(keys, off, cnt, q):
    if cnt == 0:
        return 0, 0
    if keys[off] >= q:
        return 0, 1
    c = 1
    b = 1
    while b < cnt and keys[off + b] < q:
        b *= 2
        c += 1
    lo = (b >> 1) + 1
    hi = b if b < cnt else cnt
    pos, c2 = bins_lb_range(keys, off, lo, hi, q)
    return pos, c + c2


@hot
def linreg_predict(slope, icpt, cnt, q):
    pf = slope * np.float64(q) + icpt + 0.5
    if not pf > 0.0:
        return 0
    if pf >= np.float64(cnt):
        return cnt
    return np.int64(pf)


@hot
def linreg_lb(keys, off, cnt, q, slope, icpt, elo, ehi):
    if cnt == 0:
        return 0, 0
    p = linreg_predict(slope, icpt, cnt, q)
    a = p - elo
    b = p + ehi + 1
    if a < 0:
        a = 0
    if b > cnt:
        b = cnt
    c = 0
    if a > 0:
        c += 1
        if keys[off + a - 1] >= q:
            # probe lies before the error window (not a stored key): bisect the prefix
            pos, c2 = bins_lb_range(keys, off, 0, a - 1, q)
            return pos, c + c2
    if b < cnt:
        c += 1
        if keys[off + b] < q:
            pos, c2 = bins_lb_range(keys, off, b + 1, cnt, q)
            return pos, c + c2
    i = a
    while i < b and keys[off + i] < q:
        i += 1
        c += 1
    return i, c + 1


@hot
def fit_linreg(keys):
    """Least-squares line position ~ key, plus error bounds covering every stored key."""
    n = keys.shape[0]
    if n <= 1:
        return 0.0, 0.0, 0, 0
    mx = 0.0
    for i in range(n):
        mx += np.float64(keys[i])
    mx /= n
    my = (n - 1) / 2.0
    sxy = 0.0
    sxx = 0.0
    for i in range(n):
        dx = np.float64(keys[i]) - mx
        sxy += dx * (i - my)
        sxx += dx * dx
    slope = sxy / sxx if sxx > 0.0 else 0.0
    icpt = my - slope * mx
    lo = 0
    hi = 0
    for i in range(n):
        p = linreg_predict(slope, icpt, n, keys[i])
        if p - i > lo:
            lo = p - i
        if i - p > hi:
            hi = i - p
    return slope, icpt, lo, hi


# ---------------------------------------------------------------------------
# tree layout: balanced BST records (key, left+1, right+1, pad); record i is the i-th key
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def build_tree(keys):
    cnt = keys.shape[0]
    t = np.zeros(4 * cnt, dtype=np.uint64)
    if cnt == 0:
        return t, -1
    st_lo = np.empty(cnt + 1, dtype=np.int64)
    st_hi = np.empty(cnt + 1, dtype=np.int64)
    st_par = np.empty(cnt + 1, dtype=np.int64)
    st_side = np.empty(cnt + 1, dtype=np.int64)
    st_lo[0] = 0
    st_hi[0] = cnt
    st_par[0] = -1
    st_side[0] = 0
    sp = 1
    root = -1
    for i in range(cnt):
        t[4 * i] = keys[i]
    while sp > 0:
        sp -= 1
        lo = st_lo[sp]
        hi = st_hi[sp]
        par = st_par[sp]
        side = st_side[sp]
        if lo >= hi:
            continue
        mid = (lo + hi) >> 1
        if par < 0:
            root = mid
        else:
            t[4 * par + 1 + side] = np.uint64(mid + 1)
        st_lo[sp] = lo
        st_hi[sp] = mid
        st_par[sp] = mid
        st_side[sp] = 0
        sp += 1
        st_lo[sp] = mid + 1
        st_hi[sp] = hi
        st_par[sp] = mid
        st_side[sp] = 1
        sp += 1
    return t, root


@hot
def tree_lb(tnodes, toff, root, cnt, q):
    node = root
    best = cnt
    c = 0
    while node >= 0:
        c += 1
        base = 4 * (toff + node)
        if tnodes[base] >= q:
            best = node
            node = np.int64(tnodes[base + 1]) - 1
        else:
            node = np.int64(tnodes[base + 2]) - 1
    return best, c


# ---------------------------------------------------------------------------
# hash layout: chained hashing, power-of-two buckets, first chain entry inline
# ---------------------------------------------------------------------------


@hot
def hash_slot(q, bits):
    return np.int64((q * GOLDEN) >> np.uint64(64 - bits))


@hot
def hash_find(htab, hovf, hoff, ovf, bits, q):
    """(payload or -1, comparisons)."""
    b = 4 * (hoff + hash_slot(q, bits))
    n = np.int64(htab[b + 2])
    if n == 0:
        return np.int64(-1), 0
    if htab[b] == q:
        return np.int64(htab[b + 1]), 1
    o = 2 * (ovf + np.int64(htab[b + 3]))
    for j in range(n - 1):
        if hovf[o + 2 * j] == q:
            return np.int64(hovf[o + 2 * j + 1]), j + 2
    return np.int64(-1), n


def build_hash(keys: np.ndarray, vals: np.ndarray):
    """Chained hash table as (bucket words, overflow pairs, bits).

    The bucket count is the next power of two >= n (at least two), so the load
    factor never exceeds 1. Bucket b occupies ``table[4b:4b+4]`` =
    (first key, first payload, chain length, offset of the rest in ``overflow``).
    """
    keys = np.asarray(keys, dtype=np.uint64)
    vals = np.asarray(vals, dtype=np.int64)
    n = len(keys)
    bits = max(1, int(n - 1).bit_length()) if n > 1 else 1
    nbk = 1 << bits
    with np.errstate(over="ignore"):
        slots = ((keys * GOLDEN) >> np.uint64(64 - bits)).astype(np.int64)
    order = np.argsort(slots, kind="stable")
    s_sorted = slots[order]
    counts = np.bincount(slots, minlength=nbk)
    starts = np.zeros(nbk + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    rank = np.arange(n, dtype=np.int64) - starts[s_sorted]
    first = order[rank == 0]
    rest = order[rank > 0]
    table = np.zeros((nbk, 4), dtype=np.uint64)
    fb = slots[first]
    table[fb, 0] = keys[first]
    table[fb, 1] = vals[first].astype(np.uint64)
    table[:, 2] = counts.astype(np.uint64)
    # overflow entries of bucket b start after all overflow entries of lower buckets
    nonempty_before = np.concatenate(([0], np.cumsum(counts > 0)[:-1]))
    table[:, 3] = (starts[:-1] - nonempty_before).astype(np.uint64)
    overflow = np.zeros((len(rest), 2), dtype=np.uint64)
    overflow[:, 0] = keys[rest]
    overflow[:, 1] = vals[rest].astype(np.uint64)
    return table.reshape(-1), overflow.reshape(-1), bits


# ---------------------------------------------------------------------------
# per-node dispatch
# ---------------------------------------------------------------------------


@hot
def node_lower_bound(meta, metaf, keys, tnodes, node, q):
    """Lower bound of ``q`` inside an ordered node region (leaf data or pivots)."""
    off = meta[node, M_OFF]
    cnt = meta[node, M_CNT]
    if meta[node, M_LAYOUT] == TREE:
        return tree_lb(tnodes, meta[node, M_TOFF], meta[node, M_TROOT], cnt, q)
    s = meta[node, M_SEARCH]
    if s == BINS:
        return bins_lb(keys, off, cnt, q)
    if s == INTS:
        return ints_lb(keys, off, cnt, q)
    if s == EXPS:
        return exps_lb(keys, off, cnt, q)
    if s == LINREGS:
        return linreg_lb(
            keys, off, cnt, q, metaf[node, F_LR_SLOPE], metaf[node, F_LR_ICPT], meta[node, M_LRLO], meta[node, M_LRHI]
        )
    return scan_lb(keys, off, cnt, q)


@hot
def route_slot(meta, metaf, fmask, keys, tnodes, node, key):
    """Child slot for ``key`` and the comparisons spent finding it."""
    k = meta[node, M_KIND]
    if k == PIVOTS:
        # number of pivots <= key
        if key == U64_MAX:
            return meta[node, M_CNT], 0
        return node_lower_bound(meta, metaf, keys, tnodes, node, key + U1)
    if k == LINEAR:
        nbins = meta[node, M_CCNT]
        v = metaf[node, F_SLOPE] * np.float64(key) + metaf[node, F_ICPT]
        if not v > 0.0:
            return 0, 1
        if v >= np.float64(nbins):
            return nbins - 1, 1
        s = np.int64(v)
        if s > nbins - 1:
            s = nbins - 1
        return s, 1
    return np.int64((key >> np.uint64(meta[node, M_SHIFT])) & fmask[node]), 1


@hot
def ordered_routing(meta, metaf, fmask, node):
    k = meta[node, M_KIND]
    if k == PIVOTS:
        return True
    if k == LINEAR:
        return metaf[node, F_SLOPE] >= 0.0
    if k == BIT_PREFIX:
        return fmask[node] == (U64_MAX >> np.uint64(meta[node, M_SHIFT]))
    return False


@hot
def point_query(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, key, st):
    node = 0
    while True:
        st[ST_VISITS] += 1
        if meta[node, M_KIND] == LEAF:
            if meta[node, M_LAYOUT] == HASH:
                v, c = hash_find(htab, hovf, meta[node, M_HOFF], meta[node, M_OVF], meta[node, M_HBITS], key)
                st[ST_PROBES] += 1
                st[ST_CMPS] += c
                return v
            pos, c = node_lower_bound(meta, metaf, keys, tnodes, node, key)
            st[ST_CMPS] += c
            off = meta[node, M_OFF]
            if pos < meta[node, M_CNT] and keys[off + pos] == key:
                return vals[off + pos]
            return np.int64(-1)
        slot, c = route_slot(meta, metaf, fmask, keys, tnodes, node, key)
        st[ST_CMPS] += c
        if slot < 0 or slot >= meta[node, M_CCNT]:
            return np.int64(-1)
        ch = aux[meta[node, M_COFF] + slot]
        if ch < 0:
            return np.int64(-1)
        node = ch


@hot
def slot_span(meta, metaf, fmask, keys, tnodes, node, l, h, st):
    """Inclusive child-slot span whose key ranges meet [l, h]; ok=False means follow every child."""
    if not ordered_routing(meta, metaf, fmask, node):
        return 0, -1, False
    s0, c = route_slot(meta, metaf, fmask, keys, tnodes, node, l)
    st[ST_CMPS] += c
    if meta[node, M_KIND] == PIVOTS:
        s1 = s0
        off = meta[node, M_OFF]
        npiv = meta[node, M_CNT]
        while s1 < npiv and keys[off + s1] <= h:
            s1 += 1
            st[ST_CMPS] += 1
        return s0, s1, True
    s1, c1 = route_slot(meta, metaf, fmask, keys, tnodes, node, h)
    st[ST_CMPS] += c1
    return s0, s1, True


@hot
def push_children(meta, metaf, fmask, keys, tnodes, aux, node, l, h, stack, sp, st):
    s0, s1, ordered = slot_span(meta, metaf, fmask, keys, tnodes, node, l, h, st)
    if ordered:
        coff = meta[node, M_COFF]
        last = -2
        for s in range(s1, s0 - 1, -1):
            ch = aux[coff + s]
            if ch >= 0 and ch != last:
                stack[sp] = ch
                sp += 1
                last = ch
    else:
        doff = meta[node, M_DOFF]
        for j in range(meta[node, M_DCNT] - 1, -1, -1):
            stack[sp] = aux[doff + j]
            sp += 1
    return sp


@hot
def range_full(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, l, h, stack, st):
    """Count and payload sum of all tuples with l <= key <= h."""
    count = 0
    total = np.int64(0)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        st[ST_VISITS] += 1
        if meta[node, M_KIND] == LEAF:
            if meta[node, M_LAYOUT] == HASH:
                # no order: every entry has to be inspected
                hb = 4 * meta[node, M_HOFF]
                for b in range(1 << meta[node, M_HBITS]):
                    n = np.int64(htab[hb + 4 * b + 2])
                    if n == 0:
                        continue
                    kk = htab[hb + 4 * b]
                    if kk >= l and kk <= h:
                        count += 1
                        total += np.int64(htab[hb + 4 * b + 1])
                    o = 2 * (meta[node, M_OVF] + np.int64(htab[hb + 4 * b + 3]))
                    for j in range(n - 1):
                        kk = hovf[o + 2 * j]
                        if kk >= l and kk <= h:
                            count += 1
                            total += np.int64(hovf[o + 2 * j + 1])
                st[ST_CMPS] += meta[node, M_CNT]
                st[ST_PROBES] += 1
            else:
                off = meta[node, M_OFF]
                cnt = meta[node, M_CNT]
                pos, c = node_lower_bound(meta, metaf, keys, tnodes, node, l)
                st[ST_CMPS] += c
                i = pos
                while i < cnt and keys[off + i] <= h:
                    count += 1
                    total += vals[off + i]
                    i += 1
                st[ST_CMPS] += i - pos + 1
            continue
        sp = push_children(meta, metaf, fmask, keys, tnodes, aux, node, l, h, stack, sp, st)
    return count, total


@hot
def range_count(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, l, h, stack, st):
    """Number of tuples with l <= key <= h.

    Same traversal as ``range_full``; ordered leaves count by searching both
    ends with their own search method instead of scanning the result.
    """
    count = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if meta[node, M_KIND] == LEAF:
            if meta[node, M_LAYOUT] == HASH:
                hb = 4 * meta[node, M_HOFF]
                for b in range(1 << meta[node, M_HBITS]):
                    n = np.int64(htab[hb + 4 * b + 2])
                    if n == 0:
                        continue
                    kk = htab[hb + 4 * b]
                    if kk >= l and kk <= h:
                        count += 1
                    o = 2 * (meta[node, M_OVF] + np.int64(htab[hb + 4 * b + 3]))
                    for j in range(n - 1):
                        kk = hovf[o + 2 * j]
                        if kk >= l and kk <= h:
                            count += 1
            else:
                a, c = node_lower_bound(meta, metaf, keys, tnodes, node, l)
                if h == U64_MAX:
                    b = meta[node, M_CNT]
                else:
                    b, c = node_lower_bound(meta, metaf, keys, tnodes, node, h + U1)
                if b > a:
                    count += b - a
            continue
        sp = push_children(meta, metaf, fmask, keys, tnodes, aux, node, l, h, stack, sp, st)
    return count


@hot
def leaf_lower_bound(meta, metaf, keys, vals, tnodes, htab, hovf, node, l, st):
    """(key, payload) of the smallest stored key >= l in a leaf; payload -1 if none."""
    if meta[node, M_LAYOUT] == HASH:
        best = U64_MAX
        val = np.int64(-1)
        hb = 4 * meta[node, M_HOFF]
        for b in range(1 << meta[node, M_HBITS]):
            n = np.int64(htab[hb + 4 * b + 2])
            if n == 0:
                continue
            kk = htab[hb + 4 * b]
            if kk >= l and (val < 0 or kk < best):
                best = kk
                val = np.int64(htab[hb + 4 * b + 1])
            o = 2 * (meta[node, M_OVF] + np.int64(htab[hb + 4 * b + 3]))
            for j in range(n - 1):
                kk = hovf[o + 2 * j]
                if kk >= l and (val < 0 or kk < best):
                    best = kk
                    val = np.int64(hovf[o + 2 * j + 1])
        st[ST_CMPS] += meta[node, M_CNT]
        st[ST_PROBES] += 1
        return best, val
    pos, c = node_lower_bound(meta, metaf, keys, tnodes, node, l)
    st[ST_CMPS] += c
    off = meta[node, M_OFF]
    if pos < meta[node, M_CNT]:
        return keys[off + pos], vals[off + pos]
    return U64_MAX, np.int64(-1)


@hot
def range_lower_bound(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, l, snode, sslot, st):
    """Payload of the first stored key >= l, or -1.

    Children are visited in key order and the walk stops at the first hit;
    indexes with non-order-preserving routing fall back to an exhaustive minimum.
    """
    monotone = meta[0, M_MONO] == 1
    snode[0] = 0
    sslot[0] = -1
    sp = 1
    best = U64_MAX
    bval = np.int64(-1)
    while sp > 0:
        sp -= 1
        node = snode[sp]
        slot = sslot[sp]
        if slot < 0:
            st[ST_VISITS] += 1
            if meta[node, M_KIND] == LEAF:
                kk, vv = leaf_lower_bound(meta, metaf, keys, vals, tnodes, htab, hovf, node, l, st)
                if vv >= 0 and (bval < 0 or kk < best):
                    best = kk
                    bval = vv
                    if monotone:
                        return bval
                continue
            s0, s1, ordered = slot_span(meta, metaf, fmask, keys, tnodes, node, l, U64_MAX, st)
            if not ordered:
                doff = meta[node, M_DOFF]
                for j in range(meta[node, M_DCNT] - 1, -1, -1):
                    snode[sp] = aux[doff + j]
                    sslot[sp] = -1
                    sp += 1
                continue
            slot = s0
        # continuation: descend into ``slot`` and remember the next sibling
        coff = meta[node, M_COFF]
        nslots = meta[node, M_CCNT]
        while slot < nslots and aux[coff + slot] < 0:
            slot += 1
        if slot >= nslots:
            continue
        snode[sp] = node
        sslot[sp] = slot + 1
        sp += 1
        snode[sp] = aux[coff + slot]
        sslot[sp] = -1
        sp += 1
    return bval


@hot
def run_workload(
    meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, qkind, qlo, qhi, range_mode, out_a, out_b, st, stack, snode, sslot
):
    """Execute a workload; point -> payload|-1, range -> (count, payload sum) or lower-bound payload.

    ``stack`` needs n_nodes + 1 slots, ``snode``/``sslot`` 2 * n_nodes + 2.
    """
    for i in range(qkind.shape[0]):
        if qkind[i] == Q_POINT:
            out_a[i] = point_query(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, qlo[i], st)
            out_b[i] = 0
        elif range_mode == RANGE_FULL:
            c, t = range_full(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, qlo[i], qhi[i], stack, st)
            out_a[i] = c
            out_b[i] = t
        else:
            out_a[i] = range_lower_bound(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, qlo[i], snode, sslot, st)
            out_b[i] = 0


@hot
def range_collect(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, l, h, out_k, out_v, stack, st):
    """Materialise all (key, payload) with l <= key <= h; returns the count written."""
    n = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if meta[node, M_KIND] == LEAF:
            if meta[node, M_LAYOUT] == HASH:
                hb = 4 * meta[node, M_HOFF]
                for b in range(1 << meta[node, M_HBITS]):
                    m = np.int64(htab[hb + 4 * b + 2])
                    if m == 0:
                        continue
                    kk = htab[hb + 4 * b]
                    if kk >= l and kk <= h:
                        out_k[n] = kk
                        out_v[n] = np.int64(htab[hb + 4 * b + 1])
                        n += 1
                    o = 2 * (meta[node, M_OVF] + np.int64(htab[hb + 4 * b + 3]))
                    for j in range(m - 1):
                        kk = hovf[o + 2 * j]
                        if kk >= l and kk <= h:
                            out_k[n] = kk
                            out_v[n] = np.int64(hovf[o + 2 * j + 1])
                            n += 1
            else:
                off = meta[node, M_OFF]
                cnt = meta[node, M_CNT]
                pos, c = node_lower_bound(meta, metaf, keys, tnodes, node, l)
                i = pos
                while i < cnt and keys[off + i] <= h:
                    out_k[n] = keys[off + i]
                    out_v[n] = vals[off + i]
                    n += 1
                    i += 1
            continue
        sp = push_children(meta, metaf, fmask, keys, tnodes, aux, node, l, h, stack, sp, st)
    return n


@hot
def verify_grid(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, grid, lo_rank, hi_rank, prefix, stack, st):
    """Exhaustive (l, h) check against rank arithmetic on the sorted dataset.

    ``lo_rank``/``hi_rank`` are the left/right insertion ranks of every grid
    value in the sorted dataset and ``prefix[i]`` is the payload sum of the
    first i sorted tuples. Every grid value is probed as a point query (payload
    checked) and every pair (l <= h) as a counting range query. Returns the
    first failing (i, j) or (-1, -1).
    """
    g = grid.shape[0]
    for i in range(g):
        a = lo_rank[i]
        pv = point_query(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, grid[i], st)
        if hi_rank[i] > a:
            if pv != prefix[a + 1] - prefix[a]:
                return i, i
        elif pv != -1:
            return i, i
        for j in range(i, g):
            c = range_count(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, grid[i], grid[j], stack, st)
            if c != hi_rank[j] - a:
                return i, j
    return -1, -1


@hot
def verify_pairs(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, lo, hi, a_rank, b_rank, prefix, stack, st):
    """Sampled variant of ``verify_grid`` over explicit (l, h) pairs; returns the first failing index or -1."""
    for i in range(lo.shape[0]):
        a = a_rank[i]
        b = b_rank[i]
        if b < a:
            b = a
        c, t = range_full(meta, metaf, fmask, keys, vals, tnodes, aux, htab, hovf, lo[i], hi[i], stack, st)
        if c != b - a or t != prefix[b] - prefix[a]:
            return i
    return -1
