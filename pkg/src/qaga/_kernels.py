"""Compiled inner loops.

All kernels work on the CSR adjacency of a :class:`~qaga.ising.SpinGraph`
(``indptr``, ``nbr``, ``wts``) and on int8 spin vectors. Random numbers are
drawn by the caller and passed in, so every kernel is a pure function of
its arguments.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def local_field(spins, i, indptr, nbr, wts, h):
    f = h[i]
    for k in range(indptr[i], indptr[i + 1]):
        f += wts[k] * spins[nbr[k]]
    return f


@njit(cache=True)
def metropolis_sweeps(spins, energy, active, indptr, nbr, wts, h, betas, uniforms):
    """Run ``len(betas)`` typewriter sweeps in place.

    ``uniforms`` has shape (len(betas), len(active)). Returns the updated
    energy and the number of accepted flips.
    """
    flips = 0
    for s in range(betas.shape[0]):
        beta = betas[s]
        for a in range(active.shape[0]):
            i = active[a]
            de = -2.0 * spins[i] * local_field(spins, i, indptr, nbr, wts, h)
            if de <= 0.0 or uniforms[s, a] < np.exp(-beta * de):
                spins[i] = -spins[i]
                energy += de
                flips += 1
    return energy, flips


@njit(cache=True)
def _cluster_delta(spins, members, n_members, in_cluster, indptr, nbr, wts, h):
    # bonds inside the cluster keep their sign; only field terms and boundary bonds change
    de = 0.0
    for m in range(n_members):
        i = members[m]
        si = spins[i]
        de -= 2.0 * h[i] * si
        for k in range(indptr[i], indptr[i + 1]):
            j = nbr[k]
            if not in_cluster[j]:
                de -= 2.0 * wts[k] * si * spins[j]
    return de


@njit(cache=True)
def houdayer(a, b, active, indptr, nbr, wts, h, u):
    """Isoenergetic cluster move on ``a`` and ``b`` in place.

    Returns (cluster_size, delta_a, delta_b). A cluster size of zero means
    the states were identical and nothing changed.
    """
    n = a.shape[0]
    diff = np.empty(active.shape[0], np.int64)
    nd = 0
    for t in range(active.shape[0]):
        i = active[t]
        if a[i] != b[i]:
            diff[nd] = i
            nd += 1
    if nd == 0:
        return 0, 0.0, 0.0
    pick = int(u * nd)
    if pick >= nd:
        pick = nd - 1
    seed = diff[pick]

    in_cluster = np.zeros(n, np.bool_)
    members = np.empty(nd, np.int64)
    stack = np.empty(nd, np.int64)
    in_cluster[seed] = True
    members[0] = seed
    n_members = 1
    stack[0] = seed
    top = 1
    while top > 0:
        top -= 1
        i = stack[top]
        for k in range(indptr[i], indptr[i + 1]):
            j = nbr[k]
            if not in_cluster[j] and a[j] != b[j]:
                in_cluster[j] = True
                members[n_members] = j
                n_members += 1
                stack[top] = j
                top += 1

    da = _cluster_delta(a, members, n_members, in_cluster, indptr, nbr, wts, h)
    db = _cluster_delta(b, members, n_members, in_cluster, indptr, nbr, wts, h)
    for m in range(n_members):
        i = members[m]
        a[i] = -a[i]
        b[i] = -b[i]
    return n_members, da, db


@njit(cache=True)
def houdayer_pairs(pop, energies, pairs, uniforms, active, indptr, nbr, wts, h):
    """Apply one cluster move to copies of each parent pair.

    Returns children (2 rows per pair), their energies and per-pair cluster
    sizes. Rows belonging to no-op pairs are left as parent copies; callers
    drop them using the size array.
    """
    n_pairs = pairs.shape[0]
    n = pop.shape[1]
    children = np.empty((2 * n_pairs, n), np.int8)
    child_e = np.empty(2 * n_pairs)
    sizes = np.empty(n_pairs, np.int64)
    for p in range(n_pairs):
        i = pairs[p, 0]
        j = pairs[p, 1]
        ca = children[2 * p]
        cb = children[2 * p + 1]
        ca[:] = pop[i]
        cb[:] = pop[j]
        size, da, db = houdayer(ca, cb, active, indptr, nbr, wts, h, uniforms[p])
        sizes[p] = size
        child_e[2 * p] = energies[i] + da
        child_e[2 * p + 1] = energies[j] + db
    return children, child_e, sizes


@njit(cache=True)
def gray_enumerate(spins, order, n_enum, free, indptr, nbr, wts, h, tol):
    """Exhaustive minimisation by Gray code over ``order[:n_enum]``.

    ``free`` marks an independent set whose spins are minimised exactly for
    each enumerated configuration (each picks the sign opposing its local
    field; a zero field doubles the count). ``spins`` holds the start
    configuration of the enumerated variables and is restored on return.
    Returns (ground_energy, count, gray_index of one minimiser).
    """
    n = spins.shape[0]
    f_enum = np.zeros(n)
    f_free = np.zeros(n)
    e_enum = 0.0
    for i in range(n):
        if free[i]:
            f = h[i]
            for k in range(indptr[i], indptr[i + 1]):
                f += wts[k] * spins[nbr[k]]
            f_free[i] = f
        else:
            f = h[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = nbr[k]
                if not free[j]:
                    f += wts[k] * spins[j]
                    if j > i:
                        e_enum += wts[k] * spins[i] * spins[j]
            f_enum[i] = f
            e_enum += h[i] * spins[i]
    s_free = 0.0
    zeros = 0
    for i in range(n):
        if free[i]:
            s_free += abs(f_free[i])
            if abs(f_free[i]) <= tol:
                zeros += 1
    best = e_enum - s_free
    count = np.int64(1) << zeros
    best_k = 0
    total = np.int64(1) << n_enum
    for k in range(1, total):
        bit = 0
        kk = k
        while (kk & 1) == 0:
            kk >>= 1
            bit += 1
        v = order[bit]
        sv = spins[v]
        e_enum += -2.0 * sv * f_enum[v]
        sv = -sv
        spins[v] = sv
        for q in range(indptr[v], indptr[v + 1]):
            w = nbr[q]
            d = 2.0 * wts[q] * sv
            if free[w]:
                old = f_free[w]
                new = old + d
                f_free[w] = new
                s_free += abs(new) - abs(old)
                zeros += (abs(new) <= tol) - (abs(old) <= tol)
            else:
                f_enum[w] += d
        e = e_enum - s_free
        if e < best - tol:
            best = e
            count = np.int64(1) << zeros
            best_k = k
        elif e <= best + tol:
            count += np.int64(1) << zeros
    # the last gray code word has only the top bit set
    if n_enum > 0:
        v = order[n_enum - 1]
        spins[v] = -spins[v]
    return best, count, best_k
