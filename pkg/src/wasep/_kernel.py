"""JIT-compiled event loop for the speeded-up WASEP on a ring.

Families are translation-invariant statistics ``g_x``: kind 0 is a tabulated
local function of ``eta(x..x+w-1)``, kind 1 a tabulated function of the
particle count in ``x..x+L-1``.  Families of the same kind and size form a
group sharing one per-site state (window pattern or block count).  Each family
owns one integration slot per frame frequency ``omega`` it is used with; slot ``(f, k)`` holds, per site,
``int_0^s g_x(eta_u) exp(-1j*omega_k*u) du`` in a lazy form, so the cost of an
event does not depend on how many weights read the family.

Moves are sampled directly: right jumps occur at ``10`` bonds and left jumps at
``01`` bonds, whose counts coincide on a ring, so the total jump rate is
``n**2 * D`` with D the number of ``10`` bonds.
"""

import numpy as np
from numba import njit

LOCAL = 0
BLOCK = 1


@njit(cache=True, inline="always")
def _bond_kind(eta, x, N):
    y = x + 1
    if y == N:
        y = 0
    if eta[x] == 1 and eta[y] == 0:
        return 1
    if eta[x] == 0 and eta[y] == 1:
        return 2
    return 0


@njit(cache=True, inline="always")
def _add(lst, pos, cnt, x):
    pos[x] = cnt
    lst[cnt] = x
    return cnt + 1


@njit(cache=True, inline="always")
def _remove(lst, pos, cnt, x):
    i = pos[x]
    cnt -= 1
    last = lst[cnt]
    lst[i] = last
    pos[last] = i
    pos[x] = -1
    return cnt


@njit(cache=True)
def _init_state(eta, grp_kind, grp_size):
    N = eta.size
    G = grp_kind.size
    state = np.zeros((G, N), dtype=np.int64)
    for f in range(G):
        s = grp_size[f]
        if grp_kind[f] == LOCAL:
            for x in range(N):
                pat = 0
                for i in range(s):
                    y = (x + i) % N
                    pat |= np.int64(eta[y]) << i
                state[f, x] = pat
        else:
            c = 0
            for i in range(s):
                c += eta[i % N]
            for x in range(N):
                state[f, x] = c
                c -= eta[x]
                c += eta[(x + s) % N]
    return state


@njit(cache=True)
def _advance_phase(omegas, s0, s1, P):
    """``P[k] += int_{s0}^{s1} exp(-1j*omega_k*u) du``, stable for small ``omega*dt``."""
    dt = s1 - s0
    mid = 0.5 * (s0 + s1)
    for k in range(omegas.size):
        om = omegas[k]
        if om == 0.0:
            P[k] += dt
        else:
            h = 0.5 * om * dt
            if abs(h) < 1e-4:
                sc = 1.0 - h * h / 6.0
            else:
                sc = np.sin(h) / h
            ph = -om * mid
            P[k] += complex(np.cos(ph), np.sin(ph)) * (dt * sc)


@njit(cache=True)
def run_kernel(eta, n2, p, rng, checkpoints, grp_kind, grp_size, grp_fam_ptr, fam_table,
               fam_slot_ptr, slot_k, omegas, term_slot, term_w, flux_r, flux_l):
    N = eta.size
    G = grp_kind.size
    F = fam_table.shape[0]
    T = term_w.shape[0]
    C = checkpoints.size
    K = omegas.size
    S = slot_k.size

    # families sharing (kind, size) read one state array
    state = _init_state(eta, grp_kind, grp_size)
    fam_grp = np.zeros(F, dtype=np.int64)
    for gi in range(G):
        for f in range(grp_fam_ptr[gi], grp_fam_ptr[gi + 1]):
            fam_grp[f] = gi
    # lazy integral: int g_x dP = g_x(s) P(s) + I[slot, x]
    I = np.zeros((S, N), dtype=np.complex128)
    P = np.zeros(K, dtype=np.complex128)
    slot_fam = np.zeros(S, dtype=np.int64)
    for f in range(F):
        for sl in range(fam_slot_ptr[f], fam_slot_ptr[f + 1]):
            slot_fam[sl] = f

    l10 = np.empty(N, dtype=np.int64)
    p10 = np.full(N, -1, dtype=np.int64)
    l01 = np.empty(N, dtype=np.int64)
    p01 = np.full(N, -1, dtype=np.int64)
    c10 = 0
    c01 = 0
    for x in range(N):
        kd = _bond_kind(eta, x, N)
        if kd == 1:
            c10 = _add(l10, p10, c10, x)
        elif kd == 2:
            c01 = _add(l01, p01, c01, x)

    J_out = np.zeros((C, T), dtype=np.complex128)
    Z_out = np.zeros((C, T), dtype=np.complex128)

    s = 0.0
    c = 0
    n_events = 0
    while c < C:
        if c10 == 0:
            s_new = np.inf
        else:
            s_new = s + rng.standard_exponential() / (n2 * c10)
        while c < C and checkpoints[c] <= s_new:
            sc = checkpoints[c]
            _advance_phase(omegas, s, sc, P)
            s = sc
            for t in range(T):
                sl = term_slot[t]
                f = slot_fam[sl]
                k = slot_k[sl]
                om = omegas[k]
                ph = complex(np.cos(om * sc), -np.sin(om * sc))
                accJ = 0j
                accZ = 0j
                for x in range(N):
                    g = fam_table[f, state[fam_grp[f], x]]
                    accJ += term_w[t, x] * (g * P[k] + I[sl, x])
                    accZ += term_w[t, x] * g
                J_out[c, t] = accJ
                Z_out[c, t] = accZ * ph
            c += 1
        if c == C:
            break
        _advance_phase(omegas, s, s_new, P)
        s = s_new

        # one uniform picks the direction (prob p right) and the bond
        u = rng.random()
        if u < p:
            i = int(u / p * c10)
            if i >= c10:
                i = c10 - 1
            b = l10[i]
            right = True
        else:
            i = int((u - p) / (1.0 - p) * c01)
            if i >= c01:
                i = c01 - 1
            b = l01[i]
            right = False
        b1 = b + 1
        if b1 == N:
            b1 = 0

        for gi in range(G):
            size = grp_size[gi]
            f0 = grp_fam_ptr[gi]
            f1 = grp_fam_ptr[gi + 1]
            if grp_kind[gi] == LOCAL:
                for xi in range(b - size + 1, b + 2):
                    ob = b - xi
                    mask = 0
                    if 0 <= ob < size:
                        mask |= 1 << ob
                    if 0 <= ob + 1 < size:
                        mask |= 1 << (ob + 1)
                    x = xi
                    if x < 0:
                        x += N
                    elif x >= N:
                        x -= N
                    old = state[gi, x]
                    new = old ^ mask
                    state[gi, x] = new
                    for f in range(f0, f1):
                        dg = fam_table[f, new] - fam_table[f, old]
                        if dg != 0.0:
                            for sl in range(fam_slot_ptr[f], fam_slot_ptr[f + 1]):
                                I[sl, x] -= dg * P[slot_k[sl]]
            else:
                if size >= N:
                    continue
                x1 = b - size + 1
                if x1 < 0:
                    x1 += N
                d1 = -1 if right else 1
                for j in range(2):
                    x = x1 if j == 0 else b1
                    delta = d1 if j == 0 else -d1
                    old = state[gi, x]
                    new = old + delta
                    state[gi, x] = new
                    for f in range(f0, f1):
                        dg = fam_table[f, new] - fam_table[f, old]
                        if dg != 0.0:
                            for sl in range(fam_slot_ptr[f], fam_slot_ptr[f + 1]):
                                I[sl, x] -= dg * P[slot_k[sl]]

        # bond b flips between 10 and 01; bonds b-1 and b+1 change type
        # according to the occupation just outside the swapped pair
        bl = b - 1 if b > 0 else N - 1
        b2 = b1 + 1
        if b2 == N:
            b2 = 0
        el = eta[bl]
        er = eta[b2]
        if right:
            c10 = _remove(l10, p10, c10, b)
            c01 = _add(l01, p01, c01, b)
            if N == 2:
                c01 = _remove(l01, p01, c01, b1)
                c10 = _add(l10, p10, c10, b1)
            else:
                if el == 1:
                    c10 = _add(l10, p10, c10, bl)
                else:
                    c01 = _remove(l01, p01, c01, bl)
                if er == 1:
                    c01 = _remove(l01, p01, c01, b1)
                else:
                    c10 = _add(l10, p10, c10, b1)
        else:
            c01 = _remove(l01, p01, c01, b)
            c10 = _add(l10, p10, c10, b)
            if N == 2:
                c10 = _remove(l10, p10, c10, b1)
                c01 = _add(l01, p01, c01, b1)
            else:
                if el == 1:
                    c10 = _remove(l10, p10, c10, bl)
                else:
                    c01 = _add(l01, p01, c01, bl)
                if er == 1:
                    c01 = _add(l01, p01, c01, b1)
                else:
                    c10 = _remove(l10, p10, c10, b1)
        tmp = eta[b]
        eta[b] = eta[b1]
        eta[b1] = tmp
        if right:
            flux_r[b] += 1
        else:
            flux_l[b] += 1
        n_events += 1
    return J_out, Z_out, n_events
