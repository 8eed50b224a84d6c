"""Numba kernel for the routing engine.

One compiled function drives a whole route call: per move it builds an MCTS
tree in flat arrays, descending with do/undo journals over a single board,
and runs guided-DFS or random rollouts.  The rollout CNN state (conv
pre-activations, pooled maxima, first dense pre-activations) is maintained
incrementally: each board change touches a few cells, so only the affected
5x5 conv windows, their pool cells and the corresponding dense rows are
refreshed, with value journals making every undo bit-exact.  Board
fingerprints are incremental zobrist keys; they back the within-rollout
exhausted-state set and the cross-rollout memo of deterministic DFS rewards.

Float discipline: tree statistics and rewards in float64 (identical
expression order to the reference implementation, with a shared log table),
CNN in float32.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ST_HEAD = 0
ST_CUR = 1
ST_FREE = 2
ST_OCC = 3
ST_JD = 4
ST_BEX = 5

CH_HEAD = 0
CH_BLOCKED = 1
CH_OWN = 2
CH_OTHER = 3

EXH_BITS = 16
MEMO_BITS = 22
MEMO_PROBES = 16

SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
SM_C1 = np.uint64(0xBF58476D1CE4E5B9)
SM_C2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def run_route(w, h, k, nbr, obst, pin_net, pins, start_choice,
              iterations, cp, uct_max, rollout_dfs, budget, use_memo,
              logtbl, sm_state, use_cnn,
              convw_t, convb, fc1w, fc1b, fc2w, fc2b, net_h, net_w,
              zob_occ, zob_head, zob_net, route_cells, net_off):
    n = w * h
    nf = convb.shape[0]
    h1 = fc1b.shape[0]
    ph = net_h // 2
    pw = net_w // 2

    occ = obst.copy()
    st = np.zeros(8, dtype=np.int64)
    key = np.zeros(1, dtype=np.uint64)
    epoch = np.zeros(1, dtype=np.int64)

    depth_cap = 2 * n + k + 8
    # Undo journals, indexed by journal depth.
    j_head = np.zeros(depth_cap, dtype=np.int64)
    j_cur = np.zeros(depth_cap, dtype=np.int64)
    j_free = np.zeros(depth_cap, dtype=np.int64)
    j_key = np.zeros(depth_cap, dtype=np.uint64)
    j_occn = np.zeros(depth_cap, dtype=np.int64)
    j_occ = np.zeros((depth_cap, 2), dtype=np.int64)
    cnn_cap = depth_cap if use_cnn else 1
    j_xn = np.zeros(cnn_cap, dtype=np.int64)
    j_xidx = np.zeros((cnn_cap, 6), dtype=np.int64)
    j_xold = np.zeros((cnn_cap, 6), dtype=np.float32)
    j_z0n = np.zeros(cnn_cap, dtype=np.int64)
    j_z0meta = np.zeros((cnn_cap, 6, 4), dtype=np.int64)
    j_z0buf = np.zeros((cnn_cap, 6 * 25 * nf), dtype=np.float32)
    j_hpn = np.zeros(cnn_cap, dtype=np.int64)
    j_hpidx = np.zeros((cnn_cap, 6 * 9 * nf), dtype=np.int64)
    j_hpold = np.zeros((cnn_cap, 6 * 9 * nf), dtype=np.float32)
    j_z1 = np.zeros((cnn_cap, h1), dtype=np.float32)

    # CNN state (flat layouts: x (net_h, net_w, 4), z0 (net_h, net_w, nf),
    # hp (ph, pw, nf) matching the flattening the dense layer was trained on).
    xbuf = np.zeros(net_h * net_w * 4 if use_cnn else 1, dtype=np.float32)
    z0 = np.zeros(net_h * net_w * nf if use_cnn else 1, dtype=np.float32)
    hp = np.zeros(ph * pw * nf if use_cnn else 1, dtype=np.float32)
    z1 = np.zeros(h1, dtype=np.float32)
    lg = np.zeros(4, dtype=np.float32)

    # DFS frames and path keys.
    f_acts = np.zeros((depth_cap, 4), dtype=np.int64)
    f_n = np.zeros(depth_cap, dtype=np.int64)
    f_i = np.zeros(depth_cap, dtype=np.int64)
    pk = np.zeros(depth_cap, dtype=np.uint64)

    # Exhausted-state table (per-rollout via epoch stamps).
    exh_size = 1 << EXH_BITS
    exh_mask = np.uint64(exh_size - 1)
    exh_keys = np.zeros(exh_size, dtype=np.uint64)
    exh_ep = np.full(exh_size, -1, dtype=np.int64)

    # Cross-rollout reward memo (route scope).
    memo_size = (1 << MEMO_BITS) if use_memo else 1
    memo_mask = np.uint64(memo_size - 1)
    mem_keys = np.zeros(memo_size, dtype=np.uint64)
    mem_val = np.zeros(memo_size, dtype=np.float64)

    # MCTS tree.
    tcap = iterations + 2
    t_untried = np.zeros(tcap, dtype=np.int64)
    t_nchild = np.zeros(tcap, dtype=np.int64)
    t_child = np.zeros((tcap, 4), dtype=np.int64)
    t_childact = np.zeros((tcap, 4), dtype=np.int64)
    t_visits = np.zeros(tcap, dtype=np.int64)
    t_rsum = np.zeros(tcap, dtype=np.float64)
    t_rmax = np.zeros(tcap, dtype=np.float64)
    t_outcome = np.zeros(tcap, dtype=np.int64)
    tn = np.zeros(1, dtype=np.int64)
    path_nodes = np.zeros(n + k + 8, dtype=np.int64)

    def sm_next():
        sm_state[0] = sm_state[0] + SM_GAMMA
        z = sm_state[0]
        z = (z ^ (z >> np.uint64(30))) * SM_C1
        z = (z ^ (z >> np.uint64(27))) * SM_C2
        return z ^ (z >> np.uint64(31))

    def sm_next_below(m):
        return np.int64(((sm_next() >> np.uint64(32)) * np.uint64(m)) >> np.uint64(32))

    def add_x(jd, cell, ch, dv):
        cy = cell // w
        cx = cell % w
        xi = (cy * net_w + cx) * 4 + ch
        i2 = j_xn[jd]
        j_xidx[jd, i2] = xi
        j_xold[jd, i2] = xbuf[xi]
        j_xn[jd] = i2 + 1
        xbuf[xi] += dv
        i0 = max(cy - 2, 0)
        i1 = min(cy + 2, net_h - 1)
        c0 = max(cx - 2, 0)
        c1 = min(cx + 2, net_w - 1)
        di = j_z0n[jd]
        j_z0meta[jd, di, 0] = i0
        j_z0meta[jd, di, 1] = i1
        j_z0meta[jd, di, 2] = c0
        j_z0meta[jd, di, 3] = c1
        pos = di * 25 * nf
        for i in range(i0, i1 + 1):
            u = cy - i + 2
            for jx in range(c0, c1 + 1):
                v = cx - jx + 2
                base = (i * net_w + jx) * nf
                for f in range(nf):
                    j_z0buf[jd, pos] = z0[base + f]
                    z0[base + f] += dv * convw_t[ch, u, v, f]
                    pos += 1
        j_z0n[jd] = di + 1
        # Refresh pooled maxima over the touched region; fold deltas into z1.
        pr0 = i0 // 2
        pr1 = min(i1 // 2, ph - 1)
        pc0 = c0 // 2
        pc1 = min(c1 // 2, pw - 1)
        for pi in range(pr0, pr1 + 1):
            for pj in range(pc0, pc1 + 1):
                b00 = ((2 * pi) * net_w + 2 * pj) * nf
                b10 = b00 + net_w * nf
                pbase = (pi * pw + pj) * nf
                for f in range(nf):
                    m = z0[b00 + f]
                    if z0[b00 + nf + f] > m:
                        m = z0[b00 + nf + f]
                    if z0[b10 + f] > m:
                        m = z0[b10 + f]
                    if z0[b10 + nf + f] > m:
                        m = z0[b10 + nf + f]
                    if m < 0.0:
                        m = 0.0
                    old = hp[pbase + f]
                    if m != old:
                        hn = j_hpn[jd]
                        j_hpidx[jd, hn] = pbase + f
                        j_hpold[jd, hn] = old
                        j_hpn[jd] = hn + 1
                        hp[pbase + f] = m
                        d2 = m - old
                        row = pbase + f
                        for q in range(h1):
                            z1[q] += d2 * fc1w[row, q]

    def apply_move(a):
        jd = st[ST_JD]
        j_head[jd] = st[ST_HEAD]
        j_cur[jd] = st[ST_CUR]
        j_free[jd] = st[ST_FREE]
        j_key[jd] = key[0]
        j_occn[jd] = 0
        if use_cnn:
            j_xn[jd] = 0
            j_z0n[jd] = 0
            j_hpn[jd] = 0
            for q in range(h1):
                j_z1[jd, q] = z1[q]
        h0 = st[ST_HEAD]
        t = nbr[h0, a]
        occ[t] = 1
        st[ST_OCC] += 1
        key[0] = key[0] ^ zob_occ[t]
        j_occ[jd, 0] = t
        j_occn[jd] = 1
        if use_cnn:
            add_x(jd, h0, CH_HEAD, np.float32(-1.0))
            add_x(jd, h0, CH_BLOCKED, np.float32(1.0))
        if t == st[ST_FREE]:
            cur = st[ST_CUR]
            if use_cnn:
                add_x(jd, t, CH_OWN, np.float32(-1.0))
                add_x(jd, t, CH_BLOCKED, np.float32(1.0))
            key[0] = key[0] ^ zob_net[cur] ^ zob_net[cur + 1]
            st[ST_CUR] = cur + 1
            if cur + 1 < k:
                s = pins[cur + 1, start_choice[cur + 1]]
                f2 = pins[cur + 1, 1 - start_choice[cur + 1]]
                occ[s] = 1
                st[ST_OCC] += 1
                key[0] = key[0] ^ zob_occ[s]
                j_occ[jd, 1] = s
                j_occn[jd] = 2
                if use_cnn:
                    add_x(jd, s, CH_OTHER, np.float32(-1.0))
                    add_x(jd, s, CH_HEAD, np.float32(1.0))
                    add_x(jd, f2, CH_OTHER, np.float32(-1.0))
                    add_x(jd, f2, CH_OWN, np.float32(1.0))
                key[0] = key[0] ^ zob_head[h0] ^ zob_head[s]
                st[ST_HEAD] = s
                st[ST_FREE] = f2
            else:
                key[0] = key[0] ^ zob_head[h0] ^ zob_head[n]
                st[ST_HEAD] = n
                st[ST_FREE] = -1
        else:
            if use_cnn:
                add_x(jd, t, CH_HEAD, np.float32(1.0))
            key[0] = key[0] ^ zob_head[h0] ^ zob_head[t]
            st[ST_HEAD] = t
        st[ST_JD] = jd + 1

    def undo_move():
        jd = st[ST_JD] - 1
        if use_cnn:
            for i2 in range(j_hpn[jd] - 1, -1, -1):
                hp[j_hpidx[jd, i2]] = j_hpold[jd, i2]
            for di in range(j_z0n[jd] - 1, -1, -1):
                i0 = j_z0meta[jd, di, 0]
                i1 = j_z0meta[jd, di, 1]
                c0 = j_z0meta[jd, di, 2]
                c1 = j_z0meta[jd, di, 3]
                pos = di * 25 * nf
                for i in range(i0, i1 + 1):
                    for jx in range(c0, c1 + 1):
                        base = (i * net_w + jx) * nf
                        for f in range(nf):
                            z0[base + f] = j_z0buf[jd, pos]
                            pos += 1
            for i2 in range(j_xn[jd] - 1, -1, -1):
                xbuf[j_xidx[jd, i2]] = j_xold[jd, i2]
            for q in range(h1):
                z1[q] = j_z1[jd, q]
        for i2 in range(j_occn[jd] - 1, -1, -1):
            occ[j_occ[jd, i2]] = 0
        st[ST_OCC] -= j_occn[jd]
        st[ST_HEAD] = j_head[jd]
        st[ST_CUR] = j_cur[jd]
        st[ST_FREE] = j_free[jd]
        key[0] = j_key[jd]
        st[ST_JD] = jd

    def undo_to(base):
        while st[ST_JD] > base:
            undo_move()

    def legal_mask():
        m = 0
        hd = st[ST_HEAD]
        cur1 = st[ST_CUR] + 1
        for a in range(4):
            t = nbr[hd, a]
            if t >= 0 and occ[t] == 0:
                pn = pin_net[t]
                if pn == 0 or pn == cur1:
                    m |= 1 << a
        return m

    def rebuild_cnn():
        for i2 in range(net_h * net_w * 4):
            xbuf[i2] = 0.0
        for i in range(net_h):
            for jx in range(net_w):
                if i >= h or jx >= w:
                    xbuf[(i * net_w + jx) * 4 + CH_BLOCKED] = 1.0
        for cell in range(n):
            if occ[cell] == 1 and cell != st[ST_HEAD]:
                cy = cell // w
                cx = cell % w
                xbuf[(cy * net_w + cx) * 4 + CH_BLOCKED] = 1.0
        if st[ST_HEAD] < n:
            hy = st[ST_HEAD] // w
            hx = st[ST_HEAD] % w
            xbuf[(hy * net_w + hx) * 4 + CH_HEAD] = 1.0
        for net_i in range(st[ST_CUR], k):
            ch = CH_OWN if net_i == st[ST_CUR] else CH_OTHER
            for s2 in range(2):
                pcell = pins[net_i, s2]
                if occ[pcell] == 0:
                    py = pcell // w
                    px = pcell % w
                    xbuf[(py * net_w + px) * 4 + ch] = 1.0
        for i2 in range(net_h * net_w):
            base = i2 * nf
            for f in range(nf):
                z0[base + f] = convb[f]
        for i in range(net_h):
            for jx in range(net_w):
                for c in range(4):
                    v = xbuf[(i * net_w + jx) * 4 + c]
                    if v != 0.0:
                        i0 = max(i - 2, 0)
                        i1 = min(i + 2, net_h - 1)
                        c0 = max(jx - 2, 0)
                        c1 = min(jx + 2, net_w - 1)
                        for ii in range(i0, i1 + 1):
                            u = i - ii + 2
                            for jj in range(c0, c1 + 1):
                                vv = jx - jj + 2
                                base = (ii * net_w + jj) * nf
                                for f in range(nf):
                                    z0[base + f] += v * convw_t[c, u, vv, f]
        for pi in range(ph):
            for pj in range(pw):
                b00 = ((2 * pi) * net_w + 2 * pj) * nf
                b10 = b00 + net_w * nf
                pbase = (pi * pw + pj) * nf
                for f in range(nf):
                    m = z0[b00 + f]
                    if z0[b00 + nf + f] > m:
                        m = z0[b00 + nf + f]
                    if z0[b10 + f] > m:
                        m = z0[b10 + f]
                    if z0[b10 + nf + f] > m:
                        m = z0[b10 + nf + f]
                    if m < 0.0:
                        m = 0.0
                    hp[pbase + f] = m
        for q in range(h1):
            z1[q] = fc1b[q]
        for flat in range(ph * pw * nf):
            v2 = hp[flat]
            if v2 != 0.0:
                for q in range(h1):
                    z1[q] += v2 * fc1w[flat, q]

    def order_actions(d):
        m = legal_mask()
        cnt = 0
        for a in range(4):
            if m & (1 << a):
                f_acts[d, cnt] = a
                cnt += 1
        if use_cnn and cnt > 1:
            for o in range(4):
                lg[o] = fc2b[o]
            for q in range(h1):
                v = z1[q]
                if v > 0.0:
                    for o in range(4):
                        lg[o] += v * fc2w[q, o]
            for i in range(1, cnt):
                a = f_acts[d, i]
                va = lg[a]
                j2 = i - 1
                while j2 >= 0 and lg[f_acts[d, j2]] < va:
                    f_acts[d, j2 + 1] = f_acts[d, j2]
                    j2 -= 1
                f_acts[d, j2 + 1] = a
        f_n[d] = cnt
        f_i[d] = 0
        return cnt

    def exh_find(kk):
        i = np.int64(kk & exh_mask)
        while exh_ep[i] == epoch[0]:
            if exh_keys[i] == kk:
                return True
            i = (i + 1) & np.int64(exh_mask)
        return False

    def exh_insert(kk):
        i = np.int64(kk & exh_mask)
        while exh_ep[i] == epoch[0]:
            if exh_keys[i] == kk:
                return
            i = (i + 1) & np.int64(exh_mask)
        exh_keys[i] = kk
        exh_ep[i] = epoch[0]

    def memo_find(kk):
        i = np.int64(kk & memo_mask)
        for _ in range(MEMO_PROBES):
            mk = mem_keys[i]
            if mk == kk:
                return mem_val[i]
            if mk == np.uint64(0):
                return -1.0
            i = (i + 1) & np.int64(memo_mask)
        return -1.0

    def memo_insert(kk, v):
        if kk == np.uint64(0):
            return
        i = np.int64(kk & memo_mask)
        for _ in range(MEMO_PROBES):
            mk = mem_keys[i]
            if mk == np.uint64(0) or mk == kk:
                mem_keys[i] = kk
                mem_val[i] = v
                return
            i = (i + 1) & np.int64(memo_mask)

    def dfs_rollout():
        base = st[ST_JD]
        epoch[0] += 1
        clean = True
        exp = 0
        d = 0
        order_actions(0)
        pk[0] = key[0]
        failure_r = 1.0 / n
        while True:
            if f_i[d] >= f_n[d]:
                exh_insert(key[0])
                clean = False
                if d == 0:
                    if use_memo:
                        memo_insert(pk[0], failure_r)
                    return failure_r
                undo_move()
                d -= 1
                continue
            a = f_acts[d, f_i[d]]
            f_i[d] += 1
            apply_move(a)
            ck = key[0]
            if exh_find(ck):
                clean = False
                undo_move()
                continue
            exp += 1
            if st[ST_CUR] == k:
                r = 1.0 / st[ST_OCC]
                if use_memo:
                    if clean:
                        lim = d + 1
                        if lim > 48:
                            lim = 48
                        for q in range(lim):
                            memo_insert(pk[q], r)
                    else:
                        memo_insert(pk[0], r)
                undo_to(base)
                return r
            m = legal_mask()
            if m == 0:
                exh_insert(ck)
                undo_move()
                if exp >= budget:
                    st[ST_BEX] += 1
                    if use_memo:
                        memo_insert(pk[0], failure_r)
                    undo_to(base)
                    return failure_r
                continue
            if exp >= budget:
                st[ST_BEX] += 1
                if use_memo:
                    memo_insert(pk[0], failure_r)
                undo_to(base)
                return failure_r
            d += 1
            order_actions(d)
            pk[d] = key[0]

    def random_roll():
        base = st[ST_JD]
        r = 0.0
        while True:
            if st[ST_CUR] == k:
                r = 1.0 / st[ST_OCC]
                break
            m = legal_mask()
            cnt = 0
            for a2 in range(4):
                if m & (1 << a2):
                    cnt += 1
            if cnt == 0:
                r = 1.0 / n
                break
            jsel = sm_next_below(cnt)
            a = 0
            c2 = jsel
            for a2 in range(4):
                if m & (1 << a2):
                    if c2 == 0:
                        a = a2
                        break
                    c2 -= 1
            apply_move(a)
        undo_to(base)
        return r

    def search_move():
        root_mask = legal_mask()
        nr = 0
        only = -1
        for a in range(4):
            if root_mask & (1 << a):
                nr += 1
                only = a
        if nr == 0:
            return -1, 0
        if nr == 1:
            # Forced move: searching cannot change the returned action.
            return only, 0
        tn[0] = 1
        t_untried[0] = root_mask
        t_nchild[0] = 0
        t_visits[0] = 0
        t_rsum[0] = 0.0
        t_rmax[0] = 0.0
        t_outcome[0] = 0
        move_base = st[ST_JD]
        for _it in range(iterations):
            node = 0
            pdepth = 0
            path_nodes[0] = 0
            while t_outcome[node] == 0 and t_untried[node] == 0:
                log_np = logtbl[t_visits[node]]
                bestu = -1.0e300
                best_ci = 0
                for ci in range(t_nchild[node]):
                    c = t_child[node, ci]
                    if uct_max:
                        exploit = t_rmax[c]
                    else:
                        exploit = t_rsum[c] / t_visits[c]
                    u = exploit + cp * np.sqrt(2.0 * log_np / t_visits[c])
                    if u > bestu:
                        bestu = u
                        best_ci = ci
                apply_move(t_childact[node, best_ci])
                node = t_child[node, best_ci]
                pdepth += 1
                path_nodes[pdepth] = node
            if t_outcome[node] == 0 and t_untried[node] != 0:
                um = t_untried[node]
                a = 0
                while (um & (1 << a)) == 0:
                    a += 1
                t_untried[node] = um & ~(1 << a)
                apply_move(a)
                mnode = tn[0]
                tn[0] += 1
                t_child[node, t_nchild[node]] = mnode
                t_childact[node, t_nchild[node]] = a
                t_nchild[node] += 1
                t_visits[mnode] = 0
                t_rsum[mnode] = 0.0
                t_rmax[mnode] = 0.0
                t_nchild[mnode] = 0
                if st[ST_CUR] == k:
                    t_outcome[mnode] = 1
                    t_untried[mnode] = 0
                else:
                    lm = legal_mask()
                    t_outcome[mnode] = 2 if lm == 0 else 0
                    t_untried[mnode] = lm
                node = mnode
                pdepth += 1
                path_nodes[pdepth] = node
            if t_outcome[node] == 1:
                r = 1.0 / st[ST_OCC]
            elif t_outcome[node] == 2:
                r = 1.0 / n
            else:
                if rollout_dfs:
                    r = -1.0
                    if use_memo:
                        r = memo_find(key[0])
                    if r < 0.0:
                        r = dfs_rollout()
                else:
                    r = random_roll()
            for q in range(pdepth + 1):
                nd = path_nodes[q]
                t_visits[nd] += 1
                t_rsum[nd] += r
                if r > t_rmax[nd]:
                    t_rmax[nd] = r
            undo_to(move_base)
        bstat = -1.0e300
        bvis = np.int64(-1)
        besta = -1
        for ci in range(t_nchild[0]):
            c = t_child[0, ci]
            if t_visits[c] == 0:
                continue
            if uct_max:
                stat = t_rmax[c]
            else:
                stat = t_rsum[c] / t_visits[c]
            if stat > bstat or (stat == bstat and t_visits[c] > bvis):
                bstat = stat
                bvis = t_visits[c]
                besta = t_childact[0, ci]
        return besta, iterations

    # Route driver: net 1 starts at its drawn pin.
    s0 = pins[0, start_choice[0]]
    occ[s0] = 1
    st[ST_HEAD] = s0
    st[ST_CUR] = 0
    st[ST_FREE] = pins[0, 1 - start_choice[0]]
    st[ST_OCC] = 1
    st[ST_JD] = 0
    key[0] = zob_occ[s0] ^ zob_head[s0] ^ zob_net[0]
    route_cells[0] = s0
    rlen = 1
    net_off[0] = 0
    if use_cnn:
        rebuild_cnn()
    total_iters = 0
    status = 0
    while True:
        if st[ST_CUR] == k:
            status = 1
            break
        a, it_used = search_move()
        total_iters += it_used
        if a < 0:
            status = 0
            break
        t = nbr[st[ST_HEAD], a]
        completing = t == st[ST_FREE]
        cur_before = st[ST_CUR]
        apply_move(a)
        st[ST_JD] = 0  # committed: drop the journal entry
        route_cells[rlen] = t
        rlen += 1
        if completing:
            net_off[cur_before + 1] = rlen
            if st[ST_CUR] < k:
                s = pins[st[ST_CUR], start_choice[st[ST_CUR]]]
                route_cells[rlen] = s
                rlen += 1
        if use_cnn:
            rebuild_cnn()
    return status, total_iters, st[ST_BEX], rlen, st[ST_CUR]
