"""Numba core of the cycle-level simulator.

Everything is flat arrays. Each router has 7 input ports x 2 virtual
networks (one VC per VN) with a FIFO of ``depth`` flits, and the matching
7 x 2 output VCs. A cycle is: injection, then switch allocation on a frozen
snapshot of buffer occupancies, then commit of all granted flit moves.
"""

import numpy as np
from numba import njit

from .selection import DRAW_CAP_FACTOR, adele_pick, cda_pick, latency_cost, smoothed_cost

LOCAL, EAST, WEST, NORTH, SOUTH, UP, DOWN = 0, 1, 2, 3, 4, 5, 6
N_PORTS = 7
N_VC = 14
POLICY_NEAREST, POLICY_RR, POLICY_ADELE, POLICY_CDA = 0, 1, 2, 3

# run status
OK = 0
ERR_ROUTE = 1
ERR_OWNERSHIP = 2


@njit(cache=True)
def _uniform(state):
    """splitmix64 step -> float in [0, 1)."""
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return float(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def simulate_kernel(coords, nbr, opposite, route_tab, elev_of_node, elev_xy, layer_size, X,
                    policy, nearest_tab, members, sizes, a, xi, threshold,
                    pk_src, pk_dst, pk_len, pk_cycle, node_start, node_pkts,
                    warmup, measure, drain, depth, seed, check):
    N = coords.shape[0]
    E = elev_xy.shape[0]
    P = pk_src.shape[0]
    end_measure = warmup + measure
    total_cycles = end_measure + drain

    buf_pkt = np.zeros((N, N_VC, depth), np.int64)
    buf_seq = np.zeros((N, N_VC, depth), np.int64)
    buf_hd = np.zeros((N, N_VC), np.int64)
    buf_n = np.zeros((N, N_VC), np.int64)
    ivc_out = np.full((N, N_VC), -1, np.int64)
    ivc_ovn = np.zeros((N, N_VC), np.int64)
    out_owner = np.full((N, N_VC), -1, np.int64)
    rr_out = np.zeros((N, N_PORTS), np.int64)

    inj_pkt = np.full(N, -1, np.int64)
    inj_seq = np.zeros(N, np.int64)
    node_ptr = node_start[:-1].copy()
    rr_ptr = np.zeros(N, np.int64)
    costs = np.zeros((N, E), np.float64)
    rng = np.zeros(1, np.uint64)
    rng[0] = np.uint64(seed)

    pkt_elev = np.full(P, -1, np.int64)
    pkt_start = np.full(P, -1, np.int64)
    pkt_t_head = np.full(P, -1, np.int64)
    pkt_deliver = np.full(P, -1, np.int64)
    pkt_next_seq = np.zeros(P, np.int64)
    pkt_h = np.zeros(P, np.int64)
    pkt_v = np.zeros(P, np.int64)
    pkt_minimal = np.zeros(P, np.bool_)

    router_flits = np.zeros(N, np.int64)
    elev_flits = np.zeros(E, np.int64)
    elev_packets = np.zeros(E, np.int64)
    cyc_injected = np.zeros(total_cycles, np.int64)
    cyc_delivered = np.zeros(total_cycles, np.int64)
    violations = np.zeros(4, np.int64)  # conservation, order, credit, ownership

    measured_left = 0
    for p in range(P):
        if pk_cycle[p] >= warmup and pk_cycle[p] < end_measure:
            measured_left += 1

    mv_node = np.empty(N * N_PORTS, np.int64)
    mv_ivc = np.empty(N * N_PORTS, np.int64)
    mv_out = np.empty(N * N_PORTS, np.int64)
    mv_ovn = np.empty(N * N_PORTS, np.int64)
    req = np.empty(N_VC, np.int64)
    in_used = np.zeros(N_PORTS, np.bool_)
    occupancy = np.zeros(N, np.int64)

    flits_in = 0
    flits_out = 0
    status = OK
    cycle = 0
    while cycle < total_cycles:
        if cycle >= end_measure and measured_left == 0:
            break

        # ---- injection
        for n in range(N):
            if inj_pkt[n] < 0:
                if node_ptr[n] < node_start[n + 1]:
                    pid = node_pkts[node_ptr[n]]
                    if pk_cycle[pid] <= cycle:
                        inj_pkt[n] = pid
                        inj_seq[n] = 0
                        pkt_start[pid] = cycle
                        d = pk_dst[pid]
                        if coords[d, 2] != coords[n, 2]:
                            if policy == POLICY_NEAREST:
                                e = nearest_tab[n]
                            elif policy == POLICY_RR:
                                e = members[n, rr_ptr[n]]
                                rr_ptr[n] = (rr_ptr[n] + 1) % sizes[n]
                            elif policy == POLICY_ADELE:
                                s = sizes[n]
                                mem = members[n, :s].copy()
                                cst = np.empty(s, np.float64)
                                dst_ = np.empty(s, np.int64)
                                for k in range(s):
                                    ek = mem[k]
                                    cst[k] = costs[n, ek]
                                    dst_[k] = (abs(coords[n, 0] - elev_xy[ek, 0]) + abs(coords[n, 1] - elev_xy[ek, 1])
                                               + abs(coords[d, 0] - elev_xy[ek, 0]) + abs(coords[d, 1] - elev_xy[ek, 1]))
                                u = np.empty(DRAW_CAP_FACTOR * s, np.float64)
                                for k in range(u.shape[0]):
                                    u[k] = _uniform(rng)
                                pos, newptr, used_min = adele_pick(mem, cst, dst_, rr_ptr[n], u, xi, threshold)
                                rr_ptr[n] = newptr
                                pkt_minimal[pid] = used_min
                                e = mem[pos]
                            else:
                                for r in range(N):
                                    tot = 0
                                    for v in range(N_VC):
                                        tot += buf_n[r, v]
                                    occupancy[r] = tot
                                base = coords[n, 2] * layer_size
                                e = cda_pick(coords[n, 0], coords[n, 1], base, X, elev_xy, occupancy)
                            pkt_elev[pid] = e
            pid = inj_pkt[n]
            if pid >= 0 and buf_n[n, 0] < depth:
                slot = (buf_hd[n, 0] + buf_n[n, 0]) % depth
                buf_pkt[n, 0, slot] = pid
                buf_seq[n, 0, slot] = inj_seq[n]
                buf_n[n, 0] += 1
                flits_in += 1
                cyc_injected[cycle] += 1
                inj_seq[n] += 1
                if inj_seq[n] == pk_len[pid]:
                    inj_pkt[n] = -1
                    node_ptr[n] += 1

        # ---- switch allocation on the frozen snapshot
        n_moves = 0
        for n in range(N):
            any_req = False
            for v in range(N_VC):
                req[v] = -1
                if buf_n[n, v] == 0:
                    continue
                slot = buf_hd[n, v]
                pid = buf_pkt[n, v, slot]
                seq = buf_seq[n, v, slot]
                if ivc_out[n, v] < 0:
                    if seq != 0:
                        status = ERR_OWNERSHIP
                        violations[3] += 1
                        continue
                    d = pk_dst[pid]
                    e = pkt_elev[pid]
                    if e < 0:
                        e = 0
                    port = route_tab[n, d, e]
                    if port != LOCAL and nbr[n, port] < 0:
                        status = ERR_ROUTE
                        continue
                    src = pk_src[pid]
                    ovn = 0
                    if coords[src, 2] > coords[d, 2] and (port == DOWN or coords[n, 2] < coords[src, 2]):
                        ovn = 1
                    ivc_out[n, v] = port
                    ivc_ovn[n, v] = ovn
                port = ivc_out[n, v]
                ovn = ivc_ovn[n, v]
                ovc = port * 2 + ovn
                if seq == 0:
                    if out_owner[n, ovc] >= 0:
                        continue
                elif out_owner[n, ovc] != v:
                    status = ERR_OWNERSHIP
                    violations[3] += 1
                    continue
                if port != LOCAL:
                    m = nbr[n, port]
                    if buf_n[m, opposite[port] * 2 + ovn] >= depth:
                        continue
                req[v] = port
                any_req = True
            if not any_req:
                continue
            for v in range(N_PORTS):
                in_used[v] = False
            for k in range(N_PORTS):
                o = (k + cycle) % N_PORTS
                start = rr_out[n, o]
                for j in range(1, N_VC + 1):
                    v = (start + j) % N_VC
                    if req[v] == o and not in_used[v // 2]:
                        in_used[v // 2] = True
                        rr_out[n, o] = v
                        ovc = o * 2 + ivc_ovn[n, v]
                        seq = buf_seq[n, v, buf_hd[n, v]]
                        pid = buf_pkt[n, v, buf_hd[n, v]]
                        if seq == 0:
                            out_owner[n, ovc] = v
                        if seq == pk_len[pid] - 1:
                            out_owner[n, ovc] = -1
                        mv_node[n_moves] = n
                        mv_ivc[n_moves] = v
                        mv_out[n_moves] = o
                        mv_ovn[n_moves] = ivc_ovn[n, v]
                        n_moves += 1
                        break
        if status != OK:
            break

        # ---- commit
        in_window = cycle >= warmup and cycle < end_measure
        for i in range(n_moves):
            n = mv_node[i]
            v = mv_ivc[i]
            o = mv_out[i]
            ovn = mv_ovn[i]
            slot = buf_hd[n, v]
            pid = buf_pkt[n, v, slot]
            seq = buf_seq[n, v, slot]
            buf_hd[n, v] = (slot + 1) % depth
            buf_n[n, v] -= 1
            is_tail = seq == pk_len[pid] - 1
            if is_tail:
                ivc_out[n, v] = -1
            if in_window:
                router_flits[n] += 1
                if o == UP or o == DOWN:
                    elev_flits[elev_of_node[n]] += 1
            if seq == 0 and o != LOCAL:
                if o == UP or o == DOWN:
                    pkt_v[pid] += 1
                else:
                    pkt_h[pid] += 1
            if n == pk_src[pid] and v == 0:
                if seq == 0:
                    pkt_t_head[pid] = cycle
                if is_tail and policy == POLICY_ADELE and pkt_elev[pid] >= 0:
                    T = latency_cost(pkt_t_head[pid], cycle + 1, pk_len[pid])
                    e = pkt_elev[pid]
                    costs[n, e] = smoothed_cost(costs[n, e], T, a)
            if o == LOCAL:
                flits_out += 1
                if pkt_next_seq[pid] != seq:
                    violations[1] += 1
                pkt_next_seq[pid] = seq + 1
                if is_tail:
                    pkt_deliver[pid] = cycle
                    cyc_delivered[cycle] += 1
                    if pk_cycle[pid] >= warmup and pk_cycle[pid] < end_measure:
                        measured_left -= 1
                        if pkt_elev[pid] >= 0 and coords[pk_src[pid], 2] != coords[pk_dst[pid], 2]:
                            elev_packets[pkt_elev[pid]] += 1
            else:
                m = nbr[n, o]
                w = opposite[o] * 2 + ovn
                if buf_n[m, w] >= depth:
                    violations[2] += 1
                slot = (buf_hd[m, w] + buf_n[m, w]) % depth
                buf_pkt[m, w, slot] = pid
                buf_seq[m, w, slot] = seq
                buf_n[m, w] += 1

        if check:
            held = 0
            for n in range(N):
                for v in range(N_VC):
                    held += buf_n[n, v]
                    if buf_n[n, v] > depth:
                        violations[2] += 1
            if held != flits_in - flits_out:
                violations[0] += 1
        cycle += 1

    return (status, cycle, pkt_elev, pkt_start, pkt_t_head, pkt_deliver, pkt_h, pkt_v, pkt_minimal,
            router_flits, elev_flits, elev_packets, cyc_injected, cyc_delivered, violations, costs)
