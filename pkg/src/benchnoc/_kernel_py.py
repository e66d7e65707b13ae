"""Pure-Python flit-level kernel (fallback for the compiled ``_kernel``).

Both implementations follow the same event order and integer arithmetic, so
their outputs are bit-identical. See ``engine.py`` for the array layout.

Event calendar: a timing wheel of per-cycle buckets. Within a cycle, all
arrivals, credits, ejections and response releases are handled first (in
insertion order), then every link scheduled for the cycle runs one
arbitration round and forwards at most one flit.
"""

EV_ARRIVE = 0
EV_EJECT = 1
EV_CREDIT = 2
EV_RESP = 3
EV_LINK = 4

KIND_DATA = 0
KIND_READ_REQ = 1
KIND_READ_RESP = 2
KIND_WRITE_RESP = 3


def run(link_lat, link_num, link_den, link_ent_off, link_ent_gh,
        hop_off, hop_link, hop_depth, hop_flow,
        flow_pkt, flow_weight, flow_kind, flow_partner, flow_src, flow_base,
        flow_seg_off, flow_seg_list,
        src_seg_off, seg_flow, seg_end, seg_phase, phase_total,
        read_window, turnaround, pkts_per_txn, barrier, max_cycles,
        head_t, tail_t, link_flits, first_ej, last_ej):
    n_links = len(link_lat)
    n_flows = len(flow_pkt)
    n_hops = len(hop_link)
    n_src = len(src_seg_off) - 1
    n_phase = len(phase_total)

    max_delay = turnaround + 2
    for l in range(n_links):
        if link_lat[l] + 2 > max_delay:
            max_delay = link_lat[l] + 2
        w = (link_den + link_num[l] - 1) // link_num[l] + 2
        if w > max_delay:
            max_delay = w
    size = 1
    while size < max_delay + 1:
        size <<= 1
    mask = size - 1
    wheel = [[] for _ in range(size)]

    queue = [0] * n_hops
    credit = list(hop_depth)
    cw = [0] * n_hops
    link_q = [0] * n_links
    tokens = [link_den] * n_links
    last_tok = [0] * n_links
    link_mark = [-1] * n_links
    link_next = [-1] * n_links
    sent0 = [0] * n_flows
    ej = [0] * n_flows
    issued = [0] * n_flows
    assigned = [0] * n_flows
    done = [0] * n_flows  # completed data packets, keyed by the segment's flow
    flow_seg_ptr = [flow_seg_off[f] for f in range(n_flows)]
    outstanding = [0] * n_src
    cur_seg = [-1] * n_src
    waiting = [0] * n_src
    phase_done = [0] * n_phase

    pending = 0
    created = 0
    ejected = 0
    runq = []
    t = 0

    def push(when, ev):
        nonlocal pending
        wheel[when & mask].append(ev)
        pending += 1

    def sched_now(l):
        if link_mark[l] != t:
            link_mark[l] = t
            runq.append(l)

    def add_flits(f, n):
        nonlocal created
        g0 = hop_off[f]
        queue[g0] += n
        link_q[hop_link[g0]] += n
        created += n
        sched_now(hop_link[g0])

    def start_segment(s):
        # open-loop segments load all flits at once; reads go through the window
        g = cur_seg[s]
        f = seg_flow[g]
        if flow_kind[f] == KIND_DATA:
            add_flits(f, (seg_end[g] - assigned[f]) * flow_pkt[f])
            assigned[f] = seg_end[g]
        else:
            issue_reads(s)

    def advance(s):
        # move to the next segment; returns 1 if the caller should start it
        g = cur_seg[s]
        if g + 1 >= src_seg_off[s + 1]:
            cur_seg[s] = -1
            return 0
        if barrier and phase_done[seg_phase[g]] < phase_total[seg_phase[g]]:
            waiting[s] = 1
            return 0
        cur_seg[s] = g + 1
        return 1

    def issue_reads(s):
        while cur_seg[s] >= 0 and not waiting[s]:
            g = cur_seg[s]
            f = seg_flow[g]
            while issued[f] < seg_end[g] and outstanding[s] < read_window:
                issued[f] += 1
                outstanding[s] += 1
                add_flits(f, 1)
            if issued[f] < seg_end[g] or not advance(s):
                return

    def release(ph):
        for s in range(n_src):
            if waiting[s] and seg_phase[cur_seg[s]] == ph:
                waiting[s] = 0
                cur_seg[s] += 1
                start_segment(s)

    def seg_progress(f):
        p = flow_seg_ptr[f]
        while p < flow_seg_off[f + 1] and done[f] >= seg_end[flow_seg_list[p]]:
            ph = seg_phase[flow_seg_list[p]]
            phase_done[ph] += 1
            p += 1
            flow_seg_ptr[f] = p
            if barrier and phase_done[ph] == phase_total[ph]:
                release(ph)
        flow_seg_ptr[f] = p

    def packet_done(f, p):
        kind = flow_kind[f]
        if kind == KIND_DATA:
            part = flow_partner[f]
            if part >= 0 and (p + 1) % pkts_per_txn == 0:
                push(t + turnaround, (part << 3) | EV_RESP)
            done[f] += 1
            seg_progress(f)
        elif kind == KIND_READ_REQ:
            push(t + turnaround, (flow_partner[f] << 3) | EV_RESP)
        elif kind == KIND_READ_RESP:
            s = flow_src[f]
            outstanding[s] -= 1
            req = flow_partner[f]
            done[req] += 1
            seg_progress(req)
            issue_reads(s)

    def run_link(l):
        if link_num[l] != link_den:
            tok = tokens[l] + link_num[l] * (t - last_tok[l])
            if tok > link_den + link_num[l]:
                tok = link_den + link_num[l]
            tokens[l] = tok
            last_tok[l] = t
            if tok < link_den:
                wait = (link_den - tok + link_num[l] - 1) // link_num[l]
                when = t + wait
                if link_next[l] != when:
                    link_next[l] = when
                    push(when, (l << 3) | EV_LINK)
                return
        total = 0
        best = -1
        for e in range(link_ent_off[l], link_ent_off[l + 1]):
            gh = link_ent_gh[e]
            if queue[gh] > 0:
                f = hop_flow[gh]
                if gh == hop_off[f + 1] - 1 or credit[gh] > 0:
                    w = flow_weight[f]
                    cw[gh] += w
                    total += w
                    if best < 0 or cw[gh] > cw[best]:
                        best = gh
        if best < 0:
            return
        cw[best] -= total
        if link_num[l] != link_den:
            tokens[l] -= link_den
        queue[best] -= 1
        link_q[l] -= 1
        link_flits[l] += 1
        f = hop_flow[best]
        first = hop_off[f]
        last = hop_off[f + 1] - 1
        if best == first:
            k = sent0[f]
            if k % flow_pkt[f] == 0:
                head_t[flow_base[f] + k // flow_pkt[f]] = t
            sent0[f] = k + 1
            s = flow_src[f]
            if flow_kind[f] == KIND_DATA and cur_seg[s] >= 0 and seg_flow[cur_seg[s]] == f \
                    and sent0[f] == seg_end[cur_seg[s]] * flow_pkt[f]:
                if advance(s):
                    start_segment(s)
        else:
            prev = best - 1
            push(t + link_lat[hop_link[prev]], (prev << 3) | EV_CREDIT)
        if best == last:
            push(t + link_lat[l], (f << 3) | EV_EJECT)
        else:
            credit[best] -= 1
            push(t + link_lat[l], ((best + 1) << 3) | EV_ARRIVE)
        if link_q[l] > 0 and link_next[l] != t + 1:
            link_next[l] = t + 1
            push(t + 1, (l << 3) | EV_LINK)

    for s in range(n_src):
        if src_seg_off[s] < src_seg_off[s + 1]:
            cur_seg[s] = src_seg_off[s]
            start_segment(s)

    completed = 1
    end_cycle = 0
    while True:
        bucket = wheel[t & mask]
        if bucket:
            wheel[t & mask] = []
            pending -= len(bucket)
            for ev in bucket:
                typ = ev & 7
                x = ev >> 3
                if typ == EV_ARRIVE:
                    queue[x] += 1
                    l = hop_link[x]
                    link_q[l] += 1
                    sched_now(l)
                elif typ == EV_EJECT:
                    ejected += 1
                    ej[x] += 1
                    if first_ej[x] < 0:
                        first_ej[x] = t
                    last_ej[x] = t
                    end_cycle = t
                    if ej[x] % flow_pkt[x] == 0:
                        p = ej[x] // flow_pkt[x] - 1
                        tail_t[flow_base[x] + p] = t
                        packet_done(x, p)
                elif typ == EV_CREDIT:
                    credit[x] += 1
                    if queue[x] > 0:
                        sched_now(hop_link[x])
                elif typ == EV_RESP:
                    add_flits(x, flow_pkt[x])
                else:
                    if link_next[x] == t:
                        link_next[x] = -1
                    sched_now(x)
        i = 0
        while i < len(runq):
            run_link(runq[i])
            i += 1
        runq.clear()
        if pending == 0:
            break
        t += 1
        if t > max_cycles:
            completed = 0
            break
    return {
        "created": created,
        "ejected": ejected,
        "end_cycle": end_cycle,
        "stop_cycle": t,
        "completed": completed,
        "in_queues": sum(queue),
    }
