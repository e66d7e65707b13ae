# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled flit-level kernel. Mirrors ``_kernel_py`` statement for statement."""

from libcpp.vector cimport vector

ctypedef long long i64

cdef enum:
    EV_ARRIVE = 0
    EV_EJECT = 1
    EV_CREDIT = 2
    EV_RESP = 3
    EV_LINK = 4
    KIND_DATA = 0
    KIND_READ_REQ = 1
    KIND_READ_RESP = 2
    KIND_WRITE_RESP = 3


cdef class _Sim:
    cdef const i64[:] link_lat
    cdef const i64[:] link_num
    cdef i64 link_den
    cdef const i64[:] link_ent_off
    cdef const i64[:] link_ent_gh
    cdef const i64[:] hop_off
    cdef const i64[:] hop_link
    cdef const i64[:] hop_flow
    cdef const i64[:] flow_pkt
    cdef const i64[:] flow_weight
    cdef const i64[:] flow_kind
    cdef const i64[:] flow_partner
    cdef const i64[:] flow_src
    cdef const i64[:] flow_base
    cdef const i64[:] flow_seg_off
    cdef const i64[:] flow_seg_list
    cdef const i64[:] src_seg_off
    cdef const i64[:] seg_flow
    cdef const i64[:] seg_end
    cdef const i64[:] seg_phase
    cdef const i64[:] phase_total
    cdef i64 read_window, turnaround, pkts_per_txn, barrier
    cdef i64[:] head_t
    cdef i64[:] tail_t
    cdef i64[:] link_flits

    cdef vector[vector[i64]] wheel
    cdef i64 mask
    cdef vector[i64] queue, credit, cw, link_q, tokens, last_tok, link_mark, link_next
    cdef vector[i64] sent0, ej, issued, assigned, done, flow_seg_ptr
    cdef vector[i64] outstanding, cur_seg, waiting, phase_done
    cdef vector[i64] runq
    cdef i64 pending, created, ejected, t, n_src

    cdef void push(self, i64 when, i64 ev):
        self.wheel[when & self.mask].push_back(ev)
        self.pending += 1

    cdef void sched_now(self, i64 l):
        if self.link_mark[l] != self.t:
            self.link_mark[l] = self.t
            self.runq.push_back(l)

    cdef void add_flits(self, i64 f, i64 n):
        cdef i64 g0 = self.hop_off[f]
        self.queue[g0] += n
        self.link_q[self.hop_link[g0]] += n
        self.created += n
        self.sched_now(self.hop_link[g0])

    cdef void start_segment(self, i64 s):
        cdef i64 g = self.cur_seg[s]
        cdef i64 f = self.seg_flow[g]
        if self.flow_kind[f] == KIND_DATA:
            self.add_flits(f, (self.seg_end[g] - self.assigned[f]) * self.flow_pkt[f])
            self.assigned[f] = self.seg_end[g]
        else:
            self.issue_reads(s)

    cdef int advance(self, i64 s):
        cdef i64 g = self.cur_seg[s]
        if g + 1 >= self.src_seg_off[s + 1]:
            self.cur_seg[s] = -1
            return 0
        if self.barrier and self.phase_done[self.seg_phase[g]] < self.phase_total[self.seg_phase[g]]:
            self.waiting[s] = 1
            return 0
        self.cur_seg[s] = g + 1
        return 1

    cdef void issue_reads(self, i64 s):
        cdef i64 g, f
        while self.cur_seg[s] >= 0 and not self.waiting[s]:
            g = self.cur_seg[s]
            f = self.seg_flow[g]
            while self.issued[f] < self.seg_end[g] and self.outstanding[s] < self.read_window:
                self.issued[f] += 1
                self.outstanding[s] += 1
                self.add_flits(f, 1)
            if self.issued[f] < self.seg_end[g] or not self.advance(s):
                return

    cdef void release(self, i64 ph):
        cdef i64 s
        for s in range(self.n_src):
            if self.waiting[s] and self.seg_phase[self.cur_seg[s]] == ph:
                self.waiting[s] = 0
                self.cur_seg[s] += 1
                self.start_segment(s)

    cdef void seg_progress(self, i64 f):
        cdef i64 p = self.flow_seg_ptr[f]
        cdef i64 ph
        while p < self.flow_seg_off[f + 1] and self.done[f] >= self.seg_end[self.flow_seg_list[p]]:
            ph = self.seg_phase[self.flow_seg_list[p]]
            self.phase_done[ph] += 1
            p += 1
            self.flow_seg_ptr[f] = p
            if self.barrier and self.phase_done[ph] == self.phase_total[ph]:
                self.release(ph)
        self.flow_seg_ptr[f] = p

    cdef void packet_done(self, i64 f, i64 p):
        cdef i64 kind = self.flow_kind[f]
        cdef i64 part, s, req
        if kind == KIND_DATA:
            part = self.flow_partner[f]
            if part >= 0 and (p + 1) % self.pkts_per_txn == 0:
                self.push(self.t + self.turnaround, (part << 3) | EV_RESP)
            self.done[f] += 1
            self.seg_progress(f)
        elif kind == KIND_READ_REQ:
            self.push(self.t + self.turnaround, (self.flow_partner[f] << 3) | EV_RESP)
        elif kind == KIND_READ_RESP:
            s = self.flow_src[f]
            self.outstanding[s] -= 1
            req = self.flow_partner[f]
            self.done[req] += 1
            self.seg_progress(req)
            self.issue_reads(s)

    cdef void run_link(self, i64 l):
        cdef i64 tok, wait, when, total, best, e, gh, f, w, first, last, k, s, prev
        cdef i64 t = self.t
        cdef i64 num = self.link_num[l]
        cdef i64 den = self.link_den
        if num != den:
            tok = self.tokens[l] + num * (t - self.last_tok[l])
            if tok > den + num:
                tok = den + num
            self.tokens[l] = tok
            self.last_tok[l] = t
            if tok < den:
                wait = (den - tok + num - 1) // num
                when = t + wait
                if self.link_next[l] != when:
                    self.link_next[l] = when
                    self.push(when, (l << 3) | EV_LINK)
                return
        total = 0
        best = -1
        for e in range(self.link_ent_off[l], self.link_ent_off[l + 1]):
            gh = self.link_ent_gh[e]
            if self.queue[gh] > 0:
                f = self.hop_flow[gh]
                if gh == self.hop_off[f + 1] - 1 or self.credit[gh] > 0:
                    w = self.flow_weight[f]
                    self.cw[gh] += w
                    total += w
                    if best < 0 or self.cw[gh] > self.cw[best]:
                        best = gh
        if best < 0:
            return
        self.cw[best] -= total
        if num != den:
            self.tokens[l] -= den
        self.queue[best] -= 1
        self.link_q[l] -= 1
        self.link_flits[l] += 1
        f = self.hop_flow[best]
        first = self.hop_off[f]
        last = self.hop_off[f + 1] - 1
        if best == first:
            k = self.sent0[f]
            if k % self.flow_pkt[f] == 0:
                self.head_t[self.flow_base[f] + k // self.flow_pkt[f]] = t
            self.sent0[f] = k + 1
            s = self.flow_src[f]
            if self.flow_kind[f] == KIND_DATA and self.cur_seg[s] >= 0 and self.seg_flow[self.cur_seg[s]] == f \
                    and self.sent0[f] == self.seg_end[self.cur_seg[s]] * self.flow_pkt[f]:
                if self.advance(s):
                    self.start_segment(s)
        else:
            prev = best - 1
            self.push(t + self.link_lat[self.hop_link[prev]], (prev << 3) | EV_CREDIT)
        if best == last:
            self.push(t + self.link_lat[l], (f << 3) | EV_EJECT)
        else:
            self.credit[best] -= 1
            self.push(t + self.link_lat[l], ((best + 1) << 3) | EV_ARRIVE)
        if self.link_q[l] > 0 and self.link_next[l] != t + 1:
            self.link_next[l] = t + 1
            self.push(t + 1, (l << 3) | EV_LINK)


def run(link_lat, link_num, link_den, link_ent_off, link_ent_gh,
        hop_off, hop_link, hop_depth, hop_flow,
        flow_pkt, flow_weight, flow_kind, flow_partner, flow_src, flow_base,
        flow_seg_off, flow_seg_list,
        src_seg_off, seg_flow, seg_end, seg_phase, phase_total,
        read_window, turnaround, pkts_per_txn, barrier, max_cycles,
        head_t, tail_t, link_flits, first_ej, last_ej):
    cdef _Sim sim = _Sim()
    cdef i64 n_links = len(link_lat)
    cdef i64 n_flows = len(flow_pkt)
    cdef i64 n_hops = len(hop_link)
    cdef i64 n_src = len(src_seg_off) - 1
    cdef i64 n_phase = len(phase_total)
    cdef i64 max_delay, size, l, w, s, f, i, typ, x, ev, p
    cdef i64 max_cyc = max_cycles
    cdef i64[:] fej = first_ej
    cdef i64[:] lej = last_ej
    cdef const i64[:] depth = hop_depth
    cdef vector[i64] bucket

    sim.link_lat = link_lat
    sim.link_num = link_num
    sim.link_den = link_den
    sim.link_ent_off = link_ent_off
    sim.link_ent_gh = link_ent_gh
    sim.hop_off = hop_off
    sim.hop_link = hop_link
    sim.hop_flow = hop_flow
    sim.flow_pkt = flow_pkt
    sim.flow_weight = flow_weight
    sim.flow_kind = flow_kind
    sim.flow_partner = flow_partner
    sim.flow_src = flow_src
    sim.flow_base = flow_base
    sim.flow_seg_off = flow_seg_off
    sim.flow_seg_list = flow_seg_list
    sim.src_seg_off = src_seg_off
    sim.seg_flow = seg_flow
    sim.seg_end = seg_end
    sim.seg_phase = seg_phase
    sim.phase_total = phase_total
    sim.read_window = read_window
    sim.turnaround = turnaround
    sim.pkts_per_txn = pkts_per_txn
    sim.barrier = barrier
    sim.head_t = head_t
    sim.tail_t = tail_t
    sim.link_flits = link_flits
    sim.n_src = n_src

    max_delay = sim.turnaround + 2
    for l in range(n_links):
        if sim.link_lat[l] + 2 > max_delay:
            max_delay = sim.link_lat[l] + 2
        w = (sim.link_den + sim.link_num[l] - 1) // sim.link_num[l] + 2
        if w > max_delay:
            max_delay = w
    size = 1
    while size < max_delay + 1:
        size <<= 1
    sim.mask = size - 1
    sim.wheel.resize(size)

    sim.queue.assign(n_hops, 0)
    sim.credit.resize(n_hops)
    for i in range(n_hops):
        sim.credit[i] = depth[i]
    sim.cw.assign(n_hops, 0)
    sim.link_q.assign(n_links, 0)
    sim.tokens.assign(n_links, sim.link_den)
    sim.last_tok.assign(n_links, 0)
    sim.link_mark.assign(n_links, -1)
    sim.link_next.assign(n_links, -1)
    sim.sent0.assign(n_flows, 0)
    sim.ej.assign(n_flows, 0)
    sim.issued.assign(n_flows, 0)
    sim.assigned.assign(n_flows, 0)
    sim.done.assign(n_flows, 0)
    sim.flow_seg_ptr.resize(n_flows)
    for f in range(n_flows):
        sim.flow_seg_ptr[f] = sim.flow_seg_off[f]
    sim.outstanding.assign(n_src, 0)
    sim.cur_seg.assign(n_src, -1)
    sim.waiting.assign(n_src, 0)
    sim.phase_done.assign(n_phase, 0)
    sim.pending = 0
    sim.created = 0
    sim.ejected = 0
    sim.t = 0

    for s in range(n_src):
        if sim.src_seg_off[s] < sim.src_seg_off[s + 1]:
            sim.cur_seg[s] = sim.src_seg_off[s]
            sim.start_segment(s)

    cdef int completed = 1
    cdef i64 end_cycle = 0
    while True:
        if sim.wheel[sim.t & sim.mask].size() > 0:
            bucket.swap(sim.wheel[sim.t & sim.mask])
            sim.pending -= <i64>bucket.size()
            for i in range(<i64>bucket.size()):
                ev = bucket[i]
                typ = ev & 7
                x = ev >> 3
                if typ == EV_ARRIVE:
                    sim.queue[x] += 1
                    l = sim.hop_link[x]
                    sim.link_q[l] += 1
                    sim.sched_now(l)
                elif typ == EV_EJECT:
                    sim.ejected += 1
                    sim.ej[x] += 1
                    if fej[x] < 0:
                        fej[x] = sim.t
                    lej[x] = sim.t
                    end_cycle = sim.t
                    if sim.ej[x] % sim.flow_pkt[x] == 0:
                        p = sim.ej[x] // sim.flow_pkt[x] - 1
                        sim.tail_t[sim.flow_base[x] + p] = sim.t
                        sim.packet_done(x, p)
                elif typ == EV_CREDIT:
                    sim.credit[x] += 1
                    if sim.queue[x] > 0:
                        sim.sched_now(sim.hop_link[x])
                elif typ == EV_RESP:
                    sim.add_flits(x, sim.flow_pkt[x])
                else:
                    if sim.link_next[x] == sim.t:
                        sim.link_next[x] = -1
                    sim.sched_now(x)
            bucket.clear()
        i = 0
        while i < <i64>sim.runq.size():
            sim.run_link(sim.runq[i])
            i += 1
        sim.runq.clear()
        if sim.pending == 0:
            break
        sim.t += 1
        if sim.t > max_cyc:
            completed = 0
            break
    cdef i64 inq = 0
    for i in range(n_hops):
        inq += sim.queue[i]
    return {
        "created": sim.created,
        "ejected": sim.ejected,
        "end_cycle": end_cycle,
        "stop_cycle": sim.t,
        "completed": completed,
        "in_queues": inq,
    }
