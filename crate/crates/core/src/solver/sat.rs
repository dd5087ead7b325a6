//! Conflict-driven clause-learning SAT solver.
//!
//! Two watched literals, first-UIP learning, activity-ordered decisions
//! with phase saving, Luby restarts and length-based learnt-clause
//! reduction. Solving under assumptions lets callers enable and disable
//! groups of clauses without rebuilding the instance.

use std::ops::Not;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: u32, negated: bool) -> Lit {
        Lit(var << 1 | negated as u32)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    fn index(self) -> usize {
        self.0 as usize
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LBool {
    True,
    False,
    Undef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatStatus {
    Sat,
    Unsat,
    Unknown,
}

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    /// Literal block distance at learning time.
    lbd: u32,
}

#[derive(Clone, Copy)]
struct Watch {
    cref: u32,
    /// Some other literal of the clause; if it is true the clause is skipped.
    blocker: Lit,
}

/// Max-heap of variables keyed by activity.
#[derive(Default)]
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn grow(&mut self, n: usize) {
        self.pos.resize(n, None);
    }

    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize].is_some()
    }

    fn insert(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        self.pos[v as usize] = Some(self.heap.len() - 1);
        self.up(self.heap.len() - 1, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = Some(0);
            self.down(0, act);
        }
        Some(top)
    }

    fn bumped(&mut self, v: u32, act: &[f64]) {
        if let Some(i) = self.pos[v as usize] {
            self.up(i, act);
        }
    }

    fn up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            let pv = self.heap[parent];
            if act[pv as usize] >= act[v as usize] {
                break;
            }
            self.heap[i] = pv;
            self.pos[pv as usize] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v as usize] = Some(i);
    }

    fn down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let c = if r < self.heap.len() && act[self.heap[r] as usize] > act[self.heap[l] as usize] {
                r
            } else {
                l
            };
            let cv = self.heap[c];
            if act[cv as usize] <= act[v as usize] {
                break;
            }
            self.heap[i] = cv;
            self.pos[cv as usize] = Some(i);
            i = c;
        }
        self.heap[i] = v;
        self.pos[v as usize] = Some(i);
    }
}

fn luby(mut i: u64) -> u64 {
    // Index i (0-based) into 1,1,2,1,1,2,4,...
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i {
        size = (size - 1) / 2;
        seq -= 1;
        i %= size;
    }
    1 << seq
}

pub struct Sat {
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watch>>,
    /// Per variable: 1 true, -1 false, 0 unassigned.
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    seen: Vec<bool>,
    var_inc: f64,
    order: VarHeap,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    ok: bool,
    num_learnts: usize,
    max_learnts: usize,
    level_stamp: Vec<u64>,
    stamp: u64,
    pub conflicts: u64,
}

impl Default for Sat {
    fn default() -> Self {
        Self::new()
    }
}

impl Sat {
    pub fn new() -> Sat {
        Sat {
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            polarity: Vec::new(),
            activity: Vec::new(),
            seen: Vec::new(),
            var_inc: 1.0,
            order: VarHeap::default(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            ok: true,
            num_learnts: 0,
            max_learnts: 20_000,
            level_stamp: vec![0],
            stamp: 0,
            conflicts: 0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.assigns.len()
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.iter().filter(|c| !c.deleted).count()
    }

    pub fn new_var(&mut self) -> u32 {
        let v = self.assigns.len() as u32;
        self.assigns.push(0);
        self.level.push(0);
        self.reason.push(None);
        self.polarity.push(false);
        self.activity.push(0.0);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.level_stamp.push(0);
        self.order.grow(self.assigns.len());
        self.order.insert(v, &self.activity);
        v
    }

    #[inline]
    fn lit_value(&self, l: Lit) -> i8 {
        let a = self.assigns[l.var() as usize];
        if l.is_negated() {
            -a
        } else {
            a
        }
    }

    fn value(&self, l: Lit) -> LBool {
        match self.lit_value(l) {
            1 => LBool::True,
            -1 => LBool::False,
            _ => LBool::Undef,
        }
    }

    /// Value of a literal in the last satisfying assignment.
    pub fn model_value(&self, l: Lit) -> bool {
        self.value(l) == LBool::True
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, l: Lit, reason: Option<u32>) {
        let v = l.var() as usize;
        self.assigns[v] = if l.is_negated() { -1 } else { 1 };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    /// Add a clause, backtracking to level 0 first. Returns false once the
    /// instance is unsatisfiable regardless of assumptions.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort_unstable();
        c.dedup();
        for w in c.windows(2) {
            if w[0] == !w[1] {
                return true;
            }
        }
        if c.iter().any(|l| self.value(*l) == LBool::True) {
            return true;
        }
        c.retain(|l| self.value(*l) != LBool::False);
        match c.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(c[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(c, false, 0);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool, lbd: u32) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0].index()].push(Watch {
            cref,
            blocker: lits[1],
        });
        self.watches[lits[1].index()].push(Watch {
            cref,
            blocker: lits[0],
        });
        if learnt {
            self.num_learnts += 1;
        }
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            lbd,
        });
        cref
    }

    fn propagate(&mut self) -> Option<u32> {
        let mut conflict = None;
        while self.qhead < self.trail.len() && conflict.is_none() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.index()]);
            let (mut i, mut j) = (0, 0);
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.lit_value(w.blocker) == 1 {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let c = &mut self.clauses[w.cref as usize];
                if c.deleted {
                    continue;
                }
                if c.lits[0] == false_lit {
                    c.lits.swap(0, 1);
                }
                let first = c.lits[0];
                let first_val = {
                    let a = self.assigns[first.var() as usize];
                    if first.is_negated() {
                        -a
                    } else {
                        a
                    }
                };
                if first_val == 1 {
                    ws[j] = Watch {
                        cref: w.cref,
                        blocker: first,
                    };
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..c.lits.len() {
                    let l = c.lits[k];
                    let a = self.assigns[l.var() as usize];
                    let lv = if l.is_negated() { -a } else { a };
                    if lv != -1 {
                        c.lits.swap(1, k);
                        self.watches[l.index()].push(Watch {
                            cref: w.cref,
                            blocker: first,
                        });
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = Watch {
                    cref: w.cref,
                    blocker: first,
                };
                j += 1;
                if first_val == -1 {
                    conflict = Some(w.cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        i += 1;
                        j += 1;
                    }
                } else {
                    self.enqueue(first, Some(w.cref));
                }
            }
            ws.truncate(j);
            // Watches pushed onto this list meanwhile (none in practice,
            // since a clause never re-watches its false literal) are kept.
            let slot = &mut self.watches[false_lit.index()];
            ws.append(slot);
            *slot = ws;
        }
        if conflict.is_some() {
            self.qhead = self.trail.len();
        }
        conflict
    }

    fn bump(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.order.bumped(v, &self.activity);
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut path = 0;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        loop {
            let start = usize::from(p.is_some());
            let n = self.clauses[confl as usize].lits.len();
            for k in start..n {
                let q = self.clauses[confl as usize].lits[k];
                let v = q.var();
                if !self.seen[v as usize] && self.level[v as usize] > 0 {
                    self.bump(v);
                    self.seen[v as usize] = true;
                    if self.level[v as usize] >= self.decision_level() {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let lit = self.trail[idx];
            self.seen[lit.var() as usize] = false;
            path -= 1;
            p = Some(lit);
            if path == 0 {
                break;
            }
            confl = self.reason[lit.var() as usize].expect("implied literal has a reason");
        }
        learnt[0] = !p.unwrap();

        // Drop literals implied by the rest of the clause through their reason.
        let redundant: Vec<bool> = learnt
            .iter()
            .enumerate()
            .map(|(i, l)| {
                i > 0
                    && self.reason[l.var() as usize].is_some_and(|r| {
                        self.clauses[r as usize].lits.iter().all(|q| {
                            q.var() == l.var() || self.seen[q.var() as usize] || self.level[q.var() as usize] == 0
                        })
                    })
            })
            .collect();
        for l in &learnt[1..] {
            self.seen[l.var() as usize] = false;
        }
        let mut k = 0;
        learnt.retain(|_| {
            k += 1;
            !redundant[k - 1]
        });

        let mut bt = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var() as usize] > self.level[learnt[max_i].var() as usize] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            bt = self.level[learnt[1].var() as usize];
        }
        (learnt, bt)
    }

    fn lbd(&mut self, lits: &[Lit]) -> u32 {
        self.stamp += 1;
        let mut n = 0;
        for l in lits {
            let lv = self.level[l.var() as usize] as usize;
            if self.level_stamp[lv] != self.stamp {
                self.level_stamp[lv] = self.stamp;
                n += 1;
            }
        }
        n
    }

    fn cancel_until(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for i in (lim..self.trail.len()).rev() {
            let v = self.trail[i].var();
            self.polarity[v as usize] = !self.trail[i].is_negated();
            self.assigns[v as usize] = 0;
            self.reason[v as usize] = None;
            self.order.insert(v, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level as usize);
        self.qhead = lim;
    }

    /// Delete the worse half of the learnt clauses, keeping glue clauses.
    /// Only called at level 0, where no learnt clause is a live reason.
    fn reduce_learnts(&mut self) {
        let mut learnts: Vec<(u32, usize, u32)> = self
            .clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.learnt && !c.deleted && c.lits.len() > 2 && c.lbd > 2)
            .map(|(i, c)| (c.lbd, c.lits.len(), i as u32))
            .collect();
        learnts.sort_unstable();
        for &(_, _, cref) in &learnts[learnts.len() / 2..] {
            let c = &mut self.clauses[cref as usize];
            c.deleted = true;
            c.lits = Vec::new();
            self.num_learnts -= 1;
        }
        for ws in &mut self.watches {
            ws.retain(|w| !self.clauses[w.cref as usize].deleted);
        }
    }

    /// Search for a model with every literal of `assumptions` true, giving up
    /// after `budget` conflicts.
    pub fn solve(&mut self, assumptions: &[Lit], budget: u64) -> SatStatus {
        if !self.ok {
            return SatStatus::Unsat;
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.ok = false;
            return SatStatus::Unsat;
        }
        let mut used = 0u64;
        let mut restart_no = 0u64;
        let mut until_restart = 100 * luby(restart_no);
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                used += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return SatStatus::Unsat;
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let first = learnt[0];
                    let lbd = self.lbd(&learnt);
                    let cref = self.attach(learnt, true, lbd);
                    self.enqueue(first, Some(cref));
                }
                self.var_inc /= 0.95;
                if used >= budget {
                    self.cancel_until(0);
                    return SatStatus::Unknown;
                }
                until_restart = until_restart.saturating_sub(1);
                continue;
            }
            if until_restart == 0 {
                restart_no += 1;
                until_restart = 100 * luby(restart_no);
                self.cancel_until(0);
                if self.num_learnts > self.max_learnts {
                    self.reduce_learnts();
                    self.max_learnts += self.max_learnts / 10;
                }
                continue;
            }
            let dl = self.decision_level() as usize;
            let next = if dl < assumptions.len() {
                let a = assumptions[dl];
                match self.value(a) {
                    LBool::True => {
                        self.trail_lim.push(self.trail.len());
                        continue;
                    }
                    LBool::False => {
                        self.cancel_until(0);
                        return SatStatus::Unsat;
                    }
                    LBool::Undef => a,
                }
            } else {
                let mut pick = None;
                while let Some(v) = self.order.pop(&self.activity) {
                    if self.assigns[v as usize] == 0 {
                        pick = Some(Lit::new(v, !self.polarity[v as usize]));
                        break;
                    }
                }
                match pick {
                    Some(l) => l,
                    None => return SatStatus::Sat,
                }
            };
            self.trail_lim.push(self.trail.len());
            self.enqueue(next, None);
        }
    }

    /// Return to level 0 after reading a model.
    pub fn reset(&mut self) {
        self.cancel_until(0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lits(s: &mut Sat, n: usize) -> Vec<Lit> {
        (0..n).map(|_| Lit::new(s.new_var(), false)).collect()
    }

    #[test]
    fn luby_sequence() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn simple_sat_and_unsat() {
        let mut s = Sat::new();
        let x = lits(&mut s, 2);
        s.add_clause(&[x[0], x[1]]);
        s.add_clause(&[!x[0]]);
        assert_eq!(s.solve(&[], 1000), SatStatus::Sat);
        assert!(s.model_value(x[1]));
        s.reset();
        s.add_clause(&[!x[1]]);
        assert_eq!(s.solve(&[], 1000), SatStatus::Unsat);
    }

    #[test]
    fn assumptions_are_temporary() {
        let mut s = Sat::new();
        let x = lits(&mut s, 3);
        s.add_clause(&[!x[0], x[1]]);
        s.add_clause(&[!x[0], !x[1]]);
        assert_eq!(s.solve(&[x[0]], 1000), SatStatus::Unsat);
        assert_eq!(s.solve(&[], 1000), SatStatus::Sat);
        assert!(!s.model_value(x[0]));
    }

    // Pigeonhole 5 into 4 needs real search.
    #[test]
    fn pigeonhole_is_unsat() {
        let mut s = Sat::new();
        let (p, h) = (5, 4);
        let v: Vec<Vec<Lit>> = (0..p).map(|_| lits(&mut s, h)).collect();
        for row in &v {
            s.add_clause(row);
        }
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[!v[a][j], !v[b][j]]);
                }
            }
        }
        assert_eq!(s.solve(&[], 100_000), SatStatus::Unsat);
    }

    #[test]
    fn budget_gives_unknown() {
        let mut s = Sat::new();
        let (p, h) = (9, 8);
        let v: Vec<Vec<Lit>> = (0..p).map(|_| lits(&mut s, h)).collect();
        for row in &v {
            s.add_clause(row);
        }
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[!v[a][j], !v[b][j]]);
                }
            }
        }
        assert_eq!(s.solve(&[], 10), SatStatus::Unknown);
    }

    // Random 3-SAT checked against brute force.
    #[test]
    fn random_3sat_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = 10;
            let m = rng.gen_range(20..60);
            let cls: Vec<Vec<(usize, bool)>> = (0..m)
                .map(|_| (0..3).map(|_| (rng.gen_range(0..n), rng.gen_bool(0.5))).collect())
                .collect();
            let brute = (0..1u32 << n).any(|a| {
                cls.iter()
                    .all(|c| c.iter().any(|&(v, neg)| ((a >> v) & 1 == 1) != neg))
            });
            let mut s = Sat::new();
            let x = lits(&mut s, n);
            for c in &cls {
                let cl: Vec<Lit> = c.iter().map(|&(v, neg)| if neg { !x[v] } else { x[v] }).collect();
                s.add_clause(&cl);
            }
            let r = s.solve(&[], 100_000);
            assert_eq!(r == SatStatus::Sat, brute);
            if r == SatStatus::Sat {
                for c in &cls {
                    assert!(c.iter().any(|&(v, neg)| s.model_value(x[v]) != neg));
                }
            }
        }
    }
}
