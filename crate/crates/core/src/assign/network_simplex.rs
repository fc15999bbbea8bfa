//! Primal network simplex for uncapacitated transportation problems with
//! integer supplies and integer costs.
//!
//! Spanning-tree bookkeeping follows the classical thread/successor layout:
//! an artificial root joined to every node, block-search pricing, and the
//! strongly feasible leaving-arc rule so degenerate pivots cannot cycle.

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const INF: i64 = i64::MAX;

pub(crate) struct NetworkSimplex {
    node_num: usize,
    root: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<i128>,
    flow: Vec<i64>,
    state: Vec<i8>,
    pi: Vec<i128>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<i64>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
    next_arc: usize,
    pub(crate) pivots: u64,
}

impl NetworkSimplex {
    /// `supply[u] > 0` for sources, `< 0` for sinks; must sum to zero.
    /// `art_cost` must exceed the cost of any simple path.
    pub(crate) fn new(supply: &[i64], art_cost: i128) -> Self {
        let n = supply.len();
        let root = n;
        let mut s = Self {
            node_num: n,
            root,
            source: Vec::with_capacity(n),
            target: Vec::with_capacity(n),
            cost: Vec::with_capacity(n),
            flow: Vec::with_capacity(n),
            state: Vec::with_capacity(n),
            pi: vec![0; n + 1],
            parent: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![1; n + 1],
            last_succ: vec![0; n + 1],
            pred_dir: vec![DIR_UP; n + 1],
            dirty_revs: Vec::new(),
            in_arc: NONE,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
            delta: 0,
            next_arc: n,
            pivots: 0,
        };
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n as i64 + 1;
        s.last_succ[root] = if n == 0 { root } else { n - 1 };
        // Artificial arc `u` joins node `u` to the root.
        for u in 0..n {
            s.parent[u] = root;
            s.pred[u] = u;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.last_succ[u] = u;
            s.state.push(STATE_TREE);
            if supply[u] >= 0 {
                s.pred_dir[u] = DIR_UP;
                s.source.push(u);
                s.target.push(root);
                s.flow.push(supply[u]);
                s.cost.push(0);
                s.pi[u] = 0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.source.push(root);
                s.target.push(u);
                s.flow.push(-supply[u]);
                s.cost.push(art_cost);
                s.pi[u] = art_cost;
            }
        }
        s
    }

    pub(crate) fn add_arc(&mut self, from: usize, to: usize, cost: i128) -> usize {
        self.source.push(from);
        self.target.push(to);
        self.cost.push(cost);
        self.flow.push(0);
        self.state.push(STATE_LOWER);
        self.source.len() - 1
    }

    /// Replace the artificial start by a feasible basis.
    ///
    /// `flows` lists real arcs with positive flow whose support is a forest and
    /// meets every supply exactly. Each component hangs from the root through
    /// the zero-flow artificial arc of its lowest-index sink, so every
    /// zero-flow tree arc points away from the root.
    pub(crate) fn warm_start(&mut self, flows: &[(usize, i64)]) {
        let n = self.node_num;
        let root = self.root;
        for u in 0..n {
            self.flow[u] = 0;
            self.state[u] = STATE_LOWER;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for &(e, f) in flows {
            debug_assert!(e >= n && f > 0);
            self.flow[e] = f;
            self.state[e] = STATE_TREE;
            adj[self.source[e]].push(e);
            adj[self.target[e]].push(e);
        }
        // Component roots: lowest sink index wins because sinks are scanned in order.
        let mut comp_seen = vec![false; n];
        let mut stack = Vec::new();
        for u in 0..n {
            if comp_seen[u] || self.source[u] != root {
                continue;
            }
            stack.push(u);
            comp_seen[u] = true;
            while let Some(x) = stack.pop() {
                for &e in &adj[x] {
                    let y = if self.source[e] == x { self.target[e] } else { self.source[e] };
                    if !comp_seen[y] {
                        comp_seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            self.state[u] = STATE_TREE;
            adj[root].push(u);
            adj[u].push(u);
        }
        debug_assert!(comp_seen.iter().all(|&b| b), "every component needs a sink");
        // Preorder DFS from the root rebuilds the thread and successor data.
        let mut order = Vec::with_capacity(n + 1);
        let mut visited = vec![false; n + 1];
        self.parent[root] = NONE;
        self.pred[root] = NONE;
        self.pi[root] = 0;
        stack.clear();
        stack.push(root);
        visited[root] = true;
        while let Some(x) = stack.pop() {
            order.push(x);
            for k in (0..adj[x].len()).rev() {
                let e = adj[x][k];
                if self.state[e] != STATE_TREE {
                    continue;
                }
                let y = if self.source[e] == x { self.target[e] } else { self.source[e] };
                if visited[y] {
                    continue;
                }
                visited[y] = true;
                self.parent[y] = x;
                self.pred[y] = e;
                if self.source[e] == y {
                    self.pred_dir[y] = DIR_UP;
                    self.pi[y] = self.pi[x] - self.cost[e];
                } else {
                    self.pred_dir[y] = DIR_DOWN;
                    self.pi[y] = self.pi[x] + self.cost[e];
                }
                stack.push(y);
            }
        }
        debug_assert_eq!(order.len(), n + 1);
        for k in 0..order.len() {
            let u = order[k];
            let v = order[(k + 1) % order.len()];
            self.thread[u] = v;
            self.rev_thread[v] = u;
        }
        for &u in &order {
            self.succ_num[u] = 1;
            self.last_succ[u] = u;
        }
        for &u in order.iter().rev() {
            let p = self.parent[u];
            if p != NONE {
                self.succ_num[p] += self.succ_num[u];
            }
        }
        // last_succ[u] is the node at preorder position pos(u) + succ_num(u) - 1.
        let mut pos = vec![0usize; n + 1];
        for (k, &u) in order.iter().enumerate() {
            pos[u] = k;
        }
        for &u in &order {
            self.last_succ[u] = order[pos[u] + self.succ_num[u] as usize - 1];
        }
    }

    pub(crate) fn potential(&self, u: usize) -> i128 {
        self.pi[u]
    }

    /// Real arcs with their endpoints and flow.
    pub(crate) fn real_flows(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        (self.node_num..self.source.len())
            .filter(|&e| self.flow[e] > 0)
            .map(|e| (self.source[e], self.target[e], self.flow[e]))
    }

    pub(crate) fn artificial_flow(&self) -> i64 {
        self.flow[..self.node_num].iter().sum()
    }

    /// Pivot until no real arc has a negative reduced cost.
    pub(crate) fn run(&mut self) {
        let real = self.source.len() - self.node_num;
        if real == 0 {
            return;
        }
        let block = ((real as f64).sqrt() as usize).max(10);
        if self.next_arc >= self.source.len() {
            self.next_arc = self.node_num;
        }
        while self.find_entering_arc(block) {
            self.find_join_node();
            let change = self.find_leaving_arc();
            debug_assert!(self.delta < INF, "uncapacitated problems are bounded here");
            self.change_flow(change);
            if change {
                self.update_tree_structure();
                self.update_potential();
            }
            self.pivots += 1;
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> i128 {
        self.state[e] as i128 * (self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]])
    }

    fn find_entering_arc(&mut self, block: usize) -> bool {
        let first = self.node_num;
        let end = self.source.len();
        let mut min: i128 = 0;
        let mut cnt = block;
        let start = self.next_arc;
        let mut e = start;
        let mut scanned = 0usize;
        let total = end - first;
        while scanned < total {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
            }
            scanned += 1;
            e += 1;
            if e == end {
                e = first;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < 0 {
                    self.next_arc = e;
                    return true;
                }
                cnt = block;
            }
        }
        if min < 0 {
            self.next_arc = e;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = (self.source[self.in_arc], self.target[self.in_arc]);
        self.delta = INF;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP { self.flow[e] } else { INF };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN { self.flow[e] } else { INF };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self, change: bool) {
        if self.delta > 0 {
            let val = self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
        }
        if change {
            self.state[self.in_arc] = STATE_TREE;
            let out = self.pred[self.u_out];
            self.state[out] = STATE_LOWER;
        }
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue =
                if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0i64;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            let mut p = self.parent[u];
            while u != u_in {
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
                p = self.parent[u];
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let c = self.cost[self.in_arc];
        let sigma = self.pi[self.v_in] - self.pi[u_in] - if self.pred_dir[u_in] == DIR_UP { c } else { -c };
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Check the tree invariants; used by tests.
    #[cfg(test)]
    pub(crate) fn check_tree(&self) {
        let n = self.node_num + 1;
        // Thread visits every node once starting from the root.
        let mut seen = vec![false; n];
        let mut u = self.root;
        for _ in 0..n {
            assert!(!seen[u]);
            seen[u] = true;
            assert_eq!(self.rev_thread[self.thread[u]], u);
            u = self.thread[u];
        }
        assert_eq!(u, self.root);
        for v in 0..self.node_num {
            let e = self.pred[v];
            assert_eq!(self.state[e], STATE_TREE);
            let rc = self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]];
            assert_eq!(rc, 0, "tree arc {e} has reduced cost {rc}");
            assert!(self.flow[e] >= 0);
        }
    }
}
