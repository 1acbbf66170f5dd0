use super::HawkesError;

const MAX_ITERATIONS: usize = 200_000;
const REL_TOL: f64 = 1e-14;

/// Perron root of a nonnegative square matrix.
///
/// The root is the largest Perron root over the irreducible diagonal blocks
/// (strongly connected components of the support graph). Each block is
/// handled by power iteration on `B + I`, which is primitive, so the
/// Collatz–Wielandt bounds `min/max_i (Ax)_i / x_i` converge geometrically.
/// Splitting first avoids the slow convergence of defective reducible
/// matrices such as nilpotent chains.
pub fn spectral_radius(g: &[Vec<f64>]) -> Result<f64, HawkesError> {
    let n = g.len();
    if g.iter().any(|row| row.len() != n) {
        return Err(HawkesError::Domain("spectral radius needs a square matrix".into()));
    }
    if let Some(bad) = g.iter().flatten().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(HawkesError::Domain(format!("matrix entry {bad} is not a finite nonnegative number")));
    }
    Ok(components(g).iter().map(|c| block_radius(g, c)).fold(0.0, f64::max))
}

/// Strongly connected components of the graph with an edge `r -> c` for
/// every positive `g[r][c]` (Tarjan).
fn components(g: &[Vec<f64>]) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        g: &'a [Vec<f64>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for w in 0..self.g.len() {
                if self.g[v][w] <= 0.0 {
                    continue;
                }
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }
    let n = g.len();
    let mut t = Tarjan {
        g,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out
}

fn block_radius(g: &[Vec<f64>], nodes: &[usize]) -> f64 {
    let n = nodes.len();
    if n == 1 {
        return g[nodes[0]][nodes[0]];
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut estimate = f64::INFINITY;
    let mut gap_prev = f64::INFINITY;
    let mut stagnant = 0;
    for _ in 0..MAX_ITERATIONS {
        // y = (B + I) x
        for (a, yi) in y.iter_mut().enumerate() {
            *yi = x[a] + nodes.iter().zip(&x).map(|(&c, xc)| g[nodes[a]][c] * xc).sum::<f64>();
        }
        let mut lower = f64::INFINITY;
        let mut upper = 0.0f64;
        for (yi, xi) in y.iter().zip(&x) {
            let ratio = yi / xi;
            lower = lower.min(ratio);
            upper = upper.max(ratio);
        }
        estimate = upper;
        let norm: f64 = y.iter().sum();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        let gap = upper - lower;
        if gap <= REL_TOL * upper {
            return ((upper + lower) / 2.0 - 1.0).max(0.0);
        }
        // rounding can keep the bounds a few ulps apart forever
        if gap >= gap_prev {
            stagnant += 1;
            if stagnant >= 64 {
                return ((upper + lower) / 2.0 - 1.0).max(0.0);
            }
        } else {
            stagnant = 0;
        }
        gap_prev = gap;
    }
    (estimate - 1.0).max(0.0)
}
