use super::MONEY_TOL;

/// A system of upper bounds `x_j <= u_j` and differences `x_j − x_k <= w`.
///
/// The componentwise-maximal solution is the vector of shortest-path
/// distances from a virtual source with an edge of weight `u_j` into every
/// variable and an edge `k → j` of weight `w` per difference constraint.
#[derive(Debug, Clone)]
pub struct DifferenceConstraints {
    upper: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
}

impl DifferenceConstraints {
    pub fn new(upper: Vec<f64>) -> Self {
        DifferenceConstraints {
            upper,
            edges: Vec::new(),
        }
    }

    /// Adds `x_j − x_k <= w`.
    pub fn add(&mut self, j: usize, k: usize, w: f64) {
        self.edges.push((k, j, w));
    }

    /// Bellman–Ford from the virtual source. `None` when a negative cycle
    /// (deeper than the money tolerance) makes the system infeasible.
    pub fn max_solution(&self) -> Option<Vec<f64>> {
        let n = self.upper.len();
        let mut dist = self.upper.clone();
        for _ in 0..=n {
            let mut changed = false;
            for &(from, to, w) in &self.edges {
                let cand = dist[from] + w;
                if cand < dist[to] - MONEY_TOL * 1e-3 {
                    dist[to] = cand;
                    changed = true;
                }
            }
            if !changed {
                return Some(dist);
            }
        }
        None
    }
}

/// Componentwise-maximal prices for a fixed allocation subject to individual
/// rationality (`p_j <= v_j(m_j)`) and envy-freeness
/// (`p_j − p_k <= v_j(m_j) − v_j(m_k)`). `None` if no prices are envy-free.
pub fn optimal_ef_prices(tables: &[Vec<f64>], allocations: &[usize]) -> Option<Vec<f64>> {
    debug_assert_eq!(tables.len(), allocations.len());
    let own: Vec<f64> = tables.iter().zip(allocations).map(|(t, &m)| t[m]).collect();
    let mut system = DifferenceConstraints::new(own.clone());
    for (j, table) in tables.iter().enumerate() {
        for (k, &mk) in allocations.iter().enumerate() {
            if j != k {
                system.add(j, k, own[j] - table[mk]);
            }
        }
    }
    system.max_solution()
}
