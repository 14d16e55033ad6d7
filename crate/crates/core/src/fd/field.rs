use super::grid::Grid;
use crate::error::{Error, Result};

/// One grid function per environment state, stored state-major; within a
/// state, nodes are in lexicographic order with axis 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: Grid,
    n_states: usize,
    data: Vec<f64>,
}

impl TensorField {
    pub fn new(grid: Grid, n_states: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * grid.nodes() {
            return Err(Error::Shape(format!(
                "field data has {} values, expected {} states x {} nodes",
                data.len(),
                n_states,
                grid.nodes()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("field contains non-finite values".into()));
        }
        Ok(Self {
            grid,
            n_states,
            data,
        })
    }

    pub fn zeros(grid: Grid, n_states: usize) -> Self {
        let len = n_states * grid.nodes();
        Self {
            grid,
            n_states,
            data: vec![0.0; len],
        }
    }

    /// Level-zero field: one number per state.
    pub fn scalars(grid: &Grid, values: &[f64]) -> Self {
        Self {
            grid: grid.with_dim(0),
            n_states: values.len(),
            data: values.to_vec(),
        }
    }

    /// `weights[i] * prod_m f(x_m)` at every node.
    pub fn product(grid: Grid, weights: &[f64], f: impl Fn(f64) -> f64) -> Self {
        let axis: Vec<f64> = grid.axis().into_iter().map(f).collect();
        let nodes = grid.nodes();
        let mut idx = vec![0; grid.dim()];
        let mut data = Vec::with_capacity(weights.len() * nodes);
        for &w in weights {
            for k in 0..nodes {
                grid.unravel(k, &mut idx);
                data.push(idx.iter().fold(w, |acc, &s| acc * axis[s]));
            }
        }
        Self {
            grid,
            n_states: weights.len(),
            data,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let n = self.grid.nodes();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn at(&self, state: usize, slots: &[usize]) -> f64 {
        self.state(state)[self.grid.ravel(slots)]
    }

    /// Sum over states at every node.
    pub fn state_sum(&self) -> Vec<f64> {
        let n = self.grid.nodes();
        (0..n)
            .map(|k| (0..self.n_states).map(|i| self.data[i * n + k]).sum())
            .collect()
    }

    /// Multilinear interpolation of one state at a point of `[0, L]^dim`.
    pub fn eval(&self, state: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.grid.dim());
        let values = self.state(state);
        let brackets: Vec<(usize, usize, f64)> = x.iter().map(|&xi| self.grid.locate(xi)).collect();
        let dim = brackets.len();
        let mut total = 0.0;
        let mut slots = vec![0; dim];
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            for (m, &(a, b, t)) in brackets.iter().enumerate() {
                if corner >> m & 1 == 1 {
                    slots[m] = b;
                    w *= t;
                } else {
                    slots[m] = a;
                    w *= 1.0 - t;
                }
            }
            if w != 0.0 {
                total += w * values[self.grid.ravel(&slots)];
            }
        }
        total
    }

    /// Values at coordinate-equal slot tuples `(s, s, ..., s)`.
    pub fn diagonal(&self, state: usize) -> Vec<f64> {
        let s = self.grid.slots();
        let dim = self.grid.dim();
        (0..s)
            .map(|k| self.state(state)[self.grid.ravel(&vec![k; dim])])
            .collect()
    }

    pub fn max_abs_diff(&self, other: &TensorField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_interpolation() {
        let g = Grid::new(9, 1.0, 2).unwrap();
        let f = TensorField::product(g, &[2.0], |x| x);
        assert!((f.eval(0, &[0.25, 0.5]) - 2.0 * 0.25 * 0.5).abs() < 1e-3);
        assert!((f.eval(0, &[0.3, 0.7]) - 2.0 * 0.21).abs() < 1e-12);
        assert_eq!(f.diagonal(0).len(), 11);
        let s = TensorField::scalars(f.grid(), &[0.25, 0.75]);
        assert_eq!(s.eval(1, &[]), 0.75);
    }

    #[test]
    fn shape_checked() {
        let g = Grid::new(3, 1.0, 1).unwrap();
        assert!(TensorField::new(g.clone(), 2, vec![0.0; 9]).is_err());
        assert!(TensorField::new(g, 2, vec![0.0; 10]).is_ok());
    }
}
