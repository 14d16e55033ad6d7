use crate::error::{Error, Result};

/// Role of one node position along an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Left,
    Interior,
    /// Left-hand copy of the interface node.
    InterfaceMinus,
    /// Right-hand copy of the interface node.
    InterfacePlus,
    Right,
}

/// Uniform tensor grid on `[0, L]^dim` with `n` interior nodes per axis.
///
/// Each axis has `n + 2` node slots (both faces included). When an interface
/// is declared, its node is stored twice (left and right limits), so the axis
/// has `n + 3` slots. A `dim = 0` grid has a single node.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
    dim: usize,
    interface: Option<usize>,
}

impl Grid {
    pub fn new(n: usize, length: f64, dim: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Shape(format!("grid needs n >= 3, got {n}")));
        }
        if dim > 3 {
            return Err(Error::Unsupported(format!("hierarchy level {dim} (at most 3)")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Shape("grid length must be positive".into()));
        }
        Ok(Self {
            n,
            length,
            dim,
            interface: None,
        })
    }

    /// Grid whose node set contains `location`.
    pub fn with_interface(n: usize, length: f64, dim: usize, location: f64) -> Result<Self> {
        let mut g = Self::new(n, length, dim)?;
        let h = g.h();
        let k = (location / h).round();
        if (k * h - location).abs() > 1e-9 * h {
            return Err(Error::validation(
                "grid",
                format!("interface at {location} is not a grid node for n = {n} (use odd n for L/2)"),
            ));
        }
        let k = k as usize;
        if k < 3 || k + 2 > n {
            return Err(Error::validation("grid", "interface too close to a face for this n"));
        }
        g.interface = Some(k);
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / (self.n + 1) as f64
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Node index of the interface, if any.
    pub fn interface_node(&self) -> Option<usize> {
        self.interface
    }

    /// Same layout in a different dimension.
    pub fn with_dim(&self, dim: usize) -> Self {
        Self {
            dim,
            ..self.clone()
        }
    }

    /// Same axis layout (`n`, length, interface), ignoring dimension.
    pub fn same_axis(&self, other: &Grid) -> bool {
        self.n == other.n && self.length == other.length && self.interface == other.interface
    }

    /// Node slots per axis.
    pub fn slots(&self) -> usize {
        self.n + 2 + usize::from(self.interface.is_some())
    }

    /// Total node count, `slots^dim`.
    pub fn nodes(&self) -> usize {
        self.slots().pow(self.dim as u32)
    }

    pub fn slot_node(&self, s: usize) -> usize {
        match self.interface {
            Some(k) if s > k => s - 1,
            _ => s,
        }
    }

    pub fn slot_x(&self, s: usize) -> f64 {
        let node = self.slot_node(s);
        if node == self.n + 1 {
            self.length
        } else {
            node as f64 * self.h()
        }
    }

    pub fn slot_kind(&self, s: usize) -> SlotKind {
        let last = self.slots() - 1;
        match self.interface {
            _ if s == 0 => SlotKind::Left,
            _ if s == last => SlotKind::Right,
            Some(k) if s == k => SlotKind::InterfaceMinus,
            Some(k) if s == k + 1 => SlotKind::InterfacePlus,
            _ => SlotKind::Interior,
        }
    }

    /// Coordinates of every slot on one axis.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.slots()).map(|s| self.slot_x(s)).collect()
    }

    /// Slot multi-index (axis 0 most significant) of a flat node index.
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        let s = self.slots();
        for m in (0..self.dim).rev() {
            out[m] = idx % s;
            idx /= s;
        }
    }

    pub fn ravel(&self, slots: &[usize]) -> usize {
        let s = self.slots();
        slots.iter().fold(0, |acc, &k| acc * s + k)
    }

    /// Bracketing slots and the weight of the right one for `x` on an axis.
    /// Points at the interface resolve to its left copy.
    pub fn locate(&self, x: f64) -> (usize, usize, f64) {
        let h = self.h();
        let x = x.clamp(0.0, self.length);
        let mut k = ((x / h).floor() as usize).min(self.n);
        let mut w = (x - k as f64 * h) / h;
        if w > 1.0 {
            w = 1.0;
        }
        let shift = |node: usize| match self.interface {
            Some(ki) if node > ki => node + 1,
            _ => node,
        };
        if let Some(ki) = self.interface {
            if k == ki && w == 0.0 {
                return (ki, ki, 0.0);
            }
            if k + 1 == ki && w == 1.0 {
                k = ki;
                w = 0.0;
                return (k, k, w);
            }
            if k == ki {
                // Right of the interface: start from its right copy.
                return (ki + 1, ki + 2, w);
            }
        }
        (shift(k), shift(k + 1), w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_axis() {
        let g = Grid::new(4, 1.0, 2).unwrap();
        assert_eq!(g.slots(), 6);
        assert_eq!(g.nodes(), 36);
        assert!((g.h() - 0.2).abs() < 1e-15);
        assert_eq!(g.slot_x(5), 1.0);
        let mut idx = [0; 2];
        g.unravel(g.ravel(&[2, 3]), &mut idx);
        assert_eq!(idx, [2, 3]);
        assert_eq!(g.locate(0.3).0, 1);
    }

    #[test]
    fn interface_axis() {
        let g = Grid::with_interface(7, 1.0, 1, 0.5).unwrap();
        assert_eq!(g.slots(), 10);
        assert_eq!(g.slot_kind(4), SlotKind::InterfaceMinus);
        assert_eq!(g.slot_kind(5), SlotKind::InterfacePlus);
        assert_eq!(g.slot_x(4), g.slot_x(5));
        assert_eq!(g.slot_x(9), 1.0);
        assert_eq!(g.locate(0.5), (4, 4, 0.0));
        let (a, b, w) = g.locate(0.55);
        assert_eq!((a, b), (5, 6));
        assert!((w - 0.4).abs() < 1e-12);
        assert!(Grid::with_interface(8, 1.0, 1, 0.5).is_err());
    }
}
