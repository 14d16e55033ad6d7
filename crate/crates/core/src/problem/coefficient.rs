use serde::{Deserialize, Serialize};

/// Spatial coefficient on `[0, L]`: a constant, or a list of contiguous pieces
/// each carrying a polynomial of degree at most 2 in the absolute coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Piecewise { pieces: Vec<PolyPiece> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyPiece {
    pub from: f64,
    pub to: f64,
    /// `[c0, c1, c2]` for `c0 + c1 x + c2 x^2`; shorter lists are zero-padded.
    pub poly: Vec<f64>,
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Constant(0.0)
    }
}

impl From<f64> for Coefficient {
    fn from(v: f64) -> Self {
        Coefficient::Constant(v)
    }
}

fn horner(poly: &[f64], x: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl Coefficient {
    /// Single polynomial over the whole domain.
    pub fn polynomial(length: f64, poly: Vec<f64>) -> Self {
        Coefficient::Piecewise {
            pieces: vec![PolyPiece {
                from: 0.0,
                to: length,
                poly,
            }],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Piecewise { pieces } => {
                let k = pieces.partition_point(|p| p.to < x);
                let piece = &pieces[k.min(pieces.len() - 1)];
                horner(&piece.poly, x)
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Piecewise { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Constant(c) => *c == 0.0,
            Coefficient::Piecewise { pieces } => {
                pieces.iter().all(|p| p.poly.iter().all(|&c| c == 0.0))
            }
        }
    }

    /// Structural check against the domain `[0, length]`.
    pub fn check(&self, length: f64) -> Result<(), String> {
        match self {
            Coefficient::Constant(c) if c.is_finite() => Ok(()),
            Coefficient::Constant(_) => Err("coefficient is not finite".into()),
            Coefficient::Piecewise { pieces } => {
                if pieces.is_empty() {
                    return Err("piecewise coefficient has no pieces".into());
                }
                let tol = 1e-12 * length.max(1.0);
                if pieces[0].from.abs() > tol {
                    return Err("first piece must start at 0".into());
                }
                if (pieces[pieces.len() - 1].to - length).abs() > tol {
                    return Err(format!("last piece must end at the domain length {length}"));
                }
                for w in pieces.windows(2) {
                    if (w[0].to - w[1].from).abs() > tol {
                        return Err(format!("gap between pieces at {}", w[0].to));
                    }
                }
                for p in pieces {
                    if p.to <= p.from {
                        return Err(format!("empty piece [{}, {}]", p.from, p.to));
                    }
                    if p.poly.is_empty() || p.poly.len() > 3 {
                        return Err("pieces carry 1 to 3 polynomial coefficients".into());
                    }
                    if p.poly.iter().any(|c| !c.is_finite()) {
                        return Err("polynomial coefficient is not finite".into());
                    }
                }
                Ok(())
            }
        }
    }

    /// Sample points that resolve the extrema of every piece.
    fn critical_points(&self, length: f64) -> Vec<f64> {
        let mut xs: Vec<f64> = (0..=1024).map(|k| length * k as f64 / 1024.0).collect();
        if let Coefficient::Piecewise { pieces } = self {
            for p in pieces {
                xs.push(p.from);
                xs.push(p.to);
                if p.poly.len() == 3 && p.poly[2] != 0.0 {
                    let v = -p.poly[1] / (2.0 * p.poly[2]);
                    if v > p.from && v < p.to {
                        xs.push(v);
                    }
                }
            }
        }
        xs
    }

    pub fn min_on(&self, length: f64) -> f64 {
        self.critical_points(length)
            .into_iter()
            .map(|x| self.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_on(&self, length: f64) -> f64 {
        self.critical_points(length)
            .into_iter()
            .map(|x| self.eval(x).abs())
            .fold(0.0, f64::max)
    }

    /// Sampled difference-quotient bound, including one-sided limits at the
    /// piece breakpoints so jumps show up as huge quotients.
    pub fn lipschitz_estimate(&self, length: f64) -> f64 {
        let samples = 4096;
        let h = length / samples as f64;
        let mut best = 0.0f64;
        for k in 0..samples {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            best = best.max((self.eval(b) - self.eval(a)).abs() / h);
        }
        if let Coefficient::Piecewise { pieces } = self {
            let delta = 1e-9 * length;
            for w in pieces.windows(2) {
                let left = horner(&w[0].poly, w[0].to);
                let right = horner(&w[1].poly, w[1].from);
                best = best.max((right - left).abs() / delta);
            }
        }
        best
    }
}
