//! Finite-state continuous-time Markov jump processes: generator validation,
//! invariant laws, exact path sampling and the transition kernel `exp(Qt)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Jump-rate matrix `Q` of the environment process. `q[i][j]` is the rate of
/// jumping from `i` to `j`; rows sum to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    rates: Vec<f64>,
}

/// Checks the generator contract and wraps the matrix.
pub fn validate_generator(raw: &[Vec<f64>]) -> Result<GeneratorMatrix> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::NotSquare { rows: 0, cols: 0 });
    }
    if let Some(row) = raw.iter().find(|r| r.len() != n) {
        return Err(Error::NotSquare {
            rows: n,
            cols: row.len(),
        });
    }
    for (i, row) in raw.iter().enumerate() {
        let mut scale = 0.0f64;
        for (j, &q) in row.iter().enumerate() {
            if !q.is_finite() {
                return Err(Error::NonFiniteRate { row: i, col: j });
            }
            if i != j && q < 0.0 {
                return Err(Error::NegativeOffDiagonal {
                    row: i,
                    col: j,
                    value: q,
                });
            }
            scale += q.abs();
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > ROW_SUM_TOL * scale.max(1.0) {
            return Err(Error::NonzeroRowSum { row: i, sum });
        }
    }
    Ok(GeneratorMatrix {
        n,
        rates: raw.iter().flatten().copied().collect(),
    })
}

impl GeneratorMatrix {
    pub fn new(raw: &[Vec<f64>]) -> Result<Self> {
        validate_generator(raw)
    }

    /// Chain that never switches.
    pub fn single_state() -> Self {
        Self {
            n: 1,
            rates: vec![0.0],
        }
    }

    /// Two-state chain with rate `rate_01` from 0 to 1 and `rate_10` back.
    pub fn two_state(rate_01: f64, rate_10: f64) -> Result<Self> {
        validate_generator(&[vec![-rate_01, rate_01], vec![rate_10, -rate_10]])
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.n + to]
    }

    /// Total rate of leaving `state`.
    pub fn exit_rate(&self, state: usize) -> f64 {
        (0..self.n)
            .filter(|&j| j != state)
            .map(|j| self.rate(state, j))
            .sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rates.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.rates)
    }

    /// Strong connectivity of the directed graph `i -> j` whenever `q_ij > 0`.
    pub fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.n {
                    let q = if forward {
                        self.rate(i, j)
                    } else {
                        self.rate(j, i)
                    };
                    if j != i && q > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Stationary law `pi` with `pi Q = 0`.
    pub fn invariant_distribution(&self) -> Result<StateDistribution> {
        if !self.is_irreducible() {
            return Err(Error::ReducibleChain);
        }
        if self.n == 1 {
            return Ok(StateDistribution(vec![1.0]));
        }
        // Solve Q^T pi = 0 with the last equation replaced by sum(pi) = 1.
        let mut a = self.to_dmatrix().transpose();
        let mut b = DVector::zeros(self.n);
        for j in 0..self.n {
            a[(self.n - 1, j)] = 1.0;
        }
        b[self.n - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(Error::ReducibleChain)?;
        let mut probs: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(StateDistribution(probs))
    }

    /// `exp(Q t)`; row `i` is the law of `J(t)` given `J(0) = i`.
    pub fn transition_kernel(&self, t: f64) -> DMatrix<f64> {
        assert!(t >= 0.0, "transition kernel needs t >= 0");
        (self.to_dmatrix() * t).exp()
    }

    /// Exact (Gillespie) sample of `J` on `[0, horizon]` started from `start`.
    pub fn sample_path<R: Rng + ?Sized>(&self, start: usize, horizon: f64, rng: &mut R) -> JumpPath {
        assert!(horizon > 0.0, "horizon must be positive");
        assert!(start < self.n, "start state out of range");
        let mut epochs = vec![(0.0, start)];
        let mut t = 0.0;
        let mut state = start;
        loop {
            let out = self.exit_rate(state);
            if out <= 0.0 {
                break;
            }
            let hold = Exp::new(out).expect("positive rate").sample(rng);
            t += hold;
            if t > horizon {
                break;
            }
            let mut pick = rng.random::<f64>() * out;
            let mut next = state;
            for j in (0..self.n).filter(|&j| j != state) {
                let q = self.rate(state, j);
                if q <= 0.0 {
                    continue;
                }
                next = j;
                if pick < q {
                    break;
                }
                pick -= q;
            }
            state = next;
            epochs.push((t, state));
        }
        JumpPath { epochs, horizon }
    }
}

/// Probability vector over environment states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution(Vec<f64>);

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// Point mass on `state`.
    pub fn point(n_states: usize, state: usize) -> Self {
        let mut p = vec![0.0; n_states];
        p[state] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Law at time `t` when started from `self`: `p exp(Qt)`.
    pub fn evolve(&self, generator: &GeneratorMatrix, t: f64) -> Vec<f64> {
        let k = generator.transition_kernel(t);
        (0..self.0.len())
            .map(|j| (0..self.0.len()).map(|i| self.0[i] * k[(i, j)]).sum())
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.0.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Realized trajectory of the environment: `(time, state)` epochs starting at
/// time 0, strictly increasing, consecutive states distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpPath {
    epochs: Vec<(f64, usize)>,
    horizon: f64,
}

impl JumpPath {
    pub fn epochs(&self) -> &[(f64, usize)] {
        &self.epochs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn state_at(&self, t: f64) -> usize {
        let k = self.epochs.partition_point(|&(s, _)| s <= t);
        self.epochs[k.saturating_sub(1)].1
    }

    /// Holding intervals `(start, end, state)` covering `[0, horizon]`.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.epochs.iter().enumerate().map(move |(k, &(t, s))| {
            let end = self.epochs.get(k + 1).map_or(self.horizon, |e| e.0);
            (t, end, s)
        })
    }

    /// Total time spent in each state up to the horizon.
    pub fn occupation_times(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for (a, b, s) in self.intervals() {
            occ[s] += b - a;
        }
        occ
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::RandomStreams;
    use proptest::prelude::*;

    #[test]
    fn validates_examples() {
        let (a, b) = (10.0, 1.0);
        assert!(validate_generator(&[vec![-a, a], vec![b, -b]]).is_ok());
        assert!(validate_generator(&[vec![0.0]]).is_ok());
        assert!(matches!(
            validate_generator(&[vec![-1.0, 2.0], vec![1.0, -1.0]]),
            Err(Error::NonzeroRowSum { row: 0, .. })
        ));
        assert!(matches!(
            validate_generator(&[vec![1.0, -1.0], vec![1.0, -1.0]]),
            Err(Error::NegativeOffDiagonal { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            validate_generator(&[vec![0.0, 0.0]]),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn invariant_distribution_examples() {
        let q = GeneratorMatrix::two_state(10.0, 1.0).unwrap();
        let pi = q.invariant_distribution().unwrap();
        assert!((pi.probs()[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((pi.probs()[1] - 10.0 / 11.0).abs() < 1e-14);

        let pi = GeneratorMatrix::single_state().invariant_distribution().unwrap();
        assert_eq!(pi.probs(), &[1.0]);

        let pi = GeneratorMatrix::two_state(25.0, 75.0)
            .unwrap()
            .invariant_distribution()
            .unwrap();
        assert!((pi.probs()[0] - 0.75).abs() < 1e-14);
        assert!((pi.probs()[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn reducible_chain_rejected() {
        let q = GeneratorMatrix::two_state(1.0, 0.0).unwrap();
        assert!(matches!(q.invariant_distribution(), Err(Error::ReducibleChain)));
        let q = GeneratorMatrix::new(&[
            vec![-1.0, 1.0, 0.0],
            vec![1.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(!q.is_irreducible());
    }

    #[test]
    fn single_state_path_has_one_epoch() {
        let q = GeneratorMatrix::single_state();
        let mut rng = RandomStreams::new(1).rng();
        let path = q.sample_path(0, 5.0, &mut rng);
        assert_eq!(path.epochs(), &[(0.0, 0)]);
    }

    #[test]
    fn holding_times_are_unit_exponential() {
        let q = GeneratorMatrix::two_state(1.0, 1.0).unwrap();
        let mut rng = RandomStreams::new(11).rng();
        let path = q.sample_path(0, 1e4, &mut rng);
        // completed holding intervals only
        let e = path.epochs();
        for state in 0..2 {
            let holds: Vec<f64> = e
                .windows(2)
                .filter(|w| w[0].1 == state)
                .map(|w| w[1].0 - w[0].0)
                .collect();
            let n = holds.len() as f64;
            let mean = holds.iter().sum::<f64>() / n;
            let var = holds.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            assert!((mean - 1.0).abs() < 3.0 * se, "state {state}: {mean} ± {se}");
        }
    }

    #[test]
    fn occupation_matches_invariant_law() {
        // Batch means over 20 independent paths of length 1e4 / 20.
        let q = GeneratorMatrix::two_state(10.0, 1.0).unwrap();
        let pi = q.invariant_distribution().unwrap();
        let streams = RandomStreams::new(5);
        let fracs: Vec<f64> = (0..20)
            .map(|k| {
                let mut rng = streams.split(k).rng();
                let start = pi.sample(&mut rng);
                let path = q.sample_path(start, 500.0, &mut rng);
                path.occupation_times(2)[1] / 500.0
            })
            .collect();
        let n = fracs.len() as f64;
        let mean = fracs.iter().sum::<f64>() / n;
        let var = fracs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 10.0 / 11.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn kernel_examples() {
        let q = GeneratorMatrix::two_state(10.0, 1.0).unwrap();
        let k0 = q.transition_kernel(0.0);
        assert!((k0 - DMatrix::identity(2, 2)).abs().max() < 1e-15);

        // first-order series term h*q_01; the second-order term is O(h^2 * 121)
        let h = 1e-4;
        let k = q.transition_kernel(h);
        assert!((k[(0, 1)] - 1e-3).abs() < 1e-5);

        let sym = GeneratorMatrix::two_state(1.0, 1.0).unwrap();
        let k = sym.transition_kernel(50.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((k[(i, j)] - 0.5).abs() < 1e-12);
            }
        }
    }

    fn generator_strategy() -> impl Strategy<Value = GeneratorMatrix> {
        (1usize..5).prop_flat_map(|n| {
            proptest::collection::vec(0.0f64..5.0, n * n).prop_map(move |mut v| {
                for i in 0..n {
                    let off: f64 = (0..n).filter(|&j| j != i).map(|j| v[i * n + j]).sum();
                    v[i * n + i] = -off;
                }
                let rows: Vec<Vec<f64>> = v.chunks(n).map(|r| r.to_vec()).collect();
                GeneratorMatrix::new(&rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn kernel_semigroup(q in generator_strategy(), t in 0.0f64..2.0, s in 0.0f64..2.0) {
            let lhs = q.transition_kernel(t + s);
            let rhs = q.transition_kernel(t) * q.transition_kernel(s);
            prop_assert!((lhs - rhs).abs().max() < 1e-10);
            let k = q.transition_kernel(t);
            for i in 0..q.n_states() {
                let row_sum: f64 = k.row(i).iter().sum();
                prop_assert!((row_sum - 1.0).abs() < 1e-10);
                prop_assert!(k.row(i).iter().all(|&p| p > -1e-12));
            }
        }

        #[test]
        fn sampled_paths_are_well_formed(q in generator_strategy(), seed in any::<u64>(), horizon in 0.1f64..20.0) {
            let mut rng = RandomStreams::new(seed).rng();
            let path = q.sample_path(0, horizon, &mut rng);
            let e = path.epochs();
            prop_assert_eq!(e[0].0, 0.0);
            for w in e.windows(2) {
                prop_assert!(w[1].0 > w[0].0);
                prop_assert_ne!(w[1].1, w[0].1);
                prop_assert!(q.rate(w[0].1, w[1].1) > 0.0);
            }
            prop_assert!(e.last().unwrap().0 <= horizon);
        }

        #[test]
        fn invariant_law_is_stationary(q in generator_strategy()) {
            if let Ok(pi) = q.invariant_distribution() {
                let p = pi.probs();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..q.n_states() {
                    let flow: f64 = (0..q.n_states()).map(|i| p[i] * q.rate(i, j)).sum();
                    prop_assert!(flow.abs() < 1e-9);
                }
            } else {
                prop_assert!(!q.is_irreducible());
            }
        }
    }
}
