//! Sources of randomness for factor bodies.
//!
//! Sampling uses counter-based streams: every `(root seed, purpose, counter)`
//! triple maps to its own generator, so adding a factor never shifts the draws
//! seen by another factor. Exact distributions are obtained by driving the
//! same code with [`enumerate_outcomes`], which walks every choice sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::EvalError;

/// Draws requested by the random primitives. Parameters are validated by the
/// evaluator before a call reaches an implementation.
pub trait Chooser {
    fn bernoulli(&mut self, p: f64) -> Result<bool, EvalError>;
    fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64, EvalError>;
    fn uniform_real(&mut self, lo: f64, hi: f64) -> Result<f64, EvalError>;
    fn categorical(&mut self, weights: &[f64]) -> Result<usize, EvalError>;
}

/// Hands out the chooser for one named purpose at one counter value.
pub trait RandomSource {
    fn stream(&mut self, purpose: &str, counter: u64) -> &mut dyn Chooser;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream `(root, purpose, counter)`.
pub fn derive_seed(root: u64, purpose: &str, counter: u64) -> u64 {
    splitmix64(splitmix64(root) ^ splitmix64(fnv1a(purpose.as_bytes())).rotate_left(17) ^ splitmix64(counter).rotate_left(41))
}

/// A seeded chooser backed by ChaCha8.
pub struct StreamChooser {
    rng: ChaCha8Rng,
}

impl StreamChooser {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

impl Chooser for StreamChooser {
    fn bernoulli(&mut self, p: f64) -> Result<bool, EvalError> {
        Ok(self.rng.gen::<f64>() < p)
    }

    fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64, EvalError> {
        Ok(self.rng.gen_range(lo..=hi))
    }

    fn uniform_real(&mut self, lo: f64, hi: f64) -> Result<f64, EvalError> {
        let x = lo + (hi - lo) * self.rng.gen::<f64>();
        Ok(x.min(hi))
    }

    fn categorical(&mut self, weights: &[f64]) -> Result<usize, EvalError> {
        let total: f64 = weights.iter().sum();
        let u = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                acc += w;
                last = i;
                if u < acc {
                    return Ok(i);
                }
            }
        }
        Ok(last)
    }
}

/// Root of all streams in one episode.
pub struct EpisodeRng {
    root: u64,
    current: StreamChooser,
}

impl EpisodeRng {
    pub fn new(root: u64) -> Self {
        Self { root, current: StreamChooser::new(root) }
    }

    pub fn root(&self) -> u64 {
        self.root
    }
}

impl RandomSource for EpisodeRng {
    fn stream(&mut self, purpose: &str, counter: u64) -> &mut dyn Chooser {
        self.current = StreamChooser::new(derive_seed(self.root, purpose, counter));
        &mut self.current
    }
}

/// Upper bound on the branching factor of a single enumerated draw.
pub const MAX_BRANCHES: i64 = 1 << 16;

/// A replayable path through a tree of discrete draws.
#[derive(Default)]
pub struct ChoicePath {
    /// Per draw: chosen branch and the probabilities of all branches.
    decisions: Vec<(usize, Vec<f64>)>,
    cursor: usize,
}

impl ChoicePath {
    fn choose(&mut self, probs: Vec<f64>) -> usize {
        if self.cursor < self.decisions.len() {
            let (chosen, recorded) = &self.decisions[self.cursor];
            debug_assert_eq!(recorded.len(), probs.len(), "non-deterministic draw sequence");
            self.cursor += 1;
            return *chosen;
        }
        let first = probs.iter().position(|p| *p > 0.0).unwrap_or(0);
        self.decisions.push((first, probs));
        self.cursor += 1;
        first
    }

    fn probability(&self) -> f64 {
        self.decisions.iter().map(|(c, ps)| ps[*c]).product()
    }

    /// Moves to the next unexplored path; false when the tree is exhausted.
    fn advance(&mut self) -> bool {
        while let Some((chosen, probs)) = self.decisions.pop() {
            if let Some(next) = (chosen + 1..probs.len()).find(|i| probs[*i] > 0.0) {
                self.decisions.push((next, probs));
                return true;
            }
        }
        false
    }
}

impl Chooser for ChoicePath {
    fn bernoulli(&mut self, p: f64) -> Result<bool, EvalError> {
        Ok(self.choose(vec![1.0 - p, p]) == 1)
    }

    fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64, EvalError> {
        let n = i128::from(hi) - i128::from(lo) + 1;
        if n > i128::from(MAX_BRANCHES) {
            return Err(EvalError::NotEnumerable(format!("uniform_int over {n} values")));
        }
        let n = n as usize;
        let i = self.choose(vec![1.0 / n as f64; n]);
        Ok(lo + i as i64)
    }

    fn uniform_real(&mut self, _lo: f64, _hi: f64) -> Result<f64, EvalError> {
        Err(EvalError::NotEnumerable("uniform_real has continuous support".into()))
    }

    fn categorical(&mut self, weights: &[f64]) -> Result<usize, EvalError> {
        let total: f64 = weights.iter().sum();
        Ok(self.choose(weights.iter().map(|w| w / total).collect()))
    }
}

impl RandomSource for ChoicePath {
    fn stream(&mut self, _purpose: &str, _counter: u64) -> &mut dyn Chooser {
        self
    }
}

/// Runs `f` once per choice sequence and returns every outcome with its
/// probability. `f` must be deterministic given the draws it observes.
pub fn enumerate_outcomes<T, E, F>(mut f: F) -> Result<Vec<(T, f64)>, E>
where
    F: FnMut(&mut ChoicePath) -> Result<T, E>,
{
    let mut path = ChoicePath::default();
    let mut out = Vec::new();
    loop {
        path.cursor = 0;
        let value = f(&mut path)?;
        // Draws past the end of this run belong to an abandoned branch.
        path.decisions.truncate(path.cursor);
        out.push((value, path.probability()));
        if !path.advance() {
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_of_purpose_order() {
        let mut a = EpisodeRng::new(7);
        let x1 = a.stream("f1", 0).uniform_int(0, 1_000_000).unwrap();
        let mut b = EpisodeRng::new(7);
        let _ = b.stream("new_factor", 0).uniform_int(0, 1_000_000).unwrap();
        let x2 = b.stream("f1", 0).uniform_int(0, 1_000_000).unwrap();
        assert_eq!(x1, x2);
        assert_ne!(derive_seed(7, "f1", 0), derive_seed(7, "f1", 1));
        assert_ne!(derive_seed(7, "f1", 0), derive_seed(8, "f1", 0));
    }

    #[test]
    fn enumeration_covers_nested_draws() {
        // coin; if heads, roll a fair die of three faces
        let outcomes = enumerate_outcomes(|c: &mut ChoicePath| -> Result<i64, EvalError> {
            if c.bernoulli(0.25)? {
                c.uniform_int(1, 3)
            } else {
                Ok(0)
            }
        })
        .unwrap();
        let mut total = 0.0;
        for (v, p) in &outcomes {
            let expected = if *v == 0 { 0.75 } else { 0.25 / 3.0 };
            assert!((p - expected).abs() < 1e-15, "{v}: {p}");
            total += p;
        }
        assert_eq!(outcomes.len(), 4);
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_branches_are_skipped() {
        let outcomes =
            enumerate_outcomes(|c: &mut ChoicePath| -> Result<usize, EvalError> { c.categorical(&[0.0, 2.0, 0.0, 2.0]) })
                .unwrap();
        assert_eq!(outcomes, vec![(1, 0.5), (3, 0.5)]);
    }

    #[test]
    fn stream_categorical_never_picks_zero_weight() {
        let mut c = StreamChooser::new(3);
        for _ in 0..1000 {
            let i = c.categorical(&[0.0, 1.0, 0.0]).unwrap();
            assert_eq!(i, 1);
        }
    }
}
