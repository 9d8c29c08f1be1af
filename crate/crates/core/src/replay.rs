//! Bounded FIFO transition memory with uniform batch sampling.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::index;
use rand::Rng;

use crate::env::Action;
use crate::error::{Error, Result};

/// `(s_t, a_t, r_t, s_{t+1})`, with states stored as gaze indices into the
/// case at position `case` of the training set. States are re-rendered when
/// sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub case: usize,
    pub state: usize,
    pub action: Action,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
    pushed: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total transitions ever pushed, including evicted ones.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.pushed += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` transitions drawn uniformly: without replacement when the memory
    /// holds at least `n`, with replacement otherwise.
    pub fn sample_batch<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.items.is_empty() {
            return Err(Error::Sampling("replay memory is empty".into()));
        }
        let len = self.items.len();
        if len >= n {
            Ok(index::sample(rng, len, n).into_iter().map(|i| self.items[i]).collect())
        } else {
            Ok((0..n).map(|_| self.items[rng.gen_range(0..len)]).collect())
        }
    }

    /// One transition per row: `case,state,action,reward,next_state`.
    pub fn dump_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["case", "state", "action", "reward", "next_state"])?;
        for t in &self.items {
            out.write_record([
                t.case.to_string(),
                t.state.to_string(),
                format!("{:?}", t.action),
                t.reward.to_string(),
                t.next_state.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: usize) -> Transition {
        Transition {
            case: 0,
            state: i,
            action: Action::Still,
            reward: -4.0,
            next_state: i,
        }
    }

    fn states(m: &ReplayMemory) -> Vec<usize> {
        m.iter().map(|t| t.state).collect()
    }

    #[test]
    fn fifo_eviction() {
        let mut m = ReplayMemory::new(3);
        m.push(t(1));
        assert_eq!(m.len(), 1);
        for i in 2..=4 {
            m.push(t(i));
        }
        assert_eq!(states(&m), vec![2, 3, 4]);
        assert_eq!(m.total_pushed(), 4);
    }

    #[test]
    fn sampling_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ReplayMemory::new(10);
        assert!(matches!(m.sample_batch(1, &mut rng), Err(Error::Sampling(_))));
        m.push(t(7));
        let b = m.sample_batch(64, &mut rng).unwrap();
        assert_eq!(b.len(), 64);
        assert!(b.iter().all(|x| x.state == 7));
        m.push(t(8));
        m.push(t(9));
        let b = m.sample_batch(2, &mut rng).unwrap();
        assert_ne!(b[0].state, b[1].state);
    }

    #[test]
    fn uniform_single_draws() {
        let mut m = ReplayMemory::new(10);
        for i in 0..10 {
            m.push(t(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[m.sample_batch(1, &mut rng).unwrap()[0].state] += 1;
        }
        // binomial(10000, 0.1): sigma = 30
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 5.0 * 30.0, "{counts:?}");
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_transition() {
        let mut m = ReplayMemory::new(5);
        m.push(t(1));
        m.push(t(2));
        let mut buf = Vec::new();
        m.dump_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,Still,-4,1");
    }

    proptest! {
        #[test]
        fn keeps_last_pushes_in_order(cap in 1usize..20, k in 0usize..60) {
            let mut m = ReplayMemory::new(cap);
            for i in 0..k {
                m.push(t(i));
            }
            let want: Vec<usize> = (k.saturating_sub(cap)..k).collect();
            prop_assert_eq!(states(&m), want);
        }

        #[test]
        fn samples_only_stored(cap in 1usize..20, k in 1usize..60, n in 1usize..80, seed: u64) {
            let mut m = ReplayMemory::new(cap);
            for i in 0..k {
                m.push(t(i));
            }
            let stored = states(&m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = m.sample_batch(n, &mut rng).unwrap();
            prop_assert_eq!(batch.len(), n);
            prop_assert!(batch.iter().all(|b| stored.contains(&b.state)));
        }
    }
}
