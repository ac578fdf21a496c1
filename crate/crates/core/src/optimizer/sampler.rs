use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Visits every view once per epoch in a seeded random order.
#[derive(Clone, Debug)]
pub struct ViewSampler {
    n: usize,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl ViewSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            order: Vec::new(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Next view index; panics if constructed with zero views.
    pub fn next_index(&mut self) -> usize {
        assert!(self.n > 0, "sampler has no views");
        if self.pos == self.order.len() {
            self.order = (0..self.n).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_epoch_is_a_permutation() {
        let mut s = ViewSampler::new(7, 3);
        for _ in 0..4 {
            let mut epoch: Vec<usize> = (0..7).map(|_| s.next_index()).collect();
            epoch.sort_unstable();
            assert_eq!(epoch, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn seeded() {
        let a: Vec<usize> = {
            let mut s = ViewSampler::new(9, 11);
            (0..30).map(|_| s.next_index()).collect()
        };
        let mut s = ViewSampler::new(9, 11);
        let b: Vec<usize> = (0..30).map(|_| s.next_index()).collect();
        assert_eq!(a, b);
    }
}
