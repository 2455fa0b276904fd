//! Fixtures shared by the benchmarks under `benches/`.

use guandan::engine::{deal_hands, Game, RoundState};
use guandan::CardSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Full 27-card hands from `n` seeded deals, four per deal.
pub fn dealt_hands(n: usize, seed: u64) -> Vec<CardSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).flat_map(|_| deal_hands(&mut rng)).collect()
}

/// A round partway through, reached by always playing the first legal action.
pub fn midgame(seed: u64, plays: usize) -> RoundState {
    let mut g = Game::new(seed);
    for _ in 0..plays {
        let c = g.legal_actions()[0];
        g.apply(&c).expect("first legal action applies");
        if !g.results.is_empty() {
            break;
        }
    }
    g.round
}
