//! Standard test networks: rings, stars, complete graphs, and seeded
//! random instances.
//!
//! Every generator returns a validated stochastic matrix in stubborn
//! form and guarantees (or explicitly refuses to guarantee) the two
//! hypotheses the convergence theory rests on: an irreducible interior
//! block and at least one ordinary agent trusting the stubborn one. The
//! random generators are deterministic in their seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::network::{is_irreducible, partition_stubborn, TrustMatrix};
use crate::{Error, Result};

/// How many ordinary agents should trust the stubborn agent in a random
/// instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubbornEdges {
    /// Exactly one — the minimal hypothesis under which the limits
    /// still hold.
    ExactlyOne,
    /// A random non-empty subset.
    AtLeastOne,
}

/// Directed ring: ordinary agents form a single trust cycle, and the
/// agent next to the stubborn one splits its trust, `beta` on the
/// stubborn agent and `1 - beta` on its ring neighbour.
///
/// This is the minimal-hypothesis topology: exactly one ordinary agent
/// has a direct channel to the stubborn opinion, yet the cycle carries
/// it to everyone. Requires `k >= 2` and `beta` in `(0, 1]`; with
/// `k = 2` the lone ordinary agent keeps `1 - beta` on itself.
pub fn ring(k: usize, beta: f64) -> Result<TrustMatrix> {
    check_beta(beta, false)?;
    if k < 2 {
        return Err(Error::Infeasible(
            "a ring needs the stubborn agent plus at least one ordinary agent".into(),
        ));
    }
    let mut t = Matrix::zero(k);
    t.set(0, 0, 1.0);
    if k == 2 {
        t.set(1, 0, beta);
        t.set(1, 1, 1.0 - beta);
    } else {
        // Agent 1 trusts the stubborn agent and agent 2; every other
        // ordinary agent trusts its successor, wrapping back to agent 1.
        t.set(1, 0, beta);
        t.set(1, 2, 1.0 - beta);
        for i in 2..k {
            t.set(i, if i + 1 < k { i + 1 } else { 1 }, 1.0);
        }
    }
    finish(t)
}

/// Star: every ordinary agent trusts the stubborn agent with `beta` and
/// itself with the remainder.
///
/// The interior block is diagonal, hence reducible whenever there are
/// two or more ordinary agents; such requests are refused unless
/// `allow_reducible` is set, because the coverage and convergence
/// guarantees assume an irreducible interior. With `k = 2` the single
/// self-loop is irreducible and any `beta` works.
pub fn star(k: usize, beta: f64, allow_reducible: bool) -> Result<TrustMatrix> {
    check_beta(beta, false)?;
    if k < 2 {
        return Err(Error::Infeasible(
            "a star needs the stubborn agent plus at least one ordinary agent".into(),
        ));
    }
    let mut t = Matrix::zero(k);
    t.set(0, 0, 1.0);
    for i in 1..k {
        t.set(i, 0, beta);
        t.set(i, i, 1.0 - beta);
    }
    let t = finish(t)?;
    if k > 2 && !allow_reducible {
        return Err(Error::Infeasible(format!(
            "a star with {} ordinary agents has a diagonal (reducible) interior \
             block; pass allow_reducible to build it anyway",
            k - 1
        )));
    }
    Ok(t)
}

/// Complete network: every ordinary agent trusts the stubborn agent with
/// `beta` and spreads `1 - beta` evenly across all other ordinary agents.
///
/// Requires `k >= 3` and `beta < 1`, except for the two-agent case with
/// `beta = 1` (identical to the trivial ring). A lone ordinary agent
/// with `beta < 1` has no peers to carry the remainder, and `beta = 1`
/// with several ordinary agents zeroes the interior block, which is
/// reducible — both are refused.
pub fn complete(k: usize, beta: f64) -> Result<TrustMatrix> {
    check_beta(beta, false)?;
    if k < 2 {
        return Err(Error::Infeasible(
            "a complete network needs the stubborn agent plus at least one \
             ordinary agent"
                .into(),
        ));
    }
    if k == 2 {
        return if beta == 1.0 {
            ring(2, 1.0)
        } else {
            Err(Error::Infeasible(
                "with a single ordinary agent and beta < 1 there is no peer to \
                 receive the remaining trust"
                    .into(),
            ))
        };
    }
    if beta == 1.0 {
        return Err(Error::Infeasible(
            "beta = 1 zeroes the interior block, which is reducible at this size".into(),
        ));
    }
    let mut t = Matrix::zero(k);
    t.set(0, 0, 1.0);
    let peer_weight = (1.0 - beta) / (k - 2) as f64;
    for i in 1..k {
        t.set(i, 0, beta);
        for j in 1..k {
            if j != i {
                t.set(i, j, peer_weight);
            }
        }
    }
    finish(t)
}

/// Random strongly connected instance: ordinary agents are wired as a
/// random cycle plus random extra edges, weights are random, and the
/// stubborn agent receives trust `beta` from a subset of agents chosen
/// per `edges`.
///
/// Requires `beta` in `(0, 1)` when there are two or more ordinary
/// agents, so rows that trust the stubborn agent keep strictly positive
/// mass on their cycle edges (this is what makes the irreducibility
/// guarantee unconditional). Deterministic in `seed`.
pub fn random_irreducible(
    k: usize,
    beta: f64,
    seed: u64,
    edges: StubbornEdges,
) -> Result<TrustMatrix> {
    if k < 2 {
        return Err(Error::Infeasible(
            "a network needs the stubborn agent plus at least one ordinary agent".into(),
        ));
    }
    let m = k - 1;
    check_beta(beta, m >= 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Random cycle through all ordinary agents keeps the interior
    // strongly connected whatever else happens.
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut support = vec![vec![false; m]; m];
    if m == 1 {
        support[0][0] = true;
    } else {
        for w in 0..m {
            support[order[w]][order[(w + 1) % m]] = true;
        }
        // Sprinkle extra edges for variety.
        for i in 0..m {
            for j in 0..m {
                if i != j && !support[i][j] && rng.random::<f64>() < 0.3 {
                    support[i][j] = true;
                }
            }
        }
    }

    // Choose who trusts the stubborn agent.
    let mut trusts_stubborn = vec![false; m];
    match edges {
        StubbornEdges::ExactlyOne => {
            trusts_stubborn[rng.random_range(0..m)] = true;
        }
        StubbornEdges::AtLeastOne => {
            for flag in trusts_stubborn.iter_mut() {
                *flag = rng.random::<f64>() < 0.5;
            }
            if !trusts_stubborn.iter().any(|&f| f) {
                trusts_stubborn[rng.random_range(0..m)] = true;
            }
        }
    }

    // Random positive weights on the support, row-normalized to the
    // mass left after the stubborn edge.
    let mut t = Matrix::zero(k);
    t.set(0, 0, 1.0);
    for i in 0..m {
        let stub = if trusts_stubborn[i] { beta } else { 0.0 };
        let raw: Vec<f64> = (0..m)
            .map(|j| {
                if support[i][j] {
                    rng.random_range(0.5..1.5)
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for (j, &w) in raw.iter().enumerate() {
            if w > 0.0 {
                t.set(i + 1, j + 1, w / total * (1.0 - stub));
            }
        }
        t.set(i + 1, 0, stub);
    }

    let t = finish(t)?;
    debug_assert!(is_irreducible(partition_stubborn(&t).expect("stubborn form").interior()));
    Ok(t)
}

/// Random irreducible sub-stochastic matrix with at least one deficient
/// row: the raw material of the spectral-radius bound. About half the
/// rows sum to exactly 1, the rest to random values in `[0.5, 0.95]`,
/// with row 0 always deficient. Deterministic in `seed`.
pub fn random_substochastic(size: usize, seed: u64) -> Matrix {
    assert!(size >= 1, "matrix must have at least one row");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if size == 1 {
        let mut a = Matrix::zero(1);
        a.set(0, 0, rng.random_range(0.1..0.95));
        return a;
    }

    // Cycle for strong connectivity, then extras.
    let mut order: Vec<usize> = (0..size).collect();
    for i in (1..size).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut support = vec![vec![false; size]; size];
    for w in 0..size {
        support[order[w]][order[(w + 1) % size]] = true;
    }
    for i in 0..size {
        for j in 0..size {
            if i != j && !support[i][j] && rng.random::<f64>() < 0.25 {
                support[i][j] = true;
            }
        }
    }

    let mut a = Matrix::zero(size);
    for i in 0..size {
        let row_sum = if i == 0 || rng.random::<f64>() < 0.5 {
            rng.random_range(0.5..0.95)
        } else {
            1.0
        };
        let raw: Vec<f64> = (0..size)
            .map(|j| {
                if support[i][j] {
                    rng.random_range(0.5..1.5)
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for (j, &w) in raw.iter().enumerate() {
            if w > 0.0 {
                a.set(i, j, w / total * row_sum);
            }
        }
    }
    a
}

fn check_beta(beta: f64, strict_upper: bool) -> Result<()> {
    let ok = if strict_upper {
        beta > 0.0 && beta < 1.0
    } else {
        beta > 0.0 && beta <= 1.0
    };
    if !ok {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            range: if strict_upper { "(0, 1)" } else { "(0, 1]" },
        });
    }
    Ok(())
}

/// Runs the generated weights through full validation.
fn finish(t: Matrix) -> Result<TrustMatrix> {
    let t = TrustMatrix::new(t)?;
    debug_assert!(t.is_stubborn_form());
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{stubborn_influence_exists, StochasticityClass};

    #[test]
    fn ring_three_agents_matches_reference_shape() {
        let t = ring(3, 0.5).unwrap();
        assert_eq!(
            t.weights().to_rows(),
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 1.0, 0.0],
            ]
        );
    }

    #[test]
    fn ring_interiors_are_irreducible_with_minimal_stubborn_edge() {
        for k in 2..=12 {
            let t = ring(k, 0.3).unwrap();
            assert_eq!(t.classification(), StochasticityClass::Stochastic);
            let p = partition_stubborn(&t).unwrap();
            assert!(is_irreducible(p.interior()), "k = {k}");
            assert!(stubborn_influence_exists(&p));
            assert_eq!(
                p.stubborn_trust().iter().filter(|&&r| r > 0.0).count(),
                1,
                "exactly one agent trusts the stubborn agent"
            );
        }
    }

    #[test]
    fn star_is_refused_beyond_one_ordinary_agent_unless_relaxed() {
        assert!(matches!(star(4, 1.0, false).unwrap_err(), Error::Infeasible(_)));
        let t = star(4, 1.0, true).unwrap();
        let p = partition_stubborn(&t).unwrap();
        assert!(!is_irreducible(p.interior()));
        // Everyone trusts only the stubborn agent.
        assert!(p.stubborn_trust().iter().all(|&r| r == 1.0));

        let small = star(2, 0.4, false).unwrap();
        assert!(is_irreducible(partition_stubborn(&small).unwrap().interior()));
    }

    #[test]
    fn complete_network_is_irreducible() {
        for k in 3..=8 {
            let t = complete(k, 0.25).unwrap();
            let p = partition_stubborn(&t).unwrap();
            assert!(is_irreducible(p.interior()), "k = {k}");
            assert!(p.stubborn_trust().iter().all(|&r| r == 0.25));
        }
        assert!(complete(2, 0.5).is_err());
    }

    #[test]
    fn random_instances_are_deterministic_and_valid() {
        for seed in 0..20 {
            let a = random_irreducible(7, 0.4, seed, StubbornEdges::AtLeastOne).unwrap();
            let b = random_irreducible(7, 0.4, seed, StubbornEdges::AtLeastOne).unwrap();
            assert_eq!(a.weights(), b.weights());
            assert_eq!(a.classification(), StochasticityClass::Stochastic);
            let p = partition_stubborn(&a).unwrap();
            assert!(is_irreducible(p.interior()), "seed = {seed}");
            assert!(stubborn_influence_exists(&p));
        }
    }

    #[test]
    fn random_exactly_one_has_single_stubborn_edge() {
        for seed in 0..20 {
            let t = random_irreducible(6, 0.7, seed, StubbornEdges::ExactlyOne).unwrap();
            let p = partition_stubborn(&t).unwrap();
            assert_eq!(p.stubborn_trust().iter().filter(|&&r| r > 0.0).count(), 1);
        }
    }

    #[test]
    fn random_substochastic_has_deficient_row_and_is_irreducible() {
        for seed in 0..20 {
            for size in 1..=10 {
                let a = random_substochastic(size, seed * 31 + size as u64);
                let sums = a.row_sums();
                assert!(
                    sums.iter().any(|&s| s < 1.0 - 1e-9),
                    "seed {seed} size {size}: needs a deficient row"
                );
                assert!(sums.iter().all(|&s| s <= 1.0 + 1e-12));
                assert!(is_irreducible(&a), "seed {seed} size {size}");
            }
        }
    }
}
