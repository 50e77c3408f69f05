//! Probability of a batch outcome under the probit observation model.
//!
//!     cargo run --release --example likelihoods

use prefbatch::numerics::{gauss_hermite, seeded_rng};
use prefbatch::preference::{loglik_chain, loglik_winner, ove_bound, pairs_mc, ranking_to_pairs, winner_to_pairs};

fn main() -> prefbatch::Result<()> {
    let f = [0.3, -0.2, 0.1, 0.8];
    let sigma = 0.3;
    let rule = gauss_hermite(64)?;
    let mut rng = seeded_rng(1);

    println!("latent values {f:?}, noise sd {sigma}");
    println!("\nwinner   quadrature   monte carlo (1e6)   one-vs-each bound");
    for j in 0..f.len() {
        let quad = loglik_winner(&f, j, sigma, &rule).exp();
        let mc = pairs_mc(&f, &winner_to_pairs(j, f.len()), sigma, 1_000_000, &mut rng);
        let ove = ove_bound(&f, &[sigma * sigma / 2.0; 4], j).exp();
        println!(
            "{:>6}   {quad:.5}      {:.5} ± {:.5}   {ove:.5}",
            j + 1,
            mc.probability(),
            mc.std_error()
        );
    }

    let order = [1, 2, 0, 3];
    let chain = loglik_chain(&f, &order, sigma).exp();
    let mc = pairs_mc(&f, &ranking_to_pairs(&order), sigma, 1_000_000, &mut rng);
    println!(
        "\nfull ranking {:?}: {chain:.5} (monte carlo {:.5} ± {:.5})",
        order.map(|i| i + 1),
        mc.probability(),
        mc.std_error()
    );
    Ok(())
}
