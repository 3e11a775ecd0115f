//! Discretize the power-law bath and map it onto a semi-infinite chain.
//!
//!     cargo run --release --example chain_coefficients -- 0.5

use sbzeno::spectral::{chain_map, discretize, SpectralDensity};

fn main() -> sbzeno::Result<()> {
    let s: f64 = std::env::args().nth(1).map(|a| a.parse().expect("exponent s")).unwrap_or(1.0);
    let sd = SpectralDensity::unit_cutoff(s, 0.1)?;
    let bath = discretize(&sd, 2000)?;
    let chain = chain_map(&bath, 21)?;

    let c0_closed = (2.0 * sd.alpha * sd.omega_c.powi(2) / (s + 1.0)).sqrt();
    println!("s = {s}, alpha = {}: c0 = {:.12} (closed form {:.12})", sd.alpha, chain.c0, c0_closed);
    println!("{:>3} {:>14} {:>14}", "n", "eps_n", "t_n");
    for (n, e) in chain.eps.iter().enumerate() {
        match chain.hop.get(n) {
            Some(t) => println!("{n:>3} {e:>14.10} {t:>14.10}"),
            None => println!("{n:>3} {e:>14.10}"),
        }
    }
    // deep in the chain the coefficients settle at ω_c/2 and ω_c/4
    Ok(())
}
