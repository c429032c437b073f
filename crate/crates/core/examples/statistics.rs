//! The statistical tests behind every suite.

use gwprune::verify::stats::{binomial_z, chi2_gof, chi2_two_sample, ks_one, ks_two};
use gwprune::Result;
use rand::Rng;

fn main() -> Result<()> {
    let mut rng = gwprune::RngStream::new(1, 1).rng();
    let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = (0..1000).map(|_| rng.random::<f64>().powf(1.2)).collect();
    let r = ks_one(&xs, |x| x.clamp(0.0, 1.0))?;
    println!("KS uniform vs uniform: D={:.4} p={:.4}", r.statistic, r.p_value);
    let r = ks_two(&xs, &ys)?;
    println!("KS two-sample, tilted: D={:.4} p={:.2e}", r.statistic, r.p_value);
    let r = chi2_gof(&[52, 48], &[0.5, 0.5])?;
    println!("chi-square fair coin 52/48: stat={:.4} p={:.6}", r.statistic, r.p_value);
    let r = chi2_two_sample(&[30, 40, 30], &[35, 35, 30])?;
    println!("chi-square two-sample: stat={:.4} df={} p={:.4}", r.statistic, r.df, r.p_value);
    println!("binomial z for 520/1000 at p=0.5: {:.3}", binomial_z(520, 1000, 0.5));
    Ok(())
}
