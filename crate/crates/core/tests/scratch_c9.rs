//! Temporary scaling probe; deleted before the suite ships.

use std::time::Instant;

use gfgl::covariance::{kernel_covariance, Kernel};
use gfgl::prox::ProxSettings;
use gfgl::simulate::make_scenario;
use gfgl::solver::fit;
use gfgl::types::{Hyperparameters, Method};

#[test]
#[ignore]
fn probe_cold_dykstra_rate() {
    use gfgl::prox::dykstra_prox;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let s = ProxSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = 45;
    for t_len in [50usize, 100, 200] {
        // Piecewise-constant rows plus noise, like a mid-run ADMM iterate.
        let base: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let shift: Vec<f64> = (0..q)
            .map(|j| if j < 8 { rng.gen_range(0.2..0.5) } else { 0.0 })
            .collect();
        let a = DMatrix::from_fn(t_len, q, |t, j| {
            let level = base[j] + if t >= t_len / 2 { shift[j] } else { 0.0 };
            level + rng.gen_range(-0.05..0.05)
        });
        for lam2 in [2.0, 3.0, 4.0] {
            gfgl::prox::prof::reset();
            let clock = std::time::Instant::now();
            let _z = dykstra_prox(&a, 0.02, lam2, &s).unwrap();
            let (calls, sweeps, alts) = gfgl::prox::prof::snapshot();
            println!(
                "cold T={t_len} lam2 {lam2}: alts {alts} bcd calls {calls} sweeps {sweeps} {:.2}s",
                clock.elapsed().as_secs_f64()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_c9_scaling() {
    let s = ProxSettings::default();
    for t_len in [50usize, 100] {
        let (series, _gt) = make_scenario(10, t_len, 10, &[t_len / 2], 400).unwrap();
        let cov = kernel_covariance(&series, Kernel::Boxcar, 2.0).unwrap();

        let h = Hyperparameters::new(0.2, 20.0, Method::Gfgl);
        gfgl::prox::prof::reset();
        let clock = Instant::now();
        let f = fit(&cov, &h, &s).unwrap();
        let (calls, sweeps, alts) = gfgl::prox::prof::snapshot();
        println!(
            "T={t_len} defaults: {:.2}s iters {} conv {} ({:.1}ms/iter) \
             bcd calls {calls} sweeps {sweeps} dyk alts {alts}",
            clock.elapsed().as_secs_f64(),
            f.iterations,
            f.converged,
            1e3 * clock.elapsed().as_secs_f64() / f.iterations as f64
        );

        let mut h50 = Hyperparameters::new(0.2, 20.0, Method::Gfgl);
        h50.eps_prime = 1e-300;
        h50.eps_dual = 1e-300;
        h50.max_iter = 50;
        gfgl::prox::prof::reset();
        let clock = Instant::now();
        let f = fit(&cov, &h50, &s).unwrap();
        let (calls, sweeps, alts) = gfgl::prox::prof::snapshot();
        println!(
            "T={t_len} fixed 50 iters: {:.2}s ({:.1}ms/iter) \
             bcd calls {calls} sweeps {sweeps} dyk alts {alts}",
            clock.elapsed().as_secs_f64(),
            1e3 * clock.elapsed().as_secs_f64() / f.iterations as f64
        );
    }
}
