//! Viscous Burgers from a random initial condition with the exponential
//! integrator; prints conserved momentum and decaying energy per snapshot.

use opcurl::datagen::{burgers_etdrk4, BurgersParams};
use opcurl::spectral::{stream_rng, Grf1d};

fn main() -> opcurl::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(1024, |s| s.parse().expect("resolution"));
    let u0 = Grf1d::default().sample(n, &mut stream_rng(7, 0))?;
    let p = BurgersParams {
        t_final: 1.0,
        save_every: 1000,
        ..BurgersParams::default()
    };
    let traj = burgers_etdrk4(&u0, &p)?;
    let dx = p.length / n as f64;
    let m0: f64 = u0.iter().sum::<f64>() * dx;
    println!("N = {n}, nu = {}, dt = {}", p.nu, p.dt);
    println!("{:>5} {:>12} {:>12} {:>10}", "t", "momentum", "energy", "max|u|");
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let m: f64 = u.iter().sum::<f64>() * dx;
        let e: f64 = u.iter().map(|v| v * v).sum::<f64>() * dx / 2.0;
        let peak = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        println!("{t:5.2} {:12.3e} {e:12.5} {peak:10.4}", m - m0);
    }
    Ok(())
}
