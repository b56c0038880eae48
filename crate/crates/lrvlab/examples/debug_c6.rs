use lrvlab::selection::{suggested_estimator, PlugInConfig};
use lrvlab::simlab::{generate, MeanFunctionSpec, MeanKind, NoiseModel};
use rayon::prelude::*;

fn stream(master: u64, rep: usize) -> u64 {
    let mut z = master ^ (rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn main() {
    let noise = NoiseModel::tar(0.4, 0.5, true);
    let cfg = PlugInConfig::default();
    for (name, mean) in [
        ("null xi=0", MeanFunctionSpec::with_xi(MeanKind::ExpThreeJumps, 0.0)),
        ("full xi=4", MeanFunctionSpec::with_xi(MeanKind::ExpThreeJumps, 4.0)),
    ] {
        let errs: Vec<f64> = (0..2000)
            .into_par_iter()
            .map(|rep| {
                let x = generate(&noise, &mean, 200, stream(0x06cc, rep)).unwrap();
                (suggested_estimator(&x, &cfg).unwrap().lrv.value - 1.0).powi(2)
            })
            .collect();
        let mse = errs.iter().sum::<f64>() / errs.len() as f64;
        println!("{name}: MSE = {mse:.4}");
    }
    // classical for the >=10x check
    let classical = PlugInConfig { m: 0, apply_rcp: false, ..PlugInConfig::default() };
    for xi in [0.0, 4.0] {
        let mean = MeanFunctionSpec::with_xi(MeanKind::ExpThreeJumps, xi);
        let errs: Vec<f64> = (0..2000)
            .into_par_iter()
            .map(|rep| {
                let x = generate(&noise, &mean, 200, stream(0x06cc, rep)).unwrap();
                (suggested_estimator(&x, &classical).unwrap().lrv.value - 1.0).powi(2)
            })
            .collect();
        println!("classical xi={xi}: MSE = {:.4}", errs.iter().sum::<f64>() / errs.len() as f64);
    }
}
