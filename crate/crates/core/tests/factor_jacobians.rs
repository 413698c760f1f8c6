mod common;

use common::{k, random_config, rel_err, whiten};
use gpslam::graph::numeric_jacobian;

#[test]
fn analytic_jacobians_match_central_differences() {
    let k = k();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (values, factors) = random_config(seed);
        for f in &factors {
            let lin = f.linearize(&values, &k).unwrap();
            let numeric = numeric_jacobian(f, &values, &k, 1e-6).unwrap();
            for ((key, j_white), j_num) in lin.blocks.iter().zip(&numeric) {
                let j_white_num = whiten(f, j_num);
                let e = rel_err(j_white, &j_white_num);
                worst = worst.max(e);
                assert!(e < 1e-5, "seed {seed} {:?} {key:?}: rel err {e:e}", f.kind());
            }
        }
    }
    eprintln!("worst relative Jacobian error {worst:e}");
}
