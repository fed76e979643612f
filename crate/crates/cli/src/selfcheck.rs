//! Fast built-in consistency checks run by `eigcollide selfcheck`.

use nalgebra::DMatrix;

use eigcollide::capacity::{collision_regime, CollisionRegime};
use eigcollide::ensembles::Beta;
use eigcollide::experiments::{oracle_vector_reduction, ExperimentConfig};
use eigcollide::fields::{fbm_covariance, sample_field_exact, CovarianceModel, GridSpec, Hurst, HurstVector};
use eigcollide::geometry::FrameScalar;
use eigcollide::rng::{experiment_id, substream};
use eigcollide::spectral::{eigenprojection_contour, eigenprojection_direct, frobenius, ordered_eigenvalues};

pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

fn oracle(beta: Beta, seed: u64) -> eigcollide::Result<f64> {
    let mut c = ExperimentConfig::new(beta, 2, HurstVector::new(&[0.4])?);
    c.mesh = vec![256];
    c.replicas = 64;
    c.seed = seed;
    Ok(oracle_vector_reduction(&c)?.max_discrepancy)
}

/// Largest z-score of the empirical fBm covariance against the kernel.
fn covariance_z(seed: u64) -> eigcollide::Result<f64> {
    let h = Hurst::new(0.3)?;
    let grid = GridSpec::interval(1.0, 2.0, 5)?;
    let reps = 4000;
    let sample = sample_field_exact(&grid, &CovarianceModel::Fbm(h), seed, reps)?;
    let ts: Vec<f64> = grid.points().into_iter().map(|p| p[0]).collect();
    let mut worst: f64 = 0.0;
    for i in 0..ts.len() {
        for j in i..ts.len() {
            let prods: Vec<f64> = (0..reps).map(|r| sample.replica(r)[i] * sample.replica(r)[j]).collect();
            let (mean, se) = eigcollide::stats::mean_and_stderr(&prods);
            worst = worst.max((mean - fbm_covariance(ts[i], ts[j], h)?).abs() / se);
        }
    }
    Ok(worst)
}

/// Worst contour-vs-direct discrepancy and idempotence error for the top
/// eigenvalue of random 4x4 symmetric matrices.
fn projector(seed: u64) -> eigcollide::Result<(f64, f64)> {
    let mut rng = substream(seed, experiment_id("cli/selfcheck/projector"), 0);
    let (mut diff, mut idem): (f64, f64) = (0.0, 0.0);
    let mut done = 0;
    while done < 100 {
        let g = DMatrix::from_fn(4, 4, |_, _| f64::gaussian(&mut rng));
        let m = f64::into_hermitian(&g + g.transpose());
        let ev = ordered_eigenvalues(&m)?;
        if ev[0] - ev[1] < 0.5 {
            continue;
        }
        let p = eigenprojection_contour(&m, &[0], 128)?;
        diff = diff.max(frobenius(&(&p.matrix - eigenprojection_direct(&m, &[0])?)));
        idem = idem.max(p.idempotence_error()).max((p.trace() - 1.0).abs());
        done += 1;
    }
    Ok((diff, idem))
}

fn decision_table() -> eigcollide::Result<f64> {
    let cases = [
        (Beta::Goe, 0.7, CollisionRegime::NoCollision),
        (Beta::Goe, 0.3, CollisionRegime::Collision),
        (Beta::Gue, 0.25, CollisionRegime::Collision),
        (Beta::Gue, 0.45, CollisionRegime::NoCollision),
        (Beta::Goe, 0.5, CollisionRegime::Critical),
    ];
    let mut wrong = 0;
    for (beta, h, want) in cases {
        if collision_regime(beta, &HurstVector::new(&[h])?) != want {
            wrong += 1;
        }
    }
    Ok(wrong as f64)
}

pub fn run(seed: u64) -> Vec<Check> {
    let fail = |_| f64::INFINITY;
    let (diff, idem) = projector(seed).unwrap_or((f64::INFINITY, f64::INFINITY));
    vec![
        Check { name: "oracle gap d=2 beta=1", value: oracle(Beta::Goe, seed).unwrap_or_else(fail), limit: 1e-10 },
        Check { name: "oracle gap d=2 beta=2", value: oracle(Beta::Gue, seed).unwrap_or_else(fail), limit: 1e-10 },
        Check { name: "fBm covariance max z", value: covariance_z(seed).unwrap_or_else(fail), limit: 4.5 },
        Check { name: "contour vs direct projector", value: diff, limit: 1e-8 },
        Check { name: "projector idempotence/trace", value: idem, limit: 1e-6 },
        Check { name: "regime table mismatches", value: decision_table().unwrap_or_else(fail), limit: 0.0 },
    ]
}

/// Prints the table and reports whether every check passed.
pub fn print(checks: &[Check]) -> bool {
    println!("{:<32} {:>12} {:>12}  result", "check", "value", "limit");
    for c in checks {
        println!("{:<32} {:>12.3e} {:>12.3e}  {}", c.name, c.value, c.limit, if c.passed() { "PASS" } else { "FAIL" });
    }
    checks.iter().all(Check::passed)
}
