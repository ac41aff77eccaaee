//! Rolling, exponential and Kalman smoothing of a noisy constant.

use dori::filters::{ExponentialAverage, Kalman1D, RollingAverage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.5)?;
    let mut rolling = RollingAverage::new(8)?;
    let mut exp = ExponentialAverage::new(0.2)?;
    let mut kalman = Kalman1D::new(1e-4, 0.25)?;
    println!("step   raw      rolling  exp      kalman   gain");
    for step in 0..30 {
        let z = 10.0 + noise.sample(&mut rng);
        let (r, e, k) = (rolling.update(z), exp.update(z), kalman.update(z));
        if step % 3 == 0 {
            println!("{step:>4}  {z:7.3}  {r:7.3}  {e:7.3}  {k:7.3}  {:.3}", kalman.gain());
        }
    }
    Ok(())
}
