//! Monte Carlo oracle: simulate complete counterfactual histories from the
//! generating model and average the per-path payoffs.

use rayon::prelude::*;
use scrcea_core::util::NeumaierSum;
use scrcea_core::{EstimandRequest, EstimandResult, Window};

use crate::error::SimError;
use crate::generate::{subject_rng, Latent};
use crate::payoff::{components, Quantity};
use crate::spec::GeneratorSpec;
use crate::truth::assemble;

const CHUNK: usize = 1 << 16;

/// Means over `n_paths` simulated histories with Monte Carlo standard errors
/// in `se`. The same latent draws are reused for every strategy.
pub fn monte_carlo(
    spec: &GeneratorSpec,
    requests: &[EstimandRequest],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<EstimandResult>, SimError> {
    spec.validate()?;
    if n_paths < 2 {
        return Err(SimError::InvalidRequest("need at least two paths".into()));
    }
    let layouts: Vec<Vec<(&'static str, Quantity)>> = requests
        .iter()
        .map(|r| {
            Window::new(r.window.t0, r.window.t)?;
            components(&r.measure, r.strategy, r.window)
        })
        .collect::<Result<_, _>>()?;
    // Columns: each component, then each headline total.
    let width: usize = layouts.iter().map(|l| l.len() + 1).sum();

    let chunks = n_paths.div_ceil(CHUNK);
    let partial: Vec<(Vec<NeumaierSum>, Vec<NeumaierSum>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = subject_rng(seed, c);
            let mut sum = vec![NeumaierSum::default(); width];
            let mut sq = vec![NeumaierSum::default(); width];
            let m = CHUNK.min(n_paths - c * CHUNK);
            for _ in 0..m {
                let lat = Latent::draw(&mut rng);
                let mut col = 0;
                for (r, lay) in requests.iter().zip(&layouts) {
                    let path = lat.path(spec, r.strategy.age());
                    let mut total = 0.0;
                    for (_, q) in lay {
                        let v = q.path_value(&path, r.window);
                        total += v;
                        sum[col].add(v);
                        sq[col].add(v * v);
                        col += 1;
                    }
                    sum[col].add(total);
                    sq[col].add(total * total);
                    col += 1;
                }
            }
            (sum, sq)
        })
        .collect();

    let n = n_paths as f64;
    let mut mean = vec![0.0; width];
    let mut se = vec![0.0; width];
    for j in 0..width {
        let s: NeumaierSum = partial.iter().map(|(a, _)| a[j].value()).collect();
        let s2: NeumaierSum = partial.iter().map(|(_, b)| b[j].value()).collect();
        let m = s.value() / n;
        let var = ((s2.value() - n * m * m) / (n - 1.0)).max(0.0);
        mean[j] = m;
        se[j] = (var / n).sqrt();
    }

    let mut col = 0;
    Ok(requests
        .iter()
        .zip(&layouts)
        .map(|(r, lay)| {
            let k = lay.len();
            let out = assemble(r, lay, &mean[col..col + k], Some((&se[col..col + k], se[col + k])));
            col += k + 1;
            out
        })
        .collect())
}
