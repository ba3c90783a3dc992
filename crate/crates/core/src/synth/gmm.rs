use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// `ln w_k + ln N(x | mu_k, diag(var_k))` for every component.
    fn component_log_densities(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for ((w, mu), var) in self.weights.iter().zip(&self.means).zip(&self.variances) {
            let mut lp = w.ln();
            for ((xi, m), v) in x.iter().zip(mu).zip(var) {
                let d = xi - m;
                lp -= 0.5 * (LN_2PI + v.ln() + d * d / v);
            }
            out.push(lp);
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.components());
        self.component_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }

    /// Mean log-likelihood per point.
    pub fn mean_log_likelihood(&self, data: &[&[f64]]) -> f64 {
        data.iter().map(|x| self.log_density(x)).sum::<f64>() / data.len().max(1) as f64
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding for the means; shared global variance; uniform weights.
fn initialize(data: &[&[f64]], k: usize, rng_seed: u64) -> GaussianMixture {
    let mut r = rng::rng(rng_seed);
    let n = data.len();
    let dim = data[0].len();

    let mut means: Vec<Vec<f64>> = vec![data[r.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            r.random_range(0..n)
        };
        let center = data[next].to_vec();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &center));
        }
        means.push(center);
    }

    let mut mean = vec![0.0; dim];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; dim];
    for x in data {
        for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    var.iter_mut().for_each(|v| *v = v.max(VARIANCE_FLOOR));

    GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![var; k],
    }
}

/// One EM iteration in place.
fn em_step(gmm: &mut GaussianMixture, data: &[&[f64]]) {
    let k = gmm.components();
    let dim = gmm.dim();
    let n = data.len();
    let mut resp = vec![0.0; n * k];
    let mut buf = Vec::with_capacity(k);
    for (i, x) in data.iter().enumerate() {
        gmm.component_log_densities(x, &mut buf);
        let lse = log_sum_exp(&buf);
        for (j, lp) in buf.iter().enumerate() {
            resp[i * k + j] = (lp - lse).exp();
        }
    }
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
        if nk <= f64::MIN_POSITIVE {
            // Component lost all support; freeze it with zero weight.
            gmm.weights[j] = 0.0;
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (i, x) in data.iter().enumerate() {
            let r = resp[i * k + j];
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += r * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; dim];
        for (i, x) in data.iter().enumerate() {
            let r = resp[i * k + j];
            for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                *s += r * (v - m) * (v - m);
            }
        }
        var.iter_mut()
            .for_each(|v| *v = (*v / nk).max(VARIANCE_FLOOR));
        gmm.weights[j] = nk / n as f64;
        gmm.means[j] = mean;
        gmm.variances[j] = var;
    }
    let total: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|w| *w /= total);
}

/// EM fit returning the model and the mean log-likelihood after initialization
/// and after every completed iteration.
pub fn fit_gmm_with_trace(
    features: &[&[f64]],
    components: usize,
    em_iters: usize,
    rng_seed: u64,
) -> Result<(GaussianMixture, Vec<f64>)> {
    if components == 0 {
        return Err(Error::InvalidArgument("GMM needs at least one component".into()));
    }
    if features.len() < components {
        return Err(Error::InvalidArgument(format!(
            "{} points cannot support {components} components",
            features.len()
        )));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|x| x.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut gmm = initialize(features, components, rng_seed);
    let mut trace = vec![gmm.mean_log_likelihood(features)];
    for _ in 0..em_iters {
        em_step(&mut gmm, features);
        let ll = gmm.mean_log_likelihood(features);
        let prev = *trace.last().expect("trace seeded");
        trace.push(ll);
        if ll - prev < 1e-6 {
            break;
        }
    }
    Ok((gmm, trace))
}

pub fn fit_gmm(
    features: &[&[f64]],
    components: usize,
    em_iters: usize,
    rng_seed: u64,
) -> Result<GaussianMixture> {
    fit_gmm_with_trace(features, components, em_iters, rng_seed).map(|(g, _)| g)
}

/// Draws `n` points: component by weight, then an axis-aligned Gaussian draw.
pub fn sample_gmm(gmm: &GaussianMixture, n: usize, rng_seed: u64) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    let mut r = rng::rng(rng_seed);
    let pick = WeightedIndex::new(&gmm.weights).expect("mixture weights are valid");
    (0..n)
        .map(|_| {
            let j = pick.sample(&mut r);
            gmm.means[j]
                .iter()
                .zip(&gmm.variances[j])
                .map(|(m, v)| {
                    let z: f64 = r.sample(StandardNormal);
                    m + v.sqrt() * z
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn single_component_is_closed_form() {
        let data = vec![
            vec![1.0, 10.0],
            vec![2.0, 14.0],
            vec![4.0, 9.0],
            vec![5.0, 11.0],
        ];
        let g = fit_gmm(&as_rows(&data), 1, 5, 0).unwrap();
        assert!((g.means[0][0] - 3.0).abs() < 1e-9);
        assert!((g.means[0][1] - 11.0).abs() < 1e-9);
        assert!((g.variances[0][0] - 2.5).abs() < 1e-9);
        assert!((g.variances[0][1] - 3.5).abs() < 1e-9);
        assert!((g.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let rows = as_rows(&data);
        let g0 = fit_gmm(&rows, 3, 0, 4).unwrap();
        assert_eq!(g0, initialize(&rows, 3, 4));
        assert_eq!(fit_gmm_with_trace(&rows, 3, 0, 4).unwrap().1.len(), 1);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let data = vec![vec![1.0]];
        assert!(fit_gmm(&as_rows(&data), 2, 10, 0).is_err());
        assert!(fit_gmm(&as_rows(&data), 0, 10, 0).is_err());
    }

    #[test]
    fn sampling_edge_cases() {
        let g = GaussianMixture {
            weights: vec![1.0],
            means: vec![vec![3.0, -2.0]],
            variances: vec![vec![VARIANCE_FLOOR; 2]],
        };
        assert!(sample_gmm(&g, 0, 1).is_empty());
        let tol = 3.0 * VARIANCE_FLOOR.sqrt();
        for x in sample_gmm(&g, 20, 1) {
            assert!((x[0] - 3.0).abs() <= tol && (x[1] + 2.0).abs() <= tol, "{x:?}");
        }
        assert_eq!(sample_gmm(&g, 5, 9), sample_gmm(&g, 5, 9));
    }

    #[test]
    fn component_frequencies_follow_weights() {
        let g = GaussianMixture {
            weights: vec![0.7, 0.3],
            means: vec![vec![-100.0], vec![100.0]],
            variances: vec![vec![1.0], vec![1.0]],
        };
        let draws = sample_gmm(&g, 10_000, 12);
        let first = draws.iter().filter(|x| x[0] < 0.0).count();
        // Binomial sd = sqrt(10000 * 0.7 * 0.3) ~ 45.8; 150 is above 3 sd.
        assert!((first as i64 - 7000).abs() <= 150, "{first}");
    }

    #[test]
    fn log_sum_exp_handles_empty_support() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }
}
