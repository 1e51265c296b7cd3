//! Measurement-error analysis of home-only exposure.
//!
//! Each OD pair contributes a surrogate `Z = H`, a reference `X = HW` and
//! an error `E = Z − X`, weighted by its worker count.

use rayon::prelude::*;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::exposure::{count_of, hw_blend, Group, HwWeights, OdPopulation, Stratum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiasError {
    #[error("empty population")]
    EmptyPopulation,
    #[error("reference exposure has zero variance")]
    DegenerateVariance,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
}

/// One weighted observation of the error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPair {
    /// Surrogate (home-only) exposure.
    pub z: f64,
    /// Reference (home-work) exposure.
    pub x: f64,
    pub weight: f64,
}

impl ErrorPair {
    pub fn error(&self) -> f64 {
        self.z - self.x
    }
}

/// Weighted co-moment accumulator for `(X, E)`.
///
/// Stores means and centred second moments; two accumulators merge exactly
/// as if their observations had been pooled (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub weight: f64,
    pub mean_x: f64,
    pub mean_e: f64,
    pub sxx: f64,
    pub see: f64,
    pub sxe: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64, e: f64, w: f64) {
        if w <= 0.0 {
            return;
        }
        let total = self.weight + w;
        let dx = x - self.mean_x;
        let de = e - self.mean_e;
        self.mean_x += dx * w / total;
        self.mean_e += de * w / total;
        self.sxx += w * dx * (x - self.mean_x);
        self.see += w * de * (e - self.mean_e);
        self.sxe += w * dx * (e - self.mean_e);
        self.weight = total;
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if other.weight <= 0.0 {
            return *self;
        }
        if self.weight <= 0.0 {
            return *other;
        }
        let total = self.weight + other.weight;
        let dx = other.mean_x - self.mean_x;
        let de = other.mean_e - self.mean_e;
        let f = self.weight * other.weight / total;
        Moments {
            weight: total,
            mean_x: self.mean_x + dx * other.weight / total,
            mean_e: self.mean_e + de * other.weight / total,
            sxx: self.sxx + other.sxx + dx * dx * f,
            see: self.see + other.see + de * de * f,
            sxe: self.sxe + other.sxe + dx * de * f,
        }
    }
}

const CHUNK: usize = 4096;

fn merge_tree(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => merge_tree(&parts[..n / 2]).merge(&merge_tree(&parts[n / 2..])),
    }
}

/// Accumulates fixed-size chunks in parallel and merges them pairwise in
/// input order, so the result does not depend on the thread count.
pub fn accumulate(pairs: &[ErrorPair]) -> Moments {
    let parts: Vec<Moments> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut m = Moments::default();
            for p in chunk {
                m.push(p.x, p.error(), p.weight);
            }
            m
        })
        .collect();
    merge_tree(&parts)
}

/// Worker-weighted population moments of the error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMoments {
    /// Var(X)
    pub sigma2: f64,
    /// Cov(X, E)
    pub phi: f64,
    /// Var(E)
    pub omega2: f64,
}

pub fn error_moments(pairs: &[ErrorPair]) -> Result<ErrorMoments, BiasError> {
    if let Some(p) = pairs.iter().find(|p| !(p.weight >= 0.0 && p.weight.is_finite())) {
        return Err(BiasError::Domain(format!("weight {} is not a non-negative number", p.weight)));
    }
    let m = accumulate(pairs);
    if m.weight <= 0.0 {
        return Err(BiasError::EmptyPopulation);
    }
    let mut used = pairs.iter().filter(|p| p.weight > 0.0).map(|p| p.x);
    let first = used.next().expect("positive weight");
    if used.all(|x| x == first) {
        return Err(BiasError::DegenerateVariance);
    }
    Ok(ErrorMoments {
        sigma2: (m.sxx / m.weight).max(0.0),
        phi: m.sxe / m.weight,
        omega2: (m.see / m.weight).max(0.0),
    })
}

/// `(σ² + φ)/(σ² + 2φ + ω²)`: the factor a regression slope on `X` is
/// multiplied by when `Z` is used in its place.
pub fn bias_factor(m: &ErrorMoments) -> Result<f64, BiasError> {
    let denom = m.sigma2 + 2.0 * m.phi + m.omega2;
    if !(denom > 0.0) {
        return Err(BiasError::Domain(format!("denominator {denom} is not positive")));
    }
    Ok((m.sigma2 + m.phi) / denom)
}

/// Rank-sum comparison of sample `a` against sample `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumResult {
    pub n_a: f64,
    pub n_b: f64,
    /// Mann-Whitney U of sample `a`.
    pub u: f64,
    pub z: f64,
    /// Two-sided normal-approximation p-value.
    pub p: f64,
}

/// Wilcoxon rank-sum test with mid-ranks, tie-corrected variance and a 0.5
/// continuity correction.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumResult, BiasError> {
    let wa: Vec<(f64, u64)> = a.iter().map(|v| (*v, 1)).collect();
    let wb: Vec<(f64, u64)> = b.iter().map(|v| (*v, 1)).collect();
    wilcoxon_rank_sum_weighted(&wa, &wb)
}

/// As [`wilcoxon_rank_sum`], with each `(value, count)` standing for
/// `count` identical observations. Rank sums are kept as exact integers
/// (doubled, so mid-ranks stay integral).
pub fn wilcoxon_rank_sum_weighted(a: &[(f64, u64)], b: &[(f64, u64)]) -> Result<RankSumResult, BiasError> {
    if let Some(v) = a.iter().chain(b).find(|(v, _)| v.is_nan()) {
        return Err(BiasError::Domain(format!("sample value {} is not a number", v.0)));
    }
    let n_a: u128 = a.iter().map(|(_, c)| *c as u128).sum();
    let n_b: u128 = b.iter().map(|(_, c)| *c as u128).sum();
    if n_a == 0 || n_b == 0 {
        return Err(BiasError::Contract(format!(
            "both samples need observations (sizes {n_a} and {n_b})"
        )));
    }
    let mut obs: Vec<(f64, u64, u64)> = a
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(v, c)| (*v, *c, 0))
        .chain(b.iter().filter(|(_, c)| *c > 0).map(|(v, c)| (*v, 0, *c)))
        .collect();
    obs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut before: u128 = 0;
    let mut rank_sum2_a: u128 = 0;
    let mut ties: u128 = 0;
    let mut i = 0;
    while i < obs.len() {
        let mut j = i;
        let (mut ca, mut cb) = (0u128, 0u128);
        while j < obs.len() && obs[j].0 == obs[i].0 {
            ca += obs[j].1 as u128;
            cb += obs[j].2 as u128;
            j += 1;
        }
        let t = ca + cb;
        // twice the mid-rank of ranks before+1 ..= before+t
        rank_sum2_a += ca * (2 * before + t + 1);
        ties += t * t * t - t;
        before += t;
        i = j;
    }

    let n = (n_a + n_b) as f64;
    let (fa, fb) = (n_a as f64, n_b as f64);
    let u2 = rank_sum2_a - n_a * (n_a + 1);
    let u = u2 as f64 / 2.0;
    let mu = fa * fb / 2.0;
    let var = fa * fb / 12.0 * ((n + 1.0) - ties as f64 / (n * (n - 1.0)));
    let (z, p) = if var > 0.0 {
        let d = u - mu;
        let z = d.signum() * (d.abs() - 0.5).max(0.0) / var.sqrt();
        (z, erfc(z.abs() / std::f64::consts::SQRT_2))
    } else {
        (0.0, 1.0)
    };
    Ok(RankSumResult {
        n_a: fa,
        n_b: fb,
        u,
        z,
        p: p.clamp(f64::MIN_POSITIVE, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRecord {
    pub year: i32,
    pub group: Group,
    pub stratum: Stratum,
    pub moments: ErrorMoments,
    /// `None` when the denominator vanishes.
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonRecord {
    pub year: i32,
    pub group: Group,
    pub stratum: Stratum,
    pub result: RankSumResult,
}

#[derive(Debug, Clone, Default)]
pub struct BiasTables {
    pub bias: Vec<BiasRecord>,
    pub wilcoxon: Vec<WilcoxonRecord>,
    pub skipped: Vec<(String, String)>,
}

/// Error moments, bias factor and H-vs-HW rank-sum test for every OD group
/// and stratum.
pub fn bias_tables(pop: &OdPopulation, weights: HwWeights, strata: &[Stratum]) -> BiasTables {
    let tasks: Vec<(Group, Option<usize>, Stratum)> = pop
        .groups()
        .into_iter()
        .flat_map(|(g, i)| strata.iter().map(move |s| (g.clone(), i, *s)))
        .collect();
    let results: Vec<_> = tasks
        .par_iter()
        .map(|(_, idx, stratum)| {
            let mut pairs = Vec::new();
            let mut h = Vec::new();
            let mut hw = Vec::new();
            for p in pop.pairs.iter().filter(|p| stratum.admits(p.class)) {
                let c = count_of(p.counts, *idx);
                if c <= 0 {
                    continue;
                }
                let x = hw_blend(p.h, p.w, weights);
                pairs.push(ErrorPair {
                    z: p.h,
                    x,
                    weight: c as f64,
                });
                h.push((p.h, c as u64));
                hw.push((x, c as u64));
            }
            let moments = error_moments(&pairs);
            let rank = if h.is_empty() {
                Err(BiasError::EmptyPopulation)
            } else {
                wilcoxon_rank_sum_weighted(&h, &hw)
            };
            (moments, rank)
        })
        .collect();

    let mut out = BiasTables::default();
    for ((group, _, stratum), (moments, rank)) in tasks.into_iter().zip(results) {
        let ctx = format!("{} {} {}", pop.year, group, stratum);
        match moments {
            Ok(m) => out.bias.push(BiasRecord {
                year: pop.year,
                group: group.clone(),
                stratum,
                moments: m,
                bias: bias_factor(&m).ok(),
            }),
            Err(e) => {
                tracing::warn!(context = %ctx, error = %e, "bias factor skipped");
                out.skipped.push((format!("bias {ctx}"), e.to_string()));
            }
        }
        match rank {
            Ok(result) => out.wilcoxon.push(WilcoxonRecord {
                year: pop.year,
                group,
                stratum,
                result,
            }),
            Err(e) => {
                tracing::warn!(context = %ctx, error = %e, "rank-sum test skipped");
                out.skipped.push((format!("wilcoxon {ctx}"), e.to_string()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn pair(x: f64, e: f64, weight: f64) -> ErrorPair {
        ErrorPair { z: x + e, x, weight }
    }

    #[test]
    fn zero_error_limit() {
        let pairs = [pair(8.0, 0.0, 2.0), pair(10.0, 0.0, 1.0)];
        let m = error_moments(&pairs).unwrap();
        assert_eq!((m.phi, m.omega2), (0.0, 0.0));
        assert_eq!(bias_factor(&m).unwrap(), 1.0);
    }

    #[test]
    fn two_pair_example() {
        let m = error_moments(&[pair(1.0, 0.0, 1.0), pair(3.0, 2.0, 1.0)]).unwrap();
        assert_eq!((m.sigma2, m.phi, m.omega2), (1.0, 1.0, 1.0));
    }

    #[test]
    fn degenerate_and_empty() {
        assert_eq!(error_moments(&[pair(2.0, 1.0, 3.0), pair(2.0, 0.0, 1.0)]), Err(BiasError::DegenerateVariance));
        assert_eq!(error_moments(&[pair(2.0, 1.0, 0.0)]), Err(BiasError::EmptyPopulation));
        assert!(error_moments(&[pair(2.0, 1.0, -1.0)]).is_err());
    }

    #[test]
    fn bias_examples() {
        let m = ErrorMoments {
            sigma2: 4.0,
            phi: 0.0,
            omega2: 1.0,
        };
        assert_eq!(bias_factor(&m).unwrap(), 0.8);
        let bad = ErrorMoments {
            sigma2: 1.0,
            phi: -1.0,
            omega2: 1.0,
        };
        assert!(bias_factor(&bad).is_err());
    }

    #[test]
    fn moments_match_worker_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..20_000);
            let pairs: Vec<ErrorPair> = (0..n)
                .map(|_| {
                    let x = rng.random_range(5.0..15.0);
                    pair(x, 0.1 * x + rng.random_range(-1.0..1.0), rng.random_range(0..6) as f64)
                })
                .collect();
            let m = match error_moments(&pairs) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let mut xs = Vec::new();
            let mut es = Vec::new();
            for p in &pairs {
                for _ in 0..p.weight as usize {
                    xs.push(p.x);
                    es.push(p.error());
                }
            }
            let k = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / k;
            let me = es.iter().sum::<f64>() / k;
            let sxx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / k;
            let see = es.iter().map(|e| (e - me).powi(2)).sum::<f64>() / k;
            let sxe = xs.iter().zip(&es).map(|(x, e)| (x - mx) * (e - me)).sum::<f64>() / k;
            assert!((m.sigma2 - sxx).abs() <= 1e-9 * sxx);
            assert!((m.omega2 - see).abs() <= 1e-9 * see);
            assert!((m.phi - sxe).abs() <= 1e-9 * sxe.abs().max(see));
        }
    }

    #[test]
    fn wilcoxon_identical_samples() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 2.0, 5.0], &[5.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.u, 8.0);
    }

    #[test]
    fn wilcoxon_separated_samples() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        // |0 − 4.5| − 0.5 = 4 over sqrt(9·7/12)
        assert!((r.z + 4.0 / (63.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert!((r.p - 0.0809).abs() < 1e-3);
    }

    #[test]
    fn wilcoxon_contract() {
        assert!(wilcoxon_rank_sum(&[], &[]).is_err());
        assert!(wilcoxon_rank_sum(&[1.0], &[]).is_err());
        assert!(wilcoxon_rank_sum(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn all_tied_gives_p_one() {
        let r = wilcoxon_rank_sum(&[3.0, 3.0], &[3.0]).unwrap();
        assert_eq!((r.z, r.p), (0.0, 1.0));
    }

    #[test]
    fn weighted_matches_expanded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let mk = |rng: &mut ChaCha8Rng| -> Vec<(f64, u64)> {
                (0..rng.random_range(1..15))
                    .map(|_| (rng.random_range(0..8) as f64, rng.random_range(1..5)))
                    .collect()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let ex = |s: &[(f64, u64)]| -> Vec<f64> {
                s.iter().flat_map(|(v, c)| std::iter::repeat_n(*v, *c as usize)).collect()
            };
            let w = wilcoxon_rank_sum_weighted(&a, &b).unwrap();
            let e = wilcoxon_rank_sum(&ex(&a), &ex(&b)).unwrap();
            assert_eq!(w, e);
        }
    }

    #[test]
    fn tiny_p_is_positive() {
        let a: Vec<f64> = (0..5000).map(f64::from).collect();
        let b: Vec<f64> = (10_000..15_000).map(f64::from).collect();
        let r = wilcoxon_rank_sum(&a, &b).unwrap();
        assert!(r.p > 0.0);
    }

    proptest! {
        #[test]
        fn shift_invariance(
            raw in prop::collection::vec((0.0f64..20.0, -2.0f64..2.0, 1u32..5), 3..40),
            c in -50.0f64..50.0,
        ) {
            let pairs: Vec<ErrorPair> = raw.iter().map(|(x, e, w)| pair(*x, *e, *w as f64)).collect();
            let shifted: Vec<ErrorPair> = raw.iter().map(|(x, e, w)| pair(*x + c, *e, *w as f64)).collect();
            let (Ok(a), Ok(b)) = (error_moments(&pairs), error_moments(&shifted)) else {
                return Ok(());
            };
            let (ba, bb) = (bias_factor(&a), bias_factor(&b));
            if let (Ok(ba), Ok(bb)) = (ba, bb) {
                prop_assert!((ba - bb).abs() <= 1e-6 * ba.abs().max(1.0));
            }
        }

        #[test]
        fn cauchy_schwarz(raw in prop::collection::vec((0.0f64..20.0, -2.0f64..2.0, 0u32..5), 2..60)) {
            let pairs: Vec<ErrorPair> = raw.iter().map(|(x, e, w)| pair(*x, *e, *w as f64)).collect();
            if let Ok(m) = error_moments(&pairs) {
                prop_assert!(m.sigma2 >= 0.0 && m.omega2 >= 0.0);
                prop_assert!(m.phi * m.phi <= m.sigma2 * m.omega2 * (1.0 + 1e-9) + 1e-300);
            }
        }

        #[test]
        fn attenuation_without_correlation(s2 in 0.01f64..10.0, w1 in 0.0f64..10.0, dw in 0.0f64..10.0) {
            let b1 = bias_factor(&ErrorMoments { sigma2: s2, phi: 0.0, omega2: w1 }).unwrap();
            let b2 = bias_factor(&ErrorMoments { sigma2: s2, phi: 0.0, omega2: w1 + dw }).unwrap();
            prop_assert!(b1 > 0.0 && b1 <= 1.0);
            prop_assert!(b2 <= b1);
        }

        #[test]
        fn u_statistics_complement(
            a in prop::collection::vec(0u8..10, 1..20),
            b in prop::collection::vec(0u8..10, 1..20),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = wilcoxon_rank_sum(&a, &b).unwrap();
            let ba = wilcoxon_rank_sum(&b, &a).unwrap();
            prop_assert_eq!(ab.u + ba.u, (a.len() * b.len()) as f64);
            prop_assert!(ab.u >= 0.0 && ab.u <= (a.len() * b.len()) as f64);
            prop_assert!(ab.p > 0.0 && ab.p <= 1.0);
        }

        #[test]
        fn chunked_accumulation_is_order_stable(raw in prop::collection::vec((0.0f64..20.0, -2.0f64..2.0, 1u32..5), 1..10_000)) {
            let pairs: Vec<ErrorPair> = raw.iter().map(|(x, e, w)| pair(*x, *e, *w as f64)).collect();
            let a = accumulate(&pairs);
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let b = pool.install(|| accumulate(&pairs));
            prop_assert_eq!(a, b);
        }
    }
}
