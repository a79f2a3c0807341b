//! Reference regularisation weights for clean/noisy patch pairs, found by
//! golden-section maximisation of SSIM over the admissible μ range.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fidelity::FidelityKind;
use crate::image::{reflect_extend, Image, Patch};
use crate::metrics::{ssim, SsimConfig};
use crate::nn::infer::{REGRESSOR_PATCH, WINDOW_MARGINS};
use crate::solver::{solve_scalar, MuMap, SolverConfig, MU_MAX, MU_MIN};

/// `1/φ`.
pub const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub lo: f64,
    pub hi: f64,
    /// Stop once the bracket is narrower than this.
    pub bracket_tol: f64,
    /// Maximum number of interior evaluations.
    pub budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lo: MU_MIN,
            hi: MU_MAX,
            bracket_tol: 0.5,
            budget: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mu: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    /// Every evaluation in call order; the two endpoints come first.
    pub evaluations: Vec<Evaluation>,
    /// Bracket `[a, b]` after each interior evaluation, starting with the initial one.
    pub brackets: Vec<(f64, f64)>,
}

impl SearchTrace {
    /// Best evaluation; ties go to the smaller μ.
    pub fn best(&self) -> Option<Evaluation> {
        self.evaluations.iter().copied().reduce(|best, e| {
            if e.value > best.value || (e.value == best.value && e.mu < best.mu) {
                e
            } else {
                best
            }
        })
    }
}

/// Maximises `f` on `[cfg.lo, cfg.hi]`, assuming unimodality.
///
/// Both endpoints are evaluated, then golden-section reduction runs until the
/// bracket is narrower than `bracket_tol` or `budget` interior evaluations
/// have been spent. The best evaluated point is returned, not the bracket
/// midpoint.
pub fn golden_section_max<F>(mut f: F, cfg: &SearchConfig) -> Result<(Evaluation, SearchTrace)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(cfg.lo < cfg.hi) || cfg.budget < 2 || !(cfg.bracket_tol > 0.0) {
        return Err(Error::Argument(format!(
            "invalid golden-section setup {cfg:?}"
        )));
    }
    let mut trace = SearchTrace::default();
    let mut eval = |mu: f64, trace: &mut SearchTrace| -> Result<f64> {
        let value = f(mu)?;
        trace.evaluations.push(Evaluation { mu, value });
        Ok(value)
    };
    eval(cfg.lo, &mut trace)?;
    eval(cfg.hi, &mut trace)?;

    let (mut a, mut b) = (cfg.lo, cfg.hi);
    trace.brackets.push((a, b));
    let mut c = b - INV_GOLDEN * (b - a);
    let mut d = a + INV_GOLDEN * (b - a);
    let mut fc = eval(c, &mut trace)?;
    let mut fd = eval(d, &mut trace)?;
    let mut spent = 2;

    while b - a >= cfg.bracket_tol && spent < cfg.budget {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLDEN * (b - a);
            fc = eval(c, &mut trace)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLDEN * (b - a);
            fd = eval(d, &mut trace)?;
        }
        spent += 1;
        trace.brackets.push((a, b));
    }
    let best = trace.best().expect("at least four evaluations");
    Ok((best, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelResult {
    pub mu: f64,
    pub ssim_at_mu: f64,
    pub solver_calls: usize,
    pub trace: SearchTrace,
}

/// SSIM between `clean` and the solution of the scalar-μ problem for `noisy`.
pub fn ssim_at(
    clean: &Image,
    noisy: &Image,
    mu: f64,
    kind: FidelityKind,
    cfg: &SolverConfig,
) -> Result<f64> {
    let (x, _) = solve_scalar(noisy, mu, kind, cfg).map_err(|e| Error::LabelSolve {
        mu,
        source: Box::new(e),
    })?;
    ssim(clean, &x, &SsimConfig::default())
}

pub fn optimal_mu(
    clean: &Patch,
    noisy: &Patch,
    kind: FidelityKind,
    cfg: &SolverConfig,
) -> Result<LabelResult> {
    optimal_mu_with(clean, noisy, kind, cfg, &SearchConfig::default())
}

pub fn optimal_mu_with(
    clean: &Patch,
    noisy: &Patch,
    kind: FidelityKind,
    cfg: &SolverConfig,
    search: &SearchConfig,
) -> Result<LabelResult> {
    if clean.size != noisy.size {
        return Err(Error::Argument(format!(
            "clean patch is {0}x{0} but noisy patch is {1}x{1}",
            clean.size, noisy.size
        )));
    }
    optimal_mu_image(&clean.to_image(), &noisy.to_image(), kind, cfg, search)
}

/// Same search on arbitrary equally-shaped images.
pub fn optimal_mu_image(
    clean: &Image,
    noisy: &Image,
    kind: FidelityKind,
    cfg: &SolverConfig,
    search: &SearchConfig,
) -> Result<LabelResult> {
    clean.check_same_shape(noisy, "noisy patch")?;
    if kind == FidelityKind::Poisson && noisy.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("Poisson patch has negative values".into()));
    }
    let (best, trace) = golden_section_max(|mu| ssim_at(clean, noisy, mu, kind, cfg), search)?;
    Ok(LabelResult {
        mu: best.mu,
        ssim_at_mu: best.value,
        solver_calls: trace.evaluations.len(),
        trace,
    })
}

/// Oracle μ map: the golden-section label of the 32×32 window centred on
/// each grid pixel, with grid pixels every `stride` rows and columns (plus the
/// last row and column) and bilinear interpolation in between. `stride = 1`
/// labels every pixel.
pub fn oracle_mu_map(
    clean: &Image,
    noisy: &Image,
    kind: FidelityKind,
    cfg: &SolverConfig,
    search: &SearchConfig,
    stride: usize,
) -> Result<MuMap> {
    clean.check_same_shape(noisy, "noisy image")?;
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    let (w, h) = (clean.width(), clean.height());
    let axis = |n: usize| {
        let mut v: Vec<usize> = (0..n).step_by(stride).collect();
        if *v.last().unwrap() != n - 1 {
            v.push(n - 1);
        }
        v
    };
    let (rows, cols) = (axis(h), axis(w));
    let clean_pad = reflect_extend(clean, WINDOW_MARGINS);
    let noisy_pad = reflect_extend(noisy, WINDOW_MARGINS);
    let size = REGRESSOR_PATCH;
    let centres: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    let labels: Vec<f64> = centres
        .par_iter()
        .map(|&(r, c)| {
            let cp = clean_pad.crop(r, c, size, size)?;
            let np = noisy_pad.crop(r, c, size, size)?;
            optimal_mu_image(&cp, &np, kind, cfg, search).map(|l| l.mu)
        })
        .collect::<Result<_>>()?;

    let bracket = |grid: &[usize], p: usize| -> (usize, f64) {
        let j = grid
            .partition_point(|&g| g <= p)
            .saturating_sub(1)
            .min(grid.len().saturating_sub(2));
        if grid.len() == 1 {
            return (0, 0.0);
        }
        let (a, b) = (grid[j], grid[j + 1]);
        (j, (p - a) as f64 / (b - a) as f64)
    };
    let at = |i: usize, j: usize| labels[i * cols.len() + j];
    let map = Image::from_fn(w, h, |r, c| {
        let (i, fy) = bracket(&rows, r);
        let (j, fx) = bracket(&cols, c);
        let i1 = (i + 1).min(rows.len() - 1);
        let j1 = (j + 1).min(cols.len() - 1);
        let top = at(i, j) * (1.0 - fx) + at(i, j1) * fx;
        let bottom = at(i1, j) * (1.0 - fx) + at(i1, j1) * fx;
        top * (1.0 - fy) + bottom * fy
    });
    Ok(MuMap::from_clamped(map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_map_on_clean_flat_image_is_constant() {
        let img = Image::filled(20, 20, 0.4);
        let map = oracle_mu_map(
            &img,
            &img,
            FidelityKind::Gaussian,
            &SolverConfig::default(),
            &SearchConfig::default(),
            7,
        )
        .unwrap();
        let first = map.as_slice()[0];
        assert!(map.as_slice().iter().all(|&v| v == first));
    }

    #[test]
    fn finds_known_quadratic_maximum() {
        let (best, trace) = golden_section_max(
            |mu| Ok(-(mu - 50.0) * (mu - 50.0)),
            &SearchConfig::default(),
        )
        .unwrap();
        assert!((best.mu - 50.0).abs() <= 0.5, "mu {}", best.mu);
        assert!(trace.evaluations.len() <= 2 + 30);
    }

    #[test]
    fn bracket_shrinks_by_golden_ratio() {
        let (_, trace) =
            golden_section_max(|mu| Ok(-(mu - 123.0f64).abs()), &SearchConfig::default()).unwrap();
        for w in trace.brackets.windows(2) {
            let ratio = (w[1].1 - w[1].0) / (w[0].1 - w[0].0);
            assert!((ratio - INV_GOLDEN).abs() < 1e-9, "ratio {ratio}");
        }
        let (a, b) = *trace.brackets.last().unwrap();
        assert!(b - a < 0.5);
    }

    #[test]
    fn budget_caps_evaluations() {
        let cfg = SearchConfig {
            bracket_tol: 1e-12,
            budget: 10,
            ..SearchConfig::default()
        };
        let (_, trace) = golden_section_max(|mu| Ok(-mu), &cfg).unwrap();
        assert_eq!(trace.evaluations.len(), 12);
    }

    #[test]
    fn monotone_objective_returns_endpoint() {
        let (best, _) = golden_section_max(Ok, &SearchConfig::default()).unwrap();
        assert_eq!(best.mu, MU_MAX);
        let (best, _) = golden_section_max(|mu| Ok(-mu), &SearchConfig::default()).unwrap();
        assert_eq!(best.mu, MU_MIN);
    }

    #[test]
    fn ties_prefer_smaller_mu() {
        let (best, _) = golden_section_max(|_| Ok(1.0), &SearchConfig::default()).unwrap();
        assert_eq!(best.mu, MU_MIN);
    }

    #[test]
    fn errors_carry_the_failing_mu() {
        let err = golden_section_max(
            |mu| {
                if mu > 100.0 {
                    Err(Error::LabelSolve {
                        mu,
                        source: Box::new(Error::Argument("boom".into())),
                    })
                } else {
                    Ok(mu)
                }
            },
            &SearchConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LabelSolve { mu, .. } if mu == MU_MAX));
    }

    #[test]
    fn clean_patch_prefers_large_mu() {
        let clean = Image::from_fn(32, 32, |r, c| {
            0.5 + 0.3 * ((r as f64 * 0.7).sin() * (c as f64 * 0.45).cos())
        });
        let cfg = SolverConfig::default();
        let res = optimal_mu_image(
            &clean,
            &clean,
            FidelityKind::Gaussian,
            &cfg,
            &SearchConfig::default(),
        )
        .unwrap();
        let lo = ssim_at(&clean, &clean, MU_MIN, FidelityKind::Gaussian, &cfg).unwrap();
        let hi = ssim_at(&clean, &clean, MU_MAX, FidelityKind::Gaussian, &cfg).unwrap();
        assert!(res.ssim_at_mu >= lo && res.ssim_at_mu >= hi);
        assert!(res.mu >= 0.5 * (MU_MIN + MU_MAX), "mu {}", res.mu);
        let again = ssim_at(&clean, &clean, res.mu, FidelityKind::Gaussian, &cfg).unwrap();
        assert!((again - res.ssim_at_mu).abs() < 1e-12);
    }
}
