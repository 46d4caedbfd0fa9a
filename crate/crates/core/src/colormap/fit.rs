use nalgebra::{Matrix3, Vector3};

use super::metrics::{mean_abs_error, ssim, ssim_with_gradient};
use super::{apply_color_map, AffineColorMap, ColorError, Image};

/// Weight of the structural term in [`color_loss`].
pub const DEFAULT_LAMBDA1: f64 = 0.2;

/// `(1 - lambda1) * L1 + lambda1 * (1 - SSIM) / 2`.
pub fn color_loss(gt: &Image, mapped: &Image, lambda1: f64) -> Result<f64, ColorError> {
    check_lambda(lambda1)?;
    let l1 = mean_abs_error(gt, mapped)?;
    if lambda1 == 0.0 {
        return Ok(l1);
    }
    let d_ssim = (1.0 - ssim(gt, mapped)?) / 2.0;
    Ok((1.0 - lambda1) * l1 + lambda1 * d_ssim)
}

fn check_lambda(lambda1: f64) -> Result<(), ColorError> {
    if !(0.0..=1.0).contains(&lambda1) {
        return Err(ColorError::InvalidArgument(format!(
            "lambda1 must lie in [0, 1], got {lambda1}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the loss by less than this.
    pub tolerance: f64,
    /// Initial step of every line search.
    pub step: f64,
    /// Halvings tried before the line search gives up.
    pub max_backtracks: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-7,
            step: 1.0,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorFit {
    pub map: AffineColorMap,
    /// Loss after the least-squares initialization, then after every
    /// accepted refinement step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    /// The source colors did not span an affine basis; `map` is the
    /// minimum-norm least-squares solution and was not refined.
    pub degenerate: bool,
}

impl ColorFit {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history starts non-empty")
    }
}

/// Least-squares fit of `target ~ W src + T` over all pixels, solved on
/// mean-centered colors. When the source colors do not span three
/// dimensions the solution is not unique; the one with the smallest norm
/// over all twelve parameters is returned and the flag is set.
fn least_squares(src: &Image, target: &Image) -> (AffineColorMap, bool) {
    let n = src.pixels().len() as f64;
    let mean = |img: &Image| {
        img.pixels()
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
            / n
    };
    let (ms, mt) = (mean(src), mean(target));
    let mut css = Matrix3::<f64>::zeros();
    let mut cts = Matrix3::<f64>::zeros();
    for (s, t) in src.pixels().iter().zip(target.pixels()) {
        let ds = Vector3::from(*s) - ms;
        let dt = Vector3::from(*t) - mt;
        css += ds * ds.transpose();
        cts += dt * ds.transpose();
    }
    let eig = css.symmetric_eigen();
    // relative to the overall color spread, floored for constant images
    let eps = (css.trace() * 1e-10).max(n * 1e-20);
    let mut pinv = Matrix3::<f64>::zeros();
    let mut null = Vec::new();
    for (i, ev) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(i).into_owned();
        if *ev > eps {
            pinv += u * u.transpose() / *ev;
        } else {
            null.push(u);
        }
    }
    let mut w = cts * pinv;
    if !null.is_empty() {
        // Rows of W may move freely along the null directions u; T follows
        // as mt - W ms. Per row, minimizing |w + U z|^2 + (r - g.z)^2 with
        // g = U^T ms and r = mt_c - w.ms gives z = g r / (1 + |g|^2).
        let g: Vec<f64> = null.iter().map(|u| u.dot(&ms)).collect();
        let g2: f64 = g.iter().map(|v| v * v).sum();
        for c in 0..3 {
            let row = w.row(c).transpose();
            let r = mt[c] - row.dot(&ms);
            let mut shift = Vector3::zeros();
            for (u, gi) in null.iter().zip(&g) {
                shift += u * (gi * r / (1.0 + g2));
            }
            w.set_row(c, &(row + shift).transpose());
        }
    }
    let t = mt - w * ms;
    (AffineColorMap::new(w, t), !null.is_empty())
}

/// Loss of `apply(map, src)` against `target`, and its gradient with
/// respect to the twelve map parameters (row-major `W`, then `T`).
fn loss_and_gradient(
    src: &Image,
    target: &Image,
    map: &AffineColorMap,
    lambda1: f64,
) -> Result<(f64, [f64; 12]), ColorError> {
    let raw: Vec<[f64; 3]> = src.pixels().iter().map(|p| map.map_color(*p)).collect();
    let mapped = Image::from_raw_clamped(
        src.width(),
        src.height(),
        raw.iter().map(|p| p.map(|v| v.clamp(0.0, 1.0))).collect(),
    );
    let n = (raw.len() * 3) as f64;

    let mut l1 = 0.0;
    let mut d_pixel = vec![[0.0; 3]; raw.len()];
    for ((d, m), t) in d_pixel.iter_mut().zip(mapped.pixels()).zip(target.pixels()) {
        for c in 0..3 {
            let diff = m[c] - t[c];
            l1 += diff.abs();
            d[c] = (1.0 - lambda1) * diff.signum() * f64::from(u8::from(diff != 0.0)) / n;
        }
    }
    l1 /= n;

    let mut loss = (1.0 - lambda1) * l1;
    if lambda1 > 0.0 {
        let (s, g) = ssim_with_gradient(target, &mapped)?;
        loss += lambda1 * (1.0 - s) / 2.0;
        for (d, gs) in d_pixel.iter_mut().zip(&g) {
            for c in 0..3 {
                d[c] -= lambda1 / 2.0 * gs[c];
            }
        }
    }

    let mut grad = [0.0; 12];
    for ((d, r), s) in d_pixel.iter().zip(&raw).zip(src.pixels()) {
        for c in 0..3 {
            // clamped outputs do not respond to the parameters
            if !(0.0..=1.0).contains(&r[c]) {
                continue;
            }
            for j in 0..3 {
                grad[c * 3 + j] += d[c] * s[j];
            }
            grad[9 + c] += d[c];
        }
    }
    Ok((loss, grad))
}

/// Fits the map taking `src` closest to `target` under [`color_loss`].
///
/// Starts from the least-squares solution and refines it by gradient
/// descent; each step starts at `opts.step` and halves until the loss
/// decreases, so the loss history never increases. Deterministic.
pub fn fit_color_map(
    src: &Image,
    target: &Image,
    lambda1: f64,
    opts: &FitOptions,
) -> Result<ColorFit, ColorError> {
    check_lambda(lambda1)?;
    src.check_same_dims(target)?;
    if src.pixels().is_empty() {
        return Err(ColorError::InvalidImage("empty image".into()));
    }

    let (init, degenerate) = least_squares(src, target);
    if degenerate {
        tracing::warn!("source colors are degenerate; returning the minimum-norm least-squares map");
        let loss = color_loss(target, &apply_color_map(&init, src), lambda1)?;
        return Ok(ColorFit {
            map: init,
            loss_history: vec![loss],
            iterations: 0,
            degenerate: true,
        });
    }

    let mut params = init.to_params();
    let (mut loss, mut grad) = loss_and_gradient(src, target, &init, lambda1)?;
    let mut history = vec![loss];
    let mut iterations = 0;
    while iterations < opts.max_iterations && loss >= opts.tolerance {
        let gnorm: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm == 0.0 {
            break;
        }
        let mut step = opts.step;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut cand = params;
            for (p, g) in cand.iter_mut().zip(&grad) {
                *p -= step * g;
            }
            let map = AffineColorMap::from_params(&cand);
            let l = color_loss(target, &apply_color_map(&map, src), lambda1)?;
            if l < loss {
                accepted = Some((cand, l));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, new_loss)) = accepted else {
            break;
        };
        iterations += 1;
        let improvement = loss - new_loss;
        params = cand;
        history.push(new_loss);
        (loss, grad) = loss_and_gradient(src, target, &AffineColorMap::from_params(&params), lambda1)?;
        if improvement < opts.tolerance {
            break;
        }
    }

    Ok(ColorFit {
        map: AffineColorMap::from_params(&params),
        loss_history: history,
        iterations,
        degenerate: false,
    })
}

/// Fits every camera against the reference view. The reference gets the
/// identity; the rest are fitted independently and in parallel. Output
/// order follows the input.
pub fn harmonize_multiview(
    images: &[(String, Image)],
    reference_id: &str,
    lambda1: f64,
    opts: &FitOptions,
) -> Result<Vec<(String, ColorFit)>, ColorError> {
    let reference = images
        .iter()
        .find(|(id, _)| id == reference_id)
        .map(|(_, img)| img)
        .ok_or_else(|| ColorError::MissingReference(reference_id.to_string()))?;

    std::thread::scope(|scope| {
        let handles: Vec<_> = images
            .iter()
            .map(|(id, img)| {
                scope.spawn(move || {
                    let fit = if id == reference_id {
                        let loss = color_loss(reference, img, lambda1)?;
                        ColorFit {
                            map: AffineColorMap::identity(),
                            loss_history: vec![loss],
                            iterations: 0,
                            degenerate: false,
                        }
                    } else {
                        fit_color_map(img, reference, lambda1, opts)?
                    };
                    Ok((id.clone(), fit))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fit thread panicked"))
            .collect()
    })
}

/// RGB trace of one pixel across consecutive segments, each rendered
/// through its own color map.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub pixel: (usize, usize),
    pub trace: Vec<[f64; 3]>,
    /// Largest per-channel change across each segment boundary.
    pub boundary_jumps: Vec<f64>,
    pub max_jump: f64,
    pub threshold: f64,
    pub within_threshold: bool,
}

/// Follows `pixel` through every frame of every `(map, frames)` segment and
/// measures the jumps at segment boundaries.
pub fn continuity_report(
    segments: &[(AffineColorMap, Vec<Image>)],
    pixel: (usize, usize),
    threshold: f64,
) -> Result<ContinuityReport, ColorError> {
    let mut trace = Vec::new();
    let mut boundaries = Vec::new();
    for (map, frames) in segments {
        if frames.is_empty() {
            return Err(ColorError::InvalidArgument("segment without frames".into()));
        }
        if !trace.is_empty() {
            boundaries.push(trace.len());
        }
        for f in frames {
            if pixel.0 >= f.width() || pixel.1 >= f.height() {
                return Err(ColorError::InvalidArgument(format!(
                    "pixel {pixel:?} outside {}x{} frame",
                    f.width(),
                    f.height()
                )));
            }
            trace.push(map.map_color(f.get(pixel.0, pixel.1)).map(|v| v.clamp(0.0, 1.0)));
        }
    }
    let boundary_jumps: Vec<f64> = boundaries
        .iter()
        .map(|&i| {
            (0..3)
                .map(|c| (trace[i][c] - trace[i - 1][c]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let max_jump = boundary_jumps.iter().copied().fold(0.0, f64::max);
    Ok(ContinuityReport {
        pixel,
        trace,
        boundary_jumps,
        max_jump,
        threshold,
        within_threshold: max_jump <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Channels in [0.4, 0.55] stay inside [0, 1] under any W within 0.2 of
    /// the identity and |T| <= 0.1.
    fn headroom_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            [
                0.475 + 0.04 * (fx * 0.31).sin() + rng.gen_range(-0.035..0.035),
                0.475 + 0.04 * (fy * 0.23).cos() + rng.gen_range(-0.035..0.035),
                0.475 + 0.04 * ((fx - fy) * 0.17).sin() + rng.gen_range(-0.035..0.035),
            ]
        })
    }

    fn random_map(rng: &mut ChaCha8Rng) -> AffineColorMap {
        let w = Matrix3::from_fn(|r, c| f64::from(u8::from(r == c)) + rng.gen_range(-0.2..0.2));
        let t = Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
        AffineColorMap::new(w, t)
    }

    #[test]
    fn loss_boundaries() {
        let a = headroom_image(24, 24, 1);
        let b = headroom_image(24, 24, 2);
        assert_eq!(color_loss(&a, &b, 0.0).unwrap(), mean_abs_error(&a, &b).unwrap());
        assert_eq!(color_loss(&a, &a, 1.0).unwrap(), 0.0);
        assert!(color_loss(&a, &b, 1.5).is_err());
    }

    #[test]
    fn loss_combines_both_terms() {
        let a = headroom_image(24, 24, 3);
        let b = headroom_image(24, 24, 4);
        let l1 = mean_abs_error(&a, &b).unwrap();
        let s = ssim(&a, &b).unwrap();
        let want = 0.8 * l1 + 0.2 * (1.0 - s) / 2.0;
        assert!((color_loss(&a, &b, 0.2).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        // a target the map cannot reach exactly, so every term is active
        let src = headroom_image(20, 18, 5);
        let target = headroom_image(20, 18, 6);
        let map = AffineColorMap::new(
            Matrix3::new(1.05, 0.02, 0.0, -0.03, 0.97, 0.01, 0.0, 0.04, 1.02),
            Vector3::new(0.01, -0.02, 0.005),
        );
        // lambda1 = 1 isolates the smooth SSIM term
        let (_, grad) = loss_and_gradient(&src, &target, &map, 1.0).unwrap();
        let p = map.to_params();
        let h = 1e-6;
        for i in 0..12 {
            let eval = |d: f64| {
                let mut q = p;
                q[i] += d;
                let m = AffineColorMap::from_params(&q);
                color_loss(&target, &apply_color_map(&m, &src), 1.0).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn identical_images_give_identity() {
        let img = headroom_image(32, 32, 7);
        let fit = fit_color_map(&img, &img, DEFAULT_LAMBDA1, &FitOptions::default()).unwrap();
        assert!(fit.map.distance(&AffineColorMap::identity()) < 1e-3);
        assert!(!fit.degenerate);
    }

    #[test]
    fn recovers_synthetic_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let src = headroom_image(48, 40, 100 + seed);
            let truth = random_map(&mut rng);
            let target = apply_color_map(&truth, &src);
            let fit = fit_color_map(&src, &target, DEFAULT_LAMBDA1, &FitOptions::default()).unwrap();
            assert!(fit.map.distance(&truth) < 1e-2, "{}", fit.map.distance(&truth));
        }
    }

    #[test]
    fn refinement_descends_monotonically() {
        // clipping and noise make the least-squares start suboptimal
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = Image::from_fn(40, 40, |x, y| {
            [x as f64 / 39.0, y as f64 / 39.0, rng.gen_range(0.0..1.0)]
        });
        let truth = AffineColorMap::new(
            Matrix3::new(1.3, 0.1, 0.0, 0.0, 1.2, -0.1, 0.1, 0.0, 0.9),
            Vector3::new(0.05, -0.1, 0.1),
        );
        let mut noisy = apply_color_map(&truth, &src).pixels().to_vec();
        for p in &mut noisy {
            for v in p.iter_mut() {
                *v = (*v + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
            }
        }
        let target = Image::new(40, 40, noisy).unwrap();
        let opts = FitOptions {
            max_iterations: 60,
            ..FitOptions::default()
        };
        let fit = fit_color_map(&src, &target, DEFAULT_LAMBDA1, &opts).unwrap();
        assert!(fit.iterations > 0);
        assert!(fit.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.final_loss() < fit.loss_history[0]);
        let again = fit_color_map(&src, &target, DEFAULT_LAMBDA1, &opts).unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn constant_source_is_degenerate() {
        let src = Image::filled(16, 16, [0.3, 0.5, 0.2]);
        let target = Image::filled(16, 16, [0.6, 0.4, 0.7]);
        let fit = fit_color_map(&src, &target, DEFAULT_LAMBDA1, &FitOptions::default()).unwrap();
        assert!(fit.degenerate);
        let got = fit.map.map_color([0.3, 0.5, 0.2]);
        for (g, t) in got.iter().zip([0.6, 0.4, 0.7]) {
            assert!((g - t).abs() < 1e-9);
        }
        // minimum norm over all twelve parameters: every row is
        // proportional to (c, 1)
        let c = [0.3, 0.5, 0.2, 1.0];
        let p = fit.map.to_params();
        for row in 0..3 {
            let k = p[9 + row];
            for j in 0..3 {
                assert!((p[row * 3 + j] - k * c[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_two_source_gets_minimum_norm_map() {
        // blue channel tied to red: colors span a plane
        let src = Image::from_fn(20, 20, |x, y| {
            let r = 0.2 + 0.03 * x as f64;
            [r, 0.1 + 0.04 * y as f64, 0.5 * r]
        });
        let truth = AffineColorMap::new(
            Matrix3::new(0.9, 0.1, 0.0, 0.0, 1.1, 0.0, 0.1, 0.0, 1.0),
            Vector3::new(0.05, 0.0, 0.02),
        );
        let target = apply_color_map(&truth, &src);
        let fit = fit_color_map(&src, &target, DEFAULT_LAMBDA1, &FitOptions::default()).unwrap();
        assert!(fit.degenerate);
        // reproduces the target
        for (s, t) in src.pixels().iter().zip(target.pixels()) {
            let m = fit.map.map_color(*s);
            for c in 0..3 {
                assert!((m[c] - t[c]).abs() < 1e-9);
            }
        }
        // oracle: since blue = red / 2, adding (0.5, 0, -1) to any row of W
        // changes no mapped color; the minimum-norm solution is orthogonal
        // to that direction
        let p = fit.map.to_params();
        for row in 0..3 {
            let dot = 0.5 * p[row * 3] - p[row * 3 + 2];
            assert!(dot.abs() < 1e-9, "row {row}: {dot}");
        }
    }

    #[test]
    fn harmonize_cases() {
        let reference = headroom_image(32, 32, 21);
        let opts = FitOptions::default();
        let single = harmonize_multiview(&[("a".into(), reference.clone())], "a", 0.2, &opts).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].1.map, AffineColorMap::identity());

        let shift = AffineColorMap::new(
            Matrix3::new(1.1, 0.05, 0.0, 0.0, 0.95, 0.03, -0.04, 0.0, 1.05),
            Vector3::new(0.03, -0.02, 0.01),
        );
        let shifted = apply_color_map(&shift, &reference);
        let out = harmonize_multiview(
            &[
                ("b".into(), shifted),
                ("a".into(), reference.clone()),
                ("c".into(), reference.clone()),
            ],
            "a",
            0.2,
            &opts,
        )
        .unwrap();
        let ids: Vec<_> = out.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert!(out[0].1.map.distance(&shift.inverse().unwrap()) < 1e-2);
        assert_eq!(out[1].1.map, AffineColorMap::identity());
        assert!(out[2].1.map.distance(&AffineColorMap::identity()) < 1e-3);

        assert!(matches!(
            harmonize_multiview(&[("a".into(), reference)], "z", 0.2, &opts),
            Err(ColorError::MissingReference(_))
        ));
    }

    #[test]
    fn continuity_with_fixed_maps_has_no_jumps() {
        let frames: Vec<Image> = (0..3).map(|_| headroom_image(8, 8, 1)).collect();
        let m = AffineColorMap::new(Matrix3::identity() * 1.1, Vector3::repeat(0.01));
        let fixed = continuity_report(&[(m, frames.clone()), (m, frames.clone())], (2, 3), 1e-3).unwrap();
        assert_eq!(fixed.trace.len(), 6);
        assert_eq!(fixed.boundary_jumps, vec![0.0]);
        assert!(fixed.within_threshold);

        let other = AffineColorMap::new(Matrix3::identity(), Vector3::repeat(0.1));
        let varying = continuity_report(&[(m, frames.clone()), (other, frames)], (2, 3), 1e-3).unwrap();
        assert!(!varying.within_threshold);
    }
}
