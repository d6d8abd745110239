use std::cmp::Ordering;

/// Nelder-Mead over the unit cube driven by a total order on evaluations
/// instead of a scalar objective. Trial points are clamped into the cube.
///
/// Returns the best vertex and its evaluation.
pub(crate) fn minimize<T, F, C>(start: &[f64], step: f64, iters: usize, mut eval: F, cmp: C) -> (Vec<f64>, T)
where
    F: FnMut(&[f64]) -> T,
    C: Fn(&T, &T) -> Ordering,
{
    let d = start.len();
    let clamp = |p: &mut Vec<f64>| p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut simplex: Vec<(Vec<f64>, T)> = Vec::with_capacity(d + 1);
    let first = start.to_vec();
    let v0 = eval(&first);
    simplex.push((first, v0));
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] = if p[i] + step <= 1.0 { p[i] + step } else { p[i] - step };
        clamp(&mut p);
        let v = eval(&p);
        simplex.push((p, v));
    }
    if d == 0 {
        return simplex.pop().expect("simplex has a vertex");
    }

    let point = |c: &[f64], w: &[f64], coef: f64| -> Vec<f64> {
        c.iter()
            .zip(w)
            .map(|(ci, wi)| (ci + coef * (wi - ci)).clamp(0.0, 1.0))
            .collect()
    };

    for _ in 0..iters {
        simplex.sort_by(|a, b| cmp(&a.1, &b.1));
        let spread = (1..=d)
            .map(|k| {
                simplex[k]
                    .0
                    .iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread < 1e-12 {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (p, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].0.clone();
        let reflected = point(&centroid, &worst, -1.0);
        let fr = eval(&reflected);
        if cmp(&fr, &simplex[0].1) == Ordering::Less {
            let expanded = point(&centroid, &worst, -2.0);
            let fe = eval(&expanded);
            simplex[d] = if cmp(&fe, &fr) == Ordering::Less {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if cmp(&fr, &simplex[d - 1].1) == Ordering::Less {
            simplex[d] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if cmp(&fr, &simplex[d].1) == Ordering::Less {
            let c = point(&centroid, &reflected, 0.5);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = point(&centroid, &worst, 0.5);
            let fc = eval(&c);
            (c, fc)
        };
        let bar = if cmp(&fr, &simplex[d].1) == Ordering::Less {
            &fr
        } else {
            &simplex[d].1
        };
        if cmp(&fc, bar) == Ordering::Less {
            simplex[d] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for k in 1..=d {
            let p = point(&best, &simplex[k].0, 0.5);
            let v = eval(&p);
            simplex[k] = (p, v);
        }
    }
    simplex.sort_by(|a, b| cmp(&a.1, &b.1));
    simplex.swap_remove(0)
}
