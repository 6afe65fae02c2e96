//! Reference implementations used as test oracles. They are written
//! directly from the definitions and share no numerical code with the
//! library beyond `Mlp::forward`.
#![allow(dead_code)]

use ldssl::network::{Activation, Mlp};
use ldssl::Label;
use ndarray::{Array2, ArrayView2};

pub const H: f64 = 1e-5;

/// Angle between `a` and `b` over pi, via `2 atan2(|a^ - b^|, |a^ + b^|)`,
/// which stays accurate near 0 and pi.
pub fn kahan_angular(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt()) / std::f64::consts::PI
}

/// Plain arccos-of-cosine angular distance, coded from the definition.
pub fn acos_angular(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    let c = c.clamp(-1.0, 1.0);
    c.acos() / std::f64::consts::PI
}

/// Brute-force on-the-fly label for a known anchor draw: sums of
/// `d(z,p)/(d(z,p)+d(z,n))` against the complementary sums; ties go to the
/// positive class.
pub fn brute_force_label(z: &[f64], pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Label {
    let mut s_pos = 0.0;
    let mut s_neg = 0.0;
    for j in 0..pos.len() {
        let dp = acos_angular(z, &pos[j]);
        let dn = acos_angular(z, &neg[j]);
        if dp < 1e-12 && dn < 1e-12 {
            s_pos += 0.5;
            s_neg += 0.5;
        } else {
            s_pos += dp / (dp + dn);
            s_neg += dn / (dn + dp);
        }
    }
    if s_pos <= s_neg {
        Label::Positive
    } else {
        Label::Negative
    }
}

pub fn flat_params(net: &Mlp) -> Vec<f64> {
    net.parameters().into_iter().flat_map(|s| s.iter().copied()).collect()
}

pub fn set_params(net: &mut Mlp, flat: &[f64]) {
    let mut at = 0;
    for slice in net.parameters_mut() {
        let n = slice.len();
        slice.copy_from_slice(&flat[at..at + n]);
        at += n;
    }
    assert_eq!(at, flat.len());
}

/// Forward pass written out with explicit loops.
pub fn manual_forward(net: &Mlp, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    for layer in net.layers() {
        let w = layer.weights();
        let b = layer.biases();
        rows = rows
            .into_iter()
            .map(|r| {
                (0..w.nrows())
                    .map(|o| {
                        let mut v = b[o];
                        for i in 0..w.ncols() {
                            v += w[[o, i]] * r[i];
                        }
                        match layer.activation() {
                            Activation::Relu => v.max(0.0),
                            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
                            Activation::Linear => v,
                        }
                    })
                    .collect()
            })
            .collect();
    }
    if net.output_normalized() {
        for r in &mut rows {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter_mut().for_each(|v| *v /= n);
        }
    }
    let cols = rows[0].len();
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).unwrap()
}

/// Sum of `lambda * |W|^2` over penalized layers.
pub fn manual_l2(net: &Mlp) -> f64 {
    net.layers()
        .iter()
        .map(|l| l.l2_penalty() * l.weights().iter().map(|w| w * w).sum::<f64>())
        .sum()
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1-1e-7]`.
pub fn manual_bce(targets: &[f64], preds: &[f64]) -> f64 {
    let eps = 1e-7;
    let mut total = 0.0;
    for (t, p) in targets.iter().zip(preds) {
        let p = p.clamp(eps, 1.0 - eps);
        total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    total / targets.len() as f64
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + H;
            let up = f(&probe);
            probe[i] = orig - H;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub mod gradcheck {
    use super::*;
    use ldssl::network::{ForwardTrace, LayerSpec};
    use ldssl::training::{classifier_gradients, pair_batch_gradients};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Entries whose analytic and numeric gradients are both below this are
    /// compared absolutely rather than relatively.
    pub const FLOOR: f64 = 1e-6;

    pub struct Case {
        pub encoder: Mlp,
        pub classifier: Mlp,
        pub features: Array2<f64>,
        pub pairs: Vec<(usize, usize)>,
        pub pair_targets: Vec<f64>,
        pub targets: Vec<f64>,
    }

    fn widths(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<usize> {
        let depth = rng.random_range(1..=2);
        (0..depth).map(|_| rng.random_range(lo..=hi)).collect()
    }

    pub fn random_case(seed: u64) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(2..=6);
        let latent = rng.random_range(2..=6);
        let l2 = [0.0, 1e-4, 1e-2][rng.random_range(0..3)];
        let mut enc_specs: Vec<LayerSpec> = widths(&mut rng, 3, 8)
            .into_iter()
            .map(|u| LayerSpec::new(u, Activation::Relu))
            .collect();
        enc_specs.push(LayerSpec::new(latent, Activation::Linear));
        let encoder = Mlp::build(p, &enc_specs, l2, true, &mut rng).unwrap();
        let mut clf_specs: Vec<LayerSpec> = widths(&mut rng, 3, 6)
            .into_iter()
            .map(|u| LayerSpec::new(u, Activation::Relu))
            .collect();
        clf_specs.push(LayerSpec::new(1, Activation::Sigmoid));
        let classifier = Mlp::build(latent, &clf_specs, l2, false, &mut rng).unwrap();
        let mut encoder = encoder;
        let mut classifier = classifier;
        // Nonzero biases keep dead-ReLU rows away from a zero latent.
        for net in [&mut encoder, &mut classifier] {
            for (i, slice) in net.parameters_mut().into_iter().enumerate() {
                if i % 2 == 1 {
                    slice.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
                }
            }
        }

        let b = rng.random_range(3..=8);
        let features = Array2::from_shape_fn((2 * b, p), |_| rng.sample::<f64, _>(StandardNormal));
        let pairs = (0..b).map(|i| (i, i + b)).collect();
        let pair_targets = (0..b).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let targets = (0..2 * b).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        Case {
            encoder,
            classifier,
            features,
            pairs,
            pair_targets,
            targets,
        }
    }

    fn flatten(g: &ldssl::network::Gradients) -> Vec<f64> {
        g.slices().into_iter().flat_map(|s| s.iter().copied()).collect()
    }

    /// Encoder through the L2 normalization and the angular pair head.
    pub fn pair_head_error(case: &Case) -> f64 {
        let (_, grads) =
            pair_batch_gradients(&case.encoder, case.features.view(), &case.pairs, &case.pair_targets).unwrap();
        let analytic = flatten(&grads);
        let mut net = case.encoder.clone();
        let numeric = numeric_gradient(&flat_params(&case.encoder), |theta| {
            set_params(&mut net, theta);
            let z = manual_forward(&net, case.features.view());
            let d: Vec<f64> = case
                .pairs
                .iter()
                .map(|&(i, j)| kahan_angular(z.row(i).as_slice().unwrap(), z.row(j).as_slice().unwrap()))
                .collect();
            manual_bce(&case.pair_targets, &d) + manual_l2(&net)
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }

    /// Classifier BCE on fixed latents.
    pub fn classifier_error(case: &Case) -> f64 {
        let latents = case.encoder.forward(case.features.view()).unwrap();
        let (_, grads) = classifier_gradients(&case.classifier, latents.view(), &case.targets).unwrap();
        let analytic = flatten(&grads);
        let mut net = case.classifier.clone();
        let numeric = numeric_gradient(&flat_params(&case.classifier), |theta| {
            set_params(&mut net, theta);
            let p = manual_forward(&net, latents.view());
            manual_bce(&case.targets, p.column(0).as_slice().unwrap()) + manual_l2(&net)
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }

    /// Encoder and classifier chained, differentiated with respect to both
    /// parameter sets.
    pub fn end_to_end_error(case: &Case) -> f64 {
        let mut trace = ForwardTrace::new();
        let z = case.encoder.forward_traced(case.features.view(), &mut trace).unwrap();
        let (_, clf_grads) = classifier_gradients(&case.classifier, z.view(), &case.targets).unwrap();
        let enc_grads = case.encoder.backward(&trace, clf_grads.input.view()).unwrap();
        let mut analytic = flatten(&enc_grads);
        analytic.extend(flatten(&clf_grads));

        let n_enc = case.encoder.parameter_count();
        let mut theta0 = flat_params(&case.encoder);
        theta0.extend(flat_params(&case.classifier));
        let (mut enc, mut clf) = (case.encoder.clone(), case.classifier.clone());
        let numeric = numeric_gradient(&theta0, |theta| {
            set_params(&mut enc, &theta[..n_enc]);
            set_params(&mut clf, &theta[n_enc..]);
            let z = manual_forward(&enc, case.features.view());
            let p = manual_forward(&clf, z.view());
            manual_bce(&case.targets, p.column(0).as_slice().unwrap()) + manual_l2(&enc) + manual_l2(&clf)
        });
        max_relative_error(&analytic, &numeric, FLOOR)
    }
}

pub mod labels {
    use super::*;
    use ldssl::geometry::{draw_anchors, on_the_fly_label, AnchorSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub const KS: [usize; 3] = [1, 3, 11];

    /// Instance kinds: random anchors, or anchors built so the two sums
    /// tie exactly.
    #[derive(Debug, Clone, Copy)]
    pub enum Kind {
        Random,
        MirrorTie,
        SharedTie,
    }

    pub struct Instance {
        pub z: Vec<f64>,
        pub anchors: AnchorSet,
        pub kind: Kind,
        pub draw_seed: u64,
    }

    fn gauss(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn instance(seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = KS[(seed % 3) as usize];
        let kind = match seed % 10 {
            0 | 1 => Kind::MirrorTie,
            2 => Kind::SharedTie,
            _ => Kind::Random,
        };
        let dim = rng.random_range(2..=16);
        let n_pos = k + rng.random_range(0..=10);
        let n_neg = k + rng.random_range(0..=10);
        let (z, pos, neg) = match kind {
            Kind::Random => {
                let z = gauss(&mut rng, dim);
                let pos: Vec<Vec<f64>> = (0..n_pos).map(|_| gauss(&mut rng, dim)).collect();
                let neg: Vec<Vec<f64>> = (0..n_neg).map(|_| gauss(&mut rng, dim)).collect();
                (z, pos, neg)
            }
            Kind::MirrorTie => {
                // z on the first axis; every anchor is (0.5, +-e_i), so all
                // anchors sit at bit-identical angles from z.
                let mut z = vec![0.0; dim];
                z[0] = 1.0;
                let axis_vec = |rng: &mut ChaCha8Rng| {
                    let mut v = vec![0.0; dim];
                    v[0] = 0.5;
                    v[rng.random_range(1..dim)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    v
                };
                let pos: Vec<Vec<f64>> = (0..n_pos).map(|_| axis_vec(&mut rng)).collect();
                let neg: Vec<Vec<f64>> = (0..n_neg).map(|_| axis_vec(&mut rng)).collect();
                (z, pos, neg)
            }
            Kind::SharedTie => {
                let z = gauss(&mut rng, dim);
                let shared = gauss(&mut rng, dim);
                (z, vec![shared.clone(); n_pos], vec![shared; n_neg])
            }
        };
        let to_array = |rows: &[Vec<f64>]| Array2::from_shape_vec((rows.len(), dim), rows.concat()).unwrap();
        Instance {
            z,
            anchors: AnchorSet::new(to_array(&pos), to_array(&neg), k).unwrap(),
            kind,
            draw_seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        }
    }

    /// Library label vs brute force on the same anchor draw. Returns
    /// `(library, oracle, forced_tie)`.
    pub fn compare(inst: &Instance) -> (Label, Label, bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(inst.draw_seed);
        let library = on_the_fly_label(&inst.z, &inst.anchors, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(inst.draw_seed);
        let draw = draw_anchors(&inst.anchors, &mut rng);
        let pos: Vec<Vec<f64>> = draw.positives.iter().map(|&i| inst.anchors.positive(i).to_vec()).collect();
        let neg: Vec<Vec<f64>> = draw.negatives.iter().map(|&i| inst.anchors.negative(i).to_vec()).collect();
        let oracle = brute_force_label(&inst.z, &pos, &neg);
        (library, oracle, !matches!(inst.kind, Kind::Random))
    }
}

pub mod axioms {
    use super::*;
    use ldssl::geometry::angular_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[derive(Debug, Default, Clone, Copy)]
    pub struct Worst {
        pub out_of_range: usize,
        pub asymmetry: f64,
        pub self_distance: f64,
        pub scale_drift: f64,
        /// Against the atan2 formulation.
        pub oracle_gap: f64,
    }

    /// Checks `count` random vector pairs with dimensions in `2..=256`.
    pub fn sweep(seed: u64, count: usize) -> Worst {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Worst::default();
        for _ in 0..count {
            let dim = rng.random_range(2..=256);
            let a: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let d = angular_distance(&a, &b).unwrap();
            if !(0.0..=1.0).contains(&d) {
                w.out_of_range += 1;
            }
            w.asymmetry = w.asymmetry.max((d - angular_distance(&b, &a).unwrap()).abs());
            w.self_distance = w.self_distance.max(angular_distance(&a, &a).unwrap());
            let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
            w.scale_drift = w.scale_drift.max((angular_distance(&scaled, &b).unwrap() - d).abs());
            w.oracle_gap = w.oracle_gap.max((kahan_angular(&a, &b) - d).abs());
        }
        w
    }
}
