//! Skip-gram with negative sampling over a stream of (center, context)
//! pairs. Both the joint document/word trainer and the graph-walk trainer
//! are thin pair sources over this core.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sampling::{seeded_rng, AliasTable};

/// Exponent applied to context counts for the negative-sampling distribution.
pub const NEGATIVE_EXPONENT: f64 = 0.75;

/// Learning rate decays linearly to this fraction of the initial rate across
/// all training pairs.
pub const LR_FLOOR_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SgnsConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr_initial: f64,
    pub seed: u64,
}

/// A deterministic stream of (center, context) training pairs.
///
/// `for_each_pair` must visit pairs in the same order every call; the trainer
/// replays it once per epoch.
pub trait PairSource {
    fn n_centers(&self) -> usize;
    fn n_contexts(&self) -> usize;
    /// Context occurrence counts; the negative distribution is
    /// counts^0.75.
    fn context_counts(&self) -> Vec<f64>;
    fn total_pairs(&self) -> usize;
    fn for_each_pair(&self, visit: &mut dyn FnMut(usize, usize));
}

#[derive(Debug, Clone)]
pub struct SgnsModel {
    /// Center-side embeddings, one row per center id.
    pub input: Array2<f64>,
    /// Context-side embeddings, one row per context id.
    pub output: Array2<f64>,
    /// Mean per-pair objective per epoch (positive plus negative terms).
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Seeded uniform(-0.5/dim, 0.5/dim) initialization.
pub fn init_matrix(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let half = 0.5 / dim as f64;
    let mut m = Array2::zeros((rows, dim));
    for v in m.iter_mut() {
        *v = (rng.random::<f64>() * 2.0 - 1.0) * half;
    }
    m
}

/// Loss of a single positive pair with explicit negatives:
/// `-ln sig(u.v) - sum_neg ln sig(-u.v_neg)`.
pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut loss = -sigmoid(dot(center, context)).max(1e-300).ln();
    for neg in negatives {
        loss -= sigmoid(-dot(center, neg)).max(1e-300).ln();
    }
    loss
}

/// Analytic gradients of [`pair_loss`] with respect to the center vector,
/// the context vector, and each negative vector.
pub fn pair_grad(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dim = center.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut g_center = vec![0.0; dim];
    // d/du of -ln sig(u.v) = (sig(u.v) - 1) v
    let s_pos = sigmoid(dot(center, context));
    let mut g_context = vec![0.0; dim];
    for d in 0..dim {
        g_center[d] += (s_pos - 1.0) * context[d];
        g_context[d] = (s_pos - 1.0) * center[d];
    }
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        // d/du of -ln sig(-u.v) = sig(u.v) v
        let s_neg = sigmoid(dot(center, neg));
        let mut g_neg = vec![0.0; dim];
        for d in 0..dim {
            g_center[d] += s_neg * neg[d];
            g_neg[d] = s_neg * center[d];
        }
        g_negs.push(g_neg);
    }
    (g_center, g_context, g_negs)
}

/// Trains SGNS embeddings over the pair stream. Sequential and deterministic
/// for a given seed: pairs replay in source order, negatives come from one
/// seeded stream.
pub fn train<S: PairSource + ?Sized>(source: &S, cfg: &SgnsConfig) -> SgnsModel {
    let mut rng = seeded_rng(cfg.seed, &[0x5965]);
    let mut input = init_matrix(source.n_centers(), cfg.dim, &mut rng);
    let mut output = init_matrix(source.n_contexts(), cfg.dim, &mut rng);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return SgnsModel {
            input,
            output,
            epoch_losses,
        };
    }
    let counts = source.context_counts();
    let weights: Vec<f64> = counts.iter().map(|&c| c.max(0.0).powf(NEGATIVE_EXPONENT)).collect();
    let table = AliasTable::new(&weights).expect("context counts must not be all zero");
    let total_updates = (cfg.epochs * source.total_pairs()).max(1) as f64;
    let dim = cfg.dim;
    let mut update_idx: usize = 0;
    for _epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0usize;
        let input_ptr = &mut input;
        let output_ptr = &mut output;
        source.for_each_pair(&mut |center, context| {
            let progress = update_idx as f64 / total_updates;
            let lr = cfg.lr_initial * (1.0 - (1.0 - LR_FLOOR_FRACTION) * progress);
            update_idx += 1;
            epoch_pairs += 1;

            let mut center_grad = vec![0.0f64; dim];
            let mut loss = 0.0;
            {
                let u = input_ptr.row(center);
                let v = output_ptr.row(context);
                let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                let s = sigmoid(dot);
                loss -= s.max(1e-300).ln();
                let g = s - 1.0; // d(-ln sig)/d dot
                for d in 0..dim {
                    center_grad[d] += g * v[d];
                }
                let coef = g;
                let u_copy: Vec<f64> = u.iter().copied().collect();
                let mut v_mut = output_ptr.row_mut(context);
                for d in 0..dim {
                    v_mut[d] -= lr * coef * u_copy[d];
                }
            }
            for _ in 0..cfg.negatives {
                let neg = table.sample(&mut rng);
                if neg == context {
                    continue; // skip accidental positives, as word2vec does
                }
                let u = input_ptr.row(center);
                let v = output_ptr.row(neg);
                let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                let s = sigmoid(dot);
                loss -= sigmoid(-dot).max(1e-300).ln();
                for d in 0..dim {
                    center_grad[d] += s * v[d];
                }
                let u_copy: Vec<f64> = u.iter().copied().collect();
                let mut v_mut = output_ptr.row_mut(neg);
                for d in 0..dim {
                    v_mut[d] -= lr * s * u_copy[d];
                }
            }
            let mut u_mut = input_ptr.row_mut(center);
            for d in 0..dim {
                u_mut[d] -= lr * center_grad[d];
            }
            epoch_loss += loss;
        });
        epoch_losses.push(epoch_loss / epoch_pairs.max(1) as f64);
    }
    SgnsModel {
        input,
        output,
        epoch_losses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct TinySource {
        pairs: Vec<(usize, usize)>,
        n_centers: usize,
        n_contexts: usize,
    }

    impl PairSource for TinySource {
        fn n_centers(&self) -> usize {
            self.n_centers
        }
        fn n_contexts(&self) -> usize {
            self.n_contexts
        }
        fn context_counts(&self) -> Vec<f64> {
            let mut counts = vec![0.0; self.n_contexts];
            for &(_, c) in &self.pairs {
                counts[c] += 1.0;
            }
            counts
        }
        fn total_pairs(&self) -> usize {
            self.pairs.len()
        }
        fn for_each_pair(&self, visit: &mut dyn FnMut(usize, usize)) {
            for &(a, b) in &self.pairs {
                visit(a, b);
            }
        }
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let source = TinySource {
            pairs: vec![(0, 0), (1, 1)],
            n_centers: 2,
            n_contexts: 2,
        };
        let cfg = SgnsConfig {
            dim: 4,
            epochs: 0,
            negatives: 2,
            lr_initial: 0.05,
            seed: 9,
        };
        let model = train(&source, &cfg);
        let mut rng = seeded_rng(9, &[0x5965]);
        let expected_input = init_matrix(2, 4, &mut rng);
        let expected_output = init_matrix(2, 4, &mut rng);
        assert_eq!(model.input, expected_input);
        assert_eq!(model.output, expected_output);
        let half = 0.5 / 4.0;
        for v in model.input.iter() {
            assert!(v.abs() <= half);
        }
    }

    #[test]
    fn pair_grad_matches_finite_differences() {
        let center = vec![0.3, -0.2, 0.5];
        let context = vec![-0.1, 0.4, 0.2];
        let neg1 = vec![0.2, 0.1, -0.3];
        let neg2 = vec![-0.4, 0.25, 0.15];
        let negs: Vec<&[f64]> = vec![&neg1, &neg2];
        let (g_c, g_ctx, g_negs) = pair_grad(&center, &context, &negs);
        let h = 1e-6;
        let check = |analytic: &[f64], which: usize| {
            for d in 0..3 {
                let bump = |delta: f64| -> f64 {
                    let mut c = center.clone();
                    let mut ctx = context.clone();
                    let mut n1 = neg1.clone();
                    let mut n2 = neg2.clone();
                    match which {
                        0 => c[d] += delta,
                        1 => ctx[d] += delta,
                        2 => n1[d] += delta,
                        _ => n2[d] += delta,
                    }
                    let negs: Vec<&[f64]> = vec![&n1, &n2];
                    pair_loss(&c, &ctx, &negs)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let rel = (analytic[d] - fd).abs() / fd.abs().max(1e-10);
                assert!(
                    rel < 1e-5,
                    "which={which} d={d}: analytic {} vs fd {fd}",
                    analytic[d]
                );
            }
        };
        check(&g_c, 0);
        check(&g_ctx, 1);
        check(&g_negs[0], 2);
        check(&g_negs[1], 3);
    }

    #[test]
    fn training_is_deterministic() {
        let source = TinySource {
            pairs: vec![(0, 1), (1, 0), (0, 2), (2, 0), (1, 2)],
            n_centers: 3,
            n_contexts: 3,
        };
        let cfg = SgnsConfig {
            dim: 8,
            epochs: 5,
            negatives: 3,
            lr_initial: 0.1,
            seed: 4,
        };
        let a = train(&source, &cfg);
        let b = train(&source, &cfg);
        assert_eq!(a.input, b.input);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn loss_trends_down() {
        let source = TinySource {
            pairs: vec![(0, 0), (0, 1), (1, 2), (1, 3), (2, 0), (2, 1), (3, 2), (3, 3)],
            n_centers: 4,
            n_contexts: 4,
        };
        let cfg = SgnsConfig {
            dim: 8,
            epochs: 40,
            negatives: 2,
            lr_initial: 0.3,
            seed: 12,
        };
        let model = train(&source, &cfg);
        let first = model.epoch_losses[0];
        let last = *model.epoch_losses.last().unwrap();
        assert!(last < first, "loss {first} -> {last}");
    }
}
