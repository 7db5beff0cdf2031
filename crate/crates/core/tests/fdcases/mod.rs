//! Shared finite-difference gradient harness.
//!
//! Each case builds a scalar loss from one layer under test; `fd_check`
//! compares the tape's analytic gradients against `(L(x+h) - L(x-h)) / 2h`
//! for every element of every differentiable leaf, over at least 20
//! randomized small tensors. 32-bit runs use step 1e-3 with relative
//! tolerance 1e-3, 64-bit runs step 1e-6 with tolerance 1e-5.
//!
//! Piecewise-linear layers (ReLU family, max-pool) are only differentiable
//! away from their switching surfaces, so trials whose intermediate values
//! sit within a small margin of a switch are redrawn deterministically.

use genre1d::tensor::ops::Padding;
use genre1d::tensor::{Mode, Tape, VarId};
use genre1d::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 20;
/// Margin around activation switch points, in units of the FD step.
const KINK_MARGIN: f64 = 25.0;

pub struct Built {
    loss: VarId,
    /// Nodes that feed a ReLU-family activation; their values must stay
    /// `KINK_MARGIN * step` away from zero for the FD quotient to be valid.
    kink_nodes: Vec<VarId>,
    /// Nodes that feed a max-pool, with (pool, stride); window elements
    /// must be pairwise separated by the same margin.
    pool_nodes: Vec<(VarId, usize, usize)>,
}

impl Built {
    fn plain(loss: VarId) -> Self {
        Built {
            loss,
            kink_nodes: Vec::new(),
            pool_nodes: Vec::new(),
        }
    }
}

pub type BuildFn<F> = Box<dyn Fn(&mut Tape<F>, &[VarId]) -> Built>;

pub struct Case<F: Scalar> {
    pub leaves: Vec<Tensor<F>>,
    pub build: BuildFn<F>,
}

fn uniform<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<F> {
    let data = (0..shape.iter().product())
        .map(|_| F::from_config(rng.random_range(lo..hi)))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Uniform in [-1, 1] with |v| >= gap, for leaves feeding an activation
/// directly.
fn uniform_away_from_zero<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<F> {
    let data = (0..shape.iter().product())
        .map(|_| {
            let mag = rng.random_range(gap..1.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            F::from_config(sign * mag)
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces a layer output to a scalar through a fixed random projection, so
/// the check probes the full Jacobian rather than its row sums. The
/// projection is scaled to unit order so the loss magnitude, and with it
/// the FD roundoff floor, stays flat as the output grows.
fn scalarize<F: Scalar>(tape: &mut Tape<F>, y: VarId, pool: &[f64]) -> VarId {
    let y = if tape.value(y).rank() == 3 {
        tape.flatten(y).unwrap()
    } else {
        y
    };
    let d = tape.value(y).shape()[1];
    let scale = 1.0 / (d as f64).sqrt();
    let w = Tensor::new(
        vec![1, d],
        pool[..d].iter().map(|&v| F::from_config(v * scale)).collect(),
    )
    .unwrap();
    let wid = tape.leaf(w, false);
    let bid = tape.leaf(Tensor::zeros(&[1]).unwrap(), false);
    let o = tape.dense(y, wid, bid).unwrap();
    tape.sum(o)
}

fn projection_pool(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..8192).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn eval_loss<F: Scalar>(case: &Case<F>, leaves: &[Tensor<F>]) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<VarId> = leaves.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let built = (case.build)(&mut tape, &ids);
    tape.value(built.loss).item().to_f64().unwrap()
}

fn windows_separated<F: Scalar>(t: &Tensor<F>, pool: usize, stride: usize, margin: f64) -> bool {
    let (n, c, l) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let out_len = if l >= pool { (l - pool) / stride + 1 } else { 0 };
    let data = t.data();
    for row in 0..n * c {
        for o in 0..out_len {
            let start = row * l + o * stride;
            let w = &data[start..start + pool];
            for i in 0..pool {
                for j in i + 1..pool {
                    let d = (w[i].to_f64().unwrap() - w[j].to_f64().unwrap()).abs();
                    if d < margin {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub fn fd_check<F: Scalar>(label: &str, step: f64, tol: f64, mut make: impl FnMut(u64) -> Case<F>) {
    let margin = KINK_MARGIN * step;
    let mut accepted = 0usize;
    let mut seed = 0u64;
    while accepted < TRIALS {
        assert!(
            seed < (TRIALS as u64) * 50,
            "{label}: too many trials rejected by kink screening"
        );
        let case = make(seed);
        seed += 1;

        let mut tape = Tape::new();
        let ids: Vec<VarId> = case
            .leaves
            .iter()
            .map(|t| tape.leaf(t.clone(), true))
            .collect();
        let built = (case.build)(&mut tape, &ids);

        let kinks_clear = built.kink_nodes.iter().all(|&id| {
            tape.value(id)
                .data()
                .iter()
                .all(|v| v.to_f64().unwrap().abs() > margin)
        });
        let pools_clear = built
            .pool_nodes
            .iter()
            .all(|&(id, p, s)| windows_separated(tape.value(id), p, s, margin));
        if !kinks_clear || !pools_clear {
            continue;
        }

        tape.backward(built.loss).unwrap();
        let analytic: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| {
                tape.grad(id)
                    .unwrap_or_else(|| panic!("{label}: leaf missing gradient"))
                    .iter()
                    .map(|g| g.to_f64().unwrap())
                    .collect()
            })
            .collect();

        for (li, leaf) in case.leaves.iter().enumerate() {
            for e in 0..leaf.len() {
                let base = leaf.data()[e].to_f64().unwrap();
                let mut plus = case.leaves.clone();
                plus[li].data_mut()[e] = F::from_config(base + step);
                let mut minus = case.leaves.clone();
                minus[li].data_mut()[e] = F::from_config(base - step);
                let numeric = (eval_loss(&case, &plus) - eval_loss(&case, &minus)) / (2.0 * step);
                let a = analytic[li][e];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    rel < tol,
                    "{label}: trial {} leaf {li} elem {e}: analytic {a:.6e} vs numeric {numeric:.6e} (rel {rel:.3e})",
                    seed - 1
                );
            }
        }
        accepted += 1;
    }
}

// ── Per-layer cases ─────────────────────────────────────────────────────

pub fn conv_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0);
    let n = rng.random_range(1..=2);
    let c_in = rng.random_range(1..=3);
    let c_out = rng.random_range(1..=3);
    let l = rng.random_range(5..=9);
    let k = rng.random_range(1..=4);
    let stride = rng.random_range(1..=2);
    let padding = if seed % 2 == 0 { Padding::Valid } else { Padding::Same };
    let x = uniform(&mut rng, &[n, c_in, l], -1.0, 1.0);
    let w = uniform(&mut rng, &[c_out, c_in, k], -1.0, 1.0);
    let b = uniform(&mut rng, &[c_out], -0.5, 0.5);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x, w, b],
        build: Box::new(move |tape, ids| {
            let y = tape.conv1d(ids[0], ids[1], ids[2], stride, padding).unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn dense_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDE);
    let n = rng.random_range(1..=3);
    let d = rng.random_range(2..=6);
    let u = rng.random_range(1..=5);
    let x = uniform(&mut rng, &[n, d], -1.0, 1.0);
    let w = uniform(&mut rng, &[u, d], -1.0, 1.0);
    let b = uniform(&mut rng, &[u], -0.5, 0.5);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x, w, b],
        build: Box::new(move |tape, ids| {
            let y = tape.dense(ids[0], ids[1], ids[2]).unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn maxpool_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3A);
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(6..=12);
    let p = rng.random_range(2..=3);
    let s = rng.random_range(1..=3);
    let x = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x],
        build: Box::new(move |tape, ids| {
            let y = tape.maxpool1d(ids[0], p, s).unwrap();
            Built {
                loss: scalarize(tape, y, &pool),
                kink_nodes: Vec::new(),
                pool_nodes: vec![(ids[0], p, s)],
            }
        }),
    }
}

pub fn avgpool_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA4);
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(6..=12);
    let p = rng.random_range(2..=3);
    let s = rng.random_range(1..=3);
    let x = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x],
        build: Box::new(move |tape, ids| {
            let y = tape.avgpool1d(ids[0], p, s).unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn batchnorm_train_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0);
    let n = rng.random_range(1..=3);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(3..=8);
    let x = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let gamma = uniform(&mut rng, &[c], 0.5, 1.5);
    let beta = uniform(&mut rng, &[c], -0.5, 0.5);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x, gamma, beta],
        build: Box::new(move |tape, ids| {
            let (y, _, _) = tape.batchnorm_train(ids[0], ids[1], ids[2], 1e-5).unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn batchnorm_infer_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1);
    let n = rng.random_range(1..=3);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(3..=8);
    let x = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let gamma = uniform(&mut rng, &[c], 0.5, 1.5);
    let beta = uniform(&mut rng, &[c], -0.5, 0.5);
    let mean: Tensor<F> = uniform(&mut rng, &[c], -0.3, 0.3);
    let var: Tensor<F> = uniform(&mut rng, &[c], 0.5, 1.5);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x, gamma, beta],
        build: Box::new(move |tape, ids| {
            let y = tape
                .batchnorm_infer(ids[0], ids[1], ids[2], &mean, &var, 1e-5)
                .unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn activation_case<F: Scalar>(seed: u64, which: u8, step: f64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xAC + which as u64));
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(3..=8);
    let gap = 2.0 * KINK_MARGIN * step;
    let x: Tensor<F> = match which {
        // ReLU family: keep inputs away from the kink at zero.
        0 | 1 => uniform_away_from_zero(&mut rng, &[n, c, l], gap),
        _ => uniform(&mut rng, &[n, c, l], -2.0, 2.0),
    };
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x],
        build: Box::new(move |tape, ids| {
            let y = match which {
                0 => tape.relu(ids[0]),
                1 => tape.leaky_relu(ids[0], 0.01),
                _ => tape.sigmoid(ids[0]),
            };
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn softmax_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50);
    let n = rng.random_range(1..=3);
    let d = rng.random_range(2..=6);
    let x = uniform(&mut rng, &[n, d], -2.0, 2.0);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x],
        build: Box::new(move |tape, ids| {
            let y = tape.softmax(ids[0]).unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn dropout_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0);
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(3..=8);
    let x = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let pool = projection_pool(&mut rng);
    let mask_seed = rng.random::<u64>();
    Case {
        leaves: vec![x],
        build: Box::new(move |tape, ids| {
            // The mask must be identical across FD evaluations, so the
            // mask RNG restarts from a fixed seed on every build.
            let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let y = tape
                .dropout(ids[0], 0.3, Mode::Training, &mut mask_rng)
                .unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn cross_entropy_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCE);
    let n = rng.random_range(1..=4);
    let d = rng.random_range(2..=6);
    let logits = uniform(&mut rng, &[n, d], -2.0, 2.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..d)).collect();
    Case {
        leaves: vec![logits],
        build: Box::new(move |tape, ids| {
            Built::plain(tape.cross_entropy(ids[0], &labels).unwrap())
        }),
    }
}

pub fn add_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAD);
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(3..=8);
    let a = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let b = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![a, b],
        build: Box::new(move |tape, ids| {
            let y = tape.add(ids[0], ids[1]).unwrap();
            Built::plain(scalarize(tape, y, &pool))
        }),
    }
}

pub fn flatten_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1);
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let l = rng.random_range(3..=8);
    let x = uniform(&mut rng, &[n, c, l], -1.0, 1.0);
    let pool = projection_pool(&mut rng);
    Case {
        leaves: vec![x],
        build: Box::new(move |tape, ids| Built::plain(scalarize(tape, ids[0], &pool))),
    }
}

/// Full residual block: conv-bn-lrelu-conv-bn, plus identity or projection
/// shortcut, sum, final leaky ReLU. Training-mode batch norm.
pub fn residual_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4E5);
    // The first trial pins the documented 4-channel, length-16 shape; later
    // trials randomize, alternating identity and projection shortcuts.
    let (c_in, c_out, l) = if seed == 0 {
        (4, 4, 16)
    } else {
        let c_in = rng.random_range(2..=4);
        let c_out = if seed % 2 == 0 { c_in } else { rng.random_range(2..=5) };
        (c_in, c_out, rng.random_range(8..=16))
    };
    let x = uniform(&mut rng, &[1, c_in, l], -1.0, 1.0);
    let w1 = uniform(&mut rng, &[c_out, c_in, 3], -0.7, 0.7);
    let b1 = uniform(&mut rng, &[c_out], -0.3, 0.3);
    let g1 = uniform(&mut rng, &[c_out], 0.5, 1.5);
    let be1 = uniform(&mut rng, &[c_out], -0.5, 0.5);
    let w2 = uniform(&mut rng, &[c_out, c_out, 3], -0.7, 0.7);
    let b2 = uniform(&mut rng, &[c_out], -0.3, 0.3);
    let g2 = uniform(&mut rng, &[c_out], 0.5, 1.5);
    let be2 = uniform(&mut rng, &[c_out], -0.5, 0.5);
    let mut leaves = vec![x, w1, b1, g1, be1, w2, b2, g2, be2];
    let projected = c_in != c_out;
    if projected {
        leaves.push(uniform(&mut rng, &[c_out, c_in, 1], -0.7, 0.7));
        leaves.push(uniform(&mut rng, &[c_out], -0.3, 0.3));
        leaves.push(uniform(&mut rng, &[c_out], 0.5, 1.5));
        leaves.push(uniform(&mut rng, &[c_out], -0.5, 0.5));
    }
    let pool = projection_pool(&mut rng);
    Case {
        leaves,
        build: Box::new(move |tape, ids| {
            let c1 = tape.conv1d(ids[0], ids[1], ids[2], 1, Padding::Same).unwrap();
            let (n1, _, _) = tape.batchnorm_train(c1, ids[3], ids[4], 1e-5).unwrap();
            let a1 = tape.leaky_relu(n1, 0.01);
            let c2 = tape.conv1d(a1, ids[5], ids[6], 1, Padding::Same).unwrap();
            let (n2, _, _) = tape.batchnorm_train(c2, ids[7], ids[8], 1e-5).unwrap();
            let skip = if projected {
                let cs = tape.conv1d(ids[0], ids[9], ids[10], 1, Padding::Same).unwrap();
                let (ns, _, _) = tape.batchnorm_train(cs, ids[11], ids[12], 1e-5).unwrap();
                ns
            } else {
                ids[0]
            };
            let sum = tape.add(n2, skip).unwrap();
            let out = tape.leaky_relu(sum, 0.01);
            Built {
                loss: scalarize(tape, out, &pool),
                kink_nodes: vec![n1, sum],
                pool_nodes: Vec::new(),
            }
        }),
    }
}

/// The documented composition: conv, batch norm, leaky ReLU, max-pool,
/// dense, cross-entropy, on a single-channel length-30 input.
pub fn chain_case<F: Scalar>(seed: u64) -> Case<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4A1);
    let x = uniform(&mut rng, &[1, 1, 30], -1.0, 1.0);
    let w = uniform(&mut rng, &[3, 1, 5], -0.7, 0.7);
    let b = uniform(&mut rng, &[3], -0.3, 0.3);
    let g = uniform(&mut rng, &[3], 0.5, 1.5);
    let be = uniform(&mut rng, &[3], -0.5, 0.5);
    // conv stride 2 valid: (30-5)/2+1 = 13; pool 3/2: (13-3)/2+1 = 6.
    let dw = uniform(&mut rng, &[4, 18], -0.7, 0.7);
    let db = uniform(&mut rng, &[4], -0.3, 0.3);
    let label = rng.random_range(0..4);
    Case {
        leaves: vec![x, w, b, g, be, dw, db],
        build: Box::new(move |tape, ids| {
            let c = tape.conv1d(ids[0], ids[1], ids[2], 2, Padding::Valid).unwrap();
            let (n, _, _) = tape.batchnorm_train(c, ids[3], ids[4], 1e-5).unwrap();
            let a = tape.leaky_relu(n, 0.01);
            let p = tape.maxpool1d(a, 3, 2).unwrap();
            let f = tape.flatten(p).unwrap();
            let d = tape.dense(f, ids[5], ids[6]).unwrap();
            let loss = tape.cross_entropy(d, &[label]).unwrap();
            // Leaky ReLU is monotone, so window ties in its output happen
            // exactly at window ties of the pre-activation; separation is
            // measured there, where values are not compressed.
            Built {
                loss,
                kink_nodes: vec![n],
                pool_nodes: vec![(n, 3, 2)],
            }
        }),
    }
}

// ── Test entry points ───────────────────────────────────────────────────

pub const STEP32: f64 = 1e-3;
pub const TOL32: f64 = 1e-3;
pub const STEP64: f64 = 1e-6;
pub const TOL64: f64 = 1e-5;
