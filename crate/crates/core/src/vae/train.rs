use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{composite_loss, VaeConfig, VaeModel};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::RoadGraph;
use crate::optim::{AdamState, Parameterized};
use crate::rng::SeedTree;
use crate::tensor::DenseMatrix;

/// Mean total loss per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VaeHistory {
    pub epoch_loss: Vec<f64>,
}

/// In-batch positive pairs plus as many uniformly drawn non-adjacent pairs.
/// Returned indices are batch-local.
pub(crate) fn batch_pairs(
    graph: &RoadGraph,
    batch: &[usize],
    rng: &mut impl Rng,
) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut pairs = Vec::new();
    for a in 0..batch.len() {
        for b in a + 1..batch.len() {
            if graph.has_edge(batch[a], batch[b]) {
                pairs.push((a, b));
            }
        }
    }
    let positives = pairs.len();
    let mut targets = vec![1.0; positives];
    if batch.len() < 2 {
        return (pairs, targets);
    }
    let mut drawn = 0;
    let mut tries = 0;
    while drawn < positives && tries < 20 * positives.max(1) {
        tries += 1;
        let a = rng.random_range(0..batch.len());
        let b = rng.random_range(0..batch.len());
        if a == b || graph.has_edge(batch[a], batch[b]) {
            continue;
        }
        pairs.push((a, b));
        targets.push(0.0);
        drawn += 1;
    }
    (pairs, targets)
}

/// Trains a VAE on every node's features; labels are never read.
pub fn train_vae(graph: &RoadGraph, config: &VaeConfig, seeds: &SeedTree) -> Result<(VaeModel, VaeHistory)> {
    let x = graph.features();
    if x.rows() == 0 {
        return Err(Error::MissingData("no nodes to train the VAE on".into()));
    }
    let mut model = VaeModel::new(x.cols(), config.clone(), seeds)?;
    let mut adam = AdamState::new(config.lr, model.params());
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut shuffle = seeds.rng("vae_shuffle");
    let mut noise = seeds.rng("vae_noise");
    let mut pair_rng = seeds.rng("vae_pairs");
    let mut history = VaeHistory::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape)?;
            let xb = tape.constant(x.select_rows(batch))?;
            let eps_data = (0..batch.len() * config.latent)
                .map(|_| noise.sample(StandardNormal))
                .collect();
            let eps = DenseMatrix::from_vec(batch.len(), config.latent, eps_data)?;
            let pass = model.pass(&mut tape, &vars, xb, eps)?;
            let (pairs, targets) = batch_pairs(graph, batch, &mut pair_rng);
            let logits = if pairs.is_empty() {
                None
            } else {
                Some(model.edge_logits(&mut tape, &vars, pass.z, &pairs)?)
            };
            let loss = composite_loss(
                &mut tape,
                xb,
                pass.recon,
                pass.mu,
                pass.logvar,
                logits,
                &targets,
                config.beta,
                config.gamma,
            )?;
            let value = tape.value(loss.total).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            let mut grads = tape.backward(loss.total)?;
            let g: Vec<DenseMatrix> = vars.iter().map(|&v| grads.take(v)).collect();
            adam.step(&mut model.params_mut(), &g)?;
            sum += value;
            batches += 1;
        }
        let mean = sum / batches as f64;
        history.epoch_loss.push(mean);
        if (epoch + 1) % 10 == 0 {
            log::info!("vae epoch {:>4}  loss {mean:.5}", epoch + 1);
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairs_are_balanced_and_correct() {
        let edges: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
        let g = RoadGraph::new((0..10).map(|i| i.to_string()).collect(), edges, DenseMatrix::zeros(10, 1)).unwrap();
        let batch: Vec<usize> = (0..10).collect();
        let (pairs, y) = batch_pairs(&g, &batch, &mut ChaCha8Rng::seed_from_u64(0));
        let pos = y.iter().filter(|&&t| t == 1.0).count();
        assert_eq!(pos, 9);
        assert_eq!(y.len(), 18);
        for (&(a, b), &t) in pairs.iter().zip(&y) {
            assert_eq!(g.has_edge(batch[a], batch[b]), t == 1.0);
        }
    }

    #[test]
    fn loss_decreases_on_small_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(0.3..0.7)).collect();
        let x = DenseMatrix::from_vec(n, 3, data).unwrap();
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let g = RoadGraph::new((0..n).map(|i| i.to_string()).collect(), edges, x).unwrap();
        let config = VaeConfig {
            hidden1: 16,
            hidden2: 8,
            latent: 4,
            epochs: 30,
            batch_size: 16,
            ..VaeConfig::default()
        };
        let (_, h) = train_vae(&g, &config, &SeedTree::new(1)).unwrap();
        assert!(h.epoch_loss.last().unwrap() < &h.epoch_loss[0]);
    }
}
