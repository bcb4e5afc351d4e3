use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::Linear;
use crate::optim::{glorot_uniform, Parameterized};
use crate::rng::SeedTree;
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub latent: usize,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden1: 128,
            hidden2: 64,
            latent: 32,
            beta: 1.0,
            gamma: 0.5,
            lr: 1e-3,
            epochs: 100,
            batch_size: 64,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 || self.latent == 0 {
            return Err(Error::Config("VAE widths must be positive".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config("VAE learning rate must be positive".into()));
        }
        if self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("VAE loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("VAE batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder `d → h1 → h2 → (μ, log σ²)`, decoder `latent → h2 → h1 → d` with
/// a sigmoid output, and a bilinear edge scorer `σ(z_iᵀ W z_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub d: usize,
    pub enc1: Linear,
    pub enc2: Linear,
    pub mu: Linear,
    pub logvar: Linear,
    pub dec1: Linear,
    pub dec2: Linear,
    pub dec3: Linear,
    pub w_edge: DenseMatrix,
}

/// Handles for one pass through the VAE.
#[derive(Clone, Copy, Debug)]
pub struct VaePass {
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
    pub recon: Var,
}

/// Positions of the bound parameters, in [`Parameterized::params`] order.
struct Slots<'a>(&'a [Var]);

impl Slots<'_> {
    fn linear(&self, k: usize) -> (Var, Var) {
        (self.0[2 * k], self.0[2 * k + 1])
    }

    fn edge(&self) -> Var {
        self.0[14]
    }
}

impl VaeModel {
    pub fn new(d: usize, config: VaeConfig, seeds: &SeedTree) -> Result<Self> {
        config.validate()?;
        if d == 0 {
            return Err(Error::shape("VaeModel::new", "zero feature width"));
        }
        let mut rng = seeds.rng("vae_init");
        let (h1, h2, l) = (config.hidden1, config.hidden2, config.latent);
        Ok(Self {
            d,
            enc1: Linear::new(d, h1, &mut rng),
            enc2: Linear::new(h1, h2, &mut rng),
            mu: Linear::new(h2, l, &mut rng),
            logvar: Linear::new(h2, l, &mut rng),
            dec1: Linear::new(l, h2, &mut rng),
            dec2: Linear::new(h2, h1, &mut rng),
            dec3: Linear::new(h1, d, &mut rng),
            w_edge: glorot_uniform(l, l, &mut rng),
            config,
        })
    }

    pub fn latent(&self) -> usize {
        self.config.latent
    }

    fn check_vars(&self, vars: &[Var]) -> Result<()> {
        if vars.len() != 15 {
            return Err(Error::shape("vae", "parameter handle count"));
        }
        Ok(())
    }

    pub fn encode(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        self.check_vars(vars)?;
        if tape.shape(x).1 != self.d {
            return Err(Error::shape(
                "vae_encode",
                format!("{} columns, model expects {}", tape.shape(x).1, self.d),
            ));
        }
        let s = Slots(vars);
        let (w, b) = s.linear(0);
        let h = Linear::forward(tape, x, w, b)?;
        let h = tape.relu(h)?;
        let (w, b) = s.linear(1);
        let h = Linear::forward(tape, h, w, b)?;
        let h = tape.relu(h)?;
        let (w, b) = s.linear(2);
        let mu = Linear::forward(tape, h, w, b)?;
        let (w, b) = s.linear(3);
        let logvar = Linear::forward(tape, h, w, b)?;
        Ok((mu, logvar))
    }

    /// `z = μ + exp(½ log σ²) ⊙ ε` with `ε` supplied by the caller.
    pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, eps: DenseMatrix) -> Result<Var> {
        if tape.shape(mu) != eps.shape() {
            return Err(Error::shape("reparameterize", "noise shape"));
        }
        let half = tape.scale(logvar, 0.5)?;
        let sigma = tape.exp(half)?;
        let eps = tape.constant(eps)?;
        let noise = tape.mul(sigma, eps)?;
        tape.add(mu, noise)
    }

    pub fn decode(&self, tape: &mut Tape, vars: &[Var], z: Var) -> Result<Var> {
        self.check_vars(vars)?;
        if tape.shape(z).1 != self.latent() {
            return Err(Error::shape("vae_decode", "latent width"));
        }
        let s = Slots(vars);
        let (w, b) = s.linear(4);
        let h = Linear::forward(tape, z, w, b)?;
        let h = tape.relu(h)?;
        let (w, b) = s.linear(5);
        let h = Linear::forward(tape, h, w, b)?;
        let h = tape.relu(h)?;
        let (w, b) = s.linear(6);
        let out = Linear::forward(tape, h, w, b)?;
        tape.sigmoid(out)
    }

    /// Edge logits `z_iᵀ W z_j` for row pairs of `z`, as an `E × 1` column.
    pub fn edge_logits(&self, tape: &mut Tape, vars: &[Var], z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        self.check_vars(vars)?;
        let left = tape.matmul(z, Slots(vars).edge())?;
        let i: Arc<[usize]> = pairs.iter().map(|p| p.0).collect::<Vec<_>>().into();
        let j: Arc<[usize]> = pairs.iter().map(|p| p.1).collect::<Vec<_>>().into();
        let a = tape.gather_rows(left, i)?;
        let b = tape.gather_rows(z, j)?;
        let prod = tape.mul(a, b)?;
        tape.row_sum(prod)
    }

    /// Full pass over a batch with externally drawn noise (zeros give z = μ).
    pub fn pass(&self, tape: &mut Tape, vars: &[Var], x: Var, eps: DenseMatrix) -> Result<VaePass> {
        let (mu, logvar) = self.encode(tape, vars, x)?;
        let z = Self::reparameterize(tape, mu, logvar, eps)?;
        let recon = self.decode(tape, vars, z)?;
        Ok(VaePass {
            mu,
            logvar,
            z,
            recon,
        })
    }

    /// Deterministic `(μ, σ)` for feature rows.
    pub fn encode_values(&self, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let xv = tape.constant(x.clone())?;
        let (mu, logvar) = self.encode(&mut tape, &vars, xv)?;
        let sigma = tape.value(logvar).map(|v| (0.5 * v).exp());
        Ok((tape.value(mu).clone(), sigma))
    }

    pub fn decode_values(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let zv = tape.constant(z.clone())?;
        let out = self.decode(&mut tape, &vars, zv)?;
        Ok(tape.value(out).clone())
    }

    /// `p_ij = σ(z_iᵀ W z_j)`.
    pub fn edge_prob(&self, zi: &[f64], zj: &[f64]) -> Result<f64> {
        let l = self.latent();
        if zi.len() != l || zj.len() != l {
            return Err(Error::shape("edge_prob", "latent width"));
        }
        let s: f64 = zi
            .iter()
            .enumerate()
            .map(|(a, x)| x * zj.iter().enumerate().map(|(b, y)| self.w_edge.get(a, b) * y).sum::<f64>())
            .sum();
        Ok(crate::autodiff::logistic(s))
    }

    /// Draws `m` latent vectors from 𝒩(0, I), decodes and clips to [0, 1].
    pub fn generate(&self, m: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
        if m == 0 {
            return Ok(DenseMatrix::zeros(0, self.d));
        }
        let data = (0..m * self.latent()).map(|_| rng.sample(StandardNormal)).collect();
        let z = DenseMatrix::from_vec(m, self.latent(), data)?;
        Ok(self.decode_values(&z)?.map(|v| v.clamp(0.0, 1.0)))
    }
}

impl Parameterized for VaeModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(15);
        for layer in ["enc1", "enc2", "mu", "logvar", "dec1", "dec2", "dec3"] {
            names.push(format!("{layer}.weight"));
            names.push(format!("{layer}.bias"));
        }
        names.push("w_edge".into());
        names
    }

    fn params(&self) -> Vec<&DenseMatrix> {
        let mut out = Vec::with_capacity(15);
        for l in [
            &self.enc1,
            &self.enc2,
            &self.mu,
            &self.logvar,
            &self.dec1,
            &self.dec2,
            &self.dec3,
        ] {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.w_edge);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = Vec::with_capacity(15);
        for l in [
            &mut self.enc1,
            &mut self.enc2,
            &mut self.mu,
            &mut self.logvar,
            &mut self.dec1,
            &mut self.dec2,
            &mut self.dec3,
        ] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.w_edge);
        out
    }
}

/// Closed-form `KL(𝒩(μ, σ²) ‖ 𝒩(0, I)) = ½ Σ (μ² + σ² − log σ² − 1)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - lv - 1.0))
        .sum()
}

/// Components of the composite VAE objective.
#[derive(Clone, Copy, Debug)]
pub struct VaeLoss {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
    pub bce: Option<Var>,
}

/// `‖x − x̃‖²` (batch mean) `+ β·KL` (batch mean) `+ γ·BCE` (mean over pairs).
///
/// BCE is evaluated from logits as `softplus(l) − y·l`. With no pairs the
/// edge term is omitted.
#[allow(clippy::too_many_arguments)]
pub fn composite_loss(
    tape: &mut Tape,
    x: Var,
    recon: Var,
    mu: Var,
    logvar: Var,
    edge_logits: Option<Var>,
    edge_targets: &[f64],
    beta: f64,
    gamma: f64,
) -> Result<VaeLoss> {
    let batch = tape.shape(x).0;
    if batch == 0 {
        return Err(Error::MissingData("empty VAE batch".into()));
    }
    let inv_b = 1.0 / batch as f64;
    let diff = tape.sub(x, recon)?;
    let sq = tape.mul(diff, diff)?;
    let rec = tape.sum(sq)?;
    let rec = tape.scale(rec, inv_b)?;

    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar)?;
    let t = tape.add(mu2, var)?;
    let t = tape.sub(t, logvar)?;
    let t = tape.add_scalar(t, -1.0)?;
    let kl = tape.sum(t)?;
    let kl = tape.scale(kl, 0.5 * inv_b)?;

    let mut total = tape.scale(kl, beta)?;
    total = tape.add(rec, total)?;
    let mut bce = None;
    if let Some(logits) = edge_logits {
        let e = tape.shape(logits).0;
        if e != edge_targets.len() {
            return Err(Error::shape("composite_loss", "edge targets"));
        }
        if e > 0 {
            let sp = tape.softplus(logits)?;
            let y = tape.constant(DenseMatrix::column(edge_targets))?;
            let yl = tape.mul(y, logits)?;
            let per = tape.sub(sp, yl)?;
            let b = tape.sum(per)?;
            let b = tape.scale(b, 1.0 / e as f64)?;
            let weighted = tape.scale(b, gamma)?;
            total = tape.add(total, weighted)?;
            bce = Some(b);
        }
    }
    Ok(VaeLoss {
        total,
        recon: rec,
        kl,
        bce,
    })
}
