//! Parallel and sequential hybrids of the three branches plus task heads.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{plan, Block};
use super::layers::{GatLayer, GcnLayer, SageLayer};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{RoadGraph, N_CLASSES};
use crate::optim::{glorot_uniform, Parameterized};
use crate::rng::SeedTree;
use crate::tensor::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Parallel,
    Sequential,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Self::Parallel),
            "sequential" => Ok(Self::Sequential),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchMask {
    pub gcn: bool,
    pub gat: bool,
    pub sage: bool,
}

impl Default for BranchMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl BranchMask {
    pub const ALL: Self = Self {
        gcn: true,
        gat: true,
        sage: true,
    };

    pub fn only(branch: Branch) -> Self {
        Self {
            gcn: branch == Branch::Gcn,
            gat: branch == Branch::Gat,
            sage: branch == Branch::Sage,
        }
    }

    pub fn enabled(&self) -> Vec<Branch> {
        let mut out = Vec::with_capacity(3);
        if self.gcn {
            out.push(Branch::Gcn);
        }
        if self.gat {
            out.push(Branch::Gat);
        }
        if self.sage {
            out.push(Branch::Sage);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.enabled().len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Gcn,
    Gat,
    Sage,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gcn => "gcn",
            Self::Gat => "gat",
            Self::Sage => "sage",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    pub mode: FusionMode,
    pub mask: BranchMask,
    pub hidden: usize,
    pub dropout: f64,
    pub sage_sample: usize,
    /// Softmax-weighted scalar gate per branch before concatenation.
    pub gated_fusion: bool,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Parallel,
            mask: BranchMask::ALL,
            hidden: 64,
            dropout: 0.5,
            sage_sample: 10,
            gated_fusion: false,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mask.count() == 0 {
            return Err(Error::AllBranchesDisabled);
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.sage_sample == 0 {
            return Err(Error::Config("sage sample size must be positive".into()));
        }
        Ok(())
    }

    /// Width fed to the heads.
    pub fn fused_width(&self) -> usize {
        match self.mode {
            FusionMode::Parallel => self.hidden * self.mask.count(),
            FusionMode::Sequential => self.hidden,
        }
    }
}

/// Affine map `x·W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot_uniform(d_in, d_out, rng),
            bias: DenseMatrix::zeros(1, d_out),
        }
    }

    pub fn forward(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let z = tape.matmul(x, weight)?;
        tape.add_row(z, bias)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub config: HybridConfig,
    pub d_in: usize,
    pub gcn: Option<GcnLayer>,
    pub gat: Option<GatLayer>,
    pub sage: Option<SageLayer>,
    /// `1 × branches` gate logits when gated fusion is on.
    pub gate: Option<DenseMatrix>,
    pub reg_head: Linear,
    pub clf_head: Linear,
}

/// Tape handles of one forward pass, rows aligned with the requested targets.
#[derive(Clone, Copy, Debug)]
pub struct HybridOutput {
    pub reg: Var,
    pub logits: Var,
    pub probs: Var,
}

impl HybridModel {
    /// Each branch and head draws from its own named stream, so disabling a
    /// branch leaves the initial weights of the others unchanged.
    pub fn new(config: HybridConfig, d_in: usize, seeds: &SeedTree) -> Result<Self> {
        config.validate()?;
        if d_in == 0 {
            return Err(Error::shape("HybridModel::new", "zero input width"));
        }
        let h = config.hidden;
        let enabled = config.mask.enabled();
        let d_for = |b: Branch| match config.mode {
            FusionMode::Parallel => d_in,
            FusionMode::Sequential => {
                if enabled[0] == b {
                    d_in
                } else {
                    h
                }
            }
        };
        let gcn = config
            .mask
            .gcn
            .then(|| GcnLayer::new(d_for(Branch::Gcn), h, &mut seeds.rng("gcn")));
        let gat = config
            .mask
            .gat
            .then(|| GatLayer::new(d_for(Branch::Gat), h, &mut seeds.rng("gat")));
        let sage = config.mask.sage.then(|| {
            SageLayer::new(d_for(Branch::Sage), h, config.sage_sample, &mut seeds.rng("sage"))
        });
        let gate = (config.gated_fusion && config.mode == FusionMode::Parallel)
            .then(|| DenseMatrix::zeros(1, enabled.len()));
        let fused = config.fused_width();
        Ok(Self {
            reg_head: Linear::new(fused, 1, &mut seeds.rng("reg_head")),
            clf_head: Linear::new(fused, N_CLASSES, &mut seeds.rng("clf_head")),
            config,
            d_in,
            gcn,
            gat,
            sage,
            gate,
        })
    }

    pub fn fused_width(&self) -> usize {
        self.config.fused_width()
    }

    /// Predictions for `targets` (node indices of `graph`).
    ///
    /// `vars` must come from [`Parameterized::bind`] on this model. Only the
    /// receptive field of `targets` is evaluated. The first draw from `rng`
    /// keys neighbor sampling; dropout masks follow in training mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        graph: &RoadGraph,
        targets: &[usize],
        rng: &mut impl Rng,
        training: bool,
    ) -> Result<HybridOutput> {
        if graph.n_features() != self.d_in {
            return Err(Error::shape(
                "hybrid_forward",
                format!("{} feature columns, model expects {}", graph.n_features(), self.d_in),
            ));
        }
        if vars.len() != self.params().len() {
            return Err(Error::shape("hybrid_forward", "parameter handle count"));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("counted");
        let gcn_w = self.gcn.as_ref().map(|_| next());
        let gat_w = self.gat.as_ref().map(|_| (next(), next()));
        let sage_w = self.sage.as_ref().map(|_| next());
        let gate = self.gate.as_ref().map(|_| next());
        let (reg_w, reg_b, clf_w, clf_b) = (next(), next(), next(), next());
        let sample_key: u64 = rng.random();

        let fused = match self.config.mode {
            FusionMode::Parallel => {
                let block = Block::build(graph, targets);
                let x = tape.constant(graph.features().select_rows(&block.src))?;
                let mut parts = Vec::with_capacity(3);
                if let (Some(l), Some(w)) = (&self.gcn, gcn_w) {
                    parts.push(l.forward(tape, &block, x, w)?);
                }
                if let (Some(l), Some((w, a))) = (&self.gat, gat_w) {
                    parts.push(l.forward(tape, &block, x, w, a)?);
                }
                if let (Some(l), Some(w)) = (&self.sage, sage_w) {
                    parts.push(l.forward(tape, &block, x, w, sample_key)?);
                }
                if let Some(g) = gate {
                    let weights = tape.softmax_rows(g)?;
                    for (k, part) in parts.iter_mut().enumerate() {
                        let wk = tape.slice_cols(weights, k, 1)?;
                        *part = tape.mul_scalar_var(*part, wk)?;
                    }
                }
                tape.concat_cols(&parts)?
            }
            FusionMode::Sequential => {
                let stages = self.config.mask.enabled();
                let blocks = plan(graph, targets, stages.len());
                let mut h = tape.constant(graph.features().select_rows(&blocks[0].src))?;
                for (stage, block) in stages.iter().zip(&blocks) {
                    h = match stage {
                        Branch::Gcn => {
                            let l = self.gcn.as_ref().expect("enabled");
                            l.forward(tape, block, h, gcn_w.expect("enabled"))?
                        }
                        Branch::Gat => {
                            let l = self.gat.as_ref().expect("enabled");
                            let (w, a) = gat_w.expect("enabled");
                            l.forward(tape, block, h, w, a)?
                        }
                        Branch::Sage => {
                            let l = self.sage.as_ref().expect("enabled");
                            l.forward(tape, block, h, sage_w.expect("enabled"), sample_key)?
                        }
                    };
                }
                h
            }
        };
        let fused = tape.dropout(fused, self.config.dropout, rng, training)?;
        let reg = Linear::forward(tape, fused, reg_w, reg_b)?;
        let logits = Linear::forward(tape, fused, clf_w, clf_b)?;
        let probs = tape.softmax_rows(logits)?;
        Ok(HybridOutput { reg, logits, probs })
    }

    /// Eval-mode predictions as plain values: `(reg column, probability rows)`.
    ///
    /// A node's prediction depends only on `seed`, not on the other targets.
    pub fn predict(&self, graph: &RoadGraph, targets: &[usize], seed: u64) -> Result<(Vec<f64>, DenseMatrix)> {
        let mut rng = <crate::rng::StreamRng as rand::SeedableRng>::seed_from_u64(seed);
        let rng = &mut rng;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let out = self.forward(&mut tape, &vars, graph, targets, rng, false)?;
        Ok((tape.value(out.reg).data().to_vec(), tape.value(out.probs).clone()))
    }

    /// Concatenation order of the GraphSAGE input, recorded in checkpoints.
    pub fn sage_concat_order() -> &'static str {
        "neighbor_mean,self"
    }
}

impl Parameterized for HybridModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.gcn.is_some() {
            names.push("gcn.weight".into());
        }
        if self.gat.is_some() {
            names.push("gat.weight".into());
            names.push("gat.attention".into());
        }
        if self.sage.is_some() {
            names.push("sage.weight".into());
        }
        if self.gate.is_some() {
            names.push("fusion.gate".into());
        }
        for head in ["reg_head", "clf_head"] {
            names.push(format!("{head}.weight"));
            names.push(format!("{head}.bias"));
        }
        names
    }

    fn params(&self) -> Vec<&DenseMatrix> {
        let mut out = Vec::new();
        if let Some(l) = &self.gcn {
            out.push(&l.weight);
        }
        if let Some(l) = &self.gat {
            out.push(&l.weight);
            out.push(&l.attention);
        }
        if let Some(l) = &self.sage {
            out.push(&l.weight);
        }
        if let Some(g) = &self.gate {
            out.push(g);
        }
        out.extend([
            &self.reg_head.weight,
            &self.reg_head.bias,
            &self.clf_head.weight,
            &self.clf_head.bias,
        ]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = Vec::new();
        if let Some(l) = &mut self.gcn {
            out.push(&mut l.weight);
        }
        if let Some(l) = &mut self.gat {
            out.push(&mut l.weight);
            out.push(&mut l.attention);
        }
        if let Some(l) = &mut self.sage {
            out.push(&mut l.weight);
        }
        if let Some(g) = &mut self.gate {
            out.push(g);
        }
        out.push(&mut self.reg_head.weight);
        out.push(&mut self.reg_head.bias);
        out.push(&mut self.clf_head.weight);
        out.push(&mut self.clf_head.bias);
        out
    }
}

/// Shared handle type for index lists recorded on the tape.
pub(crate) fn arc_indices(v: &[usize]) -> Arc<[usize]> {
    Arc::from(v)
}
