use super::{Head, ModelConfig, ModelKind, Prediction};
use crate::error::Result;
use crate::nn::{
    axpy, tower_margin, Block, BlockCache, Dense, Init, Params, RngState, Tower, TowerCache,
    Transfer, TransferCache,
};
use crate::simlog::one_hot_position;

/// Click/conversion multi-task model without a dedicated position component.
///
/// `NaiveMt` ignores the position entirely; `PosFeatMt` appends the one-hot
/// position to the features before the shared embedding.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub config: ModelConfig,
    pub embed: Dense,
    pub ctr_tower: Tower,
    pub cvr_tower: Tower,
    pub ctr_head: Head,
    pub info_ctr: Block,
    pub cvr_transfer: Transfer,
    pub cvr_head: Head,
}

#[derive(Debug, Clone)]
pub struct BaselineTrace {
    pub prediction: Prediction,
    input: Vec<f64>,
    ctr_tower: TowerCache,
    cvr_tower: TowerCache,
    t_ctr: Vec<f64>,
    ctr_logit: f64,
    info: BlockCache,
    transfer: TransferCache,
    a_cvr: Vec<f64>,
    cvr_logit: f64,
}

impl BaselineTrace {
    pub(crate) fn relu_margin(&self) -> f64 {
        tower_margin(&self.ctr_tower)
            .min(tower_margin(&self.cvr_tower))
            .min(self.info.relu_margin())
    }
}

impl BaselineModel {
    pub fn new(config: ModelConfig, rng: &mut RngState) -> Self {
        let c = &config;
        let input = match c.kind {
            ModelKind::PosFeatMt => c.feature_dim + c.max_position,
            _ => c.feature_dim,
        };
        let embed = Dense::new(input, c.d_emb, Init::Xavier, rng);
        let ctr_tower = Tower::new(c.d_emb, c.d_tower, c.tower_depth, rng);
        let cvr_tower = Tower::new(c.d_emb, c.d_tower, c.tower_depth, rng);
        let ctr_head = Head::new(c.d_tower, rng);
        let info_ctr = Block::new(c.d_tower, c.d_tower, rng);
        let cvr_transfer = Transfer::new(c.transfer, c.d_tower, c.d_att, rng);
        let cvr_head = Head::new(cvr_transfer.output_dim(), rng);
        Self {
            config,
            embed,
            ctr_tower,
            cvr_tower,
            ctr_head,
            info_ctr,
            cvr_transfer,
            cvr_head,
        }
    }

    fn input(&self, features: &[f64], position: usize) -> Result<Vec<f64>> {
        let mut x = features.to_vec();
        if self.config.kind == ModelKind::PosFeatMt {
            x.extend(one_hot_position(position, self.config.max_position)?);
        }
        Ok(x)
    }

    pub(super) fn predict_positions(
        &self,
        features: &[f64],
        positions: &[usize],
    ) -> Result<Vec<Prediction>> {
        if self.config.kind == ModelKind::NaiveMt {
            let t = self.forward_trace(features, 1, None)?;
            return Ok(vec![t.prediction; positions.len()]);
        }
        positions
            .iter()
            .map(|&p| Ok(self.forward_trace(features, p, None)?.prediction))
            .collect()
    }

    pub(super) fn forward_trace(
        &self,
        features: &[f64],
        position: usize,
        mut rng: Option<&mut RngState>,
    ) -> Result<BaselineTrace> {
        let rate = self.config.dropout;
        let input = self.input(features, position)?;
        let v = self.embed.forward(&input)?;
        let (t_ctr, ctr_cache) = self.ctr_tower.forward(&v, rate, rng.as_deref_mut())?;
        let (t_cvr, cvr_cache) = self.cvr_tower.forward(&v, rate, rng.as_deref_mut())?;
        let (ctr_logit, p_ctr) = self.ctr_head.forward(&t_ctr)?;
        let (info, info_cache) = self.info_ctr.forward(&t_ctr, rate, rng.as_deref_mut())?;
        let (a_cvr, transfer) = self.cvr_transfer.forward(&t_cvr, &info)?;
        let (cvr_logit, p_cvr) = self.cvr_head.forward(&a_cvr)?;
        Ok(BaselineTrace {
            prediction: Prediction::plain(p_ctr, p_cvr),
            input,
            ctr_tower: ctr_cache,
            cvr_tower: cvr_cache,
            t_ctr,
            ctr_logit,
            info: info_cache,
            transfer,
            a_cvr,
            cvr_logit,
        })
    }

    pub(super) fn backward(
        &mut self,
        t: &BaselineTrace,
        grad_ctr: f64,
        grad_cvr: f64,
    ) -> Result<()> {
        let mut g_tctr = self.ctr_head.backward(&t.t_ctr, t.ctr_logit, grad_ctr)?;
        let g_acvr = self.cvr_head.backward(&t.a_cvr, t.cvr_logit, grad_cvr)?;
        let (g_tcvr, g_info) = self.cvr_transfer.backward(&t.transfer, &g_acvr)?;
        axpy(1.0, &self.info_ctr.backward(&t.info, &g_info)?, &mut g_tctr);
        let mut g_v = self.ctr_tower.backward(&t.ctr_tower, &g_tctr)?;
        axpy(
            1.0,
            &self.cvr_tower.backward(&t.cvr_tower, &g_tcvr)?,
            &mut g_v,
        );
        self.embed.backward(&t.input, &g_v)?;
        Ok(())
    }
}

impl Params for BaselineModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.embed.visit(f);
        self.ctr_tower.visit(f);
        self.cvr_tower.visit(f);
        self.ctr_head.visit(f);
        self.info_ctr.visit(f);
        self.cvr_transfer.visit(f);
        self.cvr_head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.embed.visit_mut(f);
        self.ctr_tower.visit_mut(f);
        self.cvr_tower.visit_mut(f);
        self.ctr_head.visit_mut(f);
        self.info_ctr.visit_mut(f);
        self.cvr_transfer.visit_mut(f);
        self.cvr_head.visit_mut(f);
    }
}
