use super::{Head, ModelConfig, Prediction};
use crate::error::Result;
use crate::nn::{
    axpy, tower_margin, Block, BlockCache, Dense, Init, Params, RngState, Tower, TowerCache,
    Transfer, TransferCache,
};
use crate::simlog::one_hot_position;

/// Position-aware click-conversion model.
///
/// ```text
/// p_ctr = P(s|p) · P(click | f, s)
/// p_cvr = p_ctr · P(conv | f, click, s)
/// ```
///
/// `P(s|p)` comes from a single dense unit over the one-hot position, so the
/// two conditional heads never see the position.
#[derive(Debug, Clone)]
pub struct PaccModel {
    pub config: ModelConfig,
    pub embed: Dense,
    pub ctr_tower: Tower,
    pub cvr_tower: Tower,
    pub ctr_head: Head,
    pub info_ctr: Block,
    pub cvr_transfer: Transfer,
    pub cvr_head: Head,
    pub position_head: Head,
}

#[derive(Debug, Clone)]
pub struct PaccTrace {
    pub prediction: Prediction,
    features: Vec<f64>,
    ctr_tower: TowerCache,
    cvr_tower: TowerCache,
    t_ctr: Vec<f64>,
    ctr_logit: f64,
    info: BlockCache,
    transfer: TransferCache,
    a_cvr: Vec<f64>,
    cvr_logit: f64,
    one_hot: Vec<f64>,
    seen_logit: f64,
}

/// Position-free part of the forward pass.
struct FeaturePath {
    p_ctr_given_seen: f64,
    p_cvr_given_click_seen: f64,
}

impl PaccTrace {
    pub(crate) fn relu_margin(&self) -> f64 {
        tower_margin(&self.ctr_tower)
            .min(tower_margin(&self.cvr_tower))
            .min(self.info.relu_margin())
    }
}

impl PaccModel {
    pub fn new(config: ModelConfig, rng: &mut RngState) -> Self {
        let c = &config;
        let embed = Dense::new(c.feature_dim, c.d_emb, Init::Xavier, rng);
        let ctr_tower = Tower::new(c.d_emb, c.d_tower, c.tower_depth, rng);
        let cvr_tower = Tower::new(c.d_emb, c.d_tower, c.tower_depth, rng);
        let ctr_head = Head::new(c.d_tower, rng);
        let info_ctr = Block::new(c.d_tower, c.d_tower, rng);
        let cvr_transfer = Transfer::new(c.transfer, c.d_tower, c.d_att, rng);
        let cvr_head = Head::new(cvr_transfer.output_dim(), rng);
        let position_head = Head::zeroed(c.max_position, rng);
        Self {
            config,
            embed,
            ctr_tower,
            cvr_tower,
            ctr_head,
            info_ctr,
            cvr_transfer,
            cvr_head,
            position_head,
        }
    }

    fn feature_path(&self, features: &[f64]) -> Result<FeaturePath> {
        let v = self.embed.forward(features)?;
        let (t_ctr, _) = self.ctr_tower.forward(&v, self.config.dropout, None)?;
        let (t_cvr, _) = self.cvr_tower.forward(&v, self.config.dropout, None)?;
        let (_, p_ctr_given_seen) = self.ctr_head.forward(&t_ctr)?;
        let (info, _) = self.info_ctr.forward(&t_ctr, self.config.dropout, None)?;
        let (a_cvr, _) = self.cvr_transfer.forward(&t_cvr, &info)?;
        let (_, p_cvr_given_click_seen) = self.cvr_head.forward(&a_cvr)?;
        Ok(FeaturePath {
            p_ctr_given_seen,
            p_cvr_given_click_seen,
        })
    }

    fn seen(&self, position: usize) -> Result<f64> {
        let one_hot = one_hot_position(position, self.config.max_position)?;
        Ok(self.position_head.forward(&one_hot)?.1)
    }

    /// Learned `P(s|p)` for every position.
    pub fn propensities(&self) -> Vec<f64> {
        (1..=self.config.max_position)
            .map(|p| self.seen(p).expect("position in range"))
            .collect()
    }

    fn combine(path: &FeaturePath, p_seen: f64) -> Prediction {
        let p_ctr = p_seen * path.p_ctr_given_seen;
        Prediction {
            p_ctr,
            p_cvr: p_ctr * path.p_cvr_given_click_seen,
            p_seen: Some(p_seen),
            p_ctr_given_seen: Some(path.p_ctr_given_seen),
            p_cvr_given_click_seen: Some(path.p_cvr_given_click_seen),
        }
    }

    pub(super) fn predict_positions(
        &self,
        features: &[f64],
        positions: &[usize],
    ) -> Result<Vec<Prediction>> {
        let path = self.feature_path(features)?;
        positions
            .iter()
            .map(|&p| Ok(Self::combine(&path, self.seen(p)?)))
            .collect()
    }

    pub(super) fn forward_trace(
        &self,
        features: &[f64],
        position: usize,
        mut rng: Option<&mut RngState>,
    ) -> Result<PaccTrace> {
        let rate = self.config.dropout;
        let v = self.embed.forward(features)?;
        let (t_ctr, ctr_cache) = self.ctr_tower.forward(&v, rate, rng.as_deref_mut())?;
        let (t_cvr, cvr_cache) = self.cvr_tower.forward(&v, rate, rng.as_deref_mut())?;
        let (ctr_logit, p_ctr_given_seen) = self.ctr_head.forward(&t_ctr)?;
        let (info, info_cache) = self.info_ctr.forward(&t_ctr, rate, rng.as_deref_mut())?;
        let (a_cvr, transfer_cache) = self.cvr_transfer.forward(&t_cvr, &info)?;
        let (cvr_logit, p_cvr_given_click_seen) = self.cvr_head.forward(&a_cvr)?;
        let one_hot = one_hot_position(position, self.config.max_position)?;
        let (seen_logit, p_seen) = self.position_head.forward(&one_hot)?;

        let path = FeaturePath {
            p_ctr_given_seen,
            p_cvr_given_click_seen,
        };
        Ok(PaccTrace {
            prediction: Self::combine(&path, p_seen),
            features: features.to_vec(),
            ctr_tower: ctr_cache,
            cvr_tower: cvr_cache,
            t_ctr,
            ctr_logit,
            info: info_cache,
            transfer: transfer_cache,
            a_cvr,
            cvr_logit,
            one_hot,
            seen_logit,
        })
    }

    pub(super) fn backward(&mut self, t: &PaccTrace, grad_ctr: f64, grad_cvr: f64) -> Result<()> {
        let pred = &t.prediction;
        let p_seen = pred.p_seen.expect("pacc prediction");
        let p_cs = pred.p_ctr_given_seen.expect("pacc prediction");
        let p_vcs = pred.p_cvr_given_click_seen.expect("pacc prediction");

        // p_cvr = p_ctr · p_vcs, p_ctr = p_seen · p_cs
        let d_ctr = grad_ctr + grad_cvr * p_vcs;
        let d_vcs = grad_cvr * pred.p_ctr;
        let d_seen = d_ctr * p_cs;
        let d_cs = d_ctr * p_seen;

        self.position_head
            .backward(&t.one_hot, t.seen_logit, d_seen)?;

        let mut g_tctr = self.ctr_head.backward(&t.t_ctr, t.ctr_logit, d_cs)?;
        let g_acvr = self.cvr_head.backward(&t.a_cvr, t.cvr_logit, d_vcs)?;
        let (g_tcvr, g_info) = self.cvr_transfer.backward(&t.transfer, &g_acvr)?;
        axpy(1.0, &self.info_ctr.backward(&t.info, &g_info)?, &mut g_tctr);

        let mut g_v = self.ctr_tower.backward(&t.ctr_tower, &g_tctr)?;
        axpy(
            1.0,
            &self.cvr_tower.backward(&t.cvr_tower, &g_tcvr)?,
            &mut g_v,
        );
        self.embed.backward(&t.features, &g_v)?;
        Ok(())
    }
}

impl Params for PaccModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.embed.visit(f);
        self.ctr_tower.visit(f);
        self.cvr_tower.visit(f);
        self.ctr_head.visit(f);
        self.info_ctr.visit(f);
        self.cvr_transfer.visit(f);
        self.cvr_head.visit(f);
        self.position_head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.embed.visit_mut(f);
        self.ctr_tower.visit_mut(f);
        self.cvr_tower.visit_mut(f);
        self.ctr_head.visit_mut(f);
        self.info_ctr.visit_mut(f);
        self.cvr_transfer.visit_mut(f);
        self.cvr_head.visit_mut(f);
        self.position_head.visit_mut(f);
    }
}
