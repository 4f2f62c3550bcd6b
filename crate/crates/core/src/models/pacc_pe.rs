use super::{Head, ModelConfig, Prediction};
use crate::error::Result;
use crate::nn::{
    axpy, tower_margin, Block, BlockCache, Dense, Init, Params, RngState, Tower, TowerCache,
    Transfer, TransferCache,
};
use crate::simlog::one_hot_position;

/// PACC with position embedding.
///
/// A position tower turns the one-hot position into `INFO_pos`, which the
/// click path attends over together with its own tower output. The
/// conversion path attends over `[T_cvr; INFO_ctr]`, where `INFO_ctr` is
/// projected from the click path's attention output, so conversion sees the
/// position only through the click path.
#[derive(Debug, Clone)]
pub struct PaccPeModel {
    pub config: ModelConfig,
    pub embed: Dense,
    pub ctr_tower: Tower,
    pub cvr_tower: Tower,
    pub pos_tower: Tower,
    pub info_pos: Block,
    pub ctr_transfer: Transfer,
    pub ctr_head: Head,
    pub info_ctr: Block,
    pub cvr_transfer: Transfer,
    pub cvr_head: Head,
}

#[derive(Debug, Clone)]
pub struct PaccPeTrace {
    pub prediction: Prediction,
    features: Vec<f64>,
    ctr_tower: TowerCache,
    cvr_tower: TowerCache,
    pos_tower: TowerCache,
    info_pos: BlockCache,
    ctr_transfer: TransferCache,
    a_ctr: Vec<f64>,
    ctr_logit: f64,
    info_ctr: BlockCache,
    cvr_transfer: TransferCache,
    a_cvr: Vec<f64>,
    cvr_logit: f64,
}

impl PaccPeTrace {
    pub(crate) fn relu_margin(&self) -> f64 {
        tower_margin(&self.ctr_tower)
            .min(tower_margin(&self.cvr_tower))
            .min(tower_margin(&self.pos_tower))
            .min(self.info_pos.relu_margin())
            .min(self.info_ctr.relu_margin())
    }
}

impl PaccPeModel {
    pub fn new(config: ModelConfig, rng: &mut RngState) -> Self {
        let c = &config;
        let embed = Dense::new(c.feature_dim, c.d_emb, Init::Xavier, rng);
        let ctr_tower = Tower::new(c.d_emb, c.d_tower, c.tower_depth, rng);
        let cvr_tower = Tower::new(c.d_emb, c.d_tower, c.tower_depth, rng);
        let pos_tower = Tower::new(c.max_position, c.d_tower, c.tower_depth, rng);
        let info_pos = Block::new(c.d_tower, c.d_tower, rng);
        let ctr_transfer = Transfer::new(c.transfer, c.d_tower, c.d_att, rng);
        let ctr_head = Head::new(ctr_transfer.output_dim(), rng);
        let info_ctr = Block::new(ctr_transfer.output_dim(), c.d_tower, rng);
        let cvr_transfer = Transfer::new(c.transfer, c.d_tower, c.d_att, rng);
        let cvr_head = Head::new(cvr_transfer.output_dim(), rng);
        Self {
            config,
            embed,
            ctr_tower,
            cvr_tower,
            pos_tower,
            info_pos,
            ctr_transfer,
            ctr_head,
            info_ctr,
            cvr_transfer,
            cvr_head,
        }
    }

    pub(super) fn predict_positions(
        &self,
        features: &[f64],
        positions: &[usize],
    ) -> Result<Vec<Prediction>> {
        let rate = self.config.dropout;
        let v = self.embed.forward(features)?;
        let (t_ctr, _) = self.ctr_tower.forward(&v, rate, None)?;
        let (t_cvr, _) = self.cvr_tower.forward(&v, rate, None)?;
        positions
            .iter()
            .map(|&p| {
                let one_hot = one_hot_position(p, self.config.max_position)?;
                let (t_pos, _) = self.pos_tower.forward(&one_hot, rate, None)?;
                let (info_pos, _) = self.info_pos.forward(&t_pos, rate, None)?;
                let (a_ctr, _) = self.ctr_transfer.forward(&t_ctr, &info_pos)?;
                let (_, p_ctr) = self.ctr_head.forward(&a_ctr)?;
                let (info_ctr, _) = self.info_ctr.forward(&a_ctr, rate, None)?;
                let (a_cvr, _) = self.cvr_transfer.forward(&t_cvr, &info_ctr)?;
                let (_, p_cvr) = self.cvr_head.forward(&a_cvr)?;
                Ok(Prediction::plain(p_ctr, p_cvr))
            })
            .collect()
    }

    pub(super) fn forward_trace(
        &self,
        features: &[f64],
        position: usize,
        mut rng: Option<&mut RngState>,
    ) -> Result<PaccPeTrace> {
        let rate = self.config.dropout;
        let v = self.embed.forward(features)?;
        let (t_ctr, ctr_cache) = self.ctr_tower.forward(&v, rate, rng.as_deref_mut())?;
        let (t_cvr, cvr_cache) = self.cvr_tower.forward(&v, rate, rng.as_deref_mut())?;
        let one_hot = one_hot_position(position, self.config.max_position)?;
        let (t_pos, pos_cache) = self.pos_tower.forward(&one_hot, rate, rng.as_deref_mut())?;
        let (info_pos, info_pos_cache) = self.info_pos.forward(&t_pos, rate, rng.as_deref_mut())?;
        let (a_ctr, ctr_transfer) = self.ctr_transfer.forward(&t_ctr, &info_pos)?;
        let (ctr_logit, p_ctr) = self.ctr_head.forward(&a_ctr)?;
        let (info_ctr, info_ctr_cache) = self.info_ctr.forward(&a_ctr, rate, rng.as_deref_mut())?;
        let (a_cvr, cvr_transfer) = self.cvr_transfer.forward(&t_cvr, &info_ctr)?;
        let (cvr_logit, p_cvr) = self.cvr_head.forward(&a_cvr)?;
        Ok(PaccPeTrace {
            prediction: Prediction::plain(p_ctr, p_cvr),
            features: features.to_vec(),
            ctr_tower: ctr_cache,
            cvr_tower: cvr_cache,
            pos_tower: pos_cache,
            info_pos: info_pos_cache,
            ctr_transfer,
            a_ctr,
            ctr_logit,
            info_ctr: info_ctr_cache,
            cvr_transfer,
            a_cvr,
            cvr_logit,
        })
    }

    pub(super) fn backward(&mut self, t: &PaccPeTrace, grad_ctr: f64, grad_cvr: f64) -> Result<()> {
        let g_acvr = self.cvr_head.backward(&t.a_cvr, t.cvr_logit, grad_cvr)?;
        let (g_tcvr, g_info_ctr) = self.cvr_transfer.backward(&t.cvr_transfer, &g_acvr)?;
        let mut g_actr = self.info_ctr.backward(&t.info_ctr, &g_info_ctr)?;
        axpy(
            1.0,
            &self.ctr_head.backward(&t.a_ctr, t.ctr_logit, grad_ctr)?,
            &mut g_actr,
        );
        let (g_tctr, g_info_pos) = self.ctr_transfer.backward(&t.ctr_transfer, &g_actr)?;
        let g_tpos = self.info_pos.backward(&t.info_pos, &g_info_pos)?;
        self.pos_tower.backward(&t.pos_tower, &g_tpos)?;

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

impl Params for PaccPeModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.embed.visit(f);
        self.ctr_tower.visit(f);
        self.cvr_tower.visit(f);
        self.pos_tower.visit(f);
        self.info_pos.visit(f);
        self.ctr_transfer.visit(f);
        self.ctr_head.visit(f);
        self.info_ctr.visit(f);
        self.cvr_transfer.visit(f);
        self.cvr_head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.embed.visit_mut(f);
        self.ctr_tower.visit_mut(f);
        self.cvr_tower.visit_mut(f);
        self.pos_tower.visit_mut(f);
        self.info_pos.visit_mut(f);
        self.ctr_transfer.visit_mut(f);
        self.ctr_head.visit_mut(f);
        self.info_ctr.visit_mut(f);
        self.cvr_transfer.visit_mut(f);
        self.cvr_head.visit_mut(f);
    }
}
