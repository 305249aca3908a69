//! Three-layer leverage-score maintainer.
//!
//! An inner simple estimator absorbs every action immediately; after a fixed
//! number of inner steps a middle simple estimator consumes the buffered
//! actions in one batch and refreshes the inner estimate; after a fixed
//! number of middle steps a randomized outer estimator consumes its buffer
//! and refreshes both; and after a fixed number of outer steps the whole
//! structure re-initializes from scratch. Tolerances tighten from inner to
//! outer, so each refresh replaces accumulated drift with a better estimate.

use crate::action::{ActionCaps, ActionSequence, UpdateAction};
use crate::batch::BatchConfig;
use crate::error::{Error, Result};
use crate::estimator::{ComplicatedConfig, ComplicatedEstimator, SimpleEstimator};
use crate::mat::Matrix;
use crate::rng::derive_seed;

#[derive(Debug, Clone)]
pub struct LayerParams {
    /// Inner steps per middle step.
    pub t_inner: usize,
    /// Middle steps per outer step.
    pub t_middle: usize,
    /// Outer steps before a full restart.
    pub t_outer: usize,
    pub eps_inner: f64,
    pub eps_middle: f64,
    pub eps_outer: f64,
    /// Sketch dimension of the outer estimator.
    pub sketch_dim: usize,
    /// Quadrature nodes of the outer estimator.
    pub quad_nodes: usize,
    pub caps: ActionCaps,
    pub seed: u64,
}

impl LayerParams {
    /// Desk-scale defaults: small fixed step limits with tolerances ordered
    /// `eps_inner >> eps_middle >> eps_outer`.
    pub fn desk(n: usize, seed: u64) -> Self {
        LayerParams {
            t_inner: 8,
            t_middle: 8,
            t_outer: 8,
            eps_inner: 1e-2,
            eps_middle: 1e-3,
            eps_outer: 1e-4,
            sketch_dim: sketch_dim_for(n),
            quad_nodes: 6,
            caps: ActionCaps::default(),
            seed,
        }
    }

    /// The asymptotic profile: step limits and tolerances as powers and
    /// polylogs of the dimension. Degenerates for small `n`; exposed for
    /// large-scale experiments.
    pub fn asymptotic(n: usize, seed: u64) -> Self {
        let nf = n.max(4) as f64;
        let ln = nf.ln();
        LayerParams {
            t_inner: ln.powi(10).min(1e9).ceil() as usize,
            t_middle: nf.powf(0.01).ceil() as usize,
            t_outer: nf.powf(0.373).ceil() as usize,
            eps_inner: ln.powi(25).recip(),
            eps_middle: nf.powf(-0.08),
            eps_outer: nf.powf(-0.1),
            sketch_dim: sketch_dim_for(n),
            quad_nodes: (100.0 * ln * ln).ceil() as usize,
            caps: ActionCaps::default(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_inner == 0 || self.t_middle == 0 || self.t_outer == 0 {
            return Err(Error::InvalidArgument(
                "layer step limits must be >= 1".into(),
            ));
        }
        let ok = self.eps_outer > 0.0
            && self.eps_outer <= self.eps_middle
            && self.eps_middle <= self.eps_inner
            && self.eps_inner < 1.0;
        if !ok {
            return Err(Error::InvalidArgument(
                "layer tolerances must satisfy 0 < eps_outer <= eps_middle <= eps_inner < 1".into(),
            ));
        }
        Ok(())
    }
}

fn sketch_dim_for(n: usize) -> usize {
    ((n as f64).powf(0.31).ceil() as usize).max(8)
}

#[derive(Debug, Clone)]
pub struct LayeredMaintainer {
    ctr_inner: usize,
    ctr_middle: usize,
    ctr_outer: usize,
    acts_middle: ActionSequence,
    acts_outer: ActionSequence,
    inner: SimpleEstimator,
    middle: SimpleEstimator,
    outer: ComplicatedEstimator,
    params: LayerParams,
    restarts: u64,
}

impl LayeredMaintainer {
    pub fn init(a: Matrix, w: Vec<f64>, params: LayerParams) -> Result<Self> {
        params.validate()?;
        let n = a.cols();
        let batch = BatchConfig::for_dim(n);
        let inner = SimpleEstimator::with_config(
            a.clone(),
            w.clone(),
            params.eps_inner,
            batch.clone(),
            params.caps,
        )?;
        let middle = SimpleEstimator::with_config(
            a.clone(),
            w.clone(),
            params.eps_middle,
            batch.clone(),
            params.caps,
        )?;
        let mut comp_cfg = ComplicatedConfig::new(params.sketch_dim, params.quad_nodes, n);
        comp_cfg.batch = batch;
        comp_cfg.caps = params.caps;
        let outer = ComplicatedEstimator::init(
            a,
            w,
            params.eps_outer,
            comp_cfg,
            derive_seed(params.seed, &[0]),
        )?;
        Ok(LayeredMaintainer {
            ctr_inner: 0,
            ctr_middle: 0,
            ctr_outer: 0,
            acts_middle: ActionSequence::default(),
            acts_outer: ActionSequence::default(),
            inner,
            middle,
            outer,
            params,
            restarts: 0,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        self.inner.matrix()
    }

    pub fn weights(&self) -> &[f64] {
        self.inner.weights()
    }

    /// Current estimate; side-effect free.
    pub fn query(&self) -> &[f64] {
        self.inner.query()
    }

    pub fn counters(&self) -> (usize, usize, usize) {
        (self.ctr_inner, self.ctr_middle, self.ctr_outer)
    }

    pub fn restart_count(&self) -> u64 {
        self.restarts
    }

    #[cfg(test)]
    pub(crate) fn middle_estimate(&self) -> &[f64] {
        self.middle.query()
    }

    /// Absorb one action. The inner estimator moves immediately; the middle
    /// and outer estimators consume their buffers at their cadence, each
    /// refresh overwriting the faster layers' estimates; hitting the outer
    /// limit rebuilds everything from the current system.
    pub fn update(&mut self, act: UpdateAction) -> Result<()> {
        // Validate against the current state before mutating anything.
        ActionSequence::new(vec![act.clone()]).validate_and_snapshot(
            self.inner.matrix(),
            self.inner.weights(),
            &self.params.caps,
        )?;
        self.acts_middle.push(act.clone());
        self.acts_outer.push(act.clone());
        self.inner.update(&ActionSequence::new(vec![act]))?;
        self.ctr_inner += 1;
        if self.ctr_inner < self.params.t_inner {
            return Ok(());
        }
        let acts_mid = std::mem::take(&mut self.acts_middle);
        self.middle.update(&acts_mid)?;
        self.ctr_middle += 1;
        if self.ctr_middle < self.params.t_middle {
            self.ctr_inner = 0;
            self.inner.refine(self.middle.query().to_vec())?;
            return Ok(());
        }
        let acts_out = std::mem::take(&mut self.acts_outer);
        self.outer.update(&acts_out)?;
        self.ctr_outer += 1;
        if self.ctr_outer >= self.params.t_outer {
            return self.restart();
        }
        self.ctr_inner = 0;
        self.ctr_middle = 0;
        self.inner.refine(self.outer.query().to_vec())?;
        self.middle.refine(self.outer.query().to_vec())?;
        Ok(())
    }

    /// Rebuild from the current system; observationally identical to a fresh
    /// initialization.
    fn restart(&mut self) -> Result<()> {
        let a = self.inner.matrix().clone();
        let w = self.inner.weights().to_vec();
        let mut params = self.params.clone();
        // Rotate the outer seed so restarted sketches stay independent.
        params.seed = derive_seed(self.params.seed, &[self.restarts + 1]);
        let fresh = LayeredMaintainer::init(a, w, params)?;
        let restarts = self.restarts + 1;
        *self = fresh;
        self.restarts = restarts;
        Ok(())
    }
}
