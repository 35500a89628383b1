//! Parameter sweeps: one simulated parameter pinned at each grid value,
//! everything else drawn from the base scenario.

use std::time::Instant;

use crate::error::Result;
use crate::harness::config::SweepSpec;
use crate::harness::report::{sweep_curves, CurveRow, EvalRecord};
use crate::harness::suite::{scenario_for, Workbench};
use crate::spectrum::ComplexSpectrum;

#[derive(Clone, Debug, Default)]
pub struct SweepOutput {
    pub records: Vec<EvalRecord>,
    pub curves: Vec<CurveRow>,
}

impl Workbench {
    /// Every configured strategy on one sweep. Times are batch-amortized
    /// wall clock over the whole sweep.
    pub fn run_sweep(&self, spec: &SweepSpec) -> Result<SweepOutput> {
        let data = self.sim.make_sweep(
            &spec.parameter,
            &spec.grid,
            &scenario_for(spec.base),
            spec.n_per_value,
            self.cfg.seed,
            self.cfg.exec,
        )?;
        let ys: Vec<&ComplexSpectrum> = data.iter().map(|r| &r.observed).collect();
        let name = format!("sweep_{}", spec.parameter);
        let mut records = Vec::new();
        for &kind in &self.cfg.strategies {
            log::info!("{kind} on {name}");
            let prepared = self.prepare(kind, spec.train)?;
            let t = Instant::now();
            let est = self.estimate(&prepared, &ys)?;
            let ms = t.elapsed().as_secs_f64() * 1e3 / ys.len().max(1) as f64;
            records.extend(self.records_for(kind, &name, &data, &est, ms)?);
        }
        let curves = sweep_curves(&records)?;
        Ok(SweepOutput { records, curves })
    }

    pub fn run_sweeps(&self) -> Result<SweepOutput> {
        let mut out = SweepOutput::default();
        for spec in &self.cfg.sweeps {
            let s = self.run_sweep(spec)?;
            out.records.extend(s.records);
            out.curves.extend(s.curves);
        }
        Ok(out)
    }
}
