use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::depict::{depict_bp_map, DepictConfig};
use crate::error::Result;
use crate::eval::nmse::{bp_nmse, score_estimate, FactorMatching, Scores, Variable};
use crate::model::DynamicImage;
use crate::par;
use crate::phantom::{assemble_phantom, PhantomConfig, PhantomGroundTruth};
use crate::solver::{pnmm_pipeline, SolverConfig, Variables};

pub const METHOD_INITIAL: &str = "Initial";
pub const METHOD_PNMM: &str = "PNMM";
pub const METHOD_DEPICT: &str = "DEPICT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phantom: PhantomConfig,
    pub solver: SolverConfig,
    pub depict: DepictConfig,
    pub run_depict: bool,
    pub n_realizations: usize,
    /// Realization `r` draws its noise with seed `base_seed + r`.
    pub base_seed: u64,
    pub matching: FactorMatching,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomConfig::default(),
            solver: SolverConfig::default(),
            depict: DepictConfig::default(),
            run_depict: false,
            n_realizations: 20,
            base_seed: 1,
            matching: FactorMatching::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub seed: u64,
    pub realized_snr_db: f64,
    pub methods: Vec<MethodScores>,
    pub init_iterations: Option<usize>,
    pub pnmm_iterations: Option<usize>,
    /// Set when the solver failed on this realization.
    pub error: Option<String>,
}

/// Mean, sample standard deviation and range over realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Indexed like [`Variable::ALL`].
    pub variables: [Option<Summary>; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub n_realizations: usize,
    pub methods: Vec<String>,
    pub realizations: Vec<RealizationResult>,
    pub summary: Vec<MethodSummary>,
    pub failures: usize,
    /// Wall-clock time; left out of the CSV and table renderings so those
    /// stay byte-identical between runs.
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    /// Builds the report from per-realization results (kept in the given
    /// order) and recomputes the summary from them.
    pub fn from_realizations(
        config_hash: String,
        methods: Vec<String>,
        realizations: Vec<RealizationResult>,
        runtime_seconds: f64,
    ) -> Self {
        let summary = methods
            .iter()
            .map(|method| {
                let mut variables = [None; 5];
                for (slot, var) in variables.iter_mut().zip(Variable::ALL) {
                    let values: Vec<f64> = realizations
                        .iter()
                        .filter_map(|r| r.methods.iter().find(|m| &m.method == method))
                        .filter_map(|m| m.scores.get(var))
                        .collect();
                    *slot = Summary::of(&values);
                }
                MethodSummary {
                    method: method.clone(),
                    variables,
                }
            })
            .collect();
        Self {
            config_hash,
            n_realizations: realizations.len(),
            failures: realizations.iter().filter(|r| r.error.is_some()).count(),
            methods,
            realizations,
            summary,
            runtime_seconds,
        }
    }

    pub fn summary_for(&self, method: &str, var: Variable) -> Option<Summary> {
        self.summary
            .iter()
            .find(|s| s.method == method)
            .and_then(|s| s.variables[var as usize])
    }

    /// One row per (variable, method).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variable,method,mean,std,min,max,count\n");
        for var in Variable::ALL {
            for s in &self.summary {
                match s.variables[var as usize] {
                    Some(v) => writeln!(
                        out,
                        "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{}",
                        var.label(),
                        s.method,
                        v.mean,
                        v.std,
                        v.min,
                        v.max,
                        v.count
                    ),
                    None => writeln!(out, "{},{},,,,,0", var.label(), s.method),
                }
                .expect("writing to a String");
            }
        }
        out
    }

    /// Raw per-realization values.
    pub fn realizations_csv(&self) -> String {
        let mut out = String::from("seed,method");
        for var in Variable::ALL {
            out.push(',');
            out.push_str(var.label());
        }
        out.push('\n');
        for r in &self.realizations {
            for m in &r.methods {
                let _ = write!(out, "{},{}", r.seed, m.method);
                for var in Variable::ALL {
                    match m.scores.get(var) {
                        Some(v) => {
                            let _ = write!(out, ",{v:.10e}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Variables as rows, methods as columns, `mean ± std` cells.
    pub fn table(&self) -> String {
        const W: usize = 24;
        let mut out = format!("{:<8}", "");
        for m in &self.methods {
            let _ = write!(out, "{m:>W$}");
        }
        out.push('\n');
        for var in Variable::ALL {
            let _ = write!(out, "{:<8}", var.label());
            for m in &self.methods {
                let cell = match self.summary_for(m, var) {
                    Some(s) => format!("{:.4} ± {:.1e}", s.mean, s.std),
                    None => "n/a".to_string(),
                };
                let _ = write!(out, "{cell:>W$}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "realizations: {} (failed: {}), config {}",
            self.n_realizations,
            self.failures,
            &self.config_hash[..self.config_hash.len().min(12)]
        );
        out
    }
}

fn truth_variables(truth: &PhantomGroundTruth) -> Variables {
    Variables {
        m: truth.m.clone(),
        a: truth.a.clone(),
        b: truth.b.clone(),
        alpha: truth.alpha.clone(),
    }
}

/// Per-tissue DEPICT BP maps, each fitted with that tissue's factor as the
/// reference TAC.
pub fn depict_bp_maps(
    image: &DynamicImage,
    references: &Array2<f64>,
    cfg: &DepictConfig,
) -> Result<Array2<f64>> {
    let kt = references.ncols();
    let mut bp = Array2::zeros((kt, image.n_voxels()));
    for k in 0..kt {
        let m_ref = references.column(k).to_vec();
        let maps = depict_bp_map(image.data.view(), &m_ref, &image.timeline, cfg)?;
        bp.row_mut(k).assign(&ndarray::Array1::from(maps.bp));
    }
    Ok(bp)
}

fn run_realization(
    truth: &PhantomGroundTruth,
    cfg: &ExperimentConfig,
    seed: u64,
) -> RealizationResult {
    let noise = truth.realization(seed);
    let mut result = RealizationResult {
        seed,
        realized_snr_db: noise.realized_snr_db,
        methods: Vec::new(),
        init_iterations: None,
        pnmm_iterations: None,
        error: None,
    };
    let image = match DynamicImage::new(
        noise.noisy,
        truth.dims,
        truth.config.voxel_size_mm,
        truth.timeline.clone(),
    ) {
        Ok(img) => img,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let tv = truth_variables(truth);
    let outcome = (|| -> Result<()> {
        let out = pnmm_pipeline(&image, &truth.masks.classes(), &cfg.solver)?;
        result.init_iterations = Some(out.init_state.iterations);
        result.pnmm_iterations = Some(out.state.iterations);
        result.methods.push(MethodScores {
            method: METHOD_INITIAL.into(),
            scores: score_estimate(&out.init, &tv, cfg.matching)?,
        });
        result.methods.push(MethodScores {
            method: METHOD_PNMM.into(),
            scores: score_estimate(&out.state.vars, &tv, cfg.matching)?,
        });
        if cfg.run_depict {
            let refs = out
                .init
                .m
                .slice(ndarray::s![.., ..out.init.n_tissues()])
                .to_owned();
            let bp = depict_bp_maps(&image, &refs, &cfg.depict)?;
            let mut scores = Scores::default();
            scores.set(Variable::Bp, bp_nmse(bp.view(), &tv)?);
            result.methods.push(MethodScores {
                method: METHOD_DEPICT.into(),
                scores,
            });
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("realization with seed {seed} failed: {e}");
        result.error = Some(e.to_string());
    }
    result
}

/// Runs every realization on an already assembled phantom.
pub fn run_experiment_on(
    truth: &PhantomGroundTruth,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.solver.validate()?;
    if cfg.run_depict {
        cfg.depict.validate()?;
    }
    let start = Instant::now();
    let results = par::map_indices(cfg.n_realizations, |r| {
        run_realization(truth, cfg, cfg.base_seed.wrapping_add(r as u64))
    });
    let mut methods = vec![METHOD_INITIAL.to_string(), METHOD_PNMM.to_string()];
    if cfg.run_depict {
        methods.push(METHOD_DEPICT.to_string());
    }
    Ok(ExperimentReport::from_realizations(
        crate::io::config_hash(cfg)?,
        methods,
        results,
        start.elapsed().as_secs_f64(),
    ))
}

/// Assembles the phantom described by `cfg` and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, PhantomGroundTruth)> {
    let truth = assemble_phantom(&cfg.phantom, cfg.base_seed)?;
    let report = run_experiment_on(&truth, cfg)?;
    Ok((report, truth))
}
