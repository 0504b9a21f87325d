//! Stage-cached experiment pipeline.
//!
//! Stages run in dependency order: medium sampling, intensity-probe
//! characterization, phase-plane design, two-photon transport, estimation.
//! Each stage persists its product as a typed artifact under the run's cache
//! directory, keyed by a hash of exactly the config fields the stage reads,
//! so re-runs and sibling experiments reuse finished work. All randomness is
//! seeded from the config; a run is a pure function of it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use multiport_core::artifact;
use multiport_core::circuit::{
    default_mode_sets, end_to_end_map, gate_fidelity, gate_library, realized_submatrix,
    routed_channel, GateName, GateSpec, PhasePlanes,
};
use multiport_core::estimation::{
    bootstrap_fidelity, bootstrap_witness, certified_schmidt_number, correlations_from_counts,
    fidelity_from_mubs, mle_tomography, phase_fit, CorrelationMatrix, MleOptions,
};
use multiport_core::linalg::{C64, CMat, CVec};
use multiport_core::medium::{perturb_medium, sample_medium, MediumModel};
use multiport_core::modes::{mub_set, MubFamily, Port};
use multiport_core::quantum::{
    default_detection_pattern, herald, hom_scan, sample_counts, swapped_state,
    tomography_prob_table, witness_prob_table, BiphotonSource, CountTable,
};
use multiport_core::tmchar::{fit_tm, fitted_medium, generate_probe_data, FitOptions, TmFit};
use multiport_core::wfm::{wavefront_match, WfmOptions, WfmTrace};
use multiport_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::manifest::RunManifest;
use crate::records::{pair_label, records_json, swap_pair_label, CorrelationCsv, ResultRecord};
use crate::sha256_hex;

/// Independent deterministic stream per measurement task.
fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is long enough"))
}

fn short_hash(value: &serde_json::Value) -> String {
    sha256_hex(value.to_string().as_bytes())[..16].to_string()
}

fn missing_artifact(path: &Path, what: &str, remedy: &str) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{what} artifact '{}' not found; {remedy}", path.display()),
    ))
}

/// (|01⟩ − e^{iθ}|10⟩)/√2 on a channel's qubit pair.
fn swap_target(theta: f64) -> CVec {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut v = CVec::zeros(4);
    v[1] = s;
    v[2] = -s * C64::from_polar(1.0, theta);
    v
}

fn state_overlap(rho: &CMat, psi: &CVec) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

fn file_key(name: GateName) -> String {
    name.as_str().to_ascii_lowercase()
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    out: PathBuf,
    cache: PathBuf,
    manifest: RunManifest,
    medium: Option<MediumModel>,
    design_medium: Option<MediumModel>,
}

/// Executes the configured experiment and writes results, cache artifacts,
/// and the manifest under `output_dir/<experiment>-<hash12>/`.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    let mut cfg = config.clone();
    cfg.validate()?;
    let hash = cfg.config_hash();
    let run_dir = format!("{}-{}", cfg.experiment, &hash[..12]);
    let out = cfg.output_dir.join(&run_dir);
    // One cache per output root: stage keys hash their exact inputs, so
    // sibling experiments sharing a medium reuse each other's fits and
    // designs.
    let cache = cfg.output_dir.join("cache");
    std::fs::create_dir_all(&cache)?;
    std::fs::create_dir_all(&out)?;

    let mut manifest = RunManifest::new(cfg.experiment.as_str(), hash);
    manifest.run_dir = run_dir;
    let kind = cfg.experiment;
    let mut p = Pipeline {
        cfg,
        out,
        cache,
        manifest,
        medium: None,
        design_medium: None,
    };
    match kind {
        ExperimentKind::CharacterizeTm => run_characterize(&mut p)?,
        ExperimentKind::DesignGates => run_design(&mut p)?,
        ExperimentKind::Routing | ExperimentKind::RoutingSingleChannel => run_routing(&mut p)?,
        ExperimentKind::Swap => run_swap(&mut p, false)?,
        ExperimentKind::SwapMultiplexed => run_swap(&mut p, true)?,
        ExperimentKind::HomScan => run_hom(&mut p)?,
        ExperimentKind::Stability => run_stability(&mut p)?,
    }
    p.manifest.finalize();
    p.manifest.save(&p.out)?;
    Ok(p.manifest)
}

impl Pipeline {
    fn write_result(&mut self, rel: &str, text: &str) -> Result<()> {
        std::fs::write(self.out.join(rel), text)?;
        self.manifest.record_result(&self.out, rel)
    }

    fn medium_key(&self) -> String {
        let m = self.cfg.medium.as_ref().expect("validated");
        short_hash(&serde_json::json!({
            "n_fibre": m.n_fibre,
            "n_pixels": m.n_pixels,
            "seed": m.seed,
            "phi": self.cfg.source.phi,
        }))
    }

    /// The true medium: pinned artifact if given, otherwise sampled from the
    /// config seed (cache-backed). An explicit source phase overrides the
    /// sampled inter-polarization phase either way.
    fn medium(&mut self) -> Result<MediumModel> {
        if let Some(m) = &self.medium {
            return Ok(m.clone());
        }
        let t0 = Instant::now();
        let (mut model, cached) = if let Some(pin) = &self.cfg.artifacts.medium {
            if !pin.exists() {
                return Err(missing_artifact(
                    pin,
                    "medium",
                    "drop the pin or run any experiment with a [medium] section to regenerate it",
                ));
            }
            (artifact::load_medium(pin)?, true)
        } else {
            let sec = self.cfg.medium.as_ref().expect("validated").clone();
            let path = self.cache.join(format!("medium-{}.json", self.medium_key()));
            if path.exists() {
                (artifact::load_medium(&path)?, true)
            } else {
                let mut m = sample_medium(sec.n_fibre, sec.n_pixels, sec.seed)?;
                if let Some(phi) = self.cfg.source.phi {
                    m.inter_pol_phase = phi;
                }
                artifact::save_medium(&path, &m)?;
                (m, false)
            }
        };
        if let Some(phi) = self.cfg.source.phi {
            model.inter_pol_phase = phi;
        }
        if let Some(sec) = &self.cfg.medium {
            if model.n_fibre != sec.n_fibre || model.n_pixels != sec.n_pixels {
                return Err(Error::Parameter(format!(
                    "pinned medium is {}x{} (fibre x pixels), config says {}x{}",
                    model.n_fibre, model.n_pixels, sec.n_fibre, sec.n_pixels
                )));
            }
        }
        self.manifest.touch_artifact("medium");
        self.manifest
            .record_timing("medium", t0.elapsed().as_millis() as u64, cached);
        self.medium = Some(model.clone());
        Ok(model)
    }

    fn tm_key(&self, truth: &MediumModel) -> String {
        let c = &self.cfg.characterize;
        short_hash(&serde_json::json!({
            "medium": self.medium_key(),
            "probes": c.probes.unwrap_or(8 * truth.n_fibre),
            "sigma_y": c.sigma_y,
            "seed": c.seed,
            "iters": c.iters,
            "step": c.step,
            "init_seed": c.init_seed,
        }))
    }

    fn tm_fit(&mut self, truth: &MediumModel) -> Result<TmFit> {
        let t0 = Instant::now();
        let (fit, cached) = if let Some(pin) = &self.cfg.artifacts.tm_fit {
            if !pin.exists() {
                return Err(missing_artifact(
                    pin,
                    "transmission-matrix fit",
                    "run the characterize-tm experiment first",
                ));
            }
            (artifact::load_tm_fit(pin)?, true)
        } else {
            let path = self.cache.join(format!("tm-fit-{}.json", self.tm_key(truth)));
            if path.exists() {
                (artifact::load_tm_fit(&path)?, true)
            } else {
                let c = self.cfg.characterize.clone();
                let n_probes = c.probes.unwrap_or(8 * truth.n_fibre);
                let (probes, data) = generate_probe_data(truth, n_probes, c.sigma_y, c.seed)?;
                let opts = FitOptions {
                    iters: c.iters,
                    step: c.step,
                    init_seed: c.init_seed,
                    reproject_every: 50,
                    warm_start: None,
                };
                let mut fit = fit_tm(truth, &probes, &data, &opts)?;
                fit.score_against(truth)?;
                artifact::save_tm_fit(&path, &fit)?;
                (fit, false)
            }
        };
        let n = truth.n_fibre;
        if fit.blocks[0].nrows() != 2 * n || fit.blocks[0].ncols() != n {
            return Err(Error::Shape(format!(
                "fit blocks are {:?}, medium needs {}x{}",
                fit.blocks[0].shape(),
                2 * n,
                n
            )));
        }
        self.manifest.touch_artifact("tm-fit");
        self.manifest
            .record_timing("characterize", t0.elapsed().as_millis() as u64, cached);
        Ok(fit)
    }

    /// Medium the designer sees: the probe-fitted surrogate, or the truth
    /// itself under --oracle-medium.
    fn design_medium(&mut self) -> Result<MediumModel> {
        if let Some(m) = &self.design_medium {
            return Ok(m.clone());
        }
        let truth = self.medium()?;
        let model = if self.cfg.oracle_medium {
            truth
        } else {
            let fit = self.tm_fit(&truth)?;
            fitted_medium(&truth, &fit)?
        };
        self.design_medium = Some(model.clone());
        Ok(model)
    }

    fn planes_key(&self, gate: GateName, design: &MediumModel) -> String {
        short_hash(&serde_json::json!({
            "medium": self.medium_key(),
            "oracle": self.cfg.oracle_medium,
            "tm_seed": if self.cfg.oracle_medium { 0 } else { self.cfg.characterize.seed },
            "sigma_y": self.cfg.characterize.sigma_y,
            "probes": self.cfg.characterize.probes.unwrap_or(8 * design.n_fibre),
            "gate": gate.as_str(),
            "max_iters": self.cfg.design.max_iters,
            "tol": self.cfg.design.tol,
        }))
    }

    /// Designs (or loads) the phase planes for one gate against the design
    /// medium. Never consults pins; `gate_planes` layers those on top.
    fn design_gate(&mut self, gate: GateName) -> Result<WfmTrace> {
        let design = self.design_medium()?;
        let key = self.planes_key(gate, &design);
        let name = file_key(gate);
        let planes_path = self.cache.join(format!("planes-{name}-{key}.json"));
        let trace_path = self.cache.join(format!("wfm-trace-{name}-{key}.json"));
        let t0 = Instant::now();
        let (trace, cached) = if trace_path.exists() {
            (artifact::load_wfm_trace(&trace_path)?, true)
        } else {
            let spec = gate_library(gate);
            let (inputs, outputs) = default_mode_sets(&spec, design.n_pixels)?;
            let opts = WfmOptions {
                max_iters: self.cfg.design.max_iters,
                tol: self.cfg.design.tol,
                weights: None,
            };
            let trace = wavefront_match(
                &design,
                &spec,
                (&inputs.0, &inputs.1),
                (&outputs.0, &outputs.1),
                &opts,
            )?;
            artifact::save_planes(&planes_path, &trace.planes)?;
            artifact::save_wfm_trace(&trace_path, &trace)?;
            (trace, false)
        };
        self.manifest.touch_artifact("phase-planes");
        self.manifest.touch_artifact("wfm-trace");
        self.manifest
            .record_timing(&format!("design:{name}"), t0.elapsed().as_millis() as u64, cached);
        Ok(trace)
    }

    fn gate_planes(&mut self, gate: GateName) -> Result<(PhasePlanes, Option<WfmTrace>)> {
        if let Some(pin) = self.cfg.artifacts.planes.get(&file_key(gate)).cloned() {
            if !pin.exists() {
                return Err(missing_artifact(
                    &pin,
                    "phase-plane",
                    "run the design-gates experiment first",
                ));
            }
            let planes = artifact::load_planes(&pin)?;
            self.manifest.touch_artifact("phase-planes");
            return Ok((planes, None));
        }
        let trace = self.design_gate(gate)?;
        Ok((trace.planes.clone(), Some(trace)))
    }

    /// Transfer matrix the photons actually see: the exact gate in ideal
    /// mode, otherwise the designed circuit evaluated on the true medium.
    fn transfer(&mut self, gate: GateName) -> Result<(GateSpec, CMat)> {
        let spec = gate_library(gate);
        if self.cfg.ideal_gates {
            let t = spec.matrix.clone();
            return Ok((spec, t));
        }
        let truth = self.medium()?;
        let (planes, _) = self.gate_planes(gate)?;
        let t0 = Instant::now();
        let map = end_to_end_map(&truth, &planes)?;
        let (inputs, outputs) = default_mode_sets(&spec, truth.n_pixels)?;
        let t = realized_submatrix(&map, (&inputs.0, &inputs.1), (&outputs.0, &outputs.1))?;
        self.manifest.record_timing(
            &format!("transfer:{}", file_key(gate)),
            t0.elapsed().as_millis() as u64,
            false,
        );
        Ok((spec, t))
    }

    /// Physical inter-polarization phase for this run.
    fn phi(&mut self) -> Result<f64> {
        if self.cfg.ideal_gates {
            Ok(self.cfg.source.phi.unwrap_or(0.0))
        } else {
            Ok(self.medium()?.inter_pol_phase)
        }
    }
}

/// One routed pair's d×d transfer block: rows over the destination channel's
/// foci, columns over the source channel's input modes. Routing follows the
/// programmed target, so the pair assignment is the published one even when
/// the realized block is imperfect.
fn channel_block(spec: &GateSpec, t: &CMat, in_port: usize, in_ch: usize) -> (usize, usize, CMat) {
    let (out_port, out_ch) = routed_channel(spec, in_port, in_ch);
    let dpp = spec.modes_per_port;
    let in_modes = if in_port == 0 {
        &spec.channels.in1[in_ch]
    } else {
        &spec.channels.in2[in_ch]
    };
    let out_modes = if out_port == 0 {
        &spec.channels.out1[out_ch]
    } else {
        &spec.channels.out2[out_ch]
    };
    let block = CMat::from_fn(out_modes.len(), in_modes.len(), |r, c| {
        t[(out_port * dpp + out_modes[r], in_port * dpp + in_modes[c])]
    });
    (out_port, out_ch, block)
}

struct PairEstimate {
    users: String,
    in_ch: usize,
    fidelity: f64,
    f_err: Option<f64>,
    certified: usize,
    correlations: Vec<CorrelationMatrix>,
    counts: CountTable,
    sampled: bool,
}

/// Witness estimation for every routed pair of one gate: exact correlations
/// when no [stats] section is configured, Poisson counts plus a bootstrap
/// error otherwise.
fn witness_pairs(
    cfg: &ExperimentConfig,
    spec: &GateSpec,
    t: &CMat,
    mubs: &MubFamily,
    schmidt: &[f64],
    seed_tag: &str,
) -> Result<Vec<PairEstimate>> {
    let d = mubs.dim;
    let mut out = Vec::new();
    for in_port in 0..2 {
        let n_ch = if in_port == 0 {
            spec.channels.in1.len()
        } else {
            spec.channels.in2.len()
        };
        for in_ch in 0..n_ch {
            let (out_port, out_ch, block) = channel_block(spec, t, in_port, in_ch);
            let users = pair_label(in_port, in_ch, out_port, out_ch);
            let probs = witness_prob_table(&block, schmidt, mubs)?;
            let (counts, sampled) = match &cfg.stats {
                None => (probs, false),
                Some(s) => {
                    let seed =
                        derive_seed(s.seed, &format!("counts:{seed_tag}:{in_port}:{in_ch}"));
                    (sample_counts(&probs, s.flux, s.duration, seed)?, true)
                }
            };
            let correlations: Vec<CorrelationMatrix> = (0..=d)
                .map(|m| correlations_from_counts(&counts, m))
                .collect::<Result<_>>()?;
            let witness = fidelity_from_mubs(&correlations, d)?;
            let f_err = match &cfg.stats {
                None => None,
                Some(s) => {
                    let seed =
                        derive_seed(s.seed, &format!("bootstrap:{seed_tag}:{in_port}:{in_ch}"));
                    Some(bootstrap_witness(&counts, d, s.bootstrap_reps, seed)?.std)
                }
            };
            out.push(PairEstimate {
                users,
                in_ch,
                fidelity: witness.fidelity,
                f_err,
                certified: witness.certified_schmidt,
                correlations,
                counts,
                sampled,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CharacterizeSummary {
    experiment: String,
    n_probes: usize,
    sigma_y: f64,
    /// |Tr(truth† fit)| / ‖truth‖² per input port; 1 is exact recovery.
    similarity: [f64; 2],
    final_loss: [f64; 2],
    iterations: [usize; 2],
}

fn run_characterize(p: &mut Pipeline) -> Result<()> {
    let truth = p.medium()?;
    let mut fit = p.tm_fit(&truth)?;
    let similarity = fit.score_against(&truth)?;

    // User-facing copies of the fit and the surrogate it induces.
    artifact::save_tm_fit(&p.out.join("tm_fit.json"), &fit)?;
    p.manifest.record_result(&p.out.clone(), "tm_fit.json")?;
    let surrogate = fitted_medium(&truth, &fit)?;
    artifact::save_medium(&p.out.join("fitted_medium.json"), &surrogate)?;
    p.manifest.record_result(&p.out.clone(), "fitted_medium.json")?;

    let mut csv = String::from("port,iteration,loss\n");
    for (port, trace) in fit.loss_trace.iter().enumerate() {
        for (i, loss) in trace.iter().enumerate() {
            csv.push_str(&format!("{port},{i},{loss:.17e}\n"));
        }
    }
    p.write_result("characterize_loss.csv", &csv)?;

    let summary = CharacterizeSummary {
        experiment: p.cfg.experiment.to_string(),
        n_probes: p.cfg.characterize.probes.unwrap_or(8 * truth.n_fibre),
        sigma_y: p.cfg.characterize.sigma_y,
        similarity,
        final_loss: [
            *fit.loss_trace[0].last().expect("fit ran"),
            *fit.loss_trace[1].last().expect("fit ran"),
        ],
        iterations: [fit.loss_trace[0].len() - 1, fit.loss_trace[1].len() - 1],
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    p.write_result("results.json", &text)
}

#[derive(Debug, Serialize, Deserialize)]
struct DesignRecord {
    gate: String,
    /// Gate fidelity of the design evaluated on the true medium.
    fidelity: f64,
    eta: f64,
    /// Fidelity the designer saw on its own (possibly surrogate) medium.
    design_fidelity: f64,
    iterations: usize,
}

fn run_design(p: &mut Pipeline) -> Result<()> {
    if p.cfg.ideal_gates {
        return Err(Error::Parameter(
            "design-gates computes phase planes; ideal_gates does not apply".into(),
        ));
    }
    let truth = p.medium()?;
    let mut records = Vec::new();
    for gate in p.cfg.gate_names()? {
        let trace = p.design_gate(gate)?;
        let spec = gate_library(gate);
        let map = end_to_end_map(&truth, &trace.planes)?;
        let (inputs, outputs) = default_mode_sets(&spec, truth.n_pixels)?;
        let t = realized_submatrix(&map, (&inputs.0, &inputs.1), (&outputs.0, &outputs.1))?;
        let (fidelity, eta) = gate_fidelity(&t, &spec.matrix)?;

        let name = file_key(gate);
        artifact::save_planes(&p.out.join(format!("planes_{name}.json")), &trace.planes)?;
        p.manifest
            .record_result(&p.out.clone(), &format!("planes_{name}.json"))?;
        p.write_result(&format!("wfm_trace_{name}.csv"), &artifact::wfm_trace_csv(&trace))?;

        records.push(DesignRecord {
            gate: spec.name.to_string(),
            fidelity,
            eta,
            design_fidelity: trace.final_fidelity,
            iterations: trace.iterations,
        });
    }
    let mut text = serde_json::to_string_pretty(&records).expect("records serialize");
    text.push('\n');
    p.write_result("results.json", &text)
}

fn run_routing(p: &mut Pipeline) -> Result<()> {
    let d = p.cfg.source.dim;
    let mubs = mub_set(d)?;
    let schmidt = p.cfg.channel_schmidt();
    let mut records = Vec::new();
    for gate in p.cfg.gate_names()? {
        let (spec, t) = p.transfer(gate)?;
        let t0 = Instant::now();
        let name = file_key(gate);
        let pairs = witness_pairs(&p.cfg, &spec, &t, &mubs, &schmidt, &name)?;
        let mut csv = CorrelationCsv::default();
        for pair in &pairs {
            for corr in &pair.correlations {
                csv.push(spec.name.as_str(), &pair.users, corr);
            }
            if pair.sampled {
                let rel = format!("counts_{name}_{}.csv", pair.users.to_ascii_lowercase());
                p.write_result(&rel, &pair.counts.to_csv())?;
            }
            records.push(ResultRecord {
                experiment: p.cfg.experiment.to_string(),
                gate: spec.name.to_string(),
                channel: pair.in_ch + 1,
                users: pair.users.clone(),
                f: pair.fidelity,
                f_err: pair.f_err,
                certified_k: Some(pair.certified),
                theta: None,
            });
        }
        p.write_result(&format!("correlations_{name}.csv"), &csv.to_csv())?;
        p.manifest.record_timing(
            &format!("estimate:{name}"),
            t0.elapsed().as_millis() as u64,
            false,
        );
    }
    p.write_result("results.json", &records_json(&records))
}

fn run_swap(p: &mut Pipeline, multiplexed: bool) -> Result<()> {
    let mubs = mub_set(2)?;
    let schmidt = p.cfg.channel_schmidt();
    let gamma = p.cfg.source.gamma;
    let mut records = Vec::new();
    for gate in p.cfg.gate_names()? {
        let (spec, t) = p.transfer(gate)?;
        let phi = p.phi()?;
        let name = file_key(gate);
        let t0 = Instant::now();
        let n_ch = if multiplexed { spec.channels.in1.len() } else { 1 };
        for ch in 0..n_ch {
            let src1 = BiphotonSource::new(schmidt.clone(), Port::In1)?;
            let src2 = BiphotonSource::new(schmidt.clone(), Port::In2)?;
            let in1 = spec.channels.in1[ch].clone();
            let in2: Vec<usize> = spec.channels.in2[ch]
                .iter()
                .map(|&m| spec.modes_per_port + m)
                .collect();
            let det = default_detection_pattern(&spec.channels, ch, spec.modes_per_port);
            let state = swapped_state(&t, &src1, &src2, &in1, &in2, det, gamma, phi)?;

            // Exact statistics are the infinite-data limit, where the
            // estimate is the conditional state itself; sampled runs go
            // through counts and maximum-likelihood reconstruction.
            let (rho_hat, counts) = match &p.cfg.stats {
                None => (state.rho.clone(), None),
                Some(s) => {
                    let probs = tomography_prob_table(&state.rho, &mubs)?;
                    let seed = derive_seed(s.seed, &format!("counts:{name}:ch{ch}"));
                    let counts = sample_counts(&probs, s.flux, s.duration, seed)?;
                    let mle = mle_tomography(&counts, &mubs, &MleOptions::default())?;
                    (mle.rho, Some(counts))
                }
            };
            let estimate = phase_fit(&rho_hat)?;
            let target_theta = estimate.theta.unwrap_or(phi);
            let target = swap_target(target_theta);
            let fidelity = state_overlap(&rho_hat, &target);
            let f_err = match (&p.cfg.stats, &counts) {
                (Some(s), Some(counts)) => {
                    let seed = derive_seed(s.seed, &format!("bootstrap:{name}:ch{ch}"));
                    Some(
                        bootstrap_fidelity(
                            counts,
                            &mubs,
                            &target,
                            s.bootstrap_reps,
                            seed,
                            &MleOptions::default(),
                        )?
                        .std,
                    )
                }
                _ => None,
            };

            if let Some(counts) = &counts {
                p.write_result(&format!("counts_{name}_ch{}.csv", ch + 1), &counts.to_csv())?;
            }
            p.write_result(
                &format!("rho_{name}_ch{}.csv", ch + 1),
                &artifact::matrix_csv(&rho_hat),
            )?;
            records.push(ResultRecord {
                experiment: p.cfg.experiment.to_string(),
                gate: spec.name.to_string(),
                channel: ch + 1,
                users: swap_pair_label(ch),
                f: fidelity,
                f_err,
                certified_k: Some(certified_schmidt_number(fidelity, 2)),
                theta: estimate.theta,
            });
        }
        p.manifest.record_timing(
            &format!("estimate:{name}"),
            t0.elapsed().as_millis() as u64,
            false,
        );
    }
    p.write_result("results.json", &records_json(&records))
}

#[derive(Debug, Serialize, Deserialize)]
struct HomRecord {
    experiment: String,
    gate: String,
    channel: usize,
    visibility: f64,
    sigma_tau: f64,
    points: usize,
}

/// Two-photon interference scan on each gate's first channel: one photon per
/// source in the channel's leading mode, coincidences between the leading
/// foci of the two output ports.
fn run_hom(p: &mut Pipeline) -> Result<()> {
    let h = p.cfg.hom.clone();
    let delays: Vec<f64> = (0..h.points)
        .map(|i| -h.tau_max + 2.0 * h.tau_max * i as f64 / (h.points - 1) as f64)
        .collect();
    let mut records = Vec::new();
    for gate in p.cfg.gate_names()? {
        let (spec, t) = p.transfer(gate)?;
        let name = file_key(gate);
        let t0 = Instant::now();
        let single = BiphotonSource::new(vec![1.0], Port::In1)?;
        let projector = CVec::from_element(1, C64::new(1.0, 0.0));
        let h1 = herald(&single, &projector)?;
        let h2 = herald(&single, &projector)?;
        let dpp = spec.modes_per_port;
        let in1 = vec![spec.channels.in1[0][0]];
        let in2 = vec![dpp + spec.channels.in2[0][0]];
        let det = (spec.channels.out1[0][0], dpp + spec.channels.out2[0][0]);
        let scan = hom_scan(&t, &h1, &h2, &in1, &in2, det, &delays, h.sigma_tau)?;

        let mut csv = String::from("tau,coincidence\n");
        for (tau, c) in &scan.points {
            csv.push_str(&format!("{tau:.17e},{c:.17e}\n"));
        }
        p.write_result(&format!("hom_{name}.csv"), &csv)?;
        records.push(HomRecord {
            experiment: p.cfg.experiment.to_string(),
            gate: spec.name.to_string(),
            channel: 1,
            visibility: scan.visibility,
            sigma_tau: h.sigma_tau,
            points: h.points,
        });
        p.manifest.record_timing(
            &format!("estimate:{name}"),
            t0.elapsed().as_millis() as u64,
            false,
        );
    }
    let mut text = serde_json::to_string_pretty(&records).expect("records serialize");
    text.push('\n');
    p.write_result("results.json", &text)
}

/// Designs once on the pristine medium, then replays the frozen planes on a
/// progressively drifted fibre. The drift direction is one fixed Hermitian
/// generator; step k applies strength k·epsilon_step.
fn run_stability(p: &mut Pipeline) -> Result<()> {
    if p.cfg.ideal_gates {
        return Err(Error::Parameter(
            "stability tracks a designed circuit under drift; ideal_gates does not apply".into(),
        ));
    }
    let d = p.cfg.source.dim;
    let mubs = mub_set(d)?;
    let schmidt = p.cfg.channel_schmidt();
    let truth = p.medium()?;
    let gates = p.cfg.gate_names()?;
    let mut designed = Vec::new();
    for gate in &gates {
        let (planes, _) = p.gate_planes(*gate)?;
        let spec = gate_library(*gate);
        let sets = default_mode_sets(&spec, truth.n_pixels)?;
        designed.push((spec, planes, sets));
    }

    let st = p.cfg.stability.clone();
    let mut csv = String::from("step,epsilon,gate,users,F,F_err,separable_bound\n");
    let mut records = Vec::new();
    for k in 0..st.steps {
        let epsilon = k as f64 * st.epsilon_step;
        let t0 = Instant::now();
        let drifted = perturb_medium(&truth, epsilon, st.seed)?;
        for (spec, planes, (inputs, outputs)) in &designed {
            let map = end_to_end_map(&drifted, planes)?;
            let t = realized_submatrix(&map, (&inputs.0, &inputs.1), (&outputs.0, &outputs.1))?;
            let tag = format!("step{k}:{}", file_key(spec.name));
            let pairs = witness_pairs(&p.cfg, spec, &t, &mubs, &schmidt, &tag)?;
            for pair in pairs {
                let err_cell = pair
                    .f_err
                    .map(|e| format!("{e:.17e}"))
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{k},{epsilon:.17e},{},{},{:.17e},{err_cell},0.5\n",
                    spec.name, pair.users, pair.fidelity
                ));
                records.push(ResultRecord {
                    experiment: p.cfg.experiment.to_string(),
                    gate: spec.name.to_string(),
                    channel: pair.in_ch + 1,
                    users: pair.users,
                    f: pair.fidelity,
                    f_err: pair.f_err,
                    certified_k: Some(pair.certified),
                    theta: None,
                });
            }
        }
        p.manifest
            .record_timing(&format!("evaluate:step{k}"), t0.elapsed().as_millis() as u64, false);
    }
    p.write_result("stability.csv", &csv)?;
    p.write_result("results.json", &records_json(&records))
}
