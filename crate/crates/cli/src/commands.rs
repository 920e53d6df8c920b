use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use community_forge::equilibrium::{
    construct_covering, max_interval_length, verify_nash, CommunityStructure, StructureFile,
};
use community_forge::filtering::{
    expert_routing_plan, filtered_total_utility, make_threshold_filter, optimal_filter_agent,
    write_gains_csv, FilterSpec,
};
use community_forge::kernels::KernelSpec;
use community_forge::supply::supply_density;
use community_forge::Error;

use crate::config::RunConfig;
use crate::CliError;

fn map_core_error(e: Error) -> CliError {
    match e {
        Error::Infeasible(msg) => CliError::infeasible(msg),
        Error::InvalidArgument(_) | Error::KernelValidation { .. } => {
            CliError::usage(e.to_string())
        }
        other => CliError::internal(other.to_string()),
    }
}

fn out_dir(config: &RunConfig, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::internal(format!("cannot create output dir {dir:?}: {e}")))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(
        fs::File::create(path)
            .map_err(|e| CliError::internal(format!("cannot write {path:?}: {e}")))?,
    );
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::internal(format!("cannot serialize {path:?}: {e}")))?;
    writeln!(w).map_err(|e| CliError::internal(format!("cannot write {path:?}: {e}")))
}

fn load_structure(path: &Path) -> Result<StructureFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::missing_input(format!("cannot read structure {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::missing_input(format!("unreadable structure {path:?}: {e}")))
}

pub fn cmd_construct(
    config: &RunConfig,
    out: Option<&Path>,
    k: Option<usize>,
) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let structure =
        construct_covering(&config.params, k, &config.numerics).map_err(map_core_error)?;
    write_json(&dir.join("structure.json"), &structure.summary())?;
    let ring = structure.ring();
    for (i, community) in structure.communities.iter().enumerate() {
        let map_path = dir.join(format!("community_{i:03}_production.csv"));
        let mut w = BufWriter::new(
            fs::File::create(&map_path)
                .map_err(|e| CliError::internal(format!("cannot write {map_path:?}: {e}")))?,
        );
        community
            .map
            .write_csv(&mut w)
            .map_err(|e| CliError::internal(e.to_string()))?;

        let util_path = dir.join(format!("community_{i:03}_utility.csv"));
        let mut w = BufWriter::new(
            fs::File::create(&util_path)
                .map_err(|e| CliError::internal(format!("cannot write {util_path:?}: {e}")))?,
        );
        community
            .utilities
            .write_csv(&ring, &mut w)
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    println!(
        "constructed {} communities of length {:.6}",
        structure.k, structure.delta_star
    );
    Ok(())
}

fn rebuild(config: &RunConfig, structure_path: &Path) -> Result<CommunityStructure, CliError> {
    let file = load_structure(structure_path)?;
    file.rebuild(&config.numerics).map_err(map_core_error)
}

pub fn cmd_verify(
    config: &RunConfig,
    structure_path: &Path,
    out: Option<&Path>,
    n_agents: usize,
    tol: Option<f64>,
) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let structure = rebuild(config, structure_path)?;
    let tol = tol.unwrap_or(config.numerics.tolerances.nash_gain);
    let report = verify_nash(&structure, n_agents, tol, config.seed);
    write_json(&dir.join("nash_report.json"), &report)?;
    println!(
        "max gains: consumption {:.3e}, production {:.3e}; {}",
        report.max_consumption_gain,
        report.max_production_gain,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::verification_failed())
    }
}

/// The sweepable parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Cost,
    ConsumptionBudget,
    ProductionBudget,
    InterestWidth,
    AbilityWidth,
}

impl SweepParameter {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "c" => Ok(SweepParameter::Cost),
            "E_p" => Ok(SweepParameter::ConsumptionBudget),
            "E_q" => Ok(SweepParameter::ProductionBudget),
            "f.width" => Ok(SweepParameter::InterestWidth),
            "g.width" => Ok(SweepParameter::AbilityWidth),
            other => Err(CliError::usage(format!(
                "unknown sweep parameter {other:?}; expected one of c, E_p, E_q, f.width, g.width"
            ))),
        }
    }

    fn apply(self, params: &mut community_forge::equilibrium::GlobalParams, value: f64) {
        match self {
            SweepParameter::Cost => params.c = value,
            SweepParameter::ConsumptionBudget => params.e_p = value,
            SweepParameter::ProductionBudget => params.e_q = value,
            SweepParameter::InterestWidth => params.f.width = value,
            SweepParameter::AbilityWidth => params.g.width = value,
        }
    }
}

pub fn cmd_sweep(
    config: &RunConfig,
    parameter: SweepParameter,
    start: f64,
    end: f64,
    steps: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if steps == 0 || !start.is_finite() || !end.is_finite() {
        return Err(CliError::usage(
            "sweep needs a finite range and at least one step",
        ));
    }
    let dir = out_dir(config, out)?;
    let path = dir.join("sweep.csv");
    let mut w = BufWriter::new(
        fs::File::create(&path)
            .map_err(|e| CliError::internal(format!("cannot write {path:?}: {e}")))?,
    );
    writeln!(
        w,
        "value,max_interval_length,K,total_utility,expert_delta_total,t_C"
    )
    .map_err(|e| CliError::internal(e.to_string()))?;

    for i in 0..steps {
        let value = if steps == 1 {
            start
        } else {
            start + (end - start) * i as f64 / (steps - 1) as f64
        };
        let mut params = config.params;
        parameter.apply(&mut params, value);
        if params.validate().is_err() {
            writeln!(w, "{value},,,,,").map_err(|e| CliError::internal(e.to_string()))?;
            continue;
        }
        let bound = max_interval_length(&params);
        let row = match construct_covering(&params, None, &config.numerics) {
            Ok(structure) => {
                let total: f64 = structure
                    .communities
                    .iter()
                    .map(|c| c.utilities.total_formula)
                    .sum();
                let plan = expert_routing_plan(&structure.communities[0]);
                let t_c = plan.t_c.map(|t| t.to_string()).unwrap_or_default();
                format!(
                    "{value},{bound},{},{total},{},{t_c}",
                    structure.k,
                    plan.delta_total * structure.k as f64
                )
            }
            Err(_) => format!("{value},{bound},0,,,"),
        };
        writeln!(w, "{row}").map_err(|e| CliError::internal(e.to_string()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FilterAnalysis {
    optimal_filter_agent: f64,
    t0: f64,
    supply_half_width: f64,
    allpass_total: f64,
    threshold_total: f64,
    relative_gap: f64,
    expert: ExpertSummary,
}

#[derive(Serialize)]
struct ExpertSummary {
    #[serde(rename = "t_C")]
    t_c: Option<f64>,
    delta_total: f64,
    benefiting_fraction: f64,
}

pub fn cmd_filter_analysis(
    config: &RunConfig,
    structure_path: &Path,
    out: Option<&Path>,
    h_width: f64,
) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let structure = rebuild(config, structure_path)?;
    let community = &structure.communities[0];
    let ring = structure.ring();

    let h = KernelSpec::gaussian(1.0, h_width)
        .map_err(|e| CliError::usage(format!("invalid filter width: {e}")))?;
    let best = optimal_filter_agent(community, &h, config.numerics.y_grid_n);

    let info = make_threshold_filter(community);
    let allpass = FilterSpec::Threshold {
        t: f64::NEG_INFINITY,
        center: community.arc.mid(&ring),
    };
    let allpass_total = filtered_total_utility(community, &allpass);
    let threshold_total = filtered_total_utility(community, &info.filter);
    let plan = expert_routing_plan(community);

    let analysis = FilterAnalysis {
        optimal_filter_agent: best.coord(),
        t0: info.t0,
        supply_half_width: info.half_width,
        allpass_total,
        threshold_total,
        relative_gap: (threshold_total - allpass_total).abs() / allpass_total.abs().max(1e-300),
        expert: ExpertSummary {
            t_c: plan.t_c,
            delta_total: plan.delta_total,
            benefiting_fraction: plan.benefiting_fraction,
        },
    };
    write_json(&dir.join("filter_analysis.json"), &analysis)?;

    let gains_path = dir.join("expert_gains.csv");
    let mut w = BufWriter::new(
        fs::File::create(&gains_path)
            .map_err(|e| CliError::internal(format!("cannot write {gains_path:?}: {e}")))?,
    );
    write_gains_csv(community, &plan, &mut w).map_err(|e| CliError::internal(e.to_string()))?;
    println!(
        "optimal filter agent at {:.6}; threshold-vs-allpass gap {:.3e}",
        best.coord(),
        analysis.relative_gap
    );
    Ok(())
}

pub fn cmd_profile(
    config: &RunConfig,
    out: Option<&Path>,
    community_index: usize,
) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let structure =
        construct_covering(&config.params, None, &config.numerics).map_err(map_core_error)?;
    let Some(community) = structure.communities.get(community_index) else {
        return Err(CliError::usage(format!(
            "community index {community_index} out of range (structure has {})",
            structure.k
        )));
    };
    let ring = structure.ring();

    let demand_path = dir.join("demand.csv");
    let mut w = BufWriter::new(
        fs::File::create(&demand_path)
            .map_err(|e| CliError::internal(format!("cannot write {demand_path:?}: {e}")))?,
    );
    community
        .profile
        .write_csv(&mut w)
        .map_err(|e| CliError::internal(e.to_string()))?;

    let supply_path = dir.join("supply.csv");
    let rep = supply_density(
        &ring,
        &community.map,
        config.numerics.ring_grid_n,
        config.numerics.tolerances.jacobian_floor,
    )
    .map_err(map_core_error)?;
    let mut w = BufWriter::new(
        fs::File::create(&supply_path)
            .map_err(|e| CliError::internal(format!("cannot write {supply_path:?}: {e}")))?,
    );
    rep.write_csv(&mut w)
        .map_err(|e| CliError::internal(e.to_string()))?;

    let production_path = dir.join("production.csv");
    let mut w = BufWriter::new(
        fs::File::create(&production_path)
            .map_err(|e| CliError::internal(format!("cannot write {production_path:?}: {e}")))?,
    );
    community
        .map
        .write_csv(&mut w)
        .map_err(|e| CliError::internal(e.to_string()))?;

    let utility_path = dir.join("utility.csv");
    let mut w = BufWriter::new(
        fs::File::create(&utility_path)
            .map_err(|e| CliError::internal(format!("cannot write {utility_path:?}: {e}")))?,
    );
    community
        .utilities
        .write_csv(&ring, &mut w)
        .map_err(|e| CliError::internal(e.to_string()))?;
    Ok(())
}
