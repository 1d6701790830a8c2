use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use uys::aggregate::{mixed_level_distribution, summarize_domain, write_domain_summaries, UrbanFractionTable};
use uys::data::{expand_risk_rows, load_dataset, write_dataset, write_risk_rows, Dataset, Id, RiskRow};
use uys::design::DesignIndex;
use uys::glm::{fit_survey_glm, glm_uys, refit_per_reference, GlmFit, GlmSpec, GlmTarget};
use uys::sim::{fit_entrance_model, generate_population, run_bias_study, BiasStudyConfig, SimError, SpatialSetup};
use uys::spatial::{
    build_cells, build_latent_structure, fit_mcmc, grades_needed, posterior_hazards, posterior_uys, read_draws,
    write_draws, McmcConfig, PosteriorDraws, SpatialGraph,
};
use uys::weighted::{
    modified_weighted_uys, naive_weighted_uys_indexed, write_estimates, Domain, EstimateRecord, Method,
};

use crate::config::RunConfig;
use crate::error::{aggregation, estimation, CliError};
use crate::output::OutputDir;
use crate::{Cli, Command, DomainArgs, EstimateCommand, GlmArgs, MethodArg, ReportArgs, SimulateArgs, SpatialArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let mut out = OutputDir::create(&cli.out)?;
    match &cli.command {
        Command::Expand { input } => expand(input, &config, &mut out)?,
        Command::Estimate { method } => match method {
            EstimateCommand::Naive(args) => weighted(args, Method::Naive, &config, &mut out)?,
            EstimateCommand::Modified(args) => weighted(args, Method::Modified, &config, &mut out)?,
            EstimateCommand::Glm(args) => glm(args, &config, &mut out)?,
            EstimateCommand::Spatial(args) => spatial(args, cli.seed, &config, &mut out)?,
        },
        Command::Simulate(args) => simulate(args, cli.seed, &config, &mut out)?,
        Command::Report(args) => report(args, &mut out)?,
        Command::Synth => synth(&config, &mut out)?,
    }
    out.finish(cli, &config)
}

fn load(input: &Path, config: &RunConfig) -> Result<Dataset, CliError> {
    let ds = load_dataset(input, &config.schema).map_err(|e| CliError::ingestion_at(input, e))?;
    log::info!("{} respondents, {} cohorts, K = {}", ds.records().len(), ds.cohorts().len(), ds.k_max());
    Ok(ds)
}

fn expand(input: &Path, config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let ds = load(input, config)?;
    let rows = expand_risk_rows(&ds);
    out.write("risk_rows.csv", |buf| write_risk_rows(&rows, buf))
}

/// Every (cohort, area, stratum) combination present in the data, at the
/// requested resolution.
fn domains(ds: &Dataset, by_area: bool, by_urban: bool) -> Vec<Domain> {
    let keys: BTreeSet<(i32, Option<Id>, Option<bool>)> = ds
        .records()
        .iter()
        .map(|r| {
            (
                ds.cohort_of(r.birth_year),
                by_area.then(|| r.area_id.clone()),
                by_urban.then_some(r.urban),
            )
        })
        .collect();
    keys.into_iter()
        .map(|(c, a, u)| {
            let mut d = Domain::cohort(c);
            if let Some(a) = a {
                d = d.with_area(a);
            }
            if let Some(u) = u {
                d = d.with_urban(u);
            }
            d
        })
        .collect()
}

fn weighted(args: &DomainArgs, method: Method, config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let ds = load(&args.input, config)?;
    let index = DesignIndex::from_records(ds.records());
    let rows = (method == Method::Modified).then(|| expand_risk_rows(&ds));
    let mut records = Vec::new();
    for domain in domains(&ds, args.by_area, args.by_urban) {
        let estimate = match &rows {
            None => naive_weighted_uys_indexed(&ds, &domain, &index)?,
            Some(rows) => modified_weighted_uys(rows, &domain, ds.k_max(), &index)?,
        };
        records.push(EstimateRecord { domain, estimate });
    }
    let truncated = records.iter().filter(|r| r.estimate.truncated).count();
    if truncated > 0 {
        log::warn!(
            "{truncated} of {} estimates stop at the highest observed grade and are restricted means",
            records.len()
        );
    }
    out.write("estimates.csv", |buf| write_estimates(&records, buf))
}

fn parse_targets(spec: &str, fit: &GlmFit) -> Result<Vec<GlmTarget>, CliError> {
    if spec.trim() == "all" {
        return Ok(fit.targets());
    }
    spec.split(',')
        .map(|item| {
            let item = item.trim();
            let (cohort, area) = match item.split_once(':') {
                Some((c, a)) => (c, Some(Id::from(a))),
                None => (item, None),
            };
            let cohort = cohort
                .parse()
                .map_err(|_| CliError::Estimation(format!("invalid target `{item}`")))?;
            Ok(GlmTarget { cohort, area })
        })
        .collect()
}

fn glm(args: &GlmArgs, config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let ds = load(&args.input, config)?;
    let rows = expand_risk_rows(&ds);
    let reference = args.ref_cohort.unwrap_or(ds.cohort_range().0);
    let spec = match &args.ref_area {
        Some(area) => GlmSpec::with_areas(reference, area.as_str()),
        None if args.areas => GlmSpec {
            include_area_effects: true,
            ..GlmSpec::cohort_only(reference)
        },
        None => GlmSpec::cohort_only(reference),
    };
    let fit = fit_survey_glm(&rows, &spec)?;
    out.write_json("glm_fit.json", &fit.summary(args.covariance))?;
    let targets = parse_targets(&args.targets, &fit)?;
    let fits = refit_per_reference(&rows, &spec, &targets)?;
    let mut records = Vec::new();
    for (target, f) in &fits {
        let mut domain = Domain::cohort(target.cohort);
        if let Some(a) = &target.area {
            domain = domain.with_area(a.clone());
        }
        records.push(EstimateRecord {
            domain,
            estimate: glm_uys(f, target)?,
        });
    }
    out.write("estimates.csv", |buf| write_estimates(&records, buf))
}

fn stratum_rows(rows: &[RiskRow], urban: Option<bool>) -> Vec<RiskRow> {
    rows.iter()
        .filter(|r| urban.is_none_or(|u| r.urban == u))
        .cloned()
        .collect()
}

fn spatial(args: &SpatialArgs, seed: u64, config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let ds = load(&args.input, config)?;
    let graph = SpatialGraph::load(&args.graph).map_err(|e| CliError::ingestion_at(&args.graph, e))?;
    let mut mcmc = McmcConfig { seed, ..config.mcmc };
    mcmc.draws = args.draws.unwrap_or(mcmc.draws);
    mcmc.burnin = args.burnin.unwrap_or(mcmc.burnin);
    mcmc.chains = args.chains.unwrap_or(mcmc.chains);
    let rows = expand_risk_rows(&ds);
    let cohorts = ds.cohorts();
    let strata = if args.urban_stratified {
        vec![Some(true), Some(false)]
    } else {
        vec![None]
    };
    let mut diagnostics = BTreeMap::new();
    let mut records = Vec::new();
    for (j, stratum) in strata.into_iter().enumerate() {
        let (label, file) = match stratum {
            None => ("pooled", "draws.csv"),
            Some(true) => ("urban", "draws_urban.csv"),
            Some(false) => ("rural", "draws_rural.csv"),
        };
        let sub = stratum_rows(&rows, stratum);
        if sub.is_empty() {
            log::warn!("no {label} respondents; that stratum is not fitted");
            continue;
        }
        let cells = build_cells(&sub);
        let structure = build_latent_structure(&graph, &cohorts, grades_needed(&cells)).map_err(estimation)?;
        // independent streams for the two strata
        let cfg = McmcConfig {
            seed: mcmc.seed.wrapping_add(j as u64),
            ..mcmc
        };
        log::info!(
            "fitting the {label} model: {} chains of {} draws after {} warm-up",
            cfg.chains,
            cfg.draws,
            cfg.burnin
        );
        let pd = fit_mcmc(&cells, &structure, &cfg).map_err(estimation)?;
        out.write(file, |buf| write_draws(&pd, buf).map_err(estimation))?;
        for &cohort in &cohorts {
            for area in graph.areas() {
                let (mut estimate, _) = posterior_uys(&pd, cohort, area, stratum).map_err(estimation)?;
                estimate.n_eff = sub
                    .iter()
                    .filter(|r| r.grade == 0 && r.cohort == cohort && &r.area_id == area)
                    .count();
                let mut domain = Domain::cohort(cohort).with_area(area.clone());
                if let Some(u) = stratum {
                    domain = domain.with_urban(u);
                }
                records.push(EstimateRecord { domain, estimate });
            }
        }
        diagnostics.insert(label, pd.diagnostics);
    }
    out.write_json("diagnostics.json", &diagnostics)?;
    out.write("estimates.csv", |buf| write_estimates(&records, buf))
}

fn read_study(path: &Path) -> Result<BiasStudyConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ingestion_at(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Simulation(format!("{}: {e}", path.display())))
}

fn simulate(args: &SimulateArgs, seed: u64, config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let mut study = match &args.scenarios {
        Some(path) => read_study(path)?,
        None => config.simulation.clone(),
    };
    study.seed = seed;
    if let Some(r) = args.replicates {
        study.replicates = r;
    }
    if !args.estimators.is_empty() {
        study.estimators = args
            .estimators
            .iter()
            .map(|m| match m {
                MethodArg::Naive => Method::Naive,
                MethodArg::Modified => Method::Modified,
                MethodArg::Glm => Method::Glm,
                MethodArg::Spatial => Method::Spatial,
            })
            .collect();
    }
    for s in &study.scenarios {
        s.validate()?;
    }
    let wants_spatial = study.estimators.contains(&Method::Spatial);
    let mcmc = McmcConfig { seed, ..config.mcmc };
    let (ds, setup) = match &args.input {
        Some(path) => {
            let ds = load(path, config)?;
            let setup = if wants_spatial {
                let graph_path = args
                    .graph
                    .as_ref()
                    .ok_or_else(|| SimError::Config("the spatial estimator needs --graph".into()))?;
                let graph =
                    SpatialGraph::load(graph_path).map_err(|e| CliError::ingestion_at(graph_path, e))?;
                let mut weights: BTreeMap<Id, f64> = BTreeMap::new();
                for r in ds.records() {
                    *weights.entry(r.area_id.clone()).or_default() += r.weight;
                }
                Some(SpatialSetup {
                    graph,
                    area_weights: weights.into_iter().collect(),
                    mcmc,
                })
            } else {
                None
            };
            (ds, setup)
        }
        None => {
            let pop = generate_population(&config.synthetic)?;
            let setup = if wants_spatial {
                let graph = SpatialGraph::new(pop.areas.clone(), &pop.edges).map_err(|e| {
                    CliError::Simulation(format!("synthetic area graph: {e}"))
                })?;
                Some(SpatialSetup {
                    graph,
                    area_weights: pop.area_population(),
                    mcmc,
                })
            } else {
                None
            };
            (pop.dataset, setup)
        }
    };
    let model = fit_entrance_model(&ds, study.school_start_month)?;
    out.write_json("entrance_model.json", &model)?;
    let report = run_bias_study(&ds, &model, &study, setup.as_ref())?;
    out.write("bias_table.csv", |buf| report.write_table(buf))?;
    out.write("bias_records.csv", |buf| report.write_records(buf))
}

fn read_posterior(path: &Path) -> Result<PosteriorDraws, CliError> {
    let file = File::open(path).map_err(|e| CliError::Aggregation(format!("{}: {e}", path.display())))?;
    read_draws(BufReader::new(file)).map_err(|e| CliError::Aggregation(format!("{}: {e}", path.display())))
}

fn report(args: &ReportArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let urban = read_posterior(&args.urban_draws)?;
    let rural = args.rural_draws.as_deref().map(read_posterior).transpose()?;
    if let Some(r) = &rural {
        if r.n_draws() != urban.n_draws() {
            return Err(uys::aggregate::AggregateError::Pairing {
                urban: urban.n_draws(),
                rural: r.n_draws(),
            }
            .into());
        }
    }
    let file = File::open(&args.fractions)
        .map_err(|e| CliError::Aggregation(format!("{}: {e}", args.fractions.display())))?;
    let fractions = UrbanFractionTable::read_csv(BufReader::new(file))?;
    let with_levels = urban.n_grades >= 14 && rural.as_ref().is_none_or(|r| r.n_grades >= 14);
    if !with_levels {
        log::info!("fewer than 14 modelled grades; attainment bands are left out");
    }
    let mut summaries = Vec::new();
    for (area, group, r) in fractions.iter() {
        let cohort: i32 = group.parse().map_err(|_| {
            CliError::Aggregation(format!("group `{group}` of area `{area}` is not a cohort label"))
        })?;
        let (_, u_draws) = posterior_uys(&urban, cohort, area, urban.urban).map_err(aggregation)?;
        let rural_part = match &rural {
            Some(rd) if r < 1.0 => Some(posterior_uys(rd, cohort, area, rd.urban).map_err(aggregation)?.1),
            _ => None,
        };
        let levels = if with_levels {
            let uh = posterior_hazards(&urban, cohort, area, urban.urban).map_err(aggregation)?;
            let rh = match &rural {
                Some(rd) if r < 1.0 => Some(posterior_hazards(rd, cohort, area, rd.urban).map_err(aggregation)?),
                _ => None,
            };
            Some(mixed_level_distribution(&uh, rh.as_deref(), r)?)
        } else {
            None
        };
        summaries.push(summarize_domain(
            area.clone(),
            group,
            r,
            &u_draws,
            rural_part.as_deref(),
            &args.thresholds,
            levels,
        )?);
    }
    out.write("domain_summary.csv", |buf| write_domain_summaries(&summaries, buf))
}

fn synth(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let pop = generate_population(&config.synthetic)?;
    out.write("survey.csv", |buf| write_dataset(&pop.dataset, buf))?;
    out.write("graph.csv", |buf| {
        let mut text = String::from("area_a,area_b\n");
        for (a, b) in &pop.edges {
            text.push_str(&format!("{a},{b}\n"));
        }
        buf.extend_from_slice(text.as_bytes());
        Ok::<_, CliError>(())
    })?;
    // the survey date and K are not in the CSV; this file supplies them
    let schema = RunConfig {
        schema: uys::data::SchemaConfig {
            k_max: Some(pop.dataset.k_max()),
            survey: pop.dataset.survey(),
            ..Default::default()
        },
        ..Default::default()
    };
    out.write_json("survey_config.json", &schema)
}
