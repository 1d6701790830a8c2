//! Behaviour of the spatial model on small simulated and constructed data.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uys::data::{expand_risk_rows, Dataset, DatasetOptions, Id, PersonRecord};
use uys::spatial::{
    build_cells, build_latent_structure, fit_mcmc, grades_needed, posterior_hazards, posterior_uys,
    simulate_spatial_dataset, McmcConfig, SimDesign, SpatialGraph,
};
use uys::weighted::{modified_weighted_hazards, naive_weighted_uys, Domain};

fn path_graph(n: usize) -> SpatialGraph {
    let areas: Vec<Id> = (0..n).map(|i| Arc::from(format!("a{i}"))).collect();
    let edges: Vec<(Id, Id)> = (1..n).map(|i| (areas[i - 1].clone(), areas[i].clone())).collect();
    SpatialGraph::new(areas, &edges).unwrap()
}

fn quick(seed: u64) -> McmcConfig {
    McmcConfig {
        chains: 2,
        draws: 300,
        burnin: 300,
        seed,
        ..McmcConfig::default()
    }
}

#[test]
fn retained_draws_satisfy_sum_to_zero_constraints() {
    let graph = path_graph(3);
    let cohorts = [2000, 2001, 2002, 2003];
    let structure = build_latent_structure(&graph, &cohorts, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (ds, _) = simulate_spatial_dataset(&structure, &SimDesign::default(), &mut rng).unwrap();
    let cells = build_cells(&expand_risk_rows(&ds));
    let structure = build_latent_structure(&graph, &cohorts, grades_needed(&cells)).unwrap();
    let pd = fit_mcmc(&cells, &structure, &McmcConfig { draws: 100, burnin: 100, ..quick(3) }).unwrap();
    let col = |name: String| pd.columns.iter().position(|c| *c == name).unwrap();
    let phi: Vec<usize> = cohorts.iter().map(|b| col(format!("phi[{b}]"))).collect();
    let s: Vec<usize> = graph.areas().iter().map(|a| col(format!("s[{a}]"))).collect();
    for row in &pd.values {
        assert!(phi.iter().map(|&j| row[j]).sum::<f64>().abs() < 1e-8);
        assert!(s.iter().map(|&j| row[j]).sum::<f64>().abs() < 1e-8);
        for b in &cohorts {
            let sum: f64 = graph.areas().iter().map(|a| row[col(format!("zeta[{a},{b}]"))]).sum();
            assert!(sum.abs() < 1e-8, "zeta over areas, cohort {b}: {sum}");
        }
        for a in graph.areas() {
            let sum: f64 = cohorts.iter().map(|b| row[col(format!("zeta[{a},{b}]"))]).sum();
            assert!(sum.abs() < 1e-8, "zeta over cohorts, area {a}: {sum}");
        }
    }
}

fn person(id: String, cluster: String, area: &str, cohort: i32, years: u32) -> PersonRecord {
    PersonRecord {
        person_id: id.into(),
        cluster_id: cluster.into(),
        stratum_id: "s".into(),
        weight: 1.0,
        birth_year: cohort,
        birth_month: None,
        years_completed: years,
        censored: false,
        area_id: area.into(),
        urban: false,
    }
}

#[test]
fn sparse_area_is_pulled_toward_the_national_hazard() {
    // three well-sampled areas and one with three respondents per cohort,
    // all of whom left before completing a grade
    let graph = path_graph(4);
    let cohorts = [2000, 2001, 2002, 2003];
    let mut records = Vec::new();
    for &b in &cohorts {
        for area in ["a0", "a1", "a2"] {
            for j in 0..60u32 {
                let years = [0, 1, 1, 2, 3, 3, 3, 3, 2, 3][(j % 10) as usize];
                records.push(person(format!("{area}-{b}-{j}"), format!("{area}-c{}", j % 6), area, b, years));
            }
        }
        for j in 0..3 {
            records.push(person(format!("a3-{b}-{j}"), format!("a3-c{j}"), "a3", b, 0));
        }
    }
    let ds = Dataset::new(records, DatasetOptions::default()).unwrap();
    let rows = expand_risk_rows(&ds);
    let cells = build_cells(&rows);
    let structure = build_latent_structure(&graph, &cohorts, grades_needed(&cells)).unwrap();
    let pd = fit_mcmc(&cells, &structure, &quick(5)).unwrap();
    for &b in &cohorts {
        let national = modified_weighted_hazards(&rows, &Domain::cohort(b), ds.k_max()).hazards[0];
        let raw = modified_weighted_hazards(&rows, &Domain::cohort(b).with_area("a3"), ds.k_max()).hazards[0];
        assert_eq!(raw, 1.0);
        let h = posterior_hazards(&pd, b, "a3", None).unwrap();
        let post = h.iter().map(|d| d[0]).sum::<f64>() / h.len() as f64;
        assert!(national < post && post < raw, "cohort {b}: national {national}, posterior {post}");
    }
}

#[test]
fn posterior_domain_estimates_vary_less_than_raw_ones() {
    let graph = path_graph(4);
    let cohorts: Vec<i32> = (1990..1996).collect();
    let structure = build_latent_structure(&graph, &cohorts, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (ds, _) = simulate_spatial_dataset(&structure, &SimDesign::default(), &mut rng).unwrap();
    let cells = build_cells(&expand_risk_rows(&ds));
    let structure = build_latent_structure(&graph, &cohorts, grades_needed(&cells)).unwrap();
    let pd = fit_mcmc(&cells, &structure, &quick(7)).unwrap();
    let variance = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let mut raw = Vec::new();
    let mut post = Vec::new();
    for &b in &cohorts {
        for a in graph.areas() {
            raw.push(naive_weighted_uys(&ds, &Domain::cohort(b).with_area(a.clone())).unwrap().mean);
            post.push(posterior_uys(&pd, b, a, None).unwrap().0.mean);
        }
    }
    assert!(variance(&post) <= variance(&raw), "{} vs {}", variance(&post), variance(&raw));
}
