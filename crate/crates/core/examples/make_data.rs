//! Regenerates the bundled datasets under `data/`:
//! a synthetic 296-city stand-in for the COVID-19 study and a 50-row toy set.
//!
//! cargo run -p vibim --example make_data -- data

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use vibim::encoding::{Predictor, PredictorSchema, RawColumn, RawTable};
use vibim::io::{dataset_to_csv, DataSchemaFile, Transform};
use vibim::rng::task_rng;

fn round_to(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

fn write(dir: &Path, stem: &str, schema: &PredictorSchema, raw: &RawTable, y: &[f64], response: &str, log: bool) {
    let csv = dataset_to_csv(schema, raw, y, response);
    std::fs::write(dir.join(format!("{stem}.csv")), csv).expect("write csv");
    let mut file = DataSchemaFile::from_predictor_schema(schema, response);
    if log {
        file.response.transform = Transform::Log;
    }
    std::fs::write(dir.join(format!("{stem}.toml")), file.to_toml_string()).expect("write schema");
}

fn standin(dir: &Path) {
    const N: usize = 296;
    let mut rng = task_rng(2020, 0);
    let z = |rng: &mut vibim::rng::TaskRng| rng.sample::<f64, _>(StandardNormal);

    let tiers = ["T1", "T2", "T3", "T4", "T5", "T6"];
    let regions = ["North", "Northeast", "East", "Central", "South", "Southwest", "Northwest"];
    let tier_idx: Vec<usize> = (0..N).map(|_| rng.random_range(0..tiers.len())).collect();
    let region: Vec<String> = (0..N).map(|_| regions[rng.random_range(0..regions.len())].to_string()).collect();

    let mut cont: Vec<(&str, Vec<f64>)> = Vec::new();
    let pop: Vec<f64> = tier_idx.iter().map(|&t| round_to(1.9 - 0.2 * t as f64 + 0.5 * z(&mut rng), 4)).collect();
    let dis: Vec<f64> = (0..N).map(|_| round_to(Normal::new(2.95, 0.22).unwrap().sample(&mut rng), 4)).collect();
    let flow: Vec<f64> =
        (0..N).map(|i| round_to(3.0 - 2.2 * (dis[i] - 2.95) + 0.4 * pop[i] + 0.8 * z(&mut rng), 4)).collect();
    let pgrp: Vec<f64> = tier_idx.iter().map(|&t| round_to(1.1 - 0.12 * t as f64 + 0.35 * z(&mut rng), 4)).collect();
    let hosp: Vec<f64> =
        tier_idx.iter().map(|&t| (6.0 - t as f64 + 2.0 * z(&mut rng)).round().max(0.0)).collect();
    let temp: Vec<f64> = (0..N).map(|_| round_to(8.0 + 6.0 * z(&mut rng), 2)).collect();
    let travel: Vec<f64> = (0..N).map(|i| round_to(4.0 + 0.3 * pop[i] + 0.6 * z(&mut rng), 4)).collect();
    let arr: Vec<f64> = (0..N).map(|i| (25.0 + 2.0 * (dis[i] - 2.95) * 4.0 + 3.0 * z(&mut rng)).round()).collect();
    let binary = |rng: &mut vibim::rng::TaskRng, p: f64| -> Vec<f64> {
        (0..N).map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect()
    };
    let enter_resp = binary(&mut rng, 0.2);
    let bus_resp = binary(&mut rng, 0.15);
    let railway_resp = binary(&mut rng, 0.12);
    let days = |rng: &mut vibim::rng::TaskRng, resp: &[f64]| -> Vec<f64> {
        resp.iter().map(|&r| if r > 0.0 { rng.random_range(1..=10) as f64 } else { 0.0 }).collect()
    };
    let enter_date = days(&mut rng, &enter_resp);
    let bus_date = days(&mut rng, &bus_resp);
    let railway_date = days(&mut rng, &railway_resp);

    let log_cases: Vec<f64> = (0..N)
        .map(|i| {
            2.2 - 0.9 * (dis[i] - 2.95) + 0.10 * hosp[i] + 0.45 * flow[i] - 0.55 * (dis[i] - 2.95) * flow[i]
                + 0.25 * pop[i]
                + 0.08 * hosp[i] * railway_resp[i]
                + 0.30 * pop[i] * pgrp[i]
                - 0.02 * pgrp[i] * temp[i]
                + 0.45 * z(&mut rng)
        })
        .collect();
    let cases: Vec<f64> = log_cases.iter().map(|v| v.exp().round().max(1.0)).collect();

    cont.extend([
        ("Travel.Intensity", travel),
        ("Pop.2018", pop),
        ("Dis.WH", dis),
        ("Total.Flow", flow),
        ("PGRP", pgrp),
        ("3A.Hospital", hosp),
        ("Arr.Time", arr),
        ("Temperature", temp),
        ("Enter.Date", enter_date),
        ("Bus.Date", bus_date),
        ("Railway.Date", railway_date),
        ("Enter.Resp", enter_resp),
        ("Bus.Resp", bus_resp),
        ("Railway.Resp", railway_resp),
    ]);
    let mut predictors = vec![Predictor::categorical("City.Tier", tiers), Predictor::categorical("Region", regions)];
    let mut columns = vec![
        RawColumn::Categorical(tier_idx.iter().map(|&t| tiers[t].to_string()).collect()),
        RawColumn::Categorical(region),
    ];
    for (name, values) in cont {
        predictors.push(Predictor::continuous(name));
        columns.push(RawColumn::Continuous(values));
    }
    let schema = PredictorSchema::new(predictors).unwrap();
    write(dir, "covid_standin", &schema, &RawTable { columns }, &cases, "Sevendays.Cucase", true);
}

fn toy(dir: &Path) {
    const N: usize = 50;
    let mut rng = task_rng(50, 0);
    let levels = ["low", "mid", "high"];
    let group: Vec<usize> = (0..N).map(|_| rng.random_range(0..3)).collect();
    let mut x = vec![vec![0.0; N]; 4];
    for col in x.iter_mut() {
        for v in col.iter_mut() {
            *v = round_to(rng.sample::<f64, _>(StandardNormal), 4);
        }
    }
    let y: Vec<f64> = (0..N)
        .map(|i| {
            let g = [0.8, 0.0, -0.6][group[i]];
            round_to(1.0 + 1.5 * x[0][i] - x[1][i] + 1.2 * x[0][i] * x[1][i] + g + 0.5 * rng.sample::<f64, _>(StandardNormal), 4)
        })
        .collect();
    let mut predictors = vec![Predictor::categorical("grade", levels)];
    let mut columns = vec![RawColumn::Categorical(group.iter().map(|&g| levels[g].to_string()).collect())];
    for (k, col) in x.into_iter().enumerate() {
        predictors.push(Predictor::continuous(format!("x{}", k + 1)));
        columns.push(RawColumn::Continuous(col));
    }
    let schema = PredictorSchema::new(predictors).unwrap();
    write(dir, "toy", &schema, &RawTable { columns }, &y, "y", false);
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");
    standin(&dir);
    toy(&dir);
}
