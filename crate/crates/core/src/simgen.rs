//! Simulation designs: AR(1) latent Gaussians, quantile-cut categoricals and
//! the strong/weak heredity interaction models.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{GroupSource, Predictor, PredictorSchema, RawColumn, RawTable};

/// Number of categorical predictors and their level counts.
pub const LEVELS: [usize; 6] = [2, 2, 2, 2, 6, 6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("p must be at least 9, got {0}")]
    TooFewPredictors(usize),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("rho must satisfy |rho| < 1, got {0}")]
    InvalidRho(f64),
    #[error("sigma must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
    #[error("unknown scenario `{0}` (expected ex1-1..ex1-6 or ex2-1..ex2-4)")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Ex1I,
    Ex1II,
    Ex1III,
    Ex1IV,
    Ex1V,
    Ex1VI,
    Ex2I,
    Ex2II,
    Ex2III,
    Ex2IV,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Ex1I,
        Scenario::Ex1II,
        Scenario::Ex1III,
        Scenario::Ex1IV,
        Scenario::Ex1V,
        Scenario::Ex1VI,
        Scenario::Ex2I,
        Scenario::Ex2II,
        Scenario::Ex2III,
        Scenario::Ex2IV,
    ];

    fn parts(self) -> (u8, u8) {
        match self {
            Scenario::Ex1I => (1, 1),
            Scenario::Ex1II => (1, 2),
            Scenario::Ex1III => (1, 3),
            Scenario::Ex1IV => (1, 4),
            Scenario::Ex1V => (1, 5),
            Scenario::Ex1VI => (1, 6),
            Scenario::Ex2I => (2, 1),
            Scenario::Ex2II => (2, 2),
            Scenario::Ex2III => (2, 3),
            Scenario::Ex2IV => (2, 4),
        }
    }

    /// Main effects in the generating model (0-based predictor indices).
    pub fn true_mains(self) -> BTreeSet<usize> {
        let all = [0, 2, 4, 6, 7, 8];
        let dropped = match self {
            Scenario::Ex2I => Some(8),
            Scenario::Ex2II => Some(7),
            Scenario::Ex2III => Some(0),
            Scenario::Ex2IV => Some(2),
            _ => None,
        };
        all.into_iter().filter(|&i| Some(i) != dropped).collect()
    }

    /// Interaction pairs in the generating model (0-based, smaller index first).
    pub fn true_pairs(self) -> BTreeSet<(usize, usize)> {
        const P79: (usize, usize) = (6, 8);
        const P18: (usize, usize) = (0, 7);
        const P13: (usize, usize) = (0, 2);
        let pairs: &[(usize, usize)] = match self {
            Scenario::Ex1I | Scenario::Ex2I => &[P79],
            Scenario::Ex1II | Scenario::Ex2II | Scenario::Ex2III => &[P18],
            Scenario::Ex1III | Scenario::Ex2IV => &[P13],
            Scenario::Ex1IV => &[P79, P18],
            Scenario::Ex1V => &[P79, P13],
            Scenario::Ex1VI => &[P79, P18, P13],
        };
        pairs.iter().copied().collect()
    }

    /// Number of true groups (mains plus interactions).
    pub fn true_size(self) -> usize {
        self.true_mains().len() + self.true_pairs().len()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (ex, model) = self.parts();
        write!(f, "ex{ex}-{model}")
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    /// Accepts `ex1-1`, `ex1_I`, `Ex2-III` and similar spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let unknown = || SimError::UnknownScenario(s.to_string());
        let rest = lower.strip_prefix("ex").ok_or_else(unknown)?;
        let (ex, model) = rest.split_once(['-', '_', ':', '.']).ok_or_else(unknown)?;
        let model = match model {
            "1" | "i" => 1,
            "2" | "ii" => 2,
            "3" | "iii" => 3,
            "4" | "iv" => 4,
            "5" | "v" => 5,
            "6" | "vi" => 6,
            _ => return Err(unknown()),
        };
        let ex: u8 = ex.parse().map_err(|_| unknown())?;
        Scenario::ALL.into_iter().find(|sc| sc.parts() == (ex, model)).ok_or_else(unknown)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesignSpec {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma: f64,
    pub beta0: f64,
    pub scenario: Scenario,
    pub seed: u64,
}

impl SimDesignSpec {
    pub fn new(scenario: Scenario, n: usize, p: usize, seed: u64) -> Self {
        Self { n, p, rho: 0.5, sigma: 1.0, beta0: 1.0, scenario, seed }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.p < 9 {
            return Err(SimError::TooFewPredictors(self.p));
        }
        if self.n < 2 {
            return Err(SimError::TooFewRows(self.n));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(SimError::InvalidRho(self.rho));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SimError::InvalidSigma(self.sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueTerm {
    pub source: GroupSource,
    /// One coefficient per design column of the term.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub true_main_groups: BTreeSet<usize>,
    pub true_interaction_pairs: BTreeSet<(usize, usize)>,
    pub intercept: f64,
    pub terms: Vec<TrueTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub schema: PredictorSchema,
    pub raw: RawTable,
    pub response: Vec<f64>,
    pub truth: TruthRecord,
}

fn main_coefficients(i: usize) -> Vec<f64> {
    match i {
        0 => vec![2.0],
        2 => vec![3.0],
        4 => vec![-2.0, -3.0, -4.0, -5.0, 0.0],
        6 => vec![2.0],
        7 => vec![3.0],
        8 => vec![-2.0],
        _ => unreachable!("no true main effect at predictor {i}"),
    }
}

fn pair_coefficient(pair: (usize, usize)) -> f64 {
    match pair {
        (6, 8) | (0, 7) => 1.5,
        (0, 2) => 2.0,
        _ => unreachable!("no true interaction {pair:?}"),
    }
}

pub fn truth(scenario: Scenario, beta0: f64) -> TruthRecord {
    let mains = scenario.true_mains();
    let pairs = scenario.true_pairs();
    let mut terms: Vec<TrueTerm> =
        mains.iter().map(|&i| TrueTerm { source: GroupSource::Main(i), coefficients: main_coefficients(i) }).collect();
    // every true pair has single-column parents, so the product is one column
    terms.extend(pairs.iter().map(|&(i, j)| TrueTerm {
        source: GroupSource::Interaction(i, j),
        coefficients: vec![pair_coefficient((i, j))],
    }));
    TruthRecord { true_main_groups: mains, true_interaction_pairs: pairs, intercept: beta0, terms }
}

pub fn schema(p: usize) -> PredictorSchema {
    let entries = (0..p)
        .map(|i| {
            let name = format!("X{}", i + 1);
            match LEVELS.get(i) {
                Some(&j) => Predictor::categorical(name, (1..=j).map(|l| format!("L{l}"))),
                None => Predictor::continuous(name),
            }
        })
        .collect();
    PredictorSchema::new(entries).expect("generated names are unique")
}

/// Level (1-based) of `z` for a `j`-level cut at the standard normal `k/j` quantiles.
fn level_of(z: f64, cuts: &[f64]) -> usize {
    1 + cuts.iter().filter(|&&c| z > c).count()
}

/// Dummy value of column `col` (0-based, `< j - 1`) for a 1-based level.
fn dummy(level: usize, col: usize) -> f64 {
    if level == col + 1 {
        1.0
    } else {
        0.0
    }
}

pub fn generate(spec: &SimDesignSpec) -> Result<SimulatedData, SimError> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let q = LEVELS.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innovation = (1.0 - spec.rho * spec.rho).sqrt();
    let cuts: Vec<Vec<f64>> = LEVELS.iter().map(|&j| (1..j).map(|k| normal_quantile(k as f64 / j as f64)).collect()).collect();

    let mut levels = vec![vec![0usize; n]; q];
    let mut cont = vec![vec![0.0; n]; p - q];
    let mut noise = vec![0.0; n];
    for row in 0..n {
        let mut z: f64 = rng.sample(StandardNormal);
        for i in 0..p {
            if i > 0 {
                let e: f64 = rng.sample(StandardNormal);
                z = spec.rho * z + innovation * e;
            }
            if i < q {
                levels[i][row] = level_of(z, &cuts[i]);
            } else {
                cont[i - q][row] = z;
            }
        }
    }
    for v in noise.iter_mut() {
        *v = rng.sample(StandardNormal);
    }

    let truth = truth(spec.scenario, spec.beta0);
    // single-column value of a predictor that enters an interaction
    let scalar = |i: usize, row: usize| if i < q { dummy(levels[i][row], 0) } else { cont[i - q][row] };
    let response = (0..n)
        .map(|row| {
            let mut y = spec.beta0;
            for term in &truth.terms {
                y += match term.source {
                    GroupSource::Main(i) if i < q => {
                        term.coefficients.iter().enumerate().map(|(c, b)| b * dummy(levels[i][row], c)).sum::<f64>()
                    }
                    GroupSource::Main(i) => term.coefficients[0] * cont[i - q][row],
                    GroupSource::Interaction(i, j) => term.coefficients[0] * scalar(i, row) * scalar(j, row),
                };
            }
            y + spec.sigma * noise[row]
        })
        .collect();

    let mut columns: Vec<RawColumn> =
        levels.into_iter().map(|ls| RawColumn::Categorical(ls.into_iter().map(|l| format!("L{l}")).collect())).collect();
    columns.extend(cont.into_iter().map(RawColumn::Continuous));
    Ok(SimulatedData { schema: schema(p), raw: RawTable { columns }, response, truth })
}

/// Standard normal quantile, Wichura's AS 241 (about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_4e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];
