//! Timing harness for deployment, trapdoor generation, search and condition
//! evaluation.
//!
//! Workloads are built from a seeded generator so two runs with the same
//! seed time identical inputs. Each sample discards `warmup` runs and then
//! records the mean and standard deviation of `iterations` timed runs.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::clients::{
    encrypt_policy, pd_sat_enc, pe_attributes_enc, pe_sat_enc, Kma, Role,
};
use crate::crypto::{init, server_reencrypt, SecurityProfile, SystemParams, UserKey};
use crate::lang::tuple;
use crate::policy::{compile_condition, AttributeAssignment, CmpOp, Comparison, ConditionTree, Expr, SatTuple};
use crate::service::{PolicyRecord, ServiceProvider};

pub const DEFAULT_ITERATIONS: usize = 100;
pub const DEFAULT_WARMUP: usize = 10;
pub const MIN_ITERATIONS: usize = 30;

pub const CSV_HEADER: &str = "scenario,parameter,mean_ms,stddev_ms,iterations";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("at least {MIN_ITERATIONS} iterations are required, got {0}")]
    TooFewIterations(usize),
    #[error("a condition needs at least one comparison")]
    EmptyCondition,
    #[error("parameter list must be non-empty and ascending")]
    BadRange,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("setup failed: {0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iterations: DEFAULT_ITERATIONS,
            warmup: DEFAULT_WARMUP,
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.iterations < MIN_ITERATIONS {
            return Err(BenchError::TooFewIterations(self.iterations));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSample {
    pub scenario: String,
    pub parameter: u64,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub iterations: usize,
}

impl BenchSample {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{}",
            self.scenario, self.parameter, self.mean_ms, self.stddev_ms, self.iterations
        )
    }
}

pub fn to_csv(samples: &[BenchSample]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

/// Ordinary least squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slope={:.6} ms intercept={:.6} ms r2={:.4}",
            self.slope, self.intercept, self.r2
        )
    }
}

/// None with fewer than two points or a constant predictor.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Option<FitReport> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(FitReport {
        slope,
        intercept,
        r2: r2.clamp(0.0, 1.0),
    })
}

/// Fit of mean time against the sample parameter.
pub fn fit_samples(samples: &[BenchSample]) -> Option<FitReport> {
    let xs: Vec<f64> = samples.iter().map(|s| s.parameter as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.mean_ms).collect();
    fit_linear(&xs, &ys)
}

/// One timed workload within a scenario.
pub struct Case<'a> {
    pub scenario: &'static str,
    pub parameter: u64,
    pub run: Box<dyn FnMut() + 'a>,
}

impl<'a> Case<'a> {
    pub fn new<T>(scenario: &'static str, parameter: u64, mut f: impl FnMut() -> T + 'a) -> Self {
        Case {
            scenario,
            parameter,
            run: Box::new(move || {
                black_box(f());
            }),
        }
    }
}

/// Times all cases round-robin, one run of each per round, so slow drift in
/// machine speed lands on every parameter alike instead of bending the
/// curve.
pub fn measure_cases(cfg: &BenchConfig, mut cases: Vec<Case<'_>>) -> Vec<BenchSample> {
    for c in cases.iter_mut() {
        for _ in 0..cfg.warmup {
            (c.run)();
        }
    }
    let n = cases.len();
    let mut times = vec![Vec::with_capacity(cfg.iterations); n];
    for round in 0..cfg.iterations {
        for k in 0..n {
            let i = (round + k) % n;
            let start = Instant::now();
            (cases[i].run)();
            times[i].push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    cases
        .iter()
        .zip(times)
        .map(|(c, t)| {
            let k = t.len() as f64;
            let mean = t.iter().sum::<f64>() / k;
            let var = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
            BenchSample {
                scenario: c.scenario.to_string(),
                parameter: c.parameter,
                mean_ms: mean,
                stddev_ms: var.sqrt(),
                iterations: t.len(),
            }
        })
        .collect()
}

/// Registered admin, requester and PIP on one provider.
pub struct Fixture {
    pub params: SystemParams,
    pub admin: UserKey,
    pub requester: UserKey,
    pub pip: UserKey,
    pub provider: ServiceProvider,
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(profile: SecurityProfile, seed: u64) -> Result<Self, BenchError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (params, msk) =
            init(profile, &mut rng).map_err(|e| BenchError::Setup(e.to_string()))?;
        let mut kma = Kma::new(params.clone(), msk);
        let mut provider = ServiceProvider::in_memory(params.clone());
        let mut issue = |id: &str, role| -> Result<UserKey, BenchError> {
            let reg = kma
                .register(id, role, &mut rng)
                .map_err(|e| BenchError::Setup(e.to_string()))?;
            provider
                .register_server_key(reg.server_key)
                .map_err(|e| BenchError::Setup(e.to_string()))?;
            Ok(reg.user_key)
        };
        let admin = issue("bench-admin", Role::Admin)?;
        let requester = issue("bench-requester", Role::Requester)?;
        let pip = issue("bench-pip", Role::Pip)?;
        Ok(Fixture {
            params,
            admin,
            requester,
            pip,
            provider,
            rng,
        })
    }

    /// An empty provider that knows the same three server keys.
    fn fresh_provider(&self) -> ServiceProvider {
        let mut sp = ServiceProvider::in_memory(self.params.clone());
        for id in ["bench-admin", "bench-requester", "bench-pip"] {
            let key = self.provider.key_store().get(id).expect("fixture key").clone();
            sp.register_server_key(key).expect("fresh store");
        }
        sp
    }
}

fn string_cmp(i: usize) -> Comparison {
    Comparison::string_eq(&format!("attributeName_{i}"), &format!("attributeValue_{i}"))
        .expect("valid generated comparison")
}

/// The constant `2^s - 1` under `<` gives the largest compiled tree for `s`
/// bits, and reads `attributeName_i<15#4` at four bits.
fn numeric_cmp(i: usize, s: u32) -> Comparison {
    Comparison::numeric(&format!("attributeName_{i}"), CmpOp::Lt, (1u64 << s) - 1, s)
        .expect("valid generated comparison")
}

/// `m` string and `n` numeric comparisons of width `s`, joined by AND.
pub fn deploy_condition(m: usize, n: usize, s: u32) -> Result<ConditionTree, BenchError> {
    if m + n == 0 {
        return Err(BenchError::EmptyCondition);
    }
    let cmps = (1..=m)
        .map(|i| Expr::Cmp(string_cmp(i)))
        .chain((1..=n).map(|i| Expr::Cmp(numeric_cmp(i, s))));
    compile_condition(&Expr::And(cmps.collect())).map_err(|e| BenchError::Setup(e.to_string()))
}

fn bench_tuple() -> SatTuple {
    tuple("doctor", "read", "record-42")
}

#[derive(Clone, Copy, Debug)]
pub struct DeployPoint {
    pub parameter: u64,
    pub m: usize,
    pub n: usize,
    pub s: u32,
}

fn fork(fx: &mut Fixture) -> ChaCha20Rng {
    ChaCha20Rng::from_rng(&mut fx.rng).expect("ChaCha does not fail")
}

/// Client encryption of the condition and SAT tuple followed by
/// re-encryption and storage at the provider.
pub fn bench_deploy(
    cfg: &BenchConfig,
    fx: &mut Fixture,
    scenario: &'static str,
    points: &[DeployPoint],
) -> Result<Vec<BenchSample>, BenchError> {
    cfg.validate()?;
    let sat = bench_tuple();
    let mut prepared = Vec::new();
    for p in points {
        let tree = deploy_condition(p.m, p.n, p.s)?;
        prepared.push((p.parameter, tree, fx.fresh_provider(), fork(fx)));
    }
    let (params, admin, sat) = (&fx.params, &fx.admin, &sat);
    let cases = prepared
        .into_iter()
        .map(|(param, tree, mut sp, mut rng)| {
            Case::new(scenario, param, move || {
                let bundle = encrypt_policy(params, sat, &tree, admin, &mut rng);
                sp.ap_deploy(&bundle).expect("admin is registered")
            })
        })
        .collect();
    Ok(measure_cases(cfg, cases))
}

/// A PIP encrypting `m` string attributes.
pub fn bench_trapdoor_gen(
    cfg: &BenchConfig,
    fx: &mut Fixture,
    ms: &[usize],
) -> Result<Vec<BenchSample>, BenchError> {
    cfg.validate()?;
    if ms.contains(&0) {
        return Err(BenchError::EmptyCondition);
    }
    let rngs: Vec<ChaCha20Rng> = ms.iter().map(|_| fork(fx)).collect();
    let (params, pip) = (&fx.params, &fx.pip);
    let cases = ms
        .iter()
        .zip(rngs)
        .map(|(&m, mut rng)| {
            let attrs = string_attributes(m);
            Case::new("trapdoor-gen", m as u64, move || {
                pe_attributes_enc(params, &attrs, pip, &mut rng).expect("valid attributes")
            })
        })
        .collect();
    Ok(measure_cases(cfg, cases))
}

fn string_attributes(m: usize) -> AttributeAssignment {
    let mut a = AttributeAssignment::new();
    for i in 1..=m {
        a.insert_str(&format!("attributeName_{i}"), &format!("attributeValue_{i}"))
            .expect("valid generated attribute");
    }
    a
}

fn ascending(xs: &[usize]) -> bool {
    !xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1]) && xs[0] > 0
}

/// Search over stores of each size holding one matching policy among
/// non-matching ones. Policies are encrypted once and shared by all sizes.
pub fn bench_sat_search(
    cfg: &BenchConfig,
    fx: &mut Fixture,
    counts: &[usize],
) -> Result<Vec<BenchSample>, BenchError> {
    cfg.validate()?;
    if !ascending(counts) {
        return Err(BenchError::BadRange);
    }
    let max = *counts.last().expect("non-empty");
    let tree = deploy_condition(1, 0, 1)?;
    let mut scratch = fx.fresh_provider();
    let mut encrypt = |sat: &SatTuple, fx: &mut Fixture| -> PolicyRecord {
        let b = encrypt_policy(&fx.params, sat, &tree, &fx.admin, &mut fx.rng);
        let id = scratch.ap_deploy(&b).expect("admin is registered");
        scratch.policy_store().get(id).expect("just stored").clone()
    };
    let matching = encrypt(&bench_tuple(), fx);
    let others: Vec<PolicyRecord> = (1..max)
        .map(|i| encrypt(&tuple(&format!("subject_{i}"), "read", &format!("target_{i}")), fx))
        .collect();
    let request = pe_sat_enc(&fx.params, &bench_tuple(), &fx.requester, &mut fx.rng);

    let mut cases = Vec::new();
    for &count in counts {
        let mut sp = fx.fresh_provider();
        let slot = fx.rng.gen_range(0..count);
        for (i, rec) in others[..count - 1].iter().enumerate() {
            if i == slot {
                sp.push_record(&matching).expect("in memory");
            }
            sp.push_record(rec).expect("in memory");
        }
        if slot == count - 1 {
            sp.push_record(&matching).expect("in memory");
        }
        let hits = sp.pdp_sat_search(&request).expect("requester is registered").len();
        if hits != 1 {
            return Err(BenchError::Setup(format!("search found {hits} policies, expected 1")));
        }
        let request = &request;
        cases.push(Case::new("sat-search", count as u64, move || {
            sp.pdp_sat_search(request).expect("requester is registered").len()
        }));
    }
    Ok(measure_cases(cfg, cases))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    String,
    Numeric,
}

/// Condition evaluation for `n` comparisons against `n` satisfying
/// attributes. Numeric values sit one below the bound, so the last leaf of
/// each comparison is the one that matches.
pub fn bench_condition_eval(
    cfg: &BenchConfig,
    fx: &mut Fixture,
    ns: &[usize],
    mode: EvalMode,
    s: u32,
) -> Result<Vec<BenchSample>, BenchError> {
    cfg.validate()?;
    let scenario = match mode {
        EvalMode::String => "cond-eval-string",
        EvalMode::Numeric => "cond-eval-numeric",
    };
    let sat = bench_tuple();
    let mut cases = Vec::new();
    for &n in ns {
        let (tree, attrs) = match mode {
            EvalMode::String => (deploy_condition(n, 0, s)?, string_attributes(n)),
            EvalMode::Numeric => {
                let mut a = AttributeAssignment::new();
                for i in 1..=n {
                    a.insert_numeric(&format!("attributeName_{i}"), (1u64 << s) - 2, s)
                        .expect("valid generated attribute");
                }
                (deploy_condition(0, n, s)?, a)
            }
        };
        let mut sp = fx.fresh_provider();
        let b = encrypt_policy(&fx.params, &sat, &tree, &fx.admin, &mut fx.rng);
        let id = sp.ap_deploy(&b).expect("admin is registered");
        let enc = pe_attributes_enc(&fx.params, &attrs, &fx.pip, &mut fx.rng)
            .map_err(|e| BenchError::Setup(e.to_string()))?;
        let eval = move || {
            let record = sp.policy_store().get(id).expect("just stored");
            sp.pdp_condition_eval(&enc, record).expect("pip is registered")
        };
        if !eval().is_permit() {
            return Err(BenchError::Setup(format!("{scenario} n={n} did not permit")));
        }
        cases.push(Case::new(scenario, n as u64, eval));
    }
    Ok(measure_cases(cfg, cases))
}

/// Client-side SAT encryption and server-side SAT re-encryption, each as
/// one sample with parameter 3 (the tuple size).
pub fn bench_sat_enc(cfg: &BenchConfig, fx: &mut Fixture) -> Result<Vec<BenchSample>, BenchError> {
    cfg.validate()?;
    let sat = bench_tuple();
    let server = fx
        .provider
        .key_store()
        .get(fx.admin.user_id())
        .expect("fixture key")
        .clone();
    let mut rng = fork(fx);
    let (params, admin) = (&fx.params, &fx.admin);
    let cts = pd_sat_enc(params, &sat, admin, &mut rng);
    let cases = vec![
        Case::new("sat-enc", 3, move || pd_sat_enc(params, &sat, admin, &mut rng)),
        Case::new("sat-reenc", 3, move || {
            cts.each_ref().map(|ct| server_reencrypt(params, &server, ct))
        }),
    ];
    Ok(measure_cases(cfg, cases))
}

/// Named scenarios with their default parameter ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    DeployStrings,
    DeployNumeric,
    DeployBits,
    TrapdoorGen,
    SatSearch,
    CondEvalString,
    CondEvalNumeric,
    SatEnc,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::DeployStrings,
        Scenario::DeployNumeric,
        Scenario::DeployBits,
        Scenario::TrapdoorGen,
        Scenario::SatSearch,
        Scenario::CondEvalString,
        Scenario::CondEvalNumeric,
        Scenario::SatEnc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DeployStrings => "deploy-strings",
            Scenario::DeployNumeric => "deploy-numeric",
            Scenario::DeployBits => "deploy-bits",
            Scenario::TrapdoorGen => "trapdoor-gen",
            Scenario::SatSearch => "sat-search",
            Scenario::CondEvalString => "cond-eval-string",
            Scenario::CondEvalNumeric => "cond-eval-numeric",
            Scenario::SatEnc => "sat-enc",
        }
    }

    pub fn run(self, cfg: &BenchConfig, fx: &mut Fixture) -> Result<Vec<BenchSample>, BenchError> {
        let one_to_ten: Vec<usize> = (1..=10).collect();
        match self {
            Scenario::DeployStrings => {
                let pts: Vec<_> = (1..=10)
                    .map(|m| DeployPoint { parameter: m as u64, m, n: 0, s: 4 })
                    .collect();
                bench_deploy(cfg, fx, self.name(), &pts)
            }
            Scenario::DeployNumeric => {
                let pts: Vec<_> = (1..=10)
                    .map(|n| DeployPoint { parameter: n as u64, m: 0, n, s: 4 })
                    .collect();
                bench_deploy(cfg, fx, self.name(), &pts)
            }
            Scenario::DeployBits => {
                let pts: Vec<_> = (2..=20)
                    .map(|s| DeployPoint { parameter: s as u64, m: 0, n: 1, s })
                    .collect();
                bench_deploy(cfg, fx, self.name(), &pts)
            }
            Scenario::TrapdoorGen => bench_trapdoor_gen(cfg, fx, &one_to_ten),
            Scenario::SatSearch => {
                let counts: Vec<usize> = (1..=20).map(|i| i * 50).collect();
                bench_sat_search(cfg, fx, &counts)
            }
            Scenario::CondEvalString => {
                bench_condition_eval(cfg, fx, &one_to_ten, EvalMode::String, 5)
            }
            Scenario::CondEvalNumeric => {
                bench_condition_eval(cfg, fx, &one_to_ten, EvalMode::Numeric, 5)
            }
            Scenario::SatEnc => bench_sat_enc(cfg, fx),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| BenchError::UnknownScenario(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BenchConfig {
        BenchConfig { iterations: MIN_ITERATIONS, warmup: 1, seed: 5 }
    }

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x + 1.0).collect();
        let f = fit_linear(&xs, &ys).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_linear(&[1.0], &[1.0]).is_none());
        assert!(fit_linear(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }

    #[test]
    fn fit_on_noise_has_low_r2() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let f = fit_linear(&xs, &ys).unwrap();
        assert!(f.r2 < 0.2, "{f}");
    }

    #[test]
    fn empty_condition_rejected() {
        assert!(matches!(deploy_condition(0, 0, 4), Err(BenchError::EmptyCondition)));
        assert_eq!(deploy_condition(3, 0, 4).unwrap().leaf_count(), 3);
        assert_eq!(deploy_condition(0, 1, 4).unwrap().leaf_count(), 4);
        assert_eq!(deploy_condition(2, 2, 6).unwrap().leaf_count(), 14);
    }

    #[test]
    fn config_and_ranges_validated() {
        let mut fx = Fixture::new(SecurityProfile::test(), 1).unwrap();
        let few = BenchConfig { iterations: 5, ..cfg() };
        assert!(matches!(bench_sat_enc(&few, &mut fx), Err(BenchError::TooFewIterations(5))));
        assert!(matches!(bench_sat_search(&cfg(), &mut fx, &[3, 2]), Err(BenchError::BadRange)));
        assert!(matches!(bench_sat_search(&cfg(), &mut fx, &[]), Err(BenchError::BadRange)));
        assert!("nope".parse::<Scenario>().is_err());
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
    }

    #[test]
    fn csv_layout() {
        let mut fx = Fixture::new(SecurityProfile::Production, 2).unwrap();
        let samples = bench_sat_enc(&cfg(), &mut fx).unwrap();
        let csv = to_csv(&samples);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("sat-enc,3,"));
        assert!(lines[2].starts_with("sat-reenc,3,"));
        assert!(lines[1].ends_with(",30"));
        assert!(samples.iter().all(|s| s.mean_ms > 0.0));
    }

    #[test]
    fn workloads_depend_only_on_seed() {
        let build = |seed| {
            let mut fx = Fixture::new(SecurityProfile::Production, seed).unwrap();
            let tree = deploy_condition(2, 1, 3).unwrap();
            encrypt_policy(&fx.params, &bench_tuple(), &tree, &fx.admin, &mut fx.rng)
        };
        assert_eq!(build(7), build(7));
        assert_ne!(build(7), build(8));
    }

    #[test]
    fn small_search_finds_one() {
        let mut fx = Fixture::new(SecurityProfile::Production, 3).unwrap();
        let samples = bench_sat_search(&cfg(), &mut fx, &[1, 4]).unwrap();
        assert_eq!(samples.iter().map(|s| s.parameter).collect::<Vec<_>>(), vec![1, 4]);
    }
}
