use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use espoon::bench::{self, BenchConfig, Fixture, Scenario};
use espoon::clients::{encrypt_policy, pe_attributes_enc, pe_sat_enc, Kma, Role};
use espoon::codec::{params_from_record, params_to_record, TextRecord};
use espoon::crypto::{init, SecurityProfile, SystemParams, UserKey};
use espoon::lang::{parse_attributes, parse_policies};
use espoon::policy::SatTuple;
use espoon::service::{Decision, ServiceError, ServiceProvider};

const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_NOINPUT: u8 = 66;
const EX_IOERR: u8 = 74;

const PARAMS_FILE: &str = "params";
const KMA_FILE: &str = "kma.state";
const USERS_DIR: &str = "users";

#[derive(Parser)]
#[command(name = "espoon", version, about = "Encrypted policy enforcement in outsourced environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// Built-in 2048-bit group.
    Production,
    /// The 23/11 toy group. Offers no security.
    Tiny,
}

#[derive(Subcommand)]
enum Command {
    /// Create system parameters and the master secret.
    KmaInit {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "production")]
        profile: ProfileArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Issue split keys for a user; the server share goes to the key store.
    Register {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        role: Role,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Encrypt and deploy every policy in a file.
    Deploy {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Remove a user's server key.
    Revoke {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        user: String,
    },
    /// Evaluate an access request. Exit 0 on PERMIT, 1 on DENY, 2 on REJECTED.
    Request {
        subject: String,
        action: String,
        target: String,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Requester id.
        #[arg(long)]
        user: String,
        /// PIP id that encrypts the attributes.
        #[arg(long)]
        pip: String,
        #[arg(long)]
        attrs: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a benchmark scenario, or `all`, and write CSV.
    Bench {
        scenario: String,
        #[arg(long, default_value_t = bench::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Missing(PathBuf),
    Data(String),
    Io(io::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EX_USAGE,
            Failure::Missing(_) => EX_NOINPUT,
            Failure::Data(_) => EX_DATAERR,
            Failure::Io(_) => EX_IOERR,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
            Failure::Missing(p) => write!(f, "{}: no such file", p.display()),
            Failure::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Io(e) => Failure::Io(e),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Failure::Missing(path.to_path_buf()),
        _ => Failure::Io(e),
    })
}

fn load_params(dir: &Path) -> Result<SystemParams, Failure> {
    params_from_record(&read(&dir.join(PARAMS_FILE))?).map_err(data)
}

/// Ids double as file names under `users/`.
fn check_id(id: &str) -> Result<(), Failure> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "user id `{id}` must use only ASCII letters, digits, `-`, `_` and `.`"
        )))
    }
}

fn key_path(params_dir: &Path, id: &str) -> PathBuf {
    params_dir.join(USERS_DIR).join(format!("{id}.key"))
}

fn load_user_key(params_dir: &Path, params: &SystemParams, id: &str) -> Result<UserKey, Failure> {
    check_id(id)?;
    UserKey::from_record(params, &read(&key_path(params_dir, id))?).map_err(data)
}

/// The store directory must already exist, so a typo does not silently
/// create an empty store.
fn open_store(dir: &Path, params: SystemParams) -> Result<ServiceProvider, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Missing(dir.to_path_buf()));
    }
    Ok(ServiceProvider::open(params, dir)?)
}

fn run(cmd: Command, out: &mut impl Write) -> Result<u8, Failure> {
    match cmd {
        Command::KmaInit {
            params,
            profile,
            seed,
        } => {
            let profile = match profile {
                ProfileArg::Production => SecurityProfile::Production,
                ProfileArg::Tiny => SecurityProfile::test(),
            };
            let (sp, msk) = init(profile, &mut rng(seed)).map_err(data)?;
            fs::create_dir_all(params.join(USERS_DIR))?;
            let kma = Kma::new(sp.clone(), msk);
            fs::write(params.join(PARAMS_FILE), params_to_record(&sp))?;
            fs::write(params.join(KMA_FILE), kma.state_to_text())?;
            writeln!(out, "initialized {}", params.display())?;
        }
        Command::Register {
            params,
            store,
            user,
            role,
            seed,
        } => {
            check_id(&user)?;
            let sp = load_params(&params)?;
            let state = params.join(KMA_FILE);
            let mut kma = Kma::state_from_text(sp.clone(), &read(&state)?).map_err(data)?;
            fs::create_dir_all(&store)?;
            let mut provider = open_store(&store, sp.clone())?;
            let reg = kma.register(&user, role, &mut rng(seed)).map_err(data)?;
            provider.register_server_key(reg.server_key)?;
            fs::create_dir_all(params.join(USERS_DIR))?;
            fs::write(key_path(&params, &user), reg.user_key.to_record(&sp))?;
            fs::write(&state, kma.state_to_text())?;
            writeln!(out, "registered {user} as {role}")?;
        }
        Command::Deploy {
            params,
            store,
            user,
            policy,
            seed,
        } => {
            let sp = load_params(&params)?;
            let key = load_user_key(&params, &sp, &user)?;
            let text = read(&policy)?;
            let asts = parse_policies(&text)
                .map_err(|e| Failure::Data(format!("{}:{e}", policy.display())))?;
            let mut provider = open_store(&store, sp.clone())?;
            let mut rng = rng(seed);
            for ast in &asts {
                let tree = ast.compile().map_err(data)?;
                let bundle = encrypt_policy(&sp, &ast.sat, &tree, &key, &mut rng);
                match provider.ap_deploy(&bundle) {
                    Ok(id) => writeln!(out, "deployed policy {id}")?,
                    Err(ServiceError::Rejected(r)) => {
                        writeln!(out, "REJECTED {r}")?;
                        return Ok(2);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Command::Revoke {
            params,
            store,
            user,
        } => {
            let sp = load_params(&params)?;
            let mut provider = open_store(&store, sp)?;
            if provider.ap_revoke(&user)? {
                writeln!(out, "revoked {user}")?;
            } else {
                writeln!(out, "notice: no server key for {user}; nothing revoked")?;
            }
        }
        Command::Request {
            subject,
            action,
            target,
            params,
            store,
            user,
            pip,
            attrs,
            seed,
        } => {
            let sp = load_params(&params)?;
            let requester = load_user_key(&params, &sp, &user)?;
            let pip_key = load_user_key(&params, &sp, &pip)?;
            let sat = SatTuple::new(&subject, &action, &target)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let assignment = parse_attributes(&read(&attrs)?)
                .map_err(|e| Failure::Data(format!("{}:{e}", attrs.display())))?;
            let provider = open_store(&store, sp.clone())?;
            let mut rng = rng(seed);
            let request = pe_sat_enc(&sp, &sat, &requester, &mut rng);
            let enc = pe_attributes_enc(&sp, &assignment, &pip_key, &mut rng).map_err(data)?;
            let decision = provider.pep_handle(&request, &enc);
            writeln!(out, "{decision}")?;
            return Ok(match decision {
                Decision::Permit(_) => 0,
                Decision::Deny => 1,
                Decision::Rejected(_) => 2,
            });
        }
        Command::Bench {
            scenario,
            iterations,
            seed,
            out: csv_path,
        } => {
            let scenarios = if scenario == "all" {
                Scenario::ALL.to_vec()
            } else {
                vec![scenario.parse().map_err(|e| Failure::Usage(format!("{e}")))?]
            };
            let cfg = BenchConfig {
                iterations,
                seed,
                ..BenchConfig::default()
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let mut fx = Fixture::new(SecurityProfile::Production, seed).map_err(data)?;
            let mut samples = Vec::new();
            for sc in scenarios {
                let got = sc.run(&cfg, &mut fx).map_err(data)?;
                if let Some(fit) = bench::fit_samples(&got) {
                    eprintln!("{sc}: {fit}");
                    if sc == Scenario::SatSearch {
                        eprintln!(
                            "{sc}: {:.4} ms per stored policy (published reference: 0.5 ms)",
                            fit.slope
                        );
                    }
                }
                samples.extend(got);
            }
            let csv = bench::to_csv(&samples);
            match csv_path {
                Some(p) => fs::write(p, csv)?,
                None => out.write_all(csv.as_bytes())?,
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EX_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("espoon: {f}");
            ExitCode::from(f.code())
        }
    }
}
