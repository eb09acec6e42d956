// SPDX-License-Identifier: Apache-2.0

//! The `quebian` command line. Write subcommands open the ledger file
//! directly and commit before returning, so they must not run against a file
//! held by `node start`.
//!
//! Exit codes: 0 success, 1 domain rejection, 2 usage or I/O error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quebian_core::consensus::EngineKind;
use quebian_core::ehr::{DoctorRegistration, HospitalRegistration, NewRecord, PatientRegistration};
use quebian_core::identity::{
    create_presentation, issue_credential, verify_presentation, Credential, CredentialDefinition, DidKey, Nonce,
    Presentation, Role, Schema,
};
use quebian_core::ledger::{verify_chain, ChainReport, Ledger};
use quebian_core::netsim::{compare_paradigms, run_scenario, Scenario};
use quebian_core::node::{Node, TxOutcome};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{GatewayConfig, CONFIG_ENV, DEFAULT_PORT, PORT_ENV};
use crate::error::{ApiError, ErrorCode};
use crate::service::{self, committed, ensure_registered, fresh_tx_id, load_or_create_identity, sign_call, Gateway};
use crate::wire::{
    self, Call, ConsentBody, CredDefRequest, DidRequest, RecordQuery, RecordRequest, RevocationRequest,
    SchemaRequest, VerifyChainResponse, VerifyResponse,
};

#[derive(Parser, Debug)]
#[command(name = "quebian", version, about = "Permissioned medical-record ledger")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the HTTP gateway.
    Node {
        #[command(subcommand)]
        cmd: NodeCmd,
    },
    /// Inspect a ledger file.
    Ledger {
        #[command(subcommand)]
        cmd: LedgerCmd,
    },
    /// Identity operations.
    Iam {
        #[command(subcommand)]
        cmd: IamCmd,
    },
    /// Medical-record operations.
    Ehr {
        #[command(subcommand)]
        cmd: EhrCmd,
    },
    /// Network simulations.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct NodeOpts {
    /// Gateway config file.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Ledger file; overrides the config.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

impl NodeOpts {
    fn resolve(&self) -> Result<GatewayConfig, CliError> {
        let mut c = GatewayConfig::resolve(self.config.as_deref()).map_err(|e| CliError::Io(e.to_string()))?;
        if let Some(l) = &self.ledger {
            c.ledger_path = l.clone();
        }
        Ok(c)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct EngineOpts {
    #[arg(long)]
    pub orderer: Option<EngineKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub f: Option<usize>,
    #[arg(long)]
    pub batch_max: Option<usize>,
    #[arg(long)]
    pub batch_wait_ms: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum NodeCmd {
    Start {
        #[command(flatten)]
        node: NodeOpts,
        #[command(flatten)]
        engine: EngineOpts,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
}

#[derive(Subcommand, Debug)]
pub enum LedgerCmd {
    /// Exit 0 if intact, 1 with the first bad height if tampered, 2 on I/O error.
    Verify {
        #[arg(long)]
        path: Option<PathBuf>,
        #[command(flatten)]
        node: NodeOpts,
    },
}

#[derive(Subcommand, Debug)]
pub enum IamCmd {
    /// Register a wallet's DID, generating the wallet if the file is missing.
    RegisterDid {
        #[arg(long)]
        wallet: PathBuf,
        /// Role of a newly generated DID.
        #[arg(long, default_value = "holder")]
        role: String,
        #[command(flatten)]
        node: NodeOpts,
    },
    PublishSchema {
        /// Issuer wallet.
        #[arg(long)]
        wallet: PathBuf,
        /// Schema JSON, inline or a file path.
        #[arg(long)]
        schema: String,
        #[command(flatten)]
        node: NodeOpts,
    },
    PublishCreddef {
        #[arg(long)]
        wallet: PathBuf,
        #[arg(long)]
        cred_def_id: String,
        #[arg(long)]
        schema_id: String,
        #[command(flatten)]
        node: NodeOpts,
    },
    /// Issue a credential off-ledger.
    Issue {
        #[arg(long)]
        wallet: PathBuf,
        #[arg(long)]
        cred_def_id: String,
        #[arg(long)]
        holder: String,
        /// `name=value`, once per attribute.
        #[arg(long = "attr")]
        attrs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        node: NodeOpts,
    },
    /// Build a presentation from a held credential.
    Present {
        /// Holder wallet.
        #[arg(long)]
        wallet: PathBuf,
        #[arg(long)]
        credential: PathBuf,
        #[arg(long, value_delimiter = ',')]
        disclose: Vec<String>,
        /// Verifier nonce as hex; random if omitted.
        #[arg(long)]
        nonce: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exit 0 if accepted, 1 if rejected.
    Verify {
        #[arg(long)]
        presentation: PathBuf,
        #[arg(long)]
        nonce: Option<String>,
        #[command(flatten)]
        node: NodeOpts,
    },
    Revoke {
        #[arg(long)]
        wallet: PathBuf,
        #[arg(long)]
        cred_def_id: String,
        #[arg(long)]
        cred_id: String,
        #[command(flatten)]
        node: NodeOpts,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EntityKind {
    Hospital,
    Doctor,
    Patient,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConsentAction {
    Grant,
    Revoke,
}

#[derive(Subcommand, Debug)]
pub enum EhrCmd {
    Register {
        kind: EntityKind,
        /// Registration JSON, inline or a file path.
        #[arg(long)]
        data: String,
        #[command(flatten)]
        node: NodeOpts,
    },
    Append {
        /// Record JSON, inline or a file path.
        #[arg(long)]
        record: String,
        /// The doctor's presentation file.
        #[arg(long)]
        presentation: PathBuf,
        #[command(flatten)]
        node: NodeOpts,
    },
    Consent {
        action: ConsentAction,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        doctor: String,
        /// The patient's presentation file.
        #[arg(long)]
        presentation: PathBuf,
        #[command(flatten)]
        node: NodeOpts,
    },
    Query {
        #[arg(long, conflicts_with = "symptom", required_unless_present = "symptom")]
        patient: Option<String>,
        #[arg(long)]
        symptom: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        offset: Option<usize>,
        #[command(flatten)]
        node: NodeOpts,
    },
}

#[derive(Subcommand, Debug)]
pub enum ScenarioCmd {
    Run {
        /// Scenario file: `{"config": …, "workload": …, "compare": bool}`.
        #[arg(long)]
        config: PathBuf,
        /// Metrics output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Event transcript output file.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Api(ApiError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Api(e) if e.code == ErrorCode::Internal => 2,
            CliError::Api(_) => 1,
        }
    }

    fn render(&self, json: bool) -> String {
        let api = match self {
            CliError::Usage(m) => ApiError::bad_request(m.clone()),
            CliError::Io(m) => ApiError::internal(m.clone()),
            CliError::Api(e) => e.clone(),
        };
        if json {
            api.to_json()
        } else {
            format!("error: {api}")
        }
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError::Api(e)
    }
}

/// What a command printed and how it exited.
pub struct Output {
    pub json: String,
    pub text: String,
    pub code: i32,
}

impl Output {
    fn ok<T: Serialize>(value: &T, text: impl Into<String>) -> Self {
        Output { json: serde_json::to_string(value).expect("serializes"), text: text.into(), code: 0 }
    }

    fn data<T: Serialize>(value: &T) -> Self {
        Output {
            json: serde_json::to_string(value).expect("serializes"),
            text: serde_json::to_string_pretty(value).expect("serializes"),
            code: 0,
        }
    }

    fn with_code(mut self, code: i32) -> Self {
        self.code = code;
        self
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parses `arg` as inline JSON, or reads it as a file path.
fn json_arg<T: DeserializeOwned>(arg: &str) -> Result<T, CliError> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        serde_json::from_str(arg).map_err(|e| CliError::Usage(format!("invalid JSON: {e}")))
    } else {
        read_json(Path::new(arg))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn parse_nonce(s: &str) -> Result<Nonce, CliError> {
    Nonce::from_hex(s).ok_or_else(|| CliError::Usage(format!("nonce must be 32 lowercase hex digits: {s}")))
}

fn open_ledger(opts: &NodeOpts) -> Result<Ledger, CliError> {
    let c = opts.resolve()?;
    Ledger::open(&c.ledger_path).map_err(|e| io_err(&c.ledger_path, e))
}

/// A node opened for one write.
struct Local {
    node: Node,
    identity: DidKey,
    rng: StdRng,
}

impl Local {
    fn open(opts: &NodeOpts) -> Result<Self, CliError> {
        let c = opts.resolve()?;
        let ledger = Ledger::open_or_create(&c.ledger_path, 0).map_err(|e| io_err(&c.ledger_path, e))?;
        let identity = load_or_create_identity(&c.identity_path).map_err(|e| CliError::Io(e.to_string()))?;
        let mut node = Node::new(ledger, &c.node).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut rng = StdRng::from_entropy();
        ensure_registered(&mut node, &identity, &mut rng).map_err(ApiError::from)?;
        Ok(Local { node, identity, rng })
    }

    fn execute(&mut self, call: Call) -> Result<TxOutcome, CliError> {
        let proposal = sign_call(&call, fresh_tx_id(&mut self.rng), &self.identity);
        let out = self.node.execute(proposal, &call.transient, service::wall_clock_ms()).map_err(ApiError::from)?;
        Ok(committed(out)?)
    }
}

fn commit(opts: &NodeOpts, call: Call) -> Result<Output, CliError> {
    let out = Local::open(opts)?.execute(call)?;
    let text = format!("{} committed at height {} ({})", out.tx_id, out.height, out.code);
    Ok(Output::ok(&out, text))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DidOutcome {
    did: String,
    role: Role,
    #[serde(flatten)]
    outcome: TxOutcome,
}

fn run_iam(cmd: IamCmd) -> Result<Output, CliError> {
    match cmd {
        IamCmd::RegisterDid { wallet, role, node } => {
            let key: DidKey = if wallet.exists() {
                read_json(&wallet)?
            } else {
                let role = Role::parse(&role).ok_or_else(|| CliError::Usage(format!("unknown role {role}")))?;
                let key = DidKey::generate(role, &mut rand::rngs::OsRng);
                write_json(&wallet, &key)?;
                key
            };
            let outcome = Local::open(&node)?.execute(DidRequest::signed(&key).call())?;
            let text = format!("registered {} as {} at height {}", key.did, key.role, outcome.height);
            Ok(Output::ok(&DidOutcome { did: key.did, role: key.role, outcome }, text))
        }
        IamCmd::PublishSchema { wallet, schema, node } => {
            let issuer: DidKey = read_json(&wallet)?;
            let schema: Schema = json_arg(&schema)?;
            commit(&node, SchemaRequest::signed(&issuer, &schema).call())
        }
        IamCmd::PublishCreddef { wallet, cred_def_id, schema_id, node } => {
            let issuer: DidKey = read_json(&wallet)?;
            let cd = CredentialDefinition { cred_def_id, issuer_did: issuer.did.clone(), schema_id };
            commit(&node, CredDefRequest::signed(&issuer, &cd).call())
        }
        IamCmd::Issue { wallet, cred_def_id, holder, attrs, out, node } => {
            let issuer: DidKey = read_json(&wallet)?;
            let mut map = BTreeMap::new();
            for a in attrs {
                let (k, v) = a.split_once('=').ok_or_else(|| CliError::Usage(format!("expected name=value: {a}")))?;
                map.insert(k.to_string(), v.to_string());
            }
            let ledger = open_ledger(&node)?;
            let cred = issue_credential(&issuer.secret_key, ledger.state(), &cred_def_id, &holder, map, &mut rand::rngs::OsRng)
                .map_err(|e| ApiError::bad_request(e.to_string()))?;
            emit(&cred, out.as_deref(), &format!("issued {}", cred.cred_id))
        }
        IamCmd::Present { wallet, credential, disclose, nonce, out } => {
            let holder: DidKey = read_json(&wallet)?;
            let cred: Credential = read_json(&credential)?;
            let nonce = match nonce {
                Some(n) => parse_nonce(&n)?,
                None => Nonce::random(&mut rand::rngs::OsRng),
            };
            let names: Vec<&str> = disclose.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
            let pres = create_presentation(&cred, &holder.secret_key, &names, nonce)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            emit(&pres, out.as_deref(), &format!("presentation of {} disclosing {}", pres.cred_id, names.join(",")))
        }
        IamCmd::Verify { presentation, nonce, node } => {
            let pres: Presentation = read_json(&presentation)?;
            let nonce = nonce.as_deref().map(parse_nonce).transpose()?;
            let ledger = open_ledger(&node)?;
            let result = verify_presentation(&pres, &mut ledger.state(), nonce);
            let resp = VerifyResponse::from_result(&pres, result);
            let text = match &resp.reason {
                None => "accepted".to_string(),
                Some(r) => format!("rejected: {r}"),
            };
            let code = if resp.accepted { 0 } else { 1 };
            Ok(Output::ok(&resp, text).with_code(code))
        }
        IamCmd::Revoke { wallet, cred_def_id, cred_id, node } => {
            let issuer: DidKey = read_json(&wallet)?;
            commit(&node, RevocationRequest::signed(&issuer, &cred_def_id, &cred_id).call())
        }
    }
}

/// Writes `value` to `out`, or prints it when no file is given.
fn emit<T: Serialize>(value: &T, out: Option<&Path>, text: &str) -> Result<Output, CliError> {
    match out {
        Some(p) => {
            write_json(p, value)?;
            #[derive(Serialize)]
            struct Written<'a> {
                out: &'a Path,
            }
            Ok(Output::ok(&Written { out: p }, format!("{text} -> {}", p.display())))
        }
        None => Ok(Output::data(value)),
    }
}

fn run_ehr(cmd: EhrCmd) -> Result<Output, CliError> {
    match cmd {
        EhrCmd::Register { kind, data, node } => {
            let call = match kind {
                EntityKind::Hospital => wire::register_hospital(&json_arg::<HospitalRegistration>(&data)?),
                EntityKind::Doctor => wire::register_doctor(&json_arg::<DoctorRegistration>(&data)?),
                EntityKind::Patient => wire::register_patient(&json_arg::<PatientRegistration>(&data)?),
            };
            commit(&node, call)
        }
        EhrCmd::Append { record, presentation, node } => {
            let req = RecordRequest { record: json_arg::<NewRecord>(&record)?, presentation: read_json(&presentation)? };
            commit(&node, req.call())
        }
        EhrCmd::Consent { action, patient, doctor, presentation, node } => {
            let body = ConsentBody { patient_id: patient, doctor_id: doctor, presentation: read_json(&presentation)? };
            commit(&node, body.call(matches!(action, ConsentAction::Grant)))
        }
        EhrCmd::Query { patient, symptom, limit, offset, node } => {
            let q = RecordQuery { patient_id: patient, symptom_id: symptom, limit, offset };
            let records = q.run(open_ledger(&node)?.state())?;
            Ok(Output::data(&records))
        }
    }
}

fn run_ledger(cmd: LedgerCmd) -> Result<Output, CliError> {
    match cmd {
        LedgerCmd::Verify { path, node } => {
            let path = match path {
                Some(p) => p,
                None => node.resolve()?.ledger_path,
            };
            let report = verify_chain(&path).map_err(|e| io_err(&path, e))?;
            let text = match &report {
                ChainReport::Ok { height } => format!("ok: {height} blocks after genesis"),
                ChainReport::Tampered { height, reason } => format!("tampered at height {height}: {reason}"),
            };
            let code = if report.is_ok() { 0 } else { 1 };
            Ok(Output::ok(&VerifyChainResponse::from(report), text).with_code(code))
        }
    }
}

fn run_scenario_cmd(cmd: ScenarioCmd) -> Result<Output, CliError> {
    let ScenarioCmd::Run { config, out, transcript } = cmd;
    let sc: Scenario = read_json(&config)?;
    let bad = |e: quebian_core::netsim::SimError| CliError::Usage(e.to_string());
    let (metrics, lines, safe) = if sc.compare {
        let cmp = compare_paradigms(&sc.config, &sc.workload).map_err(bad)?;
        let s = cmp.summary();
        let safe = s.pipeline.out_of_model || s.pipeline.safety.prefix_consistent;
        (serde_json::to_value(&s), cmp.pipeline.transcript_text(), safe)
    } else {
        let r = run_scenario(&sc.config, &sc.workload).map_err(bad)?;
        let safe = r.summary.out_of_model || r.summary.safety.prefix_consistent;
        (serde_json::to_value(&r.summary), r.transcript_text(), safe)
    };
    let metrics = metrics.expect("summary serializes");
    if let Some(t) = transcript {
        std::fs::write(&t, lines).map_err(|e| io_err(&t, e))?;
    }
    let code = if safe { 0 } else { 1 };
    let output = match out {
        Some(p) => {
            write_json(&p, &metrics)?;
            Output::ok(&metrics, format!("metrics written to {}", p.display()))
        }
        None => Output::data(&metrics),
    };
    Ok(output.with_code(code))
}

fn start_node(node: NodeOpts, engine: EngineOpts, port: u16, bind: IpAddr, stdout: &mut dyn Write) -> Result<Output, CliError> {
    let mut c = node.resolve()?;
    let e = engine;
    c.node.orderer = e.orderer.unwrap_or(c.node.orderer);
    c.node.n = e.n.unwrap_or(c.node.n);
    c.node.f = e.f.unwrap_or(c.node.f);
    c.node.batch_max = e.batch_max.unwrap_or(c.node.batch_max);
    c.node.batch_wait_ms = e.batch_wait_ms.unwrap_or(c.node.batch_wait_ms);
    let gw = Gateway::open(&c).map_err(|e| CliError::Io(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async move {
        let addr = SocketAddr::new(bind, port);
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        let _ = writeln!(stdout, "listening on {local}");
        let _ = stdout.flush();
        crate::http::serve(Arc::new(gw), listener).await.map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Output::ok(&(), "stopped"))
    })
}

/// Runs one command line, printing to `stdout` and `stderr`. Returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let json = cli.json;
    let result = match cli.command {
        Command::Node { cmd: NodeCmd::Start { node, engine, port, bind } } => start_node(node, engine, port, bind, stdout),
        Command::Ledger { cmd } => run_ledger(cmd),
        Command::Iam { cmd } => run_iam(cmd),
        Command::Ehr { cmd } => run_ehr(cmd),
        Command::Scenario { cmd } => run_scenario_cmd(cmd),
    };
    match result {
        Ok(out) => {
            let _ = writeln!(stdout, "{}", if json { &out.json } else { &out.text });
            out.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.render(json));
            e.exit_code()
        }
    }
}
