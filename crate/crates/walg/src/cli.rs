//! The `walg` command-line front end: registry loading, a small parser for
//! generator specifications, the library operations as subcommands, and
//! JSON/LaTeX/text emission.
//!
//! Exit codes: 0 on success, 1 on domain errors (missing couplings, wedge
//! violations, constraint violations found by `kappa-check`), 2 on usage
//! errors including malformed generator specifications.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::arith::{HalfInt, Rational};
use crate::freefield::{gg_target_slots, make_w_current, match_b_constants, solve_alpha, wick_ope};
use crate::latex;
use crate::ope::{build_soft_ope, build_wtilde_ope, canonicalize, mode_extract, OpeExpansion};
use crate::structure::{
    jacobi_residual, kappa_conditions, n_coeff, soft_bracket, vanishing_p_report,
    wtilde_bracket_truncated, BracketResult, CouplingRegistry, Family, GeneratorLabel,
    GeneratorMode, NRep,
};
use crate::supertwist::{
    brst, brst_contour_selection, derived_b_tables, gg_anticommutator, rescale_limit,
    vhat_bracket, vhat_known, FermionicMode, GhatTable,
};

/// A parse failure with the byte position it occurred at.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at column {}: {}", self.position + 1, self.message)
    }
}

/// Parse a generator specification such as `Wt[q=2,s=2,m=1]`,
/// `G-[q=3/2,r=1/2]`, `H[k=0,s=2,m=-1]` or `Vhat[q=2,m=0]`.
///
/// Printing a parsed mode reproduces the canonical input form.
pub fn parse_generator(input: &str) -> Result<GeneratorMode, ParseError> {
    let open = input.find('[').ok_or(ParseError {
        position: input.len(),
        message: "expected '[' after the family name".to_string(),
    })?;
    let family_token = &input[..open];
    let family = Family::from_token(family_token).ok_or(ParseError {
        position: 0,
        message: format!(
            "unknown family {family_token:?} (expected H, w, Wt, Wt2, G+, G-, Vhat)"
        ),
    })?;
    if !input.ends_with(']') {
        return Err(ParseError {
            position: input.len(),
            message: "expected closing ']'".to_string(),
        });
    }
    let inner = &input[open + 1..input.len() - 1];

    let mut q: Option<HalfInt> = None;
    let mut s: Option<HalfInt> = None;
    let mut m: Option<HalfInt> = None;
    let mut cursor = open + 1;
    for field in inner.split(',') {
        let field_start = cursor;
        cursor += field.len() + 1;
        let eq = field.find('=').ok_or(ParseError {
            position: field_start,
            message: format!("field {field:?} is missing '='"),
        })?;
        let name = field[..eq].trim();
        let value_str = field[eq + 1..].trim();
        let value: HalfInt = value_str.parse().map_err(|e| ParseError {
            position: field_start + eq + 1,
            message: e,
        })?;
        let weight_name = if family == Family::H { "k" } else { "q" };
        let mode_name = if family.is_fermionic() { "r" } else { "m" };
        if name == weight_name {
            q = Some(value);
        } else if name == "s" {
            s = Some(value);
        } else if name == mode_name {
            m = Some(value);
        } else {
            return Err(ParseError {
                position: field_start,
                message: format!(
                    "unknown field {name:?} for family {family_token} (expected {weight_name}, s, {mode_name})"
                ),
            });
        }
    }

    let q = q.ok_or(ParseError {
        position: open,
        message: format!("missing weight field for {family_token}"),
    })?;
    let m = m.ok_or(ParseError {
        position: open,
        message: format!("missing mode field for {family_token}"),
    })?;
    let label = GeneratorLabel::new(family, q, s).map_err(|e| ParseError {
        position: open,
        message: e.to_string(),
    })?;
    GeneratorMode::new(label, m).map_err(|e| ParseError { position: open, message: e.to_string() })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
    Latex,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum RepArg {
    Def,
    Lemma,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum OpeKind {
    Wtilde,
    Soft,
    G,
}

fn parse_halfint(s: &str) -> Result<HalfInt, String> {
    s.parse()
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    s.parse()
}

#[derive(Parser, Debug)]
#[command(
    name = "walg",
    version,
    about = "Exact engine for the deformed w_{1+infinity} algebra of celestial soft currents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Coupling registry JSON; falls back to $WALG_REGISTRY, then kappa = 1.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the result to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WeightPair {
    #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
    q1: HalfInt,
    #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
    q2: HalfInt,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the structure constant N(q1, q2, m, n, p).
    #[command(name = "n-coeff")]
    NCoeff {
        #[command(flatten)]
        weights: WeightPair,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        m: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        n: HalfInt,
        #[arg(long)]
        p: u32,
        #[arg(long, value_enum, default_value_t = RepArg::Def)]
        rep: RepArg,
    },
    /// Bracket of two generator modes, e.g. 'Wt[q=2,s=2,m=1]' 'Wt[q=2,s=2,m=-1]'.
    Bracket {
        a: String,
        b: String,
        /// Restrict the grade sum to p <= this bound.
        #[arg(long)]
        truncate_p: Option<u32>,
    },
    /// Canonical OPE of two currents.
    Ope {
        #[arg(long, value_enum, default_value_t = OpeKind::Wtilde)]
        kind: OpeKind,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q1: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q2: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        k1: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        k2: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s2: HalfInt,
        /// Truncation of the soft dbar tower.
        #[arg(long, default_value_t = 4)]
        alpha_max: u32,
    },
    /// Extract the mode bracket from an OPE.
    #[command(name = "mode-extract")]
    ModeExtract {
        #[arg(long, value_enum, default_value_t = OpeKind::Wtilde)]
        kind: OpeKind,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q1: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q2: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        k1: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        k2: Option<HalfInt>,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s2: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        m: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        n: HalfInt,
        #[arg(long, default_value_t = 16)]
        alpha_max: u32,
    },
    /// Jacobi residual [[a,b],c] + [[b,c],a] + [[c,a],b].
    Jacobi {
        a: String,
        b: String,
        c: String,
        #[arg(long)]
        truncate_p: Option<u32>,
    },
    /// Check the four coupling constraints; exit 1 when any is violated.
    #[command(name = "kappa-check")]
    KappaCheck,
    /// Wick OPE of two ghost-realized w currents.
    Wick {
        #[command(flatten)]
        weights: WeightPair,
        #[arg(long, value_parser = parse_rational, allow_hyphen_values = true, default_value = "1")]
        kappa: Rational,
        /// Antiholomorphic Taylor order.
        #[arg(long, default_value_t = 2)]
        order: u32,
    },
    /// Determine realization coefficients and report the matching residual.
    #[command(name = "solve-alpha")]
    SolveAlpha {
        #[arg(long, default_value_t = 1)]
        order: u32,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        q1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "3")]
        q2: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s2: HalfInt,
    },
    /// Solve for the fermionic structure constants B, Bt symbolically.
    #[command(name = "match-b")]
    MatchB,
    /// BRST and topological sector.
    Twist {
        #[command(subcommand)]
        action: TwistAction,
    },
    /// Batch table generation.
    Table {
        #[arg(long, value_enum)]
        what: TableKind,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "3")]
        q_max: HalfInt,
        #[arg(long, default_value_t = 4)]
        p_max: u32,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true, default_value = "2")]
        s2: HalfInt,
    },
}

#[derive(Subcommand, Debug)]
enum TwistAction {
    /// Print the BRST operator and its defining contour selection.
    Brst,
    /// The topological generator Vhat^q with the derived constants.
    Vhat {
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q: HalfInt,
    },
    /// Anticommutator {G-[q1]_r1, G+[q2]_r2} with the derived constants.
    Gg {
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        r1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q2: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        r2: HalfInt,
    },
    /// Bracket of topological generators [Vhat^{q1}_m, Vhat^{q2}_n].
    Bracket {
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        m: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q2: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        n: HalfInt,
        /// Keep only this grade.
        #[arg(long)]
        p: Option<u32>,
    },
    /// The reduced brackets after the rescaling limit.
    Rescale {
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q1: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        m: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        q2: HalfInt,
        #[arg(long, value_parser = parse_halfint, allow_hyphen_values = true)]
        n: HalfInt,
        #[arg(long, default_value_t = 1)]
        p_keep: u32,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum TableKind {
    #[value(name = "n-coeff")]
    NCoeff,
    Vanishing,
}

struct Emitter {
    format: Format,
    out: Option<PathBuf>,
}

impl Emitter {
    fn emit(&self, text: String, jsonv: serde_json::Value, latex: Option<String>) -> Result<(), String> {
        let payload = match self.format {
            Format::Text => text,
            Format::Json => serde_json::to_string_pretty(&jsonv).map_err(|e| e.to_string())?,
            Format::Latex => latex.ok_or("no LaTeX form for this output".to_string())?,
        };
        match &self.out {
            Some(path) => std::fs::write(path, payload + "\n").map_err(|e| e.to_string()),
            None => {
                use std::io::Write;
                let mut stdout = std::io::stdout().lock();
                match writeln!(stdout, "{payload}") {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                    other => other.map_err(|e| e.to_string()),
                }
            }
        }
    }
}

fn load_registry(path: Option<PathBuf>) -> Result<CouplingRegistry, String> {
    let path = path.or_else(|| std::env::var_os("WALG_REGISTRY").map(PathBuf::from));
    match path {
        None => Ok(CouplingRegistry::unit()),
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read registry {}: {e}", path.display()))?;
            CouplingRegistry::from_json(&text)
                .map_err(|e| format!("registry {}: {e}", path.display()))
        }
    }
}

fn bracket_json(result: &BracketResult) -> serde_json::Value {
    json!({
        "terms": result.combination,
        "dropped": result.dropped.iter().map(|d| json!({
            "p": d.p,
            "coeff": d.coeff,
            "family": d.family.token(),
            "q": d.q,
            "s": d.s,
            "m": d.m,
            "reason": format!("{:?}", d.reason),
        })).collect::<Vec<_>>(),
    })
}

fn bracket_text(result: &BracketResult) -> String {
    let mut text = result.combination.to_string();
    for d in &result.dropped {
        let _ = write!(
            text,
            "\n# dropped p={} coeff={} target {}[q={}{}] mode {} ({:?})",
            d.p,
            d.coeff,
            d.family.token(),
            d.q,
            d.s.as_ref().map(|s| format!(",s={s}")).unwrap_or_default(),
            d.m,
            d.reason
        );
    }
    text
}

/// Run the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let emitter = Emitter { format: cli.format, out: cli.out.clone() };
    match execute(cli, &emitter) {
        Ok(code) => code,
        Err(DomainError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(DomainError::Failed(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

enum DomainError {
    /// Malformed input values (exit 2).
    Usage(String),
    /// Well-formed request that cannot be satisfied (exit 1).
    Failed(String),
}

impl From<String> for DomainError {
    fn from(msg: String) -> Self {
        DomainError::Failed(msg)
    }
}

fn execute(cli: Cli, emitter: &Emitter) -> Result<i32, DomainError> {
    let reg = load_registry(cli.registry.clone()).map_err(DomainError::Failed)?;
    match cli.command {
        Command::NCoeff { weights, m, n, p, rep } => {
            let rep = match rep {
                RepArg::Def => NRep::Def,
                RepArg::Lemma => NRep::Lemma,
            };
            let value = n_coeff(&weights.q1, &weights.q2, &m, &n, p, rep);
            emitter.emit(
                value.to_string(),
                json!({ "value": value }),
                Some(latex::rational(&value)),
            )?;
            Ok(0)
        }
        Command::Bracket { a, b, truncate_p } => {
            let a = parse_generator(&a).map_err(|e| DomainError::Usage(format!("operand 1 {e}")))?;
            let b = parse_generator(&b).map_err(|e| DomainError::Usage(format!("operand 2 {e}")))?;
            let result = match (a.label.family, b.label.family) {
                (Family::WTilde, Family::WTilde) => {
                    wtilde_bracket_truncated(&a, &b, &reg, truncate_p)
                        .map_err(|e| DomainError::Failed(e.to_string()))?
                }
                (Family::H, Family::H) => {
                    soft_bracket(&a, &b, &reg).map_err(|e| DomainError::Failed(e.to_string()))?
                }
                _ => {
                    return Err(DomainError::Usage(format!(
                        "bracket operands must both be Wt or both H, got {} and {}",
                        a, b
                    )))
                }
            };
            emitter.emit(
                bracket_text(&result),
                bracket_json(&result),
                Some(latex::combination(&result.combination)),
            )?;
            Ok(0)
        }
        Command::Ope { kind, q1, q2, k1, k2, s1, s2, alpha_max } => {
            let e = build_expansion(kind, q1, q2, k1, k2, &s1, &s2, alpha_max, &reg)?;
            emitter.emit(
                e.to_string(),
                serde_json::to_value(&e).map_err(|err| err.to_string())?,
                Some(latex::expansion(&e)),
            )?;
            Ok(0)
        }
        Command::ModeExtract { kind, q1, q2, k1, k2, s1, s2, m, n, alpha_max } => {
            let e = build_expansion(kind, q1.clone(), q2.clone(), k1.clone(), k2.clone(), &s1, &s2, alpha_max, &reg)?;
            let (h1, h2) = match kind {
                OpeKind::Wtilde | OpeKind::G => (
                    q1.ok_or(DomainError::Usage("--q1 required".into()))?,
                    q2.ok_or(DomainError::Usage("--q2 required".into()))?,
                ),
                OpeKind::Soft => {
                    let k1 = k1.ok_or(DomainError::Usage("--k1 required".into()))?;
                    let k2 = k2.ok_or(DomainError::Usage("--k2 required".into()))?;
                    (
                        GeneratorLabel::soft(k1, s1.clone()).map_err(|e| e.to_string())?.hbar(),
                        GeneratorLabel::soft(k2, s2.clone()).map_err(|e| e.to_string())?.hbar(),
                    )
                }
            };
            let extraction = mode_extract(&e, &m, &n, &h1, &h2);
            let dropped: Vec<String> = extraction
                .dropped
                .iter()
                .map(|d| format!("{} at mode {}: {}", d.target, d.mode, d.detail))
                .collect();
            let combo = extraction.into_combination();
            let mut text = combo.to_string();
            for d in &dropped {
                let _ = write!(text, "\n# dropped {d}");
            }
            emitter.emit(
                text,
                json!({ "terms": combo, "dropped": dropped }),
                Some(latex::combination(&combo)),
            )?;
            Ok(0)
        }
        Command::Jacobi { a, b, c, truncate_p } => {
            let a = parse_generator(&a).map_err(|e| DomainError::Usage(format!("operand 1 {e}")))?;
            let b = parse_generator(&b).map_err(|e| DomainError::Usage(format!("operand 2 {e}")))?;
            let c = parse_generator(&c).map_err(|e| DomainError::Usage(format!("operand 3 {e}")))?;
            let result = jacobi_residual(&a, &b, &c, &reg, truncate_p)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            emitter.emit(
                bracket_text(&result),
                bracket_json(&result),
                Some(latex::combination(&result.combination)),
            )?;
            Ok(0)
        }
        Command::KappaCheck => {
            let violations =
                kappa_conditions(&reg).map_err(|e| DomainError::Failed(e.to_string()))?;
            if violations.is_empty() {
                emitter.emit(
                    "all four coupling constraints hold".to_string(),
                    json!({ "violations": [] }),
                    None,
                )?;
                Ok(0)
            } else {
                for v in &violations {
                    eprintln!("{v}");
                }
                emitter.emit(
                    format!("{} constraint(s) violated", violations.len()),
                    json!({ "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>() }),
                    None,
                )?;
                Ok(1)
            }
        }
        Command::Wick { weights, kappa, order } => {
            let a = make_w_current(&weights.q1, &kappa)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            let b = make_w_current(&weights.q2, &kappa)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            let sum = &(&weights.q1 + &weights.q2).to_rational();
            let top = sum.to_i64().unwrap_or(4);
            let mut candidates = Vec::new();
            for q3 in 2..=top {
                candidates
                    .push(make_w_current(&HalfInt::int(q3), &kappa).map_err(|e| e.to_string())?);
            }
            let out = wick_ope(&a, &b, order, &candidates);
            let mut text = format!("recognized: {}", out.recognized);
            for r in &out.residual {
                let _ = write!(
                    text,
                    "\nresidual pole {}: ({}) {}",
                    r.antihol_pole, r.coeff, r.pattern
                );
            }
            emitter.emit(
                text,
                json!({
                    "recognized": out.recognized,
                    "residual": out.residual.iter().map(|r| json!({
                        "antihol_pole": r.antihol_pole,
                        "pattern": r.pattern.to_string(),
                        "coeff": r.coeff.to_string(),
                    })).collect::<Vec<_>>(),
                }),
                Some(latex::expansion(&out.recognized)),
            )?;
            Ok(0)
        }
        Command::SolveAlpha { order, q1, q2, s1, s2 } => {
            let sol = solve_alpha(order, &q1, &s1, &q2, &s2, &reg)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            let mut text = String::new();
            for ((a, b), v) in &sol.table {
                let _ = writeln!(text, "alpha[{a},{b}] = {v}");
            }
            for slot in &sol.free {
                let _ = writeln!(text, "alpha[{},{}] free", slot.0, slot.1);
            }
            for m in &sol.mismatches {
                let _ = writeln!(text, "# mismatch: {m}");
            }
            emitter.emit(
                text.trim_end().to_string(),
                json!({
                    "table": sol.table.iter().map(|((a, b), v)| json!({
                        "alpha": [a, b], "value": v.to_string()
                    })).collect::<Vec<_>>(),
                    "free": sol.free,
                    "mismatches": sol.mismatches.iter().map(|m| json!({
                        "slot": m.slot,
                        "lhs": m.lhs,
                        "rhs": m.rhs,
                        "unknowns": m.unknowns,
                    })).collect::<Vec<_>>(),
                }),
                None,
            )?;
            Ok(0)
        }
        Command::MatchB => {
            let m = match_b_constants(&gg_target_slots());
            let mut text = String::new();
            for ((p, x), v) in &m.b {
                let _ = writeln!(text, "B[{p},{x}] = {v}");
            }
            for ((p, x), v) in &m.btilde {
                let _ = writeln!(text, "Bt[{p},{x}] = {v}");
            }
            if let Some(bad) = &m.inconsistency {
                let _ = writeln!(text, "# inconsistent: {bad}");
            }
            emitter.emit(
                text.trim_end().to_string(),
                json!({
                    "B": m.b.iter().map(|((p, x), v)| json!({"p": p, "x": x, "value": v.to_string()})).collect::<Vec<_>>(),
                    "Bt": m.btilde.iter().map(|((p, x), v)| json!({"p": p, "x": x, "value": v.to_string()})).collect::<Vec<_>>(),
                    "free": m.free,
                    "inconsistency": m.inconsistency,
                }),
                None,
            )?;
            Ok(if m.inconsistency.is_some() { 1 } else { 0 })
        }
        Command::Twist { action } => run_twist(action, &reg, emitter),
        Command::Table { what, q_max, p_max, s1, s2 } => {
            run_table(what, &q_max, p_max, &s1, &s2, emitter)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_expansion(
    kind: OpeKind,
    q1: Option<HalfInt>,
    q2: Option<HalfInt>,
    k1: Option<HalfInt>,
    k2: Option<HalfInt>,
    s1: &HalfInt,
    s2: &HalfInt,
    alpha_max: u32,
    reg: &CouplingRegistry,
) -> Result<OpeExpansion<Rational>, DomainError> {
    match kind {
        OpeKind::Wtilde => {
            let q1 = q1.ok_or(DomainError::Usage("--q1 required for wtilde".into()))?;
            let q2 = q2.ok_or(DomainError::Usage("--q2 required for wtilde".into()))?;
            let t = build_wtilde_ope(&q1, s1, &q2, s2, reg)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            Ok(canonicalize(&t))
        }
        OpeKind::Soft => {
            let k1 = k1.ok_or(DomainError::Usage("--k1 required for soft".into()))?;
            let k2 = k2.ok_or(DomainError::Usage("--k2 required for soft".into()))?;
            build_soft_ope(&k1, s1, &k2, s2, reg, alpha_max)
                .map_err(|e| DomainError::Failed(e.to_string()))
        }
        OpeKind::G => {
            let q1 = q1.ok_or(DomainError::Usage("--q1 required for g".into()))?;
            let q2 = q2.ok_or(DomainError::Usage("--q2 required for g".into()))?;
            let (b, bt) = derived_b_tables();
            let t = crate::ope::build_g_ope(&q1, &q2, &b, &bt, reg)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            let e = canonicalize(&t);
            // Keep the fully determined part; grades beyond the derived
            // tables stay symbolic and are announced rather than lost.
            let mut known = Vec::new();
            let mut symbolic = 0usize;
            for term in e.terms() {
                match term.coeff.as_constant() {
                    Some(c) => known.push(crate::ope::OpeTerm {
                        coeff: c.clone(),
                        hol_pole: term.hol_pole,
                        antihol_pole: term.antihol_pole,
                        dbar: term.dbar,
                        target: term.target.clone(),
                    }),
                    None => symbolic += 1,
                }
            }
            if symbolic > 0 {
                eprintln!(
                    "note: {symbolic} term(s) with undetermined structure constants \
                     (grades p >= 2) omitted; use `twist gg` for the symbolic form"
                );
            }
            Ok(OpeExpansion::from_terms(known))
        }
    }
}

fn run_twist(action: TwistAction, reg: &CouplingRegistry, emitter: &Emitter) -> Result<i32, DomainError> {
    match action {
        TwistAction::Brst => {
            let q = brst();
            let candidates: Vec<HalfInt> = (-3..=2).map(|d| HalfInt::halves(2 * d + 1)).collect();
            let selection = brst_contour_selection(&candidates);
            let mut text = q.to_string();
            for (r, selected) in &selection {
                let _ = write!(text, "\n# contour picks r={r}: {selected}");
            }
            emitter.emit(
                text,
                json!({
                    "q": "3/2",
                    "r": "-1/2",
                    "selection": selection.iter().map(|(r, s)| json!({"r": r, "selected": s})).collect::<Vec<_>>(),
                }),
                Some("Q = G^{\\frac{3}{2}\\,+}_{-\\frac{1}{2}}".to_string()),
            )?;
            Ok(0)
        }
        TwistAction::Vhat { q } => {
            let v = vhat_known(&q, reg).map_err(|e| DomainError::Failed(e.to_string()))?;
            emitter.emit(
                v.to_string(),
                serde_json::to_value(&v).map_err(|e| e.to_string())?,
                Some(latex::expansion(&v)),
            )?;
            Ok(0)
        }
        TwistAction::Gg { q1, r1, q2, r2 } => {
            let a = FermionicMode::minus(q1, r1).map_err(|e| DomainError::Failed(e.to_string()))?;
            let b = FermionicMode::plus(q2, r2).map_err(|e| DomainError::Failed(e.to_string()))?;
            let (bt_plain, bt_tilde) = derived_b_tables();
            let gg = gg_anticommutator(&a, &b, reg, &bt_plain, &bt_tilde)
                .map_err(|e| DomainError::Failed(e.to_string()))?;
            let mut text = gg.known.to_string();
            for (coeff, mode) in &gg.symbolic {
                let _ = write!(text, " + ({coeff})*{mode}");
            }
            emitter.emit(
                text,
                json!({
                    "known": gg.known,
                    "symbolic": gg.symbolic.iter().map(|(c, m)| json!({
                        "coeff": c.to_string(), "mode": m,
                    })).collect::<Vec<_>>(),
                }),
                Some(latex::combination(&gg.known)),
            )?;
            Ok(0)
        }
        TwistAction::Bracket { q1, m, q2, n, p } => {
            let ghat = GhatTable::new();
            let b = vhat_bracket(&q1, &m, &q2, &n, &ghat, p);
            let mut text = b.known.to_string();
            for (name, mode) in &b.symbolic {
                let _ = write!(text, " + {name}*{mode}");
            }
            for d in &b.dropped {
                let _ = write!(text, "\n# dropped {d}");
            }
            emitter.emit(
                text,
                json!({
                    "known": b.known,
                    "symbolic": b.symbolic.iter().map(|(name, mode)| json!({
                        "coeff": name, "mode": mode,
                    })).collect::<Vec<_>>(),
                    "dropped": b.dropped,
                }),
                Some(latex::combination(&b.known)),
            )?;
            Ok(0)
        }
        TwistAction::Rescale { q1, m, q2, n, p_keep } => {
            let reduced = rescale_limit(p_keep);
            let vv = reduced.vv(&q1, &m, &q2, &n);
            let vg = reduced.vg(&q1, &m, &q2, &n);
            let text = format!(
                "[v[q={q1},m={m}], v[q={q2},m={n}]] = ({})*v[q={},m={}]\n[v[q={q1},m={m}], Ghat[q={q2},r={}]] = ({})*Ghat[q={},r={}]",
                vv.coeff,
                vv.q,
                vv.m,
                &n + &HalfInt::halves(1),
                vg.coeff,
                vg.q,
                vg.m,
            );
            emitter.emit(
                text,
                json!({
                    "vv": { "coeff": vv.coeff, "q": vv.q, "m": vv.m },
                    "vg": { "coeff": vg.coeff, "q": vg.q, "m": vg.m },
                }),
                None,
            )?;
            Ok(0)
        }
    }
}

fn run_table(
    what: TableKind,
    q_max: &HalfInt,
    p_max: u32,
    s1: &HalfInt,
    s2: &HalfInt,
    emitter: &Emitter,
) -> Result<i32, DomainError> {
    let mut rows = Vec::new();
    let mut text = String::new();
    let q_top = q_max.doubled().clone();
    let q_top = i64::try_from(q_top).map_err(|_| DomainError::Usage("q-max too large".into()))?;
    match what {
        TableKind::NCoeff => {
            let mut qd1 = 2i64; // q = 1 upward in half-integer steps
            while qd1 <= q_top {
                let mut qd2 = 2i64;
                while qd2 <= q_top {
                    let (q1, q2) = (HalfInt::halves(qd1), HalfInt::halves(qd2));
                    for md in wedge_doubled(qd1) {
                        for nd in wedge_doubled(qd2) {
                            let (m, n) = (HalfInt::halves(md), HalfInt::halves(nd));
                            for p in 0..=p_max {
                                let v = n_coeff(&q1, &q2, &m, &n, p, NRep::Lemma);
                                if v.is_zero() {
                                    continue;
                                }
                                let _ = writeln!(text, "{q1}\t{q2}\t{m}\t{n}\t{p}\t{v}");
                                rows.push(json!({
                                    "q1": q1, "q2": q2, "m": m, "n": n, "p": p, "value": v,
                                }));
                            }
                        }
                    }
                    qd2 += 1;
                }
                qd1 += 1;
            }
        }
        TableKind::Vanishing => {
            let mut qd1 = 2i64;
            while qd1 <= q_top {
                let mut qd2 = 2i64;
                while qd2 <= q_top {
                    let (q1, q2) = (HalfInt::halves(qd1), HalfInt::halves(qd2));
                    let report = vanishing_p_report(&q1, &q2, s1, s2)
                        .map_err(|e| DomainError::Failed(e.to_string()))?;
                    for (p, vanishes) in report {
                        let _ = writeln!(text, "{q1}\t{q2}\t{p}\t{vanishes}");
                        rows.push(json!({ "q1": q1, "q2": q2, "p": p, "vanishes": vanishes }));
                    }
                    qd2 += 1;
                }
                qd1 += 1;
            }
        }
    }
    emitter.emit(text.trim_end().to_string(), serde_json::Value::Array(rows), None)?;
    Ok(0)
}

/// Doubled wedge mode values for doubled weight `qd`: `|m| <= q - 1` with
/// integer offset from `q - 1`.
fn wedge_doubled(qd: i64) -> Vec<i64> {
    let top = qd - 2; // doubled value of q - 1
    if top < 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut m = -top;
    while m <= top {
        out.push(m);
        m += 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_roundtrips_canonical_forms() {
        for text in [
            "Wt[q=2,s=2,m=1]",
            "Wt[q=3/2,s=1,m=-1/2]",
            "G-[q=3/2,r=1/2]",
            "G+[q=5/2,r=-3/2]",
            "Vhat[q=2,m=0]",
            "H[k=0,s=2,m=-1]",
            "Wt2[q=4,m=2]",
        ] {
            let mode = parse_generator(text).unwrap_or_else(|e| panic!("{text}: {e}"));
            assert_eq!(mode.to_string(), text);
        }
    }

    #[test]
    fn parse_reports_positions() {
        let err = parse_generator("Wx[q=2,m=0]").unwrap_err();
        assert_eq!(err.position, 0);
        let err = parse_generator("Wt[q=2,s=2,m=oops]").unwrap_err();
        assert_eq!(err.position, 13);
        assert!(err.message.contains("oops"));
        let err = parse_generator("Wt[q=2,s=2,m=1/3]").unwrap_err();
        assert!(err.message.contains("half-integer"));
        let err = parse_generator("Wt[q=2,s=2,m=1").unwrap_err();
        assert!(err.message.contains("']'"));
        let err = parse_generator("G-[q=3/2,m=1/2]").unwrap_err();
        assert!(err.message.contains("unknown field"));
    }

    #[test]
    fn parse_rejects_wedge_violations() {
        assert!(parse_generator("Wt[q=2,s=2,m=2]").is_err());
        assert!(parse_generator("Wt[q=1,s=2,m=0]").is_ok());
    }

    proptest! {
        #[test]
        fn parse_print_identity_on_wedge_modes(qd in 2i64..10, s in 1i64..4, moff in 0i64..20) {
            let top = qd - 2;
            let md = -top + 2 * (moff % (top + 1));
            let text = format!(
                "Wt[q={},s={},m={}]",
                HalfInt::halves(qd),
                HalfInt::int(s),
                HalfInt::halves(md)
            );
            let mode = parse_generator(&text).unwrap();
            prop_assert_eq!(mode.to_string(), text);
        }
    }
}
