//! String-level command front end used by the `exosum` binary. Subcommands
//! map one-to-one onto library calls; all output is deterministic (complex
//! numbers are rounded to 12 significant digits before serialization).

use crate::chars::{parse_char_spec, MultChar};
use crate::error::{Error, Result};
use crate::etale::EtaleAlgebra;
use crate::expsums::{CompositeChar, SumCtx};
use crate::fields::{FieldTower, DEFAULT_TABLE_CAP};
use crate::glq::ConjClassLabel;
use crate::mks::MksCtx;
use crate::partitions::Partition;
use crate::repth::GreenParameter;
use crate::verify::{factor_prime_power, round_sig, run_all, run_check, CheckParams, Env, CHECK_IDS};
use crate::Complex;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "exosum", version, about = "Exponential sums over finite fields", disable_help_subcommand = true)]
pub struct Cli {
    /// Group-size / enumeration budget
    #[arg(long, global = true, default_value_t = 100_000_000)]
    pub budget: u64,
    /// Chunk size for parallel reductions
    #[arg(long, global = true, default_value_t = 65536)]
    pub chunk: u64,
    /// Output format
    #[arg(long, global = true, default_value = "json")]
    pub format: String,
    /// Tolerance multiplier for verify
    #[arg(long, global = true, default_value_t = 1.0)]
    pub tol_scale: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Field tower inspection
    Field {
        #[command(subcommand)]
        sub: FieldCmd,
    },
    /// Exotic Gauss sum for a pair of characters
    Gauss(GaussArgs),
    /// Exotic Kloosterman sum over a base field
    Kl(KlArgs),
    /// Normalized L-polynomial of a Kloosterman family and its roots
    Lpoly(LpolyArgs),
    /// Exotic matrix Kloosterman sum at one conjugacy class
    Mks(MksArgs),
    /// Character table of GL_n(F_q)
    CharTable(CharTableArgs),
    /// Speh character values, Appendix-table style
    SpehTable(SpehTableArgs),
    /// Bessel-Speh special values on every class of GL_c(F_q)
    Bessel(BesselArgs),
    /// Ginzburg-Kaplan gamma factor against the epsilon factor
    Gamma(GammaArgs),
    /// Run named identity checks
    Verify(VerifyArgs),
}

#[derive(Subcommand, Debug)]
pub enum FieldCmd {
    /// Print moduli, generators, and embedding data
    Info {
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        f: usize,
        #[arg(long)]
        max_deg: usize,
    },
}

#[derive(Args, Debug)]
pub struct GaussArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub m: usize,
    /// character spec `level:index`
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub chi: String,
    /// `product` (Gauss-sum product formula) or `direct` (unit enumeration)
    #[arg(long, default_value = "product")]
    pub path: String,
}

#[derive(Args, Debug)]
pub struct KlArgs {
    #[arg(long)]
    pub q: u64,
    /// partition spec `k1+k2+...`
    #[arg(long)]
    pub lambda: String,
    /// comma-separated character specs matching the partition parts
    #[arg(long)]
    pub alpha: String,
    #[arg(long, default_value_t = 1)]
    pub base: usize,
    #[arg(long)]
    pub m: usize,
    /// discrete log of xi at level base*m
    #[arg(long)]
    pub xi: u64,
}

#[derive(Args, Debug)]
pub struct LpolyArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub alpha: String,
    #[arg(long, default_value_t = 1)]
    pub base: usize,
    /// discrete log of xi at the base level
    #[arg(long)]
    pub xi: u64,
}

#[derive(Args, Debug)]
pub struct MksArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub alpha: String,
    /// class spec `a:j:[m1,m2,...];...`
    #[arg(long)]
    pub class: String,
    /// `brute`, `conv`, or `hl`
    #[arg(long, default_value = "conv")]
    pub path: String,
}

#[derive(Args, Debug)]
pub struct CharTableArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub n: usize,
}

#[derive(Args, Debug)]
pub struct SpehTableArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub c: usize,
    /// cuspidal datum; default: smallest regular character orbit at level k
    #[arg(long)]
    pub alpha: Option<String>,
}

#[derive(Args, Debug)]
pub struct BesselArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub c: usize,
}

#[derive(Args, Debug)]
pub struct GammaArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub alpha: String,
    /// Green parameter of pi: `a:j:[mu];...` over regular character orbits
    #[arg(long)]
    pub pi: String,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// check id; omit with --all to run everything
    pub id: Option<String>,
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub q: Option<u64>,
}

fn cx(v: Complex) -> Value {
    json!({"re": round_sig(v.re), "im": round_sig(v.im)})
}

fn build_tower(q: u64, levels: impl IntoIterator<Item = usize>) -> Result<FieldTower> {
    let (p, f) = factor_prime_power(q)?;
    let mut wanted: Vec<usize> = levels.into_iter().filter(|&l| l >= 1).collect();
    wanted.push(1);
    wanted.sort_unstable();
    wanted.dedup();
    FieldTower::build_levels_with_cap(p, f, &wanted, DEFAULT_TABLE_CAP)
}

fn parse_composite(tower: &FieldTower, lambda: &str, alpha: &str) -> Result<CompositeChar> {
    let lam = EtaleAlgebra::parse(lambda)?;
    let specs: Vec<&str> = alpha.split(',').collect();
    if specs.len() != lam.parts.len() {
        return Err(Error::Parse(format!(
            "need {} character specs for λ = {lambda}, got {}",
            lam.parts.len(),
            specs.len()
        )));
    }
    let mut chars: Vec<MultChar> = specs
        .iter()
        .map(|s| parse_char_spec(tower, s))
        .collect::<Result<_>>()?;
    // align with the sorted partition
    chars.sort_by(|a, b| b.level.cmp(&a.level).then(a.index.cmp(&b.index)));
    for (part, ch) in lam.parts.iter().zip(&chars) {
        if *part != ch.level {
            return Err(Error::Parse(format!(
                "character levels {:?} do not match partition {lambda}",
                specs
            )));
        }
    }
    Ok(CompositeChar::new(lam, chars))
}

/// Key/value CSV rendering of a flat JSON object (arrays one row per item).
fn to_csv(v: &Value) -> String {
    let mut out = String::new();
    fn emit(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, vv) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    emit(&key, vv, out);
                }
            }
            Value::Array(items) => {
                for (i, vv) in items.iter().enumerate() {
                    emit(&format!("{prefix}[{i}]"), vv, out);
                }
            }
            other => {
                out.push_str(prefix);
                out.push(',');
                out.push_str(&other.to_string());
                out.push('\n');
            }
        }
    }
    emit("", v, &mut out);
    out
}

fn render(v: &Value, format: &str) -> String {
    if format == "csv" {
        to_csv(v)
    } else {
        serde_json::to_string_pretty(v).unwrap()
    }
}

/// Run the CLI on the given argument list. Returns the output text and the
/// process exit code (0 ok, 1 failed checks or internal error, 2 usage,
/// 3 budget exceeded).
pub fn run<I, S>(args: I) -> (String, i32)
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return (e.to_string(), code);
        }
    };
    match dispatch(&cli) {
        Ok((text, code)) => (text, code),
        Err(Error::BudgetExceeded { needed, budget }) => (
            format!("budget exceeded: need {needed} elements (budget {budget})"),
            3,
        ),
        Err(Error::CapExceeded { level, needed, cap }) => (
            format!("table cap exceeded at level {level}: {needed} elements (cap {cap})"),
            3,
        ),
        Err(e) => (format!("error: {e}"), 1),
    }
}

fn dispatch(cli: &Cli) -> Result<(String, i32)> {
    let fmt = cli.format.as_str();
    match &cli.command {
        Command::Field { sub } => {
            let FieldCmd::Info { p, f, max_deg } = sub;
            let tower = FieldTower::build(*p, *f, *max_deg)?;
            Ok((render(&tower.info_json(), fmt), 0))
        }
        Command::Gauss(a) => {
            let l = num_integer::lcm(a.k, a.m);
            let tower = build_tower(a.q, [a.k, a.m, l])?;
            let alpha = parse_char_spec(&tower, &a.alpha)?;
            let chi = parse_char_spec(&tower, &a.chi)?;
            if alpha.level != a.k || chi.level != a.m {
                return Err(Error::Invalid(
                    "character levels must match --k and --m".into(),
                ));
            }
            let ctx = SumCtx::with_budget(&tower, cli.budget);
            let value = match a.path.as_str() {
                "direct" => ctx.exotic_gauss(alpha, a.m, chi)?,
                "product" => ctx.exotic_gauss_product(alpha, a.m, chi)?,
                other => return Err(Error::Invalid(format!("unknown path `{other}`"))),
            };
            let out = json!({
                "params": {"q": a.q, "k": a.k, "m": a.m, "alpha": a.alpha, "chi": a.chi, "path": a.path},
                "value_re": round_sig(value.re),
                "value_im": round_sig(value.im),
            });
            Ok((render(&out, fmt), 0))
        }
        Command::Kl(a) => {
            let lam = EtaleAlgebra::parse(&a.lambda)?;
            let n = a.base * a.m;
            let mut levels: Vec<usize> = lam
                .parts
                .iter()
                .map(|&k| num_integer::lcm(k, n))
                .collect();
            levels.extend(lam.parts.iter().copied());
            levels.push(n);
            let tower = build_tower(a.q, levels)?;
            let alpha = parse_composite(&tower, &a.lambda, &a.alpha)?;
            let xi = tower.from_dlog(n, a.xi);
            let ctx = SumCtx::with_budget(&tower, cli.budget);
            let value = ctx.kloosterman(&alpha, a.base, a.m, xi)?;
            let norm = ctx.kloosterman_normalized(&alpha, a.base, a.m, xi)?;
            let out = json!({
                "params": {"q": a.q, "lambda": a.lambda, "alpha": a.alpha, "base": a.base, "m": a.m, "xi": a.xi},
                "value_re": round_sig(value.re),
                "value_im": round_sig(value.im),
                "normalized": cx(norm),
            });
            Ok((render(&out, fmt), 0))
        }
        Command::Lpoly(a) => {
            let lam = EtaleAlgebra::parse(&a.lambda)?;
            let k = lam.total();
            let mut levels = Vec::new();
            for m in 1..=k {
                levels.push(a.base * m);
                for &ki in &lam.parts {
                    levels.push(num_integer::lcm(ki, a.base * m));
                }
            }
            let tower = build_tower(a.q, levels)?;
            let alpha = parse_composite(&tower, &a.lambda, &a.alpha)?;
            let xi = tower.from_dlog(a.base, a.xi);
            let ctx = SumCtx::with_budget(&tower, cli.budget);
            let lp = ctx.lpolynomial(&alpha, a.base, xi)?;
            let out = json!({
                "params": {"q": a.q, "lambda": a.lambda, "alpha": a.alpha, "base": a.base, "xi": a.xi},
                "coeffs": lp.coeffs.iter().map(|c| cx(*c)).collect::<Vec<_>>(),
                "roots": lp.roots.iter().map(|c| cx(*c)).collect::<Vec<_>>(),
            });
            Ok((render(&out, fmt), 0))
        }
        Command::Mks(a) => {
            let lam = EtaleAlgebra::parse(&a.lambda)?;
            let k = lam.total();
            // levels for classes, brute enumeration, and the HL roots
            let probe = build_tower(a.q, 1..=1)?;
            let _ = probe;
            let mut levels: Vec<usize> = Vec::new();
            let class_probe_tower = build_tower(a.q, 1..=6)?;
            let label = ConjClassLabel::parse(&class_probe_tower, &a.class)?;
            let c = label.total();
            levels.extend(1..=c);
            levels.extend(lam.parts.iter().copied());
            for (deg, _, _) in &label.0 {
                for m in 1..=k {
                    levels.push(deg * m);
                    for &ki in &lam.parts {
                        levels.push(num_integer::lcm(ki, deg * m));
                    }
                }
            }
            for &ki in &lam.parts {
                levels.push(ki); // brute enumeration happens over F_{q^{k_i}}
            }
            let tower = build_tower(a.q, levels)?;
            let alpha = parse_composite(&tower, &a.lambda, &a.alpha)?;
            let label = ConjClassLabel::parse(&tower, &a.class)?;
            let ctx = MksCtx::new(&tower);
            let cd = ctx.repr.classes(c);
            let value = match a.path.as_str() {
                "brute" => {
                    if alpha.alphas.len() != 1 {
                        return Err(Error::Invalid(
                            "path `brute` needs a single-part λ; use `conv`".into(),
                        ));
                    }
                    let f = ctx.mks_bruteforce(alpha.alphas[0], c, cli.budget)?;
                    f.values[cd.index[&label]]
                }
                "conv" => {
                    let f = ctx.mks_convolve(&alpha, c, cli.budget)?;
                    f.values[cd.index[&label]]
                }
                "hl" => ctx.mks_hl(&alpha, &label)?,
                other => return Err(Error::Invalid(format!("unknown path `{other}`"))),
            };
            let norm = ctx.normalize(&alpha, c, value);
            let out = json!({
                "params": {"q": a.q, "lambda": a.lambda, "alpha": a.alpha, "class": format!("{label}"), "path": a.path},
                "value_re": round_sig(value.re),
                "value_im": round_sig(value.im),
                "normalized": cx(norm),
            });
            Ok((render(&out, fmt), 0))
        }
        Command::CharTable(a) => {
            let tower = build_tower(a.q, 1..=a.n)?;
            let ctx = MksCtx::new(&tower);
            let cd = ctx.repr.classes(a.n);
            let table = ctx.repr.char_table(a.n);
            let out = json!({
                "params": {"q": a.q, "n": a.n},
                "labels": cd.labels.iter().map(|l| format!("{l}")).collect::<Vec<_>>(),
                "sizes": cd.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "parameters": table.params.iter().map(|p| {
                    p.0.iter()
                        .map(|(a, u, mu)| format!("{a}:{u}:{mu}"))
                        .collect::<Vec<_>>()
                        .join(";")
                }).collect::<Vec<_>>(),
                "dims": table.dims,
                "matrix": table.chars.iter().map(|ch| {
                    ch.values.iter().map(|v| cx(*v)).collect::<Vec<_>>()
                }).collect::<Vec<_>>(),
            });
            Ok((render(&out, fmt), 0))
        }
        Command::SpehTable(a) => {
            let tower = build_tower(a.q, 1..=(a.k * a.c).max(a.k))?;
            let ctx = MksCtx::new(&tower);
            let theta = match &a.alpha {
                Some(s) => parse_char_spec(&tower, s)?,
                None => {
                    let orbit = ctx
                        .repr
                        .regular_char_orbits(a.k)
                        .first()
                        .copied()
                        .ok_or_else(|| {
                            Error::Invalid(format!("no regular characters at level {}", a.k))
                        })?;
                    MultChar::new(&tower, a.k, orbit)
                }
            };
            let speh = ctx.repr.speh_character_cuspidal(theta, a.c)?;
            let cd = ctx.repr.classes(a.k * a.c);
            let rows: Vec<Value> = cd
                .labels
                .iter()
                .zip(&speh.values)
                .map(|(l, v)| json!({"class": format!("{l}"), "value": cx(*v)}))
                .collect();
            let out = json!({
                "params": {"q": a.q, "k": a.k, "c": a.c, "theta": format!("{}:{}", theta.level, theta.index)},
                "rows": rows,
            });
            Ok((render(&out, fmt), 0))
        }
        Command::Bessel(a) => {
            let lam = EtaleAlgebra::parse(&a.lambda)?;
            let k = lam.total();
            let tower = build_tower(a.q, 1..=(k * a.c).max(k))?;
            let alpha = parse_composite(&tower, &a.lambda, &a.alpha)?;
            let ctx = MksCtx::new(&tower);
            let b = ctx.repr.bessel_speh_values(&alpha, a.c)?;
            let bn = ctx.repr.bessel_speh_values_normalized(&alpha, a.c)?;
            let cd = ctx.repr.classes(a.c);
            let rows: Vec<Value> = cd
                .labels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    json!({
                        "class": format!("{l}"),
                        "value": cx(b.values[i]),
                        "normalized": cx(bn.values[i]),
                    })
                })
                .collect();
            let out = json!({
                "params": {"q": a.q, "lambda": a.lambda, "alpha": a.alpha, "c": a.c},
                "rows": rows,
            });
            Ok((render(&out, fmt), 0))
        }
        Command::Gamma(a) => {
            let lam = EtaleAlgebra::parse(&a.lambda)?;
            let k = lam.total();
            let probe = build_tower(a.q, 1..=6)?;
            let phi_raw = ConjClassLabel::parse(&probe, &a.pi);
            // the pi spec reuses the class grammar over character orbits
            let phi_blocks = match phi_raw {
                Ok(l) => l.0,
                Err(e) => return Err(e),
            };
            let c: usize = phi_blocks.iter().map(|(d, _, mu)| d * mu.size()).sum();
            let mut levels: Vec<usize> = (1..=(k * c).max(k)).collect();
            for (d, _, _) in &phi_blocks {
                for &kj in &lam.parts {
                    levels.push(num_integer::lcm(*d, kj));
                }
            }
            let tower = build_tower(a.q, levels)?;
            let alpha = parse_composite(&tower, &a.lambda, &a.alpha)?;
            let phi = GreenParameter::new(phi_blocks);
            for (d, u, _) in &phi.0 {
                let chi = MultChar::new(&tower, *d, *u);
                if !chi.is_regular(&tower) {
                    return Err(Error::NotRegular {
                        level: *d,
                        index: *u,
                    });
                }
            }
            let ctx = MksCtx::new(&tower);
            let gamma = ctx.repr.gamma_gk(&phi, &alpha)?;
            let eps = ctx.repr.epsilon0(&phi, &alpha)?;
            let out = json!({
                "params": {"q": a.q, "lambda": a.lambda, "alpha": a.alpha, "pi": a.pi},
                "gamma": cx(gamma),
                "epsilon0": cx(eps),
                "abs_err": round_sig((gamma - eps).norm()),
            });
            Ok((render(&out, fmt), 0))
        }
        Command::Verify(a) => {
            let params = CheckParams {
                q: a.q,
                budget: cli.budget,
                tol_scale: cli.tol_scale,
            };
            let mut env = Env::new();
            let reports = if a.all || a.id.is_none() {
                run_all(&mut env, &params)
            } else {
                vec![run_check(&mut env, a.id.as_deref().unwrap(), &params)]
            };
            let mut lines = Vec::new();
            let mut ok = true;
            for rep in reports {
                match rep {
                    Ok(r) => {
                        ok &= r.pass;
                        lines.push(serde_json::to_string(&r).unwrap());
                    }
                    Err(Error::UnknownCheck(id)) => {
                        return Err(Error::UnknownCheck(id));
                    }
                    Err(e) => {
                        ok = false;
                        lines.push(
                            json!({"error": e.to_string(), "pass": false}).to_string(),
                        );
                    }
                }
            }
            Ok((lines.join("\n"), if ok { 0 } else { 1 }))
        }
    }
}

/// All registered check ids (for help text and docs).
pub fn known_checks() -> &'static [&'static str] {
    CHECK_IDS
}
