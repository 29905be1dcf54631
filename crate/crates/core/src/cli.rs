//! The `srkit` command line.
//!
//! [`execute`] runs one invocation and returns what it would print, so the
//! binary is a thin wrapper and tests can drive every subcommand in-process.
//! Exit status: 0 success, 1 domain error, 2 usage error.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::entropy::{
    data_entropy, derive_stream, BitSource, CounterSource, DataScheme, Lfsr, ReplaySource,
    Xoroshiro128Plus,
};
use crate::error::Error;
use crate::format::{FloatFormat, FpValue, PRESET_NAMES};
use crate::grid::{neighbors, q_fraction, ulp};
use crate::harness::{run_experiment, run_pi_demo, Addends, ExperimentKind, ExperimentSpec};
use crate::oracle::{distribution, expected_sum_enumeration, outcome_distribution};
use crate::parse::{parse_working_real, DEFAULT_DECIMAL_BITS};
use crate::real::{rational_to_string, WorkingReal};
use crate::rounding::{
    exact_op_then_round, round_value, two_stage_round, ArithOp, Intermediate, OverflowPolicy,
    P3109Kind, RandomDraw, Rounded, Rounding, RoundingMode, SrConfig,
};
use crate::vendor::{block_quantize, convert, convert_packed_pair, BlockFormatSpec, Entropy, Registry};

/// Captured result of one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Parser, Debug)]
#[command(name = "srkit", version, about = "Stochastic rounding emulation toolkit")]
struct Cli {
    /// Output style; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Print values as decimals with this many significant digits instead of hex floats.
    #[arg(long, global = true)]
    digits: Option<usize>,
    /// Bits kept when a decimal literal is not exactly representable.
    #[arg(long, global = true, default_value_t = DEFAULT_DECIMAL_BITS)]
    decimal_bits: u32,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Round values into a format.
    Round(RoundArgs),
    /// Compute `a op b` exactly and round once.
    Op(OpArgs),
    /// Convert through a vendor rule.
    Convert(ConvertArgs),
    /// Exact distribution of one stochastic rounding.
    Dist(DistArgs),
    /// Exact expected value of a small recursive sum under SR.
    SumExpect(SumExpectArgs),
    /// Inspect the vendor profile registry.
    Profiles(ProfilesArgs),
    /// Run a numerical experiment.
    Experiment(ExperimentArgs),
    /// Show format parameters, neighbors and encodings.
    Inspect(InspectArgs),
    /// Print bits from an entropy source.
    Entropy(EntropyArgs),
    /// Quantize into a block-scaled format (mxfp4, nvfp4).
    Block(BlockArgs),
}

#[derive(Args, Debug, Clone)]
struct RoundingArgs {
    /// Deterministic mode: rne, rz, ru, rd.
    #[arg(long)]
    mode: Option<String>,
    /// Stochastic variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Random bits for fixed-width variants.
    #[arg(long)]
    r: Option<u32>,
    /// Intermediate rounding of limited SR.
    #[arg(long, value_enum, default_value = "rz")]
    intermediate: IntermediateArg,
    /// Overflow policy for stochastic rounding.
    #[arg(long, value_enum, default_value = "saturate")]
    overflow: OverflowArg,
    /// Flush magnitudes below this threshold to signed zero (SR only).
    #[arg(long, allow_hyphen_values = true)]
    flush_below: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Exact,
    Limited,
    A,
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum IntermediateArg {
    Rz,
    Rne,
}

impl From<IntermediateArg> for Intermediate {
    fn from(i: IntermediateArg) -> Self {
        match i {
            IntermediateArg::Rz => Intermediate::Truncate,
            IntermediateArg::Rne => Intermediate::Rne,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OverflowArg {
    Saturate,
    Infinity,
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Global seed (decimal or 0x-hex).
    #[arg(long, env = "SRKIT_SEED", default_value = "0", value_parser = parse_u64)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct RoundArgs {
    #[arg(long)]
    fmt: String,
    #[command(flatten)]
    rounding: RoundingArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Explicit random draw for fixed-width variants (applies to every value).
    #[arg(long, value_parser = parse_u64)]
    draw: Option<u64>,
    /// Round to binary32 with RNE first, then stochastically.
    #[arg(long)]
    two_stage: bool,
    /// Values: hex floats, decimals, rationals, inf, nan.
    #[arg(required = true)]
    values: Vec<String>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct OpArgs {
    #[arg(long)]
    fmt: String,
    /// add, sub or mul.
    #[arg(long)]
    op: String,
    #[command(flatten)]
    rounding: RoundingArgs,
    #[command(flatten)]
    seed: SeedArg,
    a: String,
    b: String,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ConvertArgs {
    #[arg(long)]
    vendor: String,
    /// Source format name or `pN`.
    #[arg(long)]
    src: String,
    /// Destination format name.
    #[arg(long)]
    dst: String,
    /// Raw random operand (low `r` bits used; a 32-bit word for --pair).
    #[arg(long, value_parser = parse_u64)]
    word: Option<u64>,
    /// Convert two values with one packed random word.
    #[arg(long)]
    pair: bool,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(required = true)]
    values: Vec<String>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct DistArgs {
    #[arg(long)]
    fmt: String,
    #[command(flatten)]
    rounding: RoundingArgs,
    #[arg(long)]
    x: String,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SumExpectArgs {
    #[arg(long)]
    fmt: String,
    #[command(flatten)]
    rounding: RoundingArgs,
    #[arg(required = true)]
    addends: Vec<String>,
}

#[derive(Args, Debug)]
struct ProfilesArgs {
    /// Registry file replacing the built-in one.
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,
    #[command(subcommand)]
    action: ProfilesAction,
}

#[derive(Subcommand, Debug)]
enum ProfilesAction {
    /// One line per conversion rule.
    List,
    /// One vendor's profile as JSON.
    Show { vendor: String },
    /// The whole registry as JSON.
    Dump,
    /// The rule for a (source, destination) pair.
    Lookup { vendor: String, src: String, dst: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Stagnation,
    SumGrowth,
    Pairwise,
    Dot,
    Horner,
    RSweep,
    Gd,
    PiDemo,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: KindArg,
    #[arg(long, default_value = "binary16")]
    fmt: String,
    /// Comma-separated rounding labels (rne, sr-exact, sr-limited-rz-r6, sr-c-r3, ...).
    #[arg(long, default_value = "rne,sr-exact", value_delimiter = ',')]
    modes: Vec<String>,
    /// Comma-separated problem sizes.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    /// Powers of two `2^lo..=2^hi` as the size grid, written `lo..hi`.
    #[arg(long)]
    n_pow2: Option<String>,
    #[arg(long, default_value_t = 30)]
    trials: u32,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    threads: Option<usize>,
    /// CSV destination; the summary JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "1")]
    acc0: String,
    #[arg(long, default_value = "0x1p-13")]
    delta: String,
    /// Addends for sum-growth and pairwise: uniform, or a constant literal.
    #[arg(long, default_value = "uniform")]
    addends: String,
    #[arg(long, default_value = "0.99")]
    point: String,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,10,12,16,20,24")]
    r_grid: Vec<u32>,
    #[arg(long, value_enum, default_value = "rz")]
    intermediate: IntermediateArg,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value = "0x1p-4")]
    step: String,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct InspectArgs {
    /// Format to inspect; omit to list all presets.
    #[arg(long)]
    fmt: Option<String>,
    /// Decode a bit pattern instead of a value.
    #[arg(long, value_parser = parse_u64)]
    bits: Option<u64>,
    value: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Xoroshiro,
    Counter,
    Lfsr,
    Data,
    Replay,
}

#[derive(Args, Debug)]
struct EntropyArgs {
    #[arg(long, value_enum, default_value = "xoroshiro")]
    source: SourceArg,
    #[command(flatten)]
    seed: SeedArg,
    /// Stream id for the xoroshiro source (derive_stream(seed, id)).
    #[arg(long, value_parser = parse_u64)]
    stream: Option<u64>,
    /// Bits per draw.
    #[arg(long, default_value_t = 64)]
    bits: u32,
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Register width (lfsr) or datum width (data).
    #[arg(long, default_value_t = 32)]
    width: u32,
    /// LFSR taps, comma-separated; defaults per width.
    #[arg(long, value_delimiter = ',')]
    taps: Vec<u32>,
    /// Datum for the data source.
    #[arg(long, value_parser = parse_u64)]
    datum: Option<u64>,
    #[arg(long, value_enum, default_value = "lsb")]
    scheme: SchemeArg,
    /// Bit string for the replay source.
    #[arg(long)]
    replay: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Lsb,
    XorFold,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct BlockArgs {
    /// mxfp4 or nvfp4.
    #[arg(long = "block", default_value = "mxfp4")]
    block: String,
    #[command(flatten)]
    rounding: RoundingArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(required = true)]
    values: Vec<String>,
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let t = s.replace('_', "");
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("{s:?}: {e}"))
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::UnknownFormat(_) | Error::UnknownVendor(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Domain(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Run one invocation. `args` excludes the program name.
pub fn execute<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("srkit")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code: 2, stdout: String::new(), stderr: text }
            } else {
                Outcome { code: 0, stdout: text, stderr: String::new() }
            };
        }
    };
    let ctx = Ctx { format: cli.format, digits: cli.digits, decimal_bits: cli.decimal_bits };
    let mut out = String::new();
    match dispatch(&ctx, cli.command, &mut out) {
        Ok(()) => Outcome { code: 0, stdout: out, stderr: String::new() },
        Err(Failure::Usage(msg)) => Outcome { code: 2, stdout: out, stderr: format!("error: {msg}\n") },
        Err(Failure::Domain(e)) => Outcome { code: 1, stdout: out, stderr: format!("error: {e}\n") },
    }
}

struct Ctx {
    format: Option<OutputFormat>,
    digits: Option<usize>,
    decimal_bits: u32,
}

impl Ctx {
    fn format_or(&self, default: OutputFormat) -> OutputFormat {
        self.format.unwrap_or(default)
    }

    fn real(&self, text: &str) -> CliResult<WorkingReal> {
        Ok(parse_working_real(text, self.decimal_bits)?.value)
    }

    fn value(&self, text: &str) -> CliResult<FpValue> {
        let t = text.trim().to_ascii_lowercase();
        Ok(match t.as_str() {
            "nan" | "+nan" | "-nan" => FpValue::Nan,
            "inf" | "+inf" | "infinity" | "+infinity" => FpValue::Infinite { negative: false },
            "-inf" | "-infinity" => FpValue::Infinite { negative: true },
            _ => FpValue::Finite(self.real(text)?),
        })
    }

    fn show_real(&self, x: &WorkingReal, fmt: Option<&FloatFormat>) -> String {
        match self.digits {
            Some(d) => x.to_decimal(d),
            None => x.to_hex_float(fmt.map_or(0, FloatFormat::hex_digits)),
        }
    }

    fn show(&self, v: &FpValue, fmt: Option<&FloatFormat>) -> String {
        match v {
            FpValue::Finite(x) => self.show_real(x, fmt),
            other => other.to_hex_float(0),
        }
    }
}

fn rounding_of(args: &RoundingArgs, ctx: &Ctx) -> CliResult<Rounding> {
    match (&args.mode, args.variant) {
        (Some(_), Some(_)) => usage("--mode and --variant are mutually exclusive"),
        (Some(m), None) => Ok(Rounding::Deterministic(
            RoundingMode::parse(m).or_else(|_| usage(format!("unknown mode {m:?} (rne, rz, ru, rd)")))?,
        )),
        (None, None) => usage("one of --mode or --variant is required"),
        (None, Some(v)) => {
            let need_r = || match args.r {
                Some(r) => Ok(r),
                None => usage("--r is required for fixed-width variants"),
            };
            let cfg = match v {
                VariantArg::Exact => SrConfig::exact(),
                VariantArg::Limited => SrConfig::limited(need_r()?, args.intermediate.into())?,
                VariantArg::A => SrConfig::p3109(P3109Kind::A, need_r()?)?,
                VariantArg::B => SrConfig::p3109(P3109Kind::B, need_r()?)?,
                VariantArg::C => SrConfig::p3109(P3109Kind::C, need_r()?)?,
            };
            let policy = match args.overflow {
                OverflowArg::Saturate => OverflowPolicy::Saturate,
                OverflowArg::Infinity => OverflowPolicy::ToInfinity,
            };
            let flush = args.flush_below.as_deref().map(|t| ctx.real(t).map(|v| v.abs())).transpose()?;
            Ok(Rounding::Stochastic(cfg.with_overflow(policy).with_flush_below(flush)))
        }
    }
}

fn stochastic_of(args: &RoundingArgs, ctx: &Ctx) -> CliResult<SrConfig> {
    match rounding_of(args, ctx)? {
        Rounding::Stochastic(cfg) => Ok(cfg),
        Rounding::Deterministic(_) => usage("this command needs a stochastic --variant"),
    }
}

fn preset(name: &str) -> CliResult<FloatFormat> {
    Ok(FloatFormat::preset(name)?)
}

fn registry(path: Option<&PathBuf>) -> CliResult<Registry> {
    Ok(match path {
        Some(p) => Registry::load(p)?,
        None => Registry::builtin(),
    })
}

fn dispatch(ctx: &Ctx, cmd: Command, out: &mut String) -> CliResult<()> {
    match cmd {
        Command::Round(a) => cmd_round(ctx, a, out),
        Command::Op(a) => cmd_op(ctx, a, out),
        Command::Convert(a) => cmd_convert(ctx, a, out),
        Command::Dist(a) => cmd_dist(ctx, a, out),
        Command::SumExpect(a) => cmd_sum_expect(ctx, a, out),
        Command::Profiles(a) => cmd_profiles(ctx, a, out),
        Command::Experiment(a) => cmd_experiment(ctx, a, out),
        Command::Inspect(a) => cmd_inspect(ctx, a, out),
        Command::Entropy(a) => cmd_entropy(ctx, a, out),
        Command::Block(a) => cmd_block(ctx, a, out),
    }
}

fn rounded_json(ctx: &Ctx, input: &str, r: &Rounded, fmt: &FloatFormat) -> CliResult<Value> {
    Ok(json!({
        "input": input,
        "value": ctx.show(&r.value, Some(fmt)),
        "bits": format!("{:#x}", fmt.encode(&r.value)?),
        "overflow": r.overflow,
        "flushed": r.flushed,
    }))
}

fn emit_rounded(ctx: &Ctx, fmt: &FloatFormat, results: &[(String, Rounded)], out: &mut String) -> CliResult<()> {
    match ctx.format_or(OutputFormat::Text) {
        OutputFormat::Text => {
            for (_, r) in results {
                let mut line = ctx.show(&r.value, Some(fmt));
                if r.overflow {
                    line.push_str(" overflow");
                }
                if r.flushed {
                    line.push_str(" flushed");
                }
                let _ = writeln!(out, "{line}");
            }
        }
        OutputFormat::Json => {
            let rows: Vec<Value> = results.iter().map(|(i, r)| rounded_json(ctx, i, r, fmt)).collect::<CliResult<_>>()?;
            let _ = writeln!(out, "{}", Value::Array(rows));
        }
        OutputFormat::Csv => {
            let _ = writeln!(out, "input,value,overflow,flushed");
            for (i, r) in results {
                let _ = writeln!(out, "{i},{},{},{}", ctx.show(&r.value, Some(fmt)), r.overflow, r.flushed);
            }
        }
    }
    Ok(())
}

fn cmd_round(ctx: &Ctx, a: RoundArgs, out: &mut String) -> CliResult<()> {
    let fmt = preset(&a.fmt)?;
    let rounding = rounding_of(&a.rounding, ctx)?;
    let mut results = Vec::with_capacity(a.values.len());
    for (i, text) in a.values.iter().enumerate() {
        let value = ctx.value(text)?;
        let mut src = derive_stream(a.seed.seed, i as u64);
        let r = match (&rounding, a.draw, a.two_stage) {
            (Rounding::Stochastic(cfg), _, true) => match &value {
                FpValue::Finite(x) => two_stage_round(x, &fmt, cfg, &mut src)?,
                _ => round_value(&fmt, &value, &rounding, &mut src)?,
            },
            (Rounding::Deterministic(_), _, true) => return usage("--two-stage needs a stochastic --variant"),
            (Rounding::Stochastic(cfg), Some(d), false) => {
                let width = cfg.random_bits().ok_or_else(|| Failure::Usage("--draw needs a fixed-width variant".into()))?;
                match &value {
                    FpValue::Finite(x) => cfg.round_with_draw(&fmt, x, RandomDraw::new(d, width)?)?,
                    _ => round_value(&fmt, &value, &rounding, &mut src)?,
                }
            }
            (Rounding::Deterministic(_), Some(_), false) => return usage("--draw needs a stochastic --variant"),
            (_, None, false) => round_value(&fmt, &value, &rounding, &mut src)?,
        };
        results.push((text.clone(), r));
    }
    emit_rounded(ctx, &fmt, &results, out)
}

fn cmd_op(ctx: &Ctx, a: OpArgs, out: &mut String) -> CliResult<()> {
    let fmt = preset(&a.fmt)?;
    let rounding = rounding_of(&a.rounding, ctx)?;
    let op = ArithOp::parse(&a.op).or_else(|_| usage(format!("unknown op {:?} (add, sub, mul)", a.op)))?;
    let (x, y) = (ctx.real(&a.a)?, ctx.real(&a.b)?);
    let mut src = derive_stream(a.seed.seed, 0);
    let r = exact_op_then_round(op, &x, &y, &fmt, &rounding, &mut src)?;
    emit_rounded(ctx, &fmt, &[(format!("{} {} {}", a.a, a.op, a.b), r)], out)
}

fn cmd_convert(ctx: &Ctx, a: ConvertArgs, out: &mut String) -> CliResult<()> {
    let reg = registry(a.profiles.as_ref())?;
    let rule = reg.lookup(&a.vendor, &a.src, &a.dst)?;
    let dst = rule.dst_format(Some(&a.dst))?;
    let values: Vec<WorkingReal> = a.values.iter().map(|v| ctx.real(v)).collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    if a.pair {
        let [x1, x2] = values.as_slice() else {
            return usage("--pair takes exactly two values");
        };
        let Some(word) = a.word else {
            return usage("--pair needs --word");
        };
        let word = u32::try_from(word).or_else(|_| usage("--word must fit in 32 bits for --pair"))?;
        let (c1, c2) = convert_packed_pair(rule, &dst, x1, x2, word)?;
        rows.push((a.values[0].clone(), c1));
        rows.push((a.values[1].clone(), c2));
    } else {
        for (i, x) in values.iter().enumerate() {
            let mut src = derive_stream(a.seed.seed, i as u64);
            let entropy = match a.word {
                Some(w) => Entropy::Word(w),
                None => Entropy::Stream(&mut src),
            };
            rows.push((a.values[i].clone(), convert(rule, &dst, x, entropy)?));
        }
    }
    match ctx.format_or(OutputFormat::Text) {
        OutputFormat::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|(i, c)| {
                    let mut v = rounded_json(ctx, i, &c.rounded, &dst)?;
                    v["r_used"] = json!(c.r_used);
                    Ok(v)
                })
                .collect::<CliResult<_>>()?;
            let _ = writeln!(out, "{}", Value::Array(items));
        }
        _ => {
            for (_, c) in &rows {
                let mut line = format!("{} r={}", ctx.show(&c.rounded.value, Some(&dst)), c.r_used);
                if c.rounded.flushed {
                    line.push_str(" flushed");
                }
                if c.rounded.overflow {
                    line.push_str(" overflow");
                }
                let _ = writeln!(out, "{line}");
            }
        }
    }
    Ok(())
}

fn cmd_dist(ctx: &Ctx, a: DistArgs, out: &mut String) -> CliResult<()> {
    let fmt = preset(&a.fmt)?;
    let cfg = stochastic_of(&a.rounding, ctx)?;
    let x = ctx.real(&a.x)?;
    let report = distribution(&fmt, &x, &cfg)?;
    match ctx.format_or(OutputFormat::Json) {
        OutputFormat::Text => {
            let _ = writeln!(out, "x       {}", ctx.show_real(&report.x, None));
            let _ = writeln!(out, "q       {}", rational_to_string(&report.q));
            for (v, p) in outcome_distribution(&fmt, &x, &cfg)? {
                let _ = writeln!(out, "P({}) = {}", ctx.show(&v, Some(&fmt)), rational_to_string(&p));
            }
            let _ = writeln!(out, "mean    {}", rational_to_string(&report.mean));
            let _ = writeln!(out, "bias    {} ulp", rational_to_string(&report.bias_ulps));
        }
        _ => {
            let _ = writeln!(out, "{}", report.to_json());
        }
    }
    Ok(())
}

fn cmd_sum_expect(ctx: &Ctx, a: SumExpectArgs, out: &mut String) -> CliResult<()> {
    let fmt = preset(&a.fmt)?;
    let cfg = stochastic_of(&a.rounding, ctx)?;
    let xs: Vec<WorkingReal> = a.addends.iter().map(|t| ctx.real(t)).collect::<CliResult<_>>()?;
    let exact = xs.iter().fold(WorkingReal::zero(), |s, x| &s + x);
    let e = expected_sum_enumeration(&xs, &fmt, &cfg)?;
    let body = json!({
        "exact_sum": exact.to_hex_float(0),
        "mean": rational_to_string(&e.mean),
        "variance": rational_to_string(&e.variance),
        "unbiased": e.mean == exact.to_rational(),
        "final_states": e.final_states,
    });
    let _ = writeln!(out, "{body}");
    Ok(())
}

fn cmd_profiles(ctx: &Ctx, a: ProfilesArgs, out: &mut String) -> CliResult<()> {
    let reg = registry(a.profiles.as_ref())?;
    match a.action {
        ProfilesAction::List => {
            if ctx.format_or(OutputFormat::Text) == OutputFormat::Json {
                let _ = writeln!(out, "{}", reg.to_json());
                return Ok(());
            }
            for p in &reg.profiles {
                for rule in &p.rules {
                    let _ = writeln!(
                        out,
                        "{:<17} {:>2} -> {:<2} r={:<9} {} -> {}",
                        p.vendor,
                        rule.src_precision,
                        rule.dst_precision,
                        rule.r_label(),
                        rule.src_formats.join("|"),
                        rule.dst_formats.join("|"),
                    );
                }
            }
        }
        ProfilesAction::Show { vendor } => {
            let p = reg.vendor(&vendor)?;
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(p).expect("profile serializes"));
        }
        ProfilesAction::Dump => {
            let _ = writeln!(out, "{}", reg.to_json());
        }
        ProfilesAction::Lookup { vendor, src, dst } => {
            let rule = reg.lookup(&vendor, &src, &dst)?;
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(rule).expect("rule serializes"));
        }
    }
    Ok(())
}

fn size_grid(a: &ExperimentArgs, default: &[u64]) -> CliResult<Vec<u64>> {
    if let Some(range) = &a.n_pow2 {
        if !a.n.is_empty() {
            return usage("--n and --n-pow2 are mutually exclusive");
        }
        let parsed = range
            .split_once("..")
            .and_then(|(lo, hi)| Some((lo.trim().parse::<u32>().ok()?, hi.trim().parse::<u32>().ok()?)));
        return match parsed {
            Some((lo, hi)) if lo <= hi && hi < 63 => Ok((lo..=hi).map(|k| 1u64 << k).collect()),
            _ => usage(format!("--n-pow2 expects lo..hi, got {range:?}")),
        };
    }
    Ok(if a.n.is_empty() { default.to_vec() } else { a.n.clone() })
}

fn cmd_experiment(ctx: &Ctx, a: ExperimentArgs, out: &mut String) -> CliResult<()> {
    if a.kind == KindArg::PiDemo {
        let report = run_pi_demo();
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let fmt = preset(&a.fmt)?;
    let modes: Vec<Rounding> = a.modes.iter().map(|m| Rounding::parse(m)).collect::<Result<_, _>>()?;
    let addends = || -> CliResult<Addends> {
        Ok(match a.addends.as_str() {
            "uniform" => Addends::Uniform,
            c => Addends::Constant(ctx.real(c)?),
        })
    };
    let pow2 = |lo: u32, hi: u32| (lo..=hi).map(|k| 1u64 << k).collect::<Vec<_>>();
    let (kind, grid) = match a.kind {
        KindArg::Stagnation => (
            ExperimentKind::Stagnation { acc0: ctx.real(&a.acc0)?, delta: ctx.real(&a.delta)? },
            size_grid(&a, &[4096])?,
        ),
        KindArg::SumGrowth => (ExperimentKind::SumGrowth { addends: addends()? }, size_grid(&a, &pow2(8, 16))?),
        KindArg::Pairwise => (ExperimentKind::Pairwise { addends: addends()? }, size_grid(&a, &pow2(8, 16))?),
        KindArg::Dot => (ExperimentKind::Dot, size_grid(&a, &pow2(6, 12))?),
        KindArg::Horner => (ExperimentKind::Horner { point: ctx.real(&a.point)? }, size_grid(&a, &[64])?),
        KindArg::RSweep => (
            ExperimentKind::RSweep { r_grid: a.r_grid.clone(), intermediate: a.intermediate.into() },
            size_grid(&a, &[4096])?,
        ),
        KindArg::Gd => (ExperimentKind::Gd { dim: a.dim, step: ctx.real(&a.step)? }, size_grid(&a, &[2000])?),
        KindArg::PiDemo => unreachable!(),
    };
    let spec = ExperimentSpec::new(kind, fmt, modes, grid)
        .with_trials(a.trials)
        .with_seed(a.seed.seed)
        .with_threads(a.threads);
    let result = run_experiment(&spec)?;
    if let Some(path) = &a.out {
        std::fs::write(path, result.to_csv()).map_err(Error::from)?;
    }
    if ctx.format == Some(OutputFormat::Csv) {
        out.push_str(&result.to_csv());
    } else {
        let summary = result.summary_json();
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    }
    Ok(())
}

fn cmd_inspect(ctx: &Ctx, a: InspectArgs, out: &mut String) -> CliResult<()> {
    let Some(name) = a.fmt else {
        for name in PRESET_NAMES {
            let f = preset(name)?;
            let _ = writeln!(
                out,
                "{:<9} p={:<2} emin={:<6} emax={:<5} bits={:<2} max={}",
                f.name(),
                f.precision(),
                f.emin(),
                f.emax(),
                f.total_bits(),
                ctx.show_real(&f.max_finite(), Some(&f)),
            );
        }
        return Ok(());
    };
    let fmt = preset(&name)?;
    let body = if let Some(bits) = a.bits {
        let v = fmt.decode(bits)?;
        json!({ "format": fmt.name(), "bits": format!("{bits:#x}"), "value": ctx.show(&v, Some(&fmt)) })
    } else if let Some(text) = &a.value {
        let x = ctx.real(text)?;
        let c = neighbors(&fmt, &x)?;
        let q = q_fraction(&fmt, &x)?;
        let encoding = if c.exact { Some(format!("{:#x}", fmt.encode(&FpValue::Finite(x.clone()))?)) } else { None };
        json!({
            "format": fmt.name(),
            "x": ctx.show_real(&x, None),
            "representable": c.exact,
            "lo": ctx.show_real(&c.lo, Some(&fmt)),
            "hi": ctx.show_real(&c.hi, Some(&fmt)),
            "q": rational_to_string(q.as_rational()),
            "ulp": ctx.show_real(&ulp(&fmt, &x)?, None),
            "bits": encoding,
        })
    } else {
        json!({
            "format": fmt.name(),
            "precision": fmt.precision(),
            "emin": fmt.emin(),
            "emax": fmt.emax(),
            "total_bits": fmt.total_bits(),
            "subnormals": fmt.has_subnormals(),
            "specials": fmt.specials(),
            "max_finite": ctx.show_real(&fmt.max_finite(), Some(&fmt)),
            "min_normal": ctx.show_real(&fmt.min_normal(), Some(&fmt)),
            "min_positive": ctx.show_real(&fmt.min_positive(), Some(&fmt)),
            "unit_roundoff": ctx.show_real(&fmt.unit_roundoff(), None),
        })
    };
    let _ = writeln!(out, "{body}");
    Ok(())
}

fn cmd_entropy(_ctx: &Ctx, a: EntropyArgs, out: &mut String) -> CliResult<()> {
    let scheme = match a.scheme {
        SchemeArg::Lsb => DataScheme::Lsb,
        SchemeArg::XorFold => DataScheme::XorFold,
    };
    let mut src: Box<dyn BitSource> = match a.source {
        SourceArg::Xoroshiro => match a.stream {
            Some(id) => Box::new(derive_stream(a.seed.seed, id)),
            None => Box::new(Xoroshiro128Plus::new(a.seed.seed, a.seed.seed.rotate_left(32) ^ 1)),
        },
        SourceArg::Counter => Box::new(CounterSource::new(a.seed.seed)),
        SourceArg::Lfsr if a.taps.is_empty() => Box::new(Lfsr::with_default_taps(a.width, a.seed.seed)?),
        SourceArg::Lfsr => Box::new(Lfsr::new(a.width, &a.taps, a.seed.seed)?),
        SourceArg::Data => {
            let Some(datum) = a.datum else {
                return usage("--source data needs --datum");
            };
            let _ = writeln!(out, "{:#x}", data_entropy(datum, a.width, a.bits, scheme)?);
            return Ok(());
        }
        SourceArg::Replay => match &a.replay {
            Some(bits) => Box::new(ReplaySource::from_str_bits(bits)),
            None => return usage("--source replay needs --replay"),
        },
    };
    for _ in 0..a.count {
        let _ = writeln!(out, "{:#x}", src.next_bits(a.bits)?);
    }
    Ok(())
}

fn cmd_block(ctx: &Ctx, a: BlockArgs, out: &mut String) -> CliResult<()> {
    let spec = BlockFormatSpec::preset(&a.block)?;
    let rounding = rounding_of(&a.rounding, ctx)?;
    let values: Vec<FpValue> = a.values.iter().map(|v| ctx.value(v)).collect::<CliResult<_>>()?;
    let q = block_quantize(&values, &spec, &rounding, a.seed.seed)?;
    let body = json!({
        "format": spec.name,
        "group_size": spec.group_size,
        "scale_exponents": q.scale_exponents,
        "element_codes": q.element_codes.iter().map(|c| format!("{c:#x}")).collect::<Vec<_>>(),
        "elements": q.elements[..q.len].iter().map(|e| ctx.show_real(e, Some(&spec.element_fmt))).collect::<Vec<_>>(),
        "dequantized": q.dequantize(spec.group_size).iter().map(|e| ctx.show_real(e, None)).collect::<Vec<_>>(),
        "padded": q.padded,
        "overflow": q.overflow,
    });
    let _ = writeln!(out, "{body}");
    Ok(())
}
