//! Command-line front end: manifest checking, identity-suite evaluation,
//! signature inference, and built-in example reports, with deterministic
//! JSON output.

use std::collections::BTreeMap;
use std::fs;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::manifest::{
    halton_points, is_signature_failure, load_manifest, LoadedManifest,
};
use crate::structure::LMParams;
use crate::submanifold::{screen_generic_report, ManifoldSpec};
use crate::verify::{
    builtin_example, distribution_checks_with, minimality_check, umbilical_fit, Ledger,
    MinimalityReport, PointVerifier, BUILTIN_EXAMPLES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_RESIDUAL: i32 = 2;
pub const EXIT_SIGNATURE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "nullframe",
    version,
    about = "Numerical verification of lightlike submanifold decompositions \
             with a bronze structure and (l,m)-type connections"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct SampleArgs {
    /// Number of quasi-random sample points in the parameter domain
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Seed controlling the sample sequence offset and any random draws
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Residual tolerance for pass/fail verdicts
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Emit the full report as JSON on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify every claim of a manifest (built-in name or TOML path)
    Check {
        manifest: String,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Evaluate the connection identity suite only
    Identities {
        manifest: String,
        #[command(flatten)]
        sample: SampleArgs,
        /// Additional random (l,m) parameter pairs to test besides the
        /// manifest's own
        #[arg(long, default_value_t = 0)]
        extra_lm: usize,
    },
    /// Infer which ambient coordinates must be timelike
    InferSignature {
        manifest: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the full report for a built-in example
    Example {
        /// One of: bronze16, minimal11
        name: String,
        #[command(flatten)]
        sample: SampleArgs,
    },
}

#[derive(Serialize)]
struct ClaimOutcome {
    claimed: String,
    observed: String,
    pass: bool,
}

#[derive(Serialize)]
struct MinimalitySummary {
    hs_on_rad_residual: f64,
    frame_trace_residual: f64,
    inverse_gram_trace_residual: f64,
    minimal: bool,
}

impl From<&MinimalityReport> for MinimalitySummary {
    fn from(r: &MinimalityReport) -> Self {
        MinimalitySummary {
            hs_on_rad_residual: r.hs_on_rad_residual,
            frame_trace_residual: r.frame_trace_residual,
            inverse_gram_trace_residual: r.inverse_gram_trace_residual,
            minimal: r.minimal,
        }
    }
}

#[derive(Serialize)]
struct ReportDocument {
    schema_version: &'static str,
    command: String,
    name: String,
    seed: u64,
    point_count: usize,
    tol: f64,
    /// Resolved timelike coordinate positions, 1-based.
    timelike_positions: Vec<usize>,
    notes: Vec<String>,
    classification: Option<String>,
    dims: BTreeMap<String, usize>,
    screen_generic: Option<bool>,
    proper: Option<bool>,
    minimality: Option<MinimalitySummary>,
    umbilical_residual: Option<f64>,
    residuals: BTreeMap<String, f64>,
    skipped: Vec<String>,
    claims: BTreeMap<String, ClaimOutcome>,
    max_residual: f64,
    pass: bool,
}

/// Geometric facts gathered at a sample point, used for claim checking and
/// cross-point consistency.
#[derive(Clone, PartialEq)]
struct PointFacts {
    rad_dim: usize,
    b0_dim: usize,
    bprime_dim: usize,
    mu_dim: usize,
    screen_generic: bool,
    proper: bool,
    classification: String,
}

struct PointOutcome {
    ledger: Ledger,
    facts: Option<PointFacts>,
    minimality: Option<MinimalityReport>,
    umbilical_residual: Option<f64>,
}

fn load(name_or_path: &str) -> Result<LoadedManifest, (i32, String)> {
    let result = if BUILTIN_EXAMPLES.contains(&name_or_path) {
        builtin_example(name_or_path)
    } else {
        let text = fs::read_to_string(name_or_path)
            .map_err(|e| (EXIT_INPUT, format!("cannot read {name_or_path}: {e}")))?;
        let stem = std::path::Path::new(name_or_path)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("manifest")
            .to_string();
        load_manifest(&text, &stem)
    };
    result.map_err(|e| {
        let code = if is_signature_failure(&e) {
            EXIT_SIGNATURE
        } else {
            EXIT_INPUT
        };
        (code, e.to_string())
    })
}

/// Theorem-level frame residuals at a point: the transversal pairings, the
/// orthogonality of the radical, and the constant structure residuals.
fn frame_residuals(pv: &PointVerifier, led: &mut Ledger) {
    let d = &pv.ctx.decomp;
    let spec = pv.ctx.spec;
    let g = &spec.metric;
    let r = d.rad.len();
    for i in 0..r {
        for jx in 0..r {
            let delta = if i == jx { 1.0 } else { 0.0 };
            led.bump(
                "pairing_n_xi",
                (g.inner(&d.ltr[i], &d.rad[jx]) - delta).abs(),
            );
            led.bump("pairing_n_n", g.inner(&d.ltr[i], &d.ltr[jx]).abs());
        }
        for sp in &d.stm {
            led.bump("pairing_n_screen", g.inner(&d.ltr[i], sp).abs());
        }
        for w in &d.stmperp {
            led.bump("pairing_n_sperp", g.inner(&d.ltr[i], w).abs());
        }
        for tv in &d.tm {
            led.bump("rad_orthogonality", g.inner(&d.rad[i], tv).abs());
        }
    }
    led.bump("bronze_structure", spec.bronze.structure_residual());
    led.bump("bronze_compatibility", spec.bronze.compatibility_residual(g));
    led.bump("eta_unit", spec.lm.eta_norm_residual(g));
}

enum WorkKind {
    IdentitiesOnly { lms: Vec<LMParams> },
    Full,
}

fn point_outcome(
    spec: &ManifoldSpec,
    t: &[f64],
    kind: &WorkKind,
) -> Result<PointOutcome, String> {
    let pv = PointVerifier::new(spec, t).map_err(|e| e.to_string())?;
    let mut led = Ledger::new();
    frame_residuals(&pv, &mut led);
    pv.lc_identities(&mut led);
    match kind {
        WorkKind::IdentitiesOnly { lms } => {
            pv.lm_identities(&spec.lm, &mut led);
            for lm in lms {
                pv.lm_identities(lm, &mut led);
            }
            Ok(PointOutcome {
                ledger: led,
                facts: None,
                minimality: None,
                umbilical_residual: None,
            })
        }
        WorkKind::Full => {
            let mb = pv.lm_identities(&spec.lm, &mut led);
            let rep = screen_generic_report(spec, &pv.ctx.decomp);
            led.bump("rad_invariance", rep.rad_invariant);
            led.bump("ltr_invariance", rep.ltr_invariant);
            led.bump("mu_invariance", rep.mu_invariant);
            distribution_checks_with(&pv, &mb, &rep, &mut led);
            led.merge(&crate::verify::umbilical_lemma_check(&pv, &mb));
            let minimality = minimality_check(&pv, 1e-8);
            let mu_opt = if rep.mu.is_empty() { None } else { Some(rep.mu.as_slice()) };
            let umb = umbilical_fit(&pv, &mb, mu_opt, 1e-8);
            let facts = PointFacts {
                rad_dim: pv.ctx.decomp.rad.len(),
                b0_dim: rep.b0.len(),
                bprime_dim: rep.bprime.len(),
                mu_dim: rep.mu.len(),
                screen_generic: rep.screen_generic,
                proper: rep.proper,
                classification: pv.ctx.decomp.classification.label(),
            };
            Ok(PointOutcome {
                ledger: led,
                facts: Some(facts),
                minimality: Some(minimality),
                umbilical_residual: Some(umb.hl_residual.max(umb.hs_residual).max(umb.dl_residual)),
            })
        }
    }
}

fn thread_count() -> usize {
    std::env::var("NULLFRAME_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Evaluate all points, distributing round-robin over the worker threads and
/// reassembling in point order so the output is independent of thread count.
fn run_points(
    spec: &ManifoldSpec,
    points: &[Vec<f64>],
    kind: &WorkKind,
) -> Result<Vec<PointOutcome>, String> {
    let n_threads = thread_count().min(points.len().max(1));
    let mut slots: Vec<Option<Result<PointOutcome, String>>> =
        (0..points.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..n_threads {
            handles.push(scope.spawn(move || {
                let mut local = Vec::new();
                for (i, t) in points.iter().enumerate() {
                    if i % n_threads == w {
                        local.push((i, point_outcome(spec, t, kind)));
                    }
                }
                local
            }));
        }
        for h in handles {
            for (i, res) in h.join().expect("worker thread panicked") {
                slots[i] = Some(res);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every point assigned"))
        .collect()
}

fn claim_entry(
    claims: &mut BTreeMap<String, ClaimOutcome>,
    key: &str,
    claimed: Option<String>,
    observed: String,
) {
    if let Some(c) = claimed {
        let pass = c == observed;
        claims.insert(
            key.to_string(),
            ClaimOutcome {
                claimed: c,
                observed,
                pass,
            },
        );
    }
}

fn print_human(doc: &ReportDocument) {
    println!("manifest: {}", doc.name);
    println!(
        "signature: timelike coordinate positions {:?}",
        doc.timelike_positions
    );
    for n in &doc.notes {
        println!("note: {n}");
    }
    if let Some(c) = &doc.classification {
        println!(
            "classification: {c} (rad {}, B0 {}, B' {}, mu {})",
            doc.dims.get("rad").copied().unwrap_or(0),
            doc.dims.get("b0").copied().unwrap_or(0),
            doc.dims.get("bprime").copied().unwrap_or(0),
            doc.dims.get("mu").copied().unwrap_or(0),
        );
        println!(
            "screen generic: {}, proper: {}",
            doc.screen_generic.unwrap_or(false),
            doc.proper.unwrap_or(false)
        );
    }
    if let Some(m) = &doc.minimality {
        println!(
            "minimality: hs|rad {:.3e}, frame trace {:.3e}, inverse-gram trace {:.3e} => {}",
            m.hs_on_rad_residual,
            m.frame_trace_residual,
            m.inverse_gram_trace_residual,
            if m.minimal { "minimal" } else { "not minimal" }
        );
    }
    if let Some(u) = doc.umbilical_residual {
        println!("umbilical model residual: {u:.3e}");
    }
    println!(
        "residuals over {} points (tol {:.1e}):",
        doc.point_count, doc.tol
    );
    for (k, v) in &doc.residuals {
        let flag = if *v <= doc.tol { "ok  " } else { "FAIL" };
        println!("  [{flag}] {k:<22} {v:.3e}");
    }
    for s in &doc.skipped {
        println!("  [skip] {s}");
    }
    for (k, c) in &doc.claims {
        let flag = if c.pass { "ok  " } else { "FAIL" };
        println!(
            "  [{flag}] claim {k:<16} claimed {} / observed {}",
            c.claimed, c.observed
        );
    }
    println!(
        "max residual: {:.3e}; verdict: {}",
        doc.max_residual,
        if doc.pass { "PASS" } else { "FAIL" }
    );
}

fn finish(doc: ReportDocument, json: bool) -> i32 {
    let code = if doc.pass { EXIT_OK } else { EXIT_RESIDUAL };
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).expect("report serializes")
        );
    } else {
        print_human(&doc);
    }
    code
}

fn run_report(
    command: &str,
    loaded: &LoadedManifest,
    sample: &SampleArgs,
    kind: WorkKind,
    check_claims: bool,
) -> i32 {
    let spec = &loaded.spec;
    let points = halton_points(spec, sample.points.max(1), sample.seed);
    let outcomes = match run_points(spec, &points, &kind) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };

    let mut ledger = Ledger::new();
    let mut notes = loaded.notes.clone();
    for o in &outcomes {
        ledger.merge(&o.ledger);
    }
    let facts = outcomes[0].facts.clone();
    if let Some(f0) = &facts {
        if outcomes
            .iter()
            .any(|o| o.facts.as_ref().map(|f| f != f0).unwrap_or(false))
        {
            notes.push("geometric type varies across sample points".to_string());
        }
    }
    let mut minimality: Option<MinimalitySummary> = None;
    let mut umbilical_residual: Option<f64> = None;
    for o in &outcomes {
        if let Some(m) = &o.minimality {
            let s = minimality.get_or_insert_with(|| MinimalitySummary::from(m));
            s.hs_on_rad_residual = s.hs_on_rad_residual.max(m.hs_on_rad_residual);
            s.frame_trace_residual = s.frame_trace_residual.max(m.frame_trace_residual);
            s.inverse_gram_trace_residual = s
                .inverse_gram_trace_residual
                .max(m.inverse_gram_trace_residual);
            s.minimal = s.minimal && m.minimal;
        }
        if let Some(u) = o.umbilical_residual {
            umbilical_residual = Some(umbilical_residual.unwrap_or(0.0).max(u));
        }
    }

    let mut claims = BTreeMap::new();
    if check_claims {
        let c = &loaded.claimed;
        if let Some(f) = &facts {
            claim_entry(&mut claims, "rad_dim", c.rad_dim.map(|v| v.to_string()), f.rad_dim.to_string());
            claim_entry(&mut claims, "classification", c.classification.clone(), f.classification.clone());
            claim_entry(&mut claims, "screen_generic", c.screen_generic.map(|v| v.to_string()), f.screen_generic.to_string());
            claim_entry(&mut claims, "proper", c.proper.map(|v| v.to_string()), f.proper.to_string());
            claim_entry(&mut claims, "b0_dim", c.b0_dim.map(|v| v.to_string()), f.b0_dim.to_string());
            claim_entry(&mut claims, "bprime_dim", c.bprime_dim.map(|v| v.to_string()), f.bprime_dim.to_string());
            claim_entry(&mut claims, "mu_dim", c.mu_dim.map(|v| v.to_string()), f.mu_dim.to_string());
        }
        if let (Some(claimed_min), Some(m)) = (loaded.claimed.minimal, &minimality) {
            claim_entry(
                &mut claims,
                "minimal",
                Some(claimed_min.to_string()),
                m.minimal.to_string(),
            );
        }
    }

    let max_residual = ledger.max_entry().map(|(_, v)| v).unwrap_or(0.0);
    let residual_pass = ledger.entries.values().all(|v| *v <= sample.tol);
    let claims_pass = claims.values().all(|c| c.pass);
    let consistent = !notes
        .iter()
        .any(|n| n.contains("varies across sample points"));
    let pass = residual_pass && claims_pass && consistent;

    let mut timelike: Vec<usize> = spec
        .metric
        .timelike_positions()
        .iter()
        .map(|p| p + 1)
        .collect();
    timelike.sort_unstable();

    let doc = ReportDocument {
        schema_version: "1",
        command: command.to_string(),
        name: loaded.name.clone(),
        seed: sample.seed,
        point_count: points.len(),
        tol: sample.tol,
        timelike_positions: timelike,
        notes,
        classification: facts.as_ref().map(|f| f.classification.clone()),
        dims: facts
            .as_ref()
            .map(|f| {
                BTreeMap::from([
                    ("rad".to_string(), f.rad_dim),
                    ("b0".to_string(), f.b0_dim),
                    ("bprime".to_string(), f.bprime_dim),
                    ("mu".to_string(), f.mu_dim),
                ])
            })
            .unwrap_or_default(),
        screen_generic: facts.as_ref().map(|f| f.screen_generic),
        proper: facts.as_ref().map(|f| f.proper),
        minimality,
        umbilical_residual,
        residuals: ledger.entries,
        skipped: ledger.skipped.into_iter().collect(),
        claims,
        max_residual,
        pass,
    };
    finish(doc, sample.json)
}

fn random_lms(spec: &ManifoldSpec, count: usize, seed: u64) -> Vec<LMParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let l: f64 = rng.gen_range(-2.0..2.0);
        let m: f64 = rng.gen_range(-2.0..2.0);
        if l * l + m * m < 1e-2 {
            continue;
        }
        out.push(LMParams {
            l,
            m,
            eta: spec.lm.eta.clone(),
        });
    }
    out
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version with success exit.
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Check { manifest, sample } => match load(&manifest) {
            Ok(loaded) => run_report("check", &loaded, &sample, WorkKind::Full, true),
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                code
            }
        },
        Cmd::Identities {
            manifest,
            sample,
            extra_lm,
        } => match load(&manifest) {
            Ok(loaded) => {
                let lms = random_lms(&loaded.spec, extra_lm, sample.seed);
                run_report(
                    "identities",
                    &loaded,
                    &sample,
                    WorkKind::IdentitiesOnly { lms },
                    false,
                )
            }
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                code
            }
        },
        Cmd::InferSignature { manifest, json } => match load(&manifest) {
            Ok(loaded) => {
                let mut timelike: Vec<usize> = loaded
                    .spec
                    .metric
                    .timelike_positions()
                    .iter()
                    .map(|p| p + 1)
                    .collect();
                timelike.sort_unstable();
                if json {
                    let doc = serde_json::json!({
                        "schema_version": "1",
                        "command": "infer-signature",
                        "name": loaded.name,
                        "timelike_positions": timelike,
                        "notes": loaded.notes,
                    });
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&doc).expect("serializes")
                    );
                } else {
                    println!("manifest: {}", loaded.name);
                    println!("timelike coordinate positions (1-based): {timelike:?}");
                    for n in &loaded.notes {
                        println!("note: {n}");
                    }
                }
                EXIT_OK
            }
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                code
            }
        },
        Cmd::Example { name, sample } => {
            if !BUILTIN_EXAMPLES.contains(&name.as_str()) {
                eprintln!(
                    "error: unknown example `{name}` (available: {})",
                    BUILTIN_EXAMPLES.join(", ")
                );
                return EXIT_INPUT;
            }
            match load(&name) {
                Ok(loaded) => run_report("example", &loaded, &sample, WorkKind::Full, true),
                Err((code, msg)) => {
                    eprintln!("error: {msg}");
                    code
                }
            }
        }
    }
}
