//! TOML manifest loading: turns a declarative description of an immersed
//! submanifold (ambient signature, parameter domain, embedding expressions,
//! structure matrix, connection parameters, optional frame and claimed
//! properties) into a validated [`ManifoldSpec`] plus the claims to check.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::exprdsl::{eval_value, parse_expression, ExprError};
use crate::semilinalg::{infer_signature_all, numeric_rank, LinalgError, SignatureMetric};
use crate::structure::{BronzeStructure, LMParams};
use crate::submanifold::ManifoldSpec;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("manifest validation error: {0}")]
    Validation(String),
    #[error("expression error in `{field}`: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("signature resolution failed: {0}")]
    Signature(#[from] LinalgError),
}

fn invalid(msg: impl Into<String>) -> ManifestError {
    ManifestError::Validation(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    #[allow(dead_code)]
    schema_version: Option<u32>,
    name: Option<String>,
    ambient: AmbientSec,
    params: ParamsSec,
    embedding: EmbeddingSec,
    structure: StructureSec,
    connection: ConnectionSec,
    frame: Option<FrameSec>,
    claimed: Option<ClaimedSec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmbientSec {
    dim: usize,
    index: usize,
    /// 1-based coordinate positions carrying the minus sign, if known.
    timelike_positions: Option<Vec<usize>>,
    /// Positions asserted by the source of the manifest; checked against the
    /// resolved ones and reported as a discrepancy when they differ.
    stated_timelike_positions: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSec {
    count: usize,
    domain: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingSec {
    components: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureSec {
    /// Square matrix; entries are numbers or constant expressions such as
    /// "sigma" or "3 - sigma".
    matrix: Vec<Vec<toml::Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionSec {
    l: f64,
    m: f64,
    eta: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSec {
    /// k x m row matrix; tangent direction a is the combination of coordinate
    /// partials given by row a.
    matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claimed {
    pub rad_dim: Option<usize>,
    /// 1-based frame indices spanning the radical (used for signature
    /// inference when `timelike_positions` is absent).
    pub rad_frame_indices: Option<Vec<usize>>,
    pub classification: Option<String>,
    pub screen_generic: Option<bool>,
    pub proper: Option<bool>,
    pub minimal: Option<bool>,
    pub b0_dim: Option<usize>,
    pub bprime_dim: Option<usize>,
    pub mu_dim: Option<usize>,
}

type ClaimedSec = Claimed;

/// A fully validated manifest: the spec to run, the claims to check, and any
/// notes produced while resolving it (inferred signatures, discrepancies).
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub name: String,
    pub spec: ManifoldSpec,
    pub claimed: Claimed,
    pub notes: Vec<String>,
}

fn entry_to_f64(value: &toml::Value, field: &str) -> Result<f64, ManifestError> {
    match value {
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::Float(f) => Ok(*f),
        toml::Value::String(s) => {
            let ast = parse_expression(s, 0).map_err(|source| ManifestError::Expr {
                field: field.to_string(),
                source,
            })?;
            eval_value(&ast, &[])
                .map_err(|e| invalid(format!("{field}: constant expression failed: {e}")))
        }
        other => Err(invalid(format!(
            "{field}: expected number or expression string, got {other:?}"
        ))),
    }
}

fn one_based(positions: &[usize], dim: usize, field: &str) -> Result<Vec<usize>, ManifestError> {
    let mut out = Vec::with_capacity(positions.len());
    for &p in positions {
        if p == 0 || p > dim {
            return Err(invalid(format!(
                "{field}: position {p} out of range 1..={dim}"
            )));
        }
        out.push(p - 1);
    }
    out.sort_unstable();
    out.dedup();
    if out.len() != positions.len() {
        return Err(invalid(format!("{field}: duplicate positions")));
    }
    Ok(out)
}

fn fmt_one_based(positions: &[usize]) -> String {
    let parts: Vec<String> = positions.iter().map(|p| (p + 1).to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Parse and validate a manifest from TOML text.  `fallback_name` is used
/// when the manifest carries no `name` field.
pub fn load_manifest(text: &str, fallback_name: &str) -> Result<LoadedManifest, ManifestError> {
    let doc: ManifestDoc = toml::from_str(text)?;
    let dim = doc.ambient.dim;
    let m = doc.params.count;
    let mut notes = Vec::new();

    if dim == 0 {
        return Err(invalid("ambient.dim must be positive"));
    }
    if doc.ambient.index == 0 || doc.ambient.index >= dim {
        return Err(invalid("ambient.index must satisfy 0 < index < dim"));
    }
    if m == 0 {
        return Err(invalid("params.count must be positive"));
    }
    if doc.params.domain.len() != m {
        return Err(invalid(format!(
            "params.domain has {} ranges, expected {}",
            doc.params.domain.len(),
            m
        )));
    }
    for (i, r) in doc.params.domain.iter().enumerate() {
        if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
            return Err(invalid(format!("params.domain[{i}] is not a finite range")));
        }
    }
    if doc.embedding.components.len() != dim {
        return Err(invalid(format!(
            "embedding has {} components, expected ambient.dim = {dim}",
            doc.embedding.components.len()
        )));
    }
    let mut embedding = Vec::with_capacity(dim);
    for (i, text) in doc.embedding.components.iter().enumerate() {
        let ast = parse_expression(text, m).map_err(|source| ManifestError::Expr {
            field: format!("embedding[{i}]"),
            source,
        })?;
        embedding.push(ast);
    }

    if doc.structure.matrix.len() != dim {
        return Err(invalid(format!(
            "structure.matrix has {} rows, expected {dim}",
            doc.structure.matrix.len()
        )));
    }
    let mut jmat = DMatrix::zeros(dim, dim);
    for (i, row) in doc.structure.matrix.iter().enumerate() {
        if row.len() != dim {
            return Err(invalid(format!(
                "structure.matrix row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        for (j, entry) in row.iter().enumerate() {
            jmat[(i, j)] = entry_to_f64(entry, &format!("structure.matrix[{i}][{j}]"))?;
        }
    }
    let bronze = BronzeStructure::new(jmat);

    if doc.connection.eta.len() != dim {
        return Err(invalid(format!(
            "connection.eta has {} components, expected {dim}",
            doc.connection.eta.len()
        )));
    }
    if doc.connection.l == 0.0 && doc.connection.m == 0.0 {
        return Err(invalid("connection: (l, m) must not both be zero"));
    }

    let frame = match &doc.frame {
        None => None,
        Some(sec) => {
            let k = sec.matrix.len();
            if k == 0 || k > m {
                return Err(invalid(format!(
                    "frame.matrix has {k} rows, expected between 1 and params.count = {m}"
                )));
            }
            let mut fm = DMatrix::zeros(k, m);
            for (i, row) in sec.matrix.iter().enumerate() {
                if row.len() != m {
                    return Err(invalid(format!(
                        "frame.matrix row {i} has {} entries, expected {m}",
                        row.len()
                    )));
                }
                for (j, &x) in row.iter().enumerate() {
                    fm[(i, j)] = x;
                }
            }
            if numeric_rank(&fm) != k {
                return Err(invalid("frame.matrix rows are linearly dependent"));
            }
            Some(fm)
        }
    };

    let claimed = doc.claimed.clone().unwrap_or_default();

    // Resolve the timelike positions: explicit, or inferred from the claimed
    // radical directions evaluated at the domain midpoint.
    let timelike = match &doc.ambient.timelike_positions {
        Some(pos) => {
            let tl = one_based(pos, dim, "ambient.timelike_positions")?;
            if tl.len() != doc.ambient.index {
                return Err(invalid(format!(
                    "ambient.timelike_positions lists {} positions, expected index = {}",
                    tl.len(),
                    doc.ambient.index
                )));
            }
            tl
        }
        None => {
            let rad_idx = claimed.rad_frame_indices.as_ref().ok_or_else(|| {
                invalid(
                    "ambient.timelike_positions absent and no claimed.rad_frame_indices \
                     to infer them from",
                )
            })?;
            let k = frame.as_ref().map(|f| f.nrows()).unwrap_or(m);
            let rad_idx = one_based(rad_idx, k, "claimed.rad_frame_indices")?;
            let mid: Vec<f64> = doc
                .params
                .domain
                .iter()
                .map(|r| 0.5 * (r[0] + r[1]))
                .collect();
            let probe_spec = ManifoldSpec {
                param_dim: m,
                ambient_dim: dim,
                metric: SignatureMetric::new(dim, &[]),
                embedding: embedding.clone(),
                bronze: bronze.clone(),
                lm: LMParams {
                    l: doc.connection.l,
                    m: doc.connection.m,
                    eta: DVector::from_column_slice(&doc.connection.eta),
                },
                frame: frame.clone(),
                domain: doc.params.domain.iter().map(|r| (r[0], r[1])).collect(),
            };
            let jet = probe_spec
                .eval_jets(&mid)
                .map_err(|e| invalid(format!("embedding evaluation at domain midpoint: {e}")))?;
            let tangent = probe_spec.tangent_frame(&jet);
            let rad: Vec<DVector<f64>> =
                rad_idx.iter().map(|&i| tangent[i].clone()).collect();
            let hits = infer_signature_all(dim, doc.ambient.index, &tangent, &rad);
            match hits.len() {
                0 => {
                    return Err(ManifestError::Signature(
                        LinalgError::NoConsistentSignature {
                            index: doc.ambient.index,
                        },
                    ))
                }
                1 => {
                    let tl = hits.into_iter().next().unwrap();
                    notes.push(format!(
                        "timelike positions inferred from claimed radical directions: {}",
                        fmt_one_based(&tl)
                    ));
                    tl
                }
                _ => {
                    return Err(ManifestError::Signature(LinalgError::AmbiguousSignature {
                        index: doc.ambient.index,
                    }))
                }
            }
        }
    };

    if let Some(stated) = &doc.ambient.stated_timelike_positions {
        let stated = one_based(stated, dim, "ambient.stated_timelike_positions")?;
        if stated != timelike {
            notes.push(format!(
                "stated timelike positions {} disagree with resolved positions {}",
                fmt_one_based(&stated),
                fmt_one_based(&timelike)
            ));
        }
    }

    let metric = SignatureMetric::new(dim, &timelike);
    let lm = LMParams {
        l: doc.connection.l,
        m: doc.connection.m,
        eta: DVector::from_column_slice(&doc.connection.eta),
    };
    let eta_res = lm.eta_norm_residual(&metric);
    if eta_res > 1e-9 {
        return Err(invalid(format!(
            "connection.eta is not unit spacelike under the resolved signature \
             (residual {eta_res:.3e})"
        )));
    }
    let structure_res = bronze.structure_residual();
    if structure_res > 1e-9 {
        return Err(invalid(format!(
            "structure.matrix does not satisfy J^2 = 3J + I (residual {structure_res:.3e})"
        )));
    }
    let compat_res = bronze.compatibility_residual(&metric);
    if compat_res > 1e-9 {
        return Err(invalid(format!(
            "structure.matrix is not self-adjoint for the resolved metric \
             (residual {compat_res:.3e})"
        )));
    }

    let spec = ManifoldSpec {
        param_dim: m,
        ambient_dim: dim,
        metric,
        embedding,
        bronze,
        lm,
        frame,
        domain: doc.params.domain.iter().map(|r| (r[0], r[1])).collect(),
    };

    let name = doc
        .name
        .clone()
        .unwrap_or_else(|| fallback_name.to_string());
    Ok(LoadedManifest {
        name,
        spec,
        claimed,
        notes,
    })
}

/// Sampling points for a spec: a Halton sequence over the parameter box,
/// inset from each boundary by 5% of the side length.  `seed` rotates the
/// sequence start so distinct seeds give distinct deterministic point sets.
pub fn halton_points(spec: &ManifoldSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let m = spec.param_dim;
    let skip = 100 + (seed % 1000) as usize;
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let idx = (skip + n) as u64;
        let mut point = Vec::with_capacity(m);
        for (d, (lo, hi)) in spec.domain.iter().enumerate() {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = idx;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            let inset = 0.05 * (hi - lo);
            point.push(lo + inset + (hi - lo - 2.0 * inset) * r);
        }
        out.push(point);
    }
    out
}

pub fn is_signature_failure(err: &ManifestError) -> bool {
    matches!(
        err,
        ManifestError::Signature(
            LinalgError::NoConsistentSignature { .. } | LinalgError::AmbiguousSignature { .. }
        )
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
name = "toy"

[ambient]
dim = 3
index = 1
timelike_positions = [1]

[params]
count = 2
domain = [[0.1, 1.0], [0.1, 1.0]]

[embedding]
components = ["t1 + t2", "t1 + t2", "t1 - t2"]

[structure]
matrix = [
    ["sigma", 0, 0],
    [0, "sigma", 0],
    [0, 0, "3 - sigma"],
]

[connection]
l = 1.0
m = 0.5
eta = [0.0, 0.0, 1.0]
"#;

    #[test]
    fn loads_toy_manifest() {
        let loaded = load_manifest(TOY, "fallback").unwrap();
        assert_eq!(loaded.name, "toy");
        assert_eq!(loaded.spec.ambient_dim, 3);
        assert_eq!(loaded.spec.metric.timelike_positions(), vec![0]);
        assert!(loaded.notes.is_empty());
        assert!((loaded.spec.bronze.structure_residual()) < 1e-12);
    }

    #[test]
    fn infers_signature_from_claimed_radical() {
        // Tangent frame is (sqrt2,1,1,0), (0,1,-1,0), (0,0,0,1); the first
        // direction is null and radical exactly when coordinate 1 carries
        // the minus sign, so the signature is uniquely inferable.
        let direct = r#"
[ambient]
dim = 4
index = 1
stated_timelike_positions = [2]

[params]
count = 3
domain = [[0.1, 1.0], [0.1, 1.0], [0.1, 1.0]]

[embedding]
components = ["sqrt(2) * t1", "t1 + t2", "t1 - t2", "t3"]

[structure]
matrix = [
    ["sigma", 0, 0, 0],
    [0, "sigma", 0, 0],
    [0, 0, "sigma", 0],
    [0, 0, 0, "3 - sigma"],
]

[connection]
l = 1.0
m = 0.0
eta = [0.0, 0.0, 0.0, 1.0]

[claimed]
rad_frame_indices = [1]
rad_dim = 1
"#;
        let loaded = load_manifest(direct, "inferred").unwrap();
        assert_eq!(loaded.spec.metric.timelike_positions(), vec![0]);
        assert_eq!(loaded.notes.len(), 2); // one inference note, one discrepancy
        assert!(loaded.notes[1].contains("disagree"));
    }

    #[test]
    fn rejects_bad_structure_matrix() {
        let text = TOY.replace("\"3 - sigma\"", "2.0");
        let err = load_manifest(&text, "bad").unwrap_err();
        assert!(matches!(err, ManifestError::Validation(_)));
    }

    #[test]
    fn rejects_wrong_embedding_arity() {
        let text = TOY.replace("\"t1 - t2\"]", "\"t3\"]");
        let err = load_manifest(&text, "bad").unwrap_err();
        assert!(matches!(err, ManifestError::Expr { .. }));
    }

    #[test]
    fn halton_is_deterministic_and_inset() {
        let loaded = load_manifest(TOY, "toy").unwrap();
        let a = halton_points(&loaded.spec, 50, 7);
        let b = halton_points(&loaded.spec, 50, 7);
        assert_eq!(a, b);
        let c = halton_points(&loaded.spec, 50, 8);
        assert_ne!(a, c);
        for p in &a {
            for (x, (lo, hi)) in p.iter().zip(&loaded.spec.domain) {
                let inset = 0.05 * (hi - lo);
                assert!(*x >= lo + inset - 1e-12 && *x <= hi - inset + 1e-12);
            }
        }
    }
}
