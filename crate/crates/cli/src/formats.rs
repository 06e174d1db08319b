//! On-disk formats: game files, scenario files, controller files, reports,
//! trajectory CSV, and the output manifest.
//!
//! Everything structured is JSON. Floating-point numbers are written as
//! shortest round-trip decimals, so `read(write(x)) == x` bit-exactly; CSV
//! output uses 12 significant digits with `.` as the decimal point regardless
//! of locale.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hollab_core::dynamics::{Controller, DynamicsKind, HigherOrderState, PlayerDynamics};
use hollab_core::game::{Edge, Game, MixedProfile, Payoff};
use hollab_core::integrate::Trajectory;

/// A game file plus the optional positivity offset used by bandit runs.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub game: Game,
    pub positivity_offset: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GameFile {
    players: usize,
    actions: Vec<usize>,
    encoding: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    utilities: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<EdgeFile>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    positivity_offset: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeFile {
    from: usize,
    to: usize,
    matrix: Vec<Vec<f64>>,
}

pub fn read_game(path: &Path) -> Result<LoadedGame> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading game file {}", path.display()))?;
    let file: GameFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing game file {}", path.display()))?;
    if file.actions.len() != file.players {
        bail!(
            "{}: field `actions` has {} entries but `players` = {}",
            path.display(),
            file.actions.len(),
            file.players
        );
    }
    let game = match file.encoding.as_str() {
        "tensor" => {
            let utilities = file
                .utilities
                .with_context(|| format!("{}: tensor encoding needs `utilities`", path.display()))?;
            Game::tensor(file.actions, utilities)
                .with_context(|| format!("{}: invalid `utilities`", path.display()))?
        }
        "polymatrix" => {
            let edges = file
                .edges
                .with_context(|| format!("{}: polymatrix encoding needs `edges`", path.display()))?;
            let edges = edges
                .into_iter()
                .map(|e| {
                    let rows = e.matrix.len();
                    let cols = e.matrix.first().map_or(0, Vec::len);
                    if e.matrix.iter().any(|r| r.len() != cols) {
                        bail!("edge ({}, {}): ragged `matrix`", e.from, e.to);
                    }
                    Ok(Edge {
                        from: e.from,
                        to: e.to,
                        matrix: DMatrix::from_row_slice(
                            rows,
                            cols,
                            &e.matrix.concat(),
                        ),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Game::polymatrix(file.actions, edges)
                .with_context(|| format!("{}: invalid `edges`", path.display()))?
        }
        other => bail!(
            "{}: field `encoding` must be \"tensor\" or \"polymatrix\", got {other:?}",
            path.display()
        ),
    };
    Ok(LoadedGame { game, positivity_offset: file.positivity_offset })
}

pub fn write_game(game: &Game, positivity_offset: Option<f64>, path: &Path) -> Result<()> {
    let (encoding, utilities, edges) = match game.payoff() {
        Payoff::Tensor(u) => ("tensor".to_string(), Some(u.clone()), None),
        Payoff::Polymatrix(e) => (
            "polymatrix".to_string(),
            None,
            Some(
                e.iter()
                    .map(|edge| EdgeFile {
                        from: edge.from,
                        to: edge.to,
                        matrix: matrix_rows(&edge.matrix),
                    })
                    .collect(),
            ),
        ),
    };
    let file = GameFile {
        players: game.players(),
        actions: game.actions().to_vec(),
        encoding,
        utilities,
        edges,
        positivity_offset,
    };
    write_json(path, &file)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn profile_rows(p: &MixedProfile) -> Vec<Vec<f64>> {
    p.parts().iter().map(|x| x.iter().copied().collect()).collect()
}

pub fn read_profile(rows: &[Vec<f64>]) -> Result<MixedProfile> {
    Ok(MixedProfile::from_rows(rows)?)
}

/// Controller file: one `(E, F, G, H)` quadruple per player, row-major.
#[derive(Debug, Serialize, Deserialize)]
pub struct ControllerFile {
    pub controllers: std::collections::BTreeMap<String, ControllerEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerEntry {
    /// Controller order.
    pub d: usize,
    /// Player action count (fixes all matrix shapes).
    pub k: usize,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl ControllerEntry {
    pub fn from_controller(c: &Controller, k: usize) -> Self {
        let flat = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec(); // row-major
        Self {
            d: c.order(),
            k,
            e: flat(&c.e),
            f: flat(&c.f),
            g: flat(&c.g),
            h: flat(&c.h),
        }
    }

    pub fn to_controller(&self) -> Result<Controller> {
        let km1 = self.k - 1;
        let shape = |data: &[f64], r: usize, c: usize, name: &str| -> Result<DMatrix<f64>> {
            if data.len() != r * c {
                bail!("controller field `{name}` has {} entries, expected {r}x{c}", data.len());
            }
            Ok(DMatrix::from_row_slice(r, c, data))
        };
        Ok(Controller::new(
            shape(&self.e, self.d, self.d, "e")?,
            shape(&self.f, self.d, km1, "f")?,
            shape(&self.g, km1, self.d, "g")?,
            shape(&self.h, km1, km1, "h")?,
        )?)
    }
}

pub fn write_controllers(controllers: &[Controller], actions: &[usize], path: &Path) -> Result<()> {
    let map = controllers
        .iter()
        .zip(actions)
        .enumerate()
        .map(|(i, (c, &k))| (i.to_string(), ControllerEntry::from_controller(c, k)))
        .collect();
    write_json(path, &ControllerFile { controllers: map })
}

pub fn read_controllers(path: &Path, players: usize) -> Result<Vec<Controller>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading controller file {}", path.display()))?;
    let file: ControllerFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing controller file {}", path.display()))?;
    (0..players)
        .map(|i| {
            file.controllers
                .get(&i.to_string())
                .with_context(|| format!("{}: missing controller for player {i}", path.display()))?
                .to_controller()
        })
        .collect()
}

/// Per-player dynamics entry of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsSpec {
    /// "replicator" | "target_gradient" | "edl"
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControllerSpec {
    Template {
        template: String,
        gamma: f64,
        lambda: f64,
    },
    Inline(ControllerEntry),
}

impl DynamicsSpec {
    pub fn family(&self) -> Result<DynamicsKind> {
        match self.kind.as_str() {
            "replicator" => Ok(DynamicsKind::Replicator),
            "target_gradient" => Ok(DynamicsKind::TargetGradient),
            "edl" => Ok(DynamicsKind::Edl),
            other => bail!("unknown dynamics kind {other:?} (expected replicator, target_gradient, or edl)"),
        }
    }

    pub fn to_player_dynamics(&self, k: usize) -> Result<PlayerDynamics> {
        let base = PlayerDynamics { kind: self.family()?, controller: None };
        match &self.controller {
            None => Ok(base),
            Some(spec) => {
                let ctrl = spec.build(k)?;
                Ok(hollab_core::dynamics::higher_order_wrap(base, ctrl, k)?)
            }
        }
    }
}

impl ControllerSpec {
    pub fn build(&self, k: usize) -> Result<Controller> {
        match self {
            ControllerSpec::Template { template, gamma, lambda } => {
                if template != "anticipatory" {
                    bail!("unknown controller template {template:?}");
                }
                Ok(hollab_core::dynamics::anticipatory_template(*gamma, *lambda, k)?)
            }
            ControllerSpec::Inline(entry) => {
                if entry.k != k {
                    bail!("inline controller is for k = {}, player has k = {k}", entry.k);
                }
                entry.to_controller()
            }
        }
    }
}

/// Scenario file driving the synthesize / simulate / bandit / abr /
/// robustness commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Path to the game file, relative to the scenario file.
    pub game: String,
    /// "find" or an explicit profile (rows of probabilities).
    #[serde(default = "default_equilibrium")]
    pub equilibrium: serde_json::Value,
    pub dynamics: Vec<DynamicsSpec>,
    /// Optional controller file overriding the per-player controller specs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Z0Spec>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit: Option<BanditSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abr: Option<AbrSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessSpec>,
}

fn default_equilibrium() -> serde_json::Value {
    serde_json::Value::String("find".into())
}
fn default_dt() -> f64 {
    0.01
}
fn default_t_final() -> f64 {
    200.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Z0Spec {
    pub v: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<usize>>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_random_starts")]
    pub random_starts: usize,
    #[serde(default = "default_template")]
    pub template: String,
}

fn default_margin() -> f64 {
    0.01
}
fn default_budget() -> usize {
    20_000
}
fn default_random_starts() -> usize {
    8
}
fn default_template() -> String {
    "free".into()
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            orders: None,
            margin: default_margin(),
            budget: default_budget(),
            random_starts: default_random_starts(),
            template: default_template(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BanditSpec {
    /// "standard" | "higher" | "modified"
    pub variant: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_init_radius")]
    pub init_radius: f64,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
}

fn default_epsilon() -> f64 {
    0.01
}
fn default_horizon() -> usize {
    100_000
}
fn default_runs() -> usize {
    100
}
fn default_init_radius() -> f64 {
    0.05
}
fn default_convergence_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbrSpec {
    pub player: usize,
    pub p_bar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_abr_t")]
    pub t_final: f64,
}

fn default_abr_t() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessSpec {
    pub deltas: Vec<f64>,
    #[serde(default = "default_samples_per_delta")]
    pub samples_per_delta: usize,
}

fn default_samples_per_delta() -> usize {
    20
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let s: Scenario = serde_json::from_str(&text)
        .with_context(|| format!("parsing scenario {}", path.display()))?;
    Ok(s)
}

/// Resolves a path relative to the scenario file location.
pub fn resolve_relative(scenario_path: &Path, target: &str) -> PathBuf {
    let t = Path::new(target);
    if t.is_absolute() {
        t.to_path_buf()
    } else {
        scenario_path.parent().unwrap_or(Path::new(".")).join(t)
    }
}

/// Writes a trajectory as CSV: `t, x_1_1..x_n_kn, v_*, xi_*`, 12 significant
/// digits, locale-independent.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    let n = traj.layout.actions.len();
    for (i, &k) in traj.layout.actions.iter().enumerate() {
        for a in 0..k {
            out.push_str(&format!(",x_{}_{}", i + 1, a + 1));
        }
    }
    for (i, &k) in traj.layout.actions.iter().enumerate() {
        for a in 0..(k - 1) {
            out.push_str(&format!(",v_{}_{}", i + 1, a + 1));
        }
    }
    for (i, &d) in traj.layout.aux.iter().enumerate() {
        for a in 0..d {
            out.push_str(&format!(",xi_{}_{}", i + 1, a + 1));
        }
    }
    out.push('\n');
    let _ = n;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt_sig(*t));
        let flat = traj.layout.flatten(state);
        for v in flat.iter() {
            out.push(',');
            out.push_str(&fmt_sig(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing trajectory {}", path.display()))
}

/// 12-significant-digit scientific notation (always '.' as decimal point).
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.11e}")
}

/// Serializes a state for JSON reports.
pub fn state_rows(s: &HigherOrderState) -> serde_json::Value {
    serde_json::json!({
        "x": s.x.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "v": s.v.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "xi": s.xi.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Writes pretty JSON (trailing newline included).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {}", path.display()))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes `manifest.json` listing every produced file with its SHA-256.
pub fn write_manifest(out_dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Entry {
        path: String,
        sha256: String,
    }
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(f).with_context(|| format!("hashing {}", f.display()))?;
        let digest = Sha256::digest(&bytes);
        let rel = f.strip_prefix(out_dir).unwrap_or(f);
        entries.push(Entry {
            path: rel.to_string_lossy().into_owned(),
            sha256: format!("{digest:x}"),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let path = out_dir.join("manifest.json");
    write_json(&path, &serde_json::json!({ "files": entries }))?;
    Ok(path)
}
