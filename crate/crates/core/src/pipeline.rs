//! End-to-end selection: graph, representative and event selection, budget.

use std::fmt;
use std::time::Instant;

use serde::{Serialize, Serializer};

use crate::budget::{finalize_selection, importance_scores, ImportanceSource, Provenance, Selection};
use crate::dets::{resolve_threshold, select_event_tokens, temporal_diff_profile, DiffThresholdMode, FrameDiff};
use crate::error::{Error, ErrorClass, Result};
use crate::graph::{build_graph, edge_stats, EdgeStats, SpatioTemporalGraph};
use crate::grid::{validate_grid, GridDiagnostics, TokenGrid};
use crate::srts::{
    centrality_scores_with_norms, default_cap, enforce_size_cap, select_representatives,
    threshold_components, CommunityPartition,
};

/// Version of the JSON documents emitted by [`SelectionResult::to_json`].
pub const SCHEMA_VERSION: u32 = 1;

pub fn version_string() -> String {
    format!("{} (schema {SCHEMA_VERSION})", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommunityCap {
    /// `ceil(sqrt(N))`.
    #[default]
    Auto,
    Limit(usize),
}

impl CommunityCap {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            CommunityCap::Auto => default_cap(n),
            CommunityCap::Limit(k) => k,
        }
    }
}

impl fmt::Display for CommunityCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommunityCap::Auto => f.write_str("auto"),
            CommunityCap::Limit(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for CommunityCap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(CommunityCap::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(CommunityCap::Limit(k)),
            _ => Err(Error::Config(format!(
                "community cap must be \"auto\" or an integer >= 1, got {s:?}"
            ))),
        }
    }
}

impl Serialize for CommunityCap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CommunityCap::Auto => serializer.serialize_str("auto"),
            CommunityCap::Limit(k) => serializer.serialize_u64(*k as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub ratio: f64,
    pub tau_sim: f64,
    pub diff_mode: DiffThresholdMode,
    pub community_cap: CommunityCap,
    pub importance: ImportanceSource,
    pub fill: bool,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            ratio: 0.3,
            tau_sim: 0.8,
            diff_mode: DiffThresholdMode::default(),
            community_cap: CommunityCap::Auto,
            importance: ImportanceSource::MeanCosineProxy,
            fill: true,
            threads: None,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!("ratio must be in (0, 1], got {}", self.ratio)));
        }
        if !(-1.0..=1.0).contains(&self.tau_sim) {
            return Err(Error::Config(format!("tau_sim must be in [-1, 1], got {}", self.tau_sim)));
        }
        self.diff_mode.validate()?;
        if self.community_cap == CommunityCap::Limit(0) {
            return Err(Error::Config("community cap must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Runs `f` on a rayon pool sized by [`SelectionConfig::threads`].
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<(T, usize)> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
        let threads = pool.current_num_threads();
        Ok((pool.install(f), threads))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Load,
    Graph,
    Srts,
    Dets,
    Importance,
    Budget,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Graph => "graph",
            Stage::Srts => "srts",
            Stage::Dets => "dets",
            Stage::Importance => "importance",
            Stage::Budget => "budget",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

/// An [`Error`] tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageError {
    pub fn class(&self) -> ErrorClass {
        self.error.class()
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub ratio: f64,
    pub tau_sim: f64,
    pub diff_mode: DiffThresholdMode,
    pub tau_diff_resolved: f64,
    pub community_cap: CommunityCap,
    pub community_cap_resolved: usize,
    pub importance: ImportanceSource,
    pub fill: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub threads: usize,
    pub graph_ms: f64,
    pub srts_ms: f64,
    pub dets_ms: f64,
    pub budget_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineStats {
    pub communities: usize,
    pub components: usize,
    pub rep_count: usize,
    pub event_count: usize,
    pub overlap_count: usize,
    pub candidate_count: usize,
    pub dropped_count: usize,
    pub fill_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub schema_version: u32,
    pub n: usize,
    pub n_target: usize,
    pub config: ConfigEcho,
    pub indices: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub stats: PipelineStats,
    pub timing: Timing,
}

impl SelectionResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection result serializes")
    }

    /// JSON with the `timing` section removed; identical inputs and
    /// configuration give identical bytes regardless of thread count.
    pub fn to_json_without_timing(&self) -> String {
        let mut value = serde_json::to_value(self).expect("selection result serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string_pretty(&value).expect("selection result serializes")
    }
}

/// Intermediate sets produced on a prebuilt graph.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub components: CommunityPartition,
    pub communities: CommunityPartition,
    pub centrality: Vec<f64>,
    pub representatives: Vec<usize>,
    pub events: Vec<usize>,
    pub tau_diff: f64,
    pub cap: usize,
    pub selection: Selection,
    pub srts_ms: f64,
    pub dets_ms: f64,
    pub budget_ms: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Representative selection, event selection and budget on an existing
/// graph, with precomputed importance scores. Runs on the current pool.
pub fn select_on_graph(
    grid: &TokenGrid,
    graph: &SpatioTemporalGraph,
    config: &SelectionConfig,
    importance: &[f64],
) -> std::result::Result<StageOutput, StageError> {
    config.validate().at(Stage::Config)?;
    let n = grid.len();

    let t = Instant::now();
    let cap = config.community_cap.resolve(n);
    let components = threshold_components(graph, config.tau_sim);
    let communities = enforce_size_cap(&components, graph, cap).at(Stage::Srts)?;
    let centrality = centrality_scores_with_norms(grid, &communities, graph.norms());
    let representatives =
        select_representatives(&communities, &centrality, config.ratio).at(Stage::Srts)?;
    let srts_ms = ms(t);

    let t = Instant::now();
    let tau_diff = resolve_threshold(config.diff_mode, graph).at(Stage::Dets)?;
    let events = select_event_tokens(graph, tau_diff);
    let dets_ms = ms(t);

    let t = Instant::now();
    let selection = finalize_selection(
        n,
        config.ratio,
        &representatives,
        &events,
        importance,
        config.fill,
    )
    .at(Stage::Budget)?;
    let budget_ms = ms(t);

    Ok(StageOutput {
        components,
        communities,
        centrality: centrality.0,
        representatives,
        events,
        tau_diff,
        cap,
        selection,
        srts_ms,
        dets_ms,
        budget_ms,
    })
}

/// Runs the whole pipeline on a pool sized by `config.threads`.
pub fn run(grid: &TokenGrid, config: &SelectionConfig) -> std::result::Result<SelectionResult, StageError> {
    config.validate().at(Stage::Config)?;
    let (result, threads) = config
        .install(|| -> std::result::Result<_, StageError> {
            let start = Instant::now();
            let t = Instant::now();
            let graph = build_graph(grid).at(Stage::Graph)?;
            let graph_ms = ms(t);
            let t = Instant::now();
            let importance = importance_scores(grid, &config.importance).at(Stage::Importance)?;
            let importance_ms = ms(t);
            let out = select_on_graph(grid, &graph, config, &importance)?;
            Ok((out, graph_ms, importance_ms, ms(start)))
        })
        .at(Stage::Config)?;
    let (out, graph_ms, importance_ms, total_ms) = result?;

    let selection = out.selection;
    Ok(SelectionResult {
        schema_version: SCHEMA_VERSION,
        n: selection.n,
        n_target: selection.n_target,
        config: ConfigEcho {
            ratio: config.ratio,
            tau_sim: config.tau_sim,
            diff_mode: config.diff_mode,
            tau_diff_resolved: out.tau_diff,
            community_cap: config.community_cap,
            community_cap_resolved: out.cap,
            importance: config.importance.clone(),
            fill: config.fill,
        },
        stats: PipelineStats {
            communities: out.communities.community_count(),
            components: out.components.community_count(),
            rep_count: selection.counts.rep_count,
            event_count: selection.counts.event_count,
            overlap_count: selection.counts.overlap_count,
            candidate_count: selection.counts.candidate_count,
            dropped_count: selection.counts.dropped_count,
            fill_count: selection.counts.fill_count,
        },
        indices: selection.indices,
        provenance: selection.provenance,
        timing: Timing {
            threads,
            graph_ms,
            srts_ms: out.srts_ms,
            dets_ms: out.dets_ms,
            budget_ms: out.budget_ms + importance_ms,
            total_ms,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub count: usize,
    pub singletons: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub mean_size: f64,
    /// Up to ten largest sizes, descending.
    pub largest: Vec<usize>,
}

impl PartitionSummary {
    pub fn of(partition: &CommunityPartition) -> Self {
        let mut sizes: Vec<usize> = partition.sizes().collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        PartitionSummary {
            count: sizes.len(),
            singletons: sizes.iter().filter(|&&s| s == 1).count(),
            min_size: sizes.last().copied().unwrap_or(0),
            max_size: sizes.first().copied().unwrap_or(0),
            mean_size: partition.token_count() as f64 / sizes.len().max(1) as f64,
            largest: sizes.into_iter().take(10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub grid: GridDiagnostics,
    pub edges: EdgeStats,
    /// Connected components before the size cap.
    pub components: PartitionSummary,
    /// Communities after the size cap.
    pub communities: PartitionSummary,
    pub community_cap_resolved: usize,
    pub tau_sim: f64,
    pub diff_mode: DiffThresholdMode,
    pub tau_diff_resolved: f64,
    pub event_count: usize,
    pub temporal_profile: Vec<FrameDiff>,
}

/// Graph, community and temporal-difference statistics without selecting.
pub fn diagnostics(grid: &TokenGrid, config: &SelectionConfig) -> std::result::Result<Diagnostics, StageError> {
    config.validate().at(Stage::Config)?;
    let (result, _) = config
        .install(|| -> std::result::Result<_, StageError> {
            let graph = build_graph(grid).at(Stage::Graph)?;
            let cap = config.community_cap.resolve(grid.len());
            let components = threshold_components(&graph, config.tau_sim);
            let communities = enforce_size_cap(&components, &graph, cap).at(Stage::Srts)?;
            let tau_diff = resolve_threshold(config.diff_mode, &graph).at(Stage::Dets)?;
            Ok(Diagnostics {
                schema_version: SCHEMA_VERSION,
                grid: validate_grid(grid),
                edges: edge_stats(&graph),
                components: PartitionSummary::of(&components),
                communities: PartitionSummary::of(&communities),
                community_cap_resolved: cap,
                tau_sim: config.tau_sim,
                diff_mode: config.diff_mode,
                tau_diff_resolved: tau_diff,
                event_count: select_event_tokens(&graph, tau_diff).len(),
                temporal_profile: temporal_diff_profile(&graph, tau_diff),
            })
        })
        .at(Stage::Config)?;
    result
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau_sim: f64,
    pub tau_diff: f64,
    pub rep_count: usize,
    pub event_count: usize,
    pub overlap: usize,
    pub fill_count: usize,
    pub community_count: usize,
    pub component_count: usize,
    pub wall_ms: f64,
}

pub const SWEEP_CSV_HEADER: &str =
    "tau_sim,tau_diff,rep_count,event_count,overlap,fill_count,community_count,component_count,wall_ms";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3}",
            self.tau_sim,
            self.tau_diff,
            self.rep_count,
            self.event_count,
            self.overlap,
            self.fill_count,
            self.community_count,
            self.component_count,
            self.wall_ms
        )
    }
}

/// Evaluates every `(tau_sim, tau_diff)` pair, `tau_sim` outermost, with a
/// fixed difference threshold. The graph and importance are computed once.
pub fn sweep(
    grid: &TokenGrid,
    tau_sims: &[f64],
    tau_diffs: &[f64],
    base: &SelectionConfig,
) -> std::result::Result<Vec<SweepRow>, StageError> {
    if tau_sims.is_empty() || tau_diffs.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into())).at(Stage::Config);
    }
    base.validate().at(Stage::Config)?;
    let (result, _) = base
        .install(|| -> std::result::Result<_, StageError> {
            let graph = build_graph(grid).at(Stage::Graph)?;
            let importance = importance_scores(grid, &base.importance).at(Stage::Importance)?;
            let mut rows = Vec::with_capacity(tau_sims.len() * tau_diffs.len());
            for &tau_sim in tau_sims {
                for &tau_diff in tau_diffs {
                    let config = SelectionConfig {
                        tau_sim,
                        diff_mode: DiffThresholdMode::Fixed { tau_diff },
                        ..base.clone()
                    };
                    let t = Instant::now();
                    let out = select_on_graph(grid, &graph, &config, &importance)?;
                    let counts = &out.selection.counts;
                    rows.push(SweepRow {
                        tau_sim,
                        tau_diff,
                        rep_count: counts.rep_count,
                        event_count: counts.event_count,
                        overlap: counts.overlap_count,
                        fill_count: counts.fill_count,
                        community_count: out.communities.community_count(),
                        component_count: out.components.community_count(),
                        wall_ms: ms(t),
                    });
                }
            }
            Ok(rows)
        })
        .at(Stage::Config)?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;
    use crate::synthetic::{generate_synthetic, MovingPatch, SyntheticSpec};

    fn fixture() -> TokenGrid {
        let mut spec = SyntheticSpec::new(8, 6, 6, 16);
        spec.seed = 4;
        spec.cuts = vec![4];
        spec.noise = 0.02;
        spec.patches.push(MovingPatch {
            size: 2,
            start_row: 1,
            start_col: 0,
            velocity: (0, 1),
            offset: 6.0,
        });
        generate_synthetic(&spec).unwrap()
    }

    #[test]
    fn defaults_match_reference_settings() {
        let c = SelectionConfig::default();
        assert_eq!(c.ratio, 0.3);
        assert_eq!(c.tau_sim, 0.8);
        assert_eq!(c.diff_mode, DiffThresholdMode::Fixed { tau_diff: 0.2 });
        assert_eq!(c.community_cap, CommunityCap::Auto);
        assert_eq!(c.importance, ImportanceSource::MeanCosineProxy);
        assert!(c.fill);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SelectionConfig { ratio: 0.0, ..Default::default() },
            SelectionConfig { ratio: 1.01, ..Default::default() },
            SelectionConfig { tau_sim: 1.5, ..Default::default() },
            SelectionConfig { community_cap: CommunityCap::Limit(0), ..Default::default() },
            SelectionConfig { threads: Some(0), ..Default::default() },
            SelectionConfig {
                diff_mode: DiffThresholdMode::Percentile { p: 100.0 },
                ..Default::default()
            },
        ];
        for config in bad {
            assert!(matches!(config.validate(), Err(Error::Config(_))), "{config:?}");
        }
        assert!("0".parse::<CommunityCap>().is_err());
        assert_eq!("12".parse::<CommunityCap>().unwrap(), CommunityCap::Limit(12));
    }

    #[test]
    fn run_meets_budget() {
        let grid = fixture();
        for ratio in [0.3, 0.5, 1.0] {
            let config = SelectionConfig { ratio, threads: Some(2), ..Default::default() };
            let res = run(&grid, &config).unwrap();
            assert_eq!(res.indices.len(), crate::budget::retain_count(grid.len(), ratio));
            assert_eq!(res.indices.len(), res.provenance.len());
        }
    }

    #[test]
    fn json_schema_fields() {
        let res = run(&fixture(), &SelectionConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.to_json()).unwrap();
        for key in ["schema_version", "n", "n_target", "config", "indices", "provenance", "stats", "timing"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for key in ["communities", "rep_count", "event_count", "fill_count"] {
            assert!(v["stats"].get(key).is_some(), "missing stats.{key}");
        }
        assert_eq!(v["config"]["diff_mode"]["mode"], "fixed");
        assert_eq!(v["config"]["community_cap"], "auto");
        assert_eq!(v["config"]["importance"], "proxy");
        let tags: Vec<&str> = v["provenance"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
        assert!(tags.iter().all(|t| ["rep", "event", "both", "fill"].contains(t)));
        assert!(!res.to_json_without_timing().contains("timing"));
    }

    #[test]
    fn single_frame_percentile_names_stage() {
        let grid = TokenGrid::new(GridShape::new(1, 2, 2, 2).unwrap(), vec![1.0; 8]).unwrap();
        let config = SelectionConfig {
            diff_mode: DiffThresholdMode::Percentile { p: 95.0 },
            ..Default::default()
        };
        let err = run(&grid, &config).unwrap_err();
        assert_eq!(err.stage, Stage::Dets);
        assert_eq!(err.class(), ErrorClass::Validation);
        assert!(err.to_string().starts_with("dets stage failed"));
    }

    #[test]
    fn diagnostics_on_identical_tokens() {
        let grid = TokenGrid::new(GridShape::new(2, 2, 2, 3).unwrap(), vec![1.0; 24]).unwrap();
        let d = diagnostics(&grid, &SelectionConfig::default()).unwrap();
        assert_eq!(d.components.count, 1);
        assert_eq!(d.components.max_size, 8);
        assert_eq!(d.communities.count, 3);
        assert_eq!(d.community_cap_resolved, 3);
    }

    #[test]
    fn sweep_shape() {
        let grid = fixture();
        let rows = sweep(&grid, &[0.6, 0.8], &[0.1, 0.2, 0.3], &SelectionConfig::default()).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].tau_sim, rows[0].tau_diff), (0.6, 0.1));
        assert_eq!((rows[5].tau_sim, rows[5].tau_diff), (0.8, 0.3));
        assert!(sweep(&grid, &[], &[0.2], &SelectionConfig::default()).is_err());
    }
}
