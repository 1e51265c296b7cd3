use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use crate::bias::bias_tables;
use crate::disparity::{
    atkinson_table, composition_tables, gap_table, state_table, threshold_table, Skipped,
};
use crate::exposure::{
    compute_group_exposures, compute_hw_exposures, hw_blend, resolve_tracts, ExposureRecord,
    GroupExposures, Group, HwExposures, Locus, OdPopulation, ResolvedTract, Stratum,
};
use crate::geojson::{load_polygons, load_tracts};
use crate::ingest::{
    aggregate_od, aggregate_to_tracts, read_area_table, read_od_table, validate_table, GroupSchema,
    OdMatrix, Role, WorkerTable,
};
use crate::io::{open_maybe_gz, sha256_bytes, sha256_file};
use crate::raster::ConcentrationGrid;
use crate::report;
use crate::zonal::{build_tract_surface, TractSurface, UrbanAreas, UrbanMask};

use super::{PipelineError, RunConfig, RunManifest, Stage, StageRecord};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run only this stage and its prerequisites.
    pub target: Option<Stage>,
    /// Overrides the configured thread count.
    pub threads: Option<usize>,
    /// Overrides the configured output directory.
    pub output_dir: Option<PathBuf>,
}

/// Validates the config, executes the planned stages and writes reports
/// plus `manifest.json` to the output directory.
pub fn run(config: &RunConfig, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    config.validate(opts.target)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads.or(config.threads) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    let out = opts.output_dir.clone().unwrap_or_else(|| config.output_path());
    pool.install(|| Runner::new(config, out, config.plan(opts.target)).execute())
}

#[derive(Default)]
struct YearTables {
    rac: Option<WorkerTable>,
    wac: Option<WorkerTable>,
    od: Option<OdMatrix>,
}

#[derive(Default)]
struct YearExposure {
    rac: Option<GroupExposures>,
    wac: Option<GroupExposures>,
    od: Option<HwExposures>,
}

struct Runner<'c> {
    config: &'c RunConfig,
    out: PathBuf,
    plan: BTreeSet<Stage>,
    strata: Vec<Stratum>,
    manifest: RunManifest,
    rows: BTreeMap<String, usize>,
}

impl<'c> Runner<'c> {
    fn new(config: &'c RunConfig, out: PathBuf, plan: BTreeSet<Stage>) -> Self {
        Runner {
            config,
            out,
            plan,
            strata: config.strata_list(),
            manifest: RunManifest::default(),
            rows: BTreeMap::new(),
        }
    }

    fn emit<F>(&mut self, name: &str, rows: usize, write: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| PipelineError::Output(format!("{name}: {e}")))?;
        let path = self.out.join(name);
        std::fs::write(&path, &buf).map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))?;
        self.manifest.outputs.insert(name.to_string(), sha256_bytes(&buf));
        self.rows.insert(name.to_string(), rows);
        Ok(())
    }

    fn finish_stage(&mut self, stage: Stage, started: Instant) {
        self.manifest.stages.push(StageRecord {
            stage,
            rows: std::mem::take(&mut self.rows),
            seconds: started.elapsed().as_secs_f64(),
        });
        tracing::info!(stage = stage.as_str(), seconds = started.elapsed().as_secs_f64(), "stage finished");
    }

    fn warn_skipped(&mut self, stage: Stage, skipped: Vec<Skipped>) {
        self.manifest
            .warnings
            .extend(skipped.into_iter().map(|s| format!("{stage}: {}: {}", s.what, s.reason)));
    }

    fn execute(mut self) -> Result<RunManifest, PipelineError> {
        let cfg = self.config;
        self.manifest.version = env!("CARGO_PKG_VERSION").to_string();
        let canonical = serde_json::to_vec(cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
        self.manifest.config_hash = sha256_bytes(&canonical);
        for p in cfg.inputs(&self.plan) {
            let full = cfg.resolve(&p);
            let sum = sha256_file(&full).map_err(|e| PipelineError::Config(format!("{}: {e}", full.display())))?;
            self.manifest.inputs.insert(p.display().to_string(), sum);
        }
        std::fs::create_dir_all(&self.out)
            .map_err(|e| PipelineError::Output(format!("{}: {e}", self.out.display())))?;

        let tables = if self.plan.contains(&Stage::Ingest) {
            self.ingest()?
        } else {
            BTreeMap::new()
        };
        let (surfaces, mask) = if self.plan.contains(&Stage::Surface) {
            self.surface()?
        } else {
            (BTreeMap::new(), None)
        };
        let exposures = if self.plan.contains(&Stage::Exposure) {
            self.exposure(&tables, &surfaces, mask.as_ref())?
        } else {
            BTreeMap::new()
        };
        if self.plan.contains(&Stage::Disparity) {
            self.disparity(&tables, &surfaces, mask.as_ref(), &exposures)?;
        }
        if self.plan.contains(&Stage::Bias) {
            self.bias(&tables, &surfaces, mask.as_ref())?;
        }

        let path = self.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| PipelineError::Output(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))?;
        Ok(self.manifest)
    }

    fn ingest(&mut self) -> Result<BTreeMap<i32, YearTables>, PipelineError> {
        let started = Instant::now();
        let cfg = self.config;
        let area = cfg.area_schemas();
        let od_schemas = cfg.od_schemas();
        let mut out = BTreeMap::new();
        for &year in &cfg.years {
            let mut t = YearTables::default();
            for (role, files) in [(Role::Residence, cfg.rac.get(&year)), (Role::Workplace, cfg.wac.get(&year))] {
                let Some(files) = files.filter(|f| !f.is_empty()) else {
                    continue;
                };
                let table = load_area(cfg, files, role, year, &area)?;
                let report = validate_table(&table, &area);
                for v in &report.violations {
                    self.manifest.warnings.push(format!(
                        "ingest: {year} {} tract {} violates {:?}",
                        role.key_column(),
                        v.geoid,
                        v.characteristics()
                    ));
                }
                let (name, slot) = match role {
                    Role::Residence => (format!("rac_tracts_{year}.csv"), &mut t.rac),
                    Role::Workplace => (format!("wac_tracts_{year}.csv"), &mut t.wac),
                };
                let n = table.rows().len();
                self.emit(&name, n, |w| table.write_csv(w))?;
                *slot = Some(table);
            }
            if let Some(files) = cfg.od.get(&year).filter(|f| !f.is_empty()) {
                let m = load_od(cfg, files, year, &od_schemas)?;
                let n = m.entries().len();
                self.emit(&format!("od_tracts_{year}.csv"), n, |w| m.write_csv(w))?;
                t.od = Some(m);
            }
            out.insert(year, t);
        }
        self.finish_stage(Stage::Ingest, started);
        Ok(out)
    }

    fn surface(&mut self) -> Result<(BTreeMap<i32, TractSurface>, Option<UrbanMask>), PipelineError> {
        let started = Instant::now();
        let cfg = self.config;
        let tracts_path = cfg.resolve(&cfg.tracts);
        let tracts = load_tracts(&tracts_path)
            .map_err(|e| PipelineError::stage(Stage::Surface, cfg.tracts.display().to_string(), e))?;
        let mask = match &cfg.urban_areas {
            Some(p) => {
                let polys = load_polygons(&cfg.resolve(p))
                    .map_err(|e| PipelineError::stage(Stage::Surface, p.display().to_string(), e))?;
                let m = UrbanMask::build(&UrbanAreas::new(polys), &tracts)
                    .map_err(|e| PipelineError::stage(Stage::Surface, cfg.tracts.display().to_string(), e))?;
                Some(m)
            }
            None => None,
        };
        let mut surfaces = BTreeMap::new();
        for &year in &cfg.years {
            let gp = &cfg.grids[&year];
            let grid = ConcentrationGrid::load(&cfg.resolve(gp))
                .map_err(|e| PipelineError::stage(Stage::Surface, gp.display().to_string(), e))?;
            let s = build_tract_surface(&grid, &tracts, year)
                .map_err(|e| PipelineError::stage(Stage::Surface, gp.display().to_string(), e))?;
            self.manifest
                .excluded_tracts
                .insert(year, s.excluded().iter().map(|g| g.to_string()).collect());
            surfaces.insert(year, s);
        }
        let n: usize = surfaces.values().map(|s| s.entries().len()).sum();
        self.emit("surface.csv", n, |w| write_surfaces(w, &surfaces))?;
        if let Some(m) = &mask {
            self.emit("urban.csv", m.classification().len(), |w| m.write_csv(w))?;
        }
        self.finish_stage(Stage::Surface, started);
        Ok((surfaces, mask))
    }

    fn exposure(
        &mut self,
        tables: &BTreeMap<i32, YearTables>,
        surfaces: &BTreeMap<i32, TractSurface>,
        mask: Option<&UrbanMask>,
    ) -> Result<BTreeMap<i32, YearExposure>, PipelineError> {
        let started = Instant::now();
        let cfg = self.config;
        let mut out = BTreeMap::new();
        let mut records = Vec::new();
        let mut errors = Vec::new();
        for &year in &cfg.years {
            let t = &tables[&year];
            let surface = &surfaces[&year];
            let mut ye = YearExposure::default();
            for (src, table, slot) in [("rac", &t.rac, &mut ye.rac), ("wac", &t.wac, &mut ye.wac)] {
                if let Some(table) = table {
                    let g = compute_group_exposures(surface, table, mask, &self.strata)
                        .map_err(|e| PipelineError::stage(Stage::Exposure, format!("{src} {year}"), e))?;
                    self.manifest
                        .record_dropped(format!("{year}/{src}"), g.dropped.workers, g.dropped.units);
                    self.note_empty(year, src, &g.empty);
                    records.extend(g.records.iter().cloned());
                    *slot = Some(g);
                }
            }
            if let Some(od) = &t.od {
                let h = compute_hw_exposures(surface, od, cfg.hw_weights, mask, &self.strata)
                    .map_err(|e| PipelineError::stage(Stage::Exposure, format!("od {year}"), e))?;
                self.manifest
                    .record_dropped(format!("{year}/od"), h.dropped.workers, h.dropped.units);
                self.note_empty(year, "od", &h.empty);
                records.extend(h.records.iter().cloned());
                errors.extend(h.errors.iter().cloned());
                ye.od = Some(h);
            }
            out.insert(year, ye);
        }
        self.emit("exposure.csv", records.len(), |w| report::write_exposure(w, &records))?;
        if !errors.is_empty() {
            self.emit("error.csv", errors.len(), |w| report::write_errors(w, &errors))?;
        }
        self.finish_stage(Stage::Exposure, started);
        Ok(out)
    }

    fn note_empty(&mut self, year: i32, src: &str, empty: &[(Group, Stratum)]) {
        for (g, s) in empty {
            self.manifest
                .warnings
                .push(format!("exposure: {year} {src} group {g} has no workers in stratum {s}"));
        }
    }

    fn disparity(
        &mut self,
        tables: &BTreeMap<i32, YearTables>,
        surfaces: &BTreeMap<i32, TractSurface>,
        mask: Option<&UrbanMask>,
        exposures: &BTreeMap<i32, YearExposure>,
    ) -> Result<(), PipelineError> {
        let started = Instant::now();
        let cfg = self.config;
        let bin_counts = cfg.bin_counts();
        let mut gaps = Vec::new();
        let mut atk = Vec::new();
        let mut bins = Vec::new();
        let mut contrasts = Vec::new();
        let mut shares = Vec::new();
        let mut states = Vec::new();
        let mut thresholds = Vec::new();
        let mut covs = Vec::new();
        let mut skipped = Vec::new();

        for &year in &cfg.years {
            let ye = &exposures[&year];
            let t = &tables[&year];
            let surface = &surfaces[&year];

            let sources: Vec<&[ExposureRecord]> = [
                ye.rac.as_ref().map(|g| g.records.as_slice()),
                ye.wac.as_ref().map(|g| g.records.as_slice()),
                ye.od.as_ref().map(|h| h.records.as_slice()),
            ]
            .into_iter()
            .flatten()
            .collect();
            for recs in sources {
                let (g, s) = gap_table(recs);
                gaps.extend(g);
                skipped.extend(s);
                let (a, s) = atkinson_table(recs, &cfg.epsilons);
                atk.extend(a);
                skipped.extend(s);
            }

            for (table, locus) in [(&t.rac, Locus::H), (&t.wac, Locus::W)] {
                let Some(table) = table else { continue };
                let (tracts, _) = resolve_tracts(surface, table, mask);
                let comp = composition_tables(&tracts, table.layout(), year, locus, &self.strata, &bin_counts);
                bins.extend(comp.bins);
                contrasts.extend(comp.contrasts);
                shares.extend(comp.shares);
                skipped.extend(comp.skipped);
                self.unit_tables(
                    &tracts,
                    table.layout(),
                    Group::all(),
                    year,
                    locus,
                    (&mut states, &mut thresholds, &mut covs, &mut skipped),
                );
            }
            if let Some(od) = &t.od {
                let pop = OdPopulation::resolve(surface, od, mask)
                    .map_err(|e| PipelineError::stage(Stage::Disparity, format!("od {year}"), e))?;
                let units: Vec<ResolvedTract> = pop
                    .pairs
                    .iter()
                    .map(|p| ResolvedTract {
                        geoid: p.home,
                        value: hw_blend(p.h, p.w, cfg.hw_weights),
                        class: p.class,
                        counts: p.counts,
                    })
                    .collect();
                self.unit_tables(
                    &units,
                    od.layout(),
                    Group::od_all(),
                    year,
                    Locus::HW,
                    (&mut states, &mut thresholds, &mut covs, &mut skipped),
                );
            }
        }

        self.emit("gaps.csv", gaps.len(), |w| report::write_gaps(w, &gaps))?;
        self.emit("bins.csv", bins.len(), |w| report::write_bins(w, &bins))?;
        self.emit("decile_contrast.csv", contrasts.len(), |w| report::write_contrasts(w, &contrasts))?;
        self.emit("decile_shares.csv", shares.len(), |w| report::write_decile_shares(w, &shares))?;
        self.emit("atkinson.csv", atk.len(), |w| report::write_atkinson(w, &atk))?;
        self.emit("state_disparity.csv", states.len(), |w| report::write_state(w, &states))?;
        self.emit("threshold.csv", thresholds.len(), |w| report::write_threshold(w, &thresholds))?;
        self.emit("threshold_cov.csv", covs.len(), |w| report::write_threshold_cov(w, &covs))?;
        self.warn_skipped(Stage::Disparity, skipped);
        self.finish_stage(Stage::Disparity, started);
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn unit_tables(
        &self,
        units: &[ResolvedTract],
        layout: &crate::ingest::ColumnLayout,
        total: Group,
        year: i32,
        locus: Locus,
        sinks: (
            &mut Vec<crate::disparity::StateRecord>,
            &mut Vec<crate::disparity::ThresholdRecord>,
            &mut Vec<crate::disparity::CovRecord>,
            &mut Vec<Skipped>,
        ),
    ) {
        let (states, thresholds, covs, skipped) = sinks;
        match state_table(units, layout, total.clone(), year, locus) {
            Ok(s) => states.extend(s),
            Err(e) => skipped.push(Skipped {
                what: format!("state disparity {year} {locus}"),
                reason: e.to_string(),
            }),
        }
        let (q, c, s) = threshold_table(units, layout, total, year, locus, &self.strata, &self.config.thresholds);
        thresholds.extend(q);
        covs.extend(c);
        skipped.extend(s);
    }

    fn bias(
        &mut self,
        tables: &BTreeMap<i32, YearTables>,
        surfaces: &BTreeMap<i32, TractSurface>,
        mask: Option<&UrbanMask>,
    ) -> Result<(), PipelineError> {
        let started = Instant::now();
        let cfg = self.config;
        let mut bias = Vec::new();
        let mut wilcoxon = Vec::new();
        for &year in &cfg.years {
            let od = tables[&year]
                .od
                .as_ref()
                .ok_or_else(|| PipelineError::stage(Stage::Bias, format!("od {year}"), "no OD table"))?;
            let pop = OdPopulation::resolve(&surfaces[&year], od, mask)
                .map_err(|e| PipelineError::stage(Stage::Bias, format!("od {year}"), e))?;
            self.manifest
                .record_dropped(format!("{year}/od"), pop.dropped.workers, pop.dropped.units);
            let t = bias_tables(&pop, cfg.hw_weights, &self.strata);
            bias.extend(t.bias);
            wilcoxon.extend(t.wilcoxon);
            self.manifest
                .warnings
                .extend(t.skipped.into_iter().map(|(w, r)| format!("bias: {w}: {r}")));
        }
        self.emit("bias.csv", bias.len(), |w| report::write_bias(w, &bias))?;
        self.emit("wilcoxon.csv", wilcoxon.len(), |w| report::write_wilcoxon(w, &wilcoxon))?;
        self.finish_stage(Stage::Bias, started);
        Ok(())
    }
}

fn load_area(
    cfg: &RunConfig,
    files: &[PathBuf],
    role: Role,
    year: i32,
    schemas: &[GroupSchema],
) -> Result<WorkerTable, PipelineError> {
    let mut combined = None;
    for f in files {
        let name = f.display().to_string();
        let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Ingest, name.clone(), e);
        let reader = open_maybe_gz(&cfg.resolve(f)).map_err(|e| err(&e))?;
        let t = read_area_table(reader, &name, role, schemas).map_err(|e| err(&e))?;
        match &mut combined {
            None => combined = Some((t, name)),
            Some((c, _)) => c.append(t).map_err(|e| err(&e))?,
        }
    }
    let (t, name) = combined.expect("at least one file");
    aggregate_to_tracts(&t.rows, &t.layout, role, year).map_err(|e| PipelineError::stage(Stage::Ingest, label(files, &name), e))
}

fn load_od(cfg: &RunConfig, files: &[PathBuf], year: i32, schemas: &[GroupSchema]) -> Result<OdMatrix, PipelineError> {
    let mut combined = None;
    for f in files {
        let name = f.display().to_string();
        let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Ingest, name.clone(), e);
        let reader = open_maybe_gz(&cfg.resolve(f)).map_err(|e| err(&e))?;
        let t = read_od_table(reader, &name, schemas).map_err(|e| err(&e))?;
        match &mut combined {
            None => combined = Some((t, name)),
            Some((c, _)) => c.append(t).map_err(|e| err(&e))?,
        }
    }
    let (t, name) = combined.expect("at least one file");
    aggregate_od(&t.rows, &t.layout, year).map_err(|e| PipelineError::stage(Stage::Ingest, label(files, &name), e))
}

fn label(files: &[PathBuf], first: &str) -> String {
    if files.len() == 1 {
        first.to_string()
    } else {
        files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join("+")
    }
}

fn write_surfaces<W: std::io::Write>(out: W, surfaces: &BTreeMap<i32, TractSurface>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["geoid", "year", "pm25"])?;
    for (year, s) in surfaces {
        for (g, v) in s.entries() {
            w.write_record([g.as_str(), &year.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
