//! Stage I / Stage II timings against the scatter-add oracle.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::BenchSection;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f, write_csv};
use tg_core::batch::{local_load, CoefficientField};
use tg_core::mesh::{generate_grid, ElementKind, Mesh};
use tg_core::physics::Discretization;
use tg_core::reduce::{reduce_matrix, reduce_vector_batch, ScatterAddAssembler};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: &'static str,
    pub elements: usize,
    pub dofs: usize,
    pub batch: usize,
    pub nnz: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub rows: Vec<BenchRow>,
    /// Log-log slope of `reduce_matrix` time against element count.
    pub reduce_slope: f64,
    /// Log-log slope of batched load generation time against batch size.
    pub batch_slope: f64,
    /// `(elements, (Stage I + Stage II) / (Stage I + scatter-add))` per size.
    pub assembly_ratio: Vec<(usize, f64)>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Grid divisions on the unit box giving roughly `target` elements.
pub fn divisions_for(kind: ElementKind, target: usize) -> Vec<usize> {
    let t = target.max(1) as f64;
    match kind {
        ElementKind::Tri3 => vec![((t / 2.0).sqrt().round() as usize).max(1); 2],
        ElementKind::Quad4 => vec![(t.sqrt().round() as usize).max(1); 2],
        ElementKind::Tet4 => vec![((t / 6.0).cbrt().round() as usize).max(1); 3],
    }
}

fn bench_mesh(kind: ElementKind, target: usize) -> CliResult<Mesh> {
    let div = divisions_for(kind, target);
    Ok(generate_grid(kind, &vec![1.0; div.len()], &div)?)
}

/// Best of `repeats` runs; the last result is returned with the time.
fn timed<T>(repeats: usize, mut f: impl FnMut() -> CliResult<T>) -> CliResult<(T, f64)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let v = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((last.expect("at least one repeat"), best))
}

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> CoefficientField {
    CoefficientField::PerElement((0..n).map(|_| rng.gen_range(0.5..1.5)).collect())
}

fn validate(cfg: &BenchSection) -> CliResult<ElementKind> {
    let kind = ElementKind::from_name(&cfg.kind)
        .ok_or_else(|| CliError::config(format!("bench.kind {:?} is not tri3, quad4 or tet4", cfg.kind)))?;
    if cfg.elements.len() < 2 || cfg.batch_sizes.len() < 2 {
        return Err(CliError::config(
            "bench.elements and bench.batch_sizes need at least two entries for a slope fit",
        ));
    }
    if cfg.elements.contains(&0) || cfg.batch_sizes.contains(&0) || cfg.batch_elements == 0 || cfg.repeats == 0 {
        return Err(CliError::config("bench sizes, batch sizes and repeats must be >= 1"));
    }
    Ok(kind)
}

pub fn run_bench(cfg: &BenchSection, seed: u64) -> CliResult<BenchSummary> {
    let kind = validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut sizes = Vec::new();
    let mut reduce_times = Vec::new();
    let mut assembly_ratio = Vec::new();

    for &target in &cfg.elements {
        let mesh = bench_mesh(kind, target)?;
        let ne = mesh.n_elements();
        let (disc, t_setup) = timed(1, || Ok(Discretization::new(mesh.clone(), 1, false)?))?;
        let (n, nnz) = (disc.dofmap.n_dofs(), disc.routing.nnz());
        let coeff = random_field(&mut rng, ne);
        let (k_local, t_stage1) = timed(cfg.repeats, || Ok(disc.diffusion_local(&coeff)?))?;
        let (oracle, t_oracle_setup) = timed(1, || Ok(ScatterAddAssembler::new(&disc.mesh, &disc.dofmap)))?;

        // correctness gate before any timing of the reductions
        let k = reduce_matrix(&disc.routing, &k_local, true)?;
        let k_ref = oracle.assemble_matrix(&k_local, true)?;
        let same = k.pattern == k_ref.pattern
            && k.values
                .iter()
                .zip(&k_ref.values)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(CliError::VerifyFailed(format!(
                "reduce_matrix differs from scatter-add at E = {ne}"
            )));
        }
        drop((k, k_ref));

        let (_, t_stage2) = timed(cfg.repeats, || Ok(reduce_matrix(&disc.routing, &k_local, true)?))?;
        let (_, t_scatter) = timed(cfg.repeats, || Ok(oracle.assemble_matrix(&k_local, true)?))?;
        for (method, seconds) in [
            ("map_reduce_setup", t_setup),
            ("stage1", t_stage1),
            ("stage2", t_stage2),
            ("scatter_add_setup", t_oracle_setup),
            ("scatter_add", t_scatter),
        ] {
            rows.push(BenchRow {
                method,
                elements: ne,
                dofs: n,
                batch: 1,
                nnz,
                seconds,
            });
        }
        sizes.push(ne as f64);
        reduce_times.push(t_stage2);
        assembly_ratio.push((ne, (t_stage1 + t_stage2) / (t_stage1 + t_scatter)));
    }

    let mesh = bench_mesh(kind, cfg.batch_elements)?;
    let ne = mesh.n_elements();
    let max_b = *cfg.batch_sizes.iter().max().expect("validated non-empty");
    let fields: Vec<CoefficientField> = (0..max_b).map(|_| random_field(&mut rng, ne)).collect();
    let mut batch_times = Vec::new();
    for &b in &cfg.batch_sizes {
        // one routing precompute shared by the whole batch, counted in the time
        let run = || -> CliResult<(Vec<Vec<f64>>, usize, usize)> {
            let disc = Discretization::new(mesh.clone(), 1, false)?;
            let locals = fields[..b]
                .iter()
                .map(|f| {
                    let q = disc.evaluate(f, &disc.mass)?;
                    local_load(&disc.mass.geom, &disc.mass.tables, &[q])
                })
                .collect::<tg_core::Result<Vec<_>>>()?;
            let loads = reduce_vector_batch(&disc.routing, &locals)?;
            Ok((loads, disc.dofmap.n_dofs(), disc.routing.nnz()))
        };
        let ((loads, n, nnz), seconds) = timed(cfg.repeats, run)?;
        if b == max_b {
            // gate on the first member against the oracle
            let disc = Discretization::new(mesh.clone(), 1, false)?;
            let q = disc.evaluate(&fields[0], &disc.mass)?;
            let reference = ScatterAddAssembler::new(&disc.mesh, &disc.dofmap).assemble_vector(&local_load(
                &disc.mass.geom,
                &disc.mass.tables,
                &[q],
            )?)?;
            if loads[0].iter().zip(&reference).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(CliError::VerifyFailed(
                    "batched load reduction differs from scatter-add".into(),
                ));
            }
        }
        rows.push(BenchRow {
            method: "batch_load",
            elements: ne,
            dofs: n,
            batch: b,
            nnz,
            seconds,
        });
        batch_times.push(seconds);
    }
    let batches: Vec<f64> = cfg.batch_sizes.iter().map(|&b| b as f64).collect();

    Ok(BenchSummary {
        rows,
        reduce_slope: loglog_slope(&sizes, &reduce_times),
        batch_slope: loglog_slope(&batches, &batch_times),
        assembly_ratio,
    })
}

pub fn cmd_bench(cfg: &BenchSection, out: &Path, seed: u64) -> CliResult<BenchSummary> {
    let summary = run_bench(cfg, seed)?;
    let plan: Vec<Vec<String>> = summary
        .rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.elements.to_string(),
                r.dofs.to_string(),
                r.batch.to_string(),
                r.nnz.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("bench.csv"),
        &["method", "elements", "dofs", "batch", "nnz"],
        &plan,
    )?;
    let timing: Vec<Vec<String>> = summary
        .rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.elements.to_string(),
                r.dofs.to_string(),
                r.batch.to_string(),
                fmt_f(r.seconds),
            ]
        })
        .collect();
    write_csv(
        &out.join("bench_timing.csv"),
        &["method", "elements", "dofs", "batch", "seconds"],
        &timing,
    )?;
    let mut fits = vec![
        vec![
            "reduce_matrix_slope".to_string(),
            String::new(),
            fmt_f(summary.reduce_slope),
        ],
        vec![
            "batch_load_slope".to_string(),
            String::new(),
            fmt_f(summary.batch_slope),
        ],
    ];
    for (e, r) in &summary.assembly_ratio {
        fits.push(vec!["assembly_ratio".to_string(), e.to_string(), fmt_f(*r)]);
    }
    write_csv(
        &out.join("bench_fit_timing.csv"),
        &["quantity", "elements", "value"],
        &fits,
    )?;

    println!("reduce_matrix log-log slope in E: {:.3}", summary.reduce_slope);
    println!("batched load log-log slope in B:  {:.3}", summary.batch_slope);
    for (e, r) in &summary.assembly_ratio {
        println!("E = {e:>8}: map-reduce / scatter-add assembly time = {r:.3}");
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.9)).collect();
        assert!((loglog_slope(&xs, &ys) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn divisions_hit_targets() {
        assert_eq!(divisions_for(ElementKind::Tri3, 1_000_000), vec![707, 707]);
        assert_eq!(divisions_for(ElementKind::Quad4, 10_000), vec![100, 100]);
        assert_eq!(divisions_for(ElementKind::Tet4, 6_000), vec![10, 10, 10]);
    }

    #[test]
    fn small_bench_runs() {
        let cfg = BenchSection {
            elements: vec![200, 800],
            batch_sizes: vec![1, 4],
            batch_elements: 200,
            repeats: 1,
            ..BenchSection::default()
        };
        let s = run_bench(&cfg, 1).unwrap();
        assert_eq!(s.rows.len(), 2 * 5 + 2);
        assert!(s.reduce_slope.is_finite() && s.batch_slope.is_finite());
    }

    #[test]
    fn single_size_is_rejected() {
        let cfg = BenchSection {
            elements: vec![100],
            ..BenchSection::default()
        };
        assert_eq!(run_bench(&cfg, 0).unwrap_err().exit_code(), 2);
    }
}
