//! The commands behind each subcommand, split into pure computations and the
//! thin wrappers that read and write files.

use std::io::Write;
use std::path::Path;

use curvecut_core::energy::curvature_breakdown;
use curvecut_core::geometry::{
    circle_csv, circle_experiment, fired_area_a, raster_area, taylor_area, CircleConfig,
};
use curvecut_core::io::{read_image, read_labeling, read_mask, write_labeling, write_response_png};
use curvecut_core::optimizer::lsa_tr;
use curvecut_core::{
    assemble_energy, brute_force, curvature_energy, gaussian_data_term, icm, response_map,
    GridLabeling, ImageGrid, NeighborhoodSystem, OptimizerReport,
};

use crate::config::{OptimizerKind, RunConfig};
use crate::exit::{CliError, CliResult};

/// Outcome of a segmentation or inpainting run.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labeling: GridLabeling,
    pub energy: f64,
    pub data: f64,
    /// Curvature part including the factor lambda.
    pub curvature: f64,
    pub optimizer: OptimizerReport,
}

impl Segmentation {
    pub fn report_csv(&self, timing: bool) -> String {
        let mut out = String::from("energy,data,curvature,iterations");
        if timing {
            out.push_str(",seconds");
        }
        out.push('\n');
        out.push_str(&format!(
            "{},{},{},{}",
            self.energy, self.data, self.curvature, self.optimizer.iterations
        ));
        if timing {
            out.push_str(&format!(",{}", self.optimizer.seconds));
        }
        out.push('\n');
        out
    }
}

pub fn neighborhood(cfg: &RunConfig) -> CliResult<NeighborhoodSystem> {
    Ok(NeighborhoodSystem::build(
        cfg.clique_radius,
        cfg.neighborhood_mode()?,
    )?)
}

/// Segments `img`, treating pixels set in `mask` as unknown.
pub fn segment_image(
    img: &ImageGrid,
    mask: Option<&GridLabeling>,
    cfg: &RunConfig,
) -> CliResult<Segmentation> {
    cfg.validate()?;
    let img = img.upscale(cfg.scale)?;
    let mut field = gaussian_data_term(&img, cfg.mean_fg, cfg.mean_bg, cfg.variance)?;
    if let Some(mask) = mask {
        let mask = upscale_labeling(mask, cfg.scale)?;
        field = field.apply_inpainting_mask(&mask)?;
    }
    let ns = neighborhood(cfg)?;
    let qpb = assemble_energy(&field, cfg.lambda, &ns)?;
    let init = field.argmin();
    let optimizer = match cfg.optimizer {
        OptimizerKind::LsaTr => lsa_tr(&qpb, &init, &cfg.trust_region())?,
        OptimizerKind::Icm => icm(&qpb, &init)?,
        OptimizerKind::Brute => {
            let (labeling, energy) = brute_force(&qpb)?;
            OptimizerReport {
                labeling,
                energy,
                iterations: 0,
                seconds: 0.0,
                trace: Vec::new(),
            }
        }
    };
    let labeling = optimizer.labeling.clone();
    let data = field.evaluate(&labeling)?;
    let curvature = cfg.lambda * curvature_energy(&labeling, &ns);
    if !optimizer.energy.is_finite() {
        return Err(CliError::numerical(
            "optimizer returned a non-finite energy",
        ));
    }
    Ok(Segmentation {
        labeling,
        energy: optimizer.energy,
        data,
        curvature,
        optimizer,
    })
}

fn upscale_labeling(labeling: &GridLabeling, factor: usize) -> CliResult<GridLabeling> {
    if factor == 1 {
        return Ok(labeling.clone());
    }
    let (w, h) = labeling.dims();
    let x = labeling.labels();
    Ok(GridLabeling::from_fn(w * factor, h * factor, |i, j| {
        x[(j / factor) * w + i / factor] == 1
    })?)
}

pub fn run_segment(cfg: &RunConfig) -> CliResult<Segmentation> {
    run(cfg, None)
}

pub fn run_inpaint(cfg: &RunConfig) -> CliResult<Segmentation> {
    let path = cfg
        .mask
        .as_deref()
        .ok_or_else(|| CliError::usage("inpaint needs a mask"))?;
    let mask = read_mask(path)?;
    run(cfg, Some(&mask))
}

fn run(cfg: &RunConfig, mask: Option<&GridLabeling>) -> CliResult<Segmentation> {
    let input = required(cfg.input.as_deref(), "input image")?;
    let output = required(cfg.output.as_deref(), "output path")?;
    let img = read_image(input)?;
    let seg = segment_image(&img, mask, cfg)?;
    write_labeling(&seg.labeling, output)?;
    emit(cfg.report.as_deref(), &seg.report_csv(cfg.timing))?;
    if let Some(trace) = cfg.trace.as_deref() {
        write_text(trace, &seg.optimizer.trace_csv())?;
    }
    Ok(seg)
}

/// Per-family breakdown followed by a `total` row.
pub fn energy_csv(labeling: &GridLabeling, ns: &NeighborhoodSystem) -> String {
    let mut out = String::from("family,dx,dy,d_i,w_i,fired,energy\n");
    let mut fired = 0;
    for b in curvature_breakdown(labeling, ns) {
        let f = &b.family;
        fired += b.fired;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f.index, f.dx, f.dy, f.length, f.weight, b.fired, b.energy
        ));
    }
    out.push_str(&format!(
        "total,,,,,{},{}\n",
        fired,
        curvature_energy(labeling, ns)
    ));
    out
}

pub fn run_energy(cfg: &RunConfig) -> CliResult<String> {
    let labeling = read_labeling(required(cfg.input.as_deref(), "labeling image")?)?;
    let csv = energy_csv(&labeling, &neighborhood(cfg)?);
    emit(cfg.output.as_deref(), &csv)?;
    Ok(csv)
}

/// Writes the normalized map to `output` and the raw values to `report`.
pub fn run_response_map(cfg: &RunConfig) -> CliResult<String> {
    let labeling = read_labeling(required(cfg.input.as_deref(), "labeling image")?)?;
    let output = required(cfg.output.as_deref(), "output image")?;
    let map = response_map(&labeling, &neighborhood(cfg)?);
    write_response_png(&map, output)?;
    let csv = map.to_csv();
    if let Some(report) = cfg.report.as_deref() {
        write_text(report, &csv)?;
    }
    Ok(csv)
}

pub fn circle_accuracy_csv(cfg: &RunConfig) -> CliResult<String> {
    cfg.validate()?;
    let circle = CircleConfig {
        center_samples: cfg.center_samples,
        seed: cfg.seed,
        grid_size: None,
    };
    let rows = circle_experiment(&cfg.radii, &neighborhood(cfg)?, &circle)?;
    Ok(circle_csv(&rows))
}

pub fn run_circle_accuracy(cfg: &RunConfig) -> CliResult<String> {
    let csv = circle_accuracy_csv(cfg)?;
    emit(cfg.output.as_deref(), &csv)?;
    Ok(csv)
}

/// Closed-form, Taylor and rasterized fired areas over `kappas x lengths`.
pub fn theorem1_csv(cfg: &RunConfig) -> CliResult<String> {
    let mut out = String::from("kappa,d,A_closed,A_taylor,A_raster\n");
    for &kappa in &cfg.kappas {
        for &d in &cfg.lengths {
            let closed = fired_area_a(kappa, d)?;
            let raster = raster_area(1.0 / kappa, d, cfg.theta, cfg.subpixel)?;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                kappa,
                d,
                closed,
                taylor_area(kappa, d),
                raster.area
            ));
        }
    }
    Ok(out)
}

pub fn run_theorem1(cfg: &RunConfig) -> CliResult<String> {
    let csv = theorem1_csv(cfg)?;
    emit(cfg.output.as_deref(), &csv)?;
    Ok(csv)
}

pub fn run_dump_neighborhood(cfg: &RunConfig) -> CliResult<String> {
    let csv = neighborhood(cfg)?.to_csv();
    emit(cfg.output.as_deref(), &csv)?;
    Ok(csv)
}

fn required<'a>(path: Option<&'a Path>, what: &str) -> CliResult<&'a Path> {
    path.ok_or_else(|| CliError::usage(format!("missing {what}")))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(format!("cannot write to stdout: {e}"))),
    }
}
