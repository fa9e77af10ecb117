use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use tomokit::algorithms::{
    write_history_csv, Algorithm, Cgls, Fista, Gd, Ladmm, LogCadence, Pdhg, Record, Sirt, Solver,
    StepRule,
};
use tomokit::containers::{AcquisitionGeometry, ImageGeometry};
use tomokit::fbp::{fbp, FilterSpec};
use tomokit::functions::{
    BlockFunction, IndicatorBox, KullbackLeibler, L1Norm, L2Squared, LeastSquares, MixedL21,
    TotalVariation,
};
use tomokit::io::{export_png_heatmap, read_native, read_tiff_stack, write_native, write_tiff_stack};
use tomokit::operators::{BlockOperator, GradientOperator, Projector};
use tomokit::processors::{self, MaskFill, MaskMethod, PadMode, Reference, SliceChoice};
use tomokit::sim::{self, Metrics, Psnr};
use tomokit::{Data, Func, LabeledArray, Operator};

use crate::config::{
    DataTerm, FillSpec, InputSpec, Method, OutputSpec, PadModeSpec, PipelineConfig, ReconSpec,
    ReferenceSpec, Regulariser, SliceSpec, Source, StageSpec,
};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
    pub shape: Vec<usize>,
}

#[derive(Debug)]
pub struct PipelineResult {
    /// The data after the last stage.
    pub data: LabeledArray,
    pub recon: Option<LabeledArray>,
    pub history: Vec<Record>,
    pub metrics: Option<Metrics>,
    pub timings: Vec<StageTiming>,
}

/// Run a pipeline on a dedicated pool of `threads` workers.
pub fn run_with_threads(
    config: &PipelineConfig,
    seed: u64,
    threads: usize,
    out: &mut (dyn Write + Send),
) -> Result<PipelineResult, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| run(config, seed, out))
}

/// Load, preprocess, reconstruct, evaluate and export, reporting each step to `out`.
pub fn run(config: &PipelineConfig, seed: u64, out: &mut (dyn Write + Send)) -> Result<PipelineResult, CliError> {
    let mut timings = Vec::new();
    let mut step = |name: &str, start: Instant, shape: &[usize], out: &mut (dyn Write + Send)| {
        let t = StageTiming {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            shape: shape.to_vec(),
        };
        let _ = writeln!(out, "{:<14} {:>9.3} s  shape {:?}", t.name, t.seconds, t.shape);
        timings.push(t);
    };

    let start = Instant::now();
    let mut data = load_input(config, seed)?;
    step("input", start, data.shape(), out);

    for (i, stage) in config.stages.iter().enumerate() {
        let start = Instant::now();
        let label = format!("stages[{i}] ({})", stage.name());
        data = apply_stage(stage, &data, out).map_err(|e| CliError::at(&label, e))?;
        step(stage.name(), start, data.shape(), out);
    }

    let mut recon = None;
    let mut history = Vec::new();
    let mut recon_ig = None;
    if let Some(spec) = &config.recon {
        let start = Instant::now();
        let ag = data
            .geometry()
            .and_then(|g| g.as_acquisition())
            .ok_or_else(|| CliError::Runtime("recon: the data carries no acquisition geometry".into()))?
            .clone();
        let ig = recon_geometry(config, spec, &ag)?;
        let (x, h) = reconstruct(spec, &data, &ag, &ig).map_err(|e| CliError::at("recon", e))?;
        step(&format!("recon ({})", method_name(spec.method)), start, x.shape(), out);
        recon = Some(x);
        history = h;
        recon_ig = Some(ig);
    }

    let mut metrics = None;
    for (i, o) in config.outputs.iter().enumerate() {
        let start = Instant::now();
        let label = format!("outputs[{i}]");
        let pick = |s: Source| match s {
            Source::Recon => recon.as_ref().expect("validated: recon exists"),
            Source::Data => &data,
        };
        match o {
            OutputSpec::Native { path, source } => {
                write_native(pick(*source), path).map_err(|e| CliError::at(&label, e))?;
            }
            OutputSpec::Tiff { dir, prefix, axis, source } => {
                let a = pick(*source);
                let axis = axis.clone().unwrap_or_else(|| a.labels()[0].clone());
                write_tiff_stack(a, dir, &axis, prefix).map_err(|e| CliError::at(&label, e))?;
            }
            OutputSpec::Png { path, slice, range, colormap, source } => {
                let mut a = pick(*source).clone();
                while a.shape().len() > 2 {
                    let fixed = a.labels().iter().find(|l| slice.contains_key(*l)).cloned();
                    let l = fixed.unwrap_or_else(|| a.labels()[0].clone());
                    let k = a.axis_index(&l).map_err(|e| CliError::at(&label, e))?;
                    let index = slice.get(&l).copied().unwrap_or(a.shape()[k] / 2);
                    a = a.get_slice(&l, index).map_err(|e| CliError::at(&label, e))?;
                }
                let (lo, hi) = match range {
                    Some([lo, hi]) => (*lo, *hi),
                    None => {
                        let (lo, hi) = (a.min(), a.max());
                        if lo < hi { (lo, hi) } else { (lo, lo + 1.0) }
                    }
                };
                export_png_heatmap(&a, path, (lo, hi), *colormap).map_err(|e| CliError::at(&label, e))?;
            }
            OutputSpec::Csv { path } => {
                let file = File::create(path).map_err(|e| CliError::Io(format!("{label}: {e}")))?;
                let mut w = BufWriter::new(file);
                write_history_csv(&history, &mut w).map_err(|e| CliError::at(&label, e))?;
                w.flush().map_err(|e| CliError::Io(format!("{label}: {e}")))?;
            }
            OutputSpec::Metrics { path, reference, peak } => {
                let x = recon.as_ref().expect("validated: recon exists");
                let truth = if reference == "phantom" {
                    let InputSpec::Phantom { phantom, .. } = &config.input else {
                        unreachable!("validated: phantom reference needs a phantom input")
                    };
                    sim::make_phantom(phantom, recon_ig.as_ref().expect("recon ran"))
                } else {
                    read_native(reference)
                }
                .map_err(|e| CliError::at(&label, e))?;
                let m = sim::metrics(x, &truth, *peak).map_err(|e| CliError::at(&label, e))?;
                let psnr = psnr_text(m.psnr);
                let _ = writeln!(out, "metrics: mse {:e}  psnr {psnr} dB", m.mse);
                if let Some(p) = path {
                    let json = serde_json::json!({ "mse": m.mse, "psnr": psnr });
                    std::fs::write(p, format!("{json}\n")).map_err(|e| CliError::Io(format!("{label}: {e}")))?;
                }
                metrics = Some(m);
            }
        }
        step(&format!("output ({})", output_name(o)), start, &[], out);
    }

    Ok(PipelineResult {
        data,
        recon,
        history,
        metrics,
        timings,
    })
}

fn psnr_text(p: Psnr) -> String {
    match p {
        Psnr::Finite(v) => format!("{v:.4}"),
        Psnr::Infinite => "inf".into(),
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Fbp => "fbp",
        Method::Cgls => "cgls",
        Method::Sirt => "sirt",
        Method::Gd => "gd",
        Method::Fista => "fista",
        Method::Pdhg => "pdhg",
        Method::Ladmm => "ladmm",
    }
}

fn output_name(o: &OutputSpec) -> &'static str {
    match o {
        OutputSpec::Native { .. } => "native",
        OutputSpec::Tiff { .. } => "tiff",
        OutputSpec::Png { .. } => "png",
        OutputSpec::Csv { .. } => "csv",
        OutputSpec::Metrics { .. } => "metrics",
    }
}

fn load_input(config: &PipelineConfig, seed: u64) -> Result<LabeledArray, CliError> {
    match &config.input {
        InputSpec::Native { path } => read_native(path).map_err(|e| CliError::at("input", e)),
        InputSpec::Tiff { path, labels, geometry } => {
            let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
            let mut a = read_tiff_stack(path, &labels).map_err(|e| CliError::at("input", e))?;
            if let Some(g) = geometry {
                a.set_geometry(Some(g.build()?.into()))
                    .map_err(|e| CliError::at("input geometry", e))?;
            }
            Ok(a)
        }
        InputSpec::Phantom { phantom, image, geometry, noise, transmission } => {
            let (ig, ag) = (image.build()?, geometry.build()?);
            let run = || -> tomokit::Result<LabeledArray> {
                let x = sim::make_phantom(phantom, &ig)?;
                let a = Operator::new(Projector::new(&ig, &ag)?);
                let mut p = a.direct(&x.into())?.into_array()?;
                if let Some(n) = noise {
                    let noisy = sim::add_noise(&p, *n, seed)?;
                    if noisy.clipped > 0 {
                        log::warn!("input: {} zero-count samples clipped", noisy.clipped);
                    }
                    p = noisy.data;
                }
                if let Some(flat) = transmission {
                    p.map_in_place(|v| flat * (-v).exp());
                }
                Ok(p)
            };
            run().map_err(|e| CliError::at("input", e))
        }
    }
}

fn reference(spec: &ReferenceSpec, data: &LabeledArray) -> tomokit::Result<f64> {
    Ok(match spec {
        ReferenceSpec::Value(v) => *v,
        ReferenceSpec::Named(_) => data.mean(),
        ReferenceSpec::SliceMean { slice_mean } => {
            let (label, index) = slice_mean.iter().next().expect("validated: one entry");
            data.get_slice(label, *index)?.mean()
        }
    })
}

fn apply_stage(stage: &StageSpec, data: &LabeledArray, out: &mut (dyn Write + Send)) -> tomokit::Result<LabeledArray> {
    match stage {
        StageSpec::Normalise { flat, dark, fill } => {
            let (f, d) = (reference(flat, data)?, reference(dark, data)?);
            let n = processors::normalise(data, Reference::Value(f), Reference::Value(d), *fill)?;
            if n.zero_denominators > 0 {
                log::warn!("normalise: {} zero denominators filled with {fill}", n.zero_denominators);
            }
            Ok(n.data)
        }
        StageSpec::Absorption { floor } => processors::absorption(data, *floor),
        StageSpec::Centre { slice } => {
            let choice = match slice {
                SliceSpec::Index(i) => SliceChoice::Index(*i),
                SliceSpec::Named(_) => SliceChoice::Centre,
            };
            let est = processors::centre_of_rotation(data, choice)?;
            let _ = writeln!(
                out,
                "centre: axis {:+.3} px from detector centre (projections {} and {})",
                est.offset_pixels, est.pair.0, est.pair.1
            );
            Ok(est.data)
        }
        StageSpec::Slice { roi } | StageSpec::Bin { roi } => {
            let ranges: Vec<(&str, processors::AxisRange)> = roi
                .iter()
                .map(|(l, r)| (l.as_str(), (r[0], r[1], r.get(2).copied().unwrap_or(1))))
                .collect();
            if matches!(stage, StageSpec::Slice { .. }) {
                processors::slice(data, &ranges)
            } else {
                processors::bin(data, &ranges)
            }
        }
        StageSpec::Pad { widths, mode, value } => {
            let w: Vec<(&str, (usize, usize))> =
                widths.iter().map(|(l, [a, b])| (l.as_str(), (*a, *b))).collect();
            let mode = match mode {
                PadModeSpec::Constant => PadMode::Constant(*value),
                PadModeSpec::Edge => PadMode::Edge,
            };
            processors::pad(data, &w, mode)
        }
        StageSpec::Mask { lower, upper, fill } => {
            let method = match (lower, upper) {
                (Some(lo), Some(hi)) => MaskMethod::Threshold { lo: *lo, hi: *hi },
                _ => MaskMethod::NonFinite,
            };
            let fill = match fill {
                FillSpec::Value(v) => MaskFill::Value(*v),
                FillSpec::Named(_) => MaskFill::LocalMean,
            };
            let mask = processors::make_mask(data, method)?;
            processors::apply_mask(data, &mask, fill)
        }
        StageSpec::RingRemove { width } => processors::ring_remove(data, *width),
    }
}

fn recon_geometry(
    config: &PipelineConfig,
    spec: &ReconSpec,
    ag: &AcquisitionGeometry,
) -> Result<ImageGeometry, CliError> {
    if let Some(image) = &spec.image {
        return image.build();
    }
    if let InputSpec::Phantom { image, .. } = &config.input {
        let ig = image.build()?;
        if ig.dimension() == ag.dimension() {
            return Ok(ig);
        }
    }
    Ok(ag.default_image_geometry())
}

fn bounds(spec: &ReconSpec) -> Option<(f64, f64)> {
    (spec.lower.is_some() || spec.upper.is_some())
        .then(|| (spec.lower.unwrap_or(f64::NEG_INFINITY), spec.upper.unwrap_or(f64::INFINITY)))
}

fn constraint(spec: &ReconSpec) -> tomokit::Result<Func> {
    Ok(match bounds(spec) {
        Some((lo, hi)) => Func::new(IndicatorBox::new(lo, hi)?),
        None => Func::zero(),
    })
}

fn reconstruct(
    spec: &ReconSpec,
    data: &LabeledArray,
    ag: &AcquisitionGeometry,
    ig: &ImageGeometry,
) -> tomokit::Result<(LabeledArray, Vec<Record>)> {
    if spec.method == Method::Fbp {
        let x = fbp(data, ig, FilterSpec::new(spec.filter, spec.cutoff)?)?;
        return Ok((x, Vec::new()));
    }
    let a = Operator::new(Projector::new(ig, ag)?);
    let b: Data = data.clone().into();
    let alpha = spec.alpha;
    let gradient = || -> tomokit::Result<Operator> { Ok(Operator::new(GradientOperator::new(ig.clone())?)) };
    let tikhonov = || -> tomokit::Result<Func> { Func::new(L2Squared::new()).compose(&gradient()?).scale(alpha) };
    let x0 = a.domain().zeros();

    let algorithm: Box<dyn Algorithm> = match spec.method {
        Method::Fbp => unreachable!(),
        Method::Cgls => match spec.regulariser {
            Regulariser::Tikhonov if alpha > 0.0 => {
                let g = gradient()?;
                let zero = g.range().zeros();
                let k = Operator::new(BlockOperator::column(vec![a, g.scale(alpha.sqrt())])?);
                Box::new(Cgls::new(k, Data::block(vec![b, zero])?, None)?)
            }
            _ => Box::new(Cgls::new(a, b, None)?),
        },
        Method::Sirt => {
            let mut s = Sirt::new(a, b, None)?;
            if spec.lower.is_some() || spec.upper.is_some() {
                s = s.with_bounds(spec.lower, spec.upper)?;
            }
            if let Some(w) = spec.relaxation {
                s = s.with_relaxation(w)?;
            }
            Box::new(s)
        }
        Method::Gd => {
            let mut f = Func::new(LeastSquares::new(a, b));
            if spec.regulariser == Regulariser::Tikhonov && alpha > 0.0 {
                f = f.add(&tikhonov()?);
            }
            Box::new(Gd::new(f, x0, StepRule::default())?)
        }
        Method::Fista => {
            let mut f = Func::new(LeastSquares::new(a, b));
            let g = match spec.regulariser {
                Regulariser::Tv if alpha > 0.0 => {
                    let mut tv = TotalVariation::new().with_iterations(spec.tv_iterations)?;
                    if let Some((lo, hi)) = bounds(spec) {
                        tv = tv.with_bounds(lo, hi)?;
                    }
                    Func::new(tv).scale(alpha)?
                }
                Regulariser::L1 if alpha > 0.0 => Func::new(L1Norm::new()).scale(alpha)?,
                Regulariser::Tikhonov if alpha > 0.0 => {
                    f = f.add(&tikhonov()?);
                    constraint(spec)?
                }
                _ => constraint(spec)?,
            };
            Box::new(Fista::new(f, g, x0, None)?)
        }
        Method::Pdhg | Method::Ladmm => {
            let fidelity = match spec.data {
                DataTerm::LeastSquares => Func::new(L2Squared::new().with_shift(b)),
                DataTerm::KullbackLeibler => Func::new(KullbackLeibler::new(b)?),
            };
            let (k, f) = match spec.regulariser {
                Regulariser::None => (a, fidelity),
                Regulariser::L1 => {
                    let id = Operator::identity(a.domain().clone());
                    let f = Func::new(BlockFunction::new(vec![fidelity, Func::new(L1Norm::new()).scale(alpha)?])?);
                    (Operator::new(BlockOperator::column(vec![a, id])?), f)
                }
                r @ (Regulariser::Tv | Regulariser::Tikhonov) => {
                    let reg = if r == Regulariser::Tv {
                        Func::new(MixedL21::new())
                    } else {
                        Func::new(L2Squared::new())
                    };
                    let f = Func::new(BlockFunction::new(vec![fidelity, reg.scale(alpha)?])?);
                    (Operator::new(BlockOperator::column(vec![a, gradient()?])?), f)
                }
            };
            let g = constraint(spec)?;
            if spec.method == Method::Pdhg {
                Box::new(Pdhg::new(f, k, g, None, spec.sigma, spec.tau)?)
            } else {
                Box::new(Ladmm::new(f, k, g, None, spec.sigma, spec.tau)?)
            }
        }
    };

    let cadence = spec.log_every.map_or(LogCadence::Standard, LogCadence::Every);
    let mut solver = Solver::with_cadence(algorithm, spec.iterations, cadence)?;
    let report = solver.run(spec.iterations)?;
    if report.converged {
        log::info!("recon: stopped after {} iterations", report.performed);
    }
    let x = solver.solution().clone().into_array()?;
    Ok((x, solver.history().to_vec()))
}
