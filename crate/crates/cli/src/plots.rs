//! Truth / prediction / error heatmaps for field families.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use molforge::catalog::get_equation;
use molforge::dataset::{load_records, DatasetError, MultimodalSample, Split};
use molforge::evaluation::EvalContext;
use molforge::model::OperatorModel;

use crate::{io_err, CliError};

/// Rows per time frame, so 32 frames make a square-ish panel.
const ROW_SCALE: usize = 4;
const GAP: usize = 4;

/// Piecewise-linear colormap from dark blue through teal to yellow.
fn color(v: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.27, 0.00, 0.33],
        [0.23, 0.32, 0.55],
        [0.13, 0.57, 0.55],
        [0.37, 0.79, 0.38],
        [0.99, 0.91, 0.14],
    ];
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let p = v * (STOPS.len() - 1) as f64;
    let i = (p.floor() as usize).min(STOPS.len() - 2);
    let f = p - i as f64;
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = ((STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f) * 255.0).round() as u8;
    }
    c
}

/// Writes one PNG with three `[times x width]` panels side by side.
pub fn triptych(path: &Path, truth: &[f64], pred: &[f64], width: usize) -> Result<(), CliError> {
    let nt = truth.len() / width;
    let diff: Vec<f64> = truth.iter().zip(pred).map(|(a, b)| (a - b).abs()).collect();
    let (lo, hi) = truth
        .iter()
        .chain(pred)
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    let dmax = diff.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, &v| m.max(v)).max(1e-12);
    let panels: [(&[f64], f64, f64); 3] = [(truth, lo, span), (pred, lo, span), (&diff, 0.0, dmax)];
    let w = 3 * width + 2 * GAP;
    let h = nt * ROW_SCALE;
    let mut img = vec![255u8; w * h * 3];
    for (p, (data, off, scale)) in panels.iter().enumerate() {
        let x0 = p * (width + GAP);
        for row in 0..h {
            // Time runs upward.
            let k = nt - 1 - row / ROW_SCALE;
            for j in 0..width {
                let c = color((data[k * width + j] - off) / scale);
                let at = (row * w + x0 + j) * 3;
                img[at..at + 3].copy_from_slice(&c);
            }
        }
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(&img)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// One triptych for the first sample of each field family in `split`.
pub fn write_triptychs(model: &dyn OperatorModel, ctx: &EvalContext<'_>, split: Split, dir: &Path) -> Result<usize, CliError> {
    let mut written = 0;
    for fam in &ctx.manifest.families {
        if !ctx.families.is_empty() && !ctx.families.contains(&fam.index) {
            continue;
        }
        let spec = get_equation(fam.index)?;
        if spec.is_ode() {
            continue;
        }
        let recs = match load_records(ctx.dir, ctx.manifest, split, Some(fam.index)) {
            Ok(r) => r,
            Err(DatasetError::MissingSplit(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let Some(rec) = recs.into_iter().next() else { continue };
        let s = MultimodalSample::from_record(rec)?;
        let pred = model.predict(spec, &s.params, &s.ic, &s.queries)?;
        let truth: Vec<f64> = s.targets.iter().map(|y| y[0]).collect();
        let pred: Vec<f64> = pred.iter().map(|y| y[0]).collect();
        let path = dir.join(format!("family_{:02}_{}_{}.png", fam.index, split.name(), s.sample));
        triptych(&path, &truth, &pred, s.width)?;
        written += 1;
    }
    Ok(written)
}
