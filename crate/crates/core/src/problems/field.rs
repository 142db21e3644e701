use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SgfError};

/// Positive per-cell coefficient, x-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        let expected = dims.iter().product();
        if values.len() != expected {
            return Err(SgfError::CountMismatch { expected, found: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(SgfError::NonPositiveField { index, value });
        }
        Ok(Self { dims, values })
    }

    pub fn constant(dims: [usize; 3], value: f64) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()])
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn contrast(&self) -> f64 {
        let (lo, hi) = self.values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi / lo
    }
}

/// Parses `cx cy cz` followed by `cx·cy·cz` values; whitespace and line breaks are interchangeable.
pub fn parse_perm_field(text: &str) -> Result<ScalarField> {
    let mut tokens = text.split_whitespace();
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let tok = tokens.next().ok_or_else(|| SgfError::Parse("missing field dimensions".into()))?;
        *d = tok.parse().map_err(|_| SgfError::Parse(format!("bad dimension '{tok}'")))?;
    }
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|_| SgfError::Parse(format!("bad value '{t}'"))))
        .collect::<Result<Vec<_>>>()?;
    ScalarField::new(dims, values)
}

pub fn read_perm_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    parse_perm_field(&std::fs::read_to_string(path)?)
}

pub fn write_perm_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    use std::fmt::Write;
    let [cx, cy, cz] = field.dims;
    let mut s = format!("{cx} {cy} {cz}\n");
    for row in field.values.chunks(cx.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Log-scale level that maps to the field extremes; values beyond are clipped.
const LOG_CLIP: f64 = 2.0;

/// Layered field: layers along z alternate between a smooth log-field (a few
/// low-frequency modes) and a channelized one (meandering high-mobility
/// channels along x in a low-mobility background, with per-cell noise).
/// The log-field is clipped to `±LOG_CLIP` and mapped onto `[1, contrast]`.
pub fn synth_perm_field(dims: [usize; 3], layers: usize, contrast: f64, seed: u64) -> Result<ScalarField> {
    if !(contrast >= 1.0 && contrast.is_finite()) {
        return Err(SgfError::Config(format!("contrast must be at least 1, got {contrast}")));
    }
    let ncell: usize = dims.iter().product();
    if ncell == 0 {
        return Err(SgfError::GridTooSmall("empty field".into()));
    }
    let layers = layers.clamp(1, dims[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0; ncell];
    let layer_of = |k: usize| k * layers / dims[2];
    let ijk = |c: usize| [c % dims[0], (c / dims[0]) % dims[1], c / (dims[0] * dims[1])];
    for layer in 0..layers {
        let cells: Vec<usize> = (0..ncell).filter(|&c| layer_of(c / (dims[0] * dims[1])) == layer).collect();
        if layer % 2 == 0 {
            let modes: Vec<([f64; 3], f64, f64)> = (0..4)
                .map(|_| {
                    let freq = std::array::from_fn(|_| rng.random_range(0.5..2.0));
                    (freq, rng.random_range(0.0..std::f64::consts::TAU), rng.sample::<f64, _>(StandardNormal))
                })
                .collect();
            for &c in &cells {
                let [i, j, k] = ijk(c);
                let x = [i as f64 / dims[0] as f64, j as f64 / dims[1] as f64, k as f64 / dims[2] as f64];
                g[c] = modes
                    .iter()
                    .map(|(f, phase, amp)| {
                        amp * (std::f64::consts::TAU * (f[0] * x[0] + f[1] * x[1] + f[2] * x[2]) + phase).cos()
                    })
                    .sum();
            }
            let mean = cells.iter().map(|&c| g[c]).sum::<f64>() / cells.len() as f64;
            let var = cells.iter().map(|&c| (g[c] - mean).powi(2)).sum::<f64>() / cells.len() as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for &c in &cells {
                g[c] = (g[c] - mean) / sd;
            }
        } else {
            let ny = dims[1] as f64;
            let half_width = (ny / 16.0).max(0.5);
            let channels: Vec<(f64, f64, f64, f64)> = (0..2)
                .map(|_| {
                    (
                        rng.random_range(0.0..ny),
                        rng.random_range(0.0..ny / 6.0),
                        rng.random_range(0.5..1.5),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            for &c in &cells {
                let [i, j, _] = ijk(c);
                let x = i as f64 / dims[0] as f64;
                let inside = channels.iter().any(|&(y0, amp, f, phase)| {
                    let centre = y0 + amp * (std::f64::consts::TAU * f * x + phase).sin();
                    (j as f64 + 0.5 - centre).abs() <= half_width
                });
                let noise: f64 = rng.sample(StandardNormal);
                g[c] = if inside { LOG_CLIP } else { -LOG_CLIP } + 0.3 * noise;
            }
        }
    }
    let values =
        g.iter().map(|&v| contrast.powf((v.clamp(-LOG_CLIP, LOG_CLIP) + LOG_CLIP) / (2.0 * LOG_CLIP))).collect();
    ScalarField::new(dims, values)
}

/// Periodic repetition of `field`, `reps[a]` copies along axis `a`.
pub fn tile_field(field: &ScalarField, reps: [usize; 3]) -> Result<ScalarField> {
    if reps.contains(&0) {
        return Err(SgfError::Config(format!("tile repetitions must be positive, got {reps:?}")));
    }
    let [cx, cy, cz] = field.dims;
    let dims = [cx * reps[0], cy * reps[1], cz * reps[2]];
    let mut values = Vec::with_capacity(dims.iter().product());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                values.push(field.at(i % cx, j % cy, k % cz));
            }
        }
    }
    ScalarField::new(dims, values)
}
