//! Image quality metrics and the fused-image protocol: each metric is taken
//! against both source images and averaged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fsutil::write_atomic;
use crate::image::ImageBuffer;
use crate::losses::ssim_value;
use crate::scalar::Scalar;

/// `10·log10(peak² / MSE)`; `+∞` when the images are identical.
pub fn psnr<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>, peak: f64) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let n = a.len().max(1) as f64;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Serializes non-finite values as `null` and reads `null` back as `+∞`.
pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Metrics of one fused image against the visible and infrared sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedScore {
    pub scene: String,
    pub view: String,
    #[serde(rename = "psnr_vs_V", with = "inf_as_null")]
    pub psnr_vs_v: f64,
    #[serde(rename = "psnr_vs_T", with = "inf_as_null")]
    pub psnr_vs_t: f64,
    #[serde(with = "inf_as_null")]
    pub psnr_avg: f64,
    #[serde(rename = "ssim_vs_V")]
    pub ssim_vs_v: f64,
    #[serde(rename = "ssim_vs_T")]
    pub ssim_vs_t: f64,
    pub ssim_avg: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Quantize every image to 8 bits before measuring.
    pub quantized: bool,
}

/// Scores `fused` against `visible` and `infrared` (1 or 3 channels each).
pub fn evaluate_fused<S: Scalar>(
    fused: &ImageBuffer<S>,
    visible: &ImageBuffer<S>,
    infrared: &ImageBuffer<S>,
    options: EvalOptions,
) -> Result<FusedScore> {
    let prep = |img: &ImageBuffer<S>| {
        let rgb = img.to_rgb();
        if options.quantized {
            rgb.quantized(255)
        } else {
            rgb
        }
    };
    let (f, v, t) = (prep(fused), prep(visible), prep(infrared));
    let psnr_vs_v = psnr(&f, &v, 1.0)?;
    let psnr_vs_t = psnr(&f, &t, 1.0)?;
    let ssim_vs_v = ssim_value(&f, &v)?.as_f64();
    let ssim_vs_t = ssim_value(&f, &t)?.as_f64();
    Ok(FusedScore {
        scene: String::new(),
        view: String::new(),
        psnr_vs_v,
        psnr_vs_t,
        psnr_avg: (psnr_vs_v + psnr_vs_t) / 2.0,
        ssim_vs_v,
        ssim_vs_t,
        ssim_avg: (ssim_vs_v + ssim_vs_t) / 2.0,
    })
}

impl FusedScore {
    pub fn labelled(mut self, scene: &str, view: &str) -> Self {
        self.scene = scene.to_string();
        self.view = view.to_string();
        self
    }
}

/// Per-scene means of every metric; scenes in first-appearance order.
pub fn scene_means(scores: &[FusedScore]) -> Vec<FusedScore> {
    let mut order: Vec<&str> = Vec::new();
    for s in scores {
        if !order.contains(&s.scene.as_str()) {
            order.push(&s.scene);
        }
    }
    order
        .into_iter()
        .map(|scene| {
            let rows: Vec<&FusedScore> = scores.iter().filter(|s| s.scene == scene).collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&FusedScore) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            FusedScore {
                scene: scene.to_string(),
                view: "mean".into(),
                psnr_vs_v: mean(|r| r.psnr_vs_v),
                psnr_vs_t: mean(|r| r.psnr_vs_t),
                psnr_avg: mean(|r| r.psnr_avg),
                ssim_vs_v: mean(|r| r.ssim_vs_v),
                ssim_vs_t: mean(|r| r.ssim_vs_t),
                ssim_avg: mean(|r| r.ssim_avg),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// LPIPS needs a pretrained network and is not computed.
    pub lpips: Option<f64>,
    pub lpips_status: String,
    pub quantized: bool,
    pub views: Vec<FusedScore>,
    pub scene_means: Vec<FusedScore>,
}

impl Report {
    pub fn new(scores: Vec<FusedScore>, options: EvalOptions) -> Self {
        Self {
            lpips: None,
            lpips_status: "unavailable".into(),
            quantized: options.quantized,
            scene_means: scene_means(&scores),
            views: scores,
        }
    }

    /// Aligned plain-text table of the per-scene means.
    pub fn table(&self) -> String {
        let fmt = |v: f64| if v.is_finite() { format!("{v:.10}") } else { "inf".into() };
        let header = ["scene", "PSNR_V", "PSNR_T", "PSNR_avg", "SSIM_V", "SSIM_T", "SSIM_avg", "LPIPS"];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for m in &self.scene_means {
            rows.push(vec![
                m.scene.clone(),
                fmt(m.psnr_vs_v),
                fmt(m.psnr_vs_t),
                fmt(m.psnr_avg),
                fmt(m.ssim_vs_v),
                fmt(m.ssim_vs_t),
                fmt(m.ssim_avg),
                "n/a".into(),
            ]);
        }
        let widths: Vec<usize> = (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap()).collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        write_atomic(&dir.join("report.json"), json.as_bytes())?;
        write_atomic(&dir.join("report.txt"), self.table().as_bytes())
    }
}
