#![allow(dead_code)]

use std::path::{Path, PathBuf};

use parkvoice::dataio::UCI_FEATURES;
use parkvoice::rng;

/// Column layout of the public voice-measurement file: `name`, the first 16
/// features, `status`, then the last 6 features.
pub fn header() -> Vec<String> {
    let mut cols = vec!["name".to_string()];
    cols.extend(UCI_FEATURES[..16].iter().map(|s| s.to_string()));
    cols.push("status".to_string());
    cols.extend(UCI_FEATURES[16..].iter().map(|s| s.to_string()));
    cols
}

fn gaussian(r: &mut rng::Rng) -> f64 {
    let u1 = rng::unit_f64(r).max(1e-300);
    let u2 = rng::unit_f64(r);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 195 synthetic recordings with the public file's schema and class balance
/// (147 PD, 48 healthy). A latent severity drives every feature, so the
/// features correlate with each other and with the label.
pub fn synthetic_uci_csv(seed: u64) -> String {
    let mut r = rng::stream(seed, "fixture");
    let mut out = header().join(",") + "\n";
    for i in 0..195 {
        let label = u8::from(i % 4 != 0 || i >= 192);
        let severity = 2.5 * f64::from(label) + gaussian(&mut r);
        let mut features = Vec::with_capacity(22);
        for j in 0..22 {
            let loading = 0.4 + 0.5 * ((j * 7 % 11) as f64 / 10.0);
            let sign = if j % 5 == 2 { -1.0 } else { 1.0 };
            let base = 1.0 + j as f64;
            features.push(base + sign * loading * severity + 0.8 * gaussian(&mut r));
        }
        let mut row = vec![format!("phon_R01_S{:02}_{}", i / 6, i % 6 + 1)];
        row.extend(features[..16].iter().map(|v| format!("{v:.6}")));
        row.push(label.to_string());
        row.extend(features[16..].iter().map(|v| format!("{v:.6}")));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_synthetic(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join("voice.csv");
    std::fs::write(&path, synthetic_uci_csv(seed)).unwrap();
    path
}

/// The public file when available: `PARKINSONS_DATA`, else
/// `data/parkinsons.data` at the workspace root.
pub fn uci_data_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("PARKINSONS_DATA") {
        let p = PathBuf::from(p);
        return p.is_file().then_some(p);
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/parkinsons.data");
    p.is_file().then_some(p)
}
