use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::matrix_io::save_matrix;
use crate::dictionary::{build_spherical_baseline, reciprocal_rings};
use crate::error::Result;
use crate::pipeline::SystemModel;

/// Writes the per-tile angular dictionary, the spherical baseline
/// dictionary and the designed combiner as matrix files, plus a text
/// manifest describing their grids. Returns the written paths.
pub fn export_dictionaries(model: &SystemModel, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let cfg = &model.estimator;
    let lambda = model.wavelength;
    let mut written = Vec::new();
    let mut save = |name: &str, m| -> Result<()> {
        let path = dir.join(name);
        save_matrix(&path, m, lambda)?;
        written.push(path);
        Ok(())
    };

    let angular = &model.dictionary;
    save("angular.nfm", angular.matrix())?;
    let rings = reciprocal_rings(cfg.spherical_range[0], cfg.spherical_range[1], cfg.spherical_rings)?;
    let spherical = build_spherical_baseline(&model.bs, cfg.spherical_angle_grid, &rings, lambda)?;
    save("spherical.nfm", spherical.matrix())?;
    let combiner = model.designed_combiner()?;
    save("combiner.nfm", combiner.aggregated())?;

    let (m_h, m_v) = angular.shape();
    let mut s = String::new();
    let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
    line("wavelength_m", format!("{lambda}"));
    line("angular.file", "angular.nfm".into());
    line("angular.tile_shape", format!("{m_h} x {m_v}"));
    line("angular.spacing_m", format!("{} {}", model.bs.spacing_h(), model.bs.spacing_v()));
    line("angular.column_order", "horizontal cosine major, vertical cosine minor".into());
    line("angular.grid", join(angular.grid()));
    line("spherical.file", "spherical.nfm".into());
    line("spherical.rings_m", join(&rings));
    line("spherical.column_order", "k_y major, then k_z, then ring; invisible directions skipped".into());
    line("spherical.columns", spherical.len().to_string());
    for (q, p) in spherical.sources().iter().enumerate() {
        line(&format!("spherical.source.{q}"), format!("{} {} {}", p.x, p.y, p.z));
    }
    line("combiner.file", "combiner.nfm".into());
    line(
        "combiner.shape",
        format!("{} x {} (T = {}, M_RF = {})", combiner.outputs(), combiner.num_antennas(), combiner.slots(), combiner.rf_chains()),
    );
    let manifest = dir.join("manifest.txt");
    std::fs::write(&manifest, s)?;
    written.push(manifest);
    Ok(written)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}
