use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SceneConfig;
use super::metrics::noise_var_for_snr;
use crate::channel::{los_channel, synthesize, ChannelRealization, Scene};
use crate::error::Result;
use crate::geometry::Point3;
use crate::pipeline::SystemModel;
use crate::seeding::derive_seed;

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// Draws the user center, scatterers and path gains for one trial and sets
/// the noise level for `snr_db` (`None` is noiseless).
pub fn draw_channel(model: &SystemModel, cfg: &SceneConfig, seed: u64, snr_db: Option<f64>) -> Result<ChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "scene", &[]));
    let b = &cfg.user_box;
    let center = Point3::new(uniform(&mut rng, b.x), uniform(&mut rng, b.y), uniform(&mut rng, b.z));
    channel_at(model, cfg, center, &mut rng, derive_seed(seed, "gains", &[]), snr_db)
}

/// Channel for a user at a given center; scatterers come from `rng`.
pub fn channel_at(
    model: &SystemModel,
    cfg: &SceneConfig,
    center: Point3,
    rng: &mut ChaCha8Rng,
    gain_seed: u64,
    snr_db: Option<f64>,
) -> Result<ChannelRealization> {
    let ue = model.user_at(center);
    let los_power = los_channel(&model.bs, &ue, model.wavelength)?.norm_squared();
    let mut scene = Scene::new(model.bs.clone(), ue, model.wavelength)?;
    scene.tx_power = cfg.tx_power;
    scene.paths = cfg.scatterers.draw(rng, &center, los_power, model.bs.len(), model.ue_template.len());
    let mut channel = synthesize(&scene, gain_seed)?;
    channel.scene.noise_var = match snr_db {
        Some(snr) => noise_var_for_snr(cfg.tx_power, &channel.h, snr)?,
        None => 0.0,
    };
    Ok(channel)
}
