//! Training data for the learned scheme: per trajectory sample, the average
//! PD power matrix seen through the fixed lens, the true pose, and the lens
//! chosen by an exhaustive search.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lensvlc_core::geometry::Pose;
use lensvlc_core::gsm::{sigma_for_snr, transmit_with, GsmCodebook, GsmConfig};
use lensvlc_core::optics::ChannelMatrix;
use lensvlc_core::optimizers::exhaustive_search;
use lensvlc_neural::blocks::{BlockId, LENS_LEN, POSE_LEN};
use lensvlc_neural::power::avg_power_matrix;
use lensvlc_neural::predictor::pose_features;
use lensvlc_neural::train::{split_indices, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::scenario::{config_comment, derive_seed, trajectory, Link};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub path: usize,
    pub step: usize,
    /// Row-major PD power matrix.
    pub power: Vec<f64>,
    pub pose: [f64; POSE_LEN],
    /// Exhaustive-search lens `(θ_L, φ_L, f)` mapped to `[0, 1]`.
    pub lens: [f64; LENS_LEN],
}

/// Per-PD received current averaged over `n_ta` slots of uniformly drawn
/// codewords; `sigma = None` leaves the samples noise-free.
pub fn measure_power<R: Rng>(
    h: &ChannelMatrix,
    codebook: &GsmCodebook,
    gsm: &GsmConfig,
    n_ta: usize,
    sigma: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut samples = Vec::with_capacity(n_ta);
    for _ in 0..n_ta {
        let x = codebook.codeword(rng.random_range(0..codebook.len()));
        let y = match sigma {
            Some(s) => transmit_with(h, x, &gsm.with_sigma(s), rng)?,
            None => lensvlc_core::gsm::noiseless(h, x, gsm)?,
        };
        samples.push(y);
    }
    Ok(avg_power_matrix(&samples, n_ta)?.into_data())
}

fn path_rows(c: &Config, link: &Link, path: usize, seed: u64) -> Result<Vec<DatasetRow>> {
    let d = &c.dataset;
    let traj = trajectory(c, d.samples_per_path, derive_seed(seed, path as u64))?;
    let model = link.model(d.snr_db);
    let grid = c.label_grid();
    let fixed = c.fixed_lens();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x5EED, path as u64));
    traj.poses()
        .enumerate()
        .map(|(step, pose)| {
            let h = model.channel(pose, &fixed);
            let sigma = if d.noise {
                Some(sigma_for_snr(&h, &link.codebook, &link.gsm, d.snr_db).unwrap_or(link.gsm.sigma))
            } else {
                None
            };
            let power = measure_power(&h, &link.codebook, &link.gsm, d.n_ta, sigma, &mut rng)?;
            let best = exhaustive_search(&model, pose, &link.bounds, &grid)?;
            Ok(DatasetRow {
                path,
                step,
                power,
                pose: pose_features(pose),
                lens: link.bounds.normalize(&best.lens),
            })
        })
        .collect()
}

/// Rows for `n_paths` independent trajectories, ordered by path then step.
pub fn generate_rows(c: &Config, n_paths: usize, seed: u64) -> Result<Vec<DatasetRow>> {
    if n_paths == 0 {
        return Err(Error::config("dataset.paths: must be at least 1"));
    }
    let link = Link::from_config(c)?;
    let per_path: Vec<Result<Vec<DatasetRow>>> = (0..n_paths).into_par_iter().map(|p| path_rows(c, &link, p, seed)).collect();
    let mut rows = Vec::new();
    for p in per_path {
        rows.extend(p?);
    }
    Ok(rows)
}

/// Rows for a set of poses that are not tied to a path, with labels only.
pub fn label_poses(c: &Config, poses: &[Pose]) -> Result<Vec<DatasetRow>> {
    let link = Link::from_config(c)?;
    let model = link.model(c.dataset.snr_db);
    let grid = c.label_grid();
    poses
        .par_iter()
        .enumerate()
        .map(|(step, pose)| {
            let best = exhaustive_search(&model, pose, &link.bounds, &grid)?;
            Ok(DatasetRow {
                path: 0,
                step,
                power: Vec::new(),
                pose: pose_features(pose),
                lens: link.bounds.normalize(&best.lens),
            })
        })
        .collect()
}

fn header(n_r: usize) -> Vec<String> {
    let mut h = vec!["path".to_string(), "step".to_string()];
    h.extend((0..n_r).map(|j| format!("i_{j}")));
    h.extend(["x", "y", "z", "theta_r", "phi_r", "u_theta_l", "u_phi_l", "u_f"].map(String::from));
    h
}

pub fn write_rows<W: Write>(mut w: W, c: &Config, rows: &[DatasetRow]) -> Result<()> {
    w.write_all(config_comment(c).as_bytes())?;
    let n_r = rows.first().map_or(c.receiver.n_r, |r| r.power.len());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(n_r))?;
    for r in rows {
        let mut rec = vec![r.path.to_string(), r.step.to_string()];
        rec.extend(r.power.iter().chain(&r.pose).chain(&r.lens).map(|v| format!("{v:e}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<DatasetRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let n_cols = rd.headers()?.len();
    if n_cols < 2 + POSE_LEN + LENS_LEN {
        return Err(Error::config(format!("{}: too few columns", path.display())));
    }
    let n_r = n_cols - 2 - POSE_LEN - LENS_LEN;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let bad = |e: String| Error::config(format!("{}: {e}", path.display()));
        let int = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(e.to_string()));
        let vals: Vec<f64> = rec.iter().skip(2).map(|v| v.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(e.to_string()))?;
        let mut pose = [0.0; POSE_LEN];
        pose.copy_from_slice(&vals[n_r..n_r + POSE_LEN]);
        let mut lens = [0.0; LENS_LEN];
        lens.copy_from_slice(&vals[n_r + POSE_LEN..]);
        rows.push(DatasetRow {
            path: int(0)?,
            step: int(1)?,
            power: vals[..n_r].to_vec(),
            pose,
            lens,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Splits by whole paths (70/10/20, seeded) so every prediction window stays
/// inside one file, and writes `train.csv`, `val.csv` and `test.csv`.
pub fn write_splits(dir: &Path, c: &Config, rows: &[DatasetRow], n_paths: usize, seed: u64) -> Result<SplitSizes> {
    std::fs::create_dir_all(dir)?;
    let (tr, va, te) = split_indices(n_paths, seed);
    let mut sizes = [0usize; 3];
    for (k, (name, paths)) in [("train.csv", &tr), ("val.csv", &va), ("test.csv", &te)].into_iter().enumerate() {
        let mut subset: Vec<DatasetRow> = rows.iter().filter(|r| paths.contains(&r.path)).cloned().collect();
        subset.sort_by_key(|r| (r.path, r.step));
        sizes[k] = subset.len();
        write_rows(BufWriter::new(File::create(dir.join(name))?), c, &subset)?;
    }
    Ok(SplitSizes {
        train: sizes[0],
        val: sizes[1],
        test: sizes[2],
    })
}

/// Generates and writes the dataset for `n_paths` trajectories.
pub fn build_pbml_dataset(c: &Config, n_paths: usize, seed: u64, dir: &Path) -> Result<SplitSizes> {
    let rows = generate_rows(c, n_paths, seed)?;
    write_splits(dir, c, &rows, n_paths, seed)
}

/// Inputs and targets for one block. Block 2 uses windows of `n_i`
/// consecutive true poses within a path, labelled with the following pose.
pub fn block_dataset(rows: &[DatasetRow], block: BlockId, n_i: usize) -> Dataset {
    let mut d = Dataset::default();
    match block {
        BlockId::Estimator => {
            for r in rows {
                d.push(r.power.clone(), r.pose.to_vec());
            }
        }
        BlockId::Regressor => {
            for r in rows {
                d.push(r.pose.to_vec(), r.lens.to_vec());
            }
        }
        BlockId::Predictor => {
            for w in rows.windows(n_i + 1) {
                let same_path = w.iter().all(|r| r.path == w[0].path);
                let consecutive = w.windows(2).all(|p| p[1].step == p[0].step + 1);
                if same_path && consecutive {
                    let x: Vec<f64> = w[..n_i].iter().flat_map(|r| r.pose).collect();
                    d.push(x, w[n_i].pose.to_vec());
                }
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Config {
        let mut c = Config::default();
        c.dataset.samples_per_path = 4;
        c.dataset.label_grid = [3, 3, 3];
        c.dataset.label_refinements = 1;
        c
    }

    #[test]
    fn noise_free_power_matches_expected_current() {
        let c = Config::default();
        let link = Link::from_config(&c).unwrap();
        let pose = Pose::from_degrees(lensvlc_core::geometry::Vec3::new(2.2, 2.6, 0.0), 30.0, 10.0).unwrap();
        let h = link.model(30.0).channel(&pose, &c.fixed_lens());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = measure_power(&h, &link.codebook, &link.gsm, 40_000, None, &mut rng).unwrap();
        let mean_x = link.codebook.mean_codeword();
        let want: Vec<f64> = h.apply(&mean_x).unwrap().iter().map(|v| v * link.gsm.gain()).collect();
        let scale = want.iter().cloned().fold(0.0, f64::max);
        assert!(scale > 0.0);
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() < 0.02 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn rows_are_reproducible_and_round_trip() {
        let c = tiny();
        let a = generate_rows(&c, 2, 5).unwrap();
        assert_eq!(a, generate_rows(&c, 2, 5).unwrap());
        assert_eq!(a.len(), 8);
        let dir = tempfile::tempdir().unwrap();
        let sizes = write_splits(dir.path(), &c, &a, 2, 5).unwrap();
        assert_eq!(sizes.train + sizes.val + sizes.test, 8);
        let mut back = read_rows(&dir.path().join("train.csv")).unwrap();
        back.extend(read_rows(&dir.path().join("val.csv")).unwrap());
        back.extend(read_rows(&dir.path().join("test.csv")).unwrap());
        back.sort_by_key(|r| (r.path, r.step));
        assert_eq!(back, a);
    }

    #[test]
    fn split_sizes_follow_the_proportions() {
        let (tr, va, te) = split_indices(50, 1);
        assert_eq!((tr.len(), va.len(), te.len()), (35, 5, 10));
    }

    #[test]
    fn predictor_windows_stay_inside_a_path() {
        let row = |path, step| DatasetRow {
            path,
            step,
            power: vec![],
            pose: [step as f64; 5],
            lens: [0.0; 3],
        };
        let rows: Vec<DatasetRow> = (0..4).map(|s| row(0, s)).chain((0..3).map(|s| row(1, s))).collect();
        let d = block_dataset(&rows, BlockId::Predictor, 2);
        // Path 0 gives two windows, path 1 one.
        assert_eq!(d.len(), 3);
        assert_eq!(d.targets[2], vec![2.0; 5]);
    }
}
