//! Training one block from the split CSV files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use lensvlc_neural::blocks::{BlockId, Net};
use lensvlc_neural::predictor::BlockModel;
use lensvlc_neural::train::{train_splits, Dataset, TrainOptions, Trained};

use crate::config::Config;
use crate::dataset::{block_dataset, read_rows, DatasetRow};
use crate::error::Result;

/// Inputs are standardised for every block. Targets are standardised for the
/// pose outputs only: the regressor already predicts values in `[0, 1]`.
pub fn options_for(block: BlockId) -> TrainOptions {
    TrainOptions {
        standardize_inputs: true,
        standardize_targets: block != BlockId::Regressor,
    }
}

pub fn train_on(c: &Config, block: BlockId, splits: [&Dataset; 3], seed: u64) -> Result<(BlockModel, Trained)> {
    let spec = c.net_spec()?;
    let net = Net::new(block, &spec, c.receiver()?.grid_side())?;
    let params = net.init_params(seed)?;
    let t = train_splits(&net, params, splits[0], splits[1], splits[2], &spec.train, options_for(block), seed)?;
    Ok((BlockModel::from_trained(net, t.clone()), t))
}

pub fn load_splits(dir: &Path) -> Result<[Vec<DatasetRow>; 3]> {
    Ok([read_rows(&dir.join("train.csv"))?, read_rows(&dir.join("val.csv"))?, read_rows(&dir.join("test.csv"))?])
}

/// Trains `block` on `data_dir/{train,val,test}.csv` and writes
/// `out_dir/block{k}.pbml`.
pub fn train_from_dir(c: &Config, block: BlockId, data_dir: &Path, out_dir: &Path, seed: u64) -> Result<Trained> {
    let n_i = c.network.n_i;
    let [tr, va, te] = load_splits(data_dir)?;
    let sets = [tr, va, te].map(|rows| block_dataset(&rows, block, n_i));
    let (model, t) = train_on(c, block, [&sets[0], &sets[1], &sets[2]], seed)?;
    std::fs::create_dir_all(out_dir)?;
    model.save(BufWriter::new(File::create(out_dir.join(format!("block{}.pbml", block as u32)))?))?;
    Ok(t)
}
