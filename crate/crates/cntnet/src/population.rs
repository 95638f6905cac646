//! Population training across threads. Members only share read-only data and draw
//! from their own RNG streams, so results do not depend on scheduling.

use cntnet_core::train::{train_member, Dataset, Population};
use rayon::prelude::*;

use crate::error::Result;

pub fn train_parallel(mut pop: Population, train: &Dataset, test: &Dataset) -> Result<Population> {
    let config = pop.config;
    pop.members
        .par_iter_mut()
        .try_for_each(|m| train_member(m, train, test, &config))?;
    Ok(pop)
}
