use crate::features::Encoder;
use crate::graph::PruningMode;
use crate::market::{
    build_target_sets, chronological_split, window_for, InvestmentLog, ProjectCatalog, SplitRatio,
    TargetSet, UtcOffset,
};
use crate::model::{InputScaling, MarketContext, PrepareOptions, WindowInputs};
use crate::Result;

/// Chronological train/test split of a market with the encoder fitted on
/// projects launched before the test period.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSplit {
    pub train: Vec<TargetSet>,
    pub test: Vec<TargetSet>,
    pub encoder: Encoder,
    pub scaling: InputScaling,
    /// Reference time of the first test set. Auxiliary targets must end by
    /// this time.
    pub horizon: i64,
}

/// Prepared windows of both splits for one history length and pruning mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub train: Vec<WindowInputs>,
    pub test: Vec<WindowInputs>,
}

impl MarketSplit {
    pub fn new(
        catalog: &ProjectCatalog,
        log: &InvestmentLog,
        offset: UtcOffset,
        ratio: SplitRatio,
    ) -> Result<Self> {
        let sets = build_target_sets(catalog, offset);
        let (train, test) = chronological_split(&sets, ratio)?;
        let horizon = test[0].reference_time;
        let seen: Vec<_> = catalog.iter().filter(|p| p.launch_time < horizon).collect();
        let encoder = Encoder::fit(seen.iter().copied());
        Ok(MarketSplit {
            train,
            test,
            encoder,
            scaling: InputScaling::fit(catalog, log, horizon),
            horizon,
        })
    }

    pub fn prepare(
        &self,
        catalog: &ProjectCatalog,
        log: &InvestmentLog,
        t_h: u32,
        pruning: PruningMode,
    ) -> Result<PreparedSplit> {
        let ctx = MarketContext::new(catalog, log, &self.encoder, self.scaling);
        let build = |sets: &[TargetSet], options: PrepareOptions| {
            sets.iter()
                .map(|s| ctx.prepare(&window_for(s, catalog, t_h)?, pruning, options))
                .collect::<Result<Vec<_>>>()
        };
        Ok(PreparedSplit {
            train: build(&self.train, PrepareOptions::training(self.horizon))?,
            test: build(&self.test, PrepareOptions::evaluation())?,
        })
    }
}
