use std::collections::BTreeSet;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataio::{DataSource, ImageId};
use crate::error::Result;

/// Read counts seen by an [`AccessLog`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSummary {
    pub image_reads: u64,
    pub caption_reads: u64,
    /// Reads of images listed in a previously trained task's train or val
    /// split, as `(stage, image_id)`.
    pub forbidden: Vec<(u32, ImageId)>,
}

#[derive(Default)]
struct State {
    stage: u32,
    forbidden: BTreeSet<ImageId>,
    summary: AccessSummary,
}

/// Wraps a data source and records every read, flagging reads of data
/// from tasks that were trained in an earlier stage.
pub struct AccessLog<'a> {
    inner: &'a dyn DataSource,
    state: Mutex<State>,
}

impl<'a> AccessLog<'a> {
    pub fn new(inner: &'a dyn DataSource) -> Self {
        Self {
            inner,
            state: Mutex::new(State::default()),
        }
    }

    /// Enters `stage`; `prior` are the train and val ids of every task
    /// trained before it.
    pub fn begin_stage(&self, stage: u32, prior: impl IntoIterator<Item = ImageId>) {
        let mut s = self.state.lock().expect("access log lock");
        s.stage = stage;
        s.forbidden = prior.into_iter().collect();
    }

    pub fn summary(&self) -> AccessSummary {
        self.state.lock().expect("access log lock").summary.clone()
    }

    fn record(&self, id: ImageId, image: bool) {
        let mut s = self.state.lock().expect("access log lock");
        if image {
            s.summary.image_reads += 1;
        } else {
            s.summary.caption_reads += 1;
        }
        if s.forbidden.contains(&id) {
            let stage = s.stage;
            s.summary.forbidden.push((stage, id));
        }
    }
}

impl DataSource for AccessLog<'_> {
    fn image(&self, id: ImageId) -> Result<Vec<f32>> {
        self.record(id, true);
        self.inner.image(id)
    }

    fn captions(&self, id: ImageId) -> Result<Vec<String>> {
        self.record(id, false);
        self.inner.captions(id)
    }
}
