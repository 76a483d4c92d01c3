/// Instrumented pass counters.
///
/// A *full* forward starts from the input image (running the feature network,
/// and the head when needed). A *head* forward evaluates only the head on a
/// feature map. Batched head calls count one head forward per sample.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CostTally {
    pub full_forwards: usize,
    pub head_forwards: usize,
    pub backward_passes: usize,
}
