//! The standardized evaluation protocol: per-class IoU at the present frame,
//! per-step future IoU, the time-discounted IoU aggregate, and 3D video
//! panoptic quality, with associative dataset-level accumulation.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::baseline::Forecast;
use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, OccupancySequence, SemanticLabel};
use crate::pipeline::Sample;

/// Intersection / prediction / ground-truth voxel counts for one class at one
/// timestep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub intersection: u64,
    pub prediction: u64,
    pub ground_truth: u64,
}

impl ClassCounts {
    pub fn add(&mut self, other: &ClassCounts) {
        self.intersection += other.intersection;
        self.prediction += other.prediction;
        self.ground_truth += other.ground_truth;
    }

    /// IoU from the counts; `None` when both sets are empty (undefined).
    pub fn iou(&self) -> Option<f64> {
        let union = self.prediction + self.ground_truth - self.intersection;
        if union == 0 {
            None
        } else {
            Some(self.intersection as f64 / union as f64)
        }
    }
}

/// Per-timestep VPQ tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VpqTally {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl VpqTally {
    pub fn add(&mut self, other: &VpqTally) {
        self.iou_sum += other.iou_sum;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Per-frame quality term; `None` when the frame holds no instance on
    /// either side.
    pub fn quality(&self) -> Option<f64> {
        let denom = self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64;
        if denom == 0.0 {
            None
        } else {
            Some(self.iou_sum / denom)
        }
    }
}

fn counts_single(pred: &OccupancyGrid, gt: &OccupancyGrid, class: SemanticLabel) -> ClassCounts {
    let mut c = ClassCounts::default();
    for (&p, &g) in pred.labels().iter().zip(gt.labels().iter()) {
        let pm = p == class;
        let gm = g == class;
        c.prediction += pm as u64;
        c.ground_truth += gm as u64;
        c.intersection += (pm && gm) as u64;
    }
    c
}

/// Voxel-set IoU of one class between two grids sharing a spec. Both sets
/// empty is reported as `None` and excluded from averages.
pub fn iou_single(
    pred: &OccupancyGrid,
    gt: &OccupancyGrid,
    class: SemanticLabel,
) -> Result<Option<f64>> {
    if !pred.spec().same_geometry(gt.spec()) {
        return Err(Error::SpecMismatch(
            "IoU requires both grids on the same geometry".into(),
        ));
    }
    Ok(counts_single(pred, gt, class).iou())
}

/// Per-step IoU for t = 1..Nf plus the unweighted mean over defined steps.
pub fn iou_future(
    pred: &OccupancySequence,
    gt: &OccupancySequence,
    class: SemanticLabel,
) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    if pred.frames().len() != gt.frames().len() {
        return Err(Error::SpecMismatch(format!(
            "frame count mismatch: prediction {} vs ground truth {}",
            pred.frames().len(),
            gt.frames().len()
        )));
    }
    let per_step: Vec<Option<f64>> = (1..pred.frames().len())
        .map(|t| iou_single(pred.frame(t), gt.frame(t), class))
        .collect::<Result<_>>()?;
    Ok((per_step.clone(), mean_defined(&per_step)))
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Time-discounted aggregate of per-step IoUs:
/// `(1/Nf) * sum_{t=1..Nf} (1/t) * sum_{k=1..t} a_k`.
/// Steps closer to the present contribute more.
pub fn iou_discounted(per_step: &[f64]) -> Result<f64> {
    if per_step.is_empty() {
        return Err(Error::Eval("discounted IoU of an empty step list".into()));
    }
    let nf = per_step.len();
    let mut prefix = 0.0;
    let mut total = 0.0;
    for (t, &a) in per_step.iter().enumerate() {
        prefix += a;
        total += prefix / (t + 1) as f64;
    }
    Ok(total / nf as f64)
}

fn instance_ids_of(seq: &OccupancySequence, what: &str) -> Result<()> {
    for (t, frame) in seq.frames().iter().enumerate() {
        if !frame.has_ids() {
            return Err(Error::Eval(format!(
                "{what} frame {t} carries no instance-ID volume"
            )));
        }
    }
    Ok(())
}

/// One frame of instance matching. `assoc` persists across the frames of one
/// sample: a predicted ID must keep mapping to the same ground-truth instance
/// as at its first match to count as tracked.
fn vpq_frame(
    pred: &OccupancyGrid,
    gt: &OccupancyGrid,
    threshold: f64,
    assoc: &mut HashMap<u16, u16>,
) -> VpqTally {
    let pred_ids = pred.instance_ids().expect("checked by caller");
    let gt_ids = gt.instance_ids().expect("checked by caller");

    let mut pred_sizes: HashMap<u16, u64> = HashMap::new();
    let mut gt_sizes: HashMap<u16, u64> = HashMap::new();
    let mut overlaps: HashMap<(u16, u16), u64> = HashMap::new();
    for (&p, &g) in pred_ids.iter().zip(gt_ids.iter()) {
        if p != 0 {
            *pred_sizes.entry(p).or_insert(0) += 1;
        }
        if g != 0 {
            *gt_sizes.entry(g).or_insert(0) += 1;
        }
        if p != 0 && g != 0 {
            *overlaps.entry((p, g)).or_insert(0) += 1;
        }
    }

    let mut candidates: Vec<(f64, u16, u16)> = overlaps
        .iter()
        .filter_map(|(&(p, g), &ov)| {
            let iou = ov as f64 / (pred_sizes[&p] + gt_sizes[&g] - ov) as f64;
            (iou > threshold).then_some((iou, p, g))
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut matched_pred: HashSet<u16> = HashSet::new();
    let mut matched_gt: HashSet<u16> = HashSet::new();
    let mut tally = VpqTally::default();
    for (iou, p, g) in candidates {
        if matched_pred.contains(&p) || matched_gt.contains(&g) {
            continue;
        }
        match assoc.get(&p) {
            Some(&prev) if prev != g => continue, // identity not tracked
            _ => {}
        }
        assoc.insert(p, g);
        matched_pred.insert(p);
        matched_gt.insert(g);
        tally.iou_sum += iou;
        tally.tp += 1;
    }
    tally.fp = (pred_sizes.len() - matched_pred.len()) as u64;
    tally.fn_ = (gt_sizes.len() - matched_gt.len()) as u64;
    tally
}

/// Video panoptic quality over frames 0..Nf: per frame, predicted and
/// ground-truth instances are matched one-to-one at per-instance voxel IoU
/// strictly above `threshold` with consistent identity over time; the
/// per-frame qualities are averaged over the frames actually evaluated.
pub fn vpq(pred: &OccupancySequence, gt: &OccupancySequence, threshold: f64) -> Result<f64> {
    if pred.frames().len() != gt.frames().len() {
        return Err(Error::SpecMismatch("VPQ frame count mismatch".into()));
    }
    instance_ids_of(pred, "prediction")?;
    instance_ids_of(gt, "ground truth")?;
    let mut assoc = HashMap::new();
    let mut defined = 0usize;
    let mut total = 0.0;
    for (p, g) in pred.frames().iter().zip(gt.frames().iter()) {
        let tally = vpq_frame(p, g, threshold, &mut assoc);
        if let Some(q) = tally.quality() {
            total += q;
            defined += 1;
        }
    }
    if defined == 0 {
        return Ok(0.0);
    }
    Ok(total / defined as f64)
}

/// Evaluation options.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub classes: Vec<SemanticLabel>,
    pub vpq_threshold: f64,
    pub compute_vpq: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            classes: vec![SemanticLabel::Gmo, SemanticLabel::Gso],
            vpq_threshold: 0.2,
            compute_vpq: false,
        }
    }
}

/// Count-level accumulator; merging two accumulators is field-wise addition,
/// so evaluation parallelizes over samples with a final reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAccumulator {
    pub n_future: usize,
    /// Per class: Nf+1 count triples indexed by timestep.
    pub class_counts: BTreeMap<SemanticLabel, Vec<ClassCounts>>,
    /// Nf+1 VPQ tallies, present when instance evaluation ran.
    pub vpq: Option<Vec<VpqTally>>,
    pub samples: u64,
}

impl EvalAccumulator {
    pub fn new(n_future: usize, classes: &[SemanticLabel], with_vpq: bool) -> Self {
        EvalAccumulator {
            n_future,
            class_counts: classes
                .iter()
                .map(|&c| (c, vec![ClassCounts::default(); n_future + 1]))
                .collect(),
            vpq: with_vpq.then(|| vec![VpqTally::default(); n_future + 1]),
            samples: 0,
        }
    }

    pub fn merge(&mut self, other: &EvalAccumulator) -> Result<()> {
        if self.n_future != other.n_future {
            return Err(Error::Eval("cannot merge accumulators with different Nf".into()));
        }
        for (class, counts) in &other.class_counts {
            let mine = self
                .class_counts
                .entry(*class)
                .or_insert_with(|| vec![ClassCounts::default(); self.n_future + 1]);
            for (m, o) in mine.iter_mut().zip(counts.iter()) {
                m.add(o);
            }
        }
        match (&mut self.vpq, &other.vpq) {
            (Some(mine), Some(theirs)) => {
                for (m, o) in mine.iter_mut().zip(theirs.iter()) {
                    m.add(o);
                }
            }
            (None, Some(theirs)) => self.vpq = Some(theirs.clone()),
            _ => {}
        }
        self.samples += other.samples;
        Ok(())
    }

    /// Accumulates one forecast/ground-truth pair.
    pub fn accumulate(&mut self, forecast: &Forecast, sample: &Sample, cfg: &EvalConfig) -> Result<()> {
        let pred = &forecast.occupancy;
        let gt = &sample.occupancy;
        if !pred.spec().same_geometry(gt.spec()) {
            return Err(Error::SpecMismatch(
                "forecast and sample grids differ in geometry".into(),
            ));
        }
        if pred.frames().len() != gt.frames().len() || gt.n_future() != self.n_future {
            return Err(Error::SpecMismatch(format!(
                "frame counts differ: forecast {}, sample {}, accumulator Nf {}",
                pred.frames().len(),
                gt.frames().len(),
                self.n_future
            )));
        }
        for &class in cfg.classes.iter() {
            let counts = self
                .class_counts
                .entry(class)
                .or_insert_with(|| vec![ClassCounts::default(); self.n_future + 1]);
            for t in 0..=self.n_future {
                counts[t].add(&counts_single(pred.frame(t), gt.frame(t), class));
            }
        }
        if cfg.compute_vpq {
            instance_ids_of(pred, "prediction")?;
            instance_ids_of(gt, "ground truth")?;
            let tallies = self
                .vpq
                .get_or_insert_with(|| vec![VpqTally::default(); self.n_future + 1]);
            let mut assoc = HashMap::new();
            for t in 0..=self.n_future {
                tallies[t].add(&vpq_frame(
                    pred.frame(t),
                    gt.frame(t),
                    cfg.vpq_threshold,
                    &mut assoc,
                ));
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Computes the report from accumulated totals.
    pub fn finalize(&self) -> EvalReport {
        let classes = self
            .class_counts
            .iter()
            .map(|(&class, counts)| {
                let iou_current = counts[0].iou();
                let per_step: Vec<Option<f64>> =
                    counts[1..].iter().map(|c| c.iou()).collect();
                let iou_future_mean = mean_defined(&per_step);
                let defined: Option<Vec<f64>> = per_step.iter().copied().collect();
                let iou_discounted = defined
                    .filter(|v| !v.is_empty())
                    .map(|v| iou_discounted(&v).expect("nonempty"));
                ClassReport {
                    class,
                    iou_current,
                    iou_per_step: per_step,
                    iou_future_mean,
                    iou_discounted,
                    counts: counts.clone(),
                }
            })
            .collect();
        let (vpq_value, vpq_tallies) = match &self.vpq {
            Some(tallies) => {
                let qualities: Vec<f64> = tallies.iter().filter_map(|t| t.quality()).collect();
                let v = if qualities.is_empty() {
                    0.0
                } else {
                    qualities.iter().sum::<f64>() / qualities.len() as f64
                };
                (Some(v), Some(tallies.clone()))
            }
            None => (None, None),
        };
        EvalReport {
            n_future: self.n_future,
            samples: self.samples,
            classes,
            vpq: vpq_value,
            vpq_tallies,
        }
    }
}

/// Per-class portion of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: SemanticLabel,
    pub iou_current: Option<f64>,
    /// IoU at t = 1..Nf; `None` marks undefined (both sets empty) steps.
    pub iou_per_step: Vec<Option<f64>>,
    pub iou_future_mean: Option<f64>,
    pub iou_discounted: Option<f64>,
    /// Raw count triples per timestep 0..Nf.
    pub counts: Vec<ClassCounts>,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_future: usize,
    pub samples: u64,
    pub classes: Vec<ClassReport>,
    pub vpq: Option<f64>,
    pub vpq_tallies: Option<Vec<VpqTally>>,
}

impl EvalReport {
    pub fn class(&self, class: SemanticLabel) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Evaluates a stream of forecast/sample pairs sequentially.
pub fn evaluate_dataset<'a, I>(pairs: I, cfg: &EvalConfig) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a Forecast, &'a Sample)>,
{
    let mut acc: Option<EvalAccumulator> = None;
    for (forecast, sample) in pairs {
        let a = acc.get_or_insert_with(|| {
            EvalAccumulator::new(sample.occupancy.n_future(), &cfg.classes, cfg.compute_vpq)
        });
        a.accumulate(forecast, sample, cfg)?;
    }
    match acc {
        Some(a) => Ok(a.finalize()),
        None => Err(Error::Eval("no samples to evaluate".into())),
    }
}

/// Parallel evaluation with a final associative reduction.
pub fn evaluate_dataset_par(pairs: &[(&Forecast, &Sample)], cfg: &EvalConfig) -> Result<EvalReport> {
    use rayon::prelude::*;
    if pairs.is_empty() {
        return Err(Error::Eval("no samples to evaluate".into()));
    }
    let n_future = pairs[0].1.occupancy.n_future();
    let acc = pairs
        .par_iter()
        .map(|(forecast, sample)| {
            let mut a = EvalAccumulator::new(n_future, &cfg.classes, cfg.compute_vpq);
            a.accumulate(forecast, sample, cfg)?;
            Ok(a)
        })
        .try_reduce(
            || EvalAccumulator::new(n_future, &cfg.classes, cfg.compute_vpq),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )?;
    Ok(acc.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, VoxelIndex};
    use approx::assert_relative_eq;

    fn spec() -> GridSpec {
        GridSpec::new((0.0, 1.6), (0.0, 1.6), (0.0, 0.8), 0.2, 2, 4).unwrap()
    }

    fn grid_with(voxels: &[(usize, usize, usize)], label: SemanticLabel) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(spec());
        for &(ix, iy, iz) in voxels {
            g.set_label(VoxelIndex { ix, iy, iz }, label);
        }
        g
    }

    #[test]
    fn iou_basic_cases() {
        let gmo = SemanticLabel::Gmo;
        let a = grid_with(&[(0, 0, 0), (1, 0, 0)], gmo);
        let b = grid_with(&[(1, 0, 0), (2, 0, 0)], gmo);
        assert_relative_eq!(iou_single(&a, &b, gmo).unwrap().unwrap(), 1.0 / 3.0);
        assert_relative_eq!(iou_single(&a, &a, gmo).unwrap().unwrap(), 1.0);
        let empty = grid_with(&[], gmo);
        assert_relative_eq!(iou_single(&empty, &a, gmo).unwrap().unwrap(), 0.0);
        assert_eq!(iou_single(&empty, &empty, gmo).unwrap(), None);
        // symmetry
        assert_eq!(
            iou_single(&a, &b, gmo).unwrap(),
            iou_single(&b, &a, gmo).unwrap()
        );
    }

    #[test]
    fn discounted_closed_forms() {
        assert_relative_eq!(
            iou_discounted(&[0.7, 0.7, 0.7, 0.7]).unwrap(),
            0.7,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            iou_discounted(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
            25.0 / 48.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            iou_discounted(&[0.0, 0.0, 0.0, 1.0]).unwrap(),
            1.0 / 16.0,
            epsilon = 1e-12
        );
        assert!(iou_discounted(&[]).is_err());
    }

    #[test]
    fn discounted_is_weighted_average() {
        // weights w_k = (1/Nf) * sum_{t>=k} 1/t sum to 1
        let nf = 6;
        let ones = vec![1.0; nf];
        assert_relative_eq!(iou_discounted(&ones).unwrap(), 1.0, epsilon = 1e-12);
    }

    fn id_grid(ids: &[((usize, usize, usize), u16)]) -> OccupancyGrid {
        let mut g = OccupancyGrid::new_with_ids(spec());
        for &((ix, iy, iz), id) in ids {
            g.set_gmo(VoxelIndex { ix, iy, iz }, id);
        }
        g
    }

    fn seq(frames: Vec<OccupancyGrid>) -> OccupancySequence {
        OccupancySequence::new(frames).unwrap()
    }

    #[test]
    fn vpq_perfect_and_empty() {
        let frames: Vec<OccupancyGrid> = (0..5)
            .map(|t| id_grid(&[((t, 0, 0), 1), ((t, 1, 0), 1)]))
            .collect();
        let gt = seq(frames.clone());
        let pred = seq(frames);
        assert_relative_eq!(vpq(&pred, &gt, 0.2).unwrap(), 1.0, epsilon = 1e-12);

        let empty = seq((0..5).map(|_| id_grid(&[])).collect());
        let gt2 = seq((0..5).map(|t| id_grid(&[((t, 0, 0), 1)])).collect());
        assert_relative_eq!(vpq(&empty, &gt2, 0.2).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vpq_id_swap() {
        // two instances, perfect masks, predicted IDs swap from t=1 on
        let gt_frames: Vec<OccupancyGrid> =
            (0..5).map(|_| id_grid(&[((0, 0, 0), 1), ((4, 4, 0), 2)])).collect();
        let mut pred_frames = vec![id_grid(&[((0, 0, 0), 1), ((4, 4, 0), 2)])];
        for _ in 1..5 {
            pred_frames.push(id_grid(&[((0, 0, 0), 2), ((4, 4, 0), 1)]));
        }
        let v = vpq(&seq(pred_frames), &seq(gt_frames), 0.2).unwrap();
        assert_relative_eq!(v, 1.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn vpq_low_iou_never_tp() {
        // overlap 19 of 100 gt voxels (pred has 19 voxels, all inside gt):
        // IoU = 19/100 = 0.19 < 0.2 -> FP + FN
        let mut gt_voxels = Vec::new();
        let mut pred_voxels = Vec::new();
        let mut n = 0;
        for ix in 0..spec().nx() {
            for iy in 0..spec().ny() {
                for iz in 0..spec().nz() {
                    if n < 100 {
                        gt_voxels.push(((ix, iy, iz), 1u16));
                        if n < 19 {
                            pred_voxels.push(((ix, iy, iz), 1u16));
                        }
                        n += 1;
                    }
                }
            }
        }
        let gt = seq((0..5).map(|_| id_grid(&gt_voxels)).collect());
        let pred = seq((0..5).map(|_| id_grid(&pred_voxels)).collect());
        let v = vpq(&pred, &gt, 0.2).unwrap();
        // every frame: 0 TP, 1 FP, 1 FN -> quality 0
        assert_relative_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let gmo = SemanticLabel::Gmo;
        let cfg = EvalConfig::default();
        let mk_pair = |shift: usize| {
            let gt_frames: Vec<OccupancyGrid> =
                (0..5).map(|t| grid_with(&[(t, 0, 0), (t, 1, 0)], gmo)).collect();
            let pred_frames: Vec<OccupancyGrid> =
                (0..5).map(|t| grid_with(&[(t, shift, 0)], gmo)).collect();
            (seq(pred_frames), seq(gt_frames))
        };
        let pairs: Vec<(OccupancySequence, OccupancySequence)> = vec![mk_pair(0), mk_pair(1)];

        let mut single = EvalAccumulator::new(4, &cfg.classes, false);
        let mut left = EvalAccumulator::new(4, &cfg.classes, false);
        let mut right = EvalAccumulator::new(4, &cfg.classes, false);
        for (i, (pred, gt)) in pairs.iter().enumerate() {
            let forecast = Forecast {
                occupancy: pred.clone(),
                flows: None,
                method: "test".into(),
            };
            let sample = Sample {
                spec: gt.spec().clone(),
                mode: crate::pipeline::TaskMode::InflatedGmo,
                occupancy: gt.clone(),
                flows: vec![],
                meta: crate::pipeline::SampleMeta {
                    scene_id: "s".into(),
                    present_index: 2,
                    retained_instances: vec![],
                },
            };
            single.accumulate(&forecast, &sample, &cfg).unwrap();
            if i == 0 {
                left.accumulate(&forecast, &sample, &cfg).unwrap();
            } else {
                right.accumulate(&forecast, &sample, &cfg).unwrap();
            }
        }
        left.merge(&right).unwrap();
        assert_eq!(left, single);
        assert_eq!(left.finalize(), single.finalize());
    }

    #[test]
    fn duplication_invariance() {
        let gmo = SemanticLabel::Gmo;
        let cfg = EvalConfig::default();
        let gt = seq((0..5).map(|t| grid_with(&[(t, 0, 0), (t, 1, 0)], gmo)).collect());
        let pred = seq((0..5).map(|t| grid_with(&[(t, 0, 0)], gmo)).collect());
        let forecast = Forecast {
            occupancy: pred,
            flows: None,
            method: "test".into(),
        };
        let sample = Sample {
            spec: gt.spec().clone(),
            mode: crate::pipeline::TaskMode::InflatedGmo,
            occupancy: gt,
            flows: vec![],
            meta: crate::pipeline::SampleMeta {
                scene_id: "s".into(),
                present_index: 2,
                retained_instances: vec![],
            },
        };
        let once = evaluate_dataset([(&forecast, &sample)], &cfg).unwrap();
        let twice = evaluate_dataset([(&forecast, &sample), (&forecast, &sample)], &cfg).unwrap();
        let c1 = once.class(gmo).unwrap();
        let c2 = twice.class(gmo).unwrap();
        assert_eq!(c1.iou_current, c2.iou_current);
        assert_eq!(c1.iou_per_step, c2.iou_per_step);
        assert_eq!(c1.iou_discounted, c2.iou_discounted);
        assert_eq!(twice.samples, 2);
    }
}
