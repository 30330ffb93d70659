//! Student-teacher feature matching: a randomly initialized student is trained
//! to reproduce the frozen teacher's L2-normalized features on normal data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::AnomalyMap;
use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::features::conv::{ConvGrads, ConvNet, Planes};
use crate::features::{level_name, CoordMap, ExtractorSpec, ReferenceExtractor};
use crate::scalar::Scalar;
use crate::tensor::{resize_matrix, Matrix};

/// Norms below this are clamped when normalizing feature vectors.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StfpmConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Seeds the student's initialization and the batch order.
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for StfpmConfig {
    fn default() -> Self {
        StfpmConfig {
            steps: 500,
            lr: 0.01,
            momentum: 0.9,
            seed: 1,
            batch_size: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel<T> {
    pub teacher: ReferenceExtractor<T>,
    pub student: ConvNet<T>,
    pub config: StfpmConfig,
    /// Mean batch loss before each update.
    pub loss_history: Vec<T>,
}

/// Per-position L2 normalization of a C×H×W volume, returning the normalized
/// volume and the per-position norms (before flooring).
fn normalize_positions<T: Scalar>(x: &Planes<T>) -> (Planes<T>, Vec<T>) {
    let hw = x.height * x.width;
    let floor = T::of(NORM_FLOOR);
    let mut norms = vec![T::zero(); hw];
    for c in 0..x.channels {
        for (n, &v) in norms.iter_mut().zip(&x.data[c * hw..(c + 1) * hw]) {
            *n += v * v;
        }
    }
    norms.iter_mut().for_each(|n| *n = n.sqrt());
    let mut out = x.clone();
    for c in 0..x.channels {
        for (v, &n) in out.data[c * hw..(c + 1) * hw].iter_mut().zip(&norms) {
            *v /= n.max(floor);
        }
    }
    (out, norms)
}

/// `(1/2)·‖t̂ − ŝ‖²` per position, as an H×W matrix.
fn distance_map<T: Scalar>(teacher_hat: &Planes<T>, student_hat: &Planes<T>) -> Matrix<T> {
    let hw = teacher_hat.height * teacher_hat.width;
    let mut d = vec![T::zero(); hw];
    for c in 0..teacher_hat.channels {
        let t = &teacher_hat.data[c * hw..(c + 1) * hw];
        let s = &student_hat.data[c * hw..(c + 1) * hw];
        for ((dv, &a), &b) in d.iter_mut().zip(t).zip(s) {
            let e = a - b;
            *dv += e * e;
        }
    }
    let half = T::of(0.5);
    d.iter_mut().for_each(|v| *v *= half);
    Matrix::from_vec(teacher_hat.height, teacher_hat.width, d).expect("H*W distances")
}

fn selected_indices(spec: &ExtractorSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    Ok(spec
        .selected_levels
        .iter()
        .map(|name| {
            (0..spec.channels_per_block.len())
                .find(|&i| level_name(i) == *name)
                .expect("validated level name")
        })
        .collect())
}

impl<T: Scalar> StudentModel<T> {
    /// Student with the teacher's architecture, initialized from `config.seed`.
    pub fn untrained(teacher: &ExtractorSpec, config: StfpmConfig) -> Result<Self> {
        let teacher = ReferenceExtractor::new(teacher)?;
        let depth = teacher.spec.required_depth()?;
        let mut student = ConvNet::seeded(&teacher.spec.channels_per_block, config.seed)?;
        student.blocks.truncate(depth);
        Ok(StudentModel {
            teacher,
            student,
            config,
            loss_history: Vec::new(),
        })
    }

    fn depth(&self) -> usize {
        self.student.depth()
    }

    fn check_architecture(&self) -> Result<()> {
        let depth = self.teacher.spec.required_depth()?;
        if self.student.depth() != depth {
            return Err(Error::Architecture(format!(
                "student has {} blocks, teacher selection needs {depth}",
                self.student.depth()
            )));
        }
        for (i, (s, t)) in self.student.blocks.iter().zip(&self.teacher.net.blocks).enumerate() {
            if (s.in_channels, s.out_channels) != (t.in_channels, t.out_channels) {
                return Err(Error::Architecture(format!(
                    "block {} is {}→{} in the student but {}→{} in the teacher",
                    i + 1,
                    s.in_channels,
                    s.out_channels,
                    t.in_channels,
                    t.out_channels
                )));
            }
        }
        Ok(())
    }

    /// Teacher features at the selected levels, normalized per position.
    fn teacher_targets(&self, s: &Spectrogram<T>) -> Result<Vec<Planes<T>>> {
        self.teacher.net.check_input(s.frames(), s.bands())?;
        let outs = self.teacher.net.forward(&Planes::from_matrix(&s.values), self.depth());
        Ok(selected_indices(&self.teacher.spec)?
            .into_iter()
            .map(|i| normalize_positions(&outs[i]).0)
            .collect())
    }

    /// Loss and parameter gradient for one spectrogram given its teacher targets.
    fn sample_loss_grad(&self, input: &Planes<T>, targets: &[Planes<T>], selected: &[usize]) -> (T, ConvGrads<T>) {
        let (outs, caches) = self.student.forward_cached(input, self.depth());
        let mut out_grads: Vec<Option<Planes<T>>> = vec![None; self.depth()];
        let floor = T::of(NORM_FLOOR);
        let n_levels = T::of_usize(selected.len());
        let half = T::of(0.5);
        let mut loss = T::zero();
        for (&lvl, target) in selected.iter().zip(targets) {
            let s = &outs[lvl];
            let (s_hat, norms) = normalize_positions(s);
            let hw = s.height * s.width;
            let weight = T::one() / (n_levels * T::of_usize(hw));
            let c = s.channels;
            let mut g = Planes::zeros(c, s.height, s.width);
            for p in 0..hw {
                // g_hat = weight · (ŝ − t̂); project through the normalization Jacobian
                let mut sq = T::zero();
                let mut dot = T::zero();
                for ch in 0..c {
                    let i = ch * hw + p;
                    let e = s_hat.data[i] - target.data[i];
                    sq += e * e;
                    dot += s_hat.data[i] * e;
                }
                loss += weight * half * sq;
                let n = norms[p];
                for ch in 0..c {
                    let i = ch * hw + p;
                    let e = weight * (s_hat.data[i] - target.data[i]);
                    g.data[i] = if n > floor {
                        (e - s_hat.data[i] * weight * dot) / n
                    } else {
                        e / floor
                    };
                }
            }
            out_grads[lvl] = Some(match out_grads[lvl].take() {
                Some(mut prev) => {
                    prev.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += *b);
                    prev
                }
                None => g,
            });
        }
        (loss, self.student.backward(&caches, &out_grads))
    }

    /// Mean loss and gradient over `specs`; targets are recomputed from the teacher.
    pub fn loss_and_grad(&self, specs: &[Spectrogram<T>]) -> Result<(T, ConvGrads<T>)> {
        if specs.is_empty() {
            return Err(Error::Data("no spectrograms for the student loss".into()));
        }
        let selected = selected_indices(&self.teacher.spec)?;
        let per_sample = specs
            .iter()
            .map(|s| {
                let targets = self.teacher_targets(s)?;
                Ok(self.sample_loss_grad(&Planes::from_matrix(&s.values), &targets, &selected))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(average(per_sample, self.student.zeros_like()))
    }

    pub fn loss(&self, specs: &[Spectrogram<T>]) -> Result<T> {
        Ok(self.loss_and_grad(specs)?.0)
    }

    /// Per-level distance maps resized to the finest selected level and summed.
    pub fn score(&self, s: &Spectrogram<T>) -> Result<(AnomalyMap<T>, CoordMap)> {
        self.check_architecture()?;
        let targets = self.teacher_targets(s)?;
        let outs = self.student.forward(&Planes::from_matrix(&s.values), self.depth());
        let selected = selected_indices(&self.teacher.spec)?;
        let (fh, fw) = selected
            .iter()
            .map(|&i| (outs[i].height, outs[i].width))
            .max_by_key(|&(h, w)| h * w)
            .expect("at least one selected level");
        let mut total = Matrix::zeros(fh, fw);
        for (&lvl, target) in selected.iter().zip(&targets) {
            let student_hat = normalize_positions(&outs[lvl]).0;
            if student_hat.channels != target.channels || student_hat.height != target.height {
                return Err(Error::Architecture(format!("level {} shapes differ", level_name(lvl))));
            }
            let d = resize_matrix(&distance_map(target, &student_hat), fh, fw);
            total.as_mut_slice().iter_mut().zip(d.as_slice()).for_each(|(a, &b)| *a += b);
        }
        Ok((
            AnomalyMap::new(total),
            CoordMap {
                source: (s.frames(), s.bands()),
                grid: (fh, fw),
            },
        ))
    }
}

fn average<T: Scalar>(per_sample: Vec<(T, ConvGrads<T>)>, mut acc: ConvGrads<T>) -> (T, ConvGrads<T>) {
    let n = T::of_usize(per_sample.len());
    let mut loss = T::zero();
    for (l, g) in &per_sample {
        loss += *l;
        acc.add_assign(g);
    }
    acc.scale(T::one() / n);
    (loss / n, acc)
}

/// Trains a student against the frozen teacher with momentum SGD on
/// mini-batches drawn from a seeded shuffle.
pub fn stfpm_train<T: Scalar>(
    train_specs: &[Spectrogram<T>],
    teacher: &ExtractorSpec,
    config: StfpmConfig,
) -> Result<StudentModel<T>> {
    if train_specs.is_empty() {
        return Err(Error::Data("STFPM needs at least one training spectrogram".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    if !(config.lr >= 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::Parameter(format!(
            "need lr >= 0 and momentum in [0, 1), got lr {} momentum {}",
            config.lr, config.momentum
        )));
    }
    let mut model = StudentModel::untrained(teacher, config)?;
    if config.steps == 0 {
        return Ok(model);
    }
    let selected = selected_indices(&model.teacher.spec)?;
    let inputs: Vec<Planes<T>> = train_specs.iter().map(|s| Planes::from_matrix(&s.values)).collect();
    let targets = train_specs
        .par_iter()
        .map(|s| model.teacher_targets(s))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5f5f_4d50_5354_4650);
    let mut order: Vec<usize> = Vec::new();
    let batch = config.batch_size.min(train_specs.len());
    let lr = T::of(config.lr);
    let mu = T::of(config.momentum);
    let mut velocity = model.student.zeros_like();

    for _ in 0..config.steps {
        let mut picks = Vec::with_capacity(batch);
        while picks.len() < batch {
            if order.is_empty() {
                order = (0..train_specs.len()).collect();
                order.shuffle(&mut rng);
            }
            picks.push(order.pop().expect("refilled"));
        }
        let per_sample: Vec<(T, ConvGrads<T>)> = picks
            .par_iter()
            .map(|&i| model.sample_loss_grad(&inputs[i], &targets[i], &selected))
            .collect();
        let (loss, grads) = average(per_sample, model.student.zeros_like());
        model.loss_history.push(loss);

        for ((block, v), g) in model
            .student
            .blocks
            .iter_mut()
            .zip(&mut velocity.blocks)
            .zip(&grads.blocks)
        {
            for ((w, vv), &gg) in block
                .weight
                .iter_mut()
                .chain(block.bias.iter_mut())
                .zip(v.weight.iter_mut().chain(v.bias.iter_mut()))
                .zip(g.weight.iter().chain(g.bias.iter()))
            {
                *vv = mu * *vv + gg;
                *w -= lr * *vv;
            }
        }
    }
    Ok(model)
}

/// Patch-resolution student/teacher discrepancy map.
pub fn stfpm_score<T: Scalar>(s: &Spectrogram<T>, model: &StudentModel<T>) -> Result<(AnomalyMap<T>, CoordMap)> {
    model.score(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SpectrogramParams;

    fn spec(seed: u64, rows: usize, cols: usize) -> Spectrogram<f64> {
        let m = Matrix::from_fn(rows, cols, |r, c| {
            (((r * 31 + c * 17) as u64 ^ seed) as f64 * 0.37).sin() * 2.0 - 1.0
        });
        Spectrogram::from_values(m, SpectrogramParams::default(), 16000).unwrap()
    }

    fn teacher() -> ExtractorSpec {
        ExtractorSpec {
            channels_per_block: vec![4, 6, 8],
            selected_levels: vec![level_name(1), level_name(2)],
            ..ExtractorSpec::reference(11)
        }
    }

    #[test]
    fn student_equal_to_teacher_has_zero_loss_and_gradient() {
        let cfg = StfpmConfig { seed: 11, steps: 0, ..Default::default() };
        let model = stfpm_train(&[spec(1, 16, 16)], &teacher(), cfg).unwrap();
        let (loss, grads) = model.loss_and_grad(&[spec(1, 16, 16), spec(2, 16, 16)]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.norm(), 0.0);
        let (map, _) = model.score(&spec(3, 16, 16)).unwrap();
        assert!(map.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_steps_keeps_initialization() {
        let cfg = StfpmConfig { seed: 5, steps: 0, ..Default::default() };
        let model = stfpm_train(&[spec(1, 16, 16)], &teacher(), cfg).unwrap();
        let fresh = StudentModel::<f64>::untrained(&teacher(), cfg).unwrap();
        assert_eq!(model.student, fresh.student);
        assert!(model.loss_history.is_empty());
    }

    #[test]
    fn map_bounded_by_two_per_level() {
        let cfg = StfpmConfig { seed: 99, steps: 0, ..Default::default() };
        let model = stfpm_train(&[spec(1, 32, 24)], &teacher(), cfg).unwrap();
        let (map, cm) = model.score(&spec(4, 32, 24)).unwrap();
        assert_eq!(cm.grid, map.values.shape());
        assert_eq!(cm.grid, (8, 6));
        assert!(map.values.as_slice().iter().all(|&v| (0.0..=4.0).contains(&v)));
        assert!(map.values.as_slice().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn single_level_map_is_that_levels_distance() {
        let t = ExtractorSpec {
            selected_levels: vec![level_name(1)],
            ..teacher()
        };
        let cfg = StfpmConfig { seed: 3, steps: 0, ..Default::default() };
        let model = stfpm_train(&[spec(1, 16, 16)], &t, cfg).unwrap();
        let s = spec(8, 16, 16);
        let (map, _) = model.score(&s).unwrap();
        let tf = model.teacher.net.forward(&Planes::from_matrix(&s.values), 2);
        let sf = model.student.forward(&Planes::from_matrix(&s.values), 2);
        let direct = distance_map(&normalize_positions(&tf[1]).0, &normalize_positions(&sf[1]).0);
        assert_eq!(map.values, direct);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let t = teacher();
        let cfg = StfpmConfig { seed: 77, steps: 0, ..Default::default() };
        let model = StudentModel::<f64>::untrained(&t, cfg).unwrap();
        let data = [spec(1, 16, 16), spec(2, 16, 16)];
        let (_, grads) = model.loss_and_grad(&data).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for b in 0..model.student.depth() {
            for i in (0..model.student.blocks[b].weight.len()).step_by(37) {
                let mut plus = model.clone();
                plus.student.blocks[b].weight[i] += h;
                let mut minus = model.clone();
                minus.student.blocks[b].weight[i] -= h;
                let numeric = (plus.loss(&data).unwrap() - minus.loss(&data).unwrap()) / (2.0 * h);
                let analytic = grads.blocks[b].weight[i];
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn training_reduces_loss() {
        let data: Vec<_> = (0..4).map(|i| spec(i, 16, 16)).collect();
        let cfg = StfpmConfig { seed: 4, steps: 30, batch_size: 4, ..Default::default() };
        let model = stfpm_train(&data, &teacher(), cfg).unwrap();
        let before = StudentModel::<f64>::untrained(&teacher(), cfg).unwrap().loss(&data).unwrap();
        assert!(model.loss(&data).unwrap() < before);
    }

    #[test]
    fn no_training_data_rejected() {
        assert!(matches!(
            stfpm_train::<f64>(&[], &teacher(), StfpmConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
