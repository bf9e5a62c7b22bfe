//! Seeded synthetic dataset generator.
//!
//! Stands in for the clinical data with deliberately separable,
//! class-conditional signals in all three modalities:
//!
//! - images: background noise plus a class-specific geometric pattern
//!   (bright speckled mass, ground-glass fill, thin-walled anechoic cyst,
//!   multilocular septations, solid ellipse, thick irregular wall with
//!   papillary nubs);
//! - tabular: class-conditional marker/symptom distributions — the
//!   high-grade carcinoma class draws the highest CA-125 levels and an
//!   abdominal-pain probability of 0.8, the teratoma class the youngest
//!   ages, the mucinous class elevated CEA/CA-199 and the largest
//!   diameters;
//! - reports: class-conditional sentence templates over shape / wall /
//!   echo vocabulary.
//!
//! Separability is configurable (`image_noise`, `image_contrast`,
//! `marker_overlap`, `text_noise`) so ablations can run against a harder
//! variant. Generation is a pure function of the configuration: the same
//! seed yields byte-identical trees.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::preprocess::{TabularRecord, YesNo};

use super::{pgm, save_manifest, CaseRecord, DataError, TumorClass};

/// Generator configuration. `Default` is the separable setting; see
/// [`SynthConfig::hardened`] for the ablation variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_per_class: usize,
    /// Square slice edge in pixels; must be a multiple of 4 and at least 8.
    pub image_size: usize,
    /// Slices per case are drawn uniformly from 1..=max_slices.
    pub max_slices: usize,
    /// Standard deviation of the background noise, as a fraction of full
    /// scale.
    pub image_noise: f64,
    /// Multiplier on the pattern-to-background intensity difference;
    /// below 1 washes the patterns out.
    pub image_contrast: f64,
    /// 0 keeps the class-conditional tabular distributions apart; 1 pulls
    /// them onto a shared baseline.
    pub marker_overlap: f64,
    /// Probability that a class-specific report sentence is replaced by a
    /// generic one.
    pub text_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_per_class: 50,
            image_size: 32,
            max_slices: 5,
            image_noise: 0.06,
            image_contrast: 1.0,
            marker_overlap: 0.0,
            text_noise: 0.1,
        }
    }
}

impl SynthConfig {
    /// Harder variant used by the ablation and fusion comparisons: washed
    /// out images, overlapping marker distributions, noisy reports, fewer
    /// slices.
    pub fn hardened(seed: u64) -> Self {
        SynthConfig {
            seed,
            n_per_class: 36,
            image_size: 24,
            max_slices: 3,
            image_noise: 0.08,
            image_contrast: 0.75,
            marker_overlap: 0.30,
            text_noise: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_per_class < 2 {
            return Err(format!("n_per_class must be at least 2, got {}", self.n_per_class));
        }
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return Err(format!(
                "image_size must be a multiple of 4 and at least 8, got {}",
                self.image_size
            ));
        }
        if self.max_slices == 0 {
            return Err("max_slices must be at least 1".into());
        }
        for (name, v) in [
            ("image_noise", self.image_noise),
            ("image_contrast", self.image_contrast),
            ("marker_overlap", self.marker_overlap),
            ("text_noise", self.text_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Class-conditional tabular distribution parameters. Medians are the
/// log-normal location of the marker draws; the documented ordering of
/// CA-125 means is carcinoma > endometriotic > all other classes.
struct ClassProfile {
    age_mean: f64,
    age_sd: f64,
    pain_p: f64,
    bloat_p: f64,
    ca125_med: f64,
    cea_med: f64,
    ca199_med: f64,
    afp_med: f64,
    ca153_med: f64,
    diam_mean: f64,
    diam_sd: f64,
}

fn profile(class: TumorClass) -> ClassProfile {
    use TumorClass::*;
    match class {
        MatureCysticTeratoma => ClassProfile {
            age_mean: 28.0,
            age_sd: 6.0,
            pain_p: 0.30,
            bloat_p: 0.20,
            ca125_med: 18.0,
            cea_med: 2.0,
            ca199_med: 35.0,
            afp_med: 10.0,
            ca153_med: 11.0,
            diam_mean: 8.0,
            diam_sd: 2.5,
        },
        EndometrioticCyst => ClassProfile {
            age_mean: 33.0,
            age_sd: 7.0,
            pain_p: 0.60,
            bloat_p: 0.25,
            ca125_med: 80.0,
            cea_med: 1.8,
            ca199_med: 20.0,
            afp_med: 3.0,
            ca153_med: 14.0,
            diam_mean: 6.0,
            diam_sd: 2.0,
        },
        SerousCystadenoma => ClassProfile {
            age_mean: 45.0,
            age_sd: 9.0,
            pain_p: 0.20,
            bloat_p: 0.20,
            ca125_med: 28.0,
            cea_med: 2.2,
            ca199_med: 16.0,
            afp_med: 3.2,
            ca153_med: 12.0,
            diam_mean: 7.0,
            diam_sd: 2.5,
        },
        MucinousCystadenoma => ClassProfile {
            age_mean: 47.0,
            age_sd: 10.0,
            pain_p: 0.25,
            bloat_p: 0.50,
            ca125_med: 35.0,
            cea_med: 14.0,
            ca199_med: 110.0,
            afp_med: 3.5,
            ca153_med: 13.0,
            diam_mean: 13.0,
            diam_sd: 3.5,
        },
        ThecomaFibroma => ClassProfile {
            age_mean: 55.0,
            age_sd: 8.0,
            pain_p: 0.15,
            bloat_p: 0.20,
            ca125_med: 22.0,
            cea_med: 2.1,
            ca199_med: 14.0,
            afp_med: 3.0,
            ca153_med: 11.0,
            diam_mean: 7.0,
            diam_sd: 2.5,
        },
        HighGradeSerousCarcinoma => ClassProfile {
            age_mean: 58.0,
            age_sd: 8.0,
            pain_p: 0.80,
            bloat_p: 0.70,
            ca125_med: 600.0,
            cea_med: 4.0,
            ca199_med: 40.0,
            afp_med: 4.5,
            ca153_med: 45.0,
            diam_mean: 10.0,
            diam_sd: 3.0,
        },
    }
}

/// Shared baselines markers and demographics are pulled toward under
/// `marker_overlap`.
const BASE_AGE: f64 = 45.0;
const BASE_PAIN: f64 = 0.35;
const BASE_CA125: f64 = 30.0;
const BASE_CEA: f64 = 2.5;
const BASE_CA199: f64 = 22.0;
const BASE_AFP: f64 = 3.5;
const BASE_CA153: f64 = 14.0;
const BASE_DIAM: f64 = 8.0;
const MARKER_LOG_SD: f64 = 0.45;

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a * (1.0 - t) + b * t
}

/// Geometric interpolation for the log-normal marker locations.
fn glerp(a: f64, b: f64, t: f64) -> f64 {
    (a.ln() * (1.0 - t) + b.ln() * t).exp()
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid sd").sample(rng)
}

fn marker(rng: &mut ChaCha8Rng, med: f64, base: f64, overlap: f64) -> f64 {
    let location = glerp(med, base, overlap);
    let sd = MARKER_LOG_SD * (1.0 + overlap);
    (location.ln() + normal(rng, 0.0, sd)).exp().max(0.1)
}

/// Draw one class-conditional tabular record.
pub fn sample_tabular(class: TumorClass, overlap: f64, rng: &mut ChaCha8Rng) -> TabularRecord {
    let p = profile(class);
    let flag = |rng: &mut ChaCha8Rng, prob: f64| {
        if rng.gen_bool(lerp(prob, BASE_PAIN, overlap).clamp(0.0, 1.0)) {
            YesNo::Yes
        } else {
            YesNo::No
        }
    };
    let age = normal(
        rng,
        lerp(p.age_mean, BASE_AGE, overlap),
        p.age_sd * (1.0 + overlap),
    )
    .clamp(6.0, 90.0);
    let bmi = normal(rng, 23.0, 3.0).clamp(14.0, 45.0);
    let abdominal_pain = flag(rng, p.pain_p);
    let abdominal_bloating = flag(rng, p.bloat_p);
    let ca125 = marker(rng, p.ca125_med, BASE_CA125, overlap);
    let cea = marker(rng, p.cea_med, BASE_CEA, overlap);
    let ca199 = marker(rng, p.ca199_med, BASE_CA199, overlap);
    let afp = marker(rng, p.afp_med, BASE_AFP, overlap);
    let ca153 = marker(rng, p.ca153_med, BASE_CA153, overlap);
    let max_diameter = normal(
        rng,
        lerp(p.diam_mean, BASE_DIAM, overlap),
        p.diam_sd * (1.0 + overlap),
    )
    .clamp(1.0, 30.0);
    TabularRecord {
        age,
        bmi,
        abdominal_pain,
        abdominal_bloating,
        ca125,
        cea,
        ca199,
        afp,
        ca153,
        max_diameter,
    }
}

// ---- report text ----------------------------------------------------------

const GENERIC_SENTENCES: [&str; 6] = [
    "the uterus appears unremarkable",
    "no free fluid is seen in the pelvis",
    "the contralateral ovary is normal in size",
    "an adnexal lesion is identified",
    "the lesion margins are traced in two planes",
    "color doppler was applied to the lesion",
];

fn class_sentences(class: TumorClass) -> [&'static str; 4] {
    use TumorClass::*;
    match class {
        MatureCysticTeratoma => [
            "heterogeneous cystic mass containing echogenic fat and hair elements",
            "a densely echogenic dermoid plug casts an acoustic shadow",
            "bright speckled foci float within the cyst",
            "fat fluid level suggests sebaceous content",
        ],
        EndometrioticCyst => [
            "homogeneous ground glass echoes fill the cyst",
            "diffuse low level internal echoes without solid parts",
            "the chocolate cyst wall is smooth and moderately thick",
            "no internal vascularity within the ground glass content",
        ],
        SerousCystadenoma => [
            "unilocular anechoic cyst with a thin smooth wall",
            "clear fluid content without septation or solid component",
            "posterior acoustic enhancement behind the simple cyst",
            "the thin wall shows no papillary projection",
        ],
        MucinousCystadenoma => [
            "large multilocular cyst with numerous thin septations",
            "locules show differing echogenicity of mucinous content",
            "honeycomb pattern of many small compartments",
            "septa are regular without nodularity",
        ],
        ThecomaFibroma => [
            "well defined solid hypoechoic ovoid mass",
            "solid lesion with marked posterior acoustic attenuation",
            "homogeneous solid echotexture without cystic space",
            "minimal peripheral blood flow around the solid mass",
        ],
        HighGradeSerousCarcinoma => [
            "irregular solid cystic mass with thick septations",
            "papillary projections arise from the irregular inner wall",
            "marked internal vascularity within solid components",
            "the thick wall is irregular with mural nodules",
        ],
    }
}

fn sample_report(class: TumorClass, text_noise: f64, rng: &mut ChaCha8Rng) -> String {
    let pool = class_sentences(class);
    let n_class = rng.gen_range(2..=3usize);
    let n_generic = rng.gen_range(1..=2usize);
    let mut sentences = Vec::with_capacity(n_class + n_generic);
    // Distinct class sentences, order preserved from the pool.
    let mut picks: Vec<usize> = (0..pool.len()).collect();
    for k in 0..n_class {
        let idx = rng.gen_range(0..picks.len());
        let s = pool[picks.remove(idx)];
        if rng.gen_bool(text_noise) {
            sentences.push(GENERIC_SENTENCES[rng.gen_range(0..GENERIC_SENTENCES.len())]);
        } else {
            sentences.push(s);
        }
        let _ = k;
    }
    for _ in 0..n_generic {
        sentences.push(GENERIC_SENTENCES[rng.gen_range(0..GENERIC_SENTENCES.len())]);
    }
    let mut text = sentences.join(". ");
    text.push('.');
    text
}

// ---- images ----------------------------------------------------------------

struct Canvas {
    size: usize,
    bg: f64,
    contrast: f64,
    px: Vec<f64>,
}

impl Canvas {
    fn new(size: usize, bg: f64, contrast: f64, noise_sd: f64, rng: &mut ChaCha8Rng) -> Self {
        let px = (0..size * size)
            .map(|_| bg + normal(rng, 0.0, noise_sd))
            .collect();
        Canvas {
            size,
            bg,
            contrast,
            px,
        }
    }

    fn paint(&mut self, x: usize, y: usize, value: f64) {
        let toned = self.bg + (value - self.bg) * self.contrast;
        self.px[y * self.size + x] = toned;
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, value: f64) {
        self.ellipse(cx, cy, r, r, value);
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, value: f64) {
        for y in 0..self.size {
            for x in 0..self.size {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.paint(x, y, value);
                }
            }
        }
    }

    fn ring(&mut self, cx: f64, cy: f64, r: f64, thickness: f64, value: f64) {
        let inner = (r - thickness).max(0.0);
        for y in 0..self.size {
            for x in 0..self.size {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let d = (dx * dx + dy * dy).sqrt();
                if d <= r && d >= inner {
                    self.paint(x, y, value);
                }
            }
        }
    }

    /// Straight chord across a disc (a septation line).
    fn chord(&mut self, cx: f64, cy: f64, r: f64, angle: f64, value: f64) {
        let (sin, cos) = angle.sin_cos();
        let steps = (2.0 * r) as usize + 1;
        for s in 0..=steps {
            let t = s as f64 - r;
            let x = cx + t * cos;
            let y = cy + t * sin;
            if x >= 0.0 && y >= 0.0 && (x as usize) < self.size && (y as usize) < self.size {
                self.paint(x as usize, y as usize, value);
            }
        }
    }

    fn finish(self) -> Vec<u8> {
        self.px
            .into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Render one slice of the given class.
fn sample_slice(class: TumorClass, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let s = cfg.image_size as f64;
    let mut canvas = Canvas::new(
        cfg.image_size,
        30.0,
        cfg.image_contrast,
        cfg.image_noise * 255.0,
        rng,
    );
    let cx = s / 2.0 + rng.gen_range(-s / 8.0..s / 8.0);
    let cy = s / 2.0 + rng.gen_range(-s / 8.0..s / 8.0);
    let r = s * rng.gen_range(0.22..0.30);
    use TumorClass::*;
    match class {
        MatureCysticTeratoma => {
            canvas.ring(cx, cy, r, 1.5, 200.0);
            canvas.disc(cx, cy, r - 1.5, 170.0);
            for _ in 0..rng.gen_range(6..10) {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = rng.gen_range(0.0..(r - 3.0).max(1.0));
                canvas.disc(cx + d * a.cos(), cy + d * a.sin(), 1.2, 250.0);
            }
        }
        EndometrioticCyst => {
            canvas.ring(cx, cy, r, 1.5, 180.0);
            canvas.disc(cx, cy, r - 1.5, 115.0);
        }
        SerousCystadenoma => {
            canvas.ring(cx, cy, r, 1.2, 220.0);
            canvas.disc(cx, cy, r - 1.2, 15.0);
        }
        MucinousCystadenoma => {
            canvas.ring(cx, cy, r, 1.2, 200.0);
            canvas.disc(cx, cy, r - 1.2, 35.0);
            for _ in 0..rng.gen_range(2..4) {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                canvas.chord(cx, cy, r - 1.0, a, 190.0);
            }
        }
        ThecomaFibroma => {
            let aspect = rng.gen_range(0.5..0.65);
            if rng.gen_bool(0.5) {
                canvas.ellipse(cx, cy, r * 1.2, r * 1.2 * aspect, 150.0);
            } else {
                canvas.ellipse(cx, cy, r * 1.2 * aspect, r * 1.2, 150.0);
            }
        }
        HighGradeSerousCarcinoma => {
            canvas.ring(cx, cy, r, 2.8, 210.0);
            canvas.disc(cx, cy, r - 2.8, 45.0);
            for _ in 0..rng.gen_range(2..5) {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = r - 3.0;
                canvas.disc(cx + d * a.cos(), cy + d * a.sin(), 2.2, 235.0);
            }
        }
    }
    canvas.finish()
}

/// Generate the dataset on disk: `images/*.pgm` plus `manifest.jsonl`.
/// Returns the manifest path.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf, DataError> {
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| DataError::Io {
        path: images_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_per_class * TumorClass::ALL.len());
    for class in TumorClass::ALL {
        for i in 0..cfg.n_per_class {
            let id = format!("{}_{i:03}", class.name());
            let tabular = sample_tabular(class, cfg.marker_overlap, &mut rng);
            let report = sample_report(class, cfg.text_noise, &mut rng);
            let n_slices = rng.gen_range(1..=cfg.max_slices);
            let mut images = Vec::with_capacity(n_slices);
            for k in 0..n_slices {
                let pixels = sample_slice(class, cfg, &mut rng);
                let slice =
                    crate::encoders::ImageSlice::new(cfg.image_size, cfg.image_size, pixels)
                        .expect("generated slices satisfy the size contract");
                let rel = format!("images/{id}_s{k}.pgm");
                pgm::write(&out_dir.join(&rel), &slice)?;
                images.push(rel);
            }
            records.push(CaseRecord {
                id,
                label: class,
                images,
                tabular,
                report,
            });
        }
    }
    let manifest = out_dir.join("manifest.jsonl");
    save_manifest(&manifest, &records)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_manifest;
    use std::collections::BTreeMap;

    fn digest_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        fn walk(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
            let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            for path in entries {
                if path.is_dir() {
                    walk(&path, base, out);
                } else {
                    let rel = path.strip_prefix(base).unwrap().display().to_string();
                    out.insert(rel, fs::read(&path).unwrap());
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(dir, dir, &mut out);
        out
    }

    #[test]
    fn same_seed_gives_byte_identical_trees() {
        let cfg = SynthConfig {
            n_per_class: 3,
            max_slices: 2,
            ..SynthConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&cfg, a.path()).unwrap();
        generate(&cfg, b.path()).unwrap();
        let (ta, tb) = (digest_tree(a.path()), digest_tree(b.path()));
        assert_eq!(ta.len(), tb.len());
        assert_eq!(ta, tb);

        let mut cfg2 = cfg;
        cfg2.seed = 8;
        let c = tempfile::tempdir().unwrap();
        generate(&cfg2, c.path()).unwrap();
        assert_ne!(digest_tree(c.path()), ta);
    }

    #[test]
    fn class_counts_match_config() {
        let cfg = SynthConfig {
            n_per_class: 4,
            max_slices: 2,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&cfg, dir.path()).unwrap();
        let records = load_manifest(&manifest).unwrap();
        assert_eq!(records.len(), 24);
        for class in TumorClass::ALL {
            assert_eq!(records.iter().filter(|r| r.label == class).count(), 4);
        }
        for r in &records {
            assert!(!r.images.is_empty() && r.images.len() <= 2);
        }
    }

    #[test]
    fn every_image_reference_loads_at_declared_size() {
        let cfg = SynthConfig {
            n_per_class: 2,
            max_slices: 3,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&cfg, dir.path()).unwrap();
        let records = load_manifest(&manifest).unwrap();
        for r in &records {
            for image in &r.images {
                let slice = pgm::read(&dir.path().join(image)).unwrap();
                assert_eq!(slice.width(), cfg.image_size);
                assert_eq!(slice.height(), cfg.image_size);
            }
        }
    }

    #[test]
    fn ca125_class_means_are_ordered_as_documented() {
        // Sample-mean oracle over the generator contract: carcinoma mean
        // highest, endometriotic second, the rest below both.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mean = |class: TumorClass, rng: &mut ChaCha8Rng| {
            let total: f64 = (0..200)
                .map(|_| sample_tabular(class, 0.0, rng).ca125)
                .sum();
            total / 200.0
        };
        let carcinoma = mean(TumorClass::HighGradeSerousCarcinoma, &mut rng);
        let endo = mean(TumorClass::EndometrioticCyst, &mut rng);
        let others: Vec<f64> = [
            TumorClass::MatureCysticTeratoma,
            TumorClass::SerousCystadenoma,
            TumorClass::MucinousCystadenoma,
            TumorClass::ThecomaFibroma,
        ]
        .into_iter()
        .map(|c| mean(c, &mut rng))
        .collect();
        assert!(carcinoma > endo, "carcinoma {carcinoma} vs endometriotic {endo}");
        for o in others {
            assert!(endo > o, "endometriotic {endo} vs other {o}");
        }
    }

    #[test]
    fn carcinoma_pain_probability_is_elevated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let count = (0..500)
            .filter(|_| {
                sample_tabular(TumorClass::HighGradeSerousCarcinoma, 0.0, &mut rng).abdominal_pain
                    == YesNo::Yes
            })
            .count();
        let p = count as f64 / 500.0;
        assert!((p - 0.8).abs() < 0.06, "pain frequency {p}");
    }

    #[test]
    fn records_validate_and_overlap_pulls_ages_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for class in TumorClass::ALL {
            for _ in 0..50 {
                sample_tabular(class, 0.5, &mut rng).validate().unwrap();
            }
        }
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let sep: f64 = (0..200)
            .map(|_| sample_tabular(TumorClass::MatureCysticTeratoma, 0.0, &mut rng_a).age)
            .sum::<f64>()
            / 200.0;
        let pulled: f64 = (0..200)
            .map(|_| sample_tabular(TumorClass::MatureCysticTeratoma, 1.0, &mut rng_b).age)
            .sum::<f64>()
            / 200.0;
        assert!(pulled > sep, "overlap should pull teratoma ages toward the baseline");
    }

    #[test]
    fn hardened_config_validates() {
        SynthConfig::hardened(3).validate().unwrap();
        let mut bad = SynthConfig::default();
        bad.image_size = 30;
        assert!(bad.validate().is_err());
        bad = SynthConfig::default();
        bad.n_per_class = 1;
        assert!(bad.validate().is_err());
    }
}
