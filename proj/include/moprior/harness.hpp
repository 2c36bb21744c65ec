#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moprior/energy.hpp"
#include "moprior/eval.hpp"
#include "moprior/manifold.hpp"
#include "moprior/parallel.hpp"
#include "moprior/synth.hpp"
#include "moprior/udf.hpp"

namespace moprior {

// Reusable pipeline pieces shared by the CLI, the experiment harnesses and
// the test suites: synthesize a motion corpus, derive off-manifold training
// data from it, and assemble a full per-joint model.

struct SuiteConfig {
  int walk = 4;
  int arm_swing = 2;
  int squat = 2;
  int random_spline = 2;
  int frames = 120;
  int fps = 25;
  std::uint64_t seed = 1;
};

inline std::vector<MotionSequence> build_suite(const SuiteConfig& cfg,
                                               const Skeleton& skel = default_skeleton()) {
  std::vector<MotionSequence> out;
  std::uint64_t s = cfg.seed;
  for (int i = 0; i < cfg.walk; ++i)
    out.push_back(synthesize_motion(SynthKind::WalkCycle, cfg.frames, cfg.fps, s++, skel));
  for (int i = 0; i < cfg.arm_swing; ++i)
    out.push_back(synthesize_motion(SynthKind::ArmSwing, cfg.frames, cfg.fps, s++, skel));
  for (int i = 0; i < cfg.squat; ++i)
    out.push_back(synthesize_motion(SynthKind::Squat, cfg.frames, cfg.fps, s++, skel));
  for (int i = 0; i < cfg.random_spline; ++i)
    out.push_back(synthesize_motion(SynthKind::RandomSpline, cfg.frames, cfg.fps, s++, skel));
  return out;
}

struct ModelBuildConfig {
  int segment_length = 16;  // T
  int zero_cap = 4000;
  int negatives_per_joint = 2000;
  int knn_k = kDefaultKnnK;
  // Corruption ladder for off-manifold data: magnitudes are cycled across
  // the generated noisy sequences so labels span a wide distance range.
  std::vector<double> noise_magnitudes{0.01, 0.02, 0.05, 0.1, 0.2};
  CorruptionKind noise_kind = CorruptionKind::GaussianPositions;
  TrainConfig train;
  // Optional second pass on a different corruption model (rotation-space
  // noise pushed through FK), standing in for fine-tuning on estimator
  // output: noise that is closer to the manifold refines the surface.
  bool two_stage = false;
  std::vector<double> stage2_rotation_magnitudes{0.1, 0.2, 0.35};
  double stage2_lr_scale = 0.25;
  int stage2_epochs = 0;  // 0 = half of train.epochs
  int threads = 1;
  std::uint64_t seed = 7;
};

struct ModelBuildResult {
  ManifoldModel model;
  std::vector<std::vector<EpochStats>> curves;  // per trained joint, model order
};

// Off-manifold acceleration vectors for one joint: corrupt suite sequences
// at the given magnitudes (cycled) and sample segment windows from them.
inline std::vector<AccelVector> sample_negative_accels(const std::vector<MotionSequence>& suite,
                                                       int segment_length, int count, int joint,
                                                       CorruptionKind kind,
                                                       const std::vector<double>& magnitudes,
                                                       std::uint64_t seed,
                                                       const Skeleton* skel = nullptr) {
  Rng rng(seed);
  std::vector<AccelVector> out;
  out.reserve(count);
  int guard = 0;
  while (static_cast<int>(out.size()) < count) {
    const MotionSequence& base = suite[rng.below(suite.size())];
    double magnitude = magnitudes[out.size() % magnitudes.size()];
    CorruptionSpec spec;
    spec.kind = kind;
    spec.magnitude = magnitude;
    // Part of the frames left clean, matching how estimator noise arrives in
    // bursts rather than uniformly.
    spec.frame_fraction = 0.5 + 0.5 * rng.uniform();
    spec.seed = rng.next_u64();
    MotionSequence noisy = corrupt(base, spec, skel).sequence;
    int max_start = noisy.frame_count() - segment_length;
    if (max_start < 0) {
      if (++guard > 1000) throw ValidationError("suite sequences are shorter than the segment length");
      continue;
    }
    int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_start + 1)));
    out.push_back(acceleration(extract_segment(noisy, start, segment_length), joint));
  }
  return out;
}

// Build zero-level sets, label negatives by KNN against them, and train one
// field per non-excluded joint. Per-joint work is independent and runs on
// cfg.threads workers; outputs do not depend on the thread count.
inline ModelBuildResult train_manifold_model(const std::vector<MotionSequence>& suite,
                                             const ModelBuildConfig& cfg,
                                             const Skeleton& skel = default_skeleton()) {
  if (suite.empty()) throw ValidationError("empty training suite");
  const int fps = suite.front().fps;
  for (const MotionSequence& s : suite)
    if (s.fps != fps) throw ValidationError("training suite mixes frame rates");

  ModelBuildResult result;
  result.model.segment_length = cfg.segment_length;
  result.model.fps = fps;
  result.model.weights = joint_weights(skel);

  std::vector<int> joints;
  for (int j = 0; j < skel.joint_count(); ++j)
    if (!excluded_joints().count(j)) joints.push_back(j);

  std::vector<TrainResult> trained(joints.size());
  parallel_for(static_cast<int>(joints.size()), cfg.threads, [&](int idx) {
    int j = joints[idx];
    std::uint64_t jseed = cfg.seed * 1000003ull + static_cast<std::uint64_t>(j);
    ZeroLevelSet zl = build_zero_level(suite, cfg.segment_length, j, /*stride=*/1, cfg.zero_cap,
                                       jseed);
    std::vector<AccelVector> raw =
        sample_negative_accels(suite, cfg.segment_length, cfg.negatives_per_joint, j,
                               cfg.noise_kind, cfg.noise_magnitudes, jseed ^ 0xD1B54A32D192ED03ull);
    std::vector<LabeledSample> negatives = label_dataset(raw, zl, cfg.knn_k);
    TrainConfig tc = cfg.train;
    tc.seed = jseed;
    trained[idx] = train_joint_udf(zl, negatives, tc);

    if (cfg.two_stage) {
      std::vector<AccelVector> raw2 =
          sample_negative_accels(suite, cfg.segment_length, cfg.negatives_per_joint, j,
                                 CorruptionKind::UniformRotations, cfg.stage2_rotation_magnitudes,
                                 jseed ^ 0x8CB92BA72F3D8DD7ull, &skel);
      std::vector<LabeledSample> negatives2 = label_dataset(raw2, zl, cfg.knn_k);
      TrainConfig tc2 = tc;
      tc2.adam.lr *= cfg.stage2_lr_scale;
      tc2.epochs = cfg.stage2_epochs > 0 ? cfg.stage2_epochs : std::max(1, tc.epochs / 2);
      tc2.seed = jseed ^ 0x2545F4914F6CDD1Dull;
      TrainResult stage2 = train_joint_udf(zl, negatives2, tc2, &trained[idx].net.params);
      for (EpochStats es : stage2.curve) {
        es.epoch += static_cast<int>(trained[idx].curve.size());
        trained[idx].curve.push_back(es);
      }
      trained[idx].net = std::move(stage2.net);
    }
  });

  for (std::size_t i = 0; i < joints.size(); ++i) {
    result.curves.push_back(trained[i].curve);
    result.model.joints[joints[i]] = std::move(trained[i].net);
  }
  result.model.validate(skel.joint_count());
  return result;
}

// ---------------------------------------------------------------------------
// Paired denoising experiment.

struct DenoiseOutcome {
  double noisy_mje = 0.0;      // mean joint error of the corrupted input, mm
  double optimized_mje = 0.0;  // after optimization, mm
  double noisy_accel = 0.0;    // acceleration error of the input, mm/frame^2
  double optimized_accel = 0.0;
};

inline DenoiseOutcome denoise_once(const ManifoldModel* model, const MotionSequence& clean,
                                   const MotionSequence& noisy, const EnergyConfig& cfg) {
  Observation obs = Observation::from_sequence(noisy);
  MotionSequence init = noisy;
  init.rotations.clear();  // position-space optimization
  OptimizeResult r = optimize_sequence(model, init, &obs, cfg, nullptr);
  DenoiseOutcome o;
  o.noisy_mje = mean_joint_error(noisy, clean);
  o.optimized_mje = mean_joint_error(r.sequence, clean);
  o.noisy_accel = accel_error(noisy, clean);
  o.optimized_accel = accel_error(r.sequence, clean);
  return o;
}

// ---------------------------------------------------------------------------
// Ablation harnesses.

struct AblationRow {
  std::string label;
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double accel_err = 0.0;
  double mje_mm = 0.0;
  bool is_default = false;
};

struct AblationSuiteConfig {
  SuiteConfig train_suite;
  int eval_sequences = 4;
  int eval_frames = 60;
  double noise_magnitude = 0.087;
  EnergyConfig energy;
  std::uint64_t seed = 33;
};

// One denoising pass over a small corrupted evaluation set; shared by both
// ablation tables. When artifact_dir is set, the clean/noisy/denoised
// sequences are written there so every row can be recomputed from disk.
inline AblationRow ablation_eval(const ManifoldModel* model, const EnergyConfig& cfg,
                                 const AblationSuiteConfig& acfg, const std::string& label,
                                 const std::string& artifact_dir = "") {
  AblationRow row;
  row.label = label;
  double mp = 0.0, pa = 0.0, ac = 0.0, mj = 0.0;
  for (int i = 0; i < acfg.eval_sequences; ++i) {
    MotionSequence clean = synthesize_motion(SynthKind::WalkCycle, acfg.eval_frames,
                                             acfg.train_suite.fps, acfg.seed + 100 + i);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::GaussianPositions;
    spec.magnitude = acfg.noise_magnitude;
    spec.seed = acfg.seed + 200 + i;
    MotionSequence noisy = corrupt(clean, spec).sequence;
    Observation obs = Observation::from_sequence(noisy);
    MotionSequence init = noisy;
    init.rotations.clear();
    OptimizeResult r = optimize_sequence(model, init, &obs, cfg, nullptr);
    MetricReport m = evaluate(r.sequence, clean);
    mp += m.mpjpe_mm;
    pa += m.pa_mpjpe_mm;
    ac += m.accel_err;
    mj += mean_joint_error(r.sequence, clean);
    if (!artifact_dir.empty()) {
      std::string stem = artifact_dir + "/" + label + "_seq" + std::to_string(i);
      write_native(clean, stem + "_clean.mseq");
      write_native(noisy, stem + "_noisy.mseq");
      write_native(r.sequence, stem + "_denoised.mseq");
    }
  }
  row.mpjpe_mm = mp / acfg.eval_sequences;
  row.pa_mpjpe_mm = pa / acfg.eval_sequences;
  row.accel_err = ac / acfg.eval_sequences;
  row.mje_mm = mj / acfg.eval_sequences;
  return row;
}

// Trains one model per requested segment length and evaluates each on the
// same corrupted suite. The 16-frame row is flagged as the default.
inline std::vector<AblationRow> ablation_segment_length(const std::vector<int>& lengths,
                                                        const ModelBuildConfig& build,
                                                        const AblationSuiteConfig& acfg,
                                                        const std::string& artifact_dir = "") {
  std::vector<MotionSequence> suite = build_suite(acfg.train_suite);
  std::vector<AblationRow> rows;
  for (int L : lengths) {
    ModelBuildConfig b = build;
    b.segment_length = L;
    ModelBuildResult mb = train_manifold_model(suite, b);
    EnergyConfig cfg = acfg.energy;
    cfg.window_length = L;
    AblationRow row = ablation_eval(&mb.model, cfg, acfg, "L" + std::to_string(L), artifact_dir);
    row.is_default = (L == 16);
    rows.push_back(row);
  }
  return rows;
}

// Runs the denoising pass once per term mode with a shared model.
inline std::vector<AblationRow> ablation_terms(const ManifoldModel& model,
                                               const AblationSuiteConfig& acfg,
                                               const std::string& artifact_dir = "") {
  std::vector<AblationRow> rows;
  for (TermMode mode : {TermMode::TemporalOnly, TermMode::MotionOnly, TermMode::Fusion}) {
    EnergyConfig cfg = acfg.energy;
    cfg.mode = mode;
    cfg.window_length = model.segment_length;
    rows.push_back(ablation_eval(&model, cfg, acfg, to_string(mode), artifact_dir));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Corrupted segment pairs for the correlation analysis.

struct SegmentPairs {
  std::vector<MotionSegment> corrupted;
  std::vector<MotionSegment> clean;
};

// Draw segments from fresh synthetic sequences with a graded noise ladder
// (including zero noise) so both distances and errors span a wide range.
inline SegmentPairs make_corrupted_segment_pairs(int count, int segment_length, int fps,
                                                 std::uint64_t seed) {
  SegmentPairs out;
  Rng rng(seed);
  const SynthKind kinds[4] = {SynthKind::WalkCycle, SynthKind::ArmSwing, SynthKind::Squat,
                              SynthKind::RandomSpline};
  int made = 0;
  while (made < count) {
    SynthKind kind = kinds[rng.below(4)];
    MotionSequence clean = synthesize_motion(kind, segment_length + 8, fps, rng.next_u64());
    double magnitude = 0.12 * rng.uniform();  // includes nearly-clean draws
    CorruptionSpec spec;
    spec.kind = CorruptionKind::GaussianPositions;
    spec.magnitude = magnitude;
    spec.seed = rng.next_u64();
    MotionSequence noisy = corrupt(clean, spec).sequence;
    int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(clean.frame_count() - segment_length + 1)));
    out.corrupted.push_back(extract_segment(noisy, start, segment_length));
    out.clean.push_back(extract_segment(clean, start, segment_length));
    ++made;
  }
  return out;
}

}  // namespace moprior
