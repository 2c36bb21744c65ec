#pragma once

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "moprior/moprior.hpp"

namespace moprior::cli {

// Exit codes, one per error category.
enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,        // unknown flags / bad invocation
  kBadConfig = 3,    // config or domain validation
  kIo = 4,           // missing files, unwritable paths
  kBadFile = 5,      // malformed input file
  kBadShape = 6,     // dimension mismatches
  kBadVersion = 7,   // format or model/runtime version mismatch
  kNumeric = 8,      // divergence, degenerate rotations
  kDrift = 9,        // reproduction found differing artifacts
};

namespace detail {

inline int threads_default() {
  if (const char* env = std::getenv("MOPRIOR_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

// Relative output paths are optionally rooted in MOPRIOR_OUT_DIR.
inline std::string out_path(const std::string& path) {
  const char* env = std::getenv("MOPRIOR_OUT_DIR");
  if (!env || !*env) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(env) / p).string();
}

inline void ensure_parent_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  return out;
}

// "0-5,15" -> frame flags.
inline std::vector<std::uint8_t> parse_frame_ranges(const std::string& s, int frames) {
  std::vector<std::uint8_t> flags(frames, 0);
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t dash = tok.find('-');
    int lo, hi;
    try {
      if (dash == std::string::npos) {
        lo = hi = std::stoi(tok);
      } else {
        lo = std::stoi(tok.substr(0, dash));
        hi = std::stoi(tok.substr(dash + 1));
      }
    } catch (const std::exception&) {
      throw ConfigError("bad frame range token: '" + tok + "'");
    }
    if (lo < 0 || hi >= frames || lo > hi)
      throw ConfigError("frame range " + tok + " is outside 0.." + std::to_string(frames - 1));
    for (int f = lo; f <= hi; ++f) flags[f] = 1;
  }
  return flags;
}

// Tracks what a command wrote, then drops the run summary next to the first
// artifact and optionally appends a step record to a manifest.
class RunRecorder {
 public:
  RunRecorder(std::string subcommand, std::vector<std::string> argv)
      : subcommand_(std::move(subcommand)), argv_(std::move(argv)) {}

  void add(const std::string& path) { artifacts_.push_back(path); }
  void option(const std::string& key, const nlohmann::json& value) { options_[key] = value; }

  void finish(const std::string& summary_path, const std::string& manifest_path,
              std::ostream& out) const {
    nlohmann::json digests = nlohmann::json::object();
    for (const std::string& p : artifacts_) digests[p] = digest_hex(file_digest(p));

    nlohmann::json summary;
    summary["subcommand"] = subcommand_;
    summary["options"] = options_;
    summary["artifacts"] = digests;
    std::string spath = summary_path;
    if (spath.empty() && !artifacts_.empty()) spath = artifacts_.front() + ".run.json";
    if (!spath.empty()) {
      ensure_parent_dir(spath);
      std::ofstream s(spath);
      if (!s) throw IoError("cannot write run summary: " + spath);
      s << summary.dump(2) << "\n";
    }

    if (!manifest_path.empty()) {
      nlohmann::json manifest;
      manifest["steps"] = nlohmann::json::array();
      {
        std::ifstream in(manifest_path);
        if (in) {
          try {
            in >> manifest;
          } catch (const std::exception& e) {
            throw ParseError("bad manifest json: " + std::string(e.what()));
          }
        }
      }
      nlohmann::json step;
      step["argv"] = argv_;
      step["artifacts"] = digests;
      manifest["steps"].push_back(step);
      ensure_parent_dir(manifest_path);
      std::ofstream m(manifest_path);
      if (!m) throw IoError("cannot write manifest: " + manifest_path);
      m << manifest.dump(2) << "\n";
    }
    out << "wrote " << artifacts_.size() << " artifact(s)";
    if (!spath.empty()) out << ", summary " << spath;
    out << "\n";
  }

 private:
  std::string subcommand_;
  std::vector<std::string> argv_;
  std::vector<std::string> artifacts_;
  nlohmann::json options_ = nlohmann::json::object();
};

inline EnergyConfig energy_config_from_json(const nlohmann::json& j) {
  EnergyConfig cfg;
  cfg.lambda_obs = j.value("lambda_obs", cfg.lambda_obs);
  cfg.lambda_prior = j.value("lambda_prior", cfg.lambda_prior);
  cfg.lambda_pose = j.value("lambda_pose", cfg.lambda_pose);
  if (j.contains("mode")) cfg.mode = term_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("rotation")) {
    std::string r = j.at("rotation").get<std::string>();
    if (r == "axis-angle")
      cfg.rotation = RotationParam::AxisAngle;
    else if (r == "6d")
      cfg.rotation = RotationParam::SixD;
    else
      throw ConfigError("unknown rotation parameterization: " + r);
  }
  cfg.adam.lr = j.value("lr", cfg.adam.lr);
  cfg.adam.beta1 = j.value("beta1", cfg.adam.beta1);
  cfg.adam.beta2 = j.value("beta2", cfg.adam.beta2);
  cfg.adam.eps = j.value("eps", cfg.adam.eps);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.window_length = j.value("window_length", cfg.window_length);
  cfg.stride = j.value("stride", cfg.stride);
  cfg.ema_factor = j.value("ema_factor", cfg.ema_factor);
  return cfg;
}

inline EnergyConfig load_energy_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError("bad config json: " + std::string(e.what()));
  }
  return energy_config_from_json(j);
}

inline void write_iteration_log(const std::vector<IterationRow>& log, const std::string& path) {
  CsvWriter csv(path);
  csv.header({"iter", "e_obs", "e_motion", "e_temporal", "total"});
  for (const IterationRow& r : log)
    csv.field(r.iter).field(r.e_obs).field(r.e_motion).field(r.e_temporal).field(r.total).end_row();
}

// Shared flags of the optimization subcommands, bound by reference into the
// CLI11 app so explicit flags win over --config values.
struct OptimizerFlags {
  std::string config_path;
  std::string mode;
  std::string space = "positions";
  double lambda_obs = -1.0;
  double lambda_prior = -1.0;
  double lr = -1.0;
  int iterations = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON energy config (keys mirror the config struct)");
    cmd->add_option("--mode", mode, "energy term: temporal-only | motion-only | fusion");
    cmd->add_option("--space", space, "optimization space: positions | rotations")
        ->check(CLI::IsMember({"positions", "rotations"}));
    cmd->add_option("--lambda-obs", lambda_obs, "observation weight");
    cmd->add_option("--lambda-prior", lambda_prior, "prior weight");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--iterations", iterations, "Adam iterations");
  }

  EnergyConfig resolve(TermMode default_mode) const {
    EnergyConfig cfg;
    if (!config_path.empty()) cfg = load_energy_config(config_path);
    cfg.mode = mode.empty() ? (config_path.empty() ? default_mode : cfg.mode)
                            : term_mode_from_string(mode);
    if (lambda_obs >= 0) cfg.lambda_obs = lambda_obs;
    if (lambda_prior >= 0) cfg.lambda_prior = lambda_prior;
    if (lr > 0) cfg.adam.lr = lr;
    if (iterations > 0) cfg.iterations = iterations;
    return cfg;
  }
};

}  // namespace detail

inline int dispatch(std::vector<std::string> args, std::ostream& out);

namespace detail {

// Replays every step of a manifest into a scratch directory and compares
// artifact digests against the recorded ones.
inline int run_reproduce(const std::string& manifest_path, std::string scratch,
                         std::ostream& out) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw ParseError("bad manifest json: " + std::string(e.what()));
  }
  if (scratch.empty()) scratch = manifest_path + ".replay";
  std::filesystem::create_directories(scratch);

  std::map<std::string, std::string> remap;  // original artifact path -> scratch path
  int step_no = 0;
  int drift = 0;
  for (const auto& step : manifest.at("steps")) {
    std::vector<std::string> argv;
    for (const auto& tok : step.at("argv")) argv.push_back(tok.get<std::string>());
    // Outputs (and inputs that were produced by earlier steps) move into the
    // scratch tree.
    for (const auto& [path, digest] : step.at("artifacts").items()) {
      if (!remap.count(path))
        remap[path] = scratch + "/s" + std::to_string(step_no) + "_" +
                      std::filesystem::path(path).filename().string();
    }
    for (std::string& tok : argv) {
      auto it = remap.find(tok);
      if (it != remap.end()) tok = it->second;
    }
    int rc = dispatch(argv, out);
    if (rc != kOk) {
      out << "replay step " << step_no << " failed with exit code " << rc << "\n";
      return rc;
    }
    for (const auto& [path, digest] : step.at("artifacts").items()) {
      std::string replay_digest = digest_hex(file_digest(remap.at(path)));
      if (replay_digest != digest.get<std::string>()) {
        out << "drift: step " << step_no << " artifact " << path << " recorded "
            << digest.get<std::string>() << " replayed " << replay_digest << "\n";
        ++drift;
      }
    }
    ++step_no;
  }
  if (drift) {
    out << drift << " artifact(s) drifted\n";
    return kDrift;
  }
  out << "replayed " << step_no << " step(s), zero drift\n";
  return kOk;
}

}  // namespace detail

// Entry point shared by the binary and the tests. args excludes argv[0].
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout) {
  using namespace detail;

  CLI::App app{"motion-prior toolkit: acceleration-manifold distance fields for motion denoising,"
               " completion, smoothing, in-betweening and generation"};
  app.require_subcommand(1);
  std::string manifest_path;
  std::string summary_path;
  app.add_option("--manifest", manifest_path, "append a step record to this run manifest");
  app.add_option("--summary", summary_path, "run summary path (default: <first output>.run.json)");

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic motion sequence");
  struct {
    std::string kind = "walk-cycle";
    int frames = 128;
    int fps = 25;
    std::uint64_t seed = 0;
    std::string out_file;
  } sy;
  synth->add_option("--kind", sy.kind, "walk-cycle | arm-swing | squat | random-spline");
  synth->add_option("--frames", sy.frames, "frame count (>= 5)");
  synth->add_option("--fps", sy.fps, "frame rate in Hz");
  synth->add_option("--seed", sy.seed, "RNG seed");
  synth->add_option("--out", sy.out_file, "output motion file")->required();

  // --- ingest --------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "read a BVH file into the native motion format");
  struct {
    std::string bvh;
    std::string out_file;
    int target_fps = 0;
    bool interpolate = false;
  } ig;
  ingest->add_option("--bvh", ig.bvh, "input BVH file")->required();
  ingest->add_option("--out", ig.out_file, "output motion file")->required();
  ingest->add_option("--target-fps", ig.target_fps, "resample to this frame rate after ingestion");
  ingest->add_flag("--interpolate", ig.interpolate, "allow non-integer resampling ratios");

  // --- corrupt ---------------------------------------------------------------
  auto* corrupt_cmd = app.add_subcommand("corrupt", "apply a corruption operator to a sequence");
  struct {
    std::string in_file, out_file, mask_file, joints;
    std::string kind = "gaussian-positions";
    double magnitude = 0.087;
    double frame_fraction = 1.0;
    std::uint64_t seed = 0;
    bool fk_refresh = false;
  } co;
  corrupt_cmd->add_option("--in", co.in_file, "input motion file")->required();
  corrupt_cmd->add_option("--out", co.out_file, "corrupted output motion file")->required();
  corrupt_cmd->add_option("--kind", co.kind,
                          "gaussian-positions | uniform-rotations | occlusion");
  corrupt_cmd->add_option("--magnitude", co.magnitude,
                          "mean displacement (m) or rotation range (rad)");
  corrupt_cmd->add_option("--frame-fraction", co.frame_fraction, "fraction of frames affected");
  corrupt_cmd->add_option("--seed", co.seed, "RNG seed");
  corrupt_cmd->add_option("--joints", co.joints, "occluded joint indices, e.g. 18,20,22");
  corrupt_cmd->add_option("--mask-out", co.mask_file, "write the occlusion mask here");
  corrupt_cmd->add_flag("--fk-refresh", co.fk_refresh,
                        "recompute positions by FK over the default skeleton (rotation noise)");

  // --- build-zero-level ------------------------------------------------------
  auto* bzl = app.add_subcommand("build-zero-level", "extract on-manifold acceleration vectors");
  struct {
    std::vector<std::string> inputs;
    int segment_length = 16;
    int stride = 1;
    int cap = 50000;
    std::uint64_t seed = 0;
    std::string joint = "all";
    std::string out_file;
  } zb;
  bzl->add_option("--in", zb.inputs, "clean motion files")->required()->expected(-1);
  bzl->add_option("--segment-length", zb.segment_length, "segment length T");
  bzl->add_option("--stride", zb.stride, "window start stride");
  bzl->add_option("--cap", zb.cap, "max stored points per joint");
  bzl->add_option("--seed", zb.seed, "RNG seed");
  bzl->add_option("--joint", zb.joint, "joint index, or 'all' for every non-excluded joint");
  bzl->add_option("--out", zb.out_file, "output zero-level container")->required();

  // --- label -----------------------------------------------------------------
  auto* label_cmd = app.add_subcommand("label", "KNN-label acceleration vectors as CSV");
  struct {
    std::string zero_level, in_file, out_file;
    int joint = 4;
    int k = kDefaultKnnK;
    int stride = 1;
  } lb;
  label_cmd->add_option("--zero-level", lb.zero_level, "zero-level container")->required();
  label_cmd->add_option("--in", lb.in_file, "query motion file (all stride windows used)")
      ->required();
  label_cmd->add_option("--joint", lb.joint, "joint index to label");
  label_cmd->add_option("--k", lb.k, "neighbor count");
  label_cmd->add_option("--stride", lb.stride, "window start stride");
  label_cmd->add_option("--out", lb.out_file, "output CSV (joint, d, target, vector...)")
      ->required();

  // --- train -------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train per-joint distance fields");
  struct {
    std::vector<std::string> data;
    std::string out_file, curves_file, hidden = "256,256,256";
    int segment_length = 16;
    int zero_cap = 4000;
    int negatives = 2000;
    int epochs = 30;
    int batch = 256;
    double lr = 1e-4;
    double lambda_udf = 1.0;
    double lambda_eikonal = 0.1;
    int threads = threads_default();
    std::uint64_t seed = 7;
    bool two_stage = false;
  } tr;
  train_cmd->add_option("--data", tr.data, "clean motion files (the zero level)")
      ->required()
      ->expected(-1);
  train_cmd->add_option("--out", tr.out_file, "output model checkpoint")->required();
  train_cmd->add_option("--curves", tr.curves_file, "training-curve CSV");
  train_cmd->add_option("--segment-length", tr.segment_length, "segment length T");
  train_cmd->add_option("--zero-cap", tr.zero_cap, "zero-level points per joint");
  train_cmd->add_option("--negatives", tr.negatives, "off-manifold samples per joint");
  train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  train_cmd->add_option("--batch", tr.batch, "minibatch size");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--lambda-udf", tr.lambda_udf, "distance regression weight");
  train_cmd->add_option("--lambda-eikonal", tr.lambda_eikonal, "unit-gradient weight");
  train_cmd->add_option("--hidden", tr.hidden, "hidden layer widths, e.g. 256,256,256");
  train_cmd->add_option("--threads", tr.threads, "parallel per-joint training workers");
  train_cmd->add_option("--seed", tr.seed, "RNG seed");
  train_cmd->add_flag("--two-stage", tr.two_stage,
                      "fine-tune on rotation-space noise after the first pass");

  // --- denoise / fit-partial -----------------------------------------------
  auto* denoise_cmd = app.add_subcommand("denoise", "optimize a noisy sequence against itself");
  struct {
    std::string model, in_file, out_file, gt_file, log_file;
    OptimizerFlags opt;
  } dn;
  denoise_cmd->add_option("--model", dn.model, "model checkpoint")->required();
  denoise_cmd->add_option("--in", dn.in_file, "noisy motion file")->required();
  denoise_cmd->add_option("--out", dn.out_file, "denoised output")->required();
  denoise_cmd->add_option("--gt", dn.gt_file, "clean reference; adds metrics to the summary");
  denoise_cmd->add_option("--log", dn.log_file, "iteration log CSV");
  dn.opt.attach(denoise_cmd);

  auto* fit_cmd = app.add_subcommand("fit-partial", "fit a sequence to partial observations");
  struct {
    std::string model, in_file, mask_file, out_file, gt_file, log_file;
    OptimizerFlags opt;
  } fp;
  fit_cmd->add_option("--model", fp.model, "model checkpoint")->required();
  fit_cmd->add_option("--in", fp.in_file, "occluded motion file")->required();
  fit_cmd->add_option("--mask", fp.mask_file, "occlusion mask container")->required();
  fit_cmd->add_option("--out", fp.out_file, "completed output")->required();
  fit_cmd->add_option("--gt", fp.gt_file, "clean reference; adds metrics to the summary");
  fit_cmd->add_option("--log", fp.log_file, "iteration log CSV");
  fp.opt.attach(fit_cmd);

  // --- smooth ----------------------------------------------------------------
  auto* smooth_cmd = app.add_subcommand("smooth", "sliding-window jitter mitigation");
  struct {
    std::string model, in_file, out_file, gt_file;
    double ema = 1.0;
    int threads = threads_default();
    OptimizerFlags opt;
  } sm;
  smooth_cmd->add_option("--model", sm.model, "model checkpoint")->required();
  smooth_cmd->add_option("--in", sm.in_file, "jittery motion file")->required();
  smooth_cmd->add_option("--out", sm.out_file, "smoothed output")->required();
  smooth_cmd->add_option("--gt", sm.gt_file, "clean reference; adds metrics to the summary");
  smooth_cmd->add_option("--ema", sm.ema, "global-orientation EMA factor in (0,1]; 1 = off");
  smooth_cmd->add_option("--threads", sm.threads, "parallel window workers");
  sm.opt.attach(smooth_cmd);

  // --- inbetween ---------------------------------------------------------------
  auto* inb_cmd = app.add_subcommand("inbetween", "refine motion between conditional frames");
  struct {
    std::string model, in_file, out_file, gt_file, freeze;
    bool no_init_interp = false;
    OptimizerFlags opt;
  } ib;
  inb_cmd->add_option("--model", ib.model, "model checkpoint")->required();
  inb_cmd->add_option("--in", ib.in_file, "input motion file")->required();
  inb_cmd->add_option("--out", ib.out_file, "refined output")->required();
  inb_cmd->add_option("--gt", ib.gt_file, "clean reference; adds metrics to the summary");
  inb_cmd->add_option("--freeze", ib.freeze, "conditional frames, e.g. 0-5,15")->required();
  inb_cmd->add_flag("--no-init-interp", ib.no_init_interp,
                    "keep the input gap instead of seeding it by linear interpolation");
  ib.opt.attach(inb_cmd);

  // --- generate ----------------------------------------------------------------
  auto* gen_cmd = app.add_subcommand("generate", "optimize a chaotic pose stack into motion");
  struct {
    std::string model, out_file, init_out;
    int frames = 16;
    std::uint64_t seed = 0;
    OptimizerFlags opt;
  } ge;
  gen_cmd->add_option("--model", ge.model, "model checkpoint")->required();
  gen_cmd->add_option("--out", ge.out_file, "generated output")->required();
  gen_cmd->add_option("--init-out", ge.init_out, "also write the chaotic initial sequence");
  gen_cmd->add_option("--frames", ge.frames, "pose count of the initial stack");
  gen_cmd->add_option("--seed", ge.seed, "RNG seed");
  ge.opt.attach(gen_cmd);

  // --- eval -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "metric report for a prediction against GT");
  struct {
    std::string pred, gt, out_file;
  } ev;
  eval_cmd->add_option("--pred", ev.pred, "predicted motion file")->required();
  eval_cmd->add_option("--gt", ev.gt, "ground-truth motion file")->required();
  eval_cmd->add_option("--out", ev.out_file, "JSON report path")->required();

  // --- correlate -------------------------------------------------------------
  auto* corr_cmd = app.add_subcommand("correlate",
                                      "per-joint correlation of field value vs acceleration error");
  struct {
    std::string model, out_file, scatter;
    int segments = 500;
    std::uint64_t seed = 99;
  } cr;
  corr_cmd->add_option("--model", cr.model, "model checkpoint")->required();
  corr_cmd->add_option("--segments", cr.segments, "corrupted segment count");
  corr_cmd->add_option("--seed", cr.seed, "RNG seed");
  corr_cmd->add_option("--out", cr.out_file, "JSON report path")->required();
  corr_cmd->add_option("--scatter", cr.scatter, "scatter CSV (joint, distance, accel_error)");

  // --- ablate ----------------------------------------------------------------
  auto* abl_cmd = app.add_subcommand("ablate", "run an ablation harness");
  struct {
    std::string which = "length";
    std::string model;
    std::string out_file, artifacts;
    std::string lengths = "5,8,16,24,32";
    std::string hidden = "48,48";
    int epochs = 10;
    int zero_cap = 1200;
    int negatives = 600;
    int eval_sequences = 3;
    int eval_frames = 60;
    int threads = threads_default();
    std::uint64_t seed = 33;
  } ab;
  abl_cmd->add_option("--which", ab.which, "length | terms")
      ->check(CLI::IsMember({"length", "terms"}));
  abl_cmd->add_option("--model", ab.model, "model checkpoint (terms ablation)");
  abl_cmd->add_option("--out", ab.out_file, "output CSV table")->required();
  abl_cmd->add_option("--artifacts", ab.artifacts, "directory for per-run artifacts");
  abl_cmd->add_option("--lengths", ab.lengths, "segment lengths, e.g. 5,8,16,24,32");
  abl_cmd->add_option("--hidden", ab.hidden, "hidden widths for the per-length models");
  abl_cmd->add_option("--epochs", ab.epochs, "training epochs per length");
  abl_cmd->add_option("--zero-cap", ab.zero_cap, "zero-level points per joint");
  abl_cmd->add_option("--negatives", ab.negatives, "negatives per joint");
  abl_cmd->add_option("--eval-sequences", ab.eval_sequences, "evaluation sequences per row");
  abl_cmd->add_option("--eval-frames", ab.eval_frames, "frames per evaluation sequence");
  abl_cmd->add_option("--threads", ab.threads, "parallel per-joint training workers");
  abl_cmd->add_option("--seed", ab.seed, "RNG seed");

  // --- reproduce ---------------------------------------------------------------
  auto* rep_cmd = app.add_subcommand("reproduce", "replay a manifest and compare artifacts");
  struct {
    std::string manifest, scratch;
  } rp;
  rep_cmd->add_option("--manifest", rp.manifest, "run manifest")->required();
  rep_cmd->add_option("--scratch", rp.scratch, "replay directory (default <manifest>.replay)");

  // ---------------------------------------------------------------------------

  std::vector<const char*> argv;
  argv.push_back("moprior");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    out << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  // Record argv without the manifest plumbing so that replays do not
  // re-append to the manifest.
  std::vector<std::string> recorded;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--manifest" || args[i] == "--summary") {
      ++i;
      continue;
    }
    if (args[i].rfind("--manifest=", 0) == 0 || args[i].rfind("--summary=", 0) == 0) continue;
    recorded.push_back(args[i]);
  }

  try {
    if (*synth) {
      RunRecorder rec("synth", recorded);
      MotionSequence seq =
          synthesize_motion(synth_kind_from_string(sy.kind), sy.frames, sy.fps, sy.seed);
      std::string path = out_path(sy.out_file);
      ensure_parent_dir(path);
      write_native(seq, path);
      rec.add(path);
      rec.option("kind", sy.kind);
      rec.option("seed", sy.seed);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*ingest) {
      RunRecorder rec("ingest", recorded);
      MotionSequence seq = read_bvh(ig.bvh);
      if (ig.target_fps > 0) seq = resample(seq, ig.target_fps, ig.interpolate);
      std::string path = out_path(ig.out_file);
      ensure_parent_dir(path);
      write_native(seq, path);
      rec.add(path);
      rec.option("bvh", ig.bvh);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*corrupt_cmd) {
      RunRecorder rec("corrupt", recorded);
      MotionSequence seq = read_native(co.in_file);
      CorruptionSpec spec;
      spec.kind = corruption_kind_from_string(co.kind);
      spec.magnitude = co.magnitude;
      spec.frame_fraction = co.frame_fraction;
      spec.seed = co.seed;
      if (!co.joints.empty()) spec.joint_indices = parse_int_list(co.joints);
      Skeleton skel = default_skeleton();
      const Skeleton* sk = co.fk_refresh ? &skel : nullptr;
      CorruptionResult res = corrupt(seq, spec, sk);
      std::string path = out_path(co.out_file);
      ensure_parent_dir(path);
      write_native(res.sequence, path);
      rec.add(path);
      if (!co.mask_file.empty()) {
        std::string mpath = out_path(co.mask_file);
        ensure_parent_dir(mpath);
        write_mask(res.mask, mpath);
        rec.add(mpath);
      }
      rec.option("kind", co.kind);
      rec.option("magnitude", co.magnitude);
      rec.option("seed", co.seed);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*bzl) {
      RunRecorder rec("build-zero-level", recorded);
      std::vector<MotionSequence> seqs;
      for (const std::string& p : zb.inputs) seqs.push_back(read_native(p));
      std::vector<int> joints;
      if (zb.joint == "all") {
        int k = seqs.front().joint_count();
        for (int j = 0; j < k; ++j)
          if (!excluded_joints().count(j)) joints.push_back(j);
      } else {
        joints.push_back(std::stoi(zb.joint));
      }
      std::vector<ZeroLevelSet> sets;
      for (int j : joints)
        sets.push_back(build_zero_level(seqs, zb.segment_length, j, zb.stride, zb.cap,
                                        zb.seed * 1000003ull + static_cast<std::uint64_t>(j)));
      std::string path = out_path(zb.out_file);
      ensure_parent_dir(path);
      write_zero_level(sets, path);
      rec.add(path);
      rec.option("segment_length", zb.segment_length);
      rec.option("cap", zb.cap);
      rec.option("seed", zb.seed);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*label_cmd) {
      RunRecorder rec("label", recorded);
      std::vector<ZeroLevelSet> sets = read_zero_level(lb.zero_level);
      const ZeroLevelSet* zl = nullptr;
      for (const ZeroLevelSet& s : sets)
        if (s.joint_index == lb.joint) zl = &s;
      if (!zl)
        throw VersionError("zero-level container has no joint " + std::to_string(lb.joint));
      MotionSequence seq = read_native(lb.in_file);
      std::vector<AccelVector> queries;
      for (int start = 0; start + zl->segment_length <= seq.frame_count(); start += lb.stride)
        queries.push_back(acceleration(extract_segment(seq, start, zl->segment_length), lb.joint));
      std::vector<LabeledSample> labeled = label_dataset(queries, *zl, lb.k);
      std::string path = out_path(lb.out_file);
      ensure_parent_dir(path);
      CsvWriter csv(path);
      std::vector<std::string> head{"joint", "d", "target"};
      for (int i = 0; i < zl->dim; ++i) head.push_back("a" + std::to_string(i));
      csv.header(head);
      for (const LabeledSample& s : labeled) {
        csv.field(s.accel.joint_index).field(s.d).field(s.target);
        for (double v : s.accel.values) csv.field(v);
        csv.end_row();
      }
      rec.add(path);
      rec.option("k", lb.k);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*train_cmd) {
      RunRecorder rec("train", recorded);
      std::vector<MotionSequence> suite;
      for (const std::string& p : tr.data) suite.push_back(read_native(p));
      ModelBuildConfig cfg;
      cfg.segment_length = tr.segment_length;
      cfg.zero_cap = tr.zero_cap;
      cfg.negatives_per_joint = tr.negatives;
      cfg.train.epochs = tr.epochs;
      cfg.train.batch_size = tr.batch;
      cfg.train.adam.lr = tr.lr;
      cfg.train.lambda_udf = tr.lambda_udf;
      cfg.train.lambda_eikonal = tr.lambda_eikonal;
      cfg.train.hidden_dims = parse_int_list(tr.hidden);
      cfg.two_stage = tr.two_stage;
      cfg.threads = tr.threads;
      cfg.seed = tr.seed;
      ModelBuildResult res = train_manifold_model(suite, cfg);
      std::string path = out_path(tr.out_file);
      ensure_parent_dir(path);
      save_model(res.model, path);
      rec.add(path);
      if (!tr.curves_file.empty()) {
        std::string cpath = out_path(tr.curves_file);
        ensure_parent_dir(cpath);
        CsvWriter csv(cpath);
        csv.header({"joint", "epoch", "train_loss", "val_udf_loss"});
        int idx = 0;
        for (const auto& [j, net] : res.model.joints) {
          for (const EpochStats& es : res.curves[idx])
            csv.field(j).field(es.epoch).field(es.train_loss).field(es.val_udf_loss).end_row();
          ++idx;
        }
        rec.add(cpath);
      }
      rec.option("seed", tr.seed);
      rec.option("epochs", tr.epochs);
      rec.option("segment_length", tr.segment_length);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    auto run_optimization = [&](const std::string& name, const std::string& model_path,
                                const std::string& in_file, const std::string& out_file,
                                const std::string& gt_file, const std::string& log_file,
                                const OptimizerFlags& opt, TermMode default_mode,
                                const Observation* obs_override, const OcclusionMask* mask,
                                const std::vector<std::uint8_t>* freeze,
                                bool interp_init) -> int {
      RunRecorder rec(name, recorded);
      ManifoldModel model = load_model(model_path);
      MotionSequence input = read_native(in_file);
      EnergyConfig cfg = opt.resolve(default_mode);
      cfg.window_length = model.segment_length;
      if (freeze) cfg.freeze_frames = *freeze;

      MotionSequence init = input;
      if (interp_init && freeze) {
        // Seed the gaps by per-joint linear interpolation between the
        // nearest conditional frames.
        const int frames = init.frame_count(), joints = init.joint_count();
        for (int t = 0; t < frames; ++t) {
          if ((*freeze)[t]) continue;
          int lo = -1, hi = -1;
          for (int a = t - 1; a >= 0; --a)
            if ((*freeze)[a]) {
              lo = a;
              break;
            }
          for (int b = t + 1; b < frames; ++b)
            if ((*freeze)[b]) {
              hi = b;
              break;
            }
          if (lo < 0 && hi < 0) continue;
          for (int j = 0; j < joints; ++j) {
            float* dst = init.position(t, j);
            if (lo >= 0 && hi >= 0) {
              double a = static_cast<double>(t - lo) / (hi - lo);
              const float* p0 = input.position(lo, j);
              const float* p1 = input.position(hi, j);
              for (int c = 0; c < 3; ++c)
                dst[c] = static_cast<float>((1.0 - a) * p0[c] + a * p1[c]);
            } else {
              const float* p = input.position(lo >= 0 ? lo : hi, j);
              for (int c = 0; c < 3; ++c) dst[c] = p[c];
            }
          }
        }
      }

      Observation obs;
      const Observation* obs_ptr = nullptr;
      if (obs_override) {
        obs_ptr = obs_override;
      } else if (cfg.lambda_obs > 0 && name != "inbetween" && name != "generate") {
        obs = mask ? Observation::from_sequence(input, *mask) : Observation::from_sequence(input);
        obs_ptr = &obs;
      }

      Skeleton skel = default_skeleton();
      const Skeleton* sk = nullptr;
      if (opt.space == "rotations") {
        if (!init.has_rotations())
          throw ValidationError("rotation-space optimization needs rotations in the input");
        if (init.joint_count() != skel.joint_count())
          throw DimensionError("rotation-space optimization needs the default 24-joint skeleton");
        sk = &skel;
      } else {
        init.rotations.clear();
      }

      OptimizeResult res = optimize_sequence(&model, init, obs_ptr, cfg, sk);
      std::string path = out_path(out_file);
      ensure_parent_dir(path);
      write_native(res.sequence, path);
      rec.add(path);
      if (!log_file.empty()) {
        std::string lpath = out_path(log_file);
        ensure_parent_dir(lpath);
        write_iteration_log(res.log, lpath);
        rec.add(lpath);
      }
      rec.option("mode", to_string(cfg.mode));
      rec.option("iterations", cfg.iterations);
      rec.option("energy_initial", res.log.front().total);
      rec.option("energy_final", res.log.back().total);
      if (!gt_file.empty()) {
        MotionSequence gt = read_native(gt_file);
        rec.option("mje_mm", mean_joint_error(res.sequence, gt));
        rec.option("mpjpe_mm", mpjpe(res.sequence, gt));
        rec.option("accel_err", accel_error(res.sequence, gt));
        rec.option("input_mje_mm", mean_joint_error(input, gt));
        rec.option("input_accel_err", accel_error(input, gt));
      }
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    };

    if (*denoise_cmd)
      return run_optimization("denoise", dn.model, dn.in_file, dn.out_file, dn.gt_file,
                              dn.log_file, dn.opt, TermMode::Fusion, nullptr, nullptr, nullptr,
                              false);

    if (*fit_cmd) {
      OcclusionMask mask = read_mask(fp.mask_file);
      return run_optimization("fit-partial", fp.model, fp.in_file, fp.out_file, fp.gt_file,
                              fp.log_file, fp.opt, TermMode::Fusion, nullptr, &mask, nullptr,
                              false);
    }

    if (*inb_cmd) {
      MotionSequence probe = read_native(ib.in_file);
      std::vector<std::uint8_t> freeze = parse_frame_ranges(ib.freeze, probe.frame_count());
      OptimizerFlags opt = ib.opt;
      if (opt.mode.empty()) opt.mode = "motion-only";
      return run_optimization("inbetween", ib.model, ib.in_file, ib.out_file, ib.gt_file, "",
                              opt, TermMode::MotionOnly, nullptr, nullptr, &freeze,
                              !ib.no_init_interp);
    }

    if (*gen_cmd) {
      RunRecorder rec("generate", recorded);
      ManifoldModel model = load_model(ge.model);
      // A chaotic stack: frames drawn from a smooth sequence in shuffled
      // order, so each pose is plausible but the ordering is not.
      Rng rng(ge.seed);
      MotionSequence pool = synthesize_motion(SynthKind::RandomSpline, std::max(ge.frames * 4, 20),
                                              model.fps, rng.next_u64());
      std::vector<std::size_t> pick(pool.frame_count());
      for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
      rng.shuffle(pick);
      MotionSequence init;
      init.fps = model.fps;
      init.joints = pool.joints;
      init.root_index = pool.root_index;
      const int k = pool.joint_count();
      init.positions.resize(static_cast<std::size_t>(ge.frames) * k * 3);
      for (int f = 0; f < ge.frames; ++f)
        std::copy_n(pool.position(static_cast<int>(pick[f]), 0), static_cast<std::size_t>(k) * 3,
                    init.position(f, 0));
      init.validate();
      if (!ge.init_out.empty()) {
        std::string ipath = out_path(ge.init_out);
        ensure_parent_dir(ipath);
        write_native(init, ipath);
        rec.add(ipath);
      }
      EnergyConfig cfg = ge.opt.resolve(TermMode::MotionOnly);
      cfg.lambda_obs = 0.0;
      cfg.window_length = model.segment_length;
      OptimizeResult res = optimize_sequence(&model, init, nullptr, cfg, nullptr);
      std::string path = out_path(ge.out_file);
      ensure_parent_dir(path);
      write_native(res.sequence, path);
      rec.add(path);
      rec.option("seed", ge.seed);
      rec.option("energy_initial", res.log.front().total);
      rec.option("energy_final", res.log.back().total);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*smooth_cmd) {
      RunRecorder rec("smooth", recorded);
      ManifoldModel model = load_model(sm.model);
      MotionSequence input = read_native(sm.in_file);
      EnergyConfig cfg = sm.opt.resolve(TermMode::MotionOnly);
      cfg.window_length = model.segment_length;
      int threads = sm.threads;
      OptimizeResult res = sliding_window_optimize(
          model, input, cfg, [threads](int n, std::function<void(int)> fn) {
            parallel_for(n, threads, fn);
          });
      MotionSequence smoothed = std::move(res.sequence);
      if (sm.ema < 1.0 && smoothed.has_rotations())
        smoothed = ema_smooth_orientation(smoothed, sm.ema);
      std::string path = out_path(sm.out_file);
      ensure_parent_dir(path);
      write_native(smoothed, path);
      rec.add(path);
      if (!sm.gt_file.empty()) {
        MotionSequence gt = read_native(sm.gt_file);
        rec.option("accel_err", accel_error(smoothed, gt));
        rec.option("input_accel_err", accel_error(input, gt));
        rec.option("mje_mm", mean_joint_error(smoothed, gt));
      }
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*eval_cmd) {
      RunRecorder rec("eval", recorded);
      MotionSequence pred = read_native(ev.pred);
      MotionSequence gt = read_native(ev.gt);
      MetricReport m = evaluate(pred, gt);
      nlohmann::json j;
      j["mpjpe_mm"] = m.mpjpe_mm;
      j["pa_mpjpe_mm"] = m.pa_mpjpe_mm;
      j["accel_err_mm_frame2"] = m.accel_err;
      j["mje_mm"] = mean_joint_error(pred, gt);
      if (m.npss_defined) j["npss"] = m.npss_value;
      j["per_joint_mpjpe_mm"] = m.per_joint_mpjpe_mm;
      // A mesh-based vertex metric would need a body mesh, which this
      // toolkit deliberately does not carry.
      j["pve_mm"] = nullptr;
      std::string path = out_path(ev.out_file);
      ensure_parent_dir(path);
      std::ofstream o(path);
      if (!o) throw IoError("cannot write report: " + path);
      o << j.dump(2) << "\n";
      rec.add(path);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*corr_cmd) {
      RunRecorder rec("correlate", recorded);
      ManifoldModel model = load_model(cr.model);
      SegmentPairs pairs =
          make_corrupted_segment_pairs(cr.segments, model.segment_length, model.fps, cr.seed);
      CorrelationReport report = correlation_analysis(model, pairs.corrupted, pairs.clean);
      nlohmann::json j;
      auto& arr = j["joints"] = nlohmann::json::array();
      for (const auto& e : report.joints) {
        nlohmann::json je;
        je["joint"] = e.joint;
        je["defined"] = e.pearson.defined;
        if (e.pearson.defined) je["pearson"] = e.pearson.r;
        arr.push_back(je);
      }
      j["segments"] = cr.segments;
      std::string path = out_path(cr.out_file);
      ensure_parent_dir(path);
      {
        std::ofstream o(path);
        if (!o) throw IoError("cannot write report: " + path);
        o << j.dump(2) << "\n";
      }
      rec.add(path);
      if (!cr.scatter.empty()) {
        std::string spath = out_path(cr.scatter);
        ensure_parent_dir(spath);
        CsvWriter csv(spath);
        csv.header({"joint", "distance", "accel_error"});
        for (const auto& e : report.joints)
          for (std::size_t i = 0; i < e.distances.size(); ++i)
            csv.field(e.joint).field(e.distances[i]).field(e.accel_errors[i]).end_row();
        rec.add(spath);
      }
      rec.option("seed", cr.seed);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*abl_cmd) {
      RunRecorder rec("ablate", recorded);
      AblationSuiteConfig acfg;
      acfg.eval_sequences = ab.eval_sequences;
      acfg.eval_frames = ab.eval_frames;
      acfg.seed = ab.seed;
      acfg.energy.iterations = 150;
      acfg.energy.adam.lr = 2e-2;
      acfg.energy.lambda_prior = 1.0;
      std::string artifact_dir;
      if (!ab.artifacts.empty()) {
        artifact_dir = out_path(ab.artifacts);
        std::filesystem::create_directories(artifact_dir);
      }
      std::vector<AblationRow> rows;
      if (ab.which == "length") {
        ModelBuildConfig build;
        build.zero_cap = ab.zero_cap;
        build.negatives_per_joint = ab.negatives;
        build.train.epochs = ab.epochs;
        build.train.adam.lr = 1e-3;
        build.train.hidden_dims = parse_int_list(ab.hidden);
        build.threads = ab.threads;
        build.seed = ab.seed;
        acfg.train_suite.seed = ab.seed;
        rows = ablation_segment_length(parse_int_list(ab.lengths), build, acfg, artifact_dir);
      } else {
        if (ab.model.empty()) throw ConfigError("terms ablation needs --model");
        ManifoldModel model = load_model(ab.model);
        acfg.train_suite.fps = model.fps;
        rows = ablation_terms(model, acfg, artifact_dir);
      }
      std::string path = out_path(ab.out_file);
      ensure_parent_dir(path);
      CsvWriter csv(path);
      csv.header({"label", "mpjpe_mm", "pa_mpjpe_mm", "accel_err", "mje_mm", "is_default"});
      for (const AblationRow& r : rows) {
        csv.field(r.label)
            .field(r.mpjpe_mm)
            .field(r.pa_mpjpe_mm)
            .field(r.accel_err)
            .field(r.mje_mm)
            .field(r.is_default ? 1 : 0)
            .end_row();
      }
      rec.add(path);
      rec.option("which", ab.which);
      rec.option("seed", ab.seed);
      rec.finish(summary_path, manifest_path, out);
      return kOk;
    }

    if (*rep_cmd) return run_reproduce(rp.manifest, rp.scratch, out);

    out << "no subcommand selected\n";
    return kUsage;
  } catch (const ConfigError& e) {
    out << "config error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const ValidationError& e) {
    out << "validation error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const IoError& e) {
    out << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    out << "parse error: " << e.what() << "\n";
    return kBadFile;
  } catch (const DimensionError& e) {
    out << "shape error: " << e.what() << "\n";
    return kBadShape;
  } catch (const VersionError& e) {
    out << "version error: " << e.what() << "\n";
    return kBadVersion;
  } catch (const NumericError& e) {
    out << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace moprior::cli
