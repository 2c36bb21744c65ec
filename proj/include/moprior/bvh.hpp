#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "moprior/errors.hpp"
#include "moprior/motion.hpp"
#include "moprior/skeleton.hpp"

namespace moprior {

// Minimal BVH ingestion: HIERARCHY with ROOT/JOINT/End Site, then MOTION.
// Supported channel layouts per joint:
//   - optional "Xposition Yposition Zposition" prefix (root translation)
//   - rotation triple in ZXY or ZYX order
// Anything else is rejected loudly. Output joints are in hierarchy order,
// positions computed by forward kinematics over the offsets and channels,
// fps = round(1 / FrameTime).
namespace bvh_detail {

struct Channel {
  int joint;
  char kind;  // 'X','Y','Z' position or rotation
  bool rotation;
};

struct Tokenizer {
  std::ifstream in;
  long line_no = 0;
  std::vector<std::string> tokens;
  std::size_t pos = 0;

  explicit Tokenizer(const std::string& path) : in(path) {
    if (!in) throw IoError("cannot open BVH file: " + path);
  }

  bool refill() {
    tokens.clear();
    pos = 0;
    std::string line;
    while (tokens.empty()) {
      if (!std::getline(in, line)) return false;
      ++line_no;
      std::istringstream ss(line);
      std::string t;
      while (ss >> t) tokens.push_back(t);
    }
    return true;
  }

  std::string next() {
    while (pos >= tokens.size()) {
      if (!refill()) throw ParseError("unexpected end of BVH file", line_no);
    }
    return tokens[pos++];
  }

  bool next_if_available(std::string& out) {
    while (pos >= tokens.size()) {
      if (!refill()) return false;
    }
    out = tokens[pos++];
    return true;
  }

  void expect(const std::string& tok) {
    std::string t = next();
    if (t != tok) throw ParseError("expected '" + tok + "', got '" + t + "'", line_no);
  }

  double number() {
    std::string t = next();
    try {
      std::size_t used = 0;
      double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ParseError("expected a number, got '" + t + "'", line_no);
    }
  }
};

inline Mat3 euler_rotation(char axis, double degrees) {
  double rad = degrees * M_PI / 180.0;
  Vec3 v = Vec3::Zero();
  v(axis == 'X' ? 0 : axis == 'Y' ? 1 : 2) = rad;
  return rotation_from_axis_angle(v);
}

}  // namespace bvh_detail

inline MotionSequence read_bvh(const std::string& path) {
  using namespace bvh_detail;
  Tokenizer tk(path);

  Skeleton skel;
  std::vector<Channel> channels;
  std::vector<int> stack;  // joint indices of open blocks; -2 marks an End Site

  tk.expect("HIERARCHY");
  std::string tok = tk.next();
  if (tok != "ROOT") throw ParseError("expected ROOT, got '" + tok + "'", tk.line_no);

  auto read_joint_header = [&](const std::string& name, int parent) {
    int idx = skel.joint_count();
    skel.names.push_back(name);
    skel.parents.push_back(parent);
    skel.offsets.emplace_back(Vec3::Zero());
    tk.expect("{");
    tk.expect("OFFSET");
    double x = tk.number(), y = tk.number(), z = tk.number();
    skel.offsets[idx] = Vec3(x, y, z);
    tk.expect("CHANNELS");
    int n = static_cast<int>(tk.number());
    std::vector<std::string> ch(n);
    for (int i = 0; i < n; ++i) ch[i] = tk.next();
    // Validate the layout: optional XYZ position prefix, then a rotation
    // triple in ZXY or ZYX order.
    int r0 = 0;
    if (n == 6) {
      if (ch[0] != "Xposition" || ch[1] != "Yposition" || ch[2] != "Zposition")
        throw ParseError("unsupported position channel layout on joint '" + name + "'", tk.line_no);
      r0 = 3;
    } else if (n != 3) {
      throw ParseError("unsupported channel count " + std::to_string(n) + " on joint '" + name + "'",
                       tk.line_no);
    }
    std::string order;
    for (int i = r0; i < n; ++i) {
      if (ch[i].size() != 9 || ch[i].substr(1) != "rotation")
        throw ParseError("unsupported channel '" + ch[i] + "' on joint '" + name + "'", tk.line_no);
      order.push_back(ch[i][0]);
    }
    if (order != "ZXY" && order != "ZYX")
      throw ParseError("unsupported rotation order '" + order + "' on joint '" + name +
                           "' (only ZXY and ZYX are accepted)",
                       tk.line_no);
    for (int i = 0; i < n; ++i)
      channels.push_back({idx, ch[i][0], i >= r0});
    stack.push_back(idx);
  };

  read_joint_header(tk.next(), -1);
  while (!stack.empty()) {
    tok = tk.next();
    if (tok == "JOINT") {
      read_joint_header(tk.next(), stack.back() >= 0 ? stack.back() : -1);
    } else if (tok == "End") {
      // End sites become channel-less terminal joints so that even a
      // single-ROOT file yields a usable two-joint sequence.
      tk.expect("Site");
      tk.expect("{");
      tk.expect("OFFSET");
      double x = tk.number(), y = tk.number(), z = tk.number();
      int parent = stack.back();
      skel.names.push_back(skel.names[parent] + "_end");
      skel.parents.push_back(parent);
      skel.offsets.emplace_back(x, y, z);
      tk.expect("}");
    } else if (tok == "}") {
      stack.pop_back();
    } else {
      throw ParseError("unexpected token '" + tok + "' in hierarchy", tk.line_no);
    }
  }

  tk.expect("MOTION");
  tk.expect("Frames:");
  int frames = static_cast<int>(tk.number());
  if (frames < 1) throw ParseError("BVH declares no frames", tk.line_no);
  // "Frame Time:" tokenizes as two words.
  tk.expect("Frame");
  tk.expect("Time:");
  double frame_time = tk.number();
  if (!(frame_time > 0)) throw ParseError("non-positive frame time", tk.line_no);
  int fps = static_cast<int>(std::lround(1.0 / frame_time));
  if (fps < 1) fps = 1;

  const int k = skel.joint_count();
  MotionSequence seq;
  seq.fps = fps;
  seq.joints = skel.names;
  seq.root_index = 0;
  seq.positions.resize(static_cast<std::size_t>(frames) * k * 3);
  seq.rotations.resize(seq.positions.size());

  std::vector<double> row(channels.size());
  std::vector<Mat3> local(k), world(k);
  std::vector<Vec3> pos(k);
  for (int f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels.size(); ++c) row[c] = tk.number();

    std::vector<Vec3> root_translation(k, Vec3::Zero());
    for (int j = 0; j < k; ++j) local[j] = Mat3::Identity();
    // Channels apply in the order listed: rotations compose left-to-right.
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const Channel& ch = channels[c];
      if (ch.rotation) {
        local[ch.joint] = local[ch.joint] * euler_rotation(ch.kind, row[c]);
      } else {
        root_translation[ch.joint](ch.kind == 'X' ? 0 : ch.kind == 'Y' ? 1 : 2) = row[c];
      }
    }
    for (int j = 0; j < k; ++j) {
      int p = skel.parents[j];
      if (p < 0) {
        world[j] = local[j];
        pos[j] = skel.offsets[j] + root_translation[j];
      } else {
        world[j] = world[p] * local[j];
        pos[j] = pos[p] + world[p] * skel.offsets[j] + root_translation[j];
      }
      float* dst = seq.position(f, j);
      dst[0] = static_cast<float>(pos[j].x());
      dst[1] = static_cast<float>(pos[j].y());
      dst[2] = static_cast<float>(pos[j].z());
      Vec3 aa = axis_angle_from_rotation(local[j]);
      float* rd = seq.rotation(f, j);
      rd[0] = static_cast<float>(aa.x());
      rd[1] = static_cast<float>(aa.y());
      rd[2] = static_cast<float>(aa.z());
    }
  }
  std::string extra;
  if (tk.next_if_available(extra))
    throw ParseError("trailing data after declared frames: '" + extra + "'", tk.line_no);
  seq.validate();
  return seq;
}

}  // namespace moprior
