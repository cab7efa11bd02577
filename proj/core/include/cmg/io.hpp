#pragma once

#include <string>
#include <vector>

#include "cmg/denoiser.hpp"
#include "cmg/motion.hpp"

namespace cmg {

/// Motion container: magic "CMG1", u32 little-endian header length, JSON header, then n tensors of
/// f x cols little-endian f32 values (cols = D for relative, 3J for global).
struct MotionFile {
  static constexpr int kVersion = 1;
  std::string repr = "relative";  // "relative" | "global"
  double fps = 20.0;
  int J = 0;
  std::vector<std::string> joint_names;
  std::vector<Matrix> tensors;

  int n() const { return static_cast<int>(tensors.size()); }
  int frames() const { return tensors.empty() ? 0 : static_cast<int>(tensors[0].rows()); }
  int cols() const;
  /// Throws ValidationError when tensors, J, repr and joint names disagree.
  void validate() const;
};

std::string encode_motion(const MotionFile& m);
MotionFile decode_motion(const std::string& bytes);
void write_motion(const MotionFile& m, const std::string& path);
MotionFile read_motion(const std::string& path);

/// Comment header lines followed by "agent,frame,<columns>" rows; values written with 9 significant digits.
std::string motion_to_csv(const MotionFile& m);
MotionFile motion_from_csv(const std::string& text);

/// Weight checkpoint: magic "CMGW", u32 little-endian header length, JSON header (format version,
/// config, seed, tensor names and shapes), little-endian f32 payload in layout order.
std::string encode_weights(const DenoiserWeights& w);
DenoiserWeights decode_weights(const std::string& bytes);
void save_weights(const DenoiserWeights& w, const std::string& path);
DenoiserWeights load_weights(const std::string& path);

std::string read_file(const std::string& path);
/// Writes atomically enough for our purposes: truncates and throws RuntimeError on failure.
void write_file(const std::string& path, const std::string& bytes);

/// Value rounded to 9 significant digits, so JSON output carries at most that many.
double round_sig9(double v);

}  // namespace cmg
